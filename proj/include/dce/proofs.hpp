#pragma once

#include <map>
#include <string_view>
#include <vector>

#include "dce/kb.hpp"
#include "dce/rules.hpp"

namespace dce {

struct ProofTrace {
  EntityId answer;
  double weight;             // product of the weights of `facts`
  std::vector<FactRef> facts;
};

inline constexpr std::size_t kProofBudget = 1'000'000;

/// Exhaustive top-down proof search for target(query, Y), unrolling recursion
/// exactly as compile() does (`default_depth` for predicates without #maxdepth).
/// A #softmax on the target is ignored; softmax predicates inside bodies and
/// the entropy builtin have no proof semantics and raise ConfigError.
std::vector<ProofTrace> enumerate_proofs(const ValidatedProgram& vp, const KnowledgeBase& kb,
                                         std::string_view target, EntityId query, int default_depth = 3);

/// Per-answer sums of proof weights.
std::map<EntityId, double> proof_scores(const std::vector<ProofTrace>& proofs);

}  // namespace dce
