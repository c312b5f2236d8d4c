#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "dce/kb.hpp"
#include "dce/rules.hpp"
#include "dce/trainer.hpp"

namespace dce {

enum class ConstraintKind { ER, CT, CT_TYPED, NBER, LPER, COLPER, NBER_PAIR, COLPER_SET };

std::string_view to_string(ConstraintKind kind);
ConstraintKind constraint_kind_from_string(std::string_view name);  // ConfigError if unknown

/// Rules, directives and entropy-target examples for one SSL heuristic.
/// Auxiliary facts go straight into the (unfrozen) knowledge base.
struct Emission {
  ConstraintKind kind;
  Program program;
  std::string head;  // predicate the examples are stated on
  std::vector<TrainingExample> examples;
  std::size_t facts_added = 0;
};

// Predicate names used by the generated rules.
inline constexpr std::string_view kErHead = "predictionHasEntropy";
inline constexpr std::string_view kNberHead = "neighborPredictionsHaveEntropy";
inline constexpr std::string_view kLperHead = "nearbyPredictionsHaveEntropy";
inline constexpr std::string_view kColperHead = "colinkedPredictionsHaveEntropy";
inline constexpr std::string_view kPairHead = "pairPredictionsHaveEntropy";
inline constexpr std::string_view kSetHead = "setPredictionsHaveEntropy";

/// predictionHasEntropy(X,H) :- predict(X,Y), entropy(Y,H). One "low" example per entity.
Emission emit_er(std::string_view predict, std::span<const EntityId> unlabeled);

struct CoTrainViews {
  std::string feature1 = "hasFeature1";
  std::string feature2 = "hasFeature2";
  std::string labels = "labels";  // tail domain of indicates1/indicates2
  std::string init = "zeros";
};

/// Two classifiers, one per feature view, merged by disjunction under ER.
Emission emit_cotrain(const KnowledgeBase& kb, const CoTrainViews& views, std::span<const EntityId> unlabeled);

using TypeFact = std::pair<std::string, std::string>;  // relation -> type

/// The relation/type classifiers predictR and predictT merged through hasType.
Emission emit_cotrain_typed(KnowledgeBase& kb, std::span<const TypeFact> has_type,
                            std::span<const EntityId> unlabeled);

/// The four relation types of the drug domain.
std::vector<TypeFact> drug_has_type();

/// NBER over direct neighbors, LPER over recursive `sim`, COLPER over the
/// two-step `cosim`. Recursive kinds get `#maxdepth <sim> depth`.
Emission emit_network(const KnowledgeBase& kb, ConstraintKind kind, std::string_view near, int depth,
                      std::span<const EntityId> unlabeled);

struct PairGroupOptions {
  std::string group_key = "document";
  std::size_t cap = 20;  // larger groups are subsampled
  int depth = 3;         // hasExampleSet unroll
  std::uint64_t seed = 0;
};

/// One virtual entity `pair::<key>::<a>::<b>` per mention pair of each group
/// (a, b the mention names in sorted order), tied by an entropy constraint.
Emission emit_pair_groups(KnowledgeBase& kb, ConstraintKind kind, const std::vector<std::vector<EntityId>>& groups,
                          const PairGroupOptions& options = {});

/// near(d,d) = 1 for every document and near(b,a) for every near(a,b).
/// Returns the number of facts added.
std::size_t close_near(KnowledgeBase& kb, std::span<const EntityId> docs, std::string_view near = "near");

}  // namespace dce
