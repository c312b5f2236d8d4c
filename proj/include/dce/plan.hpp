#pragma once

#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "dce/kb.hpp"
#include "dce/rules.hpp"

namespace dce {

/// Node vocabulary of a compiled query.
///
/// Messages are row blocks (one row per query, one column per entity).
/// Expand turns a message into one indicator row per entity in its structural
/// support, so a softmax predicate can be evaluated per entity and mixed back
/// by the message weights in SoftmaxMasked.
enum class NodeKind {
  SeedInput,
  Expand,
  MatVec,
  DisjunctionSum,
  L1Normalize,
  SoftmaxMasked,
  TsallisEntropyPair,
};

std::string_view to_string(NodeKind kind);
NodeKind node_kind_from_string(std::string_view name);

struct PlanNode {
  NodeKind kind;
  /// Relation for MatVec, predicate for SoftmaxMasked / DisjunctionSum, else "-".
  std::string label;
  /// SoftmaxMasked: {scores} at a seed boundary, {scores, expand} otherwise.
  std::vector<int> inputs;

  bool operator==(const PlanNode&) const = default;
};

struct Plan {
  std::string target;
  std::vector<PlanNode> nodes;  // topologically ordered; node 0 is the seed
  int output = 0;
  /// Output before the target's own softmax boundary (== output when none).
  int pre_output = 0;
  /// Unroll depth chosen for each recursive predicate reached by the plan.
  std::map<std::string, int> depths;
};

struct CompileOptions {
  int default_depth = 3;
};

Plan compile(const ValidatedProgram& vp, std::string_view target, const KnowledgeBase& kb,
             const CompileOptions& options = {});

/// One line per node: `<id> <kind> <label> <inputs>`, inputs comma-separated or "-".
std::string dump_plan(const Plan& plan);
/// Inverse of dump_plan for the node list (target/output recovered from the header).
Plan parse_plan_dump(std::string_view text);

}  // namespace dce
