#pragma once

#include <Eigen/Core>

#include <map>
#include <span>
#include <string>
#include <vector>

#include "dce/kb.hpp"
#include "dce/plan.hpp"

namespace dce {

/// d(loss)/d(value) per trainable relation, aligned with KnowledgeBase::values().
using Gradients = std::map<std::string, Eigen::VectorXd>;

using Mask = Eigen::Array<bool, Eigen::Dynamic, 1>;

Gradients zero_gradients(const KnowledgeBase& kb);

/// One batch of messages: rows are queries (or Expand support entities),
/// columns are entities. Stored entries are exactly the structural pattern --
/// the reachability computed with every weight replaced by 1 -- so explicit
/// zeros are kept and never pruned.
using Message = SparseMatrix;

/// Forward values of every plan node for one batch of queries, kept for the
/// reverse pass.
class Tape {
 public:
  Tape(const Plan& plan, const KnowledgeBase& kb);

  void forward(std::span<const EntityId> queries);

  const Message& value(int node) const { return values_[node]; }
  const Message& output() const { return values_[plan_.output]; }
  const Plan& plan() const { return plan_; }

  /// Reverse pass seeded with d(loss)/d(output), aligned with output().valuePtr().
  /// Adds into `grads`; cells of non-trainable relations are never touched.
  void backward(const Eigen::VectorXd& output_grad, Gradients& grads) const;

 private:
  void forward_node(int id);
  void backward_node(int id, std::vector<Eigen::VectorXd>& g, Gradients& grads) const;

  const Plan& plan_;
  const KnowledgeBase& kb_;
  std::vector<Message> values_;
  std::vector<Message> mixed_;                   // mixing SoftmaxMasked: the per-support softmax
  std::vector<std::vector<EntityId>> supports_;  // Expand nodes only
  std::vector<bool> needs_grad_;
};

/// Stored entries in row `r`.
inline Eigen::Index row_support(const Message& m, Eigen::Index r) {
  return m.outerIndexPtr()[r + 1] - m.outerIndexPtr()[r];
}

/// Output rows for each query. Softmax-terminated plans give distributions over
/// the structural support; rows with empty support are all zero.
Eigen::MatrixXd evaluate(const Plan& plan, const KnowledgeBase& kb, std::span<const EntityId> queries);

/// Scores before the target's own softmax boundary.
Eigen::MatrixXd evaluate_pre_normalization(const Plan& plan, const KnowledgeBase& kb,
                                           std::span<const EntityId> queries);

/// Structural reachability of the pre-softmax scores for one query.
Mask support_mask(const Plan& plan, const KnowledgeBase& kb, EntityId query);

struct LossResult {
  double loss = 0.0;          // mean cross-entropy over used examples
  Gradients gradients;        // of the mean loss
  std::size_t used = 0;
  std::size_t skipped = 0;      // empty structural support
  std::size_t off_support = 0;  // target unreachable, charged -log(eps)
};

/// Mean cross-entropy of `targets` under the plan outputs, with gradients.
LossResult forward_backward(const Plan& plan, const KnowledgeBase& kb, std::span<const EntityId> queries,
                            std::span<const EntityId> targets, bool with_gradients = true);

/// Largest relative error between analytic and central-difference gradients
/// over every trainable cell. Relative error is |a - n| / max(|a|, |n|, 1e-6).
/// Parameter values are restored before returning.
double grad_check(const Plan& plan, KnowledgeBase& kb, std::span<const EntityId> queries,
                  std::span<const EntityId> targets, double h = 1e-5);

}  // namespace dce
