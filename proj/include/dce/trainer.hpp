#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "dce/engine.hpp"
#include "dce/kb.hpp"
#include "dce/plan.hpp"

namespace dce {

struct TrainingExample {
  std::string predicate;
  EntityId query;
  EntityId target;

  bool operator==(const TrainingExample&) const = default;
};

/// One weighted mean cross-entropy term of the training objective.
struct LossHead {
  std::string name;
  Plan plan;
  std::vector<TrainingExample> examples;
  double weight = 1.0;
};

enum class Optimizer { Sgd, Adam };

struct TrainConfig {
  int epochs = 300;
  int batch_size = 32;
  double learning_rate = 0.01;
  Optimizer optimizer = Optimizer::Adam;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::uint64_t seed = 0;
  int patience = 20;  // epochs without a validation gain before stopping

  void check() const;  // ConfigError on non-positive settings
};

/// Queries with gold answers, scored by argmax of a plan.
struct LabeledSet {
  std::vector<EntityId> queries;
  std::vector<EntityId> gold;

  std::size_t size() const { return queries.size(); }
};

struct Validation {
  Plan plan;
  LabeledSet examples;
};

struct EpochRecord {
  int epoch;
  std::vector<double> head_loss;  // running mean of minibatch losses, per head
  double total;
  double val_accuracy;  // NaN without validation
};

struct TrainResult {
  ParameterSnapshot parameters;  // best validation accuracy, else the last epoch
  std::vector<std::string> heads;
  std::vector<EpochRecord> history;
  int best_epoch = 0;
  double best_val_accuracy = 0.0;
  std::size_t skipped_examples = 0;
  bool stopped_early = false;
};

/// Σ wᵢ·lᵢ. The predict head is just the head with weight 1.
double combine_losses(std::span<const double> losses, std::span<const double> weights);

/// Weighted sum of full-set head losses at the current parameters.
double total_loss(const KnowledgeBase& kb, std::span<const LossHead> heads);

/// Minibatch training of every trainable relation in `kb`.
///
/// Each step draws one batch per nonempty head, each head cycling through its
/// own seeded shuffle; an epoch is as many steps as the first nonempty head
/// needs to cover its examples once. Heads with weight zero are never
/// evaluated during steps, so they cannot perturb the parameter trajectory.
/// On return `kb` holds the returned snapshot.
TrainResult train(KnowledgeBase& kb, std::span<const LossHead> heads, const TrainConfig& config,
                  const std::optional<Validation>& validation = std::nullopt);

/// Argmax answer per query, lowest entity id on ties; nullopt for empty support.
std::vector<std::optional<EntityId>> predict_labels(const Plan& plan, const KnowledgeBase& kb,
                                                    std::span<const EntityId> queries);

/// Fraction of queries whose argmax equals gold. Empty support counts as wrong.
double evaluate_accuracy(const Plan& plan, const KnowledgeBase& kb, const LabeledSet& test);

struct RetrievalScore {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  std::size_t retrieved = 0;
  std::size_t correct = 0;
  bool empty_retrieved = false;
};

using MentionLabel = std::pair<EntityId, EntityId>;

RetrievalScore retrieval_scores(std::vector<MentionLabel> retrieved, std::vector<MentionLabel> gold);

/// Predictions equal to `other_label` (or with empty support) are not retrieved.
RetrievalScore evaluate_retrieval_f1(const Plan& plan, const KnowledgeBase& kb, std::span<const EntityId> mentions,
                                     const std::vector<MentionLabel>& gold, EntityId other_label);

/// `epoch,head,loss,val_accuracy`, one row per head plus a `total` row.
void write_history_csv(const TrainResult& result, std::ostream& out);
void write_history_csv(const TrainResult& result, const std::string& path);

}  // namespace dce
