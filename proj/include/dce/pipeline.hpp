#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "dce/bayesopt.hpp"
#include "dce/data.hpp"
#include "dce/kb.hpp"
#include "dce/plan.hpp"
#include "dce/templates.hpp"
#include "dce/trainer.hpp"

namespace dce {

/// Environment variable naming the default output directory.
inline constexpr const char* kOutputDirEnv = "DCE_OUTPUT_DIR";

inline constexpr const char* kDefaultRules =
    "#softmax predict\n"
    "#trainable indicates hasFeature.tail labels init=zeros\n"
    "predict(X,Y) :- hasFeature(X,F), indicates(F,Y).\n";

struct ConstraintSpec {
  ConstraintKind kind = ConstraintKind::ER;
  double weight = 1.0;
  std::string near = "near";  // NBER / LPER / COLPER
  int depth = 3;              // LPER / COLPER / set unroll
  /// NBER_PAIR / COLPER_SET: relation mention -> group; mentions sharing a tail form a group.
  std::string group_relation;
};

enum class DataKind { Facts, Citation, Synthetic };

struct SplitSpec {
  int per_class_train = 20;
  int test = 1000;
  double val_fraction = 0.25;
};

struct DataConfig {
  DataKind kind = DataKind::Facts;
  std::vector<std::string> facts;          // facts TSVs (any kind)
  std::vector<std::string> examples;       // training examples TSVs
  std::vector<std::string> test_examples;  // facts kind only
  std::string content, cites;              // citation kind
  SyntheticConfig synthetic;               // seed comes from RunConfig::seed
  SplitSpec split;
};

struct TuneConfig {
  int budget = 30;
  double lower = 0.0;
  double upper = 10.0;
  TuneMethod method = TuneMethod::Bayesian;
};

/// Everything one run needs. JSON schema (all keys optional):
///
///   seed, output_dir, rules | rules_file, target,
///   data { kind: facts|citation|synthetic, facts[], examples[], test_examples[],
///          content, cites, synthetic { classes, vocab_per_class, ambiguity, docs,
///          homophily, tokens_per_doc, shared_vocab, avg_degree },
///          split { per_class_train, test, val_fraction } },
///   constraints [ { kind, weight, near, depth, group_relation } ],
///   train { epochs, batch_size, learning_rate, optimizer: adam|sgd, beta1, beta2, epsilon, patience },
///   tune { budget, lower, upper, method: bo|random },
///   eval { other_label }
struct RunConfig {
  std::uint64_t seed = 0;
  std::string output_dir;
  std::string rules = kDefaultRules;
  std::string rules_file;  // read at load time; overrides `rules`
  std::string target = "predict";
  DataConfig data;
  std::vector<ConstraintSpec> constraints;
  TrainConfig train;
  TuneConfig tune;
  std::string other_label;  // nonempty: also report retrieval P/R/F1

  /// `--section.key=value` style assignments, value parsed as JSON when it is valid JSON.
  void apply_overrides(std::span<const std::string> assignments);
  std::string to_json() const;
  static RunConfig from_json(const std::string& text, const std::string& base_dir = "");
  /// Missing paths -> IngestError; bad values -> ConfigError.
  void check() const;
  /// output_dir, else $DCE_OUTPUT_DIR, else "runs".
  std::string resolved_output_dir() const;
};

RunConfig load_config(const std::string& path, std::span<const std::string> overrides = {});

/// A frozen knowledge base with compiled plans and loss heads ready to train.
struct Experiment {
  RunConfig config;
  KnowledgeBase kb;
  std::optional<DatasetBundle> bundle;
  Program program;
  Plan predict;
  /// heads[0] is the supervised head; then one per constraint in config order.
  std::vector<LossHead> heads;
  LabeledSet train_set;
  std::optional<LabeledSet> validation;
  std::optional<LabeledSet> test;
  ParameterSnapshot initial;

  Experiment() = default;
  Experiment(const Experiment&) = delete;
  Experiment& operator=(const Experiment&) = delete;

  std::optional<Validation> validation_spec() const;
  /// Constraint weights (heads 1..n).
  std::vector<double> constraint_weights() const;
  void set_constraint_weights(std::span<const double> weights);
  void reset_parameters();
};

/// Builds the knowledge base without compiling (for ingest).
KnowledgeBase build_kb(const RunConfig& config, std::optional<DatasetBundle>* bundle = nullptr);

std::unique_ptr<Experiment> build_experiment(const RunConfig& config);

using Metrics = std::map<std::string, double>;

/// train/val/test accuracy where available, plus retrieval P/R/F1 on the
/// test set when an other label is configured.
Metrics evaluate(const Experiment& ex);

void write_metrics(const Metrics& metrics, std::ostream& table, const std::string& csv_path);

/// Trainable facts only, round-trip precision.
void save_checkpoint(const KnowledgeBase& kb, const std::string& path);
/// Overwrites trainable values of a frozen KB. Facts outside the trainable
/// support -> IngestError; relations not in the file keep their values.
void restore_checkpoint(KnowledgeBase& kb, const std::string& path);

/// Resolved config, seed, command line and library versions.
void write_manifest(const RunConfig& config, const std::string& command, std::span<const std::string> argv,
                    const std::string& path);

/// Negative validation accuracy as a function of the constraint weights.
TuneResult tune_weights(Experiment& ex);

}  // namespace dce
