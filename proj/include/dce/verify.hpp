#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "dce/kb.hpp"
#include "dce/rules.hpp"

namespace dce {

/// A random chain program over a random nonnegative knowledge base.
struct RandomInstance {
  KnowledgeBase kb;
  Program program;
  std::string target;
  int depth = 1;
};

struct RandomInstanceOptions {
  int max_entities = 20;  // including the reserved high/low
  int max_relations = 3;
  int max_rules = 4;
  int max_depth = 3;
  int max_body = 3;
};

/// Every derived predicate gets a first rule built from relations only, so
/// recursive predicates always have a base case.
RandomInstance random_chain_instance(std::mt19937_64& rng, const RandomInstanceOptions& options = {});

struct OracleReport {
  int trials = 0;
  int violations = 0;
  int skipped = 0;  // instances whose proof count exceeded the oracle budget
  double max_deviation = 0.0;
  std::vector<std::string> failures;
};

/// Compiled pre-normalization scores versus brute-force proof sums.
OracleReport check_oracle_equivalence(int trials, std::uint64_t seed, double tolerance = 1e-9);

struct GradientCase {
  std::string name;
  double max_relative_error = 0.0;
  std::size_t cells = 0;
};

struct GradientReport {
  std::vector<GradientCase> cases;
  double max_relative_error = 0.0;
};

/// Central finite differences against the reverse pass on the supervised, ER,
/// CT, NBER, LPER (depth 3), COLPER, pair and set plans.
GradientReport check_gradients(std::uint64_t seed, double h = 1e-5);

struct SslGainConfig {
  int classes = 2;
  int labeled_per_class = 5;
  int unlabeled = 500;
  int test = 500;
  double ambiguity = 0.6;
  double homophily = 0.9;
  double er_weight = 1.0;
  double nber_weight = 1.0;
  int epochs = 60;
  double learning_rate = 0.05;
};

struct SslGainRow {
  std::uint64_t seed;
  double supervised;
  double with_er;
  double with_nber;
  double control_supervised;  // homophily 0.5
  double control_nber;
};

struct SslGainReport {
  std::vector<SslGainRow> rows;
  int er_wins = 0;
  int nber_wins = 0;
  int control_nber_wins = 0;
  double mean_supervised = 0.0;
  double mean_er = 0.0;
  double mean_nber = 0.0;
};

/// Paired supervised / +ER / +NBER runs on synthetic data, one per seed.
SslGainReport check_ssl_gain(int seeds, const SslGainConfig& config = {}, std::uint64_t first_seed = 1);

void write_oracle_report_csv(const OracleReport& oracle, const GradientReport& grads, const std::string& path);

}  // namespace dce
