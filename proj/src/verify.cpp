#include "dce/verify.hpp"

#include <cmath>
#include <memory>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "dce/data.hpp"
#include "dce/engine.hpp"
#include "dce/plan.hpp"
#include "dce/proofs.hpp"
#include "dce/templates.hpp"
#include "dce/trainer.hpp"

namespace dce {

RandomInstance random_chain_instance(std::mt19937_64& rng, const RandomInstanceOptions& options) {
  auto uniform_int = [&](int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); };
  std::uniform_real_distribution<double> weight(0.05, 1.0);

  RandomInstance inst;
  const int entities = uniform_int(3, options.max_entities - 2);
  for (int i = 0; i < entities; ++i) inst.kb.intern("e" + std::to_string(i));
  const int n = inst.kb.entity_count();
  const int relations = uniform_int(1, options.max_relations);
  std::vector<std::string> rels;
  for (int r = 0; r < relations; ++r) {
    rels.push_back("r" + std::to_string(r));
    inst.kb.declare_relation(rels.back());
    const double density = std::uniform_real_distribution<double>(0.03, 0.25)(rng);
    for (int h = 0; h < n; ++h)
      for (int t = 0; t < n; ++t)
        if (std::bernoulli_distribution(density)(rng)) inst.kb.add_fact(rels.back(), h, t, weight(rng));
  }
  inst.kb.freeze();

  const int rule_count = uniform_int(1, options.max_rules);
  const int derived = rule_count >= 2 ? uniform_int(1, 2) : 1;
  std::vector<std::string> preds;
  for (int d = 0; d < derived; ++d) preds.push_back("p" + std::to_string(d));

  auto make_rule = [&](const std::string& head, bool base_only) {
    Rule rule;
    rule.head = {head, "X", "Y"};
    const int len = uniform_int(1, options.max_body);
    std::vector<std::string> vars{"X"};
    for (int i = 1; i < len; ++i) vars.push_back("V" + std::to_string(i));
    vars.push_back("Y");
    for (int i = 0; i < len; ++i) {
      const bool use_derived = !base_only && std::bernoulli_distribution(0.35)(rng);
      const std::string& pred = use_derived ? preds[rng() % preds.size()] : rels[rng() % rels.size()];
      rule.body.push_back({pred, vars[i], vars[i + 1]});
    }
    return rule;
  };
  for (int d = 0; d < derived; ++d) inst.program.rules.push_back(make_rule(preds[d], true));
  while (static_cast<int>(inst.program.rules.size()) < rule_count)
    inst.program.rules.push_back(make_rule(preds[rng() % preds.size()], false));

  inst.depth = uniform_int(1, options.max_depth);
  inst.target = preds[rng() % preds.size()];
  return inst;
}

OracleReport check_oracle_equivalence(int trials, std::uint64_t seed, double tolerance) {
  if (trials < 1) throw ConfigError("oracle check needs at least one trial");
  std::mt19937_64 rng(seed);
  OracleReport report;
  while (report.trials < trials) {
    RandomInstance inst = random_chain_instance(rng);
    const auto vp = validate_program(inst.program, inst.kb);
    const Plan plan = compile(vp, inst.target, inst.kb, {inst.depth});
    std::vector<EntityId> queries(static_cast<std::size_t>(inst.kb.entity_count()));
    for (std::size_t i = 0; i < queries.size(); ++i) queries[i] = static_cast<EntityId>(i);
    const Eigen::MatrixXd scores = evaluate_pre_normalization(plan, inst.kb, queries);
    bool budget_hit = false;
    double deviation = 0.0;
    EntityId worst_query = 0;
    for (EntityId q : queries) {
      std::map<EntityId, double> sums;
      try {
        sums = proof_scores(enumerate_proofs(vp, inst.kb, inst.target, q, inst.depth));
      } catch (const OracleBudgetError&) {
        budget_hit = true;
        break;
      }
      Eigen::RowVectorXd expected = Eigen::RowVectorXd::Zero(inst.kb.entity_count());
      for (const auto& [answer, w] : sums) expected(answer) = w;
      const double d = (scores.row(q) - expected).cwiseAbs().maxCoeff();
      if (d > deviation) {
        deviation = d;
        worst_query = q;
      }
    }
    if (budget_hit) {
      ++report.skipped;
      continue;
    }
    ++report.trials;
    report.max_deviation = std::max(report.max_deviation, deviation);
    if (!(deviation <= tolerance)) {
      ++report.violations;
      std::ostringstream msg;
      msg << "trial " << report.trials << ": deviation " << deviation << " for query "
          << inst.kb.entity_name(worst_query) << ", target " << inst.target << ", depth " << inst.depth << "\n"
          << format_program(inst.program);
      for (const auto& rel : inst.kb.relation_names())
        for (const auto& f : inst.kb.facts(rel))
          msg << rel << '(' << inst.kb.entity_name(f.head) << ',' << inst.kb.entity_name(f.tail) << ")=" << f.weight
              << '\n';
      report.failures.push_back(msg.str());
    }
  }
  return report;
}

namespace {

const char* const kClassifier = "#softmax predict\npredict(X,Y) :- hasFeature(X,F), indicates(F,Y).\n";

/// Small random corpus carrying every relation the templates need.
struct GradientWorld {
  KnowledgeBase kb;
  std::vector<EntityId> docs, labels;
  std::vector<Emission> emissions;
  Program program;
};

GradientWorld gradient_world(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> w(0.1, 1.0);
  GradientWorld g;
  auto& kb = g.kb;
  for (int i = 0; i < 3; ++i) g.labels.push_back(kb.intern("y" + std::to_string(i)));
  for (int i = 0; i < 6; ++i) g.docs.push_back(kb.intern("d" + std::to_string(i)));
  std::vector<EntityId> feats, v1, v2;
  for (int i = 0; i < 5; ++i) feats.push_back(kb.intern("f" + std::to_string(i)));
  for (int i = 0; i < 3; ++i) v1.push_back(kb.intern("u" + std::to_string(i)));
  for (int i = 0; i < 3; ++i) v2.push_back(kb.intern("v" + std::to_string(i)));
  kb.define_domain("labels", g.labels);
  for (EntityId d : g.docs) {
    for (int k = 0; k < 2; ++k) kb.add_fact("hasFeature", d, feats[rng() % feats.size()], w(rng));
    kb.add_fact("hasFeature1", d, v1[rng() % v1.size()], w(rng));
    kb.add_fact("hasFeature2", d, v2[rng() % v2.size()], w(rng));
    kb.add_fact("near", d, g.docs[rng() % g.docs.size()], w(rng));
  }
  close_near(kb, g.docs);
  kb.declare_trainable("indicates", feats, g.labels, InitSpec{InitSpec::Kind::Uniform, 1.0, seed});

  g.emissions.push_back(emit_er("predict", g.docs));
  g.emissions.push_back(emit_cotrain(kb, {"hasFeature1", "hasFeature2", "labels", "uniform:1.0"}, g.docs));
  g.emissions.push_back(emit_network(kb, ConstraintKind::NBER, "near", 1, g.docs));
  g.emissions.push_back(emit_network(kb, ConstraintKind::LPER, "near", 3, g.docs));
  g.emissions.push_back(emit_network(kb, ConstraintKind::COLPER, "near", 2, g.docs));
  const std::vector<std::vector<EntityId>> groups{{g.docs[0], g.docs[1], g.docs[2]}, {g.docs[3], g.docs[4]}};
  g.emissions.push_back(emit_pair_groups(kb, ConstraintKind::NBER_PAIR, groups));
  g.emissions.push_back(emit_pair_groups(kb, ConstraintKind::COLPER_SET, groups));
  g.program = parse_program(kClassifier);
  for (const auto& e : g.emissions)
    if (e.kind != ConstraintKind::CT) g.program.merge(e.program);
  apply_directives(g.emissions[1].program, kb, seed);
  kb.freeze();
  return g;
}

double run_gradient_case(GradientWorld& g, const Program& program, const std::string& target,
                         const std::vector<TrainingExample>& examples, double h) {
  const Plan plan = compile(validate_program(program, g.kb), target, g.kb);
  std::vector<EntityId> q, t;
  for (const auto& ex : examples) {
    q.push_back(ex.query);
    t.push_back(ex.target);
  }
  return grad_check(plan, g.kb, q, t, h);
}

}  // namespace

GradientReport check_gradients(std::uint64_t seed, double h) {
  GradientWorld g = gradient_world(seed);
  GradientReport report;
  auto record = [&](const std::string& name, double err) {
    std::size_t cells = 0;
    for (const auto& rel : g.kb.trainable_relations()) cells += g.kb.relation(rel).matrix.nonZeros();
    report.cases.push_back({name, err, cells});
    report.max_relative_error = std::max(report.max_relative_error, err);
  };

  std::vector<TrainingExample> supervised;
  for (std::size_t i = 0; i < g.docs.size(); ++i) supervised.push_back({"predict", g.docs[i], g.labels[i % 3]});
  record("supervised", run_gradient_case(g, g.program, "predict", supervised, h));
  const char* names[] = {"ER", "CT", "NBER", "LPER", "COLPER", "NBER_PAIR", "COLPER_SET"};
  for (std::size_t i = 0; i < g.emissions.size(); ++i) {
    const Emission& e = g.emissions[i];
    const Program& p = e.kind == ConstraintKind::CT ? e.program : g.program;
    record(names[i], run_gradient_case(g, p, e.head, e.examples, h));
  }
  return report;
}

namespace {

struct SslWorld {
  KnowledgeBase kb;
  DatasetBundle data;
  Plan predict;
  Plan er;
  Plan nber;
};

std::unique_ptr<SslWorld> ssl_world(const SslGainConfig& c, std::uint64_t seed, double homophily) {
  auto w = std::make_unique<SslWorld>();
  SyntheticConfig s;
  s.classes = c.classes;
  s.ambiguity = c.ambiguity;
  s.homophily = homophily;
  s.docs = c.classes * c.labeled_per_class + c.unlabeled + c.test;
  s.seed = seed;
  w->data = make_split(generate_synthetic(s), c.labeled_per_class, c.test, 0.0, seed);
  populate_kb(w->data, w->kb);
  const Program program = parse_program(std::string(kClassifier) +
                                        "#trainable indicates features labels init=zeros\n"
                                        "predictionHasEntropy(X,H) :- predict(X,Y), entropy(Y,H).\n"
                                        "neighborPredictionsHaveEntropy(X1,H) :- near(X1,X2), predict(X2,Y2), "
                                        "entropy(Y2,H).\n");
  apply_directives(program, w->kb, seed);
  w->kb.freeze();
  const auto vp = validate_program(program, w->kb);
  w->predict = compile(vp, "predict", w->kb);
  w->er = compile(vp, "predictionHasEntropy", w->kb);
  w->nber = compile(vp, "neighborPredictionsHaveEntropy", w->kb);
  return w;
}

/// Trains from zero parameters with the given constraint head; returns test accuracy.
double ssl_accuracy(SslWorld& w, const SslGainConfig& c, std::uint64_t seed, const Plan* constraint,
                    double weight) {
  for (const auto& rel : w.kb.trainable_relations()) w.kb.values(rel).setZero();
  std::vector<LossHead> heads{{"predict", w.predict, {}, 1.0}};
  const LabeledSet labeled = labeled_set(w.data, w.kb, w.data.train);
  for (std::size_t i = 0; i < labeled.size(); ++i)
    heads[0].examples.push_back({"predict", labeled.queries[i], labeled.gold[i]});
  if (constraint) {
    LossHead head{constraint->target, *constraint, {}, weight};
    for (EntityId d : doc_ids(w.data, w.kb, w.data.unlabeled)) head.examples.push_back({constraint->target, d, kLow});
    heads.push_back(std::move(head));
  }
  TrainConfig config;
  config.epochs = c.epochs;
  config.learning_rate = c.learning_rate;
  config.seed = seed;
  train(w.kb, heads, config);
  return evaluate_accuracy(w.predict, w.kb, labeled_set(w.data, w.kb, w.data.test));
}

}  // namespace

SslGainReport check_ssl_gain(int seeds, const SslGainConfig& config, std::uint64_t first_seed) {
  if (seeds < 1) throw ConfigError("ssl gain check needs at least one seed");
  SslGainReport report;
  for (int i = 0; i < seeds; ++i) {
    const std::uint64_t seed = first_seed + static_cast<std::uint64_t>(i);
    SslGainRow row{seed, 0, 0, 0, 0, 0};
    auto w = ssl_world(config, seed, config.homophily);
    row.supervised = ssl_accuracy(*w, config, seed, nullptr, 0.0);
    row.with_er = ssl_accuracy(*w, config, seed, &w->er, config.er_weight);
    row.with_nber = ssl_accuracy(*w, config, seed, &w->nber, config.nber_weight);
    auto control = ssl_world(config, seed, 0.5);
    row.control_supervised = ssl_accuracy(*control, config, seed, nullptr, 0.0);
    row.control_nber = ssl_accuracy(*control, config, seed, &control->nber, config.nber_weight);
    report.er_wins += row.with_er > row.supervised;
    report.nber_wins += row.with_nber > row.supervised;
    report.control_nber_wins += row.control_nber > row.control_supervised;
    report.mean_supervised += row.supervised / seeds;
    report.mean_er += row.with_er / seeds;
    report.mean_nber += row.with_nber / seeds;
    report.rows.push_back(row);
  }
  return report;
}

void write_oracle_report_csv(const OracleReport& oracle, const GradientReport& grads, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IngestError("cannot write " + path);
  out << "check,case,value,status\n" << std::setprecision(17);
  out << "oracle,trials," << oracle.trials << ",\n";
  out << "oracle,skipped," << oracle.skipped << ",\n";
  out << "oracle,max_deviation," << oracle.max_deviation << ',' << (oracle.violations == 0 ? "PASS" : "FAIL")
      << '\n';
  for (const auto& c : grads.cases)
    out << "gradient," << c.name << ',' << c.max_relative_error << ',' << (c.max_relative_error < 1e-4 ? "PASS" : "FAIL")
        << '\n';
}

}  // namespace dce
