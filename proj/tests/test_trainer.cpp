#include <cmath>
#include <limits>
#include <random>
#include <sstream>

#include "doctest.h"
#include "dce/trainer.hpp"
#include "fixtures.hpp"

using namespace dce;
using namespace dce::testing;

namespace {

struct Toy {
  KnowledgeBase kb;
  std::vector<EntityId> docs, gold, labels;
};

/// Two classes with disjoint vocabularies; odd docs are class b.
Toy separable(int docs, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  Toy t;
  for (const char* l : {"a", "b"}) t.labels.push_back(t.kb.intern(l));
  std::vector<EntityId> feats;
  for (int i = 0; i < 8; ++i) feats.push_back(t.kb.intern("f" + std::to_string(i)));
  for (int d = 0; d < docs; ++d) {
    const EntityId doc = t.kb.intern("d" + std::to_string(d));
    const int cls = d % 2;
    t.docs.push_back(doc);
    t.gold.push_back(t.labels[cls]);
    const int a = static_cast<int>(rng() % 4), b = static_cast<int>(rng() % 4);
    t.kb.add_fact("hasFeature", doc, feats[cls * 4 + a], 0.5);
    t.kb.add_fact("hasFeature", doc, feats[cls * 4 + b], 0.5);
  }
  for (std::size_t i = 0; i < t.docs.size(); ++i) {
    t.kb.add_fact("near", t.docs[i], t.docs[i], 1.0);
    t.kb.add_fact("near", t.docs[i], t.docs[(i + 2) % t.docs.size()], 1.0);
  }
  t.kb.declare_trainable("indicates", feats, t.labels, InitSpec{});
  t.kb.freeze();
  return t;
}

Plan plan_for(const KnowledgeBase& kb, const std::string& rules, const std::string& target) {
  return compile(validate_program(parse_program("#softmax predict\n" + kClassifierRules + rules), kb), target, kb);
}

LossHead predict_head(const Toy& t, std::size_t n) {
  LossHead h{"predict", plan_for(t.kb, "", "predict"), {}, 1.0};
  for (std::size_t i = 0; i < n; ++i) h.examples.push_back({"predict", t.docs[i], t.gold[i]});
  return h;
}

LossHead entropy_head(const Toy& t, const std::string& name, const std::string& rules, const std::string& target,
                      double weight) {
  LossHead h{name, plan_for(t.kb, rules, target), {}, weight};
  for (EntityId d : t.docs) h.examples.push_back({target, d, kLow});
  return h;
}

}  // namespace

TEST_CASE("loss combination arithmetic") {
  const std::vector<double> losses{0.7, 0.5, 0.25}, weights{1.0, 1.0, 2.0};
  CHECK(combine_losses(losses, weights) == doctest::Approx(1.7).epsilon(1e-15));
  const std::vector<double> bad{1.0, -0.5, 1.0};
  CHECK_THROWS_AS(combine_losses(losses, bad), ConfigError);
}

TEST_CASE("total loss is affine in each head weight") {
  Toy t = separable(12, 3);
  std::mt19937_64 rng(5);
  for (auto& w : t.kb.values("indicates")) w = std::uniform_real_distribution<double>(-1, 1)(rng);
  std::vector<LossHead> heads{predict_head(t, 4), entropy_head(t, "ER", kErRule, "predictionHasEntropy", 0.0),
                              entropy_head(t, "NBER", kNberRule, "neighborPredictionsHaveEntropy", 0.0)};
  const double base = total_loss(t.kb, heads);
  CHECK(base == total_loss(t.kb, std::span(heads).first(1)));
  for (std::size_t h = 1; h < heads.size(); ++h) {
    std::vector<EntityId> q, tg;
    for (const auto& ex : heads[h].examples) {
      q.push_back(ex.query);
      tg.push_back(ex.target);
    }
    const double mean = forward_backward(heads[h].plan, t.kb, q, tg, false).loss;
    for (double w : {0.5, 1.0, 3.0}) {
      heads[h].weight = w;
      CHECK(total_loss(t.kb, heads) - base == doctest::Approx(w * mean).epsilon(1e-12));
    }
    heads[h].weight = 0.0;
  }
  heads[1].weight = -1.0;
  CHECK_THROWS_AS(total_loss(t.kb, heads), ConfigError);
}

TEST_CASE("separable set is fit perfectly") {
  Toy t = separable(20, 1);
  const std::vector<LossHead> heads{predict_head(t, 20)};
  TrainConfig config;
  config.epochs = 200;
  config.batch_size = 8;
  config.learning_rate = 0.1;
  const auto r = train(t.kb, heads, config);
  CHECK(evaluate_accuracy(heads[0].plan, t.kb, {t.docs, t.gold}) == 1.0);
  CHECK(r.history.size() == 200);
}

TEST_CASE("training is deterministic under seed") {
  TrainConfig config;
  config.epochs = 15;
  config.batch_size = 4;
  config.seed = 42;
  auto run = [&] {
    Toy t = separable(16, 2);
    const std::vector<LossHead> heads{predict_head(t, 6),
                                      entropy_head(t, "ER", kErRule, "predictionHasEntropy", 0.7)};
    return train(t.kb, heads, config, Validation{heads[0].plan, {t.docs, t.gold}});
  };
  const auto a = run(), b = run();
  REQUIRE(a.history.size() == b.history.size());
  for (std::size_t i = 0; i < a.history.size(); ++i) {
    CHECK(a.history[i].head_loss == b.history[i].head_loss);
    CHECK(a.history[i].val_accuracy == b.history[i].val_accuracy);
  }
  CHECK(a.parameters.at("indicates") == b.parameters.at("indicates"));
}

TEST_CASE("zero-weight heads leave the trajectory bit-identical") {
  TrainConfig config;
  config.epochs = 25;
  config.batch_size = 3;
  config.seed = 9;
  Toy plain = separable(14, 4);
  const auto a = train(plain.kb, std::vector<LossHead>{predict_head(plain, 6)}, config);
  Toy extra = separable(14, 4);
  const std::vector<LossHead> heads{predict_head(extra, 6),
                                    entropy_head(extra, "ER", kErRule, "predictionHasEntropy", 0.0),
                                    entropy_head(extra, "NBER", kNberRule, "neighborPredictionsHaveEntropy", 0.0)};
  const auto b = train(extra.kb, heads, config);
  CHECK(a.parameters.at("indicates") == b.parameters.at("indicates"));
  for (std::size_t i = 0; i < a.history.size(); ++i) CHECK(a.history[i].head_loss[0] == b.history[i].head_loss[0]);
}

TEST_CASE("full-batch gradient descent never raises the supervised loss") {
  Toy t = separable(10, 6);
  const std::vector<LossHead> heads{predict_head(t, 10)};
  TrainConfig config;
  config.optimizer = Optimizer::Sgd;
  config.learning_rate = 0.01;
  config.batch_size = 10;
  config.epochs = 100;
  const auto r = train(t.kb, heads, config);
  for (std::size_t i = 1; i < r.history.size(); ++i)
    CHECK(r.history[i].head_loss[0] <= r.history[i - 1].head_loss[0]);
  CHECK(r.history.back().head_loss[0] < r.history.front().head_loss[0]);
}

TEST_CASE("exploding steps raise DivergenceError") {
  Toy t = separable(10, 7);
  TrainConfig config;
  config.optimizer = Optimizer::Sgd;
  config.epochs = 5;
  t.kb.values("indicates")(0) = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(train(t.kb, std::vector<LossHead>{predict_head(t, 10)}, config), DivergenceError);
  t.kb.values("indicates")(0) = 0.0;
  config.learning_rate = 1e308;
  t.kb.values("indicates")(1) = 1e308;
  CHECK_THROWS_AS(train(t.kb, std::vector<LossHead>{predict_head(t, 10)}, config), DivergenceError);
}

TEST_CASE("bad configuration") {
  Toy t = separable(4, 1);
  TrainConfig config;
  config.batch_size = 0;
  CHECK_THROWS_AS(train(t.kb, std::vector<LossHead>{predict_head(t, 4)}, config), ConfigError);
  LossHead wrong = predict_head(t, 4);
  wrong.examples[0].predicate = "other";
  CHECK_THROWS_AS(train(t.kb, std::vector<LossHead>{wrong}, TrainConfig{}), ConfigError);
}

TEST_CASE("early stopping keeps the best validation snapshot") {
  Toy t = separable(16, 8);
  const std::vector<LossHead> heads{predict_head(t, 16)};
  TrainConfig config;
  config.epochs = 300;
  config.patience = 5;
  const auto r = train(t.kb, heads, config, Validation{heads[0].plan, {t.docs, t.gold}});
  CHECK(r.stopped_early);
  CHECK(r.best_val_accuracy == 1.0);
  CHECK(r.history.size() == static_cast<std::size_t>(r.best_epoch + 5));
  CHECK(t.kb.parameters().at("indicates") == r.parameters.at("indicates"));
}

TEST_CASE("toy knowledge base, two labeled documents") {
  KnowledgeBase kb = toy_kb(false);
  const EntityId x2 = kb.intern("x2");
  kb.add_fact("hasFeature", "x2", "lstm", 1.0);
  kb.define_domain("labels", {kb.entity("accept"), kb.entity("reject")});
  const Program program =
      parse_program("#softmax predict\n#trainable indicates hasFeature.tail labels\n" + kClassifierRules);
  apply_directives(program, kb);
  kb.freeze();
  LossHead head{"predict", compile(validate_program(program, kb), "predict", kb), {}, 1.0};
  head.examples = {{"predict", kb.entity("x1"), kb.entity("accept")}, {"predict", x2, kb.entity("reject")}};
  TrainConfig config;
  config.epochs = 100;
  train(kb, std::vector<LossHead>{head}, config);
  CHECK(evaluate_accuracy(head.plan, kb, {{kb.entity("x1"), x2}, {kb.entity("accept"), kb.entity("reject")}}) == 1.0);
}

TEST_CASE("accuracy against random gold is one over k") {
  Toy t = separable(1000, 11);
  const Plan plan = plan_for(t.kb, "", "predict");
  std::mt19937_64 rng(12);
  LabeledSet test{t.docs, {}};
  for (std::size_t i = 0; i < t.docs.size(); ++i) test.gold.push_back(t.labels[rng() % 2]);
  const double acc = evaluate_accuracy(plan, t.kb, test);
  CHECK(std::abs(acc - 0.5) <= 3.0 * std::sqrt(0.25 / 1000.0));
}

TEST_CASE("argmax ties go to the lowest id, empty support is wrong") {
  KnowledgeBase kb = toy_kb(false);
  const EntityId lone = kb.intern("lone");
  kb.add_fact("indicates", "pars", "reject", 0.2);
  kb.freeze();
  const Plan plan = compile(validate_program(parse_program(kClassifierRules), kb), "predict", kb);
  const std::vector<EntityId> q{kb.entity("x1"), lone};
  const auto pred = predict_labels(plan, kb, q);
  // accept 0.12, reject 0.12 + 0.12
  CHECK(*pred[0] == kb.entity("reject"));
  CHECK_FALSE(pred[1].has_value());
  CHECK(evaluate_accuracy(plan, kb, {q, {kb.entity("reject"), kb.entity("reject")}}) == 0.5);
  CHECK_THROWS_AS(evaluate_accuracy(plan, kb, {}), ConfigError);

  KnowledgeBase tie = toy_kb(false);
  tie.add_fact("indicates", "lstm", "reject", 0.3);
  tie.add_fact("indicates", "pars", "reject", 0.2);
  tie.add_fact("indicates", "lstm", "accept", 0.3);
  tie.freeze();
  const Plan tied = compile(validate_program(parse_program(kClassifierRules), tie), "predict", tie);
  CHECK(*predict_labels(tied, tie, std::vector<EntityId>{tie.entity("x1")})[0] == tie.entity("accept"));
}

TEST_CASE("retrieval scores") {
  const std::vector<MentionLabel> gold{{1, 10}, {2, 10}, {3, 11}, {4, 11}};
  const auto exact = retrieval_scores(gold, gold);
  CHECK(exact.precision == 1.0);
  CHECK(exact.recall == 1.0);
  CHECK(exact.f1 == 1.0);
  const auto half = retrieval_scores({{1, 10}, {3, 11}, {2, 11}, {5, 10}}, gold);
  CHECK(half.precision == 0.5);
  CHECK(half.recall == 0.5);
  CHECK(half.f1 == 0.5);
  const auto none = retrieval_scores({}, gold);
  CHECK(none.empty_retrieved);
  CHECK(none.precision == 0.0);
}

TEST_CASE("history csv") {
  Toy t = separable(6, 1);
  TrainConfig config;
  config.epochs = 2;
  const auto r = train(t.kb, std::vector<LossHead>{predict_head(t, 6)}, config);
  std::ostringstream out;
  write_history_csv(r, out);
  std::istringstream in(out.str());
  std::string line;
  std::getline(in, line);
  CHECK(line == "epoch,head,loss,val_accuracy");
  std::getline(in, line);
  CHECK(line.rfind("1,predict,", 0) == 0);
  int rows = 1;
  while (std::getline(in, line)) ++rows;
  CHECK(rows == 4);
}
