#include "dce/trainer.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <numeric>
#include <random>
#include <set>

namespace dce {

namespace {

std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

/// Endless reshuffled pass over one head's examples.
class BatchCursor {
 public:
  BatchCursor(std::size_t n, std::uint64_t seed) : order_(n), rng_(seed) {
    std::iota(order_.begin(), order_.end(), std::size_t{0});
    std::shuffle(order_.begin(), order_.end(), rng_);
  }

  std::vector<std::size_t> next(std::size_t batch) {
    std::vector<std::size_t> out;
    batch = std::min(batch, order_.size());
    while (out.size() < batch) {
      if (pos_ == order_.size()) {
        std::shuffle(order_.begin(), order_.end(), rng_);
        pos_ = 0;
      }
      out.push_back(order_[pos_++]);
    }
    return out;
  }

 private:
  std::vector<std::size_t> order_;
  std::size_t pos_ = 0;
  std::mt19937_64 rng_;
};

struct PreparedHead {
  const LossHead* head;
  std::vector<EntityId> queries;
  std::vector<EntityId> targets;
};

void check_weights(std::span<const LossHead> heads) {
  for (const auto& h : heads) {
    if (!(h.weight >= 0.0) || !std::isfinite(h.weight))
      throw ConfigError("head '" + h.name + "' has invalid weight " + std::to_string(h.weight));
    for (const auto& ex : h.examples)
      if (ex.predicate != h.plan.target)
        throw ConfigError("head '" + h.name + "' holds an example for '" + ex.predicate + "' but its plan is for '" +
                          h.plan.target + "'");
  }
}

/// Drops examples whose plan output has no structural support.
PreparedHead prepare(const LossHead& head, const KnowledgeBase& kb, std::size_t& skipped) {
  PreparedHead p{&head, {}, {}};
  if (head.examples.empty()) return p;
  std::vector<EntityId> queries;
  for (const auto& ex : head.examples) queries.push_back(ex.query);
  Tape tape(head.plan, kb);
  tape.forward(queries);
  const Message& out = tape.output();
  std::size_t dropped = 0;
  for (std::size_t i = 0; i < queries.size(); ++i) {
    if (row_support(out, static_cast<Eigen::Index>(i)) > 0) {
      p.queries.push_back(queries[i]);
      p.targets.push_back(head.examples[i].target);
    } else {
      ++dropped;
    }
  }
  if (dropped > 0) spdlog::warn("head '{}': {} example(s) with empty support excluded", head.name, dropped);
  skipped += dropped;
  return p;
}

}  // namespace

void TrainConfig::check() const {
  if (epochs < 1) throw ConfigError("epochs must be positive");
  if (batch_size < 1) throw ConfigError("batch size must be positive");
  if (!(learning_rate > 0.0)) throw ConfigError("learning rate must be positive");
  if (patience < 1) throw ConfigError("patience must be positive");
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0) || !(epsilon > 0.0))
    throw ConfigError("adam moments need 0 <= beta < 1 and epsilon > 0");
}

double combine_losses(std::span<const double> losses, std::span<const double> weights) {
  if (losses.size() != weights.size()) throw ConfigError("one weight per head loss");
  double total = 0.0;
  for (std::size_t i = 0; i < losses.size(); ++i) {
    if (!(weights[i] >= 0.0)) throw ConfigError("negative head weight " + std::to_string(weights[i]));
    total += weights[i] * losses[i];
  }
  return total;
}

double total_loss(const KnowledgeBase& kb, std::span<const LossHead> heads) {
  check_weights(heads);
  std::vector<double> losses, weights;
  for (const auto& h : heads) {
    std::vector<EntityId> q, t;
    for (const auto& ex : h.examples) {
      q.push_back(ex.query);
      t.push_back(ex.target);
    }
    losses.push_back(forward_backward(h.plan, kb, q, t, false).loss);
    weights.push_back(h.weight);
  }
  return combine_losses(losses, weights);
}

TrainResult train(KnowledgeBase& kb, std::span<const LossHead> heads, const TrainConfig& config,
                  const std::optional<Validation>& validation) {
  config.check();
  check_weights(heads);
  if (!kb.frozen()) throw FrozenError("training needs a frozen knowledge base");
  if (validation && validation->examples.size() == 0) throw ConfigError("validation set is empty");

  TrainResult result;
  std::vector<PreparedHead> prepared;
  std::vector<BatchCursor> cursors;
  for (std::size_t i = 0; i < heads.size(); ++i) {
    result.heads.push_back(heads[i].name);
    prepared.push_back(prepare(heads[i], kb, result.skipped_examples));
    std::seed_seq seq{static_cast<std::uint32_t>(config.seed), static_cast<std::uint32_t>(config.seed >> 32),
                      static_cast<std::uint32_t>(fnv1a(heads[i].name)), static_cast<std::uint32_t>(i)};
    std::uint64_t s;
    seq.generate(reinterpret_cast<std::uint32_t*>(&s), reinterpret_cast<std::uint32_t*>(&s) + 2);
    cursors.emplace_back(prepared.back().queries.size(), s);
  }

  std::size_t epoch_size = 0;
  for (const auto& p : prepared)
    if (!p.queries.empty()) {
      epoch_size = p.queries.size();
      break;
    }
  const auto batch = static_cast<std::size_t>(config.batch_size);
  const std::size_t steps = epoch_size == 0 ? 0 : (epoch_size + batch - 1) / batch;

  Gradients m = zero_gradients(kb), v = zero_gradients(kb);
  long t = 0;
  double best = -1.0;
  int since_best = 0;
  result.parameters = kb.parameters();

  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    std::vector<double> sums(heads.size(), 0.0);
    std::vector<int> counts(heads.size(), 0);
    for (std::size_t step = 0; step < steps; ++step) {
      Gradients grads = zero_gradients(kb);
      for (std::size_t h = 0; h < prepared.size(); ++h) {
        const auto& p = prepared[h];
        if (p.queries.empty()) continue;
        std::vector<EntityId> q, tg;
        for (std::size_t idx : cursors[h].next(batch)) {
          q.push_back(p.queries[idx]);
          tg.push_back(p.targets[idx]);
        }
        const double w = p.head->weight;
        const LossResult r = forward_backward(p.head->plan, kb, q, tg, w != 0.0);
        sums[h] += r.loss;
        ++counts[h];
        if (w == 0.0) continue;
        for (auto& [name, g] : grads) g += w * r.gradients.at(name);
      }
      ++t;
      for (auto& [name, g] : grads) {
        auto values = kb.values(name);
        if (config.optimizer == Optimizer::Sgd) {
          values -= config.learning_rate * g;
          continue;
        }
        auto& mm = m.at(name);
        auto& vv = v.at(name);
        mm = config.beta1 * mm + (1.0 - config.beta1) * g;
        vv = config.beta2 * vv + (1.0 - config.beta2) * g.cwiseAbs2();
        const double c1 = 1.0 - std::pow(config.beta1, static_cast<double>(t));
        const double c2 = 1.0 - std::pow(config.beta2, static_cast<double>(t));
        values.array() -= config.learning_rate * (mm.array() / c1) / ((vv.array() / c2).sqrt() + config.epsilon);
      }
      for (const auto& [name, g] : grads)
        if (!kb.values(name).allFinite())
          throw DivergenceError("parameters of '" + name + "' are not finite at epoch " + std::to_string(epoch));
    }

    EpochRecord rec{epoch, {}, 0.0, std::numeric_limits<double>::quiet_NaN()};
    std::vector<double> weights;
    for (std::size_t h = 0; h < heads.size(); ++h) {
      rec.head_loss.push_back(counts[h] ? sums[h] / counts[h] : 0.0);
      weights.push_back(heads[h].weight);
    }
    rec.total = combine_losses(rec.head_loss, weights);
    if (!std::isfinite(rec.total)) throw DivergenceError("total loss is not finite at epoch " + std::to_string(epoch));
    if (validation) rec.val_accuracy = evaluate_accuracy(validation->plan, kb, validation->examples);
    result.history.push_back(rec);

    if (!validation) continue;
    if (rec.val_accuracy > best) {
      best = rec.val_accuracy;
      since_best = 0;
      result.best_epoch = epoch;
      result.best_val_accuracy = best;
      result.parameters = kb.parameters();
    } else if (++since_best >= config.patience) {
      result.stopped_early = true;
      break;
    }
  }

  if (validation) {
    kb.set_parameters(result.parameters);
  } else {
    result.parameters = kb.parameters();
    result.best_epoch = static_cast<int>(result.history.size());
  }
  return result;
}

std::vector<std::optional<EntityId>> predict_labels(const Plan& plan, const KnowledgeBase& kb,
                                                    std::span<const EntityId> queries) {
  std::vector<std::optional<EntityId>> out(queries.size());
  if (queries.empty()) return out;
  Tape tape(plan, kb);
  tape.forward(queries);
  const Message& val = tape.output();
  const Message& pre = tape.value(plan.pre_output);
  for (Eigen::Index r = 0; r < val.rows(); ++r) {
    std::optional<EntityId> arg;
    double best = 0.0;
    for (Message::InnerIterator it(pre, r); it; ++it) {
      const double v = val.coeff(r, it.col());
      if (!arg || v > best) {
        arg = static_cast<EntityId>(it.col());
        best = v;
      }
    }
    out[static_cast<std::size_t>(r)] = arg;
  }
  return out;
}

double evaluate_accuracy(const Plan& plan, const KnowledgeBase& kb, const LabeledSet& test) {
  if (test.queries.empty()) throw ConfigError("accuracy needs a nonempty test set");
  if (test.queries.size() != test.gold.size()) throw ConfigError("one gold label per query");
  const auto pred = predict_labels(plan, kb, test.queries);
  std::size_t correct = 0, empty = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    if (!pred[i]) ++empty;
    else if (*pred[i] == test.gold[i]) ++correct;
  }
  if (empty > 0) spdlog::warn("{} of {} queries have empty support; counted as wrong", empty, pred.size());
  return static_cast<double>(correct) / static_cast<double>(pred.size());
}

RetrievalScore retrieval_scores(std::vector<MentionLabel> retrieved, std::vector<MentionLabel> gold) {
  const std::set<MentionLabel> r(retrieved.begin(), retrieved.end());
  const std::set<MentionLabel> g(gold.begin(), gold.end());
  RetrievalScore s;
  s.retrieved = r.size();
  for (const auto& x : r) s.correct += g.count(x);
  s.empty_retrieved = r.empty();
  s.precision = r.empty() ? 0.0 : static_cast<double>(s.correct) / static_cast<double>(r.size());
  s.recall = g.empty() ? 0.0 : static_cast<double>(s.correct) / static_cast<double>(g.size());
  s.f1 = s.precision + s.recall > 0.0 ? 2.0 * s.precision * s.recall / (s.precision + s.recall) : 0.0;
  return s;
}

RetrievalScore evaluate_retrieval_f1(const Plan& plan, const KnowledgeBase& kb, std::span<const EntityId> mentions,
                                     const std::vector<MentionLabel>& gold, EntityId other_label) {
  if (other_label < 0 || other_label >= kb.entity_count()) throw UnknownSymbolError("other label is not interned");
  const auto pred = predict_labels(plan, kb, mentions);
  std::vector<MentionLabel> retrieved;
  for (std::size_t i = 0; i < pred.size(); ++i)
    if (pred[i] && *pred[i] != other_label) retrieved.emplace_back(mentions[i], *pred[i]);
  const RetrievalScore s = retrieval_scores(std::move(retrieved), gold);
  if (s.empty_retrieved) spdlog::warn("nothing retrieved; precision reported as 0");
  return s;
}

void write_history_csv(const TrainResult& result, std::ostream& out) {
  out << "epoch,head,loss,val_accuracy\n" << std::setprecision(17);
  for (const auto& rec : result.history) {
    auto row = [&](const std::string& head, double loss) {
      out << rec.epoch << ',' << head << ',' << loss << ',';
      if (std::isnan(rec.val_accuracy)) out << "";
      else out << rec.val_accuracy;
      out << '\n';
    };
    for (std::size_t h = 0; h < result.heads.size(); ++h) row(result.heads[h], rec.head_loss[h]);
    row("total", rec.total);
  }
}

void write_history_csv(const TrainResult& result, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IngestError("cannot write " + path);
  write_history_csv(result, out);
}

}  // namespace dce
