#include "dce/engine.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "dce/numeric.hpp"

namespace dce {

namespace {

/// Appends rows of a compressed row-major message.
class Builder {
 public:
  Builder(Eigen::Index rows, Eigen::Index cols) : rows_(rows), cols_(cols) {
    outer_.reserve(static_cast<std::size_t>(rows) + 1);
    outer_.push_back(0);
  }
  void push(int col, double v) {
    inner_.push_back(col);
    values_.push_back(v);
  }
  void end_row() { outer_.push_back(static_cast<int>(inner_.size())); }

  Message finish() {
    Message m(rows_, cols_);
    m.resizeNonZeros(static_cast<Eigen::Index>(inner_.size()));
    std::copy(outer_.begin(), outer_.end(), m.outerIndexPtr());
    std::copy(inner_.begin(), inner_.end(), m.innerIndexPtr());
    std::copy(values_.begin(), values_.end(), m.valuePtr());
    return m;
  }

 private:
  Eigen::Index rows_, cols_;
  std::vector<int> outer_, inner_;
  std::vector<double> values_;
};

/// Dense accumulator with a touched list (Gustavson).
struct Accumulator {
  explicit Accumulator(Eigen::Index n) : sum(static_cast<std::size_t>(n), 0.0), seen(static_cast<std::size_t>(n), 0) {}

  void add(int col, double v) {
    if (!seen[col]) {
      seen[col] = 1;
      touched.push_back(col);
    }
    sum[col] += v;
  }
  /// Writes the touched columns in order and clears them.
  void flush(Builder& out) {
    std::sort(touched.begin(), touched.end());
    for (int c : touched) {
      out.push(c, sum[c]);
      sum[c] = 0.0;
      seen[c] = 0;
    }
    touched.clear();
    out.end_row();
  }

  std::vector<double> sum;
  std::vector<char> seen;
  std::vector<int> touched;
};

int rows_of(const Message& m) { return static_cast<int>(m.rows()); }

/// x * m over stored entries, every stored product kept (zeros included) so
/// the result's structure is the structural product. Column c of x reads row
/// remap[c] of m (identity when remap is empty).
Message product(const Message& x, const Message& m, const std::vector<int>& remap) {
  const int* xo = x.outerIndexPtr();
  const int* xi = x.innerIndexPtr();
  const double* xv = x.valuePtr();
  const int* mo = m.outerIndexPtr();
  const int* mi = m.innerIndexPtr();
  const double* mv = m.valuePtr();
  Builder out(x.rows(), m.cols());
  Accumulator acc(m.cols());
  for (int r = 0; r < rows_of(x); ++r) {
    for (int p = xo[r]; p < xo[r + 1]; ++p) {
      const int k = remap.empty() ? xi[p] : remap[xi[p]];
      for (int q = mo[k]; q < mo[k + 1]; ++q) acc.add(mi[q], xv[p] * mv[q]);
    }
    acc.flush(out);
  }
  return out.finish();
}

/// Reverse of product(): dx (aligned with x) and dm (aligned with m), either
/// may be null.
void product_backward(const Message& x, const Message& m, const std::vector<int>& remap, const Message& out,
                      const Eigen::VectorXd& dout, Eigen::VectorXd* dx, Eigen::VectorXd* dm) {
  const int* xo = x.outerIndexPtr();
  const int* xi = x.innerIndexPtr();
  const double* xv = x.valuePtr();
  const int* mo = m.outerIndexPtr();
  const int* mi = m.innerIndexPtr();
  const double* mv = m.valuePtr();
  const int* oo = out.outerIndexPtr();
  const int* oi = out.innerIndexPtr();
  std::vector<double> w(static_cast<std::size_t>(m.cols()), 0.0);
  for (int r = 0; r < rows_of(x); ++r) {
    if (oo[r] == oo[r + 1]) continue;
    for (int p = oo[r]; p < oo[r + 1]; ++p) w[oi[p]] = dout(p);
    for (int p = xo[r]; p < xo[r + 1]; ++p) {
      const int k = remap.empty() ? xi[p] : remap[xi[p]];
      double dot = 0.0;
      for (int q = mo[k]; q < mo[k + 1]; ++q) {
        dot += mv[q] * w[mi[q]];
        if (dm) (*dm)(q) += xv[p] * w[mi[q]];
      }
      if (dx) (*dx)(p) += dot;
    }
    for (int p = oo[r]; p < oo[r + 1]; ++p) w[oi[p]] = 0.0;
  }
}

/// Row-wise softmax over the stored entries; same structure as the input.
Message row_softmax(const Message& s) {
  Message p = s;
  const int* o = p.outerIndexPtr();
  double* v = p.valuePtr();
  for (int r = 0; r < rows_of(p); ++r) {
    if (o[r] == o[r + 1]) continue;
    double peak = -std::numeric_limits<double>::infinity();
    for (int k = o[r]; k < o[r + 1]; ++k) peak = std::max(peak, v[k]);
    double total = 0.0;
    for (int k = o[r]; k < o[r + 1]; ++k) total += (v[k] = std::exp(v[k] - peak));
    for (int k = o[r]; k < o[r + 1]; ++k) v[k] /= total;
  }
  return p;
}

/// d(loss)/d(scores) for p = row_softmax(scores), added into ds.
void softmax_backward(const Message& p, const Eigen::VectorXd& dp, Eigen::VectorXd& ds) {
  const int* o = p.outerIndexPtr();
  const double* v = p.valuePtr();
  for (int r = 0; r < rows_of(p); ++r) {
    double inner = 0.0;
    for (int k = o[r]; k < o[r + 1]; ++k) inner += v[k] * dp(k);
    for (int k = o[r]; k < o[r + 1]; ++k) ds(k) += v[k] * (dp(k) - inner);
  }
}

/// entity -> row of the Expand output, -1 off the support.
std::vector<int> support_index(const std::vector<EntityId>& support, Eigen::Index n) {
  std::vector<int> index(static_cast<std::size_t>(n), -1);
  for (std::size_t k = 0; k < support.size(); ++k) index[support[k]] = static_cast<int>(k);
  return index;
}

const std::vector<int> kIdentity;

}  // namespace

Gradients zero_gradients(const KnowledgeBase& kb) {
  Gradients g;
  for (const auto& name : kb.trainable_relations())
    g[name] = Eigen::VectorXd::Zero(kb.relation(name).matrix.nonZeros());
  return g;
}

Tape::Tape(const Plan& plan, const KnowledgeBase& kb) : plan_(plan), kb_(kb) {
  if (!kb.frozen()) throw FrozenError("plans run only against a frozen knowledge base");
  const std::size_t n = plan.nodes.size();
  values_.resize(n);
  mixed_.resize(n);
  supports_.resize(n);
  needs_grad_.assign(n, false);
  for (std::size_t i = 0; i < n; ++i) {
    const auto& node = plan.nodes[i];
    for (int in : node.inputs) {
      if (in < 0 || static_cast<std::size_t>(in) >= i) throw ConfigError("plan is not topologically ordered");
      if (node.kind != NodeKind::Expand && needs_grad_[in]) needs_grad_[i] = true;
    }
    if (node.kind == NodeKind::MatVec) {
      if (!kb.has_relation(node.label))
        throw UnknownPredicateError("plan references missing relation '" + node.label + "'");
      if (kb.relation(node.label).trainable) needs_grad_[i] = true;
    }
    if (node.kind == NodeKind::SoftmaxMasked && node.inputs.size() == 2) {
      const int expand = node.inputs[1];
      if (plan.nodes[expand].kind != NodeKind::Expand) throw ConfigError("softmax mixing input must be an Expand node");
      if (needs_grad_[plan.nodes[expand].inputs[0]]) needs_grad_[i] = true;
    }
  }
}

void Tape::forward(std::span<const EntityId> queries) {
  const int n = kb_.entity_count();
  Builder seed(static_cast<Eigen::Index>(queries.size()), n);
  for (EntityId q : queries) {
    if (q < 0 || q >= n) throw IndexError("query entity id " + std::to_string(q) + " out of range");
    seed.push(q, 1.0);
    seed.end_row();
  }
  values_[0] = seed.finish();
  for (std::size_t i = 1; i < plan_.nodes.size(); ++i) forward_node(static_cast<int>(i));
}

void Tape::forward_node(int id) {
  const PlanNode& node = plan_.nodes[id];
  Message& value = values_[id];
  switch (node.kind) {
    case NodeKind::SeedInput:
      throw ConfigError("plan has more than one seed");
    case NodeKind::Expand: {
      // one one-hot row per entity any query row reaches
      const Message& in = values_[node.inputs[0]];
      std::vector<char> seen(static_cast<std::size_t>(in.cols()), 0);
      for (Eigen::Index k = 0; k < in.nonZeros(); ++k) seen[in.innerIndexPtr()[k]] = 1;
      std::vector<EntityId> support;
      for (std::size_t c = 0; c < seen.size(); ++c)
        if (seen[c]) support.push_back(static_cast<EntityId>(c));
      Builder out(static_cast<Eigen::Index>(support.size()), in.cols());
      for (EntityId e : support) {
        out.push(e, 1.0);
        out.end_row();
      }
      value = out.finish();
      supports_[id] = std::move(support);
      break;
    }
    case NodeKind::MatVec:
      value = product(values_[node.inputs[0]], kb_.relation(node.label).matrix, kIdentity);
      break;
    case NodeKind::DisjunctionSum: {
      const Message& first = values_[node.inputs[0]];
      Builder out(first.rows(), first.cols());
      Accumulator acc(first.cols());
      for (int r = 0; r < rows_of(first); ++r) {
        for (int in : node.inputs) {
          const Message& x = values_[in];
          for (int k = x.outerIndexPtr()[r]; k < x.outerIndexPtr()[r + 1]; ++k)
            acc.add(x.innerIndexPtr()[k], x.valuePtr()[k]);
        }
        acc.flush(out);
      }
      value = out.finish();
      break;
    }
    case NodeKind::L1Normalize: {
      value = values_[node.inputs[0]];
      const int* o = value.outerIndexPtr();
      double* v = value.valuePtr();
      for (int r = 0; r < rows_of(value); ++r) {
        double denom = kEpsilon;
        for (int k = o[r]; k < o[r + 1]; ++k) denom += std::abs(v[k]);
        for (int k = o[r]; k < o[r + 1]; ++k) v[k] /= denom;
      }
      break;
    }
    case NodeKind::SoftmaxMasked: {
      const int scores = node.inputs[0];
      if (node.inputs.size() == 1) {
        value = row_softmax(values_[scores]);
        break;
      }
      // per-support distributions, mixed by the weights each query puts on them
      const int expand = node.inputs[1];
      const int mix = plan_.nodes[expand].inputs[0];
      mixed_[id] = row_softmax(values_[scores]);
      value = product(values_[mix], mixed_[id], support_index(supports_[expand], values_[mix].cols()));
      break;
    }
    case NodeKind::TsallisEntropyPair: {
      static_assert(kHigh < kLow, "entropy columns are written in order");
      const Message& p = values_[node.inputs[0]];
      Builder out(p.rows(), p.cols());
      for (int r = 0; r < rows_of(p); ++r) {
        const int b = p.outerIndexPtr()[r], e = p.outerIndexPtr()[r + 1];
        if (b < e) {
          double sq = 0.0;
          for (int k = b; k < e; ++k) sq += p.valuePtr()[k] * p.valuePtr()[k];
          out.push(kHigh, 1.0 - sq);
          out.push(kLow, sq);
        }
        out.end_row();
      }
      value = out.finish();
      break;
    }
  }
}

void Tape::backward(const Eigen::VectorXd& output_grad, Gradients& grads) const {
  if (output_grad.size() != output().nonZeros()) throw ConfigError("output gradient does not match the output");
  std::vector<Eigen::VectorXd> g(plan_.nodes.size());
  g[plan_.output] = output_grad;
  for (int id = static_cast<int>(plan_.nodes.size()) - 1; id > 0; --id) {
    if (!needs_grad_[id] || g[id].size() == 0) continue;
    backward_node(id, g, grads);
  }
}

void Tape::backward_node(int id, std::vector<Eigen::VectorXd>& g, Gradients& grads) const {
  const PlanNode& node = plan_.nodes[id];
  const Eigen::VectorXd& dout = g[id];
  // gradient slot of an input, or null when nothing upstream is trainable
  auto slot = [&](int in) -> Eigen::VectorXd* {
    if (!needs_grad_[in]) return nullptr;
    if (g[in].size() == 0) g[in] = Eigen::VectorXd::Zero(values_[in].nonZeros());
    return &g[in];
  };
  switch (node.kind) {
    case NodeKind::SeedInput:
    case NodeKind::Expand:
      break;
    case NodeKind::MatVec: {
      const int in = node.inputs[0];
      const Relation& rel = kb_.relation(node.label);
      Eigen::VectorXd* dm = rel.trainable ? &grads.at(node.label) : nullptr;
      product_backward(values_[in], rel.matrix, kIdentity, values_[id], dout, slot(in), dm);
      break;
    }
    case NodeKind::DisjunctionSum: {
      const Message& out = values_[id];
      std::vector<double> w(static_cast<std::size_t>(out.cols()), 0.0);
      for (int r = 0; r < rows_of(out); ++r) {
        const int b = out.outerIndexPtr()[r], e = out.outerIndexPtr()[r + 1];
        for (int k = b; k < e; ++k) w[out.innerIndexPtr()[k]] = dout(k);
        for (int in : node.inputs) {
          Eigen::VectorXd* dx = slot(in);
          if (!dx) continue;
          const Message& x = values_[in];
          for (int k = x.outerIndexPtr()[r]; k < x.outerIndexPtr()[r + 1]; ++k) (*dx)(k) += w[x.innerIndexPtr()[k]];
        }
        for (int k = b; k < e; ++k) w[out.innerIndexPtr()[k]] = 0.0;
      }
      break;
    }
    case NodeKind::L1Normalize: {
      const int in = node.inputs[0];
      Eigen::VectorXd* dx = slot(in);
      if (!dx) break;
      const Message& x = values_[in];
      const int* o = x.outerIndexPtr();
      const double* v = x.valuePtr();
      for (int r = 0; r < rows_of(x); ++r) {
        double denom = kEpsilon, inner = 0.0;
        for (int k = o[r]; k < o[r + 1]; ++k) {
          denom += std::abs(v[k]);
          inner += dout(k) * v[k];
        }
        const double tail = inner / (denom * denom);
        for (int k = o[r]; k < o[r + 1]; ++k) {
          const double sign = v[k] > 0.0 ? 1.0 : (v[k] < 0.0 ? -1.0 : 0.0);
          (*dx)(k) += dout(k) / denom - sign * tail;
        }
      }
      break;
    }
    case NodeKind::SoftmaxMasked: {
      const int scores = node.inputs[0];
      if (node.inputs.size() == 1) {
        if (Eigen::VectorXd* ds = slot(scores)) softmax_backward(values_[id], dout, *ds);
        break;
      }
      const int expand = node.inputs[1];
      const int mix = plan_.nodes[expand].inputs[0];
      const Message& q = mixed_[id];
      Eigen::VectorXd* ds = slot(scores);
      Eigen::VectorXd dq;
      if (ds) dq = Eigen::VectorXd::Zero(q.nonZeros());
      product_backward(values_[mix], q, support_index(supports_[expand], values_[mix].cols()), values_[id], dout,
                       slot(mix), ds ? &dq : nullptr);
      if (ds) softmax_backward(q, dq, *ds);
      break;
    }
    case NodeKind::TsallisEntropyPair: {
      const int in = node.inputs[0];
      Eigen::VectorXd* dp = slot(in);
      if (!dp) break;
      const Message& p = values_[in];
      const int* po = p.outerIndexPtr();
      const int* oo = values_[id].outerIndexPtr();
      for (int r = 0; r < rows_of(p); ++r) {
        if (oo[r] == oo[r + 1]) continue;
        // entries are (kHigh, kLow) in that order
        const double coeff = 2.0 * (dout(oo[r] + 1) - dout(oo[r]));
        for (int k = po[r]; k < po[r + 1]; ++k) (*dp)(k) += coeff * p.valuePtr()[k];
      }
      break;
    }
  }
}

Eigen::MatrixXd evaluate(const Plan& plan, const KnowledgeBase& kb, std::span<const EntityId> queries) {
  Tape tape(plan, kb);
  tape.forward(queries);
  return Eigen::MatrixXd(tape.output());
}

Eigen::MatrixXd evaluate_pre_normalization(const Plan& plan, const KnowledgeBase& kb,
                                           std::span<const EntityId> queries) {
  Tape tape(plan, kb);
  tape.forward(queries);
  return Eigen::MatrixXd(tape.value(plan.pre_output));
}

Mask support_mask(const Plan& plan, const KnowledgeBase& kb, EntityId query) {
  Tape tape(plan, kb);
  const EntityId q[] = {query};
  tape.forward(q);
  Mask mask = Mask::Constant(kb.entity_count(), false);
  for (Message::InnerIterator it(tape.value(plan.pre_output), 0); it; ++it) mask(it.col()) = true;
  return mask;
}

LossResult forward_backward(const Plan& plan, const KnowledgeBase& kb, std::span<const EntityId> queries,
                            std::span<const EntityId> targets, bool with_gradients) {
  if (queries.size() != targets.size()) throw ConfigError("queries and targets differ in length");
  LossResult result;
  if (with_gradients) result.gradients = zero_gradients(kb);
  if (queries.empty()) return result;
  Tape tape(plan, kb);
  tape.forward(queries);
  const Message& out = tape.output();
  std::vector<int> used_rows;
  for (std::size_t r = 0; r < queries.size(); ++r) {
    const int row = static_cast<int>(r);
    if (row_support(out, row) == 0) {
      ++result.skipped;
      continue;
    }
    if (targets[r] < 0 || targets[r] >= kb.entity_count()) throw IndexError("target entity out of range");
    used_rows.push_back(row);
  }
  result.used = used_rows.size();
  if (used_rows.empty()) return result;
  const double scale = 1.0 / static_cast<double>(used_rows.size());
  Eigen::VectorXd dout = Eigen::VectorXd::Zero(out.nonZeros());
  double total = 0.0;
  for (int row : used_rows) {
    const EntityId t = targets[static_cast<std::size_t>(row)];
    const int* begin = out.innerIndexPtr() + out.outerIndexPtr()[row];
    const int* end = out.innerIndexPtr() + out.outerIndexPtr()[row + 1];
    const int* hit = std::lower_bound(begin, end, t);
    const bool stored = hit != end && *hit == t;
    const auto k = hit - out.innerIndexPtr();
    const double pt = stored ? out.valuePtr()[k] : 0.0;
    if (pt == 0.0) ++result.off_support;
    total += -std::log(pt + kEpsilon);
    // unstored targets are structural zeros: no parameter reaches them
    if (stored) dout(k) = -scale / (pt + kEpsilon);
  }
  result.loss = total * scale;
  if (with_gradients) tape.backward(dout, result.gradients);
  return result;
}

double grad_check(const Plan& plan, KnowledgeBase& kb, std::span<const EntityId> queries,
                  std::span<const EntityId> targets, double h) {
  const LossResult analytic = forward_backward(plan, kb, queries, targets, true);
  double worst = 0.0;
  for (const auto& [name, grad] : analytic.gradients) {
    auto w = kb.values(name);
    for (Eigen::Index k = 0; k < w.size(); ++k) {
      const double saved = w(k);
      w(k) = saved + h;
      const double up = forward_backward(plan, kb, queries, targets, false).loss;
      w(k) = saved - h;
      const double down = forward_backward(plan, kb, queries, targets, false).loss;
      w(k) = saved;
      const double numeric = (up - down) / (2.0 * h);
      const double a = grad(k);
      const double rel = std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), 1e-6});
      worst = std::max(worst, rel);
    }
  }
  return worst;
}

}  // namespace dce
