#include "dce/proofs.hpp"

#include <algorithm>

namespace dce {

namespace {

struct Partial {
  EntityId at;
  double weight;
  std::vector<FactRef> facts;
};

class Prover {
 public:
  Prover(const ValidatedProgram& vp, const KnowledgeBase& kb, int default_depth)
      : vp_(vp), kb_(kb), default_depth_(default_depth) {}

  std::vector<Partial> prove(std::string_view pred, const Partial& from, const std::map<int, int>& levels,
                             bool top) {
    if (pred == kEntropyBuiltin) throw ConfigError("proof enumeration does not cover the entropy builtin");
    if (!top && vp_.program.is_softmax(pred))
      throw ConfigError("proof enumeration does not cover softmax predicate '" + std::string(pred) + "' in a body");
    std::vector<Partial> out;
    if (kb_.has_relation(pred)) {
      const SparseMatrix& m = kb_.relation(pred).matrix;
      for (SparseMatrix::InnerIterator it(m, from.at); it; ++it) {
        Partial next{static_cast<EntityId>(it.col()), from.weight * it.value(), from.facts};
        next.facts.push_back({std::string(pred), from.at, next.at, it.value()});
        emit(out, std::move(next));
      }
    }
    if (!vp_.is_derived(pred)) return out;

    const bool recursive = vp_.recursive.contains(pred);
    int comp = -1;
    int level = 0;
    if (recursive) {
      comp = vp_.component.find(pred)->second;
      auto it = levels.find(comp);
      level = it != levels.end() ? it->second : depth_of(comp) - 1;
    }
    for (std::size_t idx : vp_.rules_by_head.find(pred)->second) {
      const Rule& rule = vp_.program.rules[idx];
      const bool rec_rule = recursive && std::any_of(rule.body.begin(), rule.body.end(), [&](const Atom& a) {
                              auto c = vp_.component.find(a.predicate);
                              return c != vp_.component.end() && c->second == comp;
                            });
      if (rec_rule && level == 0) continue;
      std::map<int, int> sub = levels;
      if (recursive) sub[comp] = rec_rule ? level - 1 : level;
      std::vector<Partial> frontier{from};
      for (const Atom& atom : rule.body) {
        std::vector<Partial> next;
        for (const auto& p : frontier)
          for (auto& q : prove(atom.predicate, p, sub, false)) emit(next, std::move(q));
        frontier = std::move(next);
      }
      for (auto& p : frontier) out.push_back(std::move(p));
    }
    if (recursive && level == 0 && out.empty() && !kb_.has_relation(pred) &&
        std::all_of(vp_.rules_by_head.find(pred)->second.begin(), vp_.rules_by_head.find(pred)->second.end(),
                    [&](std::size_t i) { return vp_.is_recursive_rule(vp_.program.rules[i]); }))
      throw NoBaseCaseError("recursive predicate '" + std::string(pred) + "' has no base case");
    return out;
  }

 private:
  int depth_of(int comp) const {
    int depth = default_depth_;
    bool found = false;
    for (const auto& [p, c] : vp_.component)
      if (c == comp)
        if (auto d = vp_.program.depth_of(p)) {
          depth = found ? std::max(depth, *d) : *d;
          found = true;
        }
    return depth;
  }

  void emit(std::vector<Partial>& out, Partial&& p) {
    if (++generated_ > kProofBudget) throw OracleBudgetError("proof enumeration exceeded 10^6 partial proofs");
    out.push_back(std::move(p));
  }

  const ValidatedProgram& vp_;
  const KnowledgeBase& kb_;
  int default_depth_;
  std::size_t generated_ = 0;
};

}  // namespace

std::vector<ProofTrace> enumerate_proofs(const ValidatedProgram& vp, const KnowledgeBase& kb,
                                         std::string_view target, EntityId query, int default_depth) {
  if (default_depth <= 0) throw ConfigError("unroll depth must be positive");
  if (!kb.frozen()) throw FrozenError("proof enumeration requires a frozen knowledge base");
  if (query < 0 || query >= kb.entity_count()) throw IndexError("query entity out of range");
  Prover prover(vp, kb, default_depth);
  std::vector<ProofTrace> proofs;
  for (auto& p : prover.prove(target, Partial{query, 1.0, {}}, {}, true))
    proofs.push_back({p.at, p.weight, std::move(p.facts)});
  return proofs;
}

std::map<EntityId, double> proof_scores(const std::vector<ProofTrace>& proofs) {
  std::map<EntityId, double> scores;
  for (const auto& p : proofs) scores[p.answer] += p.weight;
  return scores;
}

}  // namespace dce
