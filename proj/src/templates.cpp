#include "dce/templates.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <array>
#include <random>

namespace dce {

namespace {

constexpr std::array<std::pair<ConstraintKind, std::string_view>, 8> kKindNames{{
    {ConstraintKind::ER, "ER"},
    {ConstraintKind::CT, "CT"},
    {ConstraintKind::CT_TYPED, "CT_TYPED"},
    {ConstraintKind::NBER, "NBER"},
    {ConstraintKind::LPER, "LPER"},
    {ConstraintKind::COLPER, "COLPER"},
    {ConstraintKind::NBER_PAIR, "NBER_PAIR"},
    {ConstraintKind::COLPER_SET, "COLPER_SET"},
}};

std::vector<TrainingExample> low_examples(std::string_view head, std::span<const EntityId> entities) {
  std::vector<TrainingExample> out;
  out.reserve(entities.size());
  for (EntityId e : entities) out.push_back({std::string(head), e, kLow});
  return out;
}

void require_populated(const KnowledgeBase& kb, std::string_view relation) {
  if (!kb.has_relation(relation) || kb.facts(relation).empty())
    throw ConfigError("relation '" + std::string(relation) + "' has no facts");
}

/// Adds a fact unless it is already stored with the same weight.
std::size_t put(KnowledgeBase& kb, std::string_view rel, EntityId h, EntityId t, double w = 1.0) {
  if (kb.has_relation(rel)) {
    if (auto old = kb.weight(rel, h, t); old && *old == w) return 0;
  }
  kb.add_fact(rel, h, t, w);
  return 1;
}

}  // namespace

std::string_view to_string(ConstraintKind kind) {
  for (const auto& [k, name] : kKindNames)
    if (k == kind) return name;
  return "?";
}

ConstraintKind constraint_kind_from_string(std::string_view name) {
  for (const auto& [k, n] : kKindNames)
    if (n == name) return k;
  throw ConfigError("unknown constraint kind '" + std::string(name) + "'");
}

Emission emit_er(std::string_view predict, std::span<const EntityId> unlabeled) {
  Emission e{ConstraintKind::ER, {}, std::string(kErHead), {}, 0};
  const std::string p(predict);
  e.program = parse_program(std::string(kErHead) + "(X,H) :- " + p + "(X,Y), entropy(Y,H).");
  e.examples = low_examples(kErHead, unlabeled);
  return e;
}

Emission emit_cotrain(const KnowledgeBase& kb, const CoTrainViews& views, std::span<const EntityId> unlabeled) {
  require_populated(kb, views.feature1);
  require_populated(kb, views.feature2);
  const std::string init = " init=" + views.init;
  Emission e = emit_er("predict", unlabeled);
  e.kind = ConstraintKind::CT;
  e.program.merge(parse_program(
      "#softmax predict1\n#softmax predict2\n"
      "#trainable indicates1 " + views.feature1 + ".tail " + views.labels + init + "\n"
      "#trainable indicates2 " + views.feature2 + ".tail " + views.labels + init + "\n"
      "predict(X,Y) :- predict1(X,Y).\n"
      "predict(X,Y) :- predict2(X,Y).\n"
      "predict1(X,Y) :- " + views.feature1 + "(X,F), indicates1(F,Y).\n"
      "predict2(X,Y) :- " + views.feature2 + "(X,F), indicates2(F,Y).\n"));
  return e;
}

Emission emit_cotrain_typed(KnowledgeBase& kb, std::span<const TypeFact> has_type,
                            std::span<const EntityId> unlabeled) {
  Emission e = emit_er("predict", unlabeled);
  e.kind = ConstraintKind::CT_TYPED;
  e.program.merge(parse_program(
      "predict(X,T) :- predictT(X,T).\n"
      "predict(X,T) :- predictR(X,R), hasType(R,T).\n"));
  for (const auto& [rel, type] : has_type) {
    const auto r = kb.find_entity(rel);
    const auto t = kb.find_entity(type);
    if (!r) throw UnknownSymbolError("hasType names unknown relation '" + rel + "'");
    if (!t) throw UnknownSymbolError("hasType names unknown type '" + type + "'");
    e.facts_added += put(kb, "hasType", *r, *t);
  }
  return e;
}

std::vector<TypeFact> drug_has_type() {
  return {{"conditions_this_may_prevent", "disease"},
          {"used_to_treat", "disease"},
          {"side_effects", "symptom"},
          {"other", "other"}};
}

Emission emit_network(const KnowledgeBase& kb, ConstraintKind kind, std::string_view near, int depth,
                      std::span<const EntityId> unlabeled) {
  if (depth < 1) throw ConfigError("network constraint depth must be at least 1");
  require_populated(kb, near);
  const std::string n(near);
  Emission e{kind, {}, "", {}, 0};
  std::string text;
  switch (kind) {
    case ConstraintKind::NBER:
      e.head = kNberHead;
      text = e.head + "(X1,H) :- " + n + "(X1,X2), predict(X2,Y2), entropy(Y2,H).\n";
      break;
    case ConstraintKind::LPER:
      e.head = kLperHead;
      text = "#maxdepth sim " + std::to_string(depth) + "\n" + e.head +
             "(X1,H) :- sim(X1,X3), predict(X3,Y3), entropy(Y3,H).\n"
             "sim(X1,X3) :- " + n + "(X1,X3).\n"
             "sim(X1,X3) :- " + n + "(X1,X2), sim(X2,X3).\n";
      break;
    case ConstraintKind::COLPER:
      e.head = kColperHead;
      text = "#maxdepth cosim " + std::to_string(depth) + "\n" + e.head +
             "(X1,H) :- cosim(X1,X3), predict(X3,Y3), entropy(Y3,H).\n"
             "cosim(X1,X3) :- " + n + "(X1,X3).\n"
             "cosim(X1,X3) :- " + n + "(X1,Z), " + n + "(Z,X2), cosim(X2,X3).\n";
      break;
    default:
      throw ConfigError("emit_network handles NBER, LPER and COLPER, not " + std::string(to_string(kind)));
  }
  e.program = parse_program(text);
  e.examples = low_examples(e.head, unlabeled);
  return e;
}

Emission emit_pair_groups(KnowledgeBase& kb, ConstraintKind kind, const std::vector<std::vector<EntityId>>& groups,
                          const PairGroupOptions& options) {
  if (kind != ConstraintKind::NBER_PAIR && kind != ConstraintKind::COLPER_SET)
    throw ConfigError("emit_pair_groups handles NBER_PAIR and COLPER_SET");
  if (kind == ConstraintKind::COLPER_SET && options.depth < 1) throw ConfigError("set depth must be at least 1");
  if (options.cap < 2) throw ConfigError("group cap must be at least 2");
  const bool set = kind == ConstraintKind::COLPER_SET;
  Emission e{kind, {}, std::string(set ? kSetHead : kPairHead), {}, 0};
  e.program = parse_program(
      set ? "#maxdepth hasExampleSet " + std::to_string(options.depth) + "\n" + e.head +
                "(P,H) :- hasExampleSet(P,X2), predict(X2,Y), entropy(Y,H).\n"
                "hasExampleSet(P,X2) :- hasExample(P,X2).\n"
                "hasExampleSet(P,X2) :- hasExample(P,X1), inPair(X1,P2), hasExampleSet(P2,X2).\n"
          : e.head + "(P,H) :- hasExample(P,X1), predict(X1,Y), entropy(Y,H).\n");

  std::mt19937_64 rng(options.seed);
  std::vector<EntityId> pairs;
  std::size_t singletons = 0;
  for (const auto& raw : groups) {
    std::vector<EntityId> group = raw;
    std::sort(group.begin(), group.end());
    group.erase(std::unique(group.begin(), group.end()), group.end());
    if (group.size() < 2) {
      ++singletons;
      continue;
    }
    if (group.size() > options.cap) {
      std::shuffle(group.begin(), group.end(), rng);
      group.resize(options.cap);
    }
    std::sort(group.begin(), group.end(),
              [&](EntityId a, EntityId b) { return kb.entity_name(a) < kb.entity_name(b); });
    for (std::size_t i = 0; i < group.size(); ++i)
      for (std::size_t j = i + 1; j < group.size(); ++j) {
        const EntityId a = group[i], b = group[j];
        const EntityId p =
            kb.intern("pair::" + options.group_key + "::" + kb.entity_name(a) + "::" + kb.entity_name(b));
        e.facts_added += put(kb, "hasExample", p, a) + put(kb, "hasExample", p, b);
        if (set) e.facts_added += put(kb, "inPair", a, p) + put(kb, "inPair", b, p);
        pairs.push_back(p);
      }
  }
  if (singletons > 0) spdlog::warn("{}: skipped {} group(s) with fewer than two mentions", to_string(kind), singletons);
  std::sort(pairs.begin(), pairs.end());
  pairs.erase(std::unique(pairs.begin(), pairs.end()), pairs.end());
  e.examples = low_examples(e.head, pairs);
  return e;
}

std::size_t close_near(KnowledgeBase& kb, std::span<const EntityId> docs, std::string_view near) {
  std::size_t added = 0;
  if (kb.has_relation(near))
    for (const auto& f : kb.facts(near))
      if (!kb.weight(near, f.tail, f.head)) added += put(kb, near, f.tail, f.head, f.weight);
  for (EntityId d : docs) added += put(kb, near, d, d);
  return added;
}

}  // namespace dce
