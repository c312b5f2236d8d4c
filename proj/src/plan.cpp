#include "dce/plan.hpp"

#include <array>
#include <charconv>
#include <sstream>

namespace dce {

namespace {

constexpr std::array<std::pair<NodeKind, std::string_view>, 7> kKindNames{{
    {NodeKind::SeedInput, "SeedInput"},
    {NodeKind::Expand, "Expand"},
    {NodeKind::MatVec, "MatVec"},
    {NodeKind::DisjunctionSum, "DisjunctionSum"},
    {NodeKind::L1Normalize, "L1Normalize"},
    {NodeKind::SoftmaxMasked, "SoftmaxMasked"},
    {NodeKind::TsallisEntropyPair, "TsallisEntropyPair"},
}};

constexpr std::size_t kMaxPlanNodes = 1'000'000;

class Compiler {
 public:
  Compiler(const ValidatedProgram& vp, const KnowledgeBase& kb, const CompileOptions& options)
      : vp_(vp), kb_(kb), options_(options) {}

  Plan run(std::string_view target) {
    if (options_.default_depth <= 0) throw ConfigError("default unroll depth must be positive");
    for (const auto& m : vp_.program.maxdepth)
      if (m.depth <= 0)
        throw ConfigError("#maxdepth for '" + m.predicate + "' must be positive, got " + std::to_string(m.depth));
    if (!vp_.is_derived(target) && !kb_.has_relation(target))
      throw UnknownPredicateError("query predicate '" + std::string(target) + "' is not defined");

    plan_.target = std::string(target);
    seed_ = add(NodeKind::SeedInput, "-", {});
    const std::map<int, int> levels;
    if (vp_.program.is_softmax(target)) {
      const int scores = linear(target, seed_, levels);
      plan_.pre_output = scores;
      plan_.output = add(NodeKind::SoftmaxMasked, std::string(target), {scores});
    } else {
      plan_.output = plan_.pre_output = linear(target, seed_, levels);
    }
    return std::move(plan_);
  }

 private:
  int add(NodeKind kind, std::string label, std::vector<int> inputs) {
    if (plan_.nodes.size() >= kMaxPlanNodes) throw ConfigError("compiled plan exceeds node budget");
    plan_.nodes.push_back({kind, std::move(label), std::move(inputs)});
    return static_cast<int>(plan_.nodes.size()) - 1;
  }

  int depth_of_component(int comp) const {
    int depth = 0;
    bool found = false;
    for (const auto& [pred, c] : vp_.component) {
      if (c != comp) continue;
      if (auto d = vp_.program.depth_of(pred)) {
        depth = found ? std::max(depth, *d) : *d;
        found = true;
      }
    }
    return found ? depth : options_.default_depth;
  }

  int call(std::string_view pred, int input, const std::map<int, int>& levels) {
    if (!vp_.program.is_softmax(pred)) return linear(pred, input, levels);
    if (input == seed_) {
      const int scores = linear(pred, input, levels);
      return add(NodeKind::SoftmaxMasked, std::string(pred), {scores});
    }
    const int expand = add(NodeKind::Expand, "-", {input});
    const int scores = linear(pred, expand, levels);
    return add(NodeKind::SoftmaxMasked, std::string(pred), {scores, expand});
  }

  int linear(std::string_view pred, int input, const std::map<int, int>& levels) {
    std::vector<int> terms;
    if (kb_.has_relation(pred)) terms.push_back(add(NodeKind::MatVec, std::string(pred), {input}));
    if (vp_.is_derived(pred)) {
      const bool recursive = vp_.recursive.contains(pred);
      int comp = -1;
      int level = 0;
      if (recursive) {
        comp = vp_.component.find(pred)->second;
        const int depth = depth_of_component(comp);
        plan_.depths[std::string(pred)] = depth;
        auto it = levels.find(comp);
        level = it != levels.end() ? it->second : depth - 1;
      }
      for (std::size_t idx : vp_.rules_by_head.find(pred)->second) {
        const Rule& rule = vp_.program.rules[idx];
        const bool rec_rule = vp_.is_recursive_rule(rule);
        if (rec_rule && level == 0) continue;
        std::map<int, int> sub = levels;
        if (recursive) sub[comp] = rec_rule ? level - 1 : level;
        int node = input;
        for (const Atom& atom : rule.body) {
          if (atom.predicate == kEntropyBuiltin) {
            node = add(NodeKind::L1Normalize, "-", {node});
            node = add(NodeKind::TsallisEntropyPair, "-", {node});
          } else {
            node = call(atom.predicate, node, sub);
          }
        }
        terms.push_back(node);
      }
    }
    if (terms.empty())
      throw NoBaseCaseError("recursive predicate '" + std::string(pred) +
                            "' has no non-recursive rule or facts to end its unrolling");
    if (terms.size() == 1) return terms.front();
    return add(NodeKind::DisjunctionSum, std::string(pred), std::move(terms));
  }

  const ValidatedProgram& vp_;
  const KnowledgeBase& kb_;
  CompileOptions options_;
  Plan plan_;
  int seed_ = 0;
};

}  // namespace

std::string_view to_string(NodeKind kind) {
  for (const auto& [k, name] : kKindNames)
    if (k == kind) return name;
  return "?";
}

NodeKind node_kind_from_string(std::string_view name) {
  for (const auto& [k, n] : kKindNames)
    if (n == name) return k;
  throw ConfigError("unknown plan node kind '" + std::string(name) + "'");
}

Plan compile(const ValidatedProgram& vp, std::string_view target, const KnowledgeBase& kb,
             const CompileOptions& options) {
  return Compiler(vp, kb, options).run(target);
}

std::string dump_plan(const Plan& plan) {
  std::ostringstream out;
  out << "# plan " << plan.target << " output=" << plan.output << " pre_output=" << plan.pre_output << '\n';
  for (std::size_t i = 0; i < plan.nodes.size(); ++i) {
    const auto& node = plan.nodes[i];
    out << i << ' ' << to_string(node.kind) << ' ' << node.label << ' ';
    if (node.inputs.empty()) out << '-';
    for (std::size_t k = 0; k < node.inputs.size(); ++k) out << (k ? "," : "") << node.inputs[k];
    out << '\n';
  }
  return out.str();
}

Plan parse_plan_dump(std::string_view text) {
  Plan plan;
  std::istringstream in{std::string(text)};
  std::string line;
  auto parse_int = [](std::string_view s) {
    int v = 0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size()) throw ConfigError("bad integer '" + std::string(s) + "'");
    return v;
  };
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream fields(line);
    if (line.front() == '#') {
      std::string hash, word, target, output, pre;
      fields >> hash >> word >> target >> output >> pre;
      if (word != "plan" || !output.starts_with("output=") || !pre.starts_with("pre_output="))
        throw ConfigError("bad plan header: " + line);
      plan.target = target;
      plan.output = parse_int(std::string_view(output).substr(7));
      plan.pre_output = parse_int(std::string_view(pre).substr(11));
      continue;
    }
    std::string id, kind, label, inputs;
    if (!(fields >> id >> kind >> label >> inputs)) throw ConfigError("bad plan line: " + line);
    if (parse_int(id) != static_cast<int>(plan.nodes.size())) throw ConfigError("plan node ids must be dense");
    PlanNode node{node_kind_from_string(kind), label, {}};
    if (inputs != "-") {
      std::size_t start = 0;
      while (start <= inputs.size()) {
        const auto comma = inputs.find(',', start);
        const auto piece = std::string_view(inputs).substr(start, comma == std::string::npos ? std::string::npos : comma - start);
        node.inputs.push_back(parse_int(piece));
        if (comma == std::string::npos) break;
        start = comma + 1;
      }
    }
    plan.nodes.push_back(std::move(node));
  }
  return plan;
}

}  // namespace dce
