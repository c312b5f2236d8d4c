#include "dce/pipeline.hpp"

#include <boost/version.hpp>
#include <json.hpp>
#include <spdlog/spdlog.h>

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <set>
#include <sstream>

namespace dce {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

void expect_keys(const json& obj, std::initializer_list<const char*> keys, const std::string& section) {
  if (!obj.is_object()) throw ConfigError("config section '" + section + "' must be an object");
  for (const auto& [key, value] : obj.items()) {
    if (std::none_of(keys.begin(), keys.end(), [&](const char* k) { return key == k; }))
      throw ConfigError("unknown config key '" + (section.empty() ? key : section + "." + key) + "'");
  }
}

template <typename T>
void read(const json& obj, const char* key, T& into) {
  if (!obj.contains(key)) return;
  try {
    into = obj.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config key '") + key + "': " + e.what());
  }
}

std::string resolve(const std::string& path, const std::string& base) {
  if (path.empty() || base.empty() || fs::path(path).is_absolute()) return path;
  return (fs::path(base) / path).lexically_normal().string();
}

std::string read_text(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IngestError("cannot open '" + path + "'");
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

std::string_view data_kind_name(DataKind k) {
  switch (k) {
    case DataKind::Facts: return "facts";
    case DataKind::Citation: return "citation";
    case DataKind::Synthetic: return "synthetic";
  }
  return "facts";
}

DataKind data_kind_from(const std::string& s) {
  if (s == "facts") return DataKind::Facts;
  if (s == "citation") return DataKind::Citation;
  if (s == "synthetic") return DataKind::Synthetic;
  throw ConfigError("data.kind must be facts, citation or synthetic, not '" + s + "'");
}

json to_json_value(const RunConfig& c) {
  const auto& s = c.data.synthetic;
  json constraints = json::array();
  for (const auto& k : c.constraints)
    constraints.push_back({{"kind", std::string(to_string(k.kind))},
                           {"weight", k.weight},
                           {"near", k.near},
                           {"depth", k.depth},
                           {"group_relation", k.group_relation}});
  return {
      {"seed", c.seed},
      {"output_dir", c.output_dir},
      {"rules", c.rules},
      {"rules_file", c.rules_file},
      {"target", c.target},
      {"data",
       {{"kind", std::string(data_kind_name(c.data.kind))},
        {"facts", c.data.facts},
        {"examples", c.data.examples},
        {"test_examples", c.data.test_examples},
        {"content", c.data.content},
        {"cites", c.data.cites},
        {"synthetic",
         {{"classes", s.classes},
          {"vocab_per_class", s.vocab_per_class},
          {"ambiguity", s.ambiguity},
          {"docs", s.docs},
          {"homophily", s.homophily},
          {"tokens_per_doc", s.tokens_per_doc},
          {"shared_vocab", s.shared_vocab},
          {"avg_degree", s.avg_degree}}},
        {"split",
         {{"per_class_train", c.data.split.per_class_train},
          {"test", c.data.split.test},
          {"val_fraction", c.data.split.val_fraction}}}}},
      {"constraints", constraints},
      {"train",
       {{"epochs", c.train.epochs},
        {"batch_size", c.train.batch_size},
        {"learning_rate", c.train.learning_rate},
        {"optimizer", c.train.optimizer == Optimizer::Adam ? "adam" : "sgd"},
        {"beta1", c.train.beta1},
        {"beta2", c.train.beta2},
        {"epsilon", c.train.epsilon},
        {"patience", c.train.patience}}},
      {"tune",
       {{"budget", c.tune.budget},
        {"lower", c.tune.lower},
        {"upper", c.tune.upper},
        {"method", c.tune.method == TuneMethod::Bayesian ? "bo" : "random"}}},
      {"eval", {{"other_label", c.other_label}}},
  };
}

RunConfig from_json_value(const json& j, const std::string& base) {
  RunConfig c;
  expect_keys(j, {"seed", "output_dir", "rules", "rules_file", "target", "data", "constraints", "train", "tune", "eval"},
              "");
  read(j, "seed", c.seed);
  read(j, "output_dir", c.output_dir);
  read(j, "rules", c.rules);
  read(j, "rules_file", c.rules_file);
  read(j, "target", c.target);
  c.output_dir = resolve(c.output_dir, base);
  c.rules_file = resolve(c.rules_file, base);
  if (!c.rules_file.empty()) c.rules = read_text(c.rules_file);

  if (j.contains("data")) {
    const json& d = j["data"];
    expect_keys(d, {"kind", "facts", "examples", "test_examples", "content", "cites", "synthetic", "split"}, "data");
    std::string kind = "facts";
    read(d, "kind", kind);
    c.data.kind = data_kind_from(kind);
    read(d, "facts", c.data.facts);
    read(d, "examples", c.data.examples);
    read(d, "test_examples", c.data.test_examples);
    read(d, "content", c.data.content);
    read(d, "cites", c.data.cites);
    for (auto* list : {&c.data.facts, &c.data.examples, &c.data.test_examples})
      for (auto& p : *list) p = resolve(p, base);
    c.data.content = resolve(c.data.content, base);
    c.data.cites = resolve(c.data.cites, base);
    if (d.contains("synthetic")) {
      const json& s = d["synthetic"];
      expect_keys(s, {"classes", "vocab_per_class", "ambiguity", "docs", "homophily", "tokens_per_doc", "shared_vocab",
                      "avg_degree"},
                  "data.synthetic");
      auto& g = c.data.synthetic;
      read(s, "classes", g.classes);
      read(s, "vocab_per_class", g.vocab_per_class);
      read(s, "ambiguity", g.ambiguity);
      read(s, "docs", g.docs);
      read(s, "homophily", g.homophily);
      read(s, "tokens_per_doc", g.tokens_per_doc);
      read(s, "shared_vocab", g.shared_vocab);
      read(s, "avg_degree", g.avg_degree);
    }
    if (d.contains("split")) {
      const json& s = d["split"];
      expect_keys(s, {"per_class_train", "test", "val_fraction"}, "data.split");
      read(s, "per_class_train", c.data.split.per_class_train);
      read(s, "test", c.data.split.test);
      read(s, "val_fraction", c.data.split.val_fraction);
    }
  }
  c.data.synthetic.seed = c.seed;

  if (j.contains("constraints")) {
    if (!j["constraints"].is_array()) throw ConfigError("'constraints' must be a list");
    for (std::size_t i = 0; i < j["constraints"].size(); ++i) {
      const json& k = j["constraints"][i];
      expect_keys(k, {"kind", "weight", "near", "depth", "group_relation"}, "constraints." + std::to_string(i));
      ConstraintSpec spec;
      std::string kind;
      read(k, "kind", kind);
      if (kind.empty()) throw ConfigError("constraints." + std::to_string(i) + " needs a kind");
      spec.kind = constraint_kind_from_string(kind);
      read(k, "weight", spec.weight);
      read(k, "near", spec.near);
      read(k, "depth", spec.depth);
      read(k, "group_relation", spec.group_relation);
      c.constraints.push_back(spec);
    }
  }

  if (j.contains("train")) {
    const json& t = j["train"];
    expect_keys(t, {"epochs", "batch_size", "learning_rate", "optimizer", "beta1", "beta2", "epsilon", "patience"},
                "train");
    read(t, "epochs", c.train.epochs);
    read(t, "batch_size", c.train.batch_size);
    read(t, "learning_rate", c.train.learning_rate);
    read(t, "beta1", c.train.beta1);
    read(t, "beta2", c.train.beta2);
    read(t, "epsilon", c.train.epsilon);
    read(t, "patience", c.train.patience);
    std::string opt = "adam";
    read(t, "optimizer", opt);
    if (opt == "adam")
      c.train.optimizer = Optimizer::Adam;
    else if (opt == "sgd")
      c.train.optimizer = Optimizer::Sgd;
    else
      throw ConfigError("train.optimizer must be adam or sgd");
  }
  c.train.seed = c.seed;

  if (j.contains("tune")) {
    const json& t = j["tune"];
    expect_keys(t, {"budget", "lower", "upper", "method"}, "tune");
    read(t, "budget", c.tune.budget);
    read(t, "lower", c.tune.lower);
    read(t, "upper", c.tune.upper);
    std::string method = "bo";
    read(t, "method", method);
    if (method == "bo")
      c.tune.method = TuneMethod::Bayesian;
    else if (method == "random")
      c.tune.method = TuneMethod::Random;
    else
      throw ConfigError("tune.method must be bo or random");
  }
  if (j.contains("eval")) {
    expect_keys(j["eval"], {"other_label"}, "eval");
    read(j["eval"], "other_label", c.other_label);
  }
  return c;
}

void require_file(const std::string& path, const char* what) {
  if (path.empty()) throw ConfigError(std::string(what) + " path is not set");
  if (!fs::exists(path)) throw IngestError(std::string(what) + " '" + path + "' does not exist");
}

/// Mentions grouped by the tail they share in `relation`.
std::vector<std::vector<EntityId>> groups_of(const KnowledgeBase& kb, const std::string& relation) {
  if (relation.empty()) throw ConfigError("pair/set constraints need group_relation");
  if (!kb.has_relation(relation)) throw ConfigError("group relation '" + relation + "' has no facts");
  std::map<EntityId, std::vector<EntityId>> by_tail;
  for (const auto& f : kb.facts(relation)) by_tail[f.tail].push_back(f.head);
  std::vector<std::vector<EntityId>> out;
  for (auto& [tail, members] : by_tail) out.push_back(std::move(members));
  return out;
}

LabeledSet as_labeled(const std::vector<TrainingExample>& examples) {
  LabeledSet s;
  for (const auto& e : examples) {
    s.queries.push_back(e.query);
    s.gold.push_back(e.target);
  }
  return s;
}

}  // namespace

void RunConfig::apply_overrides(std::span<const std::string> assignments) {
  if (assignments.empty()) return;
  json j = to_json_value(*this);
  for (const auto& a : assignments) {
    std::string_view text = a;
    if (text.starts_with("--")) text.remove_prefix(2);
    const auto eq = text.find('=');
    if (eq == std::string_view::npos || eq == 0) throw ConfigError("override '" + a + "' is not key=value");
    std::string key(text.substr(0, eq));
    const std::string value(text.substr(eq + 1));
    if (key == "rules") j["rules_file"] = "";
    std::replace(key.begin(), key.end(), '.', '/');
    json parsed = json::accept(value) ? json::parse(value) : json(value);
    try {
      j[json::json_pointer("/" + key)] = std::move(parsed);
    } catch (const json::exception& e) {
      throw ConfigError("override '" + a + "': " + e.what());
    }
  }
  *this = from_json_value(j, "");
}

std::string RunConfig::to_json() const { return to_json_value(*this).dump(2); }

RunConfig RunConfig::from_json(const std::string& text, const std::string& base_dir) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  return from_json_value(j, base_dir);
}

void RunConfig::check() const {
  train.check();
  switch (data.kind) {
    case DataKind::Citation:
      require_file(data.content, "content file");
      require_file(data.cites, "cites file");
      break;
    case DataKind::Synthetic:
    case DataKind::Facts:
      break;
  }
  for (const auto* list : {&data.facts, &data.examples, &data.test_examples})
    for (const auto& p : *list) require_file(p, "data file");
  if (data.kind != DataKind::Facts && !data.test_examples.empty())
    throw ConfigError("data.test_examples applies to facts data only");
  for (const auto& k : constraints)
    if (!(k.weight >= 0.0) || !std::isfinite(k.weight)) throw ConfigError("constraint weights must be finite and >= 0");
  if (!(tune.lower < tune.upper)) throw ConfigError("tune.lower must be below tune.upper");
}

std::string RunConfig::resolved_output_dir() const {
  if (!output_dir.empty()) return output_dir;
  if (const char* env = std::getenv(kOutputDirEnv); env && *env) return env;
  return "runs";
}

RunConfig load_config(const std::string& path, std::span<const std::string> overrides) {
  RunConfig c = RunConfig::from_json(read_text(path), fs::path(path).parent_path().string());
  c.apply_overrides(overrides);
  return c;
}

KnowledgeBase build_kb(const RunConfig& c, std::optional<DatasetBundle>* bundle_out) {
  KnowledgeBase kb;
  std::optional<DatasetBundle> bundle;
  const auto& sp = c.data.split;
  if (c.data.kind == DataKind::Citation)
    bundle = make_split(load_citation_dataset(c.data.content, c.data.cites), sp.per_class_train, sp.test,
                        sp.val_fraction, c.seed);
  else if (c.data.kind == DataKind::Synthetic)
    bundle = make_split(generate_synthetic(c.data.synthetic), sp.per_class_train, sp.test, sp.val_fraction, c.seed);
  if (bundle) populate_kb(*bundle, kb);
  for (const auto& f : c.data.facts) load_facts_tsv(kb, f);
  if (bundle_out) *bundle_out = std::move(bundle);
  return kb;
}

std::unique_ptr<Experiment> build_experiment(const RunConfig& config) {
  config.check();
  auto ex = std::make_unique<Experiment>();
  ex->config = config;
  ex->kb = build_kb(config, &ex->bundle);
  KnowledgeBase& kb = ex->kb;

  std::vector<TrainingExample> supervised;
  std::map<std::string, std::vector<TrainingExample>> extra;  // examples on other predicates
  for (const auto& path : config.data.examples)
    for (auto& e : load_examples_tsv(path, kb))
      (e.predicate == config.target ? supervised : extra[e.predicate]).push_back(e);

  std::vector<EntityId> unlabeled;
  if (ex->bundle) {
    const auto& b = *ex->bundle;
    const LabeledSet train = labeled_set(b, kb, b.train);
    for (std::size_t i = 0; i < train.size(); ++i) supervised.push_back({config.target, train.queries[i], train.gold[i]});
    if (!b.validation.empty()) ex->validation = labeled_set(b, kb, b.validation);
    if (!b.test.empty()) ex->test = labeled_set(b, kb, b.test);
    unlabeled = doc_ids(b, kb, b.unlabeled);
  } else {
    std::vector<TrainingExample> test;
    for (const auto& path : config.data.test_examples)
      for (auto& e : load_examples_tsv(path, kb))
        if (e.predicate == config.target) test.push_back(e);
    if (!test.empty()) ex->test = as_labeled(test);
    if (!kb.has_domain("labels")) {
      std::set<EntityId> labels;
      for (const auto& e : supervised) labels.insert(e.target);
      if (ex->test)
        for (EntityId g : ex->test->gold) labels.insert(g);
      if (!labels.empty()) kb.define_domain("labels", {labels.begin(), labels.end()});
    }
    std::vector<EntityId> candidates;
    if (kb.has_domain("docs"))
      candidates = kb.domain("docs");
    else if (kb.has_relation("hasFeature"))
      candidates = kb.resolve_domain("hasFeature.head");
    std::set<EntityId> seen;
    for (const auto& e : supervised) seen.insert(e.query);
    if (ex->test) seen.insert(ex->test->queries.begin(), ex->test->queries.end());
    for (EntityId d : candidates)
      if (!seen.contains(d)) unlabeled.push_back(d);
  }
  ex->train_set = as_labeled(supervised);

  ex->program = parse_program(config.rules);
  std::vector<Emission> emissions;
  for (const auto& spec : config.constraints) {
    switch (spec.kind) {
      case ConstraintKind::ER:
        emissions.push_back(emit_er(config.target, unlabeled));
        break;
      case ConstraintKind::CT:
        emissions.push_back(emit_cotrain(kb, CoTrainViews{}, unlabeled));
        break;
      case ConstraintKind::CT_TYPED: {
        const auto types = drug_has_type();
        emissions.push_back(emit_cotrain_typed(kb, types, unlabeled));
        break;
      }
      case ConstraintKind::NBER:
      case ConstraintKind::LPER:
      case ConstraintKind::COLPER:
        emissions.push_back(emit_network(kb, spec.kind, spec.near, spec.depth, unlabeled));
        break;
      case ConstraintKind::NBER_PAIR:
      case ConstraintKind::COLPER_SET: {
        PairGroupOptions options;
        options.group_key = spec.group_relation;
        options.depth = spec.depth;
        options.seed = config.seed;
        emissions.push_back(emit_pair_groups(kb, spec.kind, groups_of(kb, spec.group_relation), options));
        break;
      }
    }
    ex->program.merge(emissions.back().program);
  }

  apply_directives(ex->program, kb, config.seed);
  kb.freeze();
  const auto vp = validate_program(ex->program, kb);
  std::map<std::string, Plan> plans;
  auto plan_for = [&](const std::string& target) -> const Plan& {
    auto it = plans.find(target);
    if (it == plans.end()) it = plans.emplace(target, compile(vp, target, kb)).first;
    return it->second;
  };
  ex->predict = plan_for(config.target);
  ex->heads.push_back({config.target, ex->predict, supervised, 1.0});
  for (std::size_t i = 0; i < emissions.size(); ++i)
    ex->heads.push_back({emissions[i].head, plan_for(emissions[i].head), emissions[i].examples,
                         config.constraints[i].weight});
  for (auto& [pred, examples] : extra) {
    spdlog::info("{} example(s) on '{}' form their own loss head", examples.size(), pred);
    ex->heads.push_back({pred, plan_for(pred), std::move(examples), 1.0});
  }
  ex->initial = kb.parameters();
  return ex;
}

std::optional<Validation> Experiment::validation_spec() const {
  if (!validation || validation->size() == 0) return std::nullopt;
  return Validation{predict, *validation};
}

std::vector<double> Experiment::constraint_weights() const {
  std::vector<double> w;
  for (std::size_t i = 0; i < config.constraints.size(); ++i) w.push_back(heads.at(i + 1).weight);
  return w;
}

void Experiment::set_constraint_weights(std::span<const double> weights) {
  if (weights.size() != config.constraints.size())
    throw ConfigError("expected " + std::to_string(config.constraints.size()) + " constraint weights");
  for (std::size_t i = 0; i < weights.size(); ++i) {
    heads.at(i + 1).weight = weights[i];
    config.constraints[i].weight = weights[i];
  }
}

void Experiment::reset_parameters() { kb.set_parameters(initial); }

Metrics evaluate(const Experiment& ex) {
  Metrics m;
  if (ex.train_set.size() > 0) m["train_accuracy"] = evaluate_accuracy(ex.predict, ex.kb, ex.train_set);
  if (ex.validation && ex.validation->size() > 0)
    m["val_accuracy"] = evaluate_accuracy(ex.predict, ex.kb, *ex.validation);
  if (ex.test && ex.test->size() > 0) {
    m["test_accuracy"] = evaluate_accuracy(ex.predict, ex.kb, *ex.test);
    if (!ex.config.other_label.empty()) {
      const EntityId other = ex.kb.entity(ex.config.other_label);
      std::vector<MentionLabel> gold;
      for (std::size_t i = 0; i < ex.test->size(); ++i)
        if (ex.test->gold[i] != other) gold.emplace_back(ex.test->queries[i], ex.test->gold[i]);
      const auto r = evaluate_retrieval_f1(ex.predict, ex.kb, ex.test->queries, gold, other);
      m["precision"] = r.precision;
      m["recall"] = r.recall;
      m["f1"] = r.f1;
    }
  }
  return m;
}

void write_metrics(const Metrics& metrics, std::ostream& table, const std::string& csv_path) {
  table << std::left << std::setw(16) << "metric" << "value\n";
  for (const auto& [name, v] : metrics)
    table << std::left << std::setw(16) << name << std::fixed << std::setprecision(4) << v << '\n';
  table << std::defaultfloat;
  if (csv_path.empty()) return;
  std::ofstream out(csv_path);
  if (!out) throw IngestError("cannot write " + csv_path);
  out << "metric,value\n" << std::setprecision(17);
  for (const auto& [name, v] : metrics) out << name << ',' << v << '\n';
}

void save_checkpoint(const KnowledgeBase& kb, const std::string& path) {
  save_facts_tsv(kb, kb.trainable_relations(), path);
}

void restore_checkpoint(KnowledgeBase& kb, const std::string& path) {
  if (!kb.frozen()) throw ConfigError("checkpoints restore into a frozen knowledge base");
  std::ifstream in(path);
  if (!in) throw IngestError("cannot open checkpoint '" + path + "'");
  std::string line;
  int lineno = 0;
  auto fail = [&](const std::string& why) { throw IngestError(path + ":" + std::to_string(lineno) + ": " + why); };
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line.front() == '#') continue;
    std::vector<std::string> f;
    std::istringstream fields(line);
    for (std::string tok; std::getline(fields, tok, '\t');) f.push_back(tok);
    if (f.size() != 4) fail("expected relation, head, tail and weight");
    if (!kb.has_relation(f[0]) || !kb.relation(f[0]).trainable) fail("'" + f[0] + "' is not a trainable relation");
    const auto h = kb.find_entity(f[1]), t = kb.find_entity(f[2]);
    if (!h || !t) fail("unknown entity");
    char* end = nullptr;
    const double w = std::strtod(f[3].c_str(), &end);
    if (f[3].empty() || end != f[3].c_str() + f[3].size()) fail("bad weight '" + f[3] + "'");
    const SparseMatrix& m = kb.relation(f[0]).matrix;
    const int* begin = m.innerIndexPtr() + m.outerIndexPtr()[*h];
    const int* stop = m.innerIndexPtr() + m.outerIndexPtr()[*h + 1];
    const int* at = std::lower_bound(begin, stop, *t);
    if (at == stop || *at != *t) fail("fact outside the trainable support");
    kb.values(f[0])(at - m.innerIndexPtr()) = w;
  }
}

void write_manifest(const RunConfig& config, const std::string& command, std::span<const std::string> argv,
                    const std::string& path) {
  json m = {
      {"command", command},
      {"argv", std::vector<std::string>(argv.begin(), argv.end())},
      {"seed", config.seed},
      {"config", json::parse(config.to_json())},
      {"versions",
       {{"dce", "1.0.0"},
        {"eigen", std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) + "." +
                      std::to_string(EIGEN_MINOR_VERSION)},
        {"boost", BOOST_LIB_VERSION},
        {"compiler", __VERSION__},
        {"cplusplus", __cplusplus}}},
  };
  std::ofstream out(path);
  if (!out) throw IngestError("cannot write " + path);
  out << m.dump(2) << '\n';
}

TuneResult tune_weights(Experiment& ex) {
  const int d = static_cast<int>(ex.config.constraints.size());
  if (d == 0) throw ConfigError("tuning needs at least one constraint");
  const auto validation = ex.validation_spec();
  if (!validation) throw ConfigError("tuning needs a validation set");
  TuneSpace space = TuneSpace::box(d, ex.config.tune.lower, ex.config.tune.upper, ex.config.tune.budget, ex.config.seed);
  const Objective objective = [&](const Eigen::VectorXd& w) {
    ex.set_constraint_weights(std::span<const double>(w.data(), static_cast<std::size_t>(w.size())));
    ex.reset_parameters();
    const auto result = train(ex.kb, ex.heads, ex.config.train, validation);
    std::ostringstream point;
    for (Eigen::Index i = 0; i < w.size(); ++i) point << (i ? ", " : "") << w(i);
    spdlog::info("weights [{}] -> val accuracy {:.4f}", point.str(), result.best_val_accuracy);
    return -result.best_val_accuracy;
  };
  TuneOptions options;
  options.method = ex.config.tune.method;
  TuneResult r = tune(objective, space, options);
  ex.set_constraint_weights(std::span<const double>(r.best_point.data(), static_cast<std::size_t>(r.best_point.size())));
  ex.reset_parameters();
  return r;
}

}  // namespace dce
