#include "dce/kb.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <iomanip>
#include <random>
#include <set>
#include <sstream>

namespace dce {

SymbolTable::SymbolTable() {
  intern("high");
  intern("low");
}

EntityId SymbolTable::intern(std::string_view name) {
  auto it = ids_.find(std::string(name));
  if (it != ids_.end()) return it->second;
  const EntityId id = static_cast<EntityId>(names_.size());
  names_.emplace_back(name);
  ids_.emplace(names_.back(), id);
  return id;
}

std::optional<EntityId> SymbolTable::find(std::string_view name) const {
  auto it = ids_.find(std::string(name));
  if (it == ids_.end()) return std::nullopt;
  return it->second;
}

const std::string& SymbolTable::name(EntityId id) const {
  if (id < 0 || id >= size()) throw IndexError("entity id " + std::to_string(id) + " out of range");
  return names_[static_cast<std::size_t>(id)];
}

InitSpec InitSpec::parse(std::string_view text) {
  InitSpec spec;
  if (text == "zeros") return spec;
  constexpr std::string_view prefix = "uniform:";
  if (text.starts_with(prefix)) {
    const std::string number(text.substr(prefix.size()));
    try {
      std::size_t used = 0;
      spec.scale = std::stod(number, &used);
      if (used != number.size()) throw std::invalid_argument(number);
    } catch (const std::exception&) {
      throw ConfigError("bad uniform init scale '" + number + "'");
    }
    if (!(spec.scale >= 0.0)) throw ConfigError("uniform init scale must be >= 0");
    spec.kind = Kind::Uniform;
    return spec;
  }
  throw ConfigError("unknown init spec '" + std::string(text) + "'");
}

std::string InitSpec::to_string() const {
  if (kind == Kind::Zeros) return "zeros";
  std::ostringstream out;
  out << "uniform:" << std::setprecision(17) << scale;
  return out.str();
}

void KnowledgeBase::require_mutable(const char* what) const {
  if (frozen_) throw FrozenError(std::string(what) + " on a frozen knowledge base");
}

EntityId KnowledgeBase::intern(std::string_view name) {
  if (auto id = symbols_.find(name)) return *id;
  require_mutable("interning a new symbol");
  return symbols_.intern(name);
}

EntityId KnowledgeBase::entity(std::string_view name) const {
  if (auto id = symbols_.find(name)) return *id;
  throw UnknownSymbolError("unknown entity '" + std::string(name) + "'");
}

const std::string& KnowledgeBase::entity_name(EntityId id) const { return symbols_.name(id); }

KnowledgeBase::Entry& KnowledgeBase::entry_for_write(std::string_view name) {
  auto it = relations_.find(name);
  if (it == relations_.end()) {
    require_mutable("creating a relation");
    it = relations_.emplace(std::string(name), Entry{}).first;
    it->second.relation.name = std::string(name);
  }
  return it->second;
}

const KnowledgeBase::Entry& KnowledgeBase::entry(std::string_view name) const {
  auto it = relations_.find(name);
  if (it == relations_.end()) throw UnknownSymbolError("unknown relation '" + std::string(name) + "'");
  return it->second;
}

void KnowledgeBase::declare_relation(std::string_view relation) { entry_for_write(relation); }

void KnowledgeBase::add_fact(std::string_view relation, EntityId head, EntityId tail, double weight) {
  require_mutable("add_fact");
  if (head < 0 || head >= entity_count() || tail < 0 || tail >= entity_count())
    throw IndexError("fact " + std::string(relation) + " references an unknown entity id");
  Entry& e = entry_for_write(relation);
  if (e.relation.nonneg_required() && !(weight >= 0.0))
    throw WeightDomainError("negative weight on non-trainable relation '" + std::string(relation) + "'");
  e.staged[{head, tail}] = weight;
}

void KnowledgeBase::add_fact(std::string_view relation, std::string_view head, std::string_view tail,
                             double weight) {
  require_mutable("add_fact");
  add_fact(relation, intern(head), intern(tail), weight);
}

void KnowledgeBase::declare_trainable(std::string_view relation, std::span<const EntityId> head_domain,
                                      std::span<const EntityId> tail_domain, const InitSpec& init) {
  require_mutable("declare_trainable");
  for (auto span : {head_domain, tail_domain})
    for (EntityId id : span)
      if (id < 0 || id >= entity_count())
        throw UnknownSymbolError("trainable domain of '" + std::string(relation) +
                                 "' contains unknown entity id " + std::to_string(id));
  Entry& e = entry_for_write(relation);
  e.relation.trainable = true;
  std::mt19937_64 rng(init.seed);
  std::uniform_real_distribution<double> uniform(-init.scale, init.scale);
  for (EntityId h : head_domain)
    for (EntityId t : tail_domain)
      e.staged[{h, t}] = init.kind == InitSpec::Kind::Zeros ? 0.0 : uniform(rng);
}

void KnowledgeBase::define_domain(std::string_view name, std::vector<EntityId> members) {
  std::sort(members.begin(), members.end());
  members.erase(std::unique(members.begin(), members.end()), members.end());
  domains_[std::string(name)] = std::move(members);
}

bool KnowledgeBase::has_domain(std::string_view name) const { return domains_.contains(name); }

const std::vector<EntityId>& KnowledgeBase::domain(std::string_view name) const {
  auto it = domains_.find(name);
  if (it == domains_.end()) throw UnknownSymbolError("unknown domain '" + std::string(name) + "'");
  return it->second;
}

std::vector<EntityId> KnowledgeBase::resolve_domain(std::string_view expr) const {
  if (auto it = domains_.find(expr); it != domains_.end()) return it->second;
  const auto dot = expr.rfind('.');
  if (dot != std::string_view::npos) {
    const auto rel = expr.substr(0, dot);
    const auto side = expr.substr(dot + 1);
    if ((side == "head" || side == "tail") && has_relation(rel)) {
      std::set<EntityId> ids;
      for (const auto& f : facts(rel)) ids.insert(side == "head" ? f.head : f.tail);
      return {ids.begin(), ids.end()};
    }
  }
  throw UnknownSymbolError("cannot resolve domain '" + std::string(expr) + "'");
}

void KnowledgeBase::freeze() {
  if (frozen_) return;
  const int n = entity_count();
  for (auto& [name, e] : relations_) {
    std::vector<Eigen::Triplet<double, int>> triplets;
    std::vector<Eigen::Triplet<double, int>> ones;
    triplets.reserve(e.staged.size());
    ones.reserve(e.staged.size());
    for (const auto& [key, w] : e.staged) {
      if (e.relation.nonneg_required() && !(w >= 0.0))
        throw WeightDomainError("negative weight on non-trainable relation '" + name + "'");
      triplets.emplace_back(key.first, key.second, w);
      ones.emplace_back(key.first, key.second, 1.0);
    }
    e.relation.matrix.resize(n, n);
    e.relation.matrix.setFromTriplets(triplets.begin(), triplets.end());
    e.relation.matrix.makeCompressed();
    e.pattern.resize(n, n);
    e.pattern.setFromTriplets(ones.begin(), ones.end());
    e.pattern.makeCompressed();
    e.staged.clear();
  }
  frozen_ = true;
}

bool KnowledgeBase::has_relation(std::string_view name) const { return relations_.contains(name); }

const Relation& KnowledgeBase::relation(std::string_view name) const { return entry(name).relation; }

const SparseMatrix& KnowledgeBase::pattern(std::string_view name) const {
  if (!frozen_) throw FrozenError("relation patterns exist only after freeze");
  return entry(name).pattern;
}

std::vector<std::string> KnowledgeBase::relation_names() const {
  std::vector<std::string> out;
  for (const auto& [name, e] : relations_) out.push_back(name);
  return out;
}

std::vector<std::string> KnowledgeBase::trainable_relations() const {
  std::vector<std::string> out;
  for (const auto& [name, e] : relations_)
    if (e.relation.trainable) out.push_back(name);
  return out;
}

void KnowledgeBase::set_softmax_output(std::string_view relation, bool flag) {
  auto it = relations_.find(relation);
  if (it == relations_.end()) throw UnknownSymbolError("unknown relation '" + std::string(relation) + "'");
  it->second.relation.softmax_output = flag;
}

std::optional<double> KnowledgeBase::weight(std::string_view relation, EntityId head, EntityId tail) const {
  const Entry& e = entry(relation);
  if (!frozen_) {
    auto it = e.staged.find({head, tail});
    if (it == e.staged.end()) return std::nullopt;
    return it->second;
  }
  if (head < 0 || head >= entity_count() || tail < 0 || tail >= entity_count()) return std::nullopt;
  for (SparseMatrix::InnerIterator it(e.relation.matrix, head); it; ++it)
    if (it.col() == tail) return it.value();
  return std::nullopt;
}

std::vector<FactRef> KnowledgeBase::facts(std::string_view relation) const {
  const Entry& e = entry(relation);
  std::vector<FactRef> out;
  if (!frozen_) {
    for (const auto& [key, w] : e.staged) out.push_back({e.relation.name, key.first, key.second, w});
    return out;
  }
  const SparseMatrix& m = e.relation.matrix;
  for (int row = 0; row < m.outerSize(); ++row)
    for (SparseMatrix::InnerIterator it(m, row); it; ++it)
      out.push_back({e.relation.name, row, static_cast<EntityId>(it.col()), it.value()});
  return out;
}

Eigen::RowVectorXd KnowledgeBase::onehot(EntityId e) const {
  if (e < 0 || e >= entity_count()) throw IndexError("entity id " + std::to_string(e) + " out of range");
  Eigen::RowVectorXd v = Eigen::RowVectorXd::Zero(entity_count());
  v(e) = 1.0;
  return v;
}

std::size_t KnowledgeBase::parameter_count() const {
  std::size_t count = 0;
  for (const auto& [name, e] : relations_) {
    if (!e.relation.trainable) continue;
    count += frozen_ ? static_cast<std::size_t>(e.relation.matrix.nonZeros()) : e.staged.size();
  }
  return count;
}

ParameterSnapshot KnowledgeBase::parameters() const {
  if (!frozen_) throw FrozenError("parameters are defined only after freeze");
  ParameterSnapshot snapshot;
  for (const auto& [name, e] : relations_) {
    if (!e.relation.trainable) continue;
    const auto& m = e.relation.matrix;
    snapshot[name] = Eigen::Map<const Eigen::VectorXd>(m.valuePtr(), m.nonZeros());
  }
  return snapshot;
}

void KnowledgeBase::set_parameters(const ParameterSnapshot& snapshot) {
  for (const auto& [name, v] : snapshot) {
    auto dst = values(name);
    if (dst.size() != v.size())
      throw ConfigError("parameter snapshot for '" + name + "' has the wrong size");
    dst = v;
  }
}

Eigen::Map<Eigen::VectorXd> KnowledgeBase::values(std::string_view relation) {
  if (!frozen_) throw FrozenError("parameter values are defined only after freeze");
  auto it = relations_.find(relation);
  if (it == relations_.end()) throw UnknownSymbolError("unknown relation '" + std::string(relation) + "'");
  if (!it->second.relation.trainable)
    throw ConfigError("relation '" + std::string(relation) + "' is not trainable");
  auto& m = it->second.relation.matrix;
  return {m.valuePtr(), m.nonZeros()};
}

namespace {

std::vector<std::string_view> split_tabs(std::string_view line) {
  std::vector<std::string_view> fields;
  std::size_t start = 0;
  while (true) {
    const auto pos = line.find('\t', start);
    fields.push_back(line.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return fields;
}

}  // namespace

void load_facts_tsv_stream(KnowledgeBase& kb, std::istream& in, const std::string& source) {
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line.front() == '#') continue;
    const auto fields = split_tabs(line);
    if (fields.size() != 3 && fields.size() != 4)
      throw IngestError(source + ":" + std::to_string(lineno) + ": expected 3 or 4 tab-separated fields");
    double w = 1.0;
    if (fields.size() == 4) {
      const std::string text(fields[3]);
      char* end = nullptr;
      w = std::strtod(text.c_str(), &end);
      if (text.empty() || end != text.c_str() + text.size())
        throw IngestError(source + ":" + std::to_string(lineno) + ": bad weight '" + text + "'");
    }
    if (fields[0].empty() || fields[1].empty() || fields[2].empty())
      throw IngestError(source + ":" + std::to_string(lineno) + ": empty field");
    kb.add_fact(fields[0], fields[1], fields[2], w);
  }
}

void load_facts_tsv(KnowledgeBase& kb, const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IngestError("cannot open facts file '" + path + "'");
  load_facts_tsv_stream(kb, in, path);
}

void save_facts_tsv(const KnowledgeBase& kb, const std::vector<std::string>& relations,
                    const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IngestError("cannot write facts file '" + path + "'");
  out << std::setprecision(17);
  for (const auto& rel : relations)
    for (const auto& f : kb.facts(rel))
      out << rel << '\t' << kb.entity_name(f.head) << '\t' << kb.entity_name(f.tail) << '\t' << f.weight
          << '\n';
}

}  // namespace dce
