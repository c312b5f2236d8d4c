#include "dce/data.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <random>
#include <set>
#include <sstream>
#include <unordered_map>

namespace dce {

namespace {

std::string where(const std::string& source, int line) { return source + ":" + std::to_string(line) + ": "; }

std::vector<std::string> split_ws(const std::string& line) {
  std::istringstream in(line);
  std::vector<std::string> out;
  for (std::string tok; in >> tok;) out.push_back(tok);
  return out;
}

bool parse_number(const std::string& text, double& value) {
  char* end = nullptr;
  value = std::strtod(text.c_str(), &end);
  return !text.empty() && end == text.c_str() + text.size() && std::isfinite(value);
}

/// L1-normalizes raw weights, dropping zeros.
std::vector<std::pair<std::string, double>> normalize(const std::map<std::string, double>& raw) {
  double total = 0.0;
  for (const auto& [name, w] : raw) total += std::abs(w);
  std::vector<std::pair<std::string, double>> out;
  if (total <= 0.0) return out;
  for (const auto& [name, w] : raw)
    if (w != 0.0) out.emplace_back(name, w / total);
  return out;
}

}  // namespace

DatasetBundle load_citation_streams(std::istream& content, std::istream& cites, const std::string& source) {
  DatasetBundle b;
  std::unordered_map<std::string, int> index;
  std::map<std::string, int> label_index;
  std::string line;
  int lineno = 0;
  std::size_t columns = 0;
  while (std::getline(content, line)) {
    ++lineno;
    const auto tok = split_ws(line);
    if (tok.empty()) continue;
    if (tok.size() < 2) throw IngestError(where(source, lineno) + "expected '<doc> <features...> <label>'");
    if (columns == 0) columns = tok.size();
    if (tok.size() != columns)
      throw IngestError(where(source, lineno) + "expected " + std::to_string(columns) + " columns, found " +
                        std::to_string(tok.size()));
    std::map<std::string, double> raw;
    for (std::size_t c = 1; c + 1 < tok.size(); ++c) {
      double v;
      if (!parse_number(tok[c], v)) throw IngestError(where(source, lineno) + "bad feature value '" + tok[c] + "'");
      if (v != 0.0) raw["w" + std::to_string(c - 1)] = v;
    }
    if (index.contains(tok.front())) throw IngestError(where(source, lineno) + "duplicate document '" + tok.front() + "'");
    auto feats = normalize(raw);
    if (feats.empty()) {
      spdlog::warn("{}document '{}' has no features; dropped", where(source, lineno), tok.front());
      ++b.dropped_docs;
      continue;
    }
    const std::string& label = tok.back();
    auto [it, fresh] = label_index.try_emplace(label, static_cast<int>(label_index.size()));
    (void)fresh;
    index.emplace(tok.front(), static_cast<int>(b.docs.size()));
    b.docs.push_back(tok.front());
    b.labels.push_back(it->second);
    b.features.push_back(std::move(feats));
  }
  // labels in order of first appearance
  b.label_names.resize(label_index.size());
  for (const auto& [name, id] : label_index) b.label_names[id] = name;

  std::set<std::pair<int, int>> edges;
  lineno = 0;
  while (std::getline(cites, line)) {
    ++lineno;
    const auto tok = split_ws(line);
    if (tok.empty()) continue;
    if (tok.size() != 2) throw IngestError(where(source, lineno) + "expected '<cited> <citing>'");
    const auto a = index.find(tok[0]), c = index.find(tok[1]);
    if (a == index.end() || c == index.end()) {
      ++b.dropped_citations;
      continue;
    }
    if (a->second == c->second) continue;
    edges.emplace(std::min(a->second, c->second), std::max(a->second, c->second));
  }
  if (b.dropped_citations > 0) spdlog::warn("{}: {} citation(s) name unknown documents", source, b.dropped_citations);
  b.edges.assign(edges.begin(), edges.end());
  return b;
}

DatasetBundle load_citation_dataset(const std::string& content_path, const std::string& cites_path) {
  std::ifstream content(content_path);
  if (!content) throw IngestError("cannot open content file '" + content_path + "'");
  std::ifstream cites(cites_path);
  if (!cites) throw IngestError("cannot open cites file '" + cites_path + "'");
  return load_citation_streams(content, cites, content_path);
}

DatasetBundle make_split(DatasetBundle b, int per_class_train, int test_n, double val_fraction, std::uint64_t seed) {
  if (per_class_train < 1 || test_n < 0 || !(val_fraction >= 0.0 && val_fraction < 1.0))
    throw ConfigError("split needs per_class_train >= 1, test_n >= 0 and 0 <= val_fraction < 1");
  std::mt19937_64 rng(seed);
  std::vector<int> order(b.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
  std::shuffle(order.begin(), order.end(), rng);

  b.train.clear();
  b.validation.clear();
  b.test.clear();
  b.unlabeled.clear();
  std::vector<bool> taken(b.size(), false);
  const int held = std::min(per_class_train - 1, static_cast<int>(std::lround(per_class_train * val_fraction)));
  for (int cls = 0; cls < static_cast<int>(b.label_names.size()); ++cls) {
    int drawn = 0;
    for (int d : order) {
      if (drawn == per_class_train) break;
      if (b.labels[d] != cls) continue;
      (drawn < held ? b.validation : b.train).push_back(d);
      taken[d] = true;
      ++drawn;
    }
    if (drawn < per_class_train)
      throw SplitError("class '" + b.label_names[cls] + "' has " + std::to_string(drawn) + " documents, need " +
                       std::to_string(per_class_train));
  }
  for (int d : order) {
    if (taken[d]) continue;
    (static_cast<int>(b.test.size()) < test_n ? b.test : b.unlabeled).push_back(d);
  }
  if (static_cast<int>(b.test.size()) < test_n)
    throw SplitError("only " + std::to_string(b.test.size()) + " documents left for a test set of " +
                     std::to_string(test_n));
  return b;
}

DatasetBundle generate_synthetic(const SyntheticConfig& c) {
  if (c.classes < 2 || c.vocab_per_class < 1 || c.docs < 1 || c.tokens_per_doc < 1 || c.shared_vocab < 1 ||
      !(c.ambiguity >= 0.0 && c.ambiguity <= 1.0) || !(c.homophily >= 0.0 && c.homophily <= 1.0) ||
      !(c.avg_degree >= 0.0))
    throw ConfigError("synthetic generator parameters out of range");
  std::mt19937_64 rng(c.seed);
  std::bernoulli_distribution shared(c.ambiguity), same(c.homophily);
  DatasetBundle b;
  for (int k = 0; k < c.classes; ++k) b.label_names.push_back("class" + std::to_string(k));
  std::vector<std::vector<int>> members(c.classes);
  for (int i = 0; i < c.docs; ++i) {
    const int cls = i % c.classes;
    b.docs.push_back("doc" + std::to_string(i));
    b.labels.push_back(cls);
    members[cls].push_back(i);
    std::map<std::string, double> counts;
    for (int t = 0; t < c.tokens_per_doc; ++t) {
      if (shared(rng))
        counts["amb" + std::to_string(rng() % c.shared_vocab)] += 1.0;
      else
        counts["tok" + std::to_string(cls) + "_" + std::to_string(rng() % c.vocab_per_class)] += 1.0;
    }
    b.features.push_back(normalize(counts));
  }

  std::set<std::pair<int, int>> edges;
  const auto target = static_cast<std::size_t>(std::lround(c.docs * c.avg_degree / 2.0));
  std::size_t attempts = 0;
  while (edges.size() < target && attempts++ < 50 * target + 100) {
    const int a = static_cast<int>(rng() % c.docs);
    const int ca = b.labels[a];
    int cb = ca;
    if (!same(rng)) cb = (ca + 1 + static_cast<int>(rng() % (c.classes - 1))) % c.classes;
    const auto& pool = members[cb];
    if (pool.empty()) continue;
    const int other = pool[rng() % pool.size()];
    if (other == a) continue;
    edges.emplace(std::min(a, other), std::max(a, other));
  }
  b.edges.assign(edges.begin(), edges.end());
  return b;
}

void populate_kb(const DatasetBundle& b, KnowledgeBase& kb) {
  std::vector<EntityId> docs, labels;
  std::set<EntityId> feats;
  for (const auto& name : b.label_names) labels.push_back(kb.intern(name));
  for (std::size_t i = 0; i < b.size(); ++i) {
    const EntityId d = kb.intern(b.docs[i]);
    docs.push_back(d);
    for (const auto& [f, w] : b.features[i]) {
      const EntityId fid = kb.intern(f);
      feats.insert(fid);
      kb.add_fact("hasFeature", d, fid, w);
    }
    kb.add_fact("near", d, d, 1.0);
  }
  for (const auto& [x, y] : b.edges) {
    kb.add_fact("near", docs[x], docs[y], 1.0);
    kb.add_fact("near", docs[y], docs[x], 1.0);
  }
  kb.define_domain("docs", docs);
  kb.define_domain("features", {feats.begin(), feats.end()});
  kb.define_domain("labels", labels);
}

std::vector<EntityId> doc_ids(const DatasetBundle& b, const KnowledgeBase& kb, const std::vector<int>& indices) {
  std::vector<EntityId> out;
  out.reserve(indices.size());
  for (int i : indices) out.push_back(kb.entity(b.docs.at(static_cast<std::size_t>(i))));
  return out;
}

LabeledSet labeled_set(const DatasetBundle& b, const KnowledgeBase& kb, const std::vector<int>& indices) {
  LabeledSet s{doc_ids(b, kb, indices), {}};
  for (int i : indices) s.gold.push_back(kb.entity(b.label_names[b.labels.at(static_cast<std::size_t>(i))]));
  return s;
}

std::vector<TrainingExample> load_examples_stream(std::istream& in, KnowledgeBase& kb, const std::string& source) {
  std::vector<TrainingExample> out;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line.front() == '#') continue;
    std::vector<std::string> fields;
    std::size_t start = 0;
    for (std::size_t tab; (tab = line.find('\t', start)) != std::string::npos; start = tab + 1)
      fields.push_back(line.substr(start, tab - start));
    fields.push_back(line.substr(start));
    if (fields.size() != 3 || fields[0].empty() || fields[1].empty() || fields[2].empty())
      throw IngestError(where(source, lineno) + "expected 'predicate<TAB>query<TAB>target'");
    out.push_back({fields[0], kb.intern(fields[1]), kb.intern(fields[2])});
  }
  return out;
}

std::vector<TrainingExample> load_examples_tsv(const std::string& path, KnowledgeBase& kb) {
  std::ifstream in(path);
  if (!in) throw IngestError("cannot open examples file '" + path + "'");
  return load_examples_stream(in, kb, path);
}

}  // namespace dce
