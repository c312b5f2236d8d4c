#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

#include "dce/kb.hpp"
#include "dce/trainer.hpp"

namespace dce {

/// A labeled document graph plus its split. Documents, labels and edges are
/// indices into the bundle's own tables; populate_kb turns them into facts.
struct DatasetBundle {
  std::vector<std::string> docs;
  std::vector<std::string> label_names;
  std::vector<int> labels;  // class index per document
  /// (feature name, weight) per document, weights L1-normalized.
  std::vector<std::vector<std::pair<std::string, double>>> features;
  std::vector<std::pair<int, int>> edges;  // undirected, a < b, no self loops

  std::vector<int> train, validation, test, unlabeled;

  std::size_t dropped_docs = 0;
  std::size_t dropped_citations = 0;

  std::size_t size() const { return docs.size(); }
};

/// LINQS-style files: content lines `<doc> <f1 ... fk> <label>`, cites lines
/// `<cited> <citing>`. Feature columns become features `w<column>`.
DatasetBundle load_citation_dataset(const std::string& content_path, const std::string& cites_path);
DatasetBundle load_citation_streams(std::istream& content, std::istream& cites, const std::string& source = "input");

/// Seeded stratified split: per_class_train per class (of which a val_fraction
/// share per class is held out for validation), then test_n more, the rest unlabeled.
DatasetBundle make_split(DatasetBundle bundle, int per_class_train, int test_n, double val_fraction,
                         std::uint64_t seed);

struct SyntheticConfig {
  int classes = 2;
  int vocab_per_class = 60;
  double ambiguity = 0.6;  // chance that a token comes from the shared vocabulary
  int docs = 1000;
  double homophily = 0.9;  // chance that an edge joins two documents of the same class
  std::uint64_t seed = 0;
  int tokens_per_doc = 10;
  /// Large enough that each shared token touches few documents; a small shared
  /// vocabulary lets entropy terms collapse every prediction onto one class.
  int shared_vocab = 1000;
  double avg_degree = 4.0;
};

/// Fully labeled synthetic corpus, unsplit.
DatasetBundle generate_synthetic(const SyntheticConfig& config);

/// Facts hasFeature(doc, feature, w), near(a,b) = near(b,a) = 1 per edge and
/// near(d,d) = 1; domains "docs", "features" and "labels".
void populate_kb(const DatasetBundle& bundle, KnowledgeBase& kb);

/// Entity ids of the documents at `indices`.
std::vector<EntityId> doc_ids(const DatasetBundle& bundle, const KnowledgeBase& kb, const std::vector<int>& indices);
/// Queries and gold labels of the documents at `indices`.
LabeledSet labeled_set(const DatasetBundle& bundle, const KnowledgeBase& kb, const std::vector<int>& indices);

/// `predicate<TAB>query<TAB>target` lines; entities interned on read.
std::vector<TrainingExample> load_examples_tsv(const std::string& path, KnowledgeBase& kb);
std::vector<TrainingExample> load_examples_stream(std::istream& in, KnowledgeBase& kb, const std::string& source);

}  // namespace dce
