#pragma once

#include <Eigen/Core>
#include <Eigen/SparseCore>

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "dce/errors.hpp"

namespace dce {

using EntityId = int;
using SparseMatrix = Eigen::SparseMatrix<double, Eigen::RowMajor, int>;

/// Reserved entities produced by the entropy builtin.
inline constexpr EntityId kHigh = 0;
inline constexpr EntityId kLow = 1;

/// Bidirectional name <-> dense id map. "high" and "low" are always ids 0 and 1.
class SymbolTable {
 public:
  SymbolTable();

  EntityId intern(std::string_view name);
  std::optional<EntityId> find(std::string_view name) const;
  const std::string& name(EntityId id) const;
  int size() const { return static_cast<int>(names_.size()); }

 private:
  std::vector<std::string> names_;
  std::unordered_map<std::string, EntityId> ids_;
};

/// Initialization of a trainable dense block.
struct InitSpec {
  enum class Kind { Zeros, Uniform };
  Kind kind = Kind::Zeros;
  double scale = 0.0;
  std::uint64_t seed = 0;

  /// Accepts "zeros" or "uniform:<s>".
  static InitSpec parse(std::string_view text);
  std::string to_string() const;
};

struct Relation {
  std::string name;
  SparseMatrix matrix;  // entity x entity, valid once the KB is frozen
  bool trainable = false;
  bool softmax_output = false;

  bool nonneg_required() const { return !trainable; }
};

/// Per trainable relation, the values array of its matrix in storage order.
using ParameterSnapshot = std::map<std::string, Eigen::VectorXd>;

struct FactRef {
  std::string relation;
  EntityId head;
  EntityId tail;
  double weight;
};

/// Symbol tables plus one weighted sparse matrix per relation.
///
/// Facts accumulate during a build phase. freeze() fixes the entity count and
/// every relation's sparsity pattern; afterwards only trainable values change.
class KnowledgeBase {
 public:
  KnowledgeBase() = default;

  EntityId intern(std::string_view name);
  EntityId entity(std::string_view name) const;  // throws UnknownSymbolError
  std::optional<EntityId> find_entity(std::string_view name) const { return symbols_.find(name); }
  const std::string& entity_name(EntityId id) const;
  int entity_count() const { return symbols_.size(); }
  const SymbolTable& symbols() const { return symbols_; }

  void add_fact(std::string_view relation, EntityId head, EntityId tail, double weight = 1.0);
  void add_fact(std::string_view relation, std::string_view head, std::string_view tail,
                double weight = 1.0);

  /// Marks `relation` trainable and materializes head_domain x tail_domain with
  /// initial weights. Empty domains only set the flag.
  void declare_trainable(std::string_view relation, std::span<const EntityId> head_domain,
                         std::span<const EntityId> tail_domain, const InitSpec& init);

  /// Creates the relation with no facts if it does not exist.
  void declare_relation(std::string_view relation);

  void define_domain(std::string_view name, std::vector<EntityId> members);
  bool has_domain(std::string_view name) const;
  const std::vector<EntityId>& domain(std::string_view name) const;

  /// Resolves "rel.head", "rel.tail" or a named domain to a sorted id list.
  std::vector<EntityId> resolve_domain(std::string_view expr) const;

  void freeze();
  bool frozen() const { return frozen_; }

  bool has_relation(std::string_view name) const;
  const Relation& relation(std::string_view name) const;
  /// Same sparsity as relation(name).matrix with every stored value set to 1.
  const SparseMatrix& pattern(std::string_view name) const;
  std::vector<std::string> relation_names() const;
  std::vector<std::string> trainable_relations() const;
  void set_softmax_output(std::string_view relation, bool flag);

  /// Stored weight, or nullopt when (head, tail) is outside the support.
  std::optional<double> weight(std::string_view relation, EntityId head, EntityId tail) const;
  std::vector<FactRef> facts(std::string_view relation) const;

  Eigen::RowVectorXd onehot(EntityId e) const;

  std::size_t parameter_count() const;
  ParameterSnapshot parameters() const;
  void set_parameters(const ParameterSnapshot& snapshot);
  /// Writable view over a frozen trainable relation's stored values.
  Eigen::Map<Eigen::VectorXd> values(std::string_view relation);

 private:
  struct Entry {
    Relation relation;
    std::map<std::pair<EntityId, EntityId>, double> staged;
    SparseMatrix pattern;
  };

  Entry& entry_for_write(std::string_view name);
  const Entry& entry(std::string_view name) const;
  void require_mutable(const char* what) const;

  SymbolTable symbols_;
  std::map<std::string, Entry, std::less<>> relations_;
  std::map<std::string, std::vector<EntityId>, std::less<>> domains_;
  bool frozen_ = false;
};

/// Facts file: `relation<TAB>head<TAB>tail[<TAB>weight]`, `#` comments.
void load_facts_tsv(KnowledgeBase& kb, const std::string& path);
void load_facts_tsv_stream(KnowledgeBase& kb, std::istream& in, const std::string& source);
/// Writes facts of the given relations with round-trip precision.
void save_facts_tsv(const KnowledgeBase& kb, const std::vector<std::string>& relations,
                    const std::string& path);

}  // namespace dce
