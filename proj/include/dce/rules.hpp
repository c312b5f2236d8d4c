#pragma once

#include <map>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "dce/kb.hpp"

namespace dce {

/// Name of the algorithmically defined entropy predicate.
inline constexpr std::string_view kEntropyBuiltin = "entropy";

struct Atom {
  std::string predicate;
  std::string arg1;
  std::string arg2;

  bool operator==(const Atom&) const = default;
};

struct SourceLocation {
  int line = 0;
  int column = 0;
};

struct Rule {
  Atom head;
  std::vector<Atom> body;
  SourceLocation location;  // not part of structural equality

  bool operator==(const Rule& other) const { return head == other.head && body == other.body; }
};

struct TrainableDirective {
  std::string relation;
  std::string head_domain;
  std::string tail_domain;
  InitSpec init;

  bool operator==(const TrainableDirective& other) const {
    return relation == other.relation && head_domain == other.head_domain &&
           tail_domain == other.tail_domain && init.to_string() == other.init.to_string();
  }
};

struct MaxDepthDirective {
  std::string predicate;
  int depth = 0;

  bool operator==(const MaxDepthDirective&) const = default;
};

struct Program {
  std::vector<Rule> rules;
  std::vector<TrainableDirective> trainable;
  std::vector<std::string> builtins;
  std::vector<std::string> softmax;
  std::vector<MaxDepthDirective> maxdepth;

  bool operator==(const Program&) const = default;

  bool is_softmax(std::string_view predicate) const;
  std::optional<int> depth_of(std::string_view predicate) const;

  /// Appends rules and directives not already present.
  void merge(const Program& other);
};

Program parse_program(std::string_view text);
std::string format_program(const Program& program);
std::string format_rule(const Rule& rule);

/// A program checked against a knowledge base, with its recursion structure.
struct ValidatedProgram {
  Program program;
  /// Rule indices per head predicate, in program order.
  std::map<std::string, std::vector<std::size_t>, std::less<>> rules_by_head;
  /// Strongly connected component id for each rule-defined predicate.
  std::map<std::string, int, std::less<>> component;
  /// Predicates that can reach themselves through rule bodies.
  std::set<std::string, std::less<>> recursive;

  bool is_derived(std::string_view predicate) const { return rules_by_head.contains(predicate); }
  bool same_component(std::string_view a, std::string_view b) const;
  /// True when some body atom of the rule lies in the head's recursive component.
  bool is_recursive_rule(const Rule& rule) const;
};

ValidatedProgram validate_program(const Program& program, const KnowledgeBase& kb);

/// Applies #trainable and #softmax directives to an unfrozen knowledge base.
/// Uniform initializations draw from `seed` when the directive carries none.
void apply_directives(const Program& program, KnowledgeBase& kb, std::uint64_t seed = 0);

}  // namespace dce
