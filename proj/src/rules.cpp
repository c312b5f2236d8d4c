#include "dce/rules.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <functional>
#include <sstream>

namespace dce {

bool Program::is_softmax(std::string_view predicate) const {
  return std::find(softmax.begin(), softmax.end(), predicate) != softmax.end();
}

std::optional<int> Program::depth_of(std::string_view predicate) const {
  for (const auto& d : maxdepth)
    if (d.predicate == predicate) return d.depth;
  return std::nullopt;
}

void Program::merge(const Program& other) {
  auto append_unique = [](auto& dst, const auto& src) {
    for (const auto& item : src)
      if (std::find(dst.begin(), dst.end(), item) == dst.end()) dst.push_back(item);
  };
  append_unique(rules, other.rules);
  append_unique(trainable, other.trainable);
  append_unique(builtins, other.builtins);
  append_unique(softmax, other.softmax);
  for (const auto& d : other.maxdepth) {
    auto it = std::find_if(maxdepth.begin(), maxdepth.end(),
                           [&](const MaxDepthDirective& m) { return m.predicate == d.predicate; });
    if (it == maxdepth.end())
      maxdepth.push_back(d);
    else if (it->depth != d.depth)
      throw ConfigError("conflicting #maxdepth for '" + d.predicate + "'");
  }
}

namespace {

bool is_ident_start(char c) { return std::isalpha(static_cast<unsigned char>(c)) || c == '_'; }
bool is_ident_char(char c) { return std::isalnum(static_cast<unsigned char>(c)) || c == '_'; }
bool is_variable(std::string_view name) {
  return !name.empty() && std::isupper(static_cast<unsigned char>(name.front()));
}

enum class Tok { Ident, LParen, RParen, Comma, Period, Implies, Directive, End };

struct Token {
  Tok kind;
  std::string text;
  int line;
  int column;
};

class Lexer {
 public:
  explicit Lexer(std::string_view text) : text_(text) {}

  Token next() {
    skip_blank();
    const int line = line_;
    const int column = column_;
    if (pos_ >= text_.size()) return {Tok::End, "", line, column};
    const char c = text_[pos_];
    if (c == '#') {
      std::string body;
      while (pos_ < text_.size() && text_[pos_] != '\n') body.push_back(advance());
      return {Tok::Directive, body, line, column};
    }
    if (is_ident_start(c)) {
      std::string ident;
      while (pos_ < text_.size() && is_ident_char(text_[pos_])) ident.push_back(advance());
      return {Tok::Ident, ident, line, column};
    }
    switch (c) {
      case '(': advance(); return {Tok::LParen, "(", line, column};
      case ')': advance(); return {Tok::RParen, ")", line, column};
      case ',': advance(); return {Tok::Comma, ",", line, column};
      case '.': advance(); return {Tok::Period, ".", line, column};
      case ':':
      case '<':
        if (pos_ + 1 < text_.size() && text_[pos_ + 1] == '-') {
          advance();
          advance();
          return {Tok::Implies, c == ':' ? ":-" : "<-", line, column};
        }
        break;
      default:
        break;
    }
    throw ParseError(std::string("unexpected character '") + c + "'", line, column);
  }

 private:
  char advance() {
    const char c = text_[pos_++];
    if (c == '\n') {
      ++line_;
      column_ = 1;
    } else {
      ++column_;
    }
    return c;
  }

  void skip_blank() {
    while (pos_ < text_.size()) {
      const char c = text_[pos_];
      if (c == '%') {
        while (pos_ < text_.size() && text_[pos_] != '\n') advance();
      } else if (std::isspace(static_cast<unsigned char>(c))) {
        advance();
      } else {
        break;
      }
    }
  }

  std::string_view text_;
  std::size_t pos_ = 0;
  int line_ = 1;
  int column_ = 1;
};

std::vector<std::string> split_words(std::string_view s) {
  std::vector<std::string> words;
  std::istringstream in{std::string(s)};
  std::string w;
  while (in >> w) words.push_back(w);
  return words;
}

class Parser {
 public:
  explicit Parser(std::string_view text) : lexer_(text) { bump(); }

  Program parse() {
    Program program;
    while (tok_.kind != Tok::End) {
      if (tok_.kind == Tok::Directive) {
        directive(program, tok_);
        bump();
      } else {
        program.rules.push_back(rule());
      }
    }
    return program;
  }

 private:
  void bump() { tok_ = lexer_.next(); }

  [[noreturn]] void fail(const std::string& what) const {
    throw ParseError(what + (tok_.kind == Tok::End ? " (found end of input)" : " (found '" + tok_.text + "')"),
                     tok_.line, tok_.column);
  }

  void expect(Tok kind, const char* what) {
    if (tok_.kind != kind) fail(std::string("expected ") + what);
    bump();
  }

  Atom atom() {
    if (tok_.kind != Tok::Ident) fail("expected predicate name");
    const Token start = tok_;
    Atom a;
    a.predicate = tok_.text;
    bump();
    expect(Tok::LParen, "'('");
    std::vector<Token> args;
    while (true) {
      if (tok_.kind != Tok::Ident) fail("expected argument");
      args.push_back(tok_);
      bump();
      if (tok_.kind == Tok::Comma) {
        bump();
        continue;
      }
      break;
    }
    expect(Tok::RParen, "')'");
    if (args.size() != 2)
      throw ArityError("predicate '" + a.predicate + "' used with " + std::to_string(args.size()) +
                           " arguments; only binary predicates are supported",
                       start.line, start.column);
    for (const auto& arg : args)
      if (!is_variable(arg.text))
        throw ParseError("argument '" + arg.text + "' must be a variable (uppercase initial)", arg.line,
                         arg.column);
    a.arg1 = args[0].text;
    a.arg2 = args[1].text;
    return a;
  }

  Rule rule() {
    Rule r;
    r.location = {tok_.line, tok_.column};
    r.head = atom();
    if (tok_.kind != Tok::Implies) fail("expected ':-' or '<-'");
    bump();
    r.body.push_back(atom());
    while (tok_.kind == Tok::Comma) {
      bump();
      r.body.push_back(atom());
    }
    expect(Tok::Period, "'.' ending the rule");
    return r;
  }

  static void directive(Program& program, const Token& tok) {
    const auto words = split_words(std::string_view(tok.text).substr(1));
    auto bad = [&](const std::string& what) -> ParseError { return ParseError(what, tok.line, tok.column); };
    if (words.empty()) throw bad("empty directive");
    const std::string& name = words[0];
    if (name == "trainable") {
      if (words.size() != 4 && words.size() != 5)
        throw bad("#trainable expects: relation head_domain tail_domain [init=...]");
      TrainableDirective d{words[1], words[2], words[3], {}};
      if (words.size() == 5) {
        if (!words[4].starts_with("init=")) throw bad("expected init=<zeros|uniform:s>");
        try {
          d.init = InitSpec::parse(std::string_view(words[4]).substr(5));
        } catch (const ConfigError& e) {
          throw bad(e.what());
        }
      }
      program.trainable.push_back(d);
    } else if (name == "builtin") {
      if (words.size() != 2) throw bad("#builtin expects one predicate name");
      program.builtins.push_back(words[1]);
    } else if (name == "softmax") {
      if (words.size() != 2) throw bad("#softmax expects one predicate name");
      program.softmax.push_back(words[1]);
    } else if (name == "maxdepth") {
      if (words.size() != 3) throw bad("#maxdepth expects: predicate depth");
      int depth = 0;
      const auto& w = words[2];
      auto [ptr, ec] = std::from_chars(w.data(), w.data() + w.size(), depth);
      if (ec != std::errc() || ptr != w.data() + w.size()) throw bad("#maxdepth depth must be an integer");
      if (program.depth_of(words[1])) throw bad("duplicate #maxdepth for '" + words[1] + "'");
      program.maxdepth.push_back({words[1], depth});
    } else {
      throw bad("unknown directive '#" + name + "'");
    }
  }

  Lexer lexer_;
  Token tok_{Tok::End, "", 0, 0};
};

}  // namespace

Program parse_program(std::string_view text) { return Parser(text).parse(); }

namespace {
std::string format_atom(const Atom& a) { return a.predicate + "(" + a.arg1 + "," + a.arg2 + ")"; }
}  // namespace

std::string format_rule(const Rule& rule) {
  std::string out = format_atom(rule.head) + " :- ";
  for (std::size_t i = 0; i < rule.body.size(); ++i) {
    if (i) out += ", ";
    out += format_atom(rule.body[i]);
  }
  return out + ".";
}

std::string format_program(const Program& program) {
  std::ostringstream out;
  for (const auto& d : program.trainable)
    out << "#trainable " << d.relation << ' ' << d.head_domain << ' ' << d.tail_domain
        << " init=" << d.init.to_string() << '\n';
  for (const auto& b : program.builtins) out << "#builtin " << b << '\n';
  for (const auto& s : program.softmax) out << "#softmax " << s << '\n';
  for (const auto& m : program.maxdepth) out << "#maxdepth " << m.predicate << ' ' << m.depth << '\n';
  for (const auto& r : program.rules) out << format_rule(r) << '\n';
  return out.str();
}

bool ValidatedProgram::same_component(std::string_view a, std::string_view b) const {
  auto ia = component.find(a);
  auto ib = component.find(b);
  return ia != component.end() && ib != component.end() && ia->second == ib->second;
}

bool ValidatedProgram::is_recursive_rule(const Rule& rule) const {
  if (!recursive.contains(rule.head.predicate)) return false;
  return std::any_of(rule.body.begin(), rule.body.end(),
                     [&](const Atom& a) { return same_component(a.predicate, rule.head.predicate); });
}

namespace {

std::string where(const Rule& r) {
  return " in rule '" + format_rule(r) + "' (line " + std::to_string(r.location.line) + ")";
}

void check_chain(const Rule& r) {
  std::vector<std::string> chain{r.head.arg1};
  std::string expected = r.head.arg1;
  for (const auto& atom : r.body) {
    if (atom.arg1 != expected)
      throw ChainError("variable '" + atom.arg1 + "' breaks the chain (expected '" + expected + "')" + where(r));
    if (std::find(chain.begin(), chain.end(), atom.arg2) != chain.end())
      throw ChainError("variable '" + atom.arg2 + "' repeats along the chain" + where(r));
    chain.push_back(atom.arg2);
    expected = atom.arg2;
  }
  if (expected != r.head.arg2)
    throw ChainError("variable '" + r.head.arg2 + "' of the head is not the end of the body chain" + where(r));
}

}  // namespace

ValidatedProgram validate_program(const Program& program, const KnowledgeBase& kb) {
  ValidatedProgram vp;
  vp.program = program;
  for (std::size_t i = 0; i < program.rules.size(); ++i)
    vp.rules_by_head[program.rules[i].head.predicate].push_back(i);

  auto is_builtin = [&](std::string_view p) { return p == kEntropyBuiltin; };
  for (const auto& b : program.builtins)
    if (!is_builtin(b)) throw UnknownPredicateError("unknown builtin '" + b + "'");

  for (const auto& r : program.rules) {
    if (is_builtin(r.head.predicate))
      throw BuiltinPositionError("builtin '" + r.head.predicate + "' cannot be a rule head" + where(r));
    check_chain(r);
    for (std::size_t i = 0; i < r.body.size(); ++i) {
      const auto& p = r.body[i].predicate;
      if (is_builtin(p)) {
        if (i + 1 != r.body.size())
          throw BuiltinPositionError("builtin '" + p + "' must be the final body atom" + where(r));
        continue;
      }
      if (!vp.is_derived(p) && !kb.has_relation(p))
        throw UnknownPredicateError("predicate '" + p + "' has no rules or facts" + where(r));
    }
  }
  for (const auto& s : program.softmax)
    if (!vp.is_derived(s) && !kb.has_relation(s))
      throw UnknownPredicateError("#softmax names unknown predicate '" + s + "'");
  for (const auto& m : program.maxdepth)
    if (!vp.is_derived(m.predicate))
      throw UnknownPredicateError("#maxdepth names predicate '" + m.predicate + "' that has no rules");

  // Tarjan's algorithm over the rule dependency graph.
  std::vector<std::string> nodes;
  std::map<std::string, int, std::less<>> index_of;
  for (const auto& [head, idx] : vp.rules_by_head) {
    index_of[head] = static_cast<int>(nodes.size());
    nodes.push_back(head);
  }
  std::vector<std::vector<int>> edges(nodes.size());
  std::vector<bool> self_loop(nodes.size(), false);
  for (const auto& r : program.rules) {
    const int from = index_of.at(r.head.predicate);
    for (const auto& a : r.body) {
      auto it = index_of.find(a.predicate);
      if (it == index_of.end()) continue;
      edges[from].push_back(it->second);
      if (it->second == from) self_loop[from] = true;
    }
  }
  const int n = static_cast<int>(nodes.size());
  std::vector<int> index(n, -1), low(n, 0), comp(n, -1), stack;
  std::vector<bool> on_stack(n, false);
  int counter = 0;
  int components = 0;
  std::function<void(int)> connect = [&](int v) {
    index[v] = low[v] = counter++;
    stack.push_back(v);
    on_stack[v] = true;
    for (int w : edges[v]) {
      if (index[w] < 0) {
        connect(w);
        low[v] = std::min(low[v], low[w]);
      } else if (on_stack[w]) {
        low[v] = std::min(low[v], index[w]);
      }
    }
    if (low[v] == index[v]) {
      while (true) {
        const int w = stack.back();
        stack.pop_back();
        on_stack[w] = false;
        comp[w] = components;
        if (w == v) break;
      }
      ++components;
    }
  };
  for (int v = 0; v < n; ++v)
    if (index[v] < 0) connect(v);
  std::vector<int> comp_size(components, 0);
  for (int v = 0; v < n; ++v) ++comp_size[comp[v]];
  for (int v = 0; v < n; ++v) {
    vp.component[nodes[v]] = comp[v];
    if (comp_size[comp[v]] > 1 || self_loop[v]) vp.recursive.insert(nodes[v]);
  }
  return vp;
}

void apply_directives(const Program& program, KnowledgeBase& kb, std::uint64_t seed) {
  std::uint64_t stream = 0;
  for (const auto& d : program.trainable) {
    InitSpec init = d.init;
    if (init.kind == InitSpec::Kind::Uniform && init.seed == 0) init.seed = seed * 1000003ULL + stream;
    ++stream;
    std::vector<EntityId> heads;
    std::vector<EntityId> tails;
    if (d.head_domain != "-") heads = kb.resolve_domain(d.head_domain);
    if (d.tail_domain != "-") tails = kb.resolve_domain(d.tail_domain);
    kb.declare_trainable(d.relation, heads, tails, init);
  }
  for (const auto& s : program.softmax)
    if (kb.has_relation(s)) kb.set_softmax_output(s, true);
}

}  // namespace dce
