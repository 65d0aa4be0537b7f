#pragma once

// The knowledge-base language: a Datalog dialect with body disjunction,
// 'OR' argument sets, optional temporal arguments and per-predicate
// natural-language templates.
//
//   % comment
//   #pred On/2 "{A} is on {B}".
//   @id("§2.25a") @law("Danish traffic law §2.25")
//   RoadUser(P, T) <- On(P, R, T), Road(R, T).
//   Road(road1).
//
// Precedence, loosest first: ',' then '\/' then '/\'. Both ',' and '/\'
// are conjunction. '(' ')' and '[' ']' group.

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "lexrules/logic.hpp"

namespace lexrules {

struct SourcePos {
  std::size_t line = 0;
  std::size_t column = 0;
};

class ParseError : public Error {
 public:
  ParseError(SourcePos pos, const std::string& message)
      : Error("line " + std::to_string(pos.line) + ", column " +
              std::to_string(pos.column) + ": " + message),
        pos_(pos),
        detail_(message) {}

  SourcePos pos() const { return pos_; }
  const std::string& detail() const { return detail_; }

 private:
  SourcePos pos_;
  std::string detail_;
};

class ExpansionLimitError : public Error {
 public:
  using Error::Error;
};

class ArityError : public Error {
 public:
  using Error::Error;
};

/// Default cap on pure rules produced from one extended rule.
inline constexpr std::size_t kDefaultExpansionCap = 10'000;

struct PredicateDecl {
  std::string name;
  std::size_t base_arity = 0;
  std::string template_text;
  SourcePos pos;

  friend bool operator==(const PredicateDecl& a, const PredicateDecl& b) {
    return a.name == b.name && a.base_arity == b.base_arity &&
           a.template_text == b.template_text;
  }
};

/// Placeholder names of a template in order of first appearance. `{P}` is
/// a placeholder; the i-th distinct placeholder stands for argument i.
/// Returns nullopt if a brace is unbalanced or a placeholder is empty.
inline std::optional<std::vector<std::string>> template_parameters(
    std::string_view text) {
  std::vector<std::string> names;
  for (std::size_t i = 0; i < text.size(); ++i) {
    if (text[i] == '}') return std::nullopt;
    if (text[i] != '{') continue;
    std::size_t close = text.find('}', i + 1);
    if (close == std::string_view::npos || close == i + 1) return std::nullopt;
    std::string name(text.substr(i + 1, close - i - 1));
    if (name.find('{') != std::string::npos) return std::nullopt;
    if (std::find(names.begin(), names.end(), name) == names.end())
      names.push_back(name);
    i = close;
  }
  return names;
}

/// An atom whose arguments are 'OR'-sets; a singleton set is a plain term.
struct ExtendedAtom {
  std::string predicate;
  std::vector<std::vector<Term>> args;
  std::optional<Term> temporal;
  bool atemporal_source = false;
  SourcePos pos;

  bool has_or_sets() const {
    for (const auto& set : args)
      if (set.size() > 1) return true;
    return false;
  }

  friend bool operator==(const ExtendedAtom& a, const ExtendedAtom& b) {
    return a.predicate == b.predicate && a.args == b.args &&
           a.temporal == b.temporal &&
           a.atemporal_source == b.atemporal_source;
  }
};

/// Body formula: a leaf atom, or a flattened conjunction/disjunction.
struct Formula {
  enum class Kind : unsigned char { atom, conjunction, disjunction };

  Kind kind = Kind::atom;
  ExtendedAtom atom;
  std::vector<Formula> children;

  static Formula leaf(ExtendedAtom a) {
    Formula f;
    f.atom = std::move(a);
    return f;
  }

  /// Builds an n-ary node, flattening same-kind children; one child
  /// collapses to itself.
  static Formula node(Kind kind, std::vector<Formula> parts) {
    if (parts.size() == 1) return std::move(parts.front());
    Formula f;
    f.kind = kind;
    for (Formula& p : parts) {
      if (p.kind == kind) {
        for (Formula& c : p.children) f.children.push_back(std::move(c));
      } else {
        f.children.push_back(std::move(p));
      }
    }
    return f;
  }

  friend bool operator==(const Formula&, const Formula&) = default;
};

template <typename Fn>
void for_each_leaf(Formula& f, Fn&& fn) {
  if (f.kind == Formula::Kind::atom) {
    fn(f.atom);
    return;
  }
  for (Formula& c : f.children) for_each_leaf(c, fn);
}

template <typename Fn>
void for_each_leaf(const Formula& f, Fn&& fn) {
  if (f.kind == Formula::Kind::atom) {
    fn(f.atom);
    return;
  }
  for (const Formula& c : f.children) for_each_leaf(c, fn);
}

/// A rule before desugaring. `id` is empty when the source gave none.
struct ExtendedRule {
  std::string id;
  ExtendedAtom head;
  Formula body;
  Provenance provenance;
  SourcePos pos;

  friend bool operator==(const ExtendedRule& a, const ExtendedRule& b) {
    return a.id == b.id && a.head == b.head && a.body == b.body &&
           a.provenance == b.provenance;
  }
};

struct Fact {
  std::string id;
  ExtendedAtom atom;
  Provenance provenance;
  SourcePos pos;

  friend bool operator==(const Fact& a, const Fact& b) {
    return a.id == b.id && a.atom == b.atom && a.provenance == b.provenance;
  }
};

struct ParsedProgram {
  std::vector<PredicateDecl> decls;
  std::vector<ExtendedRule> rules;
  std::vector<Fact> facts;

  const PredicateDecl* find_decl(std::string_view name) const {
    for (const auto& d : decls)
      if (d.name == name) return &d;
    return nullptr;
  }

  friend bool operator==(const ParsedProgram&, const ParsedProgram&) = default;
};

namespace detail {

enum class Tok : unsigned char {
  end,
  upper_ident,  // variable or predicate name
  lower_ident,  // bare constant or predicate name
  number,       // digit-led constant such as 15:15
  string,
  lparen,
  rparen,
  lbracket,
  rbracket,
  comma,
  period,
  slash,
  arrow,  // <-
  lor,    // \/
  land,   // /\ .
  or_op,  // 'OR'
  directive,   // #name
  annotation,  // @name
};

struct Token {
  Tok kind = Tok::end;
  std::string text;
  SourcePos pos;
};

class Lexer {
 public:
  explicit Lexer(std::string_view src) : src_(src) {}

  std::vector<Token> tokenize() {
    std::vector<Token> out;
    for (;;) {
      skip_space();
      Token t;
      t.pos = {line_, col_};
      if (at_end()) {
        out.push_back(t);
        return out;
      }
      char c = peek();
      if (is_upper(c) || c == '_' || is_lower(c)) {
        t.kind = is_lower(c) ? Tok::lower_ident : Tok::upper_ident;
        while (!at_end() && is_ident_char(peek())) t.text += get();
      } else if (is_digit(c)) {
        t.kind = Tok::number;
        while (!at_end() && (is_ident_char(peek()) || peek() == ':'))
          t.text += get();
      } else if (c == '"') {
        t.kind = Tok::string;
        t.text = read_string();
      } else if (c == '\'') {
        get();
        std::string word;
        while (!at_end() && peek() != '\'' && peek() != '\n') word += get();
        if (at_end() || peek() != '\'' || word != "OR")
          throw ParseError(t.pos, "expected 'OR'");
        get();
        t.kind = Tok::or_op;
      } else if (c == '#' || c == '@') {
        get();
        t.kind = c == '#' ? Tok::directive : Tok::annotation;
        while (!at_end() && is_ident_char(peek())) t.text += get();
        if (t.text.empty())
          throw ParseError(t.pos, std::string("expected a name after '") + c +
                                      "'");
      } else {
        get();
        switch (c) {
          case '(': t.kind = Tok::lparen; break;
          case ')': t.kind = Tok::rparen; break;
          case '[': t.kind = Tok::lbracket; break;
          case ']': t.kind = Tok::rbracket; break;
          case ',': t.kind = Tok::comma; break;
          case '.': t.kind = Tok::period; break;
          case '<':
            if (at_end() || get() != '-') throw ParseError(t.pos, "expected '<-'");
            t.kind = Tok::arrow;
            break;
          case '\\':
            if (at_end() || get() != '/') throw ParseError(t.pos, "expected '\\/'");
            t.kind = Tok::lor;
            break;
          case '/':
            if (!at_end() && peek() == '\\') {
              get();
              t.kind = Tok::land;
            } else {
              t.kind = Tok::slash;
            }
            break;
          default:
            throw ParseError(t.pos, std::string("unexpected character '") + c +
                                        "'");
        }
      }
      out.push_back(std::move(t));
    }
  }

 private:
  bool at_end() const { return i_ >= src_.size(); }
  char peek() const { return src_[i_]; }
  char get() {
    char c = src_[i_++];
    if (c == '\n') {
      ++line_;
      col_ = 1;
    } else if ((static_cast<unsigned char>(c) & 0xC0) != 0x80) {
      ++col_;  // count UTF-8 code points, not bytes
    }
    return c;
  }

  void skip_space() {
    while (!at_end()) {
      char c = peek();
      if (c == '%') {
        while (!at_end() && peek() != '\n') get();
      } else if (c == ' ' || c == '\t' || c == '\r' || c == '\n') {
        get();
      } else {
        return;
      }
    }
  }

  std::string read_string() {
    SourcePos start{line_, col_};
    get();
    std::string out;
    for (;;) {
      if (at_end() || peek() == '\n')
        throw ParseError(start, "unterminated string");
      char c = get();
      if (c == '"') return out;
      if (c == '\\') {
        if (at_end()) throw ParseError(start, "unterminated string");
        c = get();
      }
      out += c;
    }
  }

  std::string_view src_;
  std::size_t i_ = 0;
  std::size_t line_ = 1;
  std::size_t col_ = 1;
};

inline const char* describe(Tok t) {
  switch (t) {
    case Tok::end: return "end of input";
    case Tok::upper_ident: return "name";
    case Tok::lower_ident: return "identifier";
    case Tok::number: return "number";
    case Tok::string: return "string";
    case Tok::lparen: return "'('";
    case Tok::rparen: return "')'";
    case Tok::lbracket: return "'['";
    case Tok::rbracket: return "']'";
    case Tok::comma: return "','";
    case Tok::period: return "'.'";
    case Tok::slash: return "'/'";
    case Tok::arrow: return "'<-'";
    case Tok::lor: return "'\\/'";
    case Tok::land: return "'/\\'";
    case Tok::or_op: return "'OR'";
    case Tok::directive: return "directive";
    case Tok::annotation: return "annotation";
  }
  return "token";
}

class Parser {
 public:
  explicit Parser(std::string_view src) : toks_(Lexer(src).tokenize()) {}

  ParsedProgram program() {
    ParsedProgram p;
    while (cur().kind != Tok::end) {
      if (cur().kind == Tok::directive) {
        PredicateDecl d = declaration();
        if (p.find_decl(d.name))
          throw ParseError(d.pos, "duplicate declaration of predicate '" +
                                      d.name + "'");
        p.decls.push_back(std::move(d));
        continue;
      }
      statement(p);
    }
    return p;
  }

  /// A bare formula, optionally terminated by '.'.
  Formula goal() {
    Formula f = comma_list();
    if (cur().kind == Tok::period) advance();
    expect(Tok::end);
    return f;
  }

 private:
  const Token& cur() const { return toks_[pos_]; }
  const Token& advance() { return toks_[pos_ < toks_.size() - 1 ? pos_++ : pos_]; }

  const Token& expect(Tok kind) {
    if (cur().kind != kind)
      throw ParseError(cur().pos, std::string("expected ") + describe(kind) +
                                      ", found " + describe(cur().kind));
    return advance();
  }

  PredicateDecl declaration() {
    const Token& dir = advance();
    if (dir.text != "pred")
      throw ParseError(dir.pos, "unknown directive '#" + dir.text + "'");
    PredicateDecl d;
    d.pos = cur().pos;
    if (cur().kind != Tok::upper_ident && cur().kind != Tok::lower_ident)
      throw ParseError(cur().pos, "expected predicate name");
    d.name = advance().text;
    expect(Tok::slash);
    const Token& n = expect(Tok::number);
    if (!std::all_of(n.text.begin(), n.text.end(), is_digit))
      throw ParseError(n.pos, "expected an arity");
    d.base_arity = std::stoul(n.text);
    d.template_text = expect(Tok::string).text;
    if (!template_parameters(d.template_text))
      throw ParseError(n.pos, "malformed template \"" + d.template_text + "\"");
    expect(Tok::period);
    return d;
  }

  void statement(ParsedProgram& p) {
    std::string id;
    Provenance prov;
    SourcePos start = cur().pos;
    while (cur().kind == Tok::annotation) {
      const Token& a = advance();
      expect(Tok::lparen);
      const Token& v = advance();
      if (v.kind != Tok::string && v.kind != Tok::lower_ident &&
          v.kind != Tok::upper_ident && v.kind != Tok::number)
        throw ParseError(v.pos, "expected annotation value");
      expect(Tok::rparen);
      if (a.text == "id") {
        if (!id.empty()) throw ParseError(a.pos, "duplicate @id");
        id = v.text;
      } else if (a.text == "law") {
        prov.law_refs.push_back(v.text);
      } else if (a.text == "case") {
        prov.case_refs.push_back(v.text);
      } else if (a.text == "commentary") {
        prov.commentary_refs.push_back(v.text);
      } else {
        throw ParseError(a.pos, "unknown annotation '@" + a.text + "'");
      }
    }
    ExtendedAtom head = atom();
    if (head.has_or_sets())
      throw ParseError(head.pos, "'OR' is not allowed in a rule head");
    if (cur().kind == Tok::arrow) {
      advance();
      ExtendedRule r;
      r.id = std::move(id);
      r.head = std::move(head);
      r.body = comma_list();
      r.provenance = std::move(prov);
      r.pos = start;
      expect(Tok::period);
      p.rules.push_back(std::move(r));
    } else {
      expect(Tok::period);
      p.facts.push_back(Fact{std::move(id), std::move(head), std::move(prov), start});
    }
  }

  Formula comma_list() {
    std::vector<Formula> parts{disjunction()};
    while (cur().kind == Tok::comma) {
      advance();
      parts.push_back(disjunction());
    }
    return Formula::node(Formula::Kind::conjunction, std::move(parts));
  }

  Formula disjunction() {
    std::vector<Formula> parts{conjunction()};
    while (cur().kind == Tok::lor) {
      advance();
      parts.push_back(conjunction());
    }
    return Formula::node(Formula::Kind::disjunction, std::move(parts));
  }

  Formula conjunction() {
    std::vector<Formula> parts{unit()};
    while (cur().kind == Tok::land) {
      advance();
      parts.push_back(unit());
    }
    return Formula::node(Formula::Kind::conjunction, std::move(parts));
  }

  Formula unit() {
    if (cur().kind == Tok::lparen || cur().kind == Tok::lbracket) {
      Tok close = cur().kind == Tok::lparen ? Tok::rparen : Tok::rbracket;
      advance();
      Formula f = comma_list();
      expect(close);
      return f;
    }
    return Formula::leaf(atom());
  }

  ExtendedAtom atom() {
    ExtendedAtom a;
    a.pos = cur().pos;
    if (cur().kind != Tok::upper_ident && cur().kind != Tok::lower_ident)
      throw ParseError(cur().pos, std::string("expected an atom, found ") +
                                      describe(cur().kind));
    a.predicate = advance().text;
    if (cur().kind != Tok::lparen) return a;
    advance();
    if (cur().kind == Tok::rparen) {
      advance();
      return a;
    }
    for (;;) {
      std::vector<Term> set{term()};
      while (cur().kind == Tok::or_op) {
        advance();
        set.push_back(term());
      }
      a.args.push_back(std::move(set));
      if (cur().kind == Tok::comma) {
        advance();
        continue;
      }
      expect(Tok::rparen);
      return a;
    }
  }

  Term term() {
    const Token& t = cur();
    switch (t.kind) {
      case Tok::upper_ident:
        advance();
        return Term::variable(t.text);
      case Tok::lower_ident:
      case Tok::number:
        advance();
        return Term::constant(t.text);
      case Tok::string:
        if (t.text.empty()) throw ParseError(t.pos, "empty constant");
        advance();
        return Term::constant(t.text);
      default:
        throw ParseError(t.pos, std::string("expected a term, found ") +
                                    describe(t.kind));
    }
  }

  std::vector<Token> toks_;
  std::size_t pos_ = 0;
};

inline std::string quote(std::string_view s) {
  std::string out = "\"";
  for (char c : s) {
    if (c == '"' || c == '\\') out += '\\';
    out += c;
  }
  return out + "\"";
}

}  // namespace detail

/// Parses a whole knowledge-base or facts file. Throws ParseError.
inline ParsedProgram parse_program(std::string_view text) {
  return detail::Parser(text).program();
}

/// Parses a query body such as "BrokenLaw(P, X, T)"; a final '.' is optional.
inline Formula parse_formula(std::string_view text) {
  return detail::Parser(text).goal();
}

// ---------------------------------------------------------------------------
// Pretty printing. parse_program(to_source(p)) == p for any parsed p.

inline std::string to_source(const ExtendedAtom& a) {
  std::string out = a.predicate + "(";
  bool first = true;
  for (const auto& set : a.args) {
    if (!first) out += ", ";
    first = false;
    for (std::size_t i = 0; i < set.size(); ++i) {
      if (i) out += " 'OR' ";
      out += source_text(set[i]);
    }
  }
  if (a.temporal && !a.atemporal_source) {
    if (!first) out += ", ";
    out += source_text(*a.temporal);
  }
  return out + ")";
}

inline std::string to_source(const Formula& f, bool nested = false) {
  switch (f.kind) {
    case Formula::Kind::atom:
      return to_source(f.atom);
    case Formula::Kind::conjunction: {
      std::string out;
      for (std::size_t i = 0; i < f.children.size(); ++i) {
        if (i) out += ", ";
        out += to_source(f.children[i], false);
      }
      return nested ? "(" + out + ")" : out;
    }
    case Formula::Kind::disjunction: {
      std::string out;
      for (std::size_t i = 0; i < f.children.size(); ++i) {
        if (i) out += " \\/ ";
        out += to_source(f.children[i], true);
      }
      return out;
    }
  }
  return {};
}

namespace detail {

inline std::string annotations(const std::string& id, const Provenance& p) {
  std::string out;
  if (!id.empty()) out += "@id(" + quote(id) + ") ";
  for (const auto& s : p.law_refs) out += "@law(" + quote(s) + ") ";
  for (const auto& s : p.case_refs) out += "@case(" + quote(s) + ") ";
  for (const auto& s : p.commentary_refs) out += "@commentary(" + quote(s) + ") ";
  if (!out.empty()) out.back() = '\n';
  return out;
}

}  // namespace detail

inline std::string to_source(const ParsedProgram& p) {
  std::string out;
  for (const auto& d : p.decls)
    out += "#pred " + d.name + "/" + std::to_string(d.base_arity) + " " +
           detail::quote(d.template_text) + ".\n";
  for (const auto& r : p.rules)
    out += detail::annotations(r.id, r.provenance) + to_source(r.head) +
           " <- " + to_source(r.body) + ".\n";
  for (const auto& f : p.facts)
    out += detail::annotations(f.id, f.provenance) + to_source(f.atom) + ".\n";
  return out;
}

// ---------------------------------------------------------------------------
// Desugaring.

inline Atom plain_atom(const ExtendedAtom& a) {
  Atom out;
  out.predicate = a.predicate;
  for (const auto& set : a.args) {
    if (set.size() != 1)
      throw Error("atom " + to_source(a) + " still has an 'OR' argument");
    out.args.push_back(set.front());
  }
  out.temporal = a.temporal;
  out.atemporal_source = a.atemporal_source;
  return out;
}

/// The disjunction an atom with 'OR' arguments stands for: the cross product
/// of its OR-sets, leftmost argument varying slowest.
inline std::vector<Atom> expand_or_arguments(const ExtendedAtom& a) {
  std::vector<Atom> out;
  Atom current;
  current.predicate = a.predicate;
  current.temporal = a.temporal;
  current.atemporal_source = a.atemporal_source;
  current.args.reserve(a.args.size());
  auto rec = [&](auto& self, std::size_t i) -> void {
    if (i == a.args.size()) {
      out.push_back(current);
      return;
    }
    for (const Term& t : a.args[i]) {
      current.args.push_back(t);
      self(self, i + 1);
      current.args.pop_back();
    }
  };
  rec(rec, 0);
  return out;
}

/// Number of DNF disjuncts of `f` after 'OR' expansion, saturating at
/// SIZE_MAX.
inline std::size_t disjunct_count(const Formula& f) {
  constexpr std::size_t kMax = SIZE_MAX;
  auto mul = [](std::size_t x, std::size_t y) {
    return (y != 0 && x > kMax / y) ? kMax : x * y;
  };
  switch (f.kind) {
    case Formula::Kind::atom: {
      std::size_t n = 1;
      for (const auto& set : f.atom.args) n = mul(n, set.size());
      return n;
    }
    case Formula::Kind::conjunction: {
      std::size_t n = 1;
      for (const auto& c : f.children) n = mul(n, disjunct_count(c));
      return n;
    }
    case Formula::Kind::disjunction: {
      std::size_t n = 0;
      for (const auto& c : f.children) {
        std::size_t k = disjunct_count(c);
        n = (kMax - n < k) ? kMax : n + k;
      }
      return n;
    }
  }
  return 0;
}

/// Disjunctive normal form of a body: one conjunction of atoms per
/// disjunct, in source order, without deduplication. 'OR' arguments are
/// expanded on the way.
inline std::vector<std::vector<Atom>> to_body_dnf(
    const Formula& body, std::size_t cap = kDefaultExpansionCap) {
  std::size_t n = disjunct_count(body);
  if (n > cap)
    throw ExpansionLimitError("body expands to " +
                              (n == SIZE_MAX ? std::string("too many")
                                             : std::to_string(n)) +
                              " disjuncts (limit " + std::to_string(cap) + ")");

  auto rec = [](auto& self, const Formula& f) -> std::vector<std::vector<Atom>> {
    std::vector<std::vector<Atom>> out;
    switch (f.kind) {
      case Formula::Kind::atom:
        for (Atom& a : expand_or_arguments(f.atom)) out.push_back({std::move(a)});
        break;
      case Formula::Kind::disjunction:
        for (const Formula& c : f.children)
          for (auto& d : self(self, c)) out.push_back(std::move(d));
        break;
      case Formula::Kind::conjunction:
        out.push_back({});
        for (const Formula& c : f.children) {
          auto part = self(self, c);
          std::vector<std::vector<Atom>> next;
          next.reserve(out.size() * part.size());
          for (const auto& prefix : out)
            for (const auto& suffix : part) {
              auto joined = prefix;
              joined.insert(joined.end(), suffix.begin(), suffix.end());
              next.push_back(std::move(joined));
            }
          out = std::move(next);
        }
        break;
    }
    return out;
  };
  return rec(rec, body);
}

/// One pure rule per body disjunct. Ids become "<id>#k" (k from 1) when
/// there is more than one; a single expansion keeps the parent id.
inline std::vector<Rule> desugar_rule(const ExtendedRule& r,
                                      std::size_t cap = kDefaultExpansionCap) {
  Atom head = plain_atom(r.head);
  auto disjuncts = to_body_dnf(r.body, cap);
  std::vector<Rule> out;
  out.reserve(disjuncts.size());
  for (std::size_t k = 0; k < disjuncts.size(); ++k) {
    Rule pure;
    pure.id = disjuncts.size() == 1 ? r.id : r.id + "#" + std::to_string(k + 1);
    pure.head = head;
    pure.body = std::move(disjuncts[k]);
    pure.provenance = r.provenance;
    out.push_back(std::move(pure));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Temporal padding.

namespace detail {

inline void collect_names(const ExtendedAtom& a, std::set<std::string>& out) {
  for (const auto& set : a.args)
    for (const Term& t : set)
      if (t.is_variable()) out.insert(t.name());
  if (a.temporal && a.temporal->is_variable()) out.insert(a.temporal->name());
}

class PadNamer {
 public:
  explicit PadNamer(std::set<std::string> used) : used_(std::move(used)) {}
  Term fresh() {
    for (;;) {
      std::string name = "_T" + std::to_string(++n_);
      if (used_.insert(name).second) return Term::variable(name);
    }
  }

 private:
  std::set<std::string> used_;
  std::size_t n_ = 0;
};

inline void pad_atom(ExtendedAtom& a, const ParsedProgram& p, PadNamer& namer) {
  if (a.temporal) return;
  const PredicateDecl* d = p.find_decl(a.predicate);
  if (!d)
    throw ArityError("line " + std::to_string(a.pos.line) +
                     ": undeclared predicate '" + a.predicate + "'");
  if (a.args.size() == d->base_arity + 1) {
    if (a.args.back().size() != 1)
      throw ArityError("line " + std::to_string(a.pos.line) +
                       ": 'OR' is not allowed in the temporal argument of " +
                       to_source(a));
    a.temporal = a.args.back().front();
    a.args.pop_back();
  } else if (a.args.size() == d->base_arity) {
    a.temporal = namer.fresh();
    a.atemporal_source = true;
  } else {
    throw ArityError("line " + std::to_string(a.pos.line) + ": " +
                     to_source(a) + " has " + std::to_string(a.args.size()) +
                     " arguments; '" + d->name + "' takes " +
                     std::to_string(d->base_arity) + " or " +
                     std::to_string(d->base_arity + 1));
  }
}

}  // namespace detail

/// Gives every atom an explicit temporal slot. An atom written with
/// base_arity arguments gets a fresh variable (unique within its statement)
/// and is flagged atemporal_source; one written with base_arity + 1 has its
/// last argument moved to the slot. Idempotent.
inline ParsedProgram pad_temporal(ParsedProgram p) {
  for (ExtendedRule& r : p.rules) {
    std::set<std::string> used;
    detail::collect_names(r.head, used);
    for_each_leaf(r.body, [&](const ExtendedAtom& a) { detail::collect_names(a, used); });
    detail::PadNamer namer(std::move(used));
    detail::pad_atom(r.head, p, namer);
    for_each_leaf(r.body, [&](ExtendedAtom& a) { detail::pad_atom(a, p, namer); });
  }
  for (Fact& f : p.facts) {
    std::set<std::string> used;
    detail::collect_names(f.atom, used);
    detail::PadNamer namer(std::move(used));
    detail::pad_atom(f.atom, p, namer);
  }
  return p;
}

// ---------------------------------------------------------------------------
// Validation.

struct Diagnostic {
  std::string code;  // undeclared-predicate | arity | template-arity
  std::string message;
  SourcePos pos;
};

inline std::string to_string(const Diagnostic& d) {
  return "line " + std::to_string(d.pos.line) + ", column " +
         std::to_string(d.pos.column) + ": " + d.code + ": " + d.message;
}

/// Checks predicates against declarations and templates against arities.
/// Works on both padded and unpadded programs.
inline std::vector<Diagnostic> validate_program(const ParsedProgram& p) {
  std::vector<Diagnostic> out;
  for (const auto& d : p.decls) {
    auto params = template_parameters(d.template_text);
    std::size_t n = params ? params->size() : 0;
    if (n != d.base_arity)
      out.push_back({"template-arity",
                     "template for '" + d.name + "/" +
                         std::to_string(d.base_arity) + "' mentions " +
                         std::to_string(n) + " parameter(s)",
                     d.pos});
  }
  std::set<std::string> reported;
  auto check = [&](const ExtendedAtom& a) {
    const PredicateDecl* d = p.find_decl(a.predicate);
    if (!d) {
      if (reported.insert(a.predicate).second)
        out.push_back({"undeclared-predicate",
                       "predicate '" + a.predicate + "' is not declared", a.pos});
      return;
    }
    std::size_t n = a.args.size();
    bool ok = a.temporal ? n == d->base_arity
                         : (n == d->base_arity || n == d->base_arity + 1);
    if (!ok)
      out.push_back({"arity",
                     to_source(a) + " does not match '" + d->name + "/" +
                         std::to_string(d->base_arity) + "'",
                     a.pos});
  };
  for (const auto& r : p.rules) {
    check(r.head);
    for_each_leaf(r.body, check);
  }
  for (const auto& f : p.facts) check(f.atom);
  return out;
}

// ---------------------------------------------------------------------------
// Compilation to a pure, padded program.

class CompileError : public Error {
 public:
  explicit CompileError(std::vector<Diagnostic> diagnostics)
      : Error(summary(diagnostics)), diagnostics_(std::move(diagnostics)) {}

  const std::vector<Diagnostic>& diagnostics() const { return diagnostics_; }

 private:
  static std::string summary(const std::vector<Diagnostic>& ds) {
    std::string out;
    for (const auto& d : ds) {
      if (!out.empty()) out += "; ";
      out += to_string(d);
    }
    return out;
  }

  std::vector<Diagnostic> diagnostics_;
};

struct Expansion {
  std::string rule_id;
  std::size_t count = 0;
};

/// Declarations plus pure, temporally padded rules (facts included as
/// body-less rules), ready for resolution.
struct KnowledgeBase {
  std::vector<PredicateDecl> decls;
  std::vector<Rule> rules;
  std::vector<Expansion> expansions;  // one per extended rule

  const PredicateDecl* find_decl(std::string_view name) const {
    for (const auto& d : decls)
      if (d.name == name) return &d;
    return nullptr;
  }

  const Rule* find_rule(std::string_view id) const {
    for (const auto& r : rules)
      if (r.id == id) return &r;
    return nullptr;
  }
};

/// Validates, pads and desugars. Rules without an @id are named r<k> and
/// facts f<k>, counting from 1 in source order. Throws CompileError when
/// validation reports anything.
inline KnowledgeBase compile(const ParsedProgram& parsed,
                             std::size_t cap = kDefaultExpansionCap) {
  if (auto diags = validate_program(parsed); !diags.empty())
    throw CompileError(std::move(diags));
  ParsedProgram p = pad_temporal(parsed);
  KnowledgeBase kb;
  kb.decls = p.decls;
  for (std::size_t i = 0; i < p.rules.size(); ++i) {
    ExtendedRule r = p.rules[i];
    if (r.id.empty()) r.id = "r" + std::to_string(i + 1);
    std::vector<Rule> pure;
    try {
      pure = desugar_rule(r, cap);
    } catch (const ExpansionLimitError& e) {
      throw CompileError({{"expansion-limit", e.what(), r.pos}});
    }
    kb.expansions.push_back({r.id, pure.size()});
    for (Rule& x : pure) kb.rules.push_back(std::move(x));
  }
  for (std::size_t i = 0; i < p.facts.size(); ++i) {
    const Fact& f = p.facts[i];
    if (f.atom.has_or_sets())
      throw CompileError({{"or-in-fact", "'OR' is not allowed in a fact", f.pos}});
    Rule r;
    r.id = f.id.empty() ? "f" + std::to_string(i + 1) : f.id;
    r.head = plain_atom(f.atom);
    r.provenance = f.provenance;
    kb.rules.push_back(std::move(r));
  }
  std::set<std::string> seen;
  for (const Rule& r : kb.rules)
    if (!seen.insert(r.id).second)
      throw CompileError({{"duplicate-id", "rule id '" + r.id + "' is used twice", {}}});
  return kb;
}

/// Declarations-only program view used to validate and pad text against an
/// existing knowledge base.
inline ParsedProgram declarations_of(const KnowledgeBase& kb) {
  ParsedProgram p;
  p.decls = kb.decls;
  return p;
}

/// The compiled knowledge base written back as source: declarations plus one
/// pure rule per line, each with its id and provenance. Atoms that padding
/// gave a time slot are printed without it again.
inline std::string to_source(const KnowledgeBase& kb) {
  auto extended = [](const Atom& a) {
    ExtendedAtom out;
    out.predicate = a.predicate;
    for (const Term& t : a.args) out.args.push_back({t});
    out.temporal = a.temporal;
    out.atemporal_source = a.atemporal_source;
    return out;
  };
  ParsedProgram p = declarations_of(kb);
  for (const Rule& r : kb.rules) {
    if (r.is_fact()) {
      p.facts.push_back({r.id, extended(r.head), r.provenance, {}});
      continue;
    }
    std::vector<Formula> body;
    for (const Atom& b : r.body) body.push_back(Formula::leaf(extended(b)));
    p.rules.push_back({r.id, extended(r.head),
                       Formula::node(Formula::Kind::conjunction, std::move(body)),
                       r.provenance, {}});
  }
  return to_source(p);
}

/// Parses a conjunctive goal against the declarations of `kb` and pads it.
/// Disjunction and 'OR' are rejected.
inline std::vector<Atom> parse_goal(std::string_view text,
                                    const KnowledgeBase& kb) {
  Formula f = parse_formula(text);
  std::vector<ExtendedAtom> leaves;
  if (f.kind == Formula::Kind::disjunction)
    throw ParseError({1, 1}, "a query may not contain disjunction");
  bool nested_or = false;
  for_each_leaf(f, [&](const ExtendedAtom& a) {
    if (a.has_or_sets()) nested_or = true;
    leaves.push_back(a);
  });
  if (nested_or) throw ParseError({1, 1}, "a query may not contain 'OR'");
  if (f.kind == Formula::Kind::conjunction)
    for (const Formula& c : f.children)
      if (c.kind != Formula::Kind::atom)
        throw ParseError({1, 1}, "a query may not contain disjunction");

  ParsedProgram p = declarations_of(kb);
  p.decls.push_back({"__query", 0, "", {}});
  ExtendedRule holder;
  holder.head.predicate = "__query";
  holder.body = f;
  p.rules.push_back(holder);
  if (auto diags = validate_program(p); !diags.empty())
    throw CompileError(std::move(diags));
  p = pad_temporal(std::move(p));
  std::vector<Atom> goal;
  for_each_leaf(p.rules.front().body,
                [&](const ExtendedAtom& a) { goal.push_back(plain_atom(a)); });
  return goal;
}

/// Compiles a facts-only text against the declarations of `kb`. Facts are
/// named fact<k>, k counting from `first_index`, unless they carry an @id.
inline std::vector<Rule> compile_facts(std::string_view text,
                                       const KnowledgeBase& kb,
                                       std::size_t first_index = 1) {
  ParsedProgram parsed = parse_program(text);
  if (!parsed.rules.empty())
    throw ParseError(parsed.rules.front().pos, "a facts file may not contain rules");
  if (!parsed.decls.empty())
    throw ParseError(parsed.decls.front().pos,
                     "a facts file may not contain declarations");
  ParsedProgram p = declarations_of(kb);
  p.facts = std::move(parsed.facts);
  if (auto diags = validate_program(p); !diags.empty())
    throw CompileError(std::move(diags));
  p = pad_temporal(std::move(p));
  std::vector<Rule> out;
  for (std::size_t i = 0; i < p.facts.size(); ++i) {
    const Fact& f = p.facts[i];
    if (f.atom.has_or_sets())
      throw ParseError(f.pos, "'OR' is not allowed in a fact");
    Rule r;
    r.id = f.id.empty() ? "fact" + std::to_string(first_index + i) : f.id;
    r.head = plain_atom(f.atom);
    r.provenance = f.provenance;
    out.push_back(std::move(r));
  }
  return out;
}

/// Parses exactly one fact statement against the declarations of `kb` and
/// pads it. A missing final '.' is tolerated.
inline Fact parse_fact(std::string_view text, const KnowledgeBase& kb) {
  std::string src(text);
  auto last = src.find_last_not_of(" \t\r\n");
  if (last != std::string::npos && src[last] != '.') src += ".";
  ParsedProgram parsed = parse_program(src);
  if (parsed.facts.size() != 1 || !parsed.rules.empty() || !parsed.decls.empty())
    throw ParseError({1, 1}, "expected exactly one fact");
  ParsedProgram p = declarations_of(kb);
  p.facts = std::move(parsed.facts);
  if (auto diags = validate_program(p); !diags.empty())
    throw CompileError(std::move(diags));
  if (p.facts.front().atom.has_or_sets())
    throw ParseError(p.facts.front().pos, "'OR' is not allowed in a fact");
  p = pad_temporal(std::move(p));
  return p.facts.front();
}

}  // namespace lexrules
