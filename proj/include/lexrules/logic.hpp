#pragma once

// Terms, atoms, rules and substitutions, plus unification and renaming.
// Everything here is a value type; the free functions are pure.

#include <algorithm>
#include <compare>
#include <cstddef>
#include <initializer_list>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace lexrules {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

namespace detail {

inline bool is_upper(char c) { return c >= 'A' && c <= 'Z'; }
inline bool is_lower(char c) { return c >= 'a' && c <= 'z'; }
inline bool is_digit(char c) { return c >= '0' && c <= '9'; }
inline bool is_ident_char(char c) {
  return is_upper(c) || is_lower(c) || is_digit(c) || c == '_';
}

inline bool is_variable_name(std::string_view s) {
  return !s.empty() && (is_upper(s[0]) || s[0] == '_') &&
         std::all_of(s.begin(), s.end(), is_ident_char);
}

inline bool is_bare_constant(std::string_view s) {
  return !s.empty() && is_lower(s[0]) &&
         std::all_of(s.begin(), s.end(), is_ident_char);
}

}  // namespace detail

class Term {
 public:
  enum class Kind : unsigned char { constant, variable };

  static Term constant(std::string name) {
    if (name.empty()) throw Error("constant name must be non-empty");
    return Term(Kind::constant, std::move(name));
  }

  static Term variable(std::string name) {
    if (!detail::is_variable_name(name))
      throw Error("invalid variable name '" + name + "'");
    return Term(Kind::variable, std::move(name));
  }

  Kind kind() const { return kind_; }
  bool is_variable() const { return kind_ == Kind::variable; }
  bool is_constant() const { return kind_ == Kind::constant; }
  const std::string& name() const { return name_; }

  friend bool operator==(const Term&, const Term&) = default;
  friend auto operator<=>(const Term&, const Term&) = default;

 private:
  Term(Kind kind, std::string name) : kind_(kind), name_(std::move(name)) {}

  Kind kind_;
  std::string name_;
};

/// Source form: bare when the lexer would read it back as the same term,
/// double-quoted otherwise.
inline std::string source_text(const Term& t) {
  if (t.is_variable() || detail::is_bare_constant(t.name())) return t.name();
  std::string out = "\"";
  for (char c : t.name()) {
    if (c == '"' || c == '\\') out += '\\';
    out += c;
  }
  out += '"';
  return out;
}

/// P(t1, ..., tn) with an optional time slot kept apart from the arguments.
/// The slot unifies exactly like a trailing argument.
struct Atom {
  std::string predicate;
  std::vector<Term> args;
  std::optional<Term> temporal;
  // Set by temporal padding: the source atom had no time argument.
  bool atemporal_source = false;

  std::size_t arity() const { return args.size() + (temporal ? 1 : 0); }

  const Term& position(std::size_t i) const {
    return i < args.size() ? args[i] : *temporal;
  }

  friend bool operator==(const Atom& a, const Atom& b) {
    return a.predicate == b.predicate && a.args == b.args &&
           a.temporal == b.temporal;
  }
  friend std::strong_ordering operator<=>(const Atom& a, const Atom& b) {
    if (auto c = a.predicate <=> b.predicate; c != 0) return c;
    if (auto c = a.args <=> b.args; c != 0) return c;
    return a.temporal <=> b.temporal;
  }
};

inline std::string to_string(const Atom& a) {
  std::string out = a.predicate + "(";
  for (std::size_t i = 0; i < a.arity(); ++i) {
    if (i) out += ", ";
    out += source_text(a.position(i));
  }
  return out + ")";
}

inline bool is_ground(const Atom& a) {
  for (std::size_t i = 0; i < a.arity(); ++i)
    if (a.position(i).is_variable()) return false;
  return true;
}

/// Appends the variables of `a` not already in `out`, in order of occurrence.
inline void collect_variables(const Atom& a, std::vector<std::string>& out) {
  for (std::size_t i = 0; i < a.arity(); ++i) {
    const Term& t = a.position(i);
    if (t.is_variable() &&
        std::find(out.begin(), out.end(), t.name()) == out.end())
      out.push_back(t.name());
  }
}

struct Provenance {
  std::vector<std::string> law_refs;
  std::vector<std::string> case_refs;
  std::vector<std::string> commentary_refs;

  bool empty() const {
    return law_refs.empty() && case_refs.empty() && commentary_refs.empty();
  }
  friend bool operator==(const Provenance&, const Provenance&) = default;
};

/// A pure Datalog clause. An empty body makes it a fact.
struct Rule {
  std::string id;
  Atom head;
  std::vector<Atom> body;
  Provenance provenance;

  bool is_fact() const { return body.empty(); }
  friend bool operator==(const Rule&, const Rule&) = default;
};

inline std::string to_string(const Rule& r) {
  std::string out = to_string(r.head);
  for (std::size_t i = 0; i < r.body.size(); ++i) {
    out += i ? ", " : " <- ";
    out += to_string(r.body[i]);
  }
  return out + ".";
}

inline std::vector<std::string> variables(const Rule& r) {
  std::vector<std::string> out;
  collect_variables(r.head, out);
  for (const Atom& b : r.body) collect_variables(b, out);
  return out;
}

/// Finite mapping from variable names to terms, kept in insertion order.
/// Never binds a variable to itself.
class Substitution {
 public:
  using Binding = std::pair<std::string, Term>;

  Substitution() = default;
  Substitution(std::initializer_list<Binding> bindings) {
    for (const auto& [var, value] : bindings) bind(var, value);
  }

  const Term* find(std::string_view var) const {
    for (const auto& b : bindings_)
      if (b.first == var) return &b.second;
    return nullptr;
  }

  /// Adds var -> value. A self-binding is dropped; rebinding is an error.
  void bind(std::string var, Term value) {
    if (!detail::is_variable_name(var))
      throw Error("cannot bind non-variable '" + var + "'");
    if (value.is_variable() && value.name() == var) return;
    if (find(var)) throw Error("variable '" + var + "' is already bound");
    bindings_.emplace_back(std::move(var), std::move(value));
  }

  bool empty() const { return bindings_.empty(); }
  std::size_t size() const { return bindings_.size(); }
  const std::vector<Binding>& bindings() const { return bindings_; }
  auto begin() const { return bindings_.begin(); }
  auto end() const { return bindings_.end(); }

  /// Equal as finite maps; binding order is irrelevant.
  friend bool operator==(const Substitution& a, const Substitution& b) {
    if (a.size() != b.size()) return false;
    for (const auto& [var, value] : a.bindings_) {
      const Term* other = b.find(var);
      if (!other || *other != value) return false;
    }
    return true;
  }

 private:
  std::vector<Binding> bindings_;
};

inline std::string to_string(const Substitution& s) {
  std::string out = "{";
  bool first = true;
  for (const auto& [var, value] : s) {
    if (!first) out += ", ";
    first = false;
    out += var + " -> " + source_text(value);
  }
  return out + "}";
}

inline Term apply(const Substitution& s, const Term& t) {
  if (!t.is_variable()) return t;
  const Term* bound = s.find(t.name());
  return bound ? *bound : t;
}

inline Atom apply(const Substitution& s, const Atom& a) {
  if (s.empty()) return a;
  Atom out = a;
  for (Term& t : out.args) t = apply(s, t);
  if (out.temporal) out.temporal = apply(s, *out.temporal);
  return out;
}

inline std::vector<Atom> apply(const Substitution& s,
                               std::span<const Atom> atoms) {
  std::vector<Atom> out;
  out.reserve(atoms.size());
  for (const Atom& a : atoms) out.push_back(apply(s, a));
  return out;
}

inline Rule apply(const Substitution& s, const Rule& r) {
  Rule out = r;
  out.head = apply(s, r.head);
  out.body = apply(s, std::span<const Atom>(r.body));
  return out;
}

/// compose(s1, s2) behaves as applying s1 and then s2.
inline Substitution compose(const Substitution& s1, const Substitution& s2) {
  Substitution out;
  for (const auto& [var, value] : s1) out.bind(var, apply(s2, value));
  for (const auto& [var, value] : s2)
    if (!s1.find(var)) out.bind(var, value);
  return out;
}

/// Most general unifier of two function-free atoms, or nullopt. The result
/// is idempotent. When two variables meet, the one from `b` is bound to the
/// one from `a`, so callers passing (goal atom, rule head) keep goal names.
inline std::optional<Substitution> unify(const Atom& a, const Atom& b) {
  if (a.predicate != b.predicate || a.args.size() != b.args.size() ||
      a.temporal.has_value() != b.temporal.has_value())
    return std::nullopt;

  std::vector<Substitution::Binding> bindings;
  auto walk = [&](const Term& t) -> Term {
    if (t.is_variable())
      for (const auto& [var, value] : bindings)
        if (var == t.name()) return value;
    return t;
  };

  for (std::size_t i = 0; i < a.arity(); ++i) {
    Term x = walk(a.position(i));
    Term y = walk(b.position(i));
    if (x == y) continue;
    Term var = y.is_variable() ? y : x;
    Term value = y.is_variable() ? x : y;
    if (!var.is_variable()) return std::nullopt;
    // Keep the binding list idempotent.
    for (auto& binding : bindings)
      if (binding.second == var) binding.second = value;
    bindings.emplace_back(var.name(), value);
  }

  Substitution out;
  for (auto& [var, value] : bindings) out.bind(std::move(var), std::move(value));
  return out;
}

/// Variant of `r` with every variable V renamed to V_<index>. Distinct
/// indices give variable-disjoint variants.
inline Rule rename_apart(const Rule& r, std::size_t index) {
  Substitution renaming;
  const std::string suffix = "_" + std::to_string(index);
  for (const std::string& v : variables(r))
    renaming.bind(v, Term::variable(v + suffix));
  return apply(renaming, r);
}

}  // namespace lexrules
