#pragma once

// Least-fixpoint evaluation by semi-naive iteration. This is the reference
// model the top-down engine is checked against, so it shares nothing with
// sld.hpp beyond the syntax types.

#include <cstddef>
#include <map>
#include <set>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "lexrules/logic.hpp"

namespace lexrules {

class NotRangeRestrictedError : public Error {
 public:
  using Error::Error;
};

/// Stands for "any time" when a padded time variable has to be grounded.
inline const std::string kAnytime = "<anytime>";

namespace detail::bottom_up {

using Bindings = std::vector<std::pair<std::string, Term>>;

inline const Term* lookup(const Bindings& b, const std::string& v) {
  for (const auto& [name, value] : b)
    if (name == v) return &value;
  return nullptr;
}

/// Extends `b` so that pattern·b == ground; false on mismatch.
inline bool match(const Atom& pattern, const Atom& ground, Bindings& b) {
  if (pattern.predicate != ground.predicate || pattern.arity() != ground.arity() ||
      pattern.args.size() != ground.args.size())
    return false;
  for (std::size_t i = 0; i < pattern.arity(); ++i) {
    const Term& p = pattern.position(i);
    const Term& g = ground.position(i);
    if (!p.is_variable()) {
      if (p != g) return false;
      continue;
    }
    if (const Term* bound = lookup(b, p.name())) {
      if (*bound != g) return false;
    } else {
      b.emplace_back(p.name(), g);
    }
  }
  return true;
}

inline Atom instantiate(const Atom& a, const Bindings& b) {
  Atom out = a;
  auto sub = [&](Term& t) {
    if (t.is_variable())
      if (const Term* v = lookup(b, t.name())) t = *v;
  };
  for (Term& t : out.args) sub(t);
  if (out.temporal) sub(*out.temporal);
  return out;
}

/// The padded time variable of `a`, if it has one.
inline const Term* padded_time(const Atom& a) {
  if (a.atemporal_source && a.temporal && a.temporal->is_variable()) return &*a.temporal;
  return nullptr;
}

using Relation = std::map<std::string, std::vector<Atom>>;

class Evaluator {
 public:
  explicit Evaluator(std::span<const Rule> program) : program_(program) {
    check_and_collect();
  }

  std::set<Atom> run() {
    Relation delta;
    for (const Rule& r : program_)
      if (r.body.empty()) emit(r, {}, delta);

    while (!delta.empty()) {
      Relation fresh;
      for (const Rule& r : program_) {
        for (std::size_t i = 0; i < r.body.size(); ++i) {
          auto it = delta.find(r.body[i].predicate);
          if (it == delta.end()) continue;
          Bindings b;
          join(r, 0, i, delta, b, fresh);
        }
      }
      for (auto& [pred, atoms] : delta)
        for (Atom& a : atoms) old_[pred].push_back(std::move(a));
      delta = std::move(fresh);
    }
    return std::move(known_);
  }

 private:
  void check_and_collect() {
    times_.insert(Term::constant(kAnytime));
    auto note_time = [&](const Atom& a) {
      if (a.temporal && a.temporal->is_constant()) times_.insert(*a.temporal);
    };
    for (const Rule& r : program_) {
      note_time(r.head);
      for (const Atom& b : r.body) note_time(b);

      std::vector<std::string> body_vars;
      for (const Atom& b : r.body) collect_variables(b, body_vars);
      std::vector<std::string> head_vars;
      collect_variables(r.head, head_vars);
      const Term* free_time = padded_time(r.head);
      for (const auto& v : head_vars) {
        if (std::find(body_vars.begin(), body_vars.end(), v) != body_vars.end()) continue;
        if (free_time && free_time->name() == v) continue;
        throw NotRangeRestrictedError("rule '" + r.id + "' (" + to_string(r) +
                                      ") is not range-restricted: " + v +
                                      " does not occur in the body");
      }
    }
  }

  /// Adds the head of `r` under `b` to `out` if new, grounding a padded
  /// time variable over every known time.
  void emit(const Rule& r, const Bindings& b, Relation& out) {
    Atom head = instantiate(r.head, b);
    if (const Term* t = padded_time(head)) {
      std::string var = t->name();
      for (const Term& time : times_) {
        Bindings with_time{{var, time}};
        add(instantiate(head, with_time), out);
      }
      return;
    }
    add(std::move(head), out);
  }

  void add(Atom a, Relation& out) {
    if (!is_ground(a)) return;
    if (known_.insert(a).second) out[a.predicate].push_back(std::move(a));
  }

  // Semi-naive join: positions before `delta_pos` read the old relation,
  // `delta_pos` reads the delta, later positions read old plus delta.
  void join(const Rule& r, std::size_t pos, std::size_t delta_pos,
            const Relation& delta, Bindings& b, Relation& out) {
    if (pos == r.body.size()) {
      emit(r, b, out);
      return;
    }
    const Atom& pattern = r.body[pos];
    auto scan = [&](const Relation& rel) {
      auto it = rel.find(pattern.predicate);
      if (it == rel.end()) return;
      for (const Atom& g : it->second) {
        std::size_t mark = b.size();
        if (match(pattern, g, b)) join(r, pos + 1, delta_pos, delta, b, out);
        b.erase(b.begin() + static_cast<std::ptrdiff_t>(mark), b.end());
      }
    };
    if (pos < delta_pos) {
      scan(old_);
    } else if (pos == delta_pos) {
      scan(delta);
    } else {
      scan(old_);
      scan(delta);
    }
  }

  std::span<const Rule> program_;
  std::set<Term> times_;
  std::set<Atom> known_;
  Relation old_;
};

}  // namespace detail::bottom_up

/// Every ground atom derivable from `program`. Rules must be range-restricted
/// and facts ground, except that a padded (originally atemporal) time
/// variable in a head is grounded over the program's time constants plus
/// kAnytime. Throws NotRangeRestrictedError naming the offending rule.
inline std::set<Atom> bottomup_eval(std::span<const Rule> program) {
  return detail::bottom_up::Evaluator(program).run();
}

}  // namespace lexrules
