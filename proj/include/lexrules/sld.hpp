#pragma once

// Top-down SLD resolution with leftmost selection. Rules are tried in
// program order and every refutation is collected, grouped by computed
// answer.
//
// A branch is pruned when
//   - the pair (query instance, goal) is a variant of an earlier state on
//     the same branch, or
//   - the selected atom equals one of its proof-tree ancestors under the
//     current bindings, or
//   - (range-restricted programs with ground facts only) some goal atom has
//     no instance within the argument domains of the least model, or the
//     selected atom and its ancestors cannot all ground to distinct atoms
//     within those domains.
// None of these loses an answer: a shortest refutation for any answer never
// meets them. The depth cap is the backstop for everything else.

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <iterator>
#include <limits>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "lexrules/logic.hpp"

namespace lexrules {

struct Goal {
  std::vector<Atom> atoms;

  bool empty() const { return atoms.empty(); }
  friend bool operator==(const Goal&, const Goal&) = default;
};

inline Goal apply(const Substitution& s, const Goal& g) {
  return Goal{apply(s, std::span<const Atom>(g.atoms))};
}

inline std::string to_string(const Goal& g) {
  if (g.empty()) return "[]";
  std::string out;
  for (const Atom& a : g.atoms) {
    if (!out.empty()) out += ", ";
    out += to_string(a);
  }
  return out;
}

/// Variables an answer is reported for: everything in the query except the
/// time variables that padding invented.
inline std::vector<std::string> query_variables(const Goal& query) {
  std::vector<std::string> out;
  auto add = [&](const Term& t) {
    if (t.is_variable() && std::find(out.begin(), out.end(), t.name()) == out.end())
      out.push_back(t.name());
  };
  for (const Atom& a : query.atoms) {
    for (const Term& t : a.args) add(t);
    if (a.temporal && !a.atemporal_source) add(*a.temporal);
  }
  return out;
}

struct DerivationStep {
  Goal goal_before;
  std::size_t selected_index = 0;
  std::string rule_id;
  Rule rule_instance;  // the renamed-apart rule that was applied
  Substitution mgu;
  Goal goal_after;
};

struct Refutation {
  Goal query;
  std::vector<DerivationStep> steps;
  Substitution computed_answer;  // restricted to query_variables(query)
};

struct AnswerEntry {
  Substitution answer;
  std::vector<Refutation> refutations;
};

struct AnswerSet {
  std::vector<AnswerEntry> entries;
  bool depth_limit_hit = false;
  bool refutation_limit_hit = false;

  bool truncated() const { return depth_limit_hit || refutation_limit_hit; }
  std::size_t refutation_count() const {
    std::size_t n = 0;
    for (const auto& e : entries) n += e.refutations.size();
    return n;
  }
};

struct SolveLimits {
  std::size_t max_depth = 512;
  std::size_t max_refutations = 1000;
};

/// Source of renaming indices. Starts above every numeric "_N" suffix seen
/// in the query so renamed variables never capture query variables.
class FreshIndex {
 public:
  explicit FreshIndex(std::size_t next = 1) : next_(next) {}

  static FreshIndex above(const Goal& query) {
    std::size_t hi = 0;
    for (const Atom& a : query.atoms)
      for (std::size_t i = 0; i < a.arity(); ++i) {
        const Term& t = a.position(i);
        if (!t.is_variable()) continue;
        auto us = t.name().rfind('_');
        if (us == std::string::npos || us + 1 == t.name().size()) continue;
        std::string digits = t.name().substr(us + 1);
        if (digits.size() > 18 ||
            !std::all_of(digits.begin(), digits.end(), detail::is_digit))
          continue;
        hi = std::max<std::size_t>(hi, std::stoull(digits));
      }
    return FreshIndex(hi + 1);
  }

  std::size_t take() { return next_++; }

 private:
  std::size_t next_;
};

struct Resolvent {
  Goal goal;
  Substitution mgu;
  Rule rule_instance;
};

/// One resolution step on the leftmost atom of a non-empty goal.
inline std::optional<Resolvent> resolve_step(const Goal& g, const Rule& r,
                                             FreshIndex& fresh) {
  if (g.empty()) throw Error("resolve_step on an empty goal");
  const Atom& selected = g.atoms.front();
  if (selected.predicate != r.head.predicate) return std::nullopt;
  Rule instance = rename_apart(r, fresh.take());
  auto mgu = unify(selected, instance.head);
  if (!mgu) return std::nullopt;
  Goal next;
  next.atoms.reserve(instance.body.size() + g.atoms.size() - 1);
  for (const Atom& b : instance.body) next.atoms.push_back(apply(*mgu, b));
  for (std::size_t i = 1; i < g.atoms.size(); ++i)
    next.atoms.push_back(apply(*mgu, g.atoms[i]));
  return Resolvent{std::move(next), std::move(*mgu), std::move(instance)};
}

namespace detail {

/// Appends a rendering of `t` in which variables are numbered by first
/// occurrence, so variants produce equal keys.
inline void canonical_term(const Term& t, std::map<std::string, std::size_t>& vars,
                           std::string& out) {
  if (t.is_variable()) {
    auto [it, inserted] = vars.emplace(t.name(), vars.size());
    out += '?';
    out += std::to_string(it->second);
  } else {
    out += '\'';
    out += t.name();
    out += '\'';
  }
  out += ',';
}

inline void canonical_atom(const Atom& a, std::map<std::string, std::size_t>& vars,
                           std::string& out) {
  out += a.predicate;
  out += '(';
  for (std::size_t i = 0; i < a.arity(); ++i) canonical_term(a.position(i), vars, out);
  out += ')';
}

/// Key equal for two substitutions over the same variable list iff they
/// are equal up to renaming of the variables in their values.
inline std::string answer_key(const std::vector<std::string>& qvars,
                              const Substitution& s) {
  std::map<std::string, std::size_t> vars;
  std::string out;
  for (const auto& v : qvars) {
    out += v;
    out += '=';
    const Term* t = s.find(v);
    canonical_term(t ? *t : Term::variable(v), vars, out);
  }
  return out;
}

class Solver {
 public:
  Solver(const Goal& query, std::span<const Rule> program, SolveLimits limits)
      : query_(query),
        program_(program),
        limits_(limits),
        qvars_(query_variables(query)),
        fresh_(FreshIndex::above(query)) {
    analyse_program();
  }

  AnswerSet run() {
    State s;
    for (const Atom& a : query_.atoms) s.goal.push_back({a, -1});
    for (const auto& v : qvars_) s.answer.push_back(Term::variable(v));
    path_keys_.insert(state_key(s));
    explore(s);
    return std::move(result_);
  }

 private:
  struct Entry {
    Atom atom;
    int parent;  // index into State::ancestors, -1 for query atoms
  };

  struct State {
    std::vector<Entry> goal;
    std::vector<Atom> ancestors;        // every atom selected on this branch
    std::vector<int> ancestor_parent;   // proof-tree parent of each of them
    std::vector<Term> answer;           // current values of query variables
  };

  using Domain = std::set<std::string>;

  static std::string signature(const Atom& a) {
    return a.predicate + "/" + std::to_string(a.arity());
  }

  // For range-restricted programs with ground facts, over-approximates the
  // constants each argument position can hold in the least model.
  void analyse_program() {
    grounding_ = true;
    for (const Rule& r : program_) {
      std::vector<std::string> body_vars;
      for (const Atom& b : r.body) collect_variables(b, body_vars);
      std::vector<std::string> head_vars;
      collect_variables(r.head, head_vars);
      for (const auto& v : head_vars)
        if (std::find(body_vars.begin(), body_vars.end(), v) == body_vars.end())
          grounding_ = false;
    }
    if (!grounding_) return;

    for (const Rule& r : program_) domains_[signature(r.head)].resize(r.head.arity());
    for (bool changed = true; changed;) {
      changed = false;
      for (const Rule& r : program_) {
        for (std::size_t i = 0; i < r.head.arity(); ++i) {
          const Term& t = r.head.position(i);
          Domain values = t.is_constant() ? Domain{t.name()} : body_domain(r, t.name());
          Domain& target = domains_[signature(r.head)][i];
          for (const auto& v : values) changed |= target.insert(v).second;
        }
      }
    }
  }

  // Values variable `v` can take given the current domains of the body
  // positions it occupies.
  Domain body_domain(const Rule& r, const std::string& v) const {
    std::optional<Domain> out;
    for (const Atom& b : r.body) {
      auto it = domains_.find(signature(b));
      for (std::size_t j = 0; j < b.arity(); ++j) {
        const Term& t = b.position(j);
        if (!t.is_variable() || t.name() != v) continue;
        if (it == domains_.end()) return {};
        const Domain& d = it->second[j];
        if (!out) {
          out = d;
        } else {
          Domain both;
          std::set_intersection(out->begin(), out->end(), d.begin(), d.end(),
                                std::inserter(both, both.end()));
          out = std::move(both);
        }
      }
    }
    return out ? *out : Domain{};
  }

  // Number of ground instances of `a` the domains allow, saturating at
  // `cap`; 0 means `a` cannot succeed.
  std::size_t instance_bound(const Atom& a, std::size_t cap) const {
    auto it = domains_.find(signature(a));
    if (it == domains_.end()) return 0;
    const auto& dom = it->second;
    std::vector<std::pair<std::string, Domain>> vars;
    for (std::size_t i = 0; i < a.arity(); ++i) {
      const Term& t = a.position(i);
      if (t.is_constant()) {
        if (!dom[i].count(t.name())) return 0;
        continue;
      }
      auto v = std::find_if(vars.begin(), vars.end(),
                            [&](const auto& x) { return x.first == t.name(); });
      if (v == vars.end()) {
        vars.emplace_back(t.name(), dom[i]);
      } else {
        Domain both;
        std::set_intersection(v->second.begin(), v->second.end(), dom[i].begin(),
                              dom[i].end(), std::inserter(both, both.end()));
        v->second = std::move(both);
      }
    }
    std::size_t bound = 1;
    for (const auto& [name, d] : vars) {
      if (d.empty()) return 0;
      if (bound > cap / d.size()) return cap;
      bound *= d.size();
    }
    return std::min(bound, cap);
  }

  bool can_succeed(const Atom& a) const {
    return !grounding_ || instance_bound(a, 1) != 0;
  }

  std::string state_key(const State& s) const {
    std::map<std::string, std::size_t> vars;
    std::string out;
    for (const Term& t : s.answer) canonical_term(t, vars, out);
    out += '|';
    for (const Entry& e : s.goal) canonical_atom(e.atom, vars, out);
    return out;
  }

  // On a branch that leads to a shortest refutation, the selected atom and
  // its proof-tree ancestors ground to pairwise distinct atoms of the least
  // model. Prune when that is impossible.
  bool ancestor_conflict(const State& s) const {
    const Entry& sel = s.goal.front();
    std::vector<const Atom*> chain{&sel.atom};
    for (int p = sel.parent; p >= 0; p = s.ancestor_parent[p]) {
      if (s.ancestors[p] == sel.atom) return true;
      chain.push_back(&s.ancestors[p]);
    }
    if (!grounding_ || chain.size() < 2) return false;

    // Atoms with the same shape (predicate, constants, variable sharing)
    // have the same instances; so do all atoms of one predicate when the
    // shape is fully general.
    std::map<std::string, std::pair<std::size_t, std::size_t>> groups;
    auto exceeds = [&](const std::string& key, const Atom& pattern) {
      auto& [count, bound] = groups[key];
      if (count++ == 0) bound = instance_bound(pattern, chain.size());
      return count > bound;
    };
    for (const Atom* a : chain) {
      std::map<std::string, std::size_t> vars;
      std::string shape;
      canonical_atom(*a, vars, shape);
      if (exceeds(shape, *a)) return true;
      Atom general = *a;
      for (std::size_t i = 0; i < general.args.size(); ++i)
        general.args[i] = Term::variable("_G" + std::to_string(i));
      if (general.temporal) general.temporal = Term::variable("_Gt");
      if (exceeds(signature(*a), general)) return true;
    }
    return false;
  }

  void record(const State& s) {
    Substitution answer;
    for (std::size_t i = 0; i < qvars_.size(); ++i) answer.bind(qvars_[i], s.answer[i]);
    if (result_.refutation_count() >= limits_.max_refutations) {
      result_.refutation_limit_hit = true;
      stopped_ = true;
      return;
    }
    std::string key = answer_key(qvars_, answer);
    auto [it, inserted] = answer_index_.emplace(key, result_.entries.size());
    if (inserted) result_.entries.push_back(AnswerEntry{answer, {}});
    result_.entries[it->second].refutations.push_back(
        Refutation{query_, steps_, std::move(answer)});
  }

  void explore(const State& s) {
    if (stopped_) return;
    if (s.goal.empty()) {
      record(s);
      return;
    }
    if (steps_.size() >= limits_.max_depth) {
      result_.depth_limit_hit = true;
      return;
    }
    if (ancestor_conflict(s)) return;

    const Entry& sel = s.goal.front();
    Goal before = goal_of(s);
    for (const Rule& rule : program_) {
      if (stopped_) return;
      if (rule.head.predicate != sel.atom.predicate) continue;
      Rule instance = rename_apart(rule, fresh_.take());
      auto mgu = unify(sel.atom, instance.head);
      if (!mgu) continue;

      State next;
      next.ancestors.reserve(s.ancestors.size() + 1);
      for (const Atom& a : s.ancestors) next.ancestors.push_back(apply(*mgu, a));
      next.ancestors.push_back(apply(*mgu, sel.atom));
      next.ancestor_parent = s.ancestor_parent;
      next.ancestor_parent.push_back(sel.parent);
      int self = static_cast<int>(next.ancestors.size()) - 1;
      next.goal.reserve(instance.body.size() + s.goal.size() - 1);
      for (const Atom& b : instance.body) next.goal.push_back({apply(*mgu, b), self});
      for (std::size_t i = 1; i < s.goal.size(); ++i)
        next.goal.push_back({apply(*mgu, s.goal[i].atom), s.goal[i].parent});
      next.answer.reserve(s.answer.size());
      for (const Term& t : s.answer) next.answer.push_back(apply(*mgu, t));

      if (!std::all_of(next.goal.begin(), next.goal.end(),
                       [&](const Entry& e) { return can_succeed(e.atom); }))
        continue;
      std::string key = state_key(next);
      if (!path_keys_.insert(key).second) continue;
      steps_.push_back(DerivationStep{before, 0, instance.id, instance, *mgu, goal_of(next)});
      explore(next);
      steps_.pop_back();
      path_keys_.erase(key);
    }
  }

  static Goal goal_of(const State& s) {
    Goal g;
    g.atoms.reserve(s.goal.size());
    for (const Entry& e : s.goal) g.atoms.push_back(e.atom);
    return g;
  }

  const Goal& query_;
  std::span<const Rule> program_;
  SolveLimits limits_;
  std::vector<std::string> qvars_;
  FreshIndex fresh_;
  bool grounding_ = false;
  std::map<std::string, std::vector<Domain>> domains_;

  std::vector<DerivationStep> steps_;
  std::unordered_set<std::string> path_keys_;
  std::map<std::string, std::size_t> answer_index_;
  AnswerSet result_;
  bool stopped_ = false;
};

}  // namespace detail

/// All refutations of `query` up to the limits, grouped by computed answer
/// (equality up to renaming) in order of first discovery. Deterministic.
inline AnswerSet solve(const Goal& query, std::span<const Rule> program,
                       SolveLimits limits = {}) {
  return detail::Solver(query, program, limits).run();
}

}  // namespace lexrules
