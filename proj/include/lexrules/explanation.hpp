#pragma once

// Explanations built from refutations: the prefix-shared derivation tree and
// the premise-oriented proof view that users navigate.

#include <cstddef>
#include <deque>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "lexrules/logic.hpp"
#include "lexrules/sld.hpp"

namespace lexrules {

class ExplanationError : public Error {
 public:
  using Error::Error;
};

class UnknownRuleError : public Error {
 public:
  using Error::Error;
};

/// A refutation with the composition of all its unifiers applied to every
/// goal and rule instance.
struct InstantiatedRefutation {
  Goal query;
  std::vector<DerivationStep> steps;
  Substitution computed_answer;
};

inline InstantiatedRefutation instantiate_refutation(const Refutation& r) {
  Substitution total;
  for (const auto& step : r.steps) total = compose(total, step.mgu);
  InstantiatedRefutation out;
  out.query = apply(total, r.query);
  out.computed_answer = r.computed_answer;
  out.steps.reserve(r.steps.size());
  for (const auto& step : r.steps) {
    DerivationStep s = step;
    s.goal_before = apply(total, step.goal_before);
    s.goal_after = apply(total, step.goal_after);
    s.rule_instance = apply(total, step.rule_instance);
    out.steps.push_back(std::move(s));
  }
  return out;
}

inline InstantiatedRefutation instantiate_refutation(const InstantiatedRefutation& r) {
  return instantiate_refutation(Refutation{r.query, r.steps, r.computed_answer});
}

inline std::vector<InstantiatedRefutation> instantiate_all(
    std::span<const Refutation> rs) {
  std::vector<InstantiatedRefutation> out;
  out.reserve(rs.size());
  for (const auto& r : rs) out.push_back(instantiate_refutation(r));
  return out;
}

// ---------------------------------------------------------------------------
// Derivation tree.

struct DerivationTree {
  struct Node {
    Goal goal;
    std::string rule_id;  // rule that produced this goal; empty at the root
    std::vector<std::size_t> children;
  };

  std::vector<Node> nodes;  // nodes[0] is the root

  std::size_t leaf_count() const {
    std::size_t n = 0;
    for (const auto& node : nodes)
      if (node.children.empty()) ++n;
    return n;
  }

  /// Root-to-leaf paths as (rule id, goal) sequences, left to right.
  std::vector<std::vector<std::pair<std::string, Goal>>> paths() const {
    std::vector<std::vector<std::pair<std::string, Goal>>> out;
    if (nodes.empty()) return out;
    std::vector<std::pair<std::string, Goal>> path;
    auto walk = [&](auto& self, std::size_t i) -> void {
      if (i != 0) path.emplace_back(nodes[i].rule_id, nodes[i].goal);
      if (nodes[i].children.empty()) out.push_back(path);
      for (std::size_t c : nodes[i].children) self(self, c);
      if (i != 0) path.pop_back();
    };
    walk(walk, 0);
    return out;
  }
};

/// Merges refutations of one instantiated query into a tree whose nodes are
/// shared exactly as far as the (rule id, goal) sequences agree.
inline DerivationTree build_derivation_tree(std::span<const InstantiatedRefutation> rs) {
  DerivationTree tree;
  if (rs.empty()) return tree;
  tree.nodes.push_back({rs.front().query, {}, {}});
  for (const auto& r : rs) {
    if (r.query != tree.nodes.front().goal)
      throw ExplanationError("refutations start from different goals: " +
                             to_string(tree.nodes.front().goal) + " vs " +
                             to_string(r.query));
    std::size_t cur = 0;
    for (const auto& step : r.steps) {
      std::size_t next = tree.nodes.size();
      for (std::size_t c : tree.nodes[cur].children)
        if (tree.nodes[c].rule_id == step.rule_id && tree.nodes[c].goal == step.goal_after) {
          next = c;
          break;
        }
      if (next == tree.nodes.size()) {
        tree.nodes.push_back({step.goal_after, step.rule_id, {}});
        tree.nodes[cur].children.push_back(next);
      }
      cur = next;
    }
  }
  return tree;
}

// ---------------------------------------------------------------------------
// Proof view.

struct ProofNode;

struct ProofAlternative {
  std::string rule_id;
  Provenance provenance;
  Rule rule_instance;  // fully instantiated; body equals the premise atoms
  std::vector<ProofNode> premises;
};

struct ProofNode {
  Atom atom;
  std::vector<ProofAlternative> alternatives;
  bool is_fact = false;
  std::string fact_id;  // the fact that supports a fact leaf
};

/// Number of distinct proofs a node stands for.
inline std::size_t derivation_count(const ProofNode& n) {
  if (n.is_fact) return 1;
  std::size_t total = 0;
  for (const auto& alt : n.alternatives) {
    std::size_t product = 1;
    for (const auto& p : alt.premises) product *= derivation_count(p);
    total += product;
  }
  return total;
}

namespace detail {

// Single-refutation proof tree, rebuilt from the leftmost selection order.
struct ProofTrace {
  Atom atom;
  const DerivationStep* step = nullptr;
  std::vector<ProofTrace> children;
};

inline std::vector<ProofTrace> trace_refutation(const InstantiatedRefutation& r) {
  std::vector<ProofTrace> roots(r.query.atoms.size());
  std::deque<ProofTrace*> pending;
  for (std::size_t i = 0; i < roots.size(); ++i) {
    roots[i].atom = r.query.atoms[i];
    pending.push_back(&roots[i]);
  }
  for (const auto& step : r.steps) {
    if (pending.empty() || step.selected_index != 0 || step.goal_before.empty() ||
        pending.front()->atom != step.goal_before.atoms.front())
      throw ExplanationError("refutation does not follow leftmost selection");
    ProofTrace* node = pending.front();
    pending.pop_front();
    node->step = &step;
    node->children.resize(step.rule_instance.body.size());
    for (std::size_t i = 0; i < node->children.size(); ++i)
      node->children[i].atom = step.rule_instance.body[i];
    for (std::size_t i = node->children.size(); i-- > 0;)
      pending.push_front(&node->children[i]);
  }
  if (!pending.empty()) throw ExplanationError("refutation is incomplete");
  return roots;
}

inline void merge_trace(ProofNode& into, const ProofTrace& t) {
  const Rule& rule = t.step->rule_instance;
  for (auto& alt : into.alternatives) {
    if (alt.rule_id != t.step->rule_id || alt.rule_instance.body != rule.body) continue;
    for (std::size_t i = 0; i < t.children.size(); ++i)
      merge_trace(alt.premises[i], t.children[i]);
    return;
  }
  ProofAlternative alt{t.step->rule_id, rule.provenance, rule, {}};
  alt.premises.resize(t.children.size());
  for (std::size_t i = 0; i < t.children.size(); ++i) {
    alt.premises[i].atom = t.children[i].atom;
    merge_trace(alt.premises[i], t.children[i]);
  }
  into.alternatives.push_back(std::move(alt));
}

/// A node supported by a single fact becomes a leaf. Duplicate facts stay
/// as alternatives so each one is still counted as a derivation.
inline void finish(ProofNode& n) {
  for (auto& alt : n.alternatives)
    for (auto& p : alt.premises) finish(p);
  if (n.alternatives.size() == 1 && n.alternatives.front().rule_instance.body.empty()) {
    n.is_fact = true;
    n.fact_id = n.alternatives.front().rule_id;
    n.alternatives.clear();
  }
}

}  // namespace detail

/// One proof view per query atom, merged across all refutations.
/// Alternatives are deduplicated by (rule id, instantiated premises).
inline std::vector<ProofNode> build_proof_views(std::span<const InstantiatedRefutation> rs) {
  std::vector<ProofNode> roots;
  for (const auto& r : rs) {
    auto traces = detail::trace_refutation(r);
    if (roots.empty()) {
      roots.resize(traces.size());
      for (std::size_t i = 0; i < traces.size(); ++i) roots[i].atom = traces[i].atom;
    }
    if (traces.size() != roots.size())
      throw ExplanationError("refutations answer different queries");
    for (std::size_t i = 0; i < traces.size(); ++i) {
      if (traces[i].atom != roots[i].atom)
        throw ExplanationError("refutation proves " + to_string(traces[i].atom) +
                               ", expected " + to_string(roots[i].atom));
      detail::merge_trace(roots[i], traces[i]);
    }
  }
  for (auto& n : roots) detail::finish(n);
  return roots;
}

/// Proof view rooted at `answer_atom`, which every refutation must prove.
inline ProofNode build_proof_view(std::span<const InstantiatedRefutation> rs,
                                  const Atom& answer_atom) {
  ProofNode root;
  root.atom = answer_atom;
  for (const auto& r : rs) {
    auto traces = detail::trace_refutation(r);
    auto it = std::find_if(traces.begin(), traces.end(),
                           [&](const auto& t) { return t.atom == answer_atom; });
    if (it == traces.end())
      throw ExplanationError("refutation of " + to_string(r.query) +
                             " does not prove " + to_string(answer_atom));
    detail::merge_trace(root, *it);
  }
  detail::finish(root);
  return root;
}

/// Provenance recorded for a rule; desugared rules carry their parent's.
inline const Provenance& provenance_of(std::string_view rule_id,
                                       std::span<const Rule> program) {
  for (const Rule& r : program)
    if (r.id == rule_id) return r.provenance;
  throw UnknownRuleError("unknown rule '" + std::string(rule_id) + "'");
}

}  // namespace lexrules
