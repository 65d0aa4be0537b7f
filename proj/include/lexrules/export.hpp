#pragma once

// Plain-data export of answers and their explanations. The CLI's --json
// output and the HTTP service share this shape.

#include <json.hpp>

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "lexrules/explanation.hpp"
#include "lexrules/render.hpp"

namespace lexrules {

using Json = nlohmann::ordered_json;

/// A proof-view node flattened into a table; children are referenced by id.
struct ExplanationNode {
  struct Alternative {
    std::string rule_id;  // empty for the synthetic conjunction root
    Provenance provenance;
    Rule rule_instance;
    std::vector<std::string> premises;
  };

  std::string id;
  std::optional<Atom> atom;  // absent only for a conjunction root
  bool is_fact = false;
  std::string fact_id;
  std::size_t derivations = 0;
  std::vector<Alternative> alternatives;
};

/// One answer of a query with its explanation. The root node is "root";
/// the rest are n1, n2, ... in depth-first order. For a multi-atom query
/// the root is a conjunction whose single alternative lists the per-atom
/// proof views.
struct AnswerExplanation {
  Substitution bindings;
  std::vector<Atom> atoms;
  std::size_t refutations = 0;
  std::vector<ExplanationNode> nodes;
  DerivationTree tree;

  const ExplanationNode* find(std::string_view id) const {
    for (const auto& n : nodes)
      if (n.id == id) return &n;
    return nullptr;
  }
};

namespace detail {

inline std::string flatten(const ProofNode& n, std::string id,
                           std::vector<ExplanationNode>& out, std::size_t& counter) {
  std::size_t at = out.size();
  out.push_back({id, n.atom, n.is_fact, n.fact_id, derivation_count(n), {}});
  std::vector<ExplanationNode::Alternative> alts;
  for (const auto& alt : n.alternatives) {
    ExplanationNode::Alternative a{alt.rule_id, alt.provenance, alt.rule_instance, {}};
    for (const auto& p : alt.premises)
      a.premises.push_back(flatten(p, "n" + std::to_string(++counter), out, counter));
    alts.push_back(std::move(a));
  }
  out[at].alternatives = std::move(alts);
  return id;
}

}  // namespace detail

inline AnswerExplanation explain_answer(const Goal& query, const AnswerEntry& entry) {
  AnswerExplanation ex;
  ex.bindings = entry.answer;
  ex.atoms = apply(entry.answer, query).atoms;
  ex.refutations = entry.refutations.size();
  auto rs = instantiate_all(entry.refutations);
  ex.tree = build_derivation_tree(rs);
  auto views = build_proof_views(rs);
  std::size_t counter = 0;
  if (views.size() == 1) {
    detail::flatten(views.front(), "root", ex.nodes, counter);
    return ex;
  }
  ex.nodes.push_back({"root", std::nullopt, false, {}, ex.refutations, {}});
  ExplanationNode::Alternative conj;
  for (const auto& v : views)
    conj.premises.push_back(
        detail::flatten(v, "n" + std::to_string(++counter), ex.nodes, counter));
  ex.nodes.front().alternatives.push_back(std::move(conj));
  return ex;
}

inline std::vector<AnswerExplanation> explain_answers(const Goal& query,
                                                      const AnswerSet& answers) {
  std::vector<AnswerExplanation> out;
  for (const auto& e : answers.entries) out.push_back(explain_answer(query, e));
  return out;
}

inline Json to_json(const Provenance& p) {
  return {{"law_refs", p.law_refs},
          {"case_refs", p.case_refs},
          {"commentary_refs", p.commentary_refs}};
}

inline std::string node_label(const AnswerExplanation& ex, const ExplanationNode& n,
                              std::span<const PredicateDecl> decls) {
  return n.atom ? render_atom(*n.atom, decls).text : render_atoms(ex.atoms, decls);
}

/// What a client needs to show one node: its sentence and the immediate
/// explanations, each with the premises one click further down.
inline Json node_payload(const AnswerExplanation& ex, const ExplanationNode& n,
                         std::span<const PredicateDecl> decls) {
  Json alts = Json::array();
  for (const auto& alt : n.alternatives) {
    Json premises = Json::array();
    for (const auto& pid : alt.premises) {
      const ExplanationNode& p = *ex.find(pid);
      premises.push_back({{"id", p.id},
                          {"label", node_label(ex, p, decls)},
                          {"is_fact", p.is_fact}});
    }
    alts.push_back({{"rule_id", alt.rule_id},
                    {"rule", alt.rule_id.empty() ? std::string()
                                                 : render_rule(alt.rule_instance, decls)},
                    {"provenance", to_json(alt.provenance)},
                    {"premises", std::move(premises)}});
  }
  Json out = {{"id", n.id},
              {"label", node_label(ex, n, decls)},
              {"atom", n.atom ? to_string(*n.atom) : to_string(Goal{ex.atoms})},
              {"is_fact", n.is_fact}};
  if (n.is_fact) out["fact_id"] = n.fact_id;
  out["derivations"] = n.derivations;
  out["alternatives"] = std::move(alts);
  return out;
}

/// The whole explanation: every proof-view node plus the prefix-shared
/// derivation tree.
inline Json explanation_json(const AnswerExplanation& ex,
                             std::span<const PredicateDecl> decls) {
  Json nodes = Json::array();
  for (const auto& n : ex.nodes) nodes.push_back(node_payload(ex, n, decls));
  Json steps = Json::array();
  for (std::size_t i = 0; i < ex.tree.nodes.size(); ++i) {
    const auto& t = ex.tree.nodes[i];
    Json children = Json::array();
    for (std::size_t c : t.children) children.push_back("d" + std::to_string(c));
    steps.push_back({{"id", "d" + std::to_string(i)},
                     {"rule_id", t.rule_id},
                     {"goal", to_string(t.goal)},
                     {"children", std::move(children)}});
  }
  return {{"root", "root"}, {"nodes", std::move(nodes)}, {"derivation_tree", std::move(steps)}};
}

inline Json bindings_json(const Substitution& s) {
  Json out = Json::object();
  for (const auto& [var, value] : s) out[var] = source_text(value);
  return out;
}

inline Json answer_json(const AnswerExplanation& ex, std::string id,
                        std::span<const PredicateDecl> decls, bool with_explanation) {
  Json out = {{"id", std::move(id)},
              {"label", render_atoms(ex.atoms, decls)},
              {"bindings", bindings_json(ex.bindings)},
              {"refutations", ex.refutations}};
  if (with_explanation) out["explanation"] = explanation_json(ex, decls);
  return out;
}

}  // namespace lexrules
