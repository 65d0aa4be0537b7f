#pragma once

// Natural-language rendering through the per-predicate templates.

#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "lexrules/kb_language.hpp"
#include "lexrules/logic.hpp"

namespace lexrules {

class UndeclaredPredicateError : public Error {
 public:
  using Error::Error;
};

struct RenderedText {
  std::string text;
  Atom source;
};

/// Constants show their text without quotes; variables show their name.
inline const std::string& display(const Term& t) { return t.name(); }

inline const PredicateDecl& decl_for(std::string_view predicate,
                                     std::span<const PredicateDecl> decls) {
  for (const auto& d : decls)
    if (d.name == predicate) return d;
  throw UndeclaredPredicateError("predicate '" + std::string(predicate) +
                                 "' has no declaration");
}

/// Fills the predicate's template with the arguments and appends
/// " at <time>" unless the time slot is the unbound variable that padding
/// gave an atemporal atom.
inline RenderedText render_atom(const Atom& a, std::span<const PredicateDecl> decls) {
  const PredicateDecl& d = decl_for(a.predicate, decls);
  auto params = template_parameters(d.template_text);
  if (!params || params->size() != d.base_arity || a.args.size() != d.base_arity)
    throw Error("template for '" + d.name + "' does not fit " + to_string(a));

  std::string text;
  const std::string& tpl = d.template_text;
  for (std::size_t i = 0; i < tpl.size(); ++i) {
    if (tpl[i] != '{') {
      text += tpl[i];
      continue;
    }
    std::size_t close = tpl.find('}', i);
    std::string name = tpl.substr(i + 1, close - i - 1);
    auto at = std::find(params->begin(), params->end(), name) - params->begin();
    text += display(a.args[static_cast<std::size_t>(at)]);
    i = close;
  }
  if (a.temporal && !(a.atemporal_source && a.temporal->is_variable()))
    text += " at " + display(*a.temporal);
  return {std::move(text), a};
}

inline std::string render_atoms(std::span<const Atom> atoms,
                                std::span<const PredicateDecl> decls,
                                std::string_view separator = " and ") {
  std::string out;
  for (const Atom& a : atoms) {
    if (!out.empty()) out += separator;
    out += render_atom(a, decls).text;
  }
  return out;
}

/// "<head> if <premise> and <premise> ...", or just the head for a fact.
inline std::string render_rule(const Rule& r, std::span<const PredicateDecl> decls) {
  std::string out = render_atom(r.head, decls).text;
  if (!r.body.empty()) out += " if " + render_atoms(r.body, decls);
  return out;
}

}  // namespace lexrules
