#pragma once

// The shipped traffic-law corpus: §4.1 and §2.25 excerpts plus the
// tailgating case. The same files are installed for editing; these
// accessors read the copies embedded at build time.

#include <string>
#include <string_view>
#include <vector>

#include "lexrules/corpus_data.hpp"
#include "lexrules/kb_language.hpp"

namespace lexrules {

class UnknownCaseError : public Error {
 public:
  using Error::Error;
};

inline std::string_view builtin_source() { return corpus::kTrafficKb; }

inline ParsedProgram builtin_program() { return parse_program(corpus::kTrafficKb); }

/// The builtin program compiled once.
inline const KnowledgeBase& builtin_kb() {
  static const KnowledgeBase kb = compile(builtin_program());
  return kb;
}

inline std::vector<std::string> case_names() { return {"tailgating"}; }

inline std::string_view case_source(std::string_view name) {
  if (name == "tailgating") return corpus::kTailgatingCase;
  throw UnknownCaseError("unknown case '" + std::string(name) + "'");
}

/// Case facts as body-less rules fact1..factN, padded against the builtin
/// declarations.
inline std::vector<Rule> case_rules(std::string_view name) {
  return compile_facts(case_source(name), builtin_kb());
}

inline std::vector<Atom> fixture_case_facts(std::string_view name) {
  std::vector<Atom> out;
  for (Rule& r : case_rules(name)) out.push_back(std::move(r.head));
  return out;
}

/// Builtin rules followed by the case facts.
inline std::vector<Rule> case_program(std::string_view name) {
  std::vector<Rule> program = builtin_kb().rules;
  for (Rule& r : case_rules(name)) program.push_back(std::move(r));
  return program;
}

}  // namespace lexrules
