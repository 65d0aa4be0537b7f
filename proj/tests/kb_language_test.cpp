#include <gtest/gtest.h>

#include <random>

#include "lexrules/kb_language.hpp"
#include "lexrules/traffic_kb.hpp"
#include "test_support.hpp"

using namespace lexrules;
using namespace lexrules::testing;

namespace {

const char* kDecls = R"(
#pred RoadUser/1 "{P} is a road user".
#pred Road/1 "{R} is a road".
#pred On/2 "{A} is on {B}".
#pred Sign/1 "{S} is a sign".
#pred SimilarTo/2 "{A} is similar to {B}".
)";

ExtendedAtom xatom(std::string pred, std::vector<std::vector<Term>> args) {
  ExtendedAtom a;
  a.predicate = std::move(pred);
  a.args = std::move(args);
  return a;
}

}  // namespace

TEST(Parse, RuleWithAnnotations) {
  ParsedProgram p = parse_program(R"(
    @id("§2.25a") @law("Danish traffic law §2.25")
    RoadUser(P, T) <- On(P, R, T), Road(R, T).
  )");
  ASSERT_EQ(p.rules.size(), 1u);
  const ExtendedRule& r = p.rules[0];
  EXPECT_EQ(r.id, "§2.25a");
  EXPECT_EQ(r.provenance.law_refs, std::vector<std::string>{"Danish traffic law §2.25"});
  EXPECT_EQ(r.head.predicate, "RoadUser");
  EXPECT_EQ(r.body.kind, Formula::Kind::conjunction);
  ASSERT_EQ(r.body.children.size(), 2u);
  EXPECT_EQ(r.body.children[1].atom.predicate, "Road");
  EXPECT_EQ(r.pos.line, 2u);
}

TEST(Parse, FactsAndConstants) {
  ParsedProgram p = parse_program(R"(On(defendant, road1, "15:15"). On(x, y, 15:15).)");
  ASSERT_EQ(p.facts.size(), 2u);
  EXPECT_EQ(plain_atom(p.facts[0].atom), A("On", {C("defendant"), C("road1"), C("15:15")}));
  EXPECT_EQ(plain_atom(p.facts[1].atom).args[2], C("15:15"));
}

TEST(Parse, OrArgumentBecomesSet) {
  Formula f = parse_formula("SimilarTo(Z, sign 'OR' road_marking 'OR' traffic_light, T)");
  ASSERT_EQ(f.kind, Formula::Kind::atom);
  ASSERT_EQ(f.atom.args.size(), 3u);
  EXPECT_EQ(f.atom.args[1], (std::vector<Term>{C("sign"), C("road_marking"), C("traffic_light")}));
  EXPECT_TRUE(f.atom.has_or_sets());
}

TEST(Parse, CommaIsLoosestThenDisjunctionThenConjunction) {
  Formula f = parse_formula("a(X), b(X) \\/ c(X) /\\ d(X), e(X)");
  ASSERT_EQ(f.kind, Formula::Kind::conjunction);
  ASSERT_EQ(f.children.size(), 3u);
  const Formula& mid = f.children[1];
  ASSERT_EQ(mid.kind, Formula::Kind::disjunction);
  ASSERT_EQ(mid.children.size(), 2u);
  EXPECT_EQ(mid.children[1].kind, Formula::Kind::conjunction);
}

TEST(Parse, BracketsAndParenthesesGroup) {
  Formula f = parse_formula("[a(X), b(X)] \\/ (c(X) \\/ d(X))");
  ASSERT_EQ(f.kind, Formula::Kind::disjunction);
  ASSERT_EQ(f.children.size(), 3u);  // flattened
  EXPECT_EQ(f.children[0].kind, Formula::Kind::conjunction);
}

TEST(Parse, DeclarationsAndComments) {
  ParsedProgram p = parse_program(std::string(kDecls) + "% trailing comment\n");
  ASSERT_EQ(p.decls.size(), 5u);
  EXPECT_EQ(p.decls[2].name, "On");
  EXPECT_EQ(p.decls[2].base_arity, 2u);
  EXPECT_EQ(p.decls[2].template_text, "{A} is on {B}");
}

TEST(Parse, SyntaxErrorReportsPosition) {
  try {
    parse_program("Road(road1).\nOn(a, b c).");
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    EXPECT_EQ(e.pos().line, 2u);
    EXPECT_EQ(e.pos().column, 9u);
    EXPECT_NE(std::string(e.what()).find("line 2"), std::string::npos);
  }
}

TEST(Parse, RejectsMalformedInput) {
  EXPECT_THROW(parse_program("Road(road1)"), ParseError);
  EXPECT_THROW(parse_program("Road(a 'or' b)."), ParseError);
  EXPECT_THROW(parse_program("p(X) <- ."), ParseError);
  EXPECT_THROW(parse_program("p(a 'OR' b) <- q(a)."), ParseError);
  EXPECT_THROW(parse_program("#pred p/1 \"{A\"."), ParseError);
  EXPECT_THROW(parse_program("#pred p/1 \"{A}\". #pred p/1 \"{B}\"."), ParseError);
  EXPECT_THROW(parse_program("@foo(x) p(a)."), ParseError);
  EXPECT_THROW(parse_program("p(\"unterminated)."), ParseError);
}

TEST(TemplateParameters, FirstAppearanceOrder) {
  EXPECT_EQ(*template_parameters("{B} then {A} and {B}"), (std::vector<std::string>{"B", "A"}));
  EXPECT_EQ(template_parameters("plain")->size(), 0u);
  EXPECT_FALSE(template_parameters("{}"));
  EXPECT_FALSE(template_parameters("a } b"));
}

TEST(ExpandOr, SingleSet) {
  ExtendedAtom a = xatom("SimilarTo", {{V("Z")}, {C("sign"), C("road_marking"), C("traffic_light")}});
  a.temporal = V("T");
  auto got = expand_or_arguments(a);
  ASSERT_EQ(got.size(), 3u);
  EXPECT_EQ(got[0], AT("SimilarTo", {V("Z"), C("sign")}, V("T")));
  EXPECT_EQ(got[1], AT("SimilarTo", {V("Z"), C("road_marking")}, V("T")));
  EXPECT_EQ(got[2], AT("SimilarTo", {V("Z"), C("traffic_light")}, V("T")));
}

TEST(ExpandOr, CrossProductLeftmostSlowest) {
  ExtendedAtom a = xatom("p", {{C("a"), C("b")}, {C("c"), C("d")}});
  auto got = expand_or_arguments(a);
  ASSERT_EQ(got.size(), 4u);
  EXPECT_EQ(got[0], A("p", {C("a"), C("c")}));
  EXPECT_EQ(got[1], A("p", {C("a"), C("d")}));
  EXPECT_EQ(got[2], A("p", {C("b"), C("c")}));
  EXPECT_EQ(got[3], A("p", {C("b"), C("d")}));
}

TEST(ExpandOr, NoSetsIsIdentity) {
  auto got = expand_or_arguments(xatom("Road", {{C("road1")}}));
  ASSERT_EQ(got.size(), 1u);
  EXPECT_EQ(got[0], A("Road", {C("road1")}));
}

TEST(BodyDnf, DistributesConjunctionOverDisjunction) {
  auto dnf = to_body_dnf(parse_formula("a(X), b(X) \\/ c(X), d(X)"));
  ASSERT_EQ(dnf.size(), 2u);
  EXPECT_EQ(dnf[0], (std::vector<Atom>{parse_atom("a(X)"), parse_atom("b(X)"), parse_atom("d(X)")}));
  EXPECT_EQ(dnf[1], (std::vector<Atom>{parse_atom("a(X)"), parse_atom("c(X)"), parse_atom("d(X)")}));
}

TEST(BodyDnf, TwoDisjunctionsMultiply) {
  auto dnf = to_body_dnf(parse_formula("a(X) \\/ b(X), c(X) \\/ d(X) \\/ e(X)"));
  EXPECT_EQ(dnf.size(), 6u);
  EXPECT_EQ(disjunct_count(parse_formula("a(X) \\/ b(X), c(X) \\/ d(X) \\/ e(X)")), 6u);
}

TEST(Desugar, FourPointOneGivesSix) {
  ParsedProgram p = pad_temporal(builtin_program());
  const ExtendedRule& r = p.rules.front();
  ASSERT_EQ(r.id, "§4.1");
  auto rules = desugar_rule(r);
  ASSERT_EQ(rules.size(), 6u);
  for (std::size_t k = 0; k < rules.size(); ++k) {
    EXPECT_EQ(rules[k].id, "§4.1#" + std::to_string(k + 1));
    EXPECT_EQ(rules[k].head, rules[0].head);
    EXPECT_EQ(rules[k].provenance, r.provenance);
    ASSERT_EQ(rules[k].body.size(), 8u);
  }
  EXPECT_EQ(rules[0].body[3].predicate, "Sign");
  EXPECT_EQ(rules[1].body[3].predicate, "Marking");
  EXPECT_EQ(rules[2].body[3].predicate, "TrafficLight");
  EXPECT_EQ(rules[3].body[3], AT("SimilarTo", {V("Z"), C("sign")}, V("T")));
  EXPECT_EQ(rules[5].body[3], AT("SimilarTo", {V("Z"), C("traffic_light")}, V("T")));
}

TEST(Desugar, ThreeSourcesAndOneOrSetGivesFour) {
  auto rules = parse_rules(R"(
    @id(k) p(X) <- q(X), s(X) \/ m(X) \/ sim(X, a 'OR' b).
  )");
  ASSERT_EQ(rules.size(), 4u);
  EXPECT_EQ(rules[3].id, "k#4");
  EXPECT_EQ(rules[3].body[1], A("sim", {V("X"), C("b")}));
}

TEST(Desugar, SingleExpansionKeepsId) {
  auto rules = parse_rules("@id(\"§2.25a\") RoadUser(P) <- On(P, R), Road(R).");
  ASSERT_EQ(rules.size(), 1u);
  EXPECT_EQ(rules[0].id, "§2.25a");
}

TEST(Desugar, CapRaisesExpansionLimit) {
  std::string body = "a(X)";
  for (int i = 0; i < 15; ++i) body += ", b(X) \\/ c(X)";  // 2^15 disjuncts
  ParsedProgram p = parse_program("p(X) <- " + body + ".");
  EXPECT_THROW(desugar_rule(p.rules[0]), ExpansionLimitError);
  EXPECT_NO_THROW(desugar_rule(p.rules[0], 1u << 15));
  EXPECT_THROW(desugar_rule(p.rules[0], 100), ExpansionLimitError);
}

TEST(Pad, AddsFreshVariableOrMovesTrailingArgument) {
  ParsedProgram p = parse_program(std::string(kDecls) + R"(
    RoadUser(P, T) <- On(P, R), Road(R, T).
    On(defendant, road1, "15:15").
    Road(road1).
  )");
  ParsedProgram padded = pad_temporal(p);
  const ExtendedRule& r = padded.rules[0];
  EXPECT_EQ(r.head.temporal, V("T"));
  EXPECT_FALSE(r.head.atemporal_source);
  const ExtendedAtom& on = r.body.children[0].atom;
  ASSERT_TRUE(on.temporal);
  EXPECT_TRUE(on.atemporal_source);
  EXPECT_EQ(on.temporal->name().rfind("_T", 0), 0u);
  EXPECT_EQ(on.args.size(), 2u);

  EXPECT_EQ(plain_atom(padded.facts[0].atom), AT("On", {C("defendant"), C("road1")}, C("15:15")));
  EXPECT_TRUE(padded.facts[1].atom.atemporal_source);
}

TEST(Pad, FreshVariablesDistinctWithinRule) {
  ParsedProgram p = parse_program(std::string(kDecls) + "RoadUser(P) <- On(P, R), Road(R), On(R, _T1).");
  ParsedProgram padded = pad_temporal(p);
  std::vector<std::string> names{padded.rules[0].head.temporal->name()};
  for_each_leaf(padded.rules[0].body, [&](const ExtendedAtom& a) { names.push_back(a.temporal->name()); });
  std::sort(names.begin(), names.end());
  EXPECT_EQ(std::adjacent_find(names.begin(), names.end()), names.end());
}

TEST(Pad, IsIdempotent) {
  ParsedProgram once = pad_temporal(builtin_program());
  EXPECT_EQ(pad_temporal(once), once);
}

TEST(Pad, WrongArityRaises) {
  ParsedProgram p = parse_program(std::string(kDecls) + "Road(a, b, c).");
  EXPECT_THROW(pad_temporal(p), ArityError);
}

TEST(Validate, ReportsUndeclaredAndArity) {
  ParsedProgram p = parse_program(std::string(kDecls) + R"(
    #pred Bad/2 "{A} only".
    RoadUser(P) <- Walking(P), On(P).
  )");
  auto diags = validate_program(p);
  std::vector<std::string> codes;
  for (const auto& d : diags) codes.push_back(d.code);
  EXPECT_EQ(codes, (std::vector<std::string>{"template-arity", "undeclared-predicate", "arity"}));
  EXPECT_EQ(diags[1].pos.line, 9u);
  EXPECT_THROW(compile(p), CompileError);
}

TEST(Validate, BuiltinIsClean) { EXPECT_TRUE(validate_program(builtin_program()).empty()); }

TEST(Compile, DefaultIdsAndDuplicates) {
  KnowledgeBase kb = compile(parse_program(std::string(kDecls) + R"(
    RoadUser(P) <- On(P, R), Road(R).
    Road(road1).
    @id(s) Sign(s1).
  )"));
  EXPECT_NE(kb.find_rule("r1"), nullptr);
  EXPECT_NE(kb.find_rule("f1"), nullptr);
  EXPECT_NE(kb.find_rule("s"), nullptr);
  EXPECT_THROW(compile(parse_program(std::string(kDecls) + "@id(x) Road(a). @id(x) Road(b).")),
               CompileError);
  EXPECT_THROW(parse_program(std::string(kDecls) + "Road(a 'OR' b)."), ParseError);
}

TEST(Compile, BuiltinExpansions) {
  const KnowledgeBase& kb = builtin_kb();
  ASSERT_EQ(kb.expansions.size(), 3u);
  EXPECT_EQ(kb.expansions[0].rule_id, "§4.1");
  EXPECT_EQ(kb.expansions[0].count, 6u);
  EXPECT_EQ(kb.rules.size(), 8u);
}

TEST(Goal, PadsAgainstDeclarations) {
  auto goal = parse_goal("BrokenLaw(P, X, T)", builtin_kb());
  ASSERT_EQ(goal.size(), 1u);
  EXPECT_EQ(goal[0], AT("BrokenLaw", {V("P"), V("X")}, V("T")));
  auto two = parse_goal("RoadUser(P), Road(R).", builtin_kb());
  ASSERT_EQ(two.size(), 2u);
  EXPECT_TRUE(two[0].atemporal_source);
  EXPECT_NE(*two[0].temporal, *two[1].temporal);
  EXPECT_THROW(parse_goal("Road(a) \\/ Road(b)", builtin_kb()), ParseError);
  EXPECT_THROW(parse_goal("Flying(P)", builtin_kb()), CompileError);
}

TEST(Facts, CompileAgainstKb) {
  auto facts = compile_facts("Road(r). On(a, r, \"9:00\").", builtin_kb(), 5);
  ASSERT_EQ(facts.size(), 2u);
  EXPECT_EQ(facts[0].id, "fact5");
  EXPECT_EQ(facts[1].head, AT("On", {C("a"), C("r")}, C("9:00")));
  EXPECT_THROW(compile_facts("p(X) <- q(X).", builtin_kb()), ParseError);
  Fact f = parse_fact("Road(r)", builtin_kb());
  EXPECT_TRUE(f.atom.atemporal_source);
}

TEST(RoundTrip, BuiltinProgram) {
  ParsedProgram p = builtin_program();
  EXPECT_EQ(parse_program(to_source(p)), p);
}

// Random programs in the extended language survive printing and parsing.
TEST(RoundTrip, RandomPrograms) {
  std::mt19937_64 rng(5);
  auto pick = [&](std::size_t n) { return static_cast<std::size_t>(rng() % n); };
  std::vector<Term> pool{V("X"), V("Y"), C("a"), C("b2"), C("15:15"), C("with space"), C("Q\"uote")};
  auto atom = [&] {
    ExtendedAtom a;
    a.predicate = "p" + std::to_string(pick(3));
    std::size_t n = pick(3);
    for (std::size_t i = 0; i < n; ++i) {
      std::vector<Term> set{pool[pick(pool.size())]};
      if (pick(4) == 0) set.push_back(pool[2 + pick(pool.size() - 2)]);
      a.args.push_back(set);
    }
    return a;
  };
  auto formula = [&](auto& self, int depth) -> Formula {
    if (depth == 0 || pick(3) == 0) return Formula::leaf(atom());
    std::vector<Formula> parts;
    std::size_t n = 2 + pick(2);
    for (std::size_t i = 0; i < n; ++i) parts.push_back(self(self, depth - 1));
    return Formula::node(pick(2) ? Formula::Kind::conjunction : Formula::Kind::disjunction,
                         std::move(parts));
  };
  for (int i = 0; i < 300; ++i) {
    ParsedProgram p;
    p.decls.push_back({"p0", 1, "{A} is p0", {}});
    ExtendedRule r;
    if (pick(2)) r.id = "rule " + std::to_string(i);
    if (pick(2)) r.provenance.law_refs = {"L"};
    r.head = atom();
    for (auto& set : r.head.args) set.erase(set.begin() + 1, set.end());
    r.body = formula(formula, 3);
    p.rules.push_back(r);
    Fact f;
    f.atom = atom();
    for (auto& set : f.atom.args) set.erase(set.begin() + 1, set.end());
    p.facts.push_back(f);
    std::string src = to_source(p);
    ParsedProgram back = parse_program(src);
    ASSERT_EQ(back, p) << src;
  }
}

// With every 'OR' atom sitting directly in the top-level conjunction, the
// number of pure rules is the product of the OR-set sizes times the number
// of disjuncts of the remaining formula.
TEST(Desugar, CountIsProductOfOrSetsTimesDnf) {
  std::mt19937_64 rng(9);
  auto pick = [&](std::size_t n) { return static_cast<std::size_t>(rng() % n); };
  for (int i = 0; i < 200; ++i) {
    std::vector<Formula> top;
    std::size_t or_product = 1;
    std::size_t dnf = 1;
    std::size_t nparts = 1 + pick(4);
    for (std::size_t k = 0; k < nparts; ++k) {
      if (pick(2)) {
        ExtendedAtom a = xatom("o", {});
        std::size_t nargs = 1 + pick(2);
        for (std::size_t j = 0; j < nargs; ++j) {
          std::size_t size = 1 + pick(3);
          std::vector<Term> set;
          for (std::size_t m = 0; m < size; ++m) set.push_back(C("c" + std::to_string(m)));
          or_product *= size;
          a.args.push_back(set);
        }
        top.push_back(Formula::leaf(a));
      } else {
        std::size_t n = 1 + pick(3);
        std::vector<Formula> alts;
        for (std::size_t j = 0; j < n; ++j)
          alts.push_back(Formula::leaf(xatom("d" + std::to_string(j), {{V("X")}})));
        dnf *= n;
        top.push_back(Formula::node(Formula::Kind::disjunction, std::move(alts)));
      }
    }
    ExtendedRule r;
    r.id = "x";
    r.head = xatom("h", {{V("X")}});
    r.body = Formula::node(Formula::Kind::conjunction, std::move(top));
    EXPECT_EQ(desugar_rule(r).size(), or_product * dnf) << to_source(r.body);
  }
}

namespace {

ExtendedAtom random_xatom(std::mt19937_64& rng, std::size_t max_or_sets, std::size_t& or_sets) {
  static const char* kPreds[] = {"p", "q", "r"};
  ExtendedAtom a = xatom(kPreds[rng() % 3], {});
  std::vector<Term> pool{V("X"), V("Y"), C("a"), C("b"), C("c")};
  std::size_t n = 1 + rng() % 2;
  for (std::size_t i = 0; i < n; ++i) {
    if (or_sets < max_or_sets && rng() % 4 == 0) {
      ++or_sets;
      a.args.push_back({C("a"), rng() % 2 ? C("b") : C("c")});
    } else {
      a.args.push_back({pool[rng() % pool.size()]});
    }
  }
  return a;
}

}  // namespace

// The set of pure rules is satisfied by exactly the same (fact set,
// assignment) pairs as the extended body, checked over every fact subset of
// a small universe.
TEST(Desugar, EquivalentToExtendedBodyOnAllFactSubsets) {
  std::mt19937_64 rng(21);
  std::vector<Atom> universe;
  for (const char* c : {"a", "b", "c"}) universe.push_back(A("p", {C(c)}));
  for (const char* c : {"a", "b"}) universe.push_back(A("q", {C(c)}));
  universe.push_back(A("r", {C("a")}));
  for (const char* x : {"a", "b"})
    for (const char* y : {"a", "c"}) universe.push_back(A("p", {C(x), C(y)}));

  std::vector<Assignment> assignments;
  for (const char* x : {"a", "b", "c"})
    for (const char* y : {"a", "b", "c"}) assignments.push_back({{"X", C(x)}, {"Y", C(y)}});

  for (int i = 0; i < 40; ++i) {
    std::size_t or_sets = 0;
    std::vector<Formula> conj;
    std::size_t nparts = 1 + rng() % 3;
    for (std::size_t k = 0; k < nparts; ++k) {
      if (rng() % 2) {
        std::vector<Formula> alts;
        for (std::size_t j = 0; j < 2 + rng() % 2; ++j)
          alts.push_back(Formula::leaf(random_xatom(rng, 2, or_sets)));
        conj.push_back(Formula::node(Formula::Kind::disjunction, std::move(alts)));
      } else {
        conj.push_back(Formula::leaf(random_xatom(rng, 2, or_sets)));
      }
    }
    ExtendedRule r;
    r.id = "x";
    r.head = xatom("h", {{V("X")}});
    r.body = Formula::node(Formula::Kind::conjunction, std::move(conj));
    auto pure = desugar_rule(r);

    for (std::uint32_t mask = 0; mask < (1u << universe.size()); mask += 7) {
      std::set<Atom> facts;
      for (std::size_t b = 0; b < universe.size(); ++b)
        if (mask & (1u << b)) facts.insert(universe[b]);
      for (const auto& g : assignments) {
        bool want = holds(r.body, facts, g);
        bool got = std::any_of(pure.begin(), pure.end(),
                               [&](const Rule& p) { return holds(p.body, facts, g); });
        ASSERT_EQ(got, want) << to_source(r.body) << " mask " << mask;
      }
    }
  }
}
