// lexrules: check a knowledge base, answer queries with explanations, or
// serve sessions over HTTP.
//
// Exit codes: 0 success, 1 invalid input (syntax, diagnostics, bad goal),
// 2 environment trouble (unreadable file, port in use, bad usage).

#include <CLI11.hpp>
#include <httplib.h>

#include <csignal>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "lexrules/export.hpp"
#include "lexrules/kb_language.hpp"
#include "lexrules/render.hpp"
#include "lexrules/service.hpp"
#include "lexrules/sld.hpp"
#include "lexrules/traffic_kb.hpp"

using namespace lexrules;

namespace {

struct Exit {
  int code;
};

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    std::cerr << "error: cannot read " << path << "\n";
    throw Exit{2};
  }
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void report(const std::string& where, const CompileError& e) {
  for (const auto& d : e.diagnostics())
    std::cerr << where << ":" << d.pos.line << ":" << d.pos.column << ": " << d.code << ": "
              << d.message << "\n";
}

KnowledgeBase load_kb(const std::string& path) {
  std::string where = path.empty() ? "<builtin>" : path;
  std::string text = path.empty() ? std::string(builtin_source()) : read_file(path);
  try {
    return compile(parse_program(text));
  } catch (const CompileError& e) {
    report(where, e);
  } catch (const Error& e) {
    std::cerr << where << ": " << e.what() << "\n";
  }
  throw Exit{1};
}

int cmd_check(const std::string& kb_path) {
  std::string where = kb_path.empty() ? "<builtin>" : kb_path;
  std::string text = kb_path.empty() ? std::string(builtin_source()) : read_file(kb_path);
  ParsedProgram parsed;
  KnowledgeBase kb;
  try {
    parsed = parse_program(text);
    kb = compile(parsed);
  } catch (const CompileError& e) {
    report(where, e);
    return 1;
  } catch (const Error& e) {
    std::cerr << where << ": " << e.what() << "\n";
    return 1;
  }
  std::cout << where << ": " << parsed.decls.size() << " predicates, " << parsed.rules.size()
            << " rules, " << parsed.facts.size() << " facts\n";
  std::size_t total = 0;
  for (const auto& x : kb.expansions) {
    std::cout << x.rule_id << " rule: " << x.count
              << (x.count == 1 ? " expansion\n" : " expansions\n");
    total += x.count;
  }
  std::cout << "total: " << total << " pure rules\n";
  return 0;
}

int cmd_desugar(const std::string& kb_path) {
  std::cout << to_source(load_kb(kb_path));
  return 0;
}

void print_node(const AnswerExplanation& ex, const ExplanationNode& n,
                const KnowledgeBase& kb, std::size_t depth) {
  std::string pad(depth * 2, ' ');
  std::cout << pad << node_label(ex, n, kb.decls) << (n.is_fact ? " [fact]" : "") << "\n";
  for (const auto& alt : n.alternatives) {
    std::size_t below = depth + 1;
    if (!alt.rule_id.empty()) {
      std::cout << pad << "  by " << alt.rule_id;
      for (const auto& law : alt.provenance.law_refs) std::cout << " (" << law << ")";
      std::cout << ":\n";
      below = depth + 2;
    }
    for (const auto& pid : alt.premises) print_node(ex, *ex.find(pid), kb, below);
  }
}

struct QueryOptions {
  std::string kb;
  std::vector<std::string> facts;
  std::string case_name;
  std::string goal;
  bool json = false;
  SolveLimits limits;
};

int cmd_query(const QueryOptions& o) {
  KnowledgeBase kb = load_kb(o.kb);
  std::vector<Rule> program = kb.rules;
  std::size_t next = 1;
  auto add_facts = [&](const std::string& where, std::string_view text) {
    try {
      for (Rule& r : compile_facts(text, kb, next)) {
        program.push_back(std::move(r));
        ++next;
      }
    } catch (const CompileError& e) {
      report(where, e);
      throw Exit{1};
    } catch (const Error& e) {
      std::cerr << where << ": " << e.what() << "\n";
      throw Exit{1};
    }
  };
  if (!o.case_name.empty()) {
    try {
      add_facts(o.case_name, case_source(o.case_name));
    } catch (const UnknownCaseError& e) {
      std::cerr << "error: " << e.what() << "\n";
      return 1;
    }
  }
  for (const auto& path : o.facts) add_facts(path, read_file(path));

  Goal goal;
  try {
    goal.atoms = parse_goal(o.goal, kb);
  } catch (const CompileError& e) {
    report("<query>", e);
    return 1;
  } catch (const Error& e) {
    std::cerr << "<query>: " << e.what() << "\n";
    return 1;
  }

  AnswerSet answers = solve(goal, program, o.limits);
  auto explained = explain_answers(goal, answers);

  if (o.json) {
    Json list = Json::array();
    for (std::size_t i = 0; i < explained.size(); ++i)
      list.push_back(answer_json(explained[i], "a" + std::to_string(i), kb.decls, true));
    Json doc = {{"goal", to_string(goal)},
                {"answers", std::move(list)},
                {"truncated", answers.truncated()},
                {"depth_limit_hit", answers.depth_limit_hit},
                {"refutation_limit_hit", answers.refutation_limit_hit}};
    std::cout << doc.dump(2) << "\n";
    return 0;
  }

  auto plural = [](std::size_t n, const char* word) {
    return std::to_string(n) + " " + word + (n == 1 ? "" : "s");
  };
  if (explained.size() != 1) std::cout << plural(explained.size(), "answer") << "\n";
  for (const auto& ex : explained) {
    if (explained.size() == 1) std::cout << "1 answer; ";
    std::cout << plural(ex.refutations, "derivation") << "; "
              << render_atoms(ex.atoms, kb.decls) << "\n";
    print_node(ex, ex.nodes.front(), kb, 1);
  }
  if (answers.truncated())
    std::cout << "warning: search limits reached; answers may be incomplete\n";
  return 0;
}

httplib::Server* running = nullptr;

void stop_server(int) {
  if (running) running->stop();
}

int cmd_serve(const std::string& kb_path, const std::string& host, int port,
              const std::string& data_dir, SolveLimits limits) {
  SessionService service(load_kb(kb_path), {data_dir, limits});
  httplib::Server server;
  service.mount(server);
  // Plain SO_REUSEADDR: the library default adds SO_REUSEPORT, which would
  // let a second server share a port that is already taken.
  server.set_socket_options([](socket_t sock) {
    int yes = 1;
    setsockopt(sock, SOL_SOCKET, SO_REUSEADDR, &yes, sizeof yes);
  });
  server.set_logger([](const httplib::Request& req, const httplib::Response& res) {
    std::cerr << req.method << " " << req.path << " " << res.status << std::endl;
  });
  if (!server.bind_to_port(host, port)) {
    std::cerr << "error: cannot listen on " << host << ":" << port << "\n";
    return 2;
  }
  std::cout << "listening on http://" << host << ":" << port << std::endl;
  running = &server;
  std::signal(SIGINT, stop_server);
  std::signal(SIGTERM, stop_server);
  server.listen_after_bind();
  running = nullptr;
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Explainable rule-based inference over statute knowledge bases"};
  app.require_subcommand(1);

  std::string kb_path;
  auto* check = app.add_subcommand("check", "Validate a knowledge base and count its expansions");
  check->add_option("--kb", kb_path, "Knowledge base file (default: builtin traffic corpus)");

  auto* desugar = app.add_subcommand("desugar", "Print the knowledge base as pure rules");
  desugar->add_option("--kb", kb_path, "Knowledge base file (default: builtin traffic corpus)");

  QueryOptions q;
  auto* query = app.add_subcommand("query", "Answer a goal and explain every answer");
  query->add_option("--kb", q.kb, "Knowledge base file (default: builtin traffic corpus)");
  query->add_option("--facts", q.facts, "Facts file; may be repeated");
  query->add_option("--case", q.case_name, "Builtin case whose facts are loaded first");
  query->add_option("--query", q.goal, "Goal, e.g. \"BrokenLaw(P, X, T)\"")->required();
  query->add_flag("--json", q.json, "Emit the explanation document as JSON");
  query->add_option("--max-depth", q.limits.max_depth, "Derivation depth limit");
  query->add_option("--max-refutations", q.limits.max_refutations, "Refutation limit");

  std::string host = "127.0.0.1";
  int port = 8080;
  std::string data_dir = "sessions";
  SolveLimits serve_limits;
  auto* serve = app.add_subcommand("serve", "Run the HTTP session service");
  serve->add_option("--kb", kb_path, "Knowledge base file (default: builtin traffic corpus)");
  serve->add_option("--host", host, "Address to bind");
  serve->add_option("--port", port, "Port to listen on");
  serve->add_option("--data-dir", data_dir, "Directory for session files");
  serve->add_option("--max-depth", serve_limits.max_depth, "Derivation depth limit");
  serve->add_option("--max-refutations", serve_limits.max_refutations, "Refutation limit");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (*check) return cmd_check(kb_path);
    if (*desugar) return cmd_desugar(kb_path);
    if (*query) return cmd_query(q);
    return cmd_serve(kb_path, host, port, data_dir, serve_limits);
  } catch (const Exit& e) {
    return e.code;
  }
}
