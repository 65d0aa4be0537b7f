#pragma once

// HTTP session service. A session holds an ordered fact list over the
// service's fixed knowledge base; clients edit facts, run queries and walk
// the proof view of an answer node by node.
//
// Answer ids carry the session generation ("g3-a0"). Every fact change or
// query bumps the generation, so ids from an older result are refused with
// 409 instead of resolving to something else.

#include <httplib.h>
#include <json.hpp>

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <utility>
#include <vector>

#include "lexrules/export.hpp"
#include "lexrules/kb_language.hpp"
#include "lexrules/render.hpp"
#include "lexrules/sld.hpp"

namespace lexrules {

class ServiceError : public Error {
 public:
  ServiceError(int status, std::string code, const std::string& message, Json details = {})
      : Error(message), status_(status), code_(std::move(code)), details_(std::move(details)) {}

  int status() const { return status_; }
  const std::string& code() const { return code_; }

  Json body() const {
    Json out = {{"error", code_}, {"message", what()}};
    if (!details_.is_null()) out["details"] = details_;
    return out;
  }

 private:
  int status_;
  std::string code_;
  Json details_;
};

class SessionService {
 public:
  struct Options {
    std::filesystem::path data_dir;  // empty keeps sessions in memory only
    SolveLimits limits;
  };

  SessionService(KnowledgeBase kb, Options options)
      : kb_(std::move(kb)), options_(std::move(options)), rng_(std::random_device{}()) {}

  const KnowledgeBase& kb() const { return kb_; }

  Json create_session() {
    auto s = std::make_shared<Session>();
    {
      std::lock_guard lock(store_mutex_);
      do s->id = random_id(); while (sessions_.count(s->id) || on_disk(s->id));
    }
    persist(*s);
    std::lock_guard lock(store_mutex_);
    sessions_[s->id] = s;
    return {{"session", s->id}, {"facts", Json::array()}};
  }

  Json list_facts(const std::string& sid) {
    auto s = session(sid);
    std::lock_guard lock(s->mutex);
    return facts_json(*s);
  }

  Json add_fact(const std::string& sid, const std::string& text) {
    auto s = session(sid);
    std::lock_guard lock(s->mutex);
    StoredFact f = parse_stored(trim(text));
    s->facts.push_back(std::move(f));
    mutated(*s);
    return fact_json(s->facts.size() - 1, s->facts.back());
  }

  Json remove_fact(const std::string& sid, std::size_t index) {
    auto s = session(sid);
    std::lock_guard lock(s->mutex);
    if (index >= s->facts.size())
      throw ServiceError(404, "out-of-range",
                         "no fact at index " + std::to_string(index) + " of " +
                             std::to_string(s->facts.size()));
    s->facts.erase(s->facts.begin() + static_cast<std::ptrdiff_t>(index));
    mutated(*s);
    return facts_json(*s);
  }

  Json run_query(const std::string& sid, const std::string& goal_text) {
    auto s = session(sid);
    std::lock_guard lock(s->mutex);
    Goal goal{guard([&] { return parse_goal(strip_goal(goal_text), kb_); })};
    AnswerSet answers = solve(goal, program_of(*s), options_.limits);
    s->generation++;
    persist(*s);
    s->last = Result{s->generation, explain_answers(goal, answers)};

    Json list = Json::array();
    for (std::size_t i = 0; i < s->last->answers.size(); ++i)
      list.push_back(answer_json(s->last->answers[i], answer_id(s->generation, i),
                                 kb_.decls, false));
    return {{"goal", to_string(goal)},
            {"generation", s->generation},
            {"answers", std::move(list)},
            {"truncated", answers.truncated()},
            {"depth_limit_hit", answers.depth_limit_hit},
            {"refutation_limit_hit", answers.refutation_limit_hit}};
  }

  Json explanation_node(const std::string& sid, const std::string& aid,
                        const std::string& nid) {
    auto s = session(sid);
    std::lock_guard lock(s->mutex);
    const AnswerExplanation& ex = answer(*s, aid);
    const ExplanationNode* n = ex.find(nid);
    if (!n) throw ServiceError(404, "not-found", "no node '" + nid + "' in answer " + aid);
    return node_payload(ex, *n, kb_.decls);
  }

  Json explanation_tree(const std::string& sid, const std::string& aid) {
    auto s = session(sid);
    std::lock_guard lock(s->mutex);
    return answer_json(answer(*s, aid), aid, kb_.decls, true);
  }

  Json rule_provenance(const std::string& rid) const {
    const Rule* r = kb_.find_rule(rid);
    if (!r) throw ServiceError(404, "not-found", "unknown rule '" + rid + "'");
    return {{"rule_id", r->id},
            {"rule", render_rule(*r, kb_.decls)},
            {"provenance", to_json(r->provenance)}};
  }

  /// Registers the endpoints, permissive CORS headers and JSON error bodies.
  void mount(httplib::Server& server) {
    server.set_default_headers({{"Access-Control-Allow-Origin", "*"},
                                {"Access-Control-Allow-Methods", "GET, POST, DELETE, OPTIONS"},
                                {"Access-Control-Allow-Headers", "Content-Type"}});
    server.Options(".*", [](const httplib::Request&, httplib::Response& res) {
      res.status = 204;
    });

    const std::string sid = "/sessions/([^/]+)";
    handle(server, "POST", "/sessions", [this](const auto&) { return create_session(); });
    handle(server, "GET", sid + "/facts",
           [this](const httplib::Request& req) { return list_facts(req.matches[1]); });
    handle(server, "POST", sid + "/facts", [this](const httplib::Request& req) {
      return add_fact(req.matches[1], body_field(req, "text"));
    });
    handle(server, "DELETE", sid + "/facts/([^/]+)", [this](const httplib::Request& req) {
      return remove_fact(req.matches[1], parse_index(req.matches[2]));
    });
    handle(server, "POST", sid + "/query", [this](const httplib::Request& req) {
      return run_query(req.matches[1], body_field(req, "goal"));
    });
    handle(server, "GET", sid + "/answers/([^/]+)/nodes/([^/]+)",
           [this](const httplib::Request& req) {
             return explanation_node(req.matches[1], req.matches[2], req.matches[3]);
           });
    handle(server, "GET", sid + "/answers/([^/]+)/tree", [this](const httplib::Request& req) {
      return explanation_tree(req.matches[1], req.matches[2]);
    });
    handle(server, "GET", "/rules/([^/]+)/provenance",
           [this](const httplib::Request& req) { return rule_provenance(req.matches[1]); });

    server.set_error_handler([](const httplib::Request& req, httplib::Response& res) {
      if (!res.body.empty()) return;
      Json body = {{"error", res.status == 404 ? "not-found" : "http-error"},
                   {"message", req.method + " " + req.path}};
      res.set_content(body.dump(), "application/json");
    });
  }

 private:
  struct StoredFact {
    std::string text;  // as entered, surrounding blanks removed
    Fact fact;         // padded against the declarations
  };

  struct Result {
    std::uint64_t generation = 0;
    std::vector<AnswerExplanation> answers;
  };

  struct Session {
    std::mutex mutex;
    std::string id;
    std::vector<StoredFact> facts;
    std::uint64_t generation = 0;
    std::optional<Result> last;
  };

  template <class F>
  static auto guard(F&& f) -> decltype(f()) {
    try {
      return f();
    } catch (const ParseError& e) {
      throw ServiceError(400, "parse-error", e.what());
    } catch (const CompileError& e) {
      Json diags = Json::array();
      for (const auto& d : e.diagnostics())
        diags.push_back({{"code", d.code}, {"message", d.message},
                         {"line", d.pos.line}, {"column", d.pos.column}});
      std::string code = e.diagnostics().empty() ? "invalid" : e.diagnostics().front().code;
      throw ServiceError(400, code, e.what(), std::move(diags));
    } catch (const ArityError& e) {
      throw ServiceError(400, "arity", e.what());
    }
  }

  static std::string trim(std::string_view s) {
    auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string_view::npos) return {};
    auto e = s.find_last_not_of(" \t\r\n");
    return std::string(s.substr(b, e - b + 1));
  }

  static std::string strip_goal(std::string_view s) {
    std::string out = trim(s);
    while (!out.empty() && (out.back() == '.' || out.back() == '?')) out.pop_back();
    return out;
  }

  static bool valid_id(std::string_view id) {
    if (id.size() != 32) return false;
    for (char c : id)
      if (!((c >= '0' && c <= '9') || (c >= 'a' && c <= 'f'))) return false;
    return true;
  }

  static std::string answer_id(std::uint64_t generation, std::size_t index) {
    return "g" + std::to_string(generation) + "-a" + std::to_string(index);
  }

  static std::size_t parse_index(const std::string& s) {
    std::size_t value = 0;
    if (s.empty() || s.size() > 9) throw ServiceError(400, "bad-request", "bad index '" + s + "'");
    for (char c : s) {
      if (c < '0' || c > '9') throw ServiceError(400, "bad-request", "bad index '" + s + "'");
      value = value * 10 + static_cast<std::size_t>(c - '0');
    }
    return value;
  }

  static std::string body_field(const httplib::Request& req, const char* field) {
    Json body = Json::parse(req.body, nullptr, false);
    if (!body.is_object() || !body.contains(field) || !body[field].is_string())
      throw ServiceError(400, "bad-request",
                         std::string("expected a JSON object with a string \"") + field + "\"");
    return body[field].get<std::string>();
  }

  template <class F>
  void handle(httplib::Server& server, const std::string& method, const std::string& pattern,
              F f) {
    auto handler = [f](const httplib::Request& req, httplib::Response& res) {
      try {
        res.set_content(f(req).dump(), "application/json");
      } catch (const ServiceError& e) {
        res.status = e.status();
        res.set_content(e.body().dump(), "application/json");
      } catch (const std::exception& e) {
        res.status = 500;
        res.set_content(Json{{"error", "internal"}, {"message", e.what()}}.dump(),
                        "application/json");
      }
    };
    if (method == "GET") server.Get(pattern, handler);
    else if (method == "POST") server.Post(pattern, handler);
    else server.Delete(pattern, handler);
  }

  std::string random_id() {
    std::uniform_int_distribution<std::uint64_t> dist;
    char buf[33];
    std::snprintf(buf, sizeof buf, "%016llx%016llx",
                  static_cast<unsigned long long>(dist(rng_)),
                  static_cast<unsigned long long>(dist(rng_)));
    return buf;
  }

  std::filesystem::path file_of(const std::string& id) const {
    return options_.data_dir / (id + ".json");
  }

  bool on_disk(const std::string& id) const {
    std::error_code ec;
    return !options_.data_dir.empty() && std::filesystem::exists(file_of(id), ec);
  }

  StoredFact parse_stored(std::string text) const {
    Fact f = guard([&] { return parse_fact(text, kb_); });
    return {std::move(text), std::move(f)};
  }

  std::shared_ptr<Session> session(const std::string& id) {
    std::lock_guard lock(store_mutex_);
    if (auto it = sessions_.find(id); it != sessions_.end()) return it->second;
    if (!valid_id(id) || !on_disk(id))
      throw ServiceError(404, "not-found", "unknown session '" + id + "'");
    auto s = load(id);
    sessions_[id] = s;
    return s;
  }

  std::shared_ptr<Session> load(const std::string& id) const {
    std::ifstream in(file_of(id), std::ios::binary);
    Json doc = Json::parse(in, nullptr, false);
    if (!doc.is_object() || !doc["facts"].is_array())
      throw ServiceError(500, "storage", "session file for '" + id + "' is corrupt");
    auto s = std::make_shared<Session>();
    s->id = id;
    s->generation = doc.value("generation", std::uint64_t{0});
    for (const auto& t : doc["facts"]) s->facts.push_back(parse_stored(t.get<std::string>()));
    return s;
  }

  // Write to a temporary file and rename it over the old one.
  void persist(const Session& s) const {
    if (options_.data_dir.empty()) return;
    Json facts = Json::array();
    for (const auto& f : s.facts) facts.push_back(f.text);
    Json doc = {{"id", s.id}, {"generation", s.generation}, {"facts", std::move(facts)}};
    std::error_code ec;
    std::filesystem::create_directories(options_.data_dir, ec);
    auto target = file_of(s.id);
    auto tmp = target;
    tmp += ".tmp";
    {
      std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
      out << doc.dump(2) << '\n';
      out.flush();
      if (!out) throw ServiceError(500, "storage", "cannot write " + tmp.string());
    }
    std::filesystem::rename(tmp, target, ec);
    if (ec) throw ServiceError(500, "storage", "cannot replace " + target.string() + ": " + ec.message());
  }

  void mutated(Session& s) {
    s.generation++;
    s.last.reset();
    persist(s);
  }

  std::vector<Rule> program_of(const Session& s) const {
    std::vector<Rule> program = kb_.rules;
    for (std::size_t i = 0; i < s.facts.size(); ++i) {
      const Fact& f = s.facts[i].fact;
      program.push_back({f.id.empty() ? "fact" + std::to_string(i + 1) : f.id,
                         plain_atom(f.atom), {}, f.provenance});
    }
    return program;
  }

  Json fact_json(std::size_t index, const StoredFact& f) const {
    return {{"index", index},
            {"text", f.text},
            {"atom", to_source(f.fact.atom)},
            {"label", render_atom(plain_atom(f.fact.atom), kb_.decls).text}};
  }

  Json facts_json(const Session& s) const {
    Json list = Json::array();
    for (std::size_t i = 0; i < s.facts.size(); ++i) list.push_back(fact_json(i, s.facts[i]));
    return {{"session", s.id}, {"facts", std::move(list)}};
  }

  const AnswerExplanation& answer(const Session& s, const std::string& aid) const {
    unsigned long long gen = 0;
    std::size_t index = 0;
    int used = 0;
    if (std::sscanf(aid.c_str(), "g%llu-a%zu%n", &gen, &index, &used) != 2 ||
        static_cast<std::size_t>(used) != aid.size())
      throw ServiceError(404, "not-found", "malformed answer id '" + aid + "'");
    if (!s.last || s.last->generation != gen)
      throw ServiceError(409, "stale-result",
                         "answer " + aid + " belongs to an older result; run the query again");
    if (index >= s.last->answers.size())
      throw ServiceError(404, "not-found", "no answer " + aid);
    return s.last->answers[index];
  }

  KnowledgeBase kb_;
  Options options_;
  std::mutex store_mutex_;
  std::mt19937_64 rng_;
  std::map<std::string, std::shared_ptr<Session>> sessions_;
};

}  // namespace lexrules
