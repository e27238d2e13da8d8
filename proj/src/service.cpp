#include "medbot/service.hpp"

#include <algorithm>
#include <charconv>
#include <cstdlib>
#include <iostream>
#include <variant>

#include "httplib.h"
#include "medbot/error.hpp"
#include "medbot/json_io.hpp"
#include "medbot/util.hpp"

namespace medbot {

std::optional<std::string> process_env(const std::string& name) {
  if (const char* v = std::getenv(name.c_str())) return std::string(v);
  return std::nullopt;
}

namespace {

enum class Kind { String, Path, Int, Size, Double, Bool };

struct Field {
  const char* key;
  Kind kind;
  void* target;
};

std::vector<Field> fields(ServiceConfig& c) {
  return {{"host", Kind::String, &c.host},
          {"port", Kind::Int, &c.port},
          {"data_dir", Kind::Path, &c.data_dir},
          {"graph_path", Kind::Path, &c.graph_path},
          {"resource_dir", Kind::Path, &c.resource_dir},
          {"static_dir", Kind::Path, &c.static_dir},
          {"cors_origin", Kind::String, &c.cors_origin},
          {"guideline_url", Kind::String, &c.guideline_url},
          {"session_gap_seconds", Kind::Int, &c.session_gap_seconds},
          {"intent_threshold", Kind::Double, &c.intent_threshold},
          {"similarity_threshold", Kind::Double, &c.similarity_threshold},
          {"alert_threshold", Kind::Double, &c.alert_threshold},
          {"fringe_k", Kind::Size, &c.fringe_k},
          {"fringe_aggregator", Kind::String, &c.fringe_aggregator},
          {"include_drugs", Kind::Bool, &c.include_drugs},
          {"compact_every", Kind::Size, &c.compact_every}};
}

[[noreturn]] void bad(const std::string& key, const std::string& source, const std::string& what) {
  throw ConfigError("config key '" + key + "' (" + source + "): " + what);
}

template <class T>
T parse_number(const std::string& key, const std::string& source, const std::string& text) {
  T v{};
  auto [p, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc() || p != text.data() + text.size()) bad(key, source, "expected a number, got '" + text + "'");
  return v;
}

void assign_json(const Field& f, const Json& v, const std::filesystem::path& base, const std::string& source) {
  switch (f.kind) {
    case Kind::String:
    case Kind::Path: {
      if (!v.is_string()) bad(f.key, source, "expected a string");
      if (f.kind == Kind::String) {
        *static_cast<std::string*>(f.target) = v.get<std::string>();
      } else {
        std::filesystem::path p = v.get<std::string>();
        *static_cast<std::filesystem::path*>(f.target) = p.empty() || p.is_absolute() ? p : base / p;
      }
      break;
    }
    case Kind::Int:
      if (!v.is_number_integer()) bad(f.key, source, "expected an integer");
      if (f.target == nullptr) break;
      if (std::string(f.key) == "port") {
        *static_cast<int*>(f.target) = v.get<int>();
      } else {
        *static_cast<std::int64_t*>(f.target) = v.get<std::int64_t>();
      }
      break;
    case Kind::Size:
      if (!v.is_number_unsigned()) bad(f.key, source, "expected a non-negative integer");
      *static_cast<std::size_t*>(f.target) = v.get<std::size_t>();
      break;
    case Kind::Double:
      if (!v.is_number()) bad(f.key, source, "expected a number");
      *static_cast<double*>(f.target) = v.get<double>();
      break;
    case Kind::Bool:
      if (!v.is_boolean()) bad(f.key, source, "expected true or false");
      *static_cast<bool*>(f.target) = v.get<bool>();
      break;
  }
}

void assign_text(const Field& f, const std::string& text, const std::string& source) {
  switch (f.kind) {
    case Kind::String: *static_cast<std::string*>(f.target) = text; break;
    case Kind::Path: *static_cast<std::filesystem::path*>(f.target) = text; break;
    case Kind::Int:
      if (std::string(f.key) == "port") {
        *static_cast<int*>(f.target) = parse_number<int>(f.key, source, text);
      } else {
        *static_cast<std::int64_t*>(f.target) = parse_number<std::int64_t>(f.key, source, text);
      }
      break;
    case Kind::Size: *static_cast<std::size_t*>(f.target) = parse_number<std::size_t>(f.key, source, text); break;
    case Kind::Double: {
      char* end = nullptr;
      double d = std::strtod(text.c_str(), &end);
      if (text.empty() || end != text.c_str() + text.size()) bad(f.key, source, "expected a number, got '" + text + "'");
      *static_cast<double*>(f.target) = d;
      break;
    }
    case Kind::Bool: {
      std::string t = to_lower(text);
      if (t == "true" || t == "1") {
        *static_cast<bool*>(f.target) = true;
      } else if (t == "false" || t == "0") {
        *static_cast<bool*>(f.target) = false;
      } else {
        bad(f.key, source, "expected true or false, got '" + text + "'");
      }
      break;
    }
  }
}

void validate(const ServiceConfig& c) {
  if (c.port < 0 || c.port > 65535) bad("port", "value", "must be within 0..65535");
  if (c.session_gap_seconds <= 0) bad("session_gap_seconds", "value", "must be positive");
  for (auto [key, v] : {std::pair{"intent_threshold", c.intent_threshold},
                        {"similarity_threshold", c.similarity_threshold},
                        {"alert_threshold", c.alert_threshold}}) {
    if (!(v >= 0.0 && v <= 1.0)) bad(key, "value", "must lie in [0, 1]");
  }
  if (c.fringe_k == 0) bad("fringe_k", "value", "must be at least 1");
  if (c.fringe_aggregator != "max" && c.fringe_aggregator != "mean") {
    bad("fringe_aggregator", "value", "must be 'max' or 'mean'");
  }
  if (c.data_dir.empty()) bad("data_dir", "value", "must be set");
}

}  // namespace

ServiceConfig load_service_config(const std::optional<std::filesystem::path>& file, const EnvLookup& env) {
  ServiceConfig c;
  auto table = fields(c);
  if (file) {
    if (!std::filesystem::exists(*file)) throw ConfigError("config file not found: " + file->string());
    Json j;
    try {
      j = Json::parse(read_file(*file));
    } catch (const Json::parse_error& e) {
      throw ConfigError(file->string() + ": at byte " + std::to_string(e.byte) + ": invalid JSON");
    }
    if (!j.is_object()) throw ConfigError(file->string() + ": expected a JSON object");
    auto base = std::filesystem::absolute(*file).parent_path();
    for (const auto& [key, value] : j.items()) {
      auto it = std::find_if(table.begin(), table.end(), [&](const Field& f) { return key == f.key; });
      if (it == table.end()) throw ConfigError("unknown config key '" + key + "' in " + file->string());
      assign_json(*it, value, base, file->string());
    }
  }
  for (const auto& f : table) {
    std::string name = "MEDBOT_";
    for (const char* p = f.key; *p; ++p) name += static_cast<char>(std::toupper(static_cast<unsigned char>(*p)));
    if (auto v = env(name)) assign_text(f, *v, "environment " + name);
  }
  validate(c);
  return c;
}

// ------------------------------------------------------------------ server

namespace {

void send_json(httplib::Response& res, int status, const Json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

void send_error(httplib::Response& res, int status, const std::string& message) {
  send_json(res, status, Json{{"error", message}});
}

Json reply_json(const ChatEngine::Reply& r) {
  Json recorded = Json::array();
  for (const auto& rec : r.response.recorded) {
    recorded.push_back({{"kind", to_string(rec.kind)}, {"lemma_key", rec.lemma_key}});
  }
  Json j = {{"reply_text", r.response.text},
            {"recorded", std::move(recorded)},
            {"session_id", r.session_id},
            {"follow_up_pending", r.follow_up_pending},
            {"intent", {{"tag", to_string(r.parsed.intent.tag)}, {"confidence", r.parsed.intent.confidence}}},
            {"guideline_link", r.response.guideline_link ? Json(*r.response.guideline_link) : Json(nullptr)},
            {"evidence_sentences", r.response.evidence_sentences}};
  return j;
}

std::optional<std::size_t> parse_k(const httplib::Request& req, std::size_t fallback) {
  if (!req.has_param("k")) return fallback;
  std::string text = req.get_param_value("k");
  std::size_t k = 0;
  auto [p, ec] = std::from_chars(text.data(), text.data() + text.size(), k);
  if (ec != std::errc() || p != text.data() + text.size() || k == 0) return std::nullopt;
  return k;
}

struct ChatInput {
  std::string patient_id;
  std::string message;
  std::optional<Timestamp> client_timestamp;
};

// Returns an HTTP status on failure.
std::variant<ChatInput, std::pair<int, std::string>> parse_chat_body(const std::string& body, bool need_message) {
  Json j;
  try {
    j = Json::parse(body);
  } catch (const Json::parse_error& e) {
    return std::pair{400, std::string("malformed JSON body: ") + e.what()};
  }
  if (!j.is_object()) return std::pair{400, std::string("body must be a JSON object")};
  ChatInput in;
  if (!j.contains("patient_id") || !j["patient_id"].is_string()) {
    return std::pair{400, std::string("patient_id must be a string")};
  }
  in.patient_id = j["patient_id"].get<std::string>();
  if (need_message) {
    if (!j.contains("message") || !j["message"].is_string()) {
      return std::pair{400, std::string("message must be a string")};
    }
    in.message = j["message"].get<std::string>();
  }
  if (j.contains("client_timestamp") && !j["client_timestamp"].is_null()) {
    if (!j["client_timestamp"].is_string()) return std::pair{400, std::string("client_timestamp must be a string")};
    auto t = parse_timestamp(j["client_timestamp"].get<std::string>());
    if (!t) return std::pair{400, std::string("client_timestamp must look like 2020-04-01T09:00:00Z")};
    in.client_timestamp = t;
  }
  if (trim(in.patient_id).empty()) return std::pair{422, std::string("patient_id must be non-empty")};
  if (need_message && trim(in.message).empty()) return std::pair{422, std::string("message must be non-empty")};
  return in;
}

}  // namespace

Service::Service(ServiceConfig config, std::shared_ptr<const Clock> clock)
    : config_(std::move(config)),
      clock_(std::move(clock)),
      nlp_(NlpResources::load(config_.resource_dir.empty() ? default_resource_dir() : config_.resource_dir)) {
  store_ = std::make_unique<ProfileStore>(
      config_.data_dir, StoreOptions{std::chrono::seconds{config_.session_gap_seconds}, config_.compact_every});
  if (!config_.graph_path.empty() && !std::filesystem::exists(config_.graph_path)) {
    throw ConfigError("config key 'graph_path': file not found: " + config_.graph_path.string());
  }
  if (!config_.graph_path.empty()) graph_.replace(std::make_shared<const KnowledgeGraph>(import_graph(config_.graph_path)));
  auto resource_dir = config_.resource_dir.empty() ? default_resource_dir() : config_.resource_dir;
  DialogueConfig dc;
  dc.guideline_url = config_.guideline_url;
  dc.intent_threshold = config_.intent_threshold;
  engine_ = std::make_unique<ChatEngine>(nlp_, DialogueData::load(resource_dir / "dialogue", nlp_), *store_, graph_, dc);
  server_ = std::make_unique<httplib::Server>();
  routes();
}

Service::~Service() { stop(); }

void Service::reload_graph() {
  std::lock_guard lock(reload_mu_);
  if (config_.graph_path.empty()) throw ConfigError("no graph_path configured");
  graph_.replace(std::make_shared<const KnowledgeGraph>(import_graph(config_.graph_path)));
}

void Service::routes() {
  auto& s = *server_;
  // SO_REUSEPORT would let a second instance share the port silently.
  s.set_socket_options([](socket_t sock) {
    int yes = 1;
    setsockopt(sock, SOL_SOCKET, SO_REUSEADDR, reinterpret_cast<const void*>(&yes), sizeof(yes));
  });
  s.set_default_headers({{"Access-Control-Allow-Origin", config_.cors_origin},
                         {"Access-Control-Allow-Methods", "GET, POST, OPTIONS"},
                         {"Access-Control-Allow-Headers", "Content-Type"}});
  s.Options(R"(/api/.*)", [](const httplib::Request&, httplib::Response& res) { res.status = 204; });
  s.set_exception_handler([](const httplib::Request&, httplib::Response& res, std::exception_ptr ep) {
    try {
      std::rethrow_exception(ep);
    } catch (const std::exception& e) {
      std::cerr << "medbot: request failed: " << e.what() << "\n";
      send_error(res, 500, e.what());
    } catch (...) {
      send_error(res, 500, "internal error");
    }
  });

  s.Get("/api/health", [](const httplib::Request&, httplib::Response& res) { send_json(res, 200, {{"status", "ok"}}); });

  auto chat_like = [this](bool is_chat) {
    return [this, is_chat](const httplib::Request& req, httplib::Response& res) {
      auto parsed = parse_chat_body(req.body, is_chat);
      if (auto* err = std::get_if<std::pair<int, std::string>>(&parsed)) return send_error(res, err->first, err->second);
      auto& in = std::get<ChatInput>(parsed);
      Timestamp now = in.client_timestamp.value_or(clock_->now());
      if (!in.client_timestamp) {
        // The server clock may step back; never let that split history.
        if (auto p = store_->get(in.patient_id); p && !p->sessions.empty()) now = std::max(now, p->sessions.back().end);
      }
      try {
        auto reply = is_chat ? engine_->chat(in.patient_id, in.message, now) : engine_->start(in.patient_id, now);
        Json body = reply_json(reply);
        if (reply.response.store_failed) {
          body["error"] = "patient store unavailable";
          return send_json(res, 503, body);
        }
        send_json(res, 200, body);
      } catch (const OutOfOrderError& e) {
        send_error(res, 409, e.what());
      } catch (const PersistenceError& e) {
        send_error(res, 503, e.what());
      }
    };
  };
  s.Post("/api/chat", chat_like(true));
  s.Post("/api/conversations/start", chat_like(false));

  s.Get(R"(/api/patients/([^/]+))", [this](const httplib::Request& req, httplib::Response& res) {
    auto p = store_->get(req.matches[1]);
    if (!p) return send_error(res, 404, "unknown patient '" + std::string(req.matches[1]) + "'");
    send_json(res, 200, profile_to_json(*p));
  });

  s.Get(R"(/api/patients/([^/]+)/predictions)", [this](const httplib::Request& req, httplib::Response& res) {
    auto k = parse_k(req, 5);
    if (!k) return send_error(res, 400, "k must be a positive integer");
    std::string id = req.matches[1];
    auto target = store_->get(id);
    if (!target) return send_error(res, 404, "unknown patient '" + id + "'");
    auto graph = graph_.get();
    auto agg = config_.fringe_aggregator == "mean" ? FringeAggregator::Mean : FringeAggregator::Max;
    std::vector<Trajectory> cohort;
    for (const auto& p : store_->profiles()) {
      if (p.patient_id != id && !p.sessions.empty()) cohort.push_back(build_trajectory(p, *graph, config_.fringe_k, agg));
    }
    Json body = {{"patient_id", id}, {"k", *k}};
    std::vector<Prediction> preds;
    if (!target->sessions.empty()) {
      PredictionOptions opts{config_.similarity_threshold, config_.include_drugs, agg};
      preds = predict_next_symptoms(build_trajectory(*target, *graph, config_.fringe_k, agg), cohort, *graph, *k, opts);
    }
    bool alert = std::any_of(preds.begin(), preds.end(),
                             [&](const Prediction& p) { return p.score >= config_.alert_threshold; });
    body["alert"] = alert;
    body["predictions"] = predictions_to_json(preds);
    send_json(res, 200, body);
  });

  s.Get("/api/graph/neighbors", [this](const httplib::Request& req, httplib::Response& res) {
    if (!req.has_param("node") || req.get_param_value("node").empty()) return send_error(res, 400, "node is required");
    auto k = parse_k(req, 10);
    if (!k) return send_error(res, 400, "k must be a positive integer");
    std::optional<EntityCategory> filter;
    if (req.has_param("category")) {
      filter = parse_category(req.get_param_value("category"));
      if (!filter) return send_error(res, 400, "unknown category '" + req.get_param_value("category") + "'");
    }
    auto graph = graph_.get();
    try {
      send_json(res, 200, neighbors_to_json(graph->neighbors(normalize(req.get_param_value("node"), nlp_.pipeline.lemmatizer()), *k, filter)));
    } catch (const NotFoundError& e) {
      send_error(res, 404, e.what());
    }
  });

  s.Get("/api/graph/attribute", [this](const httplib::Request& req, httplib::Response& res) {
    if (!req.has_param("drug") || req.get_param_value("drug").empty()) return send_error(res, 400, "drug is required");
    auto category = parse_category(req.get_param_value("category"));
    if (!category || !is_attribute_category(*category)) {
      return send_error(res, 400, "category must be one of FORM, ROUTE, FREQUENCY, DOSAGE, STRENGTH, DURATION");
    }
    auto graph = graph_.get();
    try {
      auto drug = normalize(req.get_param_value("drug"), nlp_.pipeline.lemmatizer());
      send_json(res, 200, attributes_to_json(graph->query_attribute(drug, *category), *graph));
    } catch (const NotFoundError& e) {
      send_error(res, 404, e.what());
    }
  });

  s.Post("/api/admin/reload", [this](const httplib::Request&, httplib::Response& res) {
    try {
      reload_graph();
    } catch (const Error& e) {
      return send_error(res, 500, std::string("reload failed, previous graph kept: ") + e.what());
    }
    auto g = graph_.get();
    send_json(res, 200, {{"nodes", g->nodes().size()}, {"sentences", g->total_sentences()}});
  });

  if (!config_.static_dir.empty()) {
    if (!s.set_mount_point("/", config_.static_dir.string())) {
      throw ConfigError("config key 'static_dir': not a directory: " + config_.static_dir.string());
    }
  }
}

int Service::start() {
  if (thread_.joinable()) return port_;
  if (config_.port == 0) {
    port_ = server_->bind_to_any_port(config_.host);
  } else {
    port_ = server_->bind_to_port(config_.host, config_.port) ? config_.port : -1;
  }
  if (port_ < 0) {
    throw IoError("cannot listen on " + config_.host + ":" + std::to_string(config_.port) + " (address in use?)");
  }
  thread_ = std::thread([this] { server_->listen_after_bind(); });
  server_->wait_until_ready();
  return port_;
}

void Service::stop() {
  if (server_) server_->stop();
  if (thread_.joinable()) thread_.join();
}

void Service::wait() {
  if (thread_.joinable()) thread_.join();
}

}  // namespace medbot
