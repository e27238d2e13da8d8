#pragma once

#include <atomic>
#include <chrono>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>

#include "medbot/dialogue.hpp"
#include "medbot/kg.hpp"
#include "medbot/patient.hpp"
#include "medbot/resources.hpp"

namespace httplib {
class Server;
}

namespace medbot {

struct ServiceConfig {
  std::string host = "127.0.0.1";
  int port = 8080;                                  // 0 picks a free port
  std::filesystem::path data_dir = "medbot-store";  // patient store directory
  std::filesystem::path graph_path;                 // empty: start with an empty graph
  std::filesystem::path resource_dir;               // empty: default_resource_dir()
  std::filesystem::path static_dir;                 // empty: no UI assets
  std::string cors_origin = "*";
  std::string guideline_url = DialogueConfig{}.guideline_url;
  std::int64_t session_gap_seconds = 3600;
  double intent_threshold = 0.35;
  double similarity_threshold = 0.5;
  double alert_threshold = 0.8;  // predictions at or above set "alert"
  std::size_t fringe_k = 5;
  std::string fringe_aggregator = "max";  // max | mean
  bool include_drugs = false;
  std::size_t compact_every = 1000;
};

using EnvLookup = std::function<std::optional<std::string>(const std::string&)>;
std::optional<std::string> process_env(const std::string& name);

/// Defaults, then the JSON file (when given), then MEDBOT_<KEY> environment
/// variables. Relative paths in the file resolve against the file's
/// directory. Unknown keys and ill-typed values throw ConfigError naming
/// the key.
ServiceConfig load_service_config(const std::optional<std::filesystem::path>& file, const EnvLookup& env = process_env);

class Clock {
 public:
  virtual ~Clock() = default;
  virtual Timestamp now() const = 0;
};

class SystemClock final : public Clock {
 public:
  Timestamp now() const override {
    return std::chrono::time_point_cast<std::chrono::seconds>(std::chrono::system_clock::now());
  }
};

class ManualClock final : public Clock {
 public:
  explicit ManualClock(Timestamp t) : t_(t.time_since_epoch().count()) {}
  Timestamp now() const override { return Timestamp{std::chrono::seconds{t_.load()}}; }
  void set(Timestamp t) { t_ = t.time_since_epoch().count(); }
  void advance(std::chrono::seconds d) { t_ += d.count(); }

 private:
  std::atomic<std::int64_t> t_;
};

/// HTTP API over a chat engine, a profile store and a reloadable graph.
class Service {
 public:
  explicit Service(ServiceConfig config, std::shared_ptr<const Clock> clock = std::make_shared<SystemClock>());
  ~Service();
  Service(const Service&) = delete;
  Service& operator=(const Service&) = delete;

  // Binds and serves on a background thread; returns the bound port.
  // Throws IoError when the address is unavailable.
  int start();
  void stop();
  // Blocks until stop() is called from another thread.
  void wait();
  int port() const { return port_; }

  // Swaps in the graph at config.graph_path; the old snapshot stays valid
  // for requests already holding it.
  void reload_graph();

  ProfileStore& store() { return *store_; }
  const GraphHandle& graph() const { return graph_; }
  const ServiceConfig& config() const { return config_; }

 private:
  void routes();

  ServiceConfig config_;
  std::shared_ptr<const Clock> clock_;
  NlpResources nlp_;
  std::unique_ptr<ProfileStore> store_;
  GraphHandle graph_;
  std::unique_ptr<ChatEngine> engine_;
  std::unique_ptr<httplib::Server> server_;
  std::thread thread_;
  std::mutex reload_mu_;
  int port_ = 0;
};

}  // namespace medbot
