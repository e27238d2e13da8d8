#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "medbot/kg.hpp"
#include "medbot/time.hpp"

namespace medbot {

enum class EventKind { Symptom, Drug };

std::string_view to_string(EventKind k);
std::optional<EventKind> parse_event_kind(std::string_view tag);

struct PatientEvent {
  Timestamp timestamp;
  EventKind kind = EventKind::Symptom;
  std::string lemma_key;
  std::string raw_text;

  bool operator==(const PatientEvent&) const = default;
};

struct Session {
  std::uint64_t session_id = 0;  // 1-based, consecutive per patient
  Timestamp start;
  Timestamp end;  // last activity
  std::vector<PatientEvent> events;

  bool operator==(const Session&) const = default;
};

struct PatientProfile {
  std::string patient_id;
  std::vector<Session> sessions;

  const Session* session(std::uint64_t id) const;
  bool operator==(const PatientProfile&) const = default;
};

inline constexpr std::chrono::seconds kDefaultSessionGap{3600};

// Activity at `t` joins the last session when t - end < gap, else opens a new
// one. Returns the session id. Throws OutOfOrderError when t precedes the
// patient's last activity.
std::uint64_t apply_activity(PatientProfile& profile, Timestamp t, std::chrono::seconds gap = kDefaultSessionGap);

// apply_activity followed by appending the event to that session.
std::uint64_t apply_event(PatientProfile& profile, const PatientEvent& event,
                          std::chrono::seconds gap = kDefaultSessionGap);

struct StoreOptions {
  std::chrono::seconds session_gap = kDefaultSessionGap;
  std::size_t compact_every = 1000;  // log records between snapshots; 0 disables
};

/// Patient profiles backed by an append-only log (one JSON record per line,
/// fsync'd before the call returns) and a periodically rewritten snapshot.
/// Opening a directory replays snapshot + log; a torn final log line is
/// discarded. An empty directory path keeps everything in memory.
class ProfileStore {
 public:
  static constexpr std::string_view kSchemaVersion = "1";
  static constexpr const char* kSnapshotFile = "profiles.json";
  static constexpr const char* kLogFile = "events.log";

  explicit ProfileStore(std::filesystem::path dir = {}, StoreOptions options = {});
  ~ProfileStore();
  ProfileStore(const ProfileStore&) = delete;
  ProfileStore& operator=(const ProfileStore&) = delete;

  // Exclusive hold on one patient for a multi-step update. Other patients
  // stay available.
  class Lease {
   public:
    Lease(Lease&&) = default;
    const std::string& patient_id() const { return id_; }

   private:
    friend class ProfileStore;
    Lease(std::string id, std::unique_lock<std::mutex> lock) : id_(std::move(id)), lock_(std::move(lock)) {}
    std::string id_;
    std::unique_lock<std::mutex> lock_;
  };
  Lease lease(const std::string& patient_id);

  // Both persist before returning; PersistenceError leaves memory untouched.
  std::uint64_t touch(const std::string& patient_id, Timestamp t);
  PatientProfile record_event(const std::string& patient_id, const PatientEvent& event);

  std::optional<PatientProfile> get(const std::string& patient_id) const;
  std::vector<PatientProfile> profiles() const;  // ordered by patient_id

  // Writes the snapshot atomically, then truncates the log.
  void compact();

  std::uint64_t last_seq() const;
  const std::filesystem::path& directory() const { return dir_; }
  std::chrono::seconds session_gap() const { return options_.session_gap; }

 private:
  void replay();
  void append(const std::string& line);
  void commit_locked(const std::string& id, PatientProfile profile, const std::string& record);
  void compact_locked();
  std::mutex& patient_mutex(const std::string& id);

  std::filesystem::path dir_;
  StoreOptions options_;
  mutable std::mutex mu_;
  std::map<std::string, PatientProfile> profiles_;
  std::map<std::string, std::unique_ptr<std::mutex>> patient_locks_;
  std::uint64_t seq_ = 0;
  std::size_t since_compact_ = 0;
};

// Free-function form used by the dialogue layer.
PatientProfile record_event(ProfileStore& store, const std::string& patient_id, const PatientEvent& event);

struct ScoredSymptom {
  std::string lemma_key;
  double score = 0.0;

  bool operator==(const ScoredSymptom&) const = default;
};

struct TrajectoryStep {
  std::uint64_t session_id = 0;
  std::set<std::string> symptoms;
  std::set<std::string> drugs;
  std::vector<ScoredSymptom> fringe;
};

struct Trajectory {
  std::string patient_id;
  std::vector<TrajectoryStep> steps;
};

enum class FringeAggregator { Max, Mean };

// DISEASE neighbors of the symptoms that are not symptoms themselves, scored
// by max (or mean) of P(candidate | symptom); top-k, ties by key. Symptoms
// absent from the graph contribute nothing. k == 0 throws.
std::vector<ScoredSymptom> rank_fringe(const std::set<std::string>& symptoms, const KnowledgeGraph& graph,
                                       std::size_t k, FringeAggregator aggregator = FringeAggregator::Max);

// Throws NotFoundError for a missing session.
TrajectoryStep build_subgraph(const PatientProfile& profile, std::uint64_t session_id, const KnowledgeGraph& graph,
                              std::size_t fringe_k = 5, FringeAggregator aggregator = FringeAggregator::Max);

// One step per session. A profile without sessions throws NotFoundError.
Trajectory build_trajectory(const PatientProfile& profile, const KnowledgeGraph& graph, std::size_t fringe_k = 5,
                            FringeAggregator aggregator = FringeAggregator::Max);

/// Mean Jaccard similarity of the last min(|a|, |b|) steps, aligned at the
/// end. Two empty sets count as equal. Drugs join the sets when asked.
double trajectory_similarity(const Trajectory& a, const Trajectory& b, bool include_drugs = false);

enum class PredictionSource { Cohort, Fringe };
std::string_view to_string(PredictionSource s);

struct Prediction {
  std::string lemma_key;
  double score = 0.0;
  PredictionSource source = PredictionSource::Fringe;

  bool operator==(const Prediction&) const = default;
};

struct PredictionOptions {
  double similarity_threshold = 0.5;
  bool include_drugs = false;
  FringeAggregator aggregator = FringeAggregator::Max;
};

/// Each cohort trajectory is compared against the target at every cut point
/// that leaves a following step; its best cut (earliest on ties) counts if
/// the similarity reaches the threshold. A candidate's cohort score is the
/// sum of the similarities of matching members whose next step holds it,
/// divided by the number of matching members. Remaining slots come from the
/// fringe of the target's last step. Symptoms the target already reported
/// are never returned. k == 0 throws.
std::vector<Prediction> predict_next_symptoms(const Trajectory& target, std::span<const Trajectory> cohort,
                                              const KnowledgeGraph& graph, std::size_t k,
                                              const PredictionOptions& options = {});

}  // namespace medbot
