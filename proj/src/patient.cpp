#include "medbot/patient.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <algorithm>
#include <cerrno>
#include <cstring>
#include <fstream>
#include <limits>

#include "medbot/error.hpp"
#include "medbot/json_io.hpp"
#include "medbot/util.hpp"

namespace medbot {

std::string_view to_string(EventKind k) { return k == EventKind::Symptom ? "SYMPTOM" : "DRUG"; }

std::optional<EventKind> parse_event_kind(std::string_view tag) {
  if (tag == "SYMPTOM") return EventKind::Symptom;
  if (tag == "DRUG") return EventKind::Drug;
  return std::nullopt;
}

std::string_view to_string(PredictionSource s) { return s == PredictionSource::Cohort ? "COHORT" : "FRINGE"; }

const Session* PatientProfile::session(std::uint64_t id) const {
  for (const auto& s : sessions) {
    if (s.session_id == id) return &s;
  }
  return nullptr;
}

std::uint64_t apply_activity(PatientProfile& profile, Timestamp t, std::chrono::seconds gap) {
  if (!profile.sessions.empty()) {
    Session& last = profile.sessions.back();
    if (t < last.end) {
      throw OutOfOrderError("activity at " + format_timestamp(t) + " precedes last activity " +
                            format_timestamp(last.end) + " of patient '" + profile.patient_id + "'");
    }
    if (t - last.end < gap) {
      last.end = t;
      return last.session_id;
    }
  }
  Session s;
  s.session_id = profile.sessions.empty() ? 1 : profile.sessions.back().session_id + 1;
  s.start = s.end = t;
  profile.sessions.push_back(std::move(s));
  return profile.sessions.back().session_id;
}

std::uint64_t apply_event(PatientProfile& profile, const PatientEvent& event, std::chrono::seconds gap) {
  if (event.lemma_key.empty()) throw Error("event lemma_key must be non-empty");
  std::uint64_t id = apply_activity(profile, event.timestamp, gap);
  profile.sessions.back().events.push_back(event);
  return id;
}

// ------------------------------------------------------------------ store

namespace {

// Replays a logged record, trusting the session id it was acknowledged with.
void replay_record(PatientProfile& p, Timestamp t, std::uint64_t session_id, const PatientEvent* event) {
  if (p.sessions.empty() || p.sessions.back().session_id < session_id) {
    Session s;
    s.session_id = session_id;
    s.start = s.end = t;
    p.sessions.push_back(std::move(s));
  }
  Session& last = p.sessions.back();
  last.end = std::max(last.end, t);
  if (event) last.events.push_back(*event);
}

}  // namespace

ProfileStore::ProfileStore(std::filesystem::path dir, StoreOptions options)
    : dir_(std::move(dir)), options_(options) {
  if (options_.session_gap <= std::chrono::seconds{0}) throw ConfigError("session gap must be positive");
  if (dir_.empty()) return;
  std::error_code ec;
  std::filesystem::create_directories(dir_, ec);
  if (ec) throw PersistenceError("cannot create store directory " + dir_.string() + ": " + ec.message());
  replay();
}

ProfileStore::~ProfileStore() {
  if (dir_.empty() || since_compact_ == 0) return;
  try {
    compact();
  } catch (const std::exception&) {
    // The log still holds every record.
  }
}

void ProfileStore::replay() {
  std::uint64_t snapshot_seq = 0;
  auto snap_path = dir_ / kSnapshotFile;
  if (std::filesystem::exists(snap_path)) {
    Json j;
    try {
      j = Json::parse(read_file(snap_path));
    } catch (const Json::parse_error& e) {
      throw ParseError(snap_path.string() + ": at byte " + std::to_string(e.byte) + ": " + e.what());
    }
    if (!j.is_object() || !j.contains("schema_version") || j["schema_version"] != kSchemaVersion) {
      throw VersionError(snap_path.string() + ": unsupported store schema_version");
    }
    if (!j.contains("last_seq") || !j["last_seq"].is_number_unsigned() || !j.contains("patients") ||
        !j["patients"].is_array()) {
      throw ParseError(snap_path.string() + ": missing last_seq or patients");
    }
    snapshot_seq = j["last_seq"].get<std::uint64_t>();
    for (std::size_t i = 0; i < j["patients"].size(); ++i) {
      auto p = profile_from_json(j["patients"][i], snap_path.string() + " /patients/" + std::to_string(i));
      std::string id = p.patient_id;
      if (!profiles_.emplace(id, std::move(p)).second) {
        throw ParseError(snap_path.string() + ": duplicate patient_id '" + id + "'");
      }
    }
  }
  seq_ = snapshot_seq;

  auto log_path = dir_ / kLogFile;
  if (!std::filesystem::exists(log_path)) return;
  std::string content = read_file(log_path);
  std::size_t pos = 0, good_end = 0, line_no = 0;
  while (pos < content.size()) {
    std::size_t nl = content.find('\n', pos);
    bool complete = nl != std::string::npos;
    std::string_view line(content.data() + pos, (complete ? nl : content.size()) - pos);
    ++line_no;
    Json rec;
    bool ok = complete;
    if (ok) {
      try {
        rec = Json::parse(line);
      } catch (const Json::parse_error&) {
        ok = false;
      }
    }
    if (!ok) {
      bool last = !complete || nl + 1 >= content.size();
      if (!last) throw PersistenceError(log_path.string() + ":" + std::to_string(line_no) + ": corrupt record");
      break;  // torn tail from an interrupted write
    }
    try {
      std::uint64_t seq = rec.at("seq").get<std::uint64_t>();
      if (seq > seq_) {
        const std::string id = rec.at("patient_id").get<std::string>();
        auto t = parse_timestamp(rec.at("timestamp").get<std::string>());
        if (!t) throw ParseError("bad timestamp");
        std::uint64_t session_id = rec.at("session_id").get<std::uint64_t>();
        auto& p = profiles_[id];
        p.patient_id = id;
        const std::string op = rec.at("op").get<std::string>();
        if (op == "event") {
          PatientEvent e = event_from_json(rec.at("event"), log_path.string());
          replay_record(p, *t, session_id, &e);
        } else if (op == "touch") {
          replay_record(p, *t, session_id, nullptr);
        } else {
          throw ParseError("unknown op '" + op + "'");
        }
        seq_ = seq;
        ++since_compact_;
      }
    } catch (const nlohmann::json::exception& e) {
      throw PersistenceError(log_path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    } catch (const ParseError& e) {
      throw PersistenceError(log_path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
    pos = nl + 1;
    good_end = pos;
  }
  if (good_end < content.size()) {
    std::error_code ec;
    std::filesystem::resize_file(log_path, good_end, ec);
    if (ec) throw PersistenceError("cannot truncate torn log tail: " + ec.message());
  }
}

void ProfileStore::append(const std::string& line) {
  if (dir_.empty()) return;
  auto path = dir_ / kLogFile;
  int fd = ::open(path.c_str(), O_WRONLY | O_CREAT | O_APPEND | O_CLOEXEC, 0644);
  if (fd < 0) throw PersistenceError("cannot open " + path.string() + ": " + std::strerror(errno));
  std::string buf = line + "\n";
  std::size_t off = 0;
  while (off < buf.size()) {
    ssize_t n = ::write(fd, buf.data() + off, buf.size() - off);
    if (n < 0) {
      if (errno == EINTR) continue;
      int err = errno;
      ::close(fd);
      throw PersistenceError("write failed on " + path.string() + ": " + std::strerror(err));
    }
    off += static_cast<std::size_t>(n);
  }
  if (::fsync(fd) != 0) {
    int err = errno;
    ::close(fd);
    throw PersistenceError("fsync failed on " + path.string() + ": " + std::strerror(err));
  }
  ::close(fd);
}

std::mutex& ProfileStore::patient_mutex(const std::string& id) {
  std::lock_guard lock(mu_);
  auto& slot = patient_locks_[id];
  if (!slot) slot = std::make_unique<std::mutex>();
  return *slot;
}

ProfileStore::Lease ProfileStore::lease(const std::string& patient_id) {
  return Lease(patient_id, std::unique_lock(patient_mutex(patient_id)));
}

void ProfileStore::commit_locked(const std::string& id, PatientProfile profile, const std::string& record) {
  append(record);
  ++seq_;
  profiles_[id] = std::move(profile);
  if (options_.compact_every && ++since_compact_ >= options_.compact_every) {
    try {
      compact_locked();
    } catch (const PersistenceError&) {
      // Retried after the next record; the log stays authoritative.
    }
  }
}

std::uint64_t ProfileStore::touch(const std::string& patient_id, Timestamp t) {
  if (patient_id.empty()) throw Error("patient_id must be non-empty");
  std::lock_guard lock(mu_);
  auto it = profiles_.find(patient_id);
  PatientProfile p = it != profiles_.end() ? it->second : PatientProfile{patient_id, {}};
  std::uint64_t session_id = apply_activity(p, t, options_.session_gap);
  Json rec = {{"seq", seq_ + 1},
              {"op", "touch"},
              {"patient_id", patient_id},
              {"timestamp", format_timestamp(t)},
              {"session_id", session_id}};
  commit_locked(patient_id, std::move(p), rec.dump());
  return session_id;
}

PatientProfile ProfileStore::record_event(const std::string& patient_id, const PatientEvent& event) {
  if (patient_id.empty()) throw Error("patient_id must be non-empty");
  std::lock_guard lock(mu_);
  auto it = profiles_.find(patient_id);
  PatientProfile p = it != profiles_.end() ? it->second : PatientProfile{patient_id, {}};
  std::uint64_t session_id = apply_event(p, event, options_.session_gap);
  Json rec = {{"seq", seq_ + 1},
              {"op", "event"},
              {"patient_id", patient_id},
              {"timestamp", format_timestamp(event.timestamp)},
              {"session_id", session_id},
              {"event", event_to_json(event)}};
  PatientProfile copy = p;
  commit_locked(patient_id, std::move(p), rec.dump());
  return copy;
}

std::optional<PatientProfile> ProfileStore::get(const std::string& patient_id) const {
  std::lock_guard lock(mu_);
  auto it = profiles_.find(patient_id);
  if (it == profiles_.end()) return std::nullopt;
  return it->second;
}

std::vector<PatientProfile> ProfileStore::profiles() const {
  std::lock_guard lock(mu_);
  std::vector<PatientProfile> out;
  for (const auto& [id, p] : profiles_) out.push_back(p);
  return out;
}

std::uint64_t ProfileStore::last_seq() const {
  std::lock_guard lock(mu_);
  return seq_;
}

void ProfileStore::compact() {
  std::lock_guard lock(mu_);
  compact_locked();
}

void ProfileStore::compact_locked() {
  if (dir_.empty()) return;
  Json patients = Json::array();
  for (const auto& [id, p] : profiles_) patients.push_back(profile_to_json(p));
  Json snap = {{"schema_version", kSchemaVersion}, {"last_seq", seq_}, {"patients", std::move(patients)}};
  write_file_atomic(dir_ / kSnapshotFile, snap.dump(2) + "\n");
  // Records up to last_seq are now redundant; a crash before the truncate
  // only leaves records the replay skips.
  std::error_code ec;
  std::filesystem::resize_file(dir_ / kLogFile, 0, ec);
  since_compact_ = 0;
}

PatientProfile record_event(ProfileStore& store, const std::string& patient_id, const PatientEvent& event) {
  return store.record_event(patient_id, event);
}

// ------------------------------------------------------------- trajectories

std::vector<ScoredSymptom> rank_fringe(const std::set<std::string>& symptoms, const KnowledgeGraph& graph,
                                       std::size_t k, FringeAggregator aggregator) {
  if (k == 0) throw Error("fringe size k must be at least 1");
  std::map<std::string, double> best;
  std::size_t sources = 0;
  for (const auto& s : symptoms) {
    if (!graph.node(s)) continue;
    ++sources;
    for (const auto& n : graph.neighbors(s, std::numeric_limits<std::size_t>::max(), EntityCategory::Disease)) {
      if (symptoms.count(n.lemma_key)) continue;
      double p = n.probability.value();
      auto [it, fresh] = best.emplace(n.lemma_key, p);
      if (fresh) continue;
      if (aggregator == FringeAggregator::Max) {
        it->second = std::max(it->second, p);
      } else {
        it->second += p;
      }
    }
  }
  std::vector<ScoredSymptom> out;
  for (const auto& [key, score] : best) {
    out.push_back({key, aggregator == FringeAggregator::Max ? score : score / static_cast<double>(sources)});
  }
  std::stable_sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.score > b.score; });
  if (out.size() > k) out.resize(k);
  return out;
}

TrajectoryStep build_subgraph(const PatientProfile& profile, std::uint64_t session_id, const KnowledgeGraph& graph,
                              std::size_t fringe_k, FringeAggregator aggregator) {
  const Session* s = profile.session(session_id);
  if (!s) {
    throw NotFoundError("patient '" + profile.patient_id + "' has no session " + std::to_string(session_id));
  }
  TrajectoryStep step;
  step.session_id = session_id;
  for (const auto& e : s->events) (e.kind == EventKind::Symptom ? step.symptoms : step.drugs).insert(e.lemma_key);
  if (!step.symptoms.empty()) step.fringe = rank_fringe(step.symptoms, graph, fringe_k, aggregator);
  return step;
}

Trajectory build_trajectory(const PatientProfile& profile, const KnowledgeGraph& graph, std::size_t fringe_k,
                            FringeAggregator aggregator) {
  if (profile.sessions.empty()) throw NotFoundError("patient '" + profile.patient_id + "' has no sessions");
  Trajectory t{profile.patient_id, {}};
  for (const auto& s : profile.sessions) {
    t.steps.push_back(build_subgraph(profile, s.session_id, graph, fringe_k, aggregator));
  }
  return t;
}

namespace {

std::set<std::string> step_set(const TrajectoryStep& s, bool include_drugs) {
  std::set<std::string> out = s.symptoms;
  if (include_drugs) {
    for (const auto& d : s.drugs) out.insert("drug:" + d);
  }
  return out;
}

double jaccard(const std::set<std::string>& a, const std::set<std::string>& b) {
  if (a.empty() && b.empty()) return 1.0;
  std::size_t inter = 0;
  for (const auto& x : a) inter += b.count(x);
  return static_cast<double>(inter) / static_cast<double>(a.size() + b.size() - inter);
}

// End-aligned similarity of a against the first `len` steps of b.
double similarity_prefix(const Trajectory& a, const Trajectory& b, std::size_t len, bool include_drugs) {
  std::size_t n = std::min(a.steps.size(), len);
  double sum = 0.0;
  for (std::size_t i = 1; i <= n; ++i) {
    sum += jaccard(step_set(a.steps[a.steps.size() - i], include_drugs), step_set(b.steps[len - i], include_drugs));
  }
  return sum / static_cast<double>(n);
}

}  // namespace

double trajectory_similarity(const Trajectory& a, const Trajectory& b, bool include_drugs) {
  if (a.steps.empty() || b.steps.empty()) throw Error("trajectory similarity needs at least one step on each side");
  return similarity_prefix(a, b, b.steps.size(), include_drugs);
}

std::vector<Prediction> predict_next_symptoms(const Trajectory& target, std::span<const Trajectory> cohort,
                                              const KnowledgeGraph& graph, std::size_t k,
                                              const PredictionOptions& options) {
  if (k == 0) throw Error("prediction size k must be at least 1");
  if (target.steps.empty()) throw Error("target trajectory has no steps");
  std::set<std::string> reported;
  for (const auto& s : target.steps) reported.insert(s.symptoms.begin(), s.symptoms.end());

  std::map<std::string, double> sums;
  std::size_t matching = 0;
  for (const auto& member : cohort) {
    double best = -1.0;
    std::size_t cut = 0;
    for (std::size_t len = 1; len < member.steps.size(); ++len) {
      double sim = similarity_prefix(target, member, len, options.include_drugs);
      if (sim > best) {
        best = sim;
        cut = len;
      }
    }
    if (best < options.similarity_threshold) continue;
    ++matching;
    for (const auto& c : member.steps[cut].symptoms) {
      if (!reported.count(c)) sums[c] += best;
    }
  }

  std::vector<Prediction> out;
  for (const auto& [key, sum] : sums) out.push_back({key, sum / static_cast<double>(matching), PredictionSource::Cohort});
  std::stable_sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.score > b.score; });
  if (out.size() > k) out.resize(k);

  if (out.size() < k) {
    std::set<std::string> taken = reported;
    for (const auto& p : out) taken.insert(p.lemma_key);
    const auto& last = target.steps.back().symptoms;
    if (!last.empty()) {
      for (const auto& f :
           rank_fringe(last, graph, std::numeric_limits<std::size_t>::max(), options.aggregator)) {
        if (out.size() >= k) break;
        if (taken.count(f.lemma_key)) continue;
        out.push_back({f.lemma_key, f.score, PredictionSource::Fringe});
      }
    }
  }
  return out;
}

}  // namespace medbot
