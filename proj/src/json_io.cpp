#include "medbot/json_io.hpp"

#include "medbot/error.hpp"

namespace medbot {

namespace {

class Checker {
 public:
  explicit Checker(std::string_view where) : where_(where) {}

  [[noreturn]] void fail(const Json::json_pointer& at, const std::string& what) const {
    throw ParseError(where_ + ": at " + (at.empty() ? std::string("/") : at.to_string()) + ": " + what);
  }
  const Json& field(const Json& obj, const Json::json_pointer& at, const char* key) const {
    if (!obj.is_object()) fail(at, "expected an object");
    auto it = obj.find(key);
    if (it == obj.end()) fail(at, std::string("missing field '") + key + "'");
    return *it;
  }
  std::string str(const Json& obj, const Json::json_pointer& at, const char* key) const {
    const Json& v = field(obj, at, key);
    if (!v.is_string()) fail(at / key, "expected a string");
    return v.get<std::string>();
  }
  Timestamp time(const Json& obj, const Json::json_pointer& at, const char* key) const {
    auto t = parse_timestamp(str(obj, at, key));
    if (!t) fail(at / key, "expected a UTC timestamp YYYY-MM-DDTHH:MM:SSZ");
    return *t;
  }
  std::uint64_t uint(const Json& obj, const Json::json_pointer& at, const char* key) const {
    const Json& v = field(obj, at, key);
    if (!v.is_number_unsigned()) fail(at / key, "expected a non-negative integer");
    return v.get<std::uint64_t>();
  }
  const Json& array(const Json& obj, const Json::json_pointer& at, const char* key) const {
    const Json& v = field(obj, at, key);
    if (!v.is_array()) fail(at / key, "expected an array");
    return v;
  }

  PatientEvent event(const Json& j, const Json::json_pointer& at) const {
    PatientEvent e;
    e.timestamp = time(j, at, "timestamp");
    auto kind = parse_event_kind(str(j, at, "kind"));
    if (!kind) fail(at / "kind", "expected SYMPTOM or DRUG");
    e.kind = *kind;
    e.lemma_key = str(j, at, "lemma_key");
    if (e.lemma_key.empty()) fail(at / "lemma_key", "empty lemma_key");
    e.raw_text = str(j, at, "raw_text");
    return e;
  }

 private:
  std::string where_;
};

}  // namespace

Json event_to_json(const PatientEvent& e) {
  return {{"timestamp", format_timestamp(e.timestamp)},
          {"kind", to_string(e.kind)},
          {"lemma_key", e.lemma_key},
          {"raw_text", e.raw_text}};
}

PatientEvent event_from_json(const Json& j, std::string_view where) { return Checker(where).event(j, Json::json_pointer()); }

Json profile_to_json(const PatientProfile& p) {
  Json sessions = Json::array();
  for (const auto& s : p.sessions) {
    Json events = Json::array();
    for (const auto& e : s.events) events.push_back(event_to_json(e));
    sessions.push_back({{"session_id", s.session_id},
                        {"start", format_timestamp(s.start)},
                        {"end", format_timestamp(s.end)},
                        {"events", std::move(events)}});
  }
  return {{"patient_id", p.patient_id}, {"sessions", std::move(sessions)}};
}

PatientProfile profile_from_json(const Json& j, std::string_view where) {
  Checker c(where);
  const Json::json_pointer root;
  PatientProfile p;
  p.patient_id = c.str(j, root, "patient_id");
  if (p.patient_id.empty()) c.fail(root / "patient_id", "empty patient_id");
  const Json& sessions = c.array(j, root, "sessions");
  for (std::size_t i = 0; i < sessions.size(); ++i) {
    auto at = root / "sessions" / i;
    Session s;
    s.session_id = c.uint(sessions[i], at, "session_id");
    s.start = c.time(sessions[i], at, "start");
    s.end = c.time(sessions[i], at, "end");
    if (s.end < s.start) c.fail(at / "end", "end precedes start");
    if (!p.sessions.empty() && (s.session_id <= p.sessions.back().session_id || s.start < p.sessions.back().end)) {
      c.fail(at, "sessions must be ordered and non-overlapping");
    }
    const Json& events = c.array(sessions[i], at, "events");
    for (std::size_t k = 0; k < events.size(); ++k) {
      auto e = c.event(events[k], at / "events" / k);
      if (e.timestamp < s.start || e.timestamp > s.end) c.fail(at / "events" / k, "event outside its session");
      if (!s.events.empty() && e.timestamp < s.events.back().timestamp) {
        c.fail(at / "events" / k, "events out of order");
      }
      s.events.push_back(std::move(e));
    }
    p.sessions.push_back(std::move(s));
  }
  return p;
}

Json neighbors_to_json(const std::vector<Neighbor>& neighbors) {
  Json arr = Json::array();
  for (const auto& n : neighbors) {
    arr.push_back({{"lemma_key", n.lemma_key}, {"probability", n.probability.value()}, {"count", n.probability.numerator}});
  }
  return arr;
}

Json attributes_to_json(const std::vector<AttributeValue>& values, const KnowledgeGraph& graph) {
  Json arr = Json::array();
  for (const auto& v : values) {
    Json evidence = Json::array();
    for (const auto& ref : v.evidence) {
      Json e = {{"doc_id", ref.doc_id}, {"sentence_index", ref.sentence_index}};
      if (auto text = graph.sentence_text(ref)) e["text"] = *text;
      evidence.push_back(std::move(e));
    }
    arr.push_back({{"value", v.value}, {"count", v.count}, {"evidence", std::move(evidence)}});
  }
  return arr;
}

Json predictions_to_json(const std::vector<Prediction>& predictions) {
  Json arr = Json::array();
  for (const auto& p : predictions) {
    arr.push_back({{"lemma_key", p.lemma_key}, {"score", p.score}, {"source", to_string(p.source)}});
  }
  return arr;
}

}  // namespace medbot
