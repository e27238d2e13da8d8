#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "medbot/kg.hpp"
#include "medbot/ner.hpp"
#include "medbot/patient.hpp"
#include "medbot/resources.hpp"

namespace medbot {

enum class IntentTag { Greet, Goodbye, Affirm, Deny, ReportSymptom, ReportDrug, FindDosage, AskInfo, OutOfScope };

// Declaration order is the tie-break order.
inline constexpr IntentTag kAllIntents[] = {IntentTag::Greet,         IntentTag::Goodbye,    IntentTag::Affirm,
                                            IntentTag::Deny,          IntentTag::ReportSymptom,
                                            IntentTag::ReportDrug,    IntentTag::FindDosage, IntentTag::AskInfo,
                                            IntentTag::OutOfScope};

std::string_view to_string(IntentTag t);
std::optional<IntentTag> parse_intent(std::string_view tag);

struct Intent {
  IntentTag tag = IntentTag::OutOfScope;
  double confidence = 0.0;
};

struct TrainingExample {
  std::string text;
  IntentTag intent;
};

// JSON list of {text, intent}. Throws ConfigError on an unknown tag, an empty
// list, or a tag with no example.
std::vector<TrainingExample> load_training_set(const std::filesystem::path& path);

class IntentClassifier {
 public:
  virtual ~IntentClassifier() = default;
  virtual Intent classify(std::string_view text) const = 0;
};

/// Nearest training example by cosine similarity of term-frequency vectors.
/// Terms are lemmas without stopwords or punctuation; entity mentions become
/// a category placeholder ("<DISEASE>") so "I have a rash" matches
/// "I have a fever". Below the threshold the tag is OUT_OF_SCOPE.
class NearestExampleClassifier final : public IntentClassifier {
 public:
  // `lexicons` are searched for entity placeholders; they must outlive the classifier.
  NearestExampleClassifier(std::vector<TrainingExample> examples, const TextPipeline& pipeline,
                           std::vector<const Gazetteer*> lexicons, double threshold = 0.35);

  Intent classify(std::string_view text) const override;
  std::map<std::string, double> features(std::string_view text) const;

 private:
  struct Vec {
    std::map<std::string, double> tf;
    double norm = 0.0;
  };
  Vec vectorize(std::string_view text) const;

  std::vector<std::pair<IntentTag, Vec>> examples_;
  const TextPipeline* pipeline_;
  std::vector<const Gazetteer*> lexicons_;
  double threshold_;
};

// One-shot form: builds a classifier without entity placeholders.
Intent classify_intent(std::string_view text, const std::vector<TrainingExample>& training_set,
                       const TextPipeline& pipeline, double threshold = 0.35);

struct ParsedMessage {
  Intent intent;
  std::vector<Entity> entities;  // offsets into original_text
  std::string original_text;
};

// Oral phrases mapped onto gazetteer keys, e.g. "can't smell" → anosmia.
// CSV phrase,category,lemma_key; every key must exist in `gazetteer` with
// that category.
Gazetteer load_colloquial(const std::filesystem::path& path, const Gazetteer& gazetteer, const Lemmatizer& lemmatizer);

/// Gazetteer and pattern entities plus colloquial matches on uncovered
/// tokens. An OUT_OF_SCOPE message that names a symptom or drug is treated
/// as a report of it.
ParsedMessage parse_message(std::string_view text, const NlpResources& nlp, const Gazetteer& colloquial,
                            const IntentClassifier& classifier);

class Templates {
 public:
  static Templates load(const std::filesystem::path& path);
  explicit Templates(std::map<std::string, std::vector<std::string>> table);

  // Deterministic pick among the variants of `key`, seeded by `seed`.
  std::string render(const std::string& key, const std::map<std::string, std::string>& slots,
                     std::string_view seed = {}) const;
  const std::map<std::string, std::vector<std::string>>& table() const { return table_; }

  // Every key the dialogue needs, with the slots its variants may use.
  static const std::map<std::string, std::vector<std::string>>& slot_schema();

 private:
  std::map<std::string, std::vector<std::string>> table_;
};

// Replaces {slot} placeholders; throws ConfigError for a slot with no value.
std::string expand(std::string_view tmpl, const std::map<std::string, std::string>& slots);
std::vector<std::string> placeholders(std::string_view tmpl);

class SafetyFilter {
 public:
  static SafetyFilter load(const std::filesystem::path& path);
  explicit SafetyFilter(std::vector<std::string> phrases);

  // First banned phrase found (case-insensitive, word-bounded), if any.
  std::optional<std::string> find(std::string_view text) const;
  const std::vector<std::string>& phrases() const { return phrases_; }

 private:
  std::vector<std::string> phrases_;
};

struct DialogueData {
  std::vector<TrainingExample> training;
  Templates templates;
  SafetyFilter safety;
  Gazetteer colloquial;

  // intents.json, templates.json, banned_phrases.txt, colloquial.csv
  static DialogueData load(const std::filesystem::path& dir, const NlpResources& nlp);
};

struct DialogueConfig {
  std::string guideline_url = "https://www.who.int/emergencies/diseases/novel-coronavirus-2019/technical-guidance";
  double intent_threshold = 0.35;
  std::size_t evidence_limit = 3;
  std::size_t info_neighbors = 3;
};

struct Recorded {
  EventKind kind;
  std::string lemma_key;

  bool operator==(const Recorded&) const = default;
};

struct BotResponse {
  std::string text;
  std::vector<Recorded> recorded;
  std::optional<std::string> guideline_link;
  std::vector<std::string> evidence_sentences;
  bool store_failed = false;
};

// Slot category for a dosage question, from its keywords; nullopt when none applies.
std::optional<EntityCategory> dosage_category(std::string_view text);

struct RespondContext {
  ProfileStore& store;
  const KnowledgeGraph& graph;
  const Templates& templates;
  const SafetyFilter& safety;
  const DialogueConfig& config;
};

// REPORT_* messages record every DISEASE/CHEMICAL entity at `now`. A store
// failure yields the apology template with store_failed set.
BotResponse respond(const ParsedMessage& parsed, const std::string& patient_id, Timestamp now,
                    const RespondContext& ctx);

inline constexpr std::string_view kFollowUpPrefix = "You mentioned in our last conversation that you have symptoms of ";
inline constexpr std::string_view kFollowUpSuffix = ". How do you feel about them now?";

// Symptoms of the session before the current (last) one, in first-report order.
std::optional<std::string> follow_up_question(const PatientProfile& profile);

// Greeting, plus the follow-up when there is one. Counts as activity.
BotResponse start_conversation(const std::string& patient_id, Timestamp now, const RespondContext& ctx);

/// Owns the classifier and serializes work per patient. The graph snapshot
/// is fetched once per call.
class ChatEngine {
 public:
  ChatEngine(const NlpResources& nlp, DialogueData data, ProfileStore& store, const GraphHandle& graph,
             DialogueConfig config = {});

  struct Reply {
    BotResponse response;
    ParsedMessage parsed;
    std::uint64_t session_id = 0;
    bool follow_up_pending = false;
  };

  // A message that opens a new session for a returning patient carries the
  // follow-up question after the reply. Throws OutOfOrderError when `now`
  // precedes the patient's last activity.
  Reply chat(const std::string& patient_id, std::string_view message, Timestamp now);
  Reply start(const std::string& patient_id, Timestamp now);

  ProfileStore& store() { return *store_; }
  const DialogueData& data() const { return data_; }
  const DialogueConfig& config() const { return config_; }

 private:
  const NlpResources* nlp_;
  DialogueData data_;
  ProfileStore* store_;
  const GraphHandle* graph_;
  DialogueConfig config_;
  std::unique_ptr<NearestExampleClassifier> classifier_;
};

}  // namespace medbot
