#include "medbot/dialogue.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <set>

#include "medbot/error.hpp"
#include "medbot/json_io.hpp"
#include "medbot/util.hpp"

namespace medbot {

std::string_view to_string(IntentTag t) {
  switch (t) {
    case IntentTag::Greet: return "GREET";
    case IntentTag::Goodbye: return "GOODBYE";
    case IntentTag::Affirm: return "AFFIRM";
    case IntentTag::Deny: return "DENY";
    case IntentTag::ReportSymptom: return "REPORT_SYMPTOM";
    case IntentTag::ReportDrug: return "REPORT_DRUG";
    case IntentTag::FindDosage: return "FIND_DOSAGE";
    case IntentTag::AskInfo: return "ASK_INFO";
    case IntentTag::OutOfScope: return "OUT_OF_SCOPE";
  }
  return "OUT_OF_SCOPE";
}

std::optional<IntentTag> parse_intent(std::string_view tag) {
  std::string upper(trim(tag));
  for (char& c : upper) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
  for (auto t : kAllIntents) {
    if (to_string(t) == upper) return t;
  }
  return std::nullopt;
}

std::vector<TrainingExample> load_training_set(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw ConfigError("training set not found: " + path.string());
  Json j;
  try {
    j = Json::parse(read_file(path));
  } catch (const Json::parse_error& e) {
    throw ConfigError(path.string() + ": at byte " + std::to_string(e.byte) + ": invalid JSON");
  }
  if (!j.is_array() || j.empty()) throw ConfigError(path.string() + ": expected a non-empty list of examples");
  std::vector<TrainingExample> out;
  std::set<IntentTag> seen;
  for (std::size_t i = 0; i < j.size(); ++i) {
    const auto& e = j[i];
    if (!e.is_object() || !e.contains("text") || !e["text"].is_string() || !e.contains("intent") ||
        !e["intent"].is_string()) {
      throw ConfigError(path.string() + ": example " + std::to_string(i) + " needs string text and intent");
    }
    auto tag = parse_intent(e["intent"].get<std::string>());
    if (!tag) throw ConfigError(path.string() + ": unknown intent '" + e["intent"].get<std::string>() + "'");
    seen.insert(*tag);
    out.push_back({e["text"].get<std::string>(), *tag});
  }
  for (auto t : kAllIntents) {
    if (!seen.count(t)) throw ConfigError(path.string() + ": no example for intent " + std::string(to_string(t)));
  }
  return out;
}

namespace {

Sentence message_sentence(std::string_view text, const TextPipeline& pipeline) {
  Sentence s;
  s.text = std::string(text);
  s.tokens = pipeline.analyze(s.text);
  return s;
}

bool overlaps(const Entity& e, const std::vector<Entity>& taken) {
  return std::any_of(taken.begin(), taken.end(), [&](const Entity& t) { return e.start < t.end && t.start < e.end; });
}

// Entities of the first lexicon, then non-overlapping ones of the rest.
std::vector<Entity> layered_entities(const Sentence& s, const std::vector<const Gazetteer*>& lexicons) {
  std::vector<Entity> out;
  for (const auto* lex : lexicons) {
    for (auto& e : extract_entities(s, *lex)) {
      if (!overlaps(e, out)) out.push_back(std::move(e));
    }
  }
  std::sort(out.begin(), out.end(), [](const Entity& a, const Entity& b) { return a.start < b.start; });
  return out;
}

}  // namespace

NearestExampleClassifier::NearestExampleClassifier(std::vector<TrainingExample> examples, const TextPipeline& pipeline,
                                                   std::vector<const Gazetteer*> lexicons, double threshold)
    : pipeline_(&pipeline), lexicons_(std::move(lexicons)), threshold_(threshold) {
  if (examples.empty()) throw ConfigError("intent training set is empty");
  if (threshold < 0.0 || threshold > 1.0) throw ConfigError("intent threshold must lie in [0, 1]");
  for (const auto& e : examples) examples_.emplace_back(e.intent, vectorize(e.text));
}

NearestExampleClassifier::Vec NearestExampleClassifier::vectorize(std::string_view text) const {
  Vec v;
  auto s = message_sentence(text, *pipeline_);
  auto ents = layered_entities(s, lexicons_);
  std::size_t e = 0;
  for (const auto& t : s.tokens) {
    while (e < ents.size() && ents[e].end <= t.start) ++e;
    if (e < ents.size() && t.start >= ents[e].start && t.end <= ents[e].end) {
      if (t.start == ents[e].start) v.tf["<" + std::string(to_string(ents[e].category)) + ">"] += 1.0;
      continue;
    }
    if (t.is_punct || t.is_stopword) continue;
    v.tf[t.lemma] += 1.0;
  }
  double sq = 0.0;
  for (const auto& [term, w] : v.tf) sq += w * w;
  v.norm = std::sqrt(sq);
  return v;
}

std::map<std::string, double> NearestExampleClassifier::features(std::string_view text) const {
  return vectorize(text).tf;
}

Intent NearestExampleClassifier::classify(std::string_view text) const {
  Vec q = vectorize(text);
  Intent best{IntentTag::OutOfScope, 0.0};
  if (q.norm == 0.0) return best;
  bool any = false;
  for (const auto& [tag, ex] : examples_) {
    if (ex.norm == 0.0) continue;
    double dot = 0.0;
    for (const auto& [term, w] : q.tf) {
      if (auto it = ex.tf.find(term); it != ex.tf.end()) dot += w * it->second;
    }
    double score = std::clamp(dot / (q.norm * ex.norm), 0.0, 1.0);
    if (!any || score > best.confidence || (score == best.confidence && tag < best.tag)) {
      best = {tag, score};
      any = true;
    }
  }
  if (best.confidence < threshold_) best.tag = IntentTag::OutOfScope;
  return best;
}

Intent classify_intent(std::string_view text, const std::vector<TrainingExample>& training_set,
                       const TextPipeline& pipeline, double threshold) {
  return NearestExampleClassifier(training_set, pipeline, {}, threshold).classify(text);
}

Gazetteer load_colloquial(const std::filesystem::path& path, const Gazetteer& gazetteer, const Lemmatizer& lemmatizer) {
  if (!std::filesystem::exists(path)) throw ConfigError("colloquial table not found: " + path.string());
  Gazetteer out;
  for (const auto& line : read_data_lines(path)) {
    auto fields = split_csv_line(line.text);
    auto where = path.string() + ":" + std::to_string(line.line_no);
    if (fields.size() != 3) throw ConfigError(where + ": expected phrase,category,lemma_key");
    auto category = parse_category(fields[1]);
    if (!category || !is_node_category(*category)) throw ConfigError(where + ": category must be DISEASE or CHEMICAL");
    std::string key = normalize(fields[2], lemmatizer);
    if (gazetteer.category_of_key(key) != category) {
      throw ConfigError(where + ": '" + key + "' is not a " + std::string(to_string(*category)) + " gazetteer key");
    }
    out.add(trim(fields[0]), *category, key, lemmatizer);
  }
  return out;
}

ParsedMessage parse_message(std::string_view text, const NlpResources& nlp, const Gazetteer& colloquial,
                            const IntentClassifier& classifier) {
  ParsedMessage m;
  m.original_text = std::string(text);
  m.intent = classifier.classify(text);
  m.entities = layered_entities(message_sentence(text, nlp.pipeline), {&nlp.gazetteer, &colloquial});
  if (m.intent.tag == IntentTag::OutOfScope) {
    auto has = [&](EntityCategory c) {
      return std::any_of(m.entities.begin(), m.entities.end(), [&](const Entity& e) { return e.category == c; });
    };
    if (has(EntityCategory::Disease)) {
      m.intent.tag = IntentTag::ReportSymptom;
    } else if (has(EntityCategory::Chemical)) {
      m.intent.tag = IntentTag::ReportDrug;
    }
  }
  return m;
}

// --------------------------------------------------------------- templates

const std::map<std::string, std::vector<std::string>>& Templates::slot_schema() {
  static const std::map<std::string, std::vector<std::string>> schema = {
      {"GREET", {}},
      {"GOODBYE", {}},
      {"AFFIRM", {}},
      {"DENY", {}},
      {"OUT_OF_SCOPE", {}},
      {"ASK_INFO_NONE", {}},
      {"ASK_INFO_ANSWER", {"node", "items", "link"}},
      {"ASK_INFO_UNKNOWN", {"node", "link"}},
      {"SYMPTOM_RECORDED", {"items"}},
      {"DRUG_RECORDED", {"items"}},
      {"COMFORT", {}},
      {"REPORT_EMPTY", {}},
      {"DOSAGE_ANSWER", {"drug", "category", "value", "count", "link"}},
      {"DOSAGE_UNKNOWN", {"drug", "category", "link"}},
      {"DOSAGE_NO_DRUG", {}},
      {"PERSISTENCE_ERROR", {}},
      {"SAFE_FALLBACK", {"link"}},
  };
  return schema;
}

std::vector<std::string> placeholders(std::string_view tmpl) {
  std::vector<std::string> out;
  std::size_t pos = 0;
  while ((pos = tmpl.find('{', pos)) != std::string_view::npos) {
    auto close = tmpl.find('}', pos);
    if (close == std::string_view::npos) throw ConfigError("unclosed placeholder in template: " + std::string(tmpl));
    out.emplace_back(tmpl.substr(pos + 1, close - pos - 1));
    pos = close + 1;
  }
  return out;
}

std::string expand(std::string_view tmpl, const std::map<std::string, std::string>& slots) {
  std::string out;
  std::size_t pos = 0;
  while (pos < tmpl.size()) {
    auto open = tmpl.find('{', pos);
    if (open == std::string_view::npos) {
      out.append(tmpl.substr(pos));
      break;
    }
    auto close = tmpl.find('}', open);
    if (close == std::string_view::npos) throw ConfigError("unclosed placeholder in template: " + std::string(tmpl));
    out.append(tmpl.substr(pos, open - pos));
    std::string name(tmpl.substr(open + 1, close - open - 1));
    auto it = slots.find(name);
    if (it == slots.end()) throw ConfigError("no value for template slot {" + name + "}");
    out += it->second;
    pos = close + 1;
  }
  return out;
}

Templates::Templates(std::map<std::string, std::vector<std::string>> table) : table_(std::move(table)) {
  for (const auto& [key, allowed] : slot_schema()) {
    auto it = table_.find(key);
    if (it == table_.end() || it->second.empty()) throw ConfigError("missing response template " + key);
    for (const auto& variant : it->second) {
      for (const auto& slot : placeholders(variant)) {
        if (std::find(allowed.begin(), allowed.end(), slot) == allowed.end()) {
          throw ConfigError("template " + key + " uses unknown slot {" + slot + "}");
        }
      }
    }
  }
}

Templates Templates::load(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw ConfigError("templates not found: " + path.string());
  Json j;
  try {
    j = Json::parse(read_file(path));
  } catch (const Json::parse_error& e) {
    throw ConfigError(path.string() + ": at byte " + std::to_string(e.byte) + ": invalid JSON");
  }
  if (!j.is_object()) throw ConfigError(path.string() + ": expected an object of template lists");
  std::map<std::string, std::vector<std::string>> table;
  for (const auto& [key, list] : j.items()) {
    if (!list.is_array()) throw ConfigError(path.string() + ": " + key + " must be a list of strings");
    for (const auto& v : list) {
      if (!v.is_string()) throw ConfigError(path.string() + ": " + key + " must be a list of strings");
      table[key].push_back(v.get<std::string>());
    }
  }
  return Templates(std::move(table));
}

std::string Templates::render(const std::string& key, const std::map<std::string, std::string>& slots,
                              std::string_view seed) const {
  auto it = table_.find(key);
  if (it == table_.end() || it->second.empty()) throw ConfigError("missing response template " + key);
  const auto& variants = it->second;
  return expand(variants[fnv1a(seed) % variants.size()], slots);
}

SafetyFilter::SafetyFilter(std::vector<std::string> phrases) {
  for (auto& p : phrases) {
    std::string norm = collapse_whitespace(to_lower(trim(p)));
    if (!norm.empty()) phrases_.push_back(std::move(norm));
  }
}

SafetyFilter SafetyFilter::load(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw ConfigError("banned phrase list not found: " + path.string());
  std::vector<std::string> phrases;
  for (const auto& line : read_data_lines(path)) phrases.push_back(line.text);
  return SafetyFilter(std::move(phrases));
}

std::optional<std::string> SafetyFilter::find(std::string_view text) const {
  std::string hay = collapse_whitespace(to_lower(text));
  auto word = [](char c) { return std::isalnum(static_cast<unsigned char>(c)) != 0; };
  for (const auto& p : phrases_) {
    for (std::size_t pos = hay.find(p); pos != std::string::npos; pos = hay.find(p, pos + 1)) {
      bool left = pos == 0 || !word(hay[pos - 1]);
      bool right = pos + p.size() >= hay.size() || !word(hay[pos + p.size()]);
      if (left && right) return p;
    }
  }
  return std::nullopt;
}

DialogueData DialogueData::load(const std::filesystem::path& dir, const NlpResources& nlp) {
  DialogueData d{load_training_set(dir / "intents.json"), Templates::load(dir / "templates.json"),
                 SafetyFilter::load(dir / "banned_phrases.txt"),
                 load_colloquial(dir / "colloquial.csv", nlp.gazetteer, nlp.pipeline.lemmatizer())};
  for (const auto& [key, variants] : d.templates.table()) {
    for (const auto& v : variants) {
      if (auto hit = d.safety.find(v)) throw ConfigError("template " + key + " contains banned phrase '" + *hit + "'");
    }
  }
  return d;
}

// ---------------------------------------------------------------- respond

std::optional<EntityCategory> dosage_category(std::string_view text) {
  static const std::vector<std::pair<std::vector<std::string_view>, EntityCategory>> keywords = {
      {{"how long", "duration", "how many days", "how many weeks"}, EntityCategory::Duration},
      {{"how often", "frequency", "how many times", "times a day"}, EntityCategory::Frequency},
      {{"strength", "how strong", "mg"}, EntityCategory::Strength},
      {{"what form", "which form"}, EntityCategory::Form},
      {{"route", "how is it given", "how is it taken"}, EntityCategory::Route},
      {{"dosage", "dose", "how much", "how many"}, EntityCategory::Dosage},
  };
  for (const auto& [words, category] : keywords) {
    SafetyFilter m(std::vector<std::string>(words.begin(), words.end()));
    if (m.find(text)) return category;
  }
  return std::nullopt;
}

namespace {

std::string category_word(EntityCategory c) { return to_lower(to_string(c)); }

std::string joined_keys(const std::vector<Recorded>& recs, EventKind kind) {
  std::vector<std::string> keys;
  for (const auto& r : recs) {
    if (r.kind == kind && std::find(keys.begin(), keys.end(), r.lemma_key) == keys.end()) keys.push_back(r.lemma_key);
  }
  return join(keys, ", ");
}

const Entity* first_of(const ParsedMessage& m, std::initializer_list<EntityCategory> cats) {
  for (const auto& e : m.entities) {
    if (std::find(cats.begin(), cats.end(), e.category) != cats.end()) return &e;
  }
  return nullptr;
}

void report(const ParsedMessage& parsed, const std::string& patient_id, Timestamp now, const RespondContext& ctx,
            const std::string& seed, BotResponse& r) {
  for (const auto& e : parsed.entities) {
    if (!is_node_category(e.category)) continue;
    EventKind kind = e.category == EntityCategory::Disease ? EventKind::Symptom : EventKind::Drug;
    try {
      ctx.store.record_event(patient_id, {now, kind, e.lemma_key, e.surface});
    } catch (const PersistenceError& err) {
      std::cerr << "medbot: store write failed for patient '" << patient_id << "': " << err.what() << "\n";
      r.store_failed = true;
      r.text = ctx.templates.render("PERSISTENCE_ERROR", {}, seed);
      return;
    }
    r.recorded.push_back({kind, e.lemma_key});
  }
  if (r.recorded.empty()) {
    r.text = ctx.templates.render("REPORT_EMPTY", {}, seed);
    return;
  }
  std::vector<std::string> parts;
  std::string symptoms = joined_keys(r.recorded, EventKind::Symptom);
  std::string drugs = joined_keys(r.recorded, EventKind::Drug);
  if (!symptoms.empty()) parts.push_back(ctx.templates.render("SYMPTOM_RECORDED", {{"items", symptoms}}, seed));
  if (!drugs.empty()) parts.push_back(ctx.templates.render("DRUG_RECORDED", {{"items", drugs}}, seed));
  if (!symptoms.empty()) parts.push_back(ctx.templates.render("COMFORT", {}, seed));
  r.text = join(parts, " ");
}

void dosage(const ParsedMessage& parsed, const RespondContext& ctx, const std::string& seed, BotResponse& r) {
  const std::string& link = ctx.config.guideline_url;
  const Entity* drug = first_of(parsed, {EntityCategory::Chemical});
  if (!drug) {
    r.text = ctx.templates.render("DOSAGE_NO_DRUG", {}, seed);
    return;
  }
  r.guideline_link = link;
  auto asked = dosage_category(parsed.original_text);
  // The asked slot first; otherwise any drug attribute the literature has.
  std::vector<EntityCategory> order;
  if (asked) order.push_back(*asked);
  for (auto c : {EntityCategory::Dosage, EntityCategory::Strength, EntityCategory::Frequency,
                 EntityCategory::Duration, EntityCategory::Form, EntityCategory::Route}) {
    if (std::find(order.begin(), order.end(), c) == order.end()) order.push_back(c);
  }
  std::string shown_category = category_word(asked.value_or(EntityCategory::Dosage));
  try {
    for (auto c : order) {
      auto values = ctx.graph.query_attribute(drug->lemma_key, c);
      if (values.empty()) continue;
      const auto& top = values.front();
      r.text = ctx.templates.render("DOSAGE_ANSWER",
                                    {{"drug", drug->lemma_key},
                                     {"category", category_word(c)},
                                     {"value", top.value},
                                     {"count", std::to_string(top.count)},
                                     {"link", link}},
                                    seed);
      for (const auto& ref : top.evidence) {
        if (r.evidence_sentences.size() >= ctx.config.evidence_limit) break;
        if (auto text = ctx.graph.sentence_text(ref)) r.evidence_sentences.push_back(*text);
      }
      return;
    }
  } catch (const UnknownDrugError&) {
  }
  r.text = ctx.templates.render("DOSAGE_UNKNOWN",
                                {{"drug", drug->lemma_key}, {"category", shown_category}, {"link", link}}, seed);
}

void info(const ParsedMessage& parsed, const RespondContext& ctx, const std::string& seed, BotResponse& r) {
  const std::string& link = ctx.config.guideline_url;
  const Entity* node = first_of(parsed, {EntityCategory::Disease, EntityCategory::Chemical});
  if (!node) {
    r.text = ctx.templates.render("ASK_INFO_NONE", {}, seed);
    return;
  }
  r.guideline_link = link;
  std::vector<std::string> names;
  if (ctx.graph.node(node->lemma_key)) {
    for (const auto& n : ctx.graph.neighbors(node->lemma_key, ctx.config.info_neighbors)) names.push_back(n.lemma_key);
  }
  if (names.empty()) {
    r.text = ctx.templates.render("ASK_INFO_UNKNOWN", {{"node", node->lemma_key}, {"link", link}}, seed);
  } else {
    r.text = ctx.templates.render("ASK_INFO_ANSWER",
                                  {{"node", node->lemma_key}, {"items", join(names, ", ")}, {"link", link}}, seed);
  }
}

BotResponse guarded(BotResponse r, const RespondContext& ctx, const std::string& seed) {
  if (auto hit = ctx.safety.find(r.text)) {
    std::cerr << "medbot: blocked reply containing '" << *hit << "'\n";
    r.text = ctx.templates.render("SAFE_FALLBACK", {{"link", ctx.config.guideline_url}}, seed);
    r.guideline_link = ctx.config.guideline_url;
  }
  return r;
}

}  // namespace

BotResponse respond(const ParsedMessage& parsed, const std::string& patient_id, Timestamp now,
                    const RespondContext& ctx) {
  BotResponse r;
  const std::string seed = patient_id + "\n" + parsed.original_text;
  switch (parsed.intent.tag) {
    case IntentTag::ReportSymptom:
    case IntentTag::ReportDrug: report(parsed, patient_id, now, ctx, seed, r); break;
    case IntentTag::FindDosage: dosage(parsed, ctx, seed, r); break;
    case IntentTag::AskInfo: info(parsed, ctx, seed, r); break;
    default: r.text = ctx.templates.render(std::string(to_string(parsed.intent.tag)), {}, seed); break;
  }
  return guarded(std::move(r), ctx, seed);
}

std::optional<std::string> follow_up_question(const PatientProfile& profile) {
  if (profile.sessions.size() < 2) return std::nullopt;
  const Session& prev = profile.sessions[profile.sessions.size() - 2];
  std::vector<std::string> keys;
  for (const auto& e : prev.events) {
    if (e.kind == EventKind::Symptom && std::find(keys.begin(), keys.end(), e.lemma_key) == keys.end()) {
      keys.push_back(e.lemma_key);
    }
  }
  if (keys.empty()) return std::nullopt;
  return std::string(kFollowUpPrefix) + join(keys, ", ") + std::string(kFollowUpSuffix);
}

BotResponse start_conversation(const std::string& patient_id, Timestamp now, const RespondContext& ctx) {
  BotResponse r;
  r.text = ctx.templates.render("GREET", {}, patient_id);
  try {
    ctx.store.touch(patient_id, now);
  } catch (const PersistenceError& err) {
    std::cerr << "medbot: store write failed for patient '" << patient_id << "': " << err.what() << "\n";
    r.store_failed = true;
  }
  if (auto profile = ctx.store.get(patient_id)) {
    if (auto q = follow_up_question(*profile)) r.text += " " + *q;
  }
  return guarded(std::move(r), ctx, patient_id);
}

// ------------------------------------------------------------------ engine

ChatEngine::ChatEngine(const NlpResources& nlp, DialogueData data, ProfileStore& store, const GraphHandle& graph,
                       DialogueConfig config)
    : nlp_(&nlp), data_(std::move(data)), store_(&store), graph_(&graph), config_(std::move(config)) {
  classifier_ = std::make_unique<NearestExampleClassifier>(
      data_.training, nlp_->pipeline, std::vector<const Gazetteer*>{&nlp_->gazetteer, &data_.colloquial},
      config_.intent_threshold);
}

ChatEngine::Reply ChatEngine::chat(const std::string& patient_id, std::string_view message, Timestamp now) {
  if (trim(patient_id).empty()) throw Error("patient_id must be non-empty");
  if (trim(message).empty()) throw Error("message must be non-empty");
  auto lease = store_->lease(patient_id);
  auto graph = graph_->get();
  RespondContext ctx{*store_, *graph, data_.templates, data_.safety, config_};

  Reply reply;
  reply.parsed = parse_message(message, *nlp_, data_.colloquial, *classifier_);
  auto before = store_->get(patient_id);
  std::uint64_t previous = before && !before->sessions.empty() ? before->sessions.back().session_id : 0;
  try {
    reply.session_id = store_->touch(patient_id, now);
  } catch (const PersistenceError& err) {
    std::cerr << "medbot: store write failed for patient '" << patient_id << "': " << err.what() << "\n";
    reply.response.store_failed = true;
    reply.response.text = data_.templates.render("PERSISTENCE_ERROR", {}, patient_id);
    reply.session_id = previous;
    return reply;
  }
  reply.response = respond(reply.parsed, patient_id, now, ctx);
  if (previous != 0 && reply.session_id != previous && !reply.response.store_failed) {
    if (auto q = follow_up_question(*store_->get(patient_id))) {
      reply.response.text += " " + *q;
      reply.follow_up_pending = true;
    }
  }
  return reply;
}

ChatEngine::Reply ChatEngine::start(const std::string& patient_id, Timestamp now) {
  if (trim(patient_id).empty()) throw Error("patient_id must be non-empty");
  auto lease = store_->lease(patient_id);
  auto graph = graph_->get();
  RespondContext ctx{*store_, *graph, data_.templates, data_.safety, config_};
  Reply reply;
  reply.response = start_conversation(patient_id, now, ctx);
  if (auto p = store_->get(patient_id); p && !p->sessions.empty()) reply.session_id = p->sessions.back().session_id;
  reply.follow_up_pending = reply.response.text.find(kFollowUpPrefix) != std::string::npos;
  return reply;
}

}  // namespace medbot
