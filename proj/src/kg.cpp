#include "medbot/kg.hpp"

#include <algorithm>
#include <thread>

#include "json.hpp"
#include "medbot/error.hpp"
#include "medbot/util.hpp"

namespace medbot {

using nlohmann::json;

// ---------------------------------------------------------------- patterns

void RelationPatterns::add(std::string_view phrase, std::string descriptor, bool reverse,
                           const Lemmatizer& lemmatizer) {
  LemmaSequence seq;
  for (const auto& t : tokenize(phrase)) {
    if (!t.is_punct) seq.push_back(lemmatizer.lemmatize(t.surface));
  }
  if (seq.empty()) throw ConfigError("empty relation pattern");
  if (trim(descriptor).empty()) throw ConfigError("relation pattern '" + std::string(phrase) + "' has no descriptor");
  patterns_.push_back({std::move(seq), std::string(trim(descriptor)), reverse});
  std::stable_sort(patterns_.begin(), patterns_.end(), [](const RelationPattern& a, const RelationPattern& b) {
    return a.phrase.size() > b.phrase.size();
  });
}

RelationPatterns RelationPatterns::load(const std::filesystem::path& path, const Lemmatizer& lemmatizer) {
  if (!std::filesystem::exists(path)) throw ConfigError("relation pattern table not found: " + path.string());
  RelationPatterns out;
  for (const auto& line : read_data_lines(path)) {
    auto f = split_csv_line(line.text);
    auto where = path.string() + ":" + std::to_string(line.line_no);
    if (f.size() != 3) throw ConfigError(where + ": expected pattern_phrase,descriptor,direction");
    std::string dir = to_lower(trim(f[2]));
    if (dir != "forward" && dir != "reverse") throw ConfigError(where + ": direction must be forward or reverse");
    out.add(trim(f[0]), std::string(trim(f[1])), dir == "reverse", lemmatizer);
  }
  return out;
}

std::vector<SemanticEdge> extract_semantic_edges(const Sentence& sentence, std::span<const Entity> entities,
                                                 const RelationPatterns& patterns) {
  std::vector<const Entity*> nodes;
  for (const auto& e : entities) {
    if (is_node_category(e.category)) nodes.push_back(&e);
  }
  std::sort(nodes.begin(), nodes.end(), [](const Entity* a, const Entity* b) { return a->start < b->start; });

  std::vector<SemanticEdge> out;
  for (std::size_t i = 0; i + 1 < nodes.size(); ++i) {
    const Entity& left = *nodes[i];
    const Entity& right = *nodes[i + 1];
    if (left.lemma_key == right.lemma_key) continue;
    LemmaSequence between;
    for (const auto& t : sentence.tokens) {
      if (t.start >= left.end && t.end <= right.start && !t.is_punct) {
        between.push_back(t.lemma.empty() ? to_lower(t.surface) : t.lemma);
      }
    }
    for (const auto& p : patterns.patterns()) {
      auto hit = std::search(between.begin(), between.end(), p.phrase.begin(), p.phrase.end());
      if (hit == between.end()) continue;
      SemanticEdge edge;
      edge.subject = p.reverse ? right.lemma_key : left.lemma_key;
      edge.object = p.reverse ? left.lemma_key : right.lemma_key;
      edge.descriptor = p.descriptor;
      edge.count = 1;
      edge.evidence.push_back({sentence.doc_id, sentence.index});
      bool dup = std::any_of(out.begin(), out.end(), [&](const SemanticEdge& o) {
        return o.subject == edge.subject && o.object == edge.object && o.descriptor == edge.descriptor;
      });
      if (!dup) out.push_back(std::move(edge));
      break;
    }
  }
  return out;
}

// ------------------------------------------------------------------- graph

void KnowledgeGraph::add_evidence(std::set<EvidenceRef>& set, const EvidenceRef& ref) {
  set.insert(ref);
  while (set.size() > kEvidenceCap) set.erase(std::prev(set.end()));
}

KgNode& KnowledgeGraph::touch_node(const std::string& key, EntityCategory category) {
  auto [it, inserted] = nodes_.try_emplace(key);
  if (inserted) {
    it->second.lemma_key = key;
    it->second.category = category;
  } else if (category < it->second.category) {
    it->second.category = category;
  }
  return it->second;
}

void KnowledgeGraph::add_sentence(std::span<const Entity> entities, const Sentence& sentence) {
  ++total_sentences_;
  std::map<std::string, std::pair<EntityCategory, std::uint64_t>> mentions;
  for (const auto& e : entities) {
    if (!is_node_category(e.category)) continue;
    auto [it, inserted] = mentions.try_emplace(e.lemma_key, e.category, 0);
    ++it->second.second;
  }
  for (const auto& [key, info] : mentions) {
    KgNode& node = touch_node(key, info.first);
    node.mention_count += info.second;
    node.sentence_count += 1;
  }
  for (auto a = mentions.begin(); a != mentions.end(); ++a) {
    for (auto b = std::next(a); b != mentions.end(); ++b) {
      ++adjacency_[a->first][b->first];
      ++adjacency_[b->first][a->first];
    }
  }

  const EvidenceRef ref{sentence.doc_id, sentence.index};
  std::set<AttributeKey> seen;
  for (const auto& attr : entities) {
    if (!is_attribute_category(attr.category)) continue;
    const Entity* nearest = nullptr;
    std::size_t best = 0;
    for (const auto& drug : entities) {
      if (drug.category != EntityCategory::Chemical) continue;
      std::size_t d = attr.start >= drug.end ? attr.start - drug.end
                      : drug.start >= attr.end ? drug.start - attr.end
                                               : 0;
      if (!nearest || d < best) {
        nearest = &drug;
        best = d;
      }
    }
    if (!nearest) continue;
    AttributeKey key{nearest->lemma_key, attr.category, to_lower(collapse_whitespace(attr.surface))};
    if (!seen.insert(key).second) continue;
    EdgeData& data = attributes_[key];
    ++data.count;
    add_evidence(data.evidence, ref);
    texts_.try_emplace(ref, sentence.text);
  }
}

void KnowledgeGraph::add_semantic_edge(const SemanticEdge& edge, std::string_view sentence_text) {
  if (!nodes_.count(edge.subject) || !nodes_.count(edge.object)) {
    throw Error("semantic edge endpoint is not a graph node: " + edge.subject + " -> " + edge.object);
  }
  EdgeData& data = semantic_[{edge.subject, edge.object, edge.descriptor}];
  data.count += std::max<std::uint64_t>(edge.count, 1);
  for (const auto& ref : edge.evidence) {
    add_evidence(data.evidence, ref);
    if (!sentence_text.empty()) texts_.try_emplace(ref, sentence_text);
  }
}

void KnowledgeGraph::merge(const KnowledgeGraph& other) {
  total_sentences_ += other.total_sentences_;
  for (const auto& [key, n] : other.nodes_) {
    KgNode& mine = touch_node(key, n.category);
    mine.mention_count += n.mention_count;
    mine.sentence_count += n.sentence_count;
  }
  for (const auto& [a, row] : other.adjacency_) {
    auto& mine = adjacency_[a];
    for (const auto& [b, c] : row) mine[b] += c;
  }
  auto merge_edges = [](auto& into, const auto& from) {
    for (const auto& [key, data] : from) {
      EdgeData& mine = into[key];
      mine.count += data.count;
      for (const auto& ref : data.evidence) add_evidence(mine.evidence, ref);
    }
  };
  merge_edges(semantic_, other.semantic_);
  merge_edges(attributes_, other.attributes_);
  for (const auto& [ref, text] : other.texts_) texts_.try_emplace(ref, text);
}

const KgNode* KnowledgeGraph::node(std::string_view lemma_key) const {
  auto it = nodes_.find(lemma_key);
  return it == nodes_.end() ? nullptr : &it->second;
}

std::uint64_t KnowledgeGraph::edge_weight(std::string_view a, std::string_view b) const {
  if (a == b) return 0;
  auto row = adjacency_.find(a);
  if (row == adjacency_.end()) return 0;
  auto cell = row->second.find(b);
  return cell == row->second.end() ? 0 : cell->second;
}

Ratio KnowledgeGraph::conditional_probability(std::string_view a, std::string_view given_b) const {
  const KgNode* b = node(given_b);
  if (!b || b->sentence_count == 0) {
    throw UndefinedConditionalError("P(" + std::string(a) + " | " + std::string(given_b) +
                                    ") is undefined: conditioning node has no sentences");
  }
  if (a == given_b) return {b->sentence_count, b->sentence_count};
  return {edge_weight(a, given_b), b->sentence_count};
}

std::vector<Neighbor> KnowledgeGraph::neighbors(std::string_view key, std::size_t k,
                                                std::optional<EntityCategory> category_filter) const {
  const KgNode* n = node(key);
  if (!n) throw UnknownNodeError("unknown node '" + std::string(key) + "'");
  std::vector<Neighbor> out;
  if (auto row = adjacency_.find(key); row != adjacency_.end()) {
    for (const auto& [other, count] : row->second) {
      if (category_filter && node(other)->category != *category_filter) continue;
      out.push_back({other, {count, n->sentence_count}});
    }
  }
  // Shared denominator: ordering by numerator is exact.
  std::stable_sort(out.begin(), out.end(), [](const Neighbor& x, const Neighbor& y) {
    if (x.probability.numerator != y.probability.numerator) return x.probability.numerator > y.probability.numerator;
    return x.lemma_key < y.lemma_key;
  });
  if (out.size() > k) out.resize(k);
  return out;
}

std::vector<AttributeValue> KnowledgeGraph::query_attribute(std::string_view drug, EntityCategory category) const {
  const KgNode* n = node(drug);
  if (!n || n->category != EntityCategory::Chemical) {
    throw UnknownDrugError("unknown drug '" + std::string(drug) + "'");
  }
  std::vector<AttributeValue> out;
  for (const auto& [key, data] : attributes_) {
    const auto& [d, c, value] = key;
    if (d == drug && c == category) {
      out.push_back({value, data.count, {data.evidence.begin(), data.evidence.end()}});
    }
  }
  std::stable_sort(out.begin(), out.end(), [](const AttributeValue& x, const AttributeValue& y) {
    if (x.count != y.count) return x.count > y.count;
    return x.value < y.value;
  });
  return out;
}

std::vector<CooccurrenceEdge> KnowledgeGraph::cooccurrence_edges() const {
  std::vector<CooccurrenceEdge> out;
  for (const auto& [a, row] : adjacency_) {
    for (const auto& [b, count] : row) {
      if (a < b && count > 0) out.push_back({a, b, count});
    }
  }
  return out;
}

std::vector<SemanticEdge> KnowledgeGraph::semantic_edges() const {
  std::vector<SemanticEdge> out;
  for (const auto& [key, data] : semantic_) {
    const auto& [s, o, d] = key;
    out.push_back({s, o, d, data.count, {data.evidence.begin(), data.evidence.end()}});
  }
  return out;
}

std::vector<AttributeEdge> KnowledgeGraph::attribute_edges() const {
  std::vector<AttributeEdge> out;
  for (const auto& [key, data] : attributes_) {
    const auto& [drug, c, value] = key;
    out.push_back({drug, c, value, data.count, {data.evidence.begin(), data.evidence.end()}});
  }
  return out;
}

std::optional<std::string> KnowledgeGraph::sentence_text(const EvidenceRef& ref) const {
  auto it = texts_.find(ref);
  if (it == texts_.end()) return std::nullopt;
  return it->second;
}

std::map<EvidenceRef, std::string> KnowledgeGraph::evidence_texts() const {
  std::map<EvidenceRef, std::string> out;
  auto collect = [&](const auto& edges) {
    for (const auto& [key, data] : edges) {
      for (const auto& ref : data.evidence) {
        if (auto it = texts_.find(ref); it != texts_.end()) out.emplace(ref, it->second);
      }
    }
  };
  collect(semantic_);
  collect(attributes_);
  return out;
}

bool KnowledgeGraph::operator==(const KnowledgeGraph& other) const {
  return total_sentences_ == other.total_sentences_ && nodes_ == other.nodes_ &&
         cooccurrence_edges() == other.cooccurrence_edges() && semantic_edges() == other.semantic_edges() &&
         attribute_edges() == other.attribute_edges() && evidence_texts() == other.evidence_texts();
}

// ------------------------------------------------------------------- build

namespace {

KnowledgeGraph build_chunk(std::span<const Document> docs, const TextPipeline& pipeline,
                           const EntityExtractor& extractor, const RelationPatterns* patterns, BuildReport& report) {
  KnowledgeGraph g;
  for (const auto& doc : docs) {
    ++report.documents;
    for (const auto& sentence : pipeline.sentences(doc)) {
      ++report.sentences;
      auto entities = extractor.extract(sentence);
      report.entities += entities.size();
      g.add_sentence(entities, sentence);
      if (patterns) {
        for (const auto& edge : extract_semantic_edges(sentence, entities, *patterns)) {
          g.add_semantic_edge(edge, sentence.text);
        }
      }
    }
  }
  return g;
}

}  // namespace

KnowledgeGraph build_graph(std::span<const Document> docs, const TextPipeline& pipeline,
                           const EntityExtractor& extractor, const RelationPatterns* patterns, BuildReport* report,
                           unsigned threads) {
  threads = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(std::max<std::size_t>(docs.size(), 1))));
  std::vector<KnowledgeGraph> parts(threads);
  std::vector<BuildReport> reports(threads);
  const std::size_t per = (docs.size() + threads - 1) / threads;
  auto run = [&](unsigned t) {
    std::size_t b = std::min(docs.size(), t * per), e = std::min(docs.size(), b + per);
    parts[t] = build_chunk(docs.subspan(b, e - b), pipeline, extractor, patterns, reports[t]);
  };
  if (threads == 1) {
    run(0);
  } else {
    std::vector<std::thread> pool;
    for (unsigned t = 0; t < threads; ++t) pool.emplace_back(run, t);
    for (auto& th : pool) th.join();
  }
  KnowledgeGraph g = std::move(parts[0]);
  BuildReport total = reports[0];
  for (unsigned t = 1; t < threads; ++t) {
    g.merge(parts[t]);
    total.documents += reports[t].documents;
    total.sentences += reports[t].sentences;
    total.entities += reports[t].entities;
  }
  total.nodes = g.nodes().size();
  total.cooccurrence_edges = g.cooccurrence_edges().size();
  total.semantic_edges = g.semantic_edges().size();
  total.attribute_edges = g.attribute_edges().size();
  if (report) *report = total;
  return g;
}

// ------------------------------------------------------------- persistence

namespace {

json evidence_json(const std::vector<EvidenceRef>& refs) {
  json arr = json::array();
  for (const auto& r : refs) arr.push_back({{"doc_id", r.doc_id}, {"sentence_index", r.sentence_index}});
  return arr;
}

class Reader {
 public:
  explicit Reader(std::string source) : source_(std::move(source)) {}

  [[noreturn]] void fail(const json::json_pointer& where, const std::string& what) const {
    throw ParseError(source_ + ": at " + (where.empty() ? std::string("/") : where.to_string()) + ": " + what);
  }

  const json& field(const json& obj, const json::json_pointer& at, const char* key) const {
    if (!obj.is_object()) fail(at, "expected an object");
    auto it = obj.find(key);
    if (it == obj.end()) fail(at, std::string("missing field '") + key + "'");
    return *it;
  }
  std::string str(const json& obj, const json::json_pointer& at, const char* key) const {
    const json& v = field(obj, at, key);
    if (!v.is_string()) fail(at / key, "expected a string");
    return v.get<std::string>();
  }
  std::uint64_t uint(const json& obj, const json::json_pointer& at, const char* key) const {
    const json& v = field(obj, at, key);
    if (!v.is_number_unsigned() && !(v.is_number_integer() && v.get<std::int64_t>() >= 0)) {
      fail(at / key, "expected a non-negative integer");
    }
    return v.get<std::uint64_t>();
  }
  const json& array(const json& obj, const json::json_pointer& at, const char* key) const {
    const json& v = field(obj, at, key);
    if (!v.is_array()) fail(at / key, "expected an array");
    return v;
  }
  EntityCategory category(const json& obj, const json::json_pointer& at, const char* key) const {
    auto c = parse_category(str(obj, at, key));
    if (!c) fail(at / key, "unknown category");
    return *c;
  }
  std::vector<EvidenceRef> evidence(const json& obj, const json::json_pointer& at) const {
    std::vector<EvidenceRef> out;
    const json& arr = array(obj, at, "evidence");
    for (std::size_t i = 0; i < arr.size(); ++i) {
      auto p = at / "evidence" / i;
      out.push_back({str(arr[i], p, "doc_id"), static_cast<std::size_t>(uint(arr[i], p, "sentence_index"))});
    }
    if (out.empty()) fail(at / "evidence", "evidence must be non-empty");
    return out;
  }

 private:
  std::string source_;
};

}  // namespace

std::string export_graph_json(const KnowledgeGraph& g) {
  json doc;
  doc["schema_version"] = std::string(kGraphSchemaVersion);
  doc["total_sentences"] = g.total_sentences();
  json nodes = json::array();
  for (const auto& [key, n] : g.nodes()) {
    nodes.push_back({{"lemma_key", key},
                     {"category", std::string(to_string(n.category))},
                     {"mention_count", n.mention_count},
                     {"sentence_count", n.sentence_count}});
  }
  doc["nodes"] = std::move(nodes);
  json co = json::array();
  for (const auto& e : g.cooccurrence_edges()) co.push_back({{"a", e.a}, {"b", e.b}, {"count", e.count}});
  doc["cooccurrence"] = std::move(co);
  json sem = json::array();
  for (const auto& e : g.semantic_edges()) {
    sem.push_back({{"subject", e.subject},
                   {"object", e.object},
                   {"descriptor", e.descriptor},
                   {"count", e.count},
                   {"evidence", evidence_json(e.evidence)}});
  }
  doc["semantic"] = std::move(sem);
  json attrs = json::array();
  for (const auto& e : g.attribute_edges()) {
    attrs.push_back({{"drug", e.drug},
                     {"category", std::string(to_string(e.category))},
                     {"value", e.value},
                     {"count", e.count},
                     {"evidence", evidence_json(e.evidence)}});
  }
  doc["attributes"] = std::move(attrs);
  json sentences = json::array();
  for (const auto& [ref, text] : g.evidence_texts()) {
    sentences.push_back({{"doc_id", ref.doc_id}, {"sentence_index", ref.sentence_index}, {"text", text}});
  }
  doc["sentences"] = std::move(sentences);
  return doc.dump(2) + "\n";
}

void export_graph(const KnowledgeGraph& graph, const std::filesystem::path& path) {
  try {
    write_file_atomic(path, export_graph_json(graph));
  } catch (const PersistenceError& e) {
    throw IoError(e.what());
  }
}

KnowledgeGraph import_graph_json(std::string_view text, std::string_view source) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ParseError(std::string(source) + ": at byte " + std::to_string(e.byte) + ": " + e.what());
  }
  Reader r{std::string(source)};
  const json::json_pointer root;
  if (!doc.is_object()) r.fail(root, "expected an object");
  const json& version = r.field(doc, root, "schema_version");
  std::string v = version.is_string() ? version.get<std::string>() : version.dump();
  if (v != kGraphSchemaVersion) {
    throw VersionError(std::string(source) + ": unsupported graph schema_version " + v + " (expected " +
                       std::string(kGraphSchemaVersion) + ")");
  }

  KnowledgeGraph g;
  g.total_sentences_ = r.uint(doc, root, "total_sentences");
  const json& nodes = r.array(doc, root, "nodes");
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    auto at = json::json_pointer("/nodes") / i;
    KgNode n{r.str(nodes[i], at, "lemma_key"), r.category(nodes[i], at, "category"),
             r.uint(nodes[i], at, "mention_count"), r.uint(nodes[i], at, "sentence_count")};
    if (n.lemma_key.empty()) r.fail(at, "empty lemma_key");
    if (n.sentence_count > n.mention_count) r.fail(at, "sentence_count exceeds mention_count");
    if (!g.nodes_.emplace(n.lemma_key, n).second) r.fail(at, "duplicate node " + n.lemma_key);
  }
  const json& co = r.array(doc, root, "cooccurrence");
  for (std::size_t i = 0; i < co.size(); ++i) {
    auto at = json::json_pointer("/cooccurrence") / i;
    std::string a = r.str(co[i], at, "a"), b = r.str(co[i], at, "b");
    std::uint64_t count = r.uint(co[i], at, "count");
    if (a == b) r.fail(at, "self-loop");
    if (!g.nodes_.count(a) || !g.nodes_.count(b)) r.fail(at, "endpoint is not a node");
    if (count == 0) r.fail(at, "count must be positive");
    g.adjacency_[a][b] = count;
    g.adjacency_[b][a] = count;
  }
  const json& sem = r.array(doc, root, "semantic");
  for (std::size_t i = 0; i < sem.size(); ++i) {
    auto at = json::json_pointer("/semantic") / i;
    std::string s = r.str(sem[i], at, "subject"), o = r.str(sem[i], at, "object"),
                d = r.str(sem[i], at, "descriptor");
    if (!g.nodes_.count(s) || !g.nodes_.count(o)) r.fail(at, "endpoint is not a node");
    if (d.empty()) r.fail(at, "empty descriptor");
    auto& data = g.semantic_[{s, o, d}];
    data.count = r.uint(sem[i], at, "count");
    for (auto& ref : r.evidence(sem[i], at)) data.evidence.insert(std::move(ref));
  }
  const json& attrs = r.array(doc, root, "attributes");
  for (std::size_t i = 0; i < attrs.size(); ++i) {
    auto at = json::json_pointer("/attributes") / i;
    std::string drug = r.str(attrs[i], at, "drug");
    auto drug_node = g.nodes_.find(drug);
    if (drug_node == g.nodes_.end() || drug_node->second.category != EntityCategory::Chemical) {
      r.fail(at, "drug is not a CHEMICAL node");
    }
    auto& data = g.attributes_[{drug, r.category(attrs[i], at, "category"), r.str(attrs[i], at, "value")}];
    data.count = r.uint(attrs[i], at, "count");
    for (auto& ref : r.evidence(attrs[i], at)) data.evidence.insert(std::move(ref));
  }
  if (auto it = doc.find("sentences"); it != doc.end()) {
    if (!it->is_array()) r.fail(json::json_pointer("/sentences"), "expected an array");
    for (std::size_t i = 0; i < it->size(); ++i) {
      auto at = json::json_pointer("/sentences") / i;
      const json& s = (*it)[i];
      g.texts_[{r.str(s, at, "doc_id"), static_cast<std::size_t>(r.uint(s, at, "sentence_index"))}] =
          r.str(s, at, "text");
    }
  }
  return g;
}

KnowledgeGraph import_graph(const std::filesystem::path& path) {
  return import_graph_json(read_file(path), path.string());
}

}  // namespace medbot
