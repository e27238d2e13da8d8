#pragma once

#include <compare>
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
#include <tuple>
#include <vector>

#include "medbot/corpus.hpp"
#include "medbot/ner.hpp"

namespace medbot {

struct EvidenceRef {
  std::string doc_id;
  std::size_t sentence_index = 0;

  auto operator<=>(const EvidenceRef&) const = default;
  bool operator==(const EvidenceRef&) const = default;
};

// Evidence lists keep the 20 smallest (doc_id, sentence_index) references;
// counts stay exact. Keeping the smallest rather than the first makes the
// stored evidence independent of ingestion order.
inline constexpr std::size_t kEvidenceCap = 20;

struct KgNode {
  std::string lemma_key;
  EntityCategory category = EntityCategory::Disease;
  std::uint64_t mention_count = 0;
  std::uint64_t sentence_count = 0;

  bool operator==(const KgNode&) const = default;
};

struct CooccurrenceEdge {
  std::string a;  // a < b
  std::string b;
  std::uint64_t count = 0;

  bool operator==(const CooccurrenceEdge&) const = default;
};

struct SemanticEdge {
  std::string subject;
  std::string object;
  std::string descriptor;
  std::uint64_t count = 0;
  std::vector<EvidenceRef> evidence;

  bool operator==(const SemanticEdge&) const = default;
};

struct AttributeEdge {
  std::string drug;
  EntityCategory category = EntityCategory::Duration;
  std::string value;
  std::uint64_t count = 0;
  std::vector<EvidenceRef> evidence;

  bool operator==(const AttributeEdge&) const = default;
};

// Exact conditional probability numerator/denominator.
struct Ratio {
  std::uint64_t numerator = 0;
  std::uint64_t denominator = 1;

  double value() const { return denominator == 0 ? 0.0 : static_cast<double>(numerator) / denominator; }
};

struct Neighbor {
  std::string lemma_key;
  Ratio probability;  // P(neighbor | node)
};

struct AttributeValue {
  std::string value;
  std::uint64_t count = 0;
  std::vector<EvidenceRef> evidence;
};

struct RelationPattern {
  LemmaSequence phrase;
  std::string descriptor;
  bool reverse = false;  // true: the later entity is the subject
};

class RelationPatterns {
 public:
  RelationPatterns() = default;

  // CSV pattern_phrase,descriptor,direction (forward|reverse), '#' comments.
  static RelationPatterns load(const std::filesystem::path& path, const Lemmatizer& lemmatizer);

  void add(std::string_view phrase, std::string descriptor, bool reverse, const Lemmatizer& lemmatizer);
  const std::vector<RelationPattern>& patterns() const { return patterns_; }  // longest phrase first

 private:
  std::vector<RelationPattern> patterns_;
};

// For each pair of adjacent node entities, the first pattern whose phrase
// occurs contiguously in the lemmas between them yields a directed edge.
std::vector<SemanticEdge> extract_semantic_edges(const Sentence& sentence, std::span<const Entity> entities,
                                                 const RelationPatterns& patterns);

class KnowledgeGraph {
 public:
  /// Sentence-level counting: each distinct node key in the sentence adds 1
  /// to its sentence_count and its mention total to mention_count; each
  /// unordered pair of distinct keys adds exactly 1 to its edge. Attribute
  /// mentions attach to the nearest CHEMICAL mention in the sentence.
  void add_sentence(std::span<const Entity> entities, const Sentence& sentence);

  // Endpoints must already be nodes (add_sentence first); `sentence_text` is
  // kept for evidence display.
  void add_semantic_edge(const SemanticEdge& edge, std::string_view sentence_text = {});

  // Count addition; associative and commutative.
  void merge(const KnowledgeGraph& other);

  const KgNode* node(std::string_view lemma_key) const;
  const std::map<std::string, KgNode, std::less<>>& nodes() const { return nodes_; }
  std::uint64_t total_sentences() const { return total_sentences_; }

  // 0 for unknown nodes and for a == b.
  std::uint64_t edge_weight(std::string_view a, std::string_view b) const;

  // count(a, b) / sentence_count(b); P(b | b) is 1. Throws
  // UndefinedConditionalError when b is unknown or never seen in a sentence.
  Ratio conditional_probability(std::string_view a, std::string_view given_b) const;

  // Top-k by P(neighbor | node), ties by key. Throws UnknownNodeError.
  std::vector<Neighbor> neighbors(std::string_view node, std::size_t k,
                                  std::optional<EntityCategory> category_filter = std::nullopt) const;

  // Sorted by count descending, then value ascending. Throws UnknownDrugError
  // when `drug` is not a CHEMICAL node; a known drug without values gives {}.
  std::vector<AttributeValue> query_attribute(std::string_view drug, EntityCategory category) const;

  std::vector<CooccurrenceEdge> cooccurrence_edges() const;
  std::vector<SemanticEdge> semantic_edges() const;
  std::vector<AttributeEdge> attribute_edges() const;

  // Text of an evidence sentence when the graph holds it.
  std::optional<std::string> sentence_text(const EvidenceRef& ref) const;
  // Texts of every sentence referenced by stored evidence.
  std::map<EvidenceRef, std::string> evidence_texts() const;

  bool operator==(const KnowledgeGraph& other) const;

 private:
  friend KnowledgeGraph import_graph_json(std::string_view, std::string_view);

  struct EdgeData {
    std::uint64_t count = 0;
    std::set<EvidenceRef> evidence;
  };
  using SemanticKey = std::tuple<std::string, std::string, std::string>;
  using AttributeKey = std::tuple<std::string, EntityCategory, std::string>;

  KgNode& touch_node(const std::string& key, EntityCategory category);
  static void add_evidence(std::set<EvidenceRef>& set, const EvidenceRef& ref);

  std::map<std::string, KgNode, std::less<>> nodes_;
  std::map<std::string, std::map<std::string, std::uint64_t, std::less<>>, std::less<>> adjacency_;
  std::map<SemanticKey, EdgeData> semantic_;
  std::map<AttributeKey, EdgeData> attributes_;
  std::map<EvidenceRef, std::string> texts_;
  std::uint64_t total_sentences_ = 0;
};

struct BuildReport {
  std::size_t documents = 0;
  std::size_t sentences = 0;
  std::size_t entities = 0;
  std::size_t nodes = 0;
  std::size_t cooccurrence_edges = 0;
  std::size_t semantic_edges = 0;
  std::size_t attribute_edges = 0;
};

// Runs sentence splitting → extraction → graph update over `docs`. With
// threads > 1 documents are split into chunks built independently and merged.
KnowledgeGraph build_graph(std::span<const Document> docs, const TextPipeline& pipeline,
                           const EntityExtractor& extractor, const RelationPatterns* patterns,
                           BuildReport* report = nullptr, unsigned threads = 1);

inline constexpr std::string_view kGraphSchemaVersion = "1";

// Versioned JSON: {schema_version, total_sentences, nodes[], cooccurrence[],
// semantic[], attributes[], sentences[]}. Output is canonical: equal graphs
// serialize to identical bytes.
std::string export_graph_json(const KnowledgeGraph& graph);
void export_graph(const KnowledgeGraph& graph, const std::filesystem::path& path);

// Throws VersionError on an unknown schema_version and ParseError (with byte
// offset or JSON pointer) on corrupt content.
KnowledgeGraph import_graph_json(std::string_view text, std::string_view source = "<memory>");
KnowledgeGraph import_graph(const std::filesystem::path& path);

// Shared immutable snapshot; readers keep the graph they fetched alive while
// a reload swaps in a new one.
class GraphHandle {
 public:
  GraphHandle() : graph_(std::make_shared<const KnowledgeGraph>()) {}
  explicit GraphHandle(std::shared_ptr<const KnowledgeGraph> g) : graph_(std::move(g)) {}

  std::shared_ptr<const KnowledgeGraph> get() const {
    std::lock_guard lock(mu_);
    return graph_;
  }
  void replace(std::shared_ptr<const KnowledgeGraph> g) {
    std::lock_guard lock(mu_);
    graph_ = std::move(g);
  }

 private:
  mutable std::mutex mu_;
  std::shared_ptr<const KnowledgeGraph> graph_;
};

}  // namespace medbot
