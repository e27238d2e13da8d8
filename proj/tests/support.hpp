#pragma once

#include <unistd.h>

#include <algorithm>
#include <filesystem>
#include <map>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "medbot/corpus.hpp"
#include "medbot/kg.hpp"
#include "medbot/ner.hpp"
#include "medbot/resources.hpp"
#include "medbot/util.hpp"

namespace medbot::test {

inline std::filesystem::path fixture(const std::string& name) {
  return std::filesystem::path(MEDBOT_FIXTURE_DIR) / name;
}

inline std::filesystem::path data_dir() { return MEDBOT_DEFAULT_DATA_DIR; }

inline const NlpResources& resources() {
  static const NlpResources r = NlpResources::load(data_dir());
  return r;
}

inline std::filesystem::path temp_dir(const std::string& tag) {
  auto dir = std::filesystem::temp_directory_path() /
             ("medbot-" + tag + "-" + std::to_string(::getpid()) + "-" + std::to_string(std::rand()));
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

// Entity lists per sentence over a corpus, in document order.
struct AnnotatedSentence {
  Sentence sentence;
  std::vector<Entity> entities;
};

inline std::vector<AnnotatedSentence> annotate(const std::vector<Document>& docs) {
  const auto& r = resources();
  std::vector<AnnotatedSentence> out;
  for (const auto& d : docs) {
    for (auto& s : r.pipeline.sentences(d)) {
      auto ents = extract_entities(s, r.gazetteer);
      out.push_back({std::move(s), std::move(ents)});
    }
  }
  return out;
}

// Independent recount: for every sentence, for every pair of keys in the
// node universe, test membership directly. No incremental state is shared
// with KnowledgeGraph.
struct OracleCounts {
  std::map<std::string, std::uint64_t> sentence_count;
  std::map<std::string, std::uint64_t> mention_count;
  std::map<std::pair<std::string, std::string>, std::uint64_t> pair_count;  // first < second, count > 0 only
  std::uint64_t sentences = 0;
};

inline OracleCounts brute_force_counts(const std::vector<AnnotatedSentence>& corpus) {
  OracleCounts o;
  std::set<std::string> universe;
  for (const auto& s : corpus) {
    for (const auto& e : s.entities) {
      if (is_node_category(e.category)) universe.insert(e.lemma_key);
    }
  }
  std::vector<std::string> keys(universe.begin(), universe.end());
  auto mentions_in = [](const AnnotatedSentence& s, const std::string& key) {
    return static_cast<std::uint64_t>(std::count_if(s.entities.begin(), s.entities.end(), [&](const Entity& e) {
      return is_node_category(e.category) && e.lemma_key == key;
    }));
  };
  for (const auto& s : corpus) {
    ++o.sentences;
    for (const auto& k : keys) {
      auto m = mentions_in(s, k);
      if (m > 0) {
        o.mention_count[k] += m;
        o.sentence_count[k] += 1;
      }
    }
    for (std::size_t i = 0; i < keys.size(); ++i) {
      for (std::size_t j = i + 1; j < keys.size(); ++j) {
        if (mentions_in(s, keys[i]) > 0 && mentions_in(s, keys[j]) > 0) ++o.pair_count[{keys[i], keys[j]}];
      }
    }
  }
  return o;
}

// Neighbor ranking straight from the oracle counts.
inline std::vector<std::pair<std::string, double>> oracle_neighbors(const OracleCounts& o, const std::string& node,
                                                                    std::size_t k) {
  std::vector<std::pair<std::string, double>> out;
  double denom = static_cast<double>(o.sentence_count.at(node));
  for (const auto& [pair, c] : o.pair_count) {
    if (pair.first == node) out.push_back({pair.second, c / denom});
    if (pair.second == node) out.push_back({pair.first, c / denom});
  }
  std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });
  if (out.size() > k) out.resize(k);
  return out;
}

inline KnowledgeGraph graph_from(const std::vector<AnnotatedSentence>& corpus, bool semantic = true) {
  KnowledgeGraph g;
  for (const auto& s : corpus) {
    g.add_sentence(s.entities, s.sentence);
    if (semantic) {
      for (const auto& e : extract_semantic_edges(s.sentence, s.entities, resources().relations)) {
        g.add_semantic_edge(e, s.sentence.text);
      }
    }
  }
  return g;
}

inline Sentence make_sentence(const std::string& text, const std::string& doc_id = "t", std::size_t index = 0) {
  Sentence s;
  s.doc_id = doc_id;
  s.index = index;
  s.text = text;
  s.tokens = resources().pipeline.analyze(text);
  return s;
}

}  // namespace medbot::test
