#include "medbot/analysis.hpp"

#include <algorithm>
#include <map>
#include <set>

#include "json.hpp"
#include "medbot/error.hpp"
#include "medbot/util.hpp"

namespace medbot {

namespace {

using json = nlohmann::ordered_json;

FrequencyTable ranked(const std::map<std::string, std::uint64_t>& counts, std::size_t top_n) {
  FrequencyTable out;
  for (const auto& [term, c] : counts) out.push_back({term, c});
  std::stable_sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.count > b.count; });
  if (top_n > 0 && out.size() > top_n) out.resize(top_n);
  return out;
}

bool is_covid_key(const std::string& key, const Lemmatizer& lemmatizer) {
  for (const auto& kw : covid_keywords()) {
    if (normalize(kw, lemmatizer) == key) return true;
  }
  return key == "sars" || key == "covid";
}

std::vector<std::string> content_lemmas(const std::vector<Token>& tokens) {
  std::vector<std::string> out;
  for (const auto& t : tokens) {
    if (!t.is_punct) out.push_back(t.lemma);
  }
  return out;
}

YearMonth next(YearMonth ym) { return ym + std::chrono::months{1}; }

}  // namespace

FrequencyTable title_word_frequencies(std::span<const Document> docs, std::size_t top_n,
                                      const TextPipeline& pipeline) {
  std::map<std::string, std::uint64_t> counts;
  for (const auto& d : filter_covid_docs(docs)) {
    for (const auto& t : remove_stopwords(pipeline.analyze(d.title), pipeline.stopwords())) ++counts[t.lemma];
  }
  return ranked(counts, top_n);
}

FrequencyTable symptom_document_counts(std::span<const Document> docs, const Gazetteer& gazetteer,
                                       const TextPipeline& pipeline) {
  std::map<std::string, std::uint64_t> counts;
  for (const auto& key : gazetteer.canonical_keys(EntityCategory::Disease)) {
    if (!is_covid_key(key, pipeline.lemmatizer())) counts[key] = 0;
  }
  for (const auto& d : filter_covid_docs(docs)) {
    std::set<std::string> seen;
    for (const auto& s : pipeline.sentences(d)) {
      for (const auto& e : extract_entities(s, gazetteer)) {
        if (e.category == EntityCategory::Disease) seen.insert(e.lemma_key);
      }
    }
    for (const auto& key : seen) {
      if (auto it = counts.find(key); it != counts.end()) ++it->second;
    }
  }
  return ranked(counts, 0);
}

TrendSeries monthly_trend(std::span<const Document> docs, std::string_view term, const TextPipeline& pipeline) {
  auto needle = content_lemmas(pipeline.analyze(term));
  if (needle.empty()) throw Error("trend term must be non-empty");
  TrendSeries series{std::string(trim(term)), {}};
  std::map<YearMonth, std::uint64_t> counts;
  for (const auto& d : filter_covid_docs(docs)) {
    if (!d.publish_date) continue;
    YearMonth ym{d.publish_date->year(), d.publish_date->month()};
    auto& c = counts[ym];
    for (const auto& s : pipeline.sentences(d)) {
      auto lemmas = content_lemmas(s.tokens);
      if (std::search(lemmas.begin(), lemmas.end(), needle.begin(), needle.end()) != lemmas.end()) {
        ++c;
        break;
      }
    }
  }
  if (counts.empty()) return series;
  for (YearMonth ym = counts.begin()->first; ym <= counts.rbegin()->first; ym = next(ym)) {
    auto it = counts.find(ym);
    series.buckets.push_back({ym, it == counts.end() ? 0 : it->second});
  }
  return series;
}

namespace {

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

}  // namespace

std::string to_csv(const FrequencyTable& table) {
  std::string out = "term,count\n";
  for (const auto& e : table) out += csv_field(e.term) + "," + std::to_string(e.count) + "\n";
  return out;
}

std::string to_json(const FrequencyTable& table) {
  json arr = json::array();
  for (const auto& e : table) arr.push_back({{"term", e.term}, {"count", e.count}});
  return arr.dump(2) + "\n";
}

std::string to_csv(const TrendSeries& series) {
  std::string out = "month,count\n";
  for (const auto& b : series.buckets) out += format_year_month(b.month) + "," + std::to_string(b.count) + "\n";
  return out;
}

std::string to_json(const TrendSeries& series) {
  json buckets = json::array();
  for (const auto& b : series.buckets) buckets.push_back({{"month", format_year_month(b.month)}, {"count", b.count}});
  json out = {{"term", series.term}, {"buckets", std::move(buckets)}};
  return out.dump(2) + "\n";
}

}  // namespace medbot
