#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "medbot/corpus.hpp"
#include "medbot/ner.hpp"
#include "medbot/time.hpp"

namespace medbot {

struct FrequencyEntry {
  std::string term;
  std::uint64_t count = 0;

  bool operator==(const FrequencyEntry&) const = default;
};

// Sorted by count descending, then term ascending.
using FrequencyTable = std::vector<FrequencyEntry>;

struct TrendBucket {
  YearMonth month;
  std::uint64_t count = 0;

  bool operator==(const TrendBucket&) const = default;
};

struct TrendSeries {
  std::string term;
  std::vector<TrendBucket> buckets;  // consecutive months, ascending
};

// Lemma counts over the titles of COVID documents, stopwords and punctuation
// excluded; top_n == 0 keeps every term.
FrequencyTable title_word_frequencies(std::span<const Document> docs, std::size_t top_n, const TextPipeline& pipeline);

// Number of COVID documents mentioning each DISEASE key of the gazetteer at
// least once. Keys naming the disease itself (covid-19, sars, ...) are left
// out; absent symptoms are listed with 0.
FrequencyTable symptom_document_counts(std::span<const Document> docs, const Gazetteer& gazetteer,
                                       const TextPipeline& pipeline);

// Per-month count of dated COVID documents whose lemma stream contains the
// normalized term. Buckets span the first to the last dated COVID document,
// zero months included. No dated documents gives an empty series.
TrendSeries monthly_trend(std::span<const Document> docs, std::string_view term, const TextPipeline& pipeline);

std::string to_csv(const FrequencyTable& table);
std::string to_json(const FrequencyTable& table);
std::string to_csv(const TrendSeries& series);
std::string to_json(const TrendSeries& series);

}  // namespace medbot
