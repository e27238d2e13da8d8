#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "medbot/time.hpp"

namespace medbot {

struct Document {
  std::string doc_id;
  std::string title;
  std::string abstract;
  std::string body;
  std::optional<Date> publish_date;

  bool operator==(const Document&) const = default;
};

struct Token {
  std::string surface;
  std::string lemma;
  std::size_t start = 0;
  std::size_t end = 0;
  bool is_stopword = false;
  bool is_punct = false;

  bool operator==(const Token&) const = default;
};

// One sentence of a document. `begin` is the offset of `text` inside
// document_text(doc); token offsets are relative to `text`.
struct Sentence {
  std::string doc_id;
  std::size_t index = 0;
  std::size_t begin = 0;
  std::string text;
  std::vector<Token> tokens;
};

enum class CorpusFormat { Jsonl, Cord19 };

// "jsonl" or "cord19" (metadata.csv + per-paper JSON directory). Throws ConfigError.
CorpusFormat parse_corpus_format(std::string_view tag);

struct LoadReport {
  std::size_t loaded = 0;
  std::size_t skipped = 0;
  std::vector<std::string> problems;
};

// Throws IoError for unreadable input and EmptyCorpusError when nothing loads.
// Malformed and duplicate records are skipped and listed in `report`.
std::vector<Document> load_corpus(const std::filesystem::path& path, CorpusFormat format,
                                  LoadReport* report = nullptr);

// Title, abstract and body joined by '\n' (empty fields omitted).
std::string document_text(const Document& doc);

/// Tokenizer rules, applied left to right over the raw bytes:
///   1. Whitespace separates tokens and is never emitted.
///   2. A word is a maximal run of word characters: ASCII letters, digits and
///      every byte >= 0x80 (so UTF-8 letters stay inside words).
///   3. '-', '\'', '.', '/' join two word-character runs when they sit directly
///      between them: "COVID-19", "can't", "2.5", "e.g" stay single tokens.
///   4. Any other byte (and a joiner that does not sit between word runs) is a
///      one-character punctuation token, flagged `is_punct`.
/// Lemmas are left empty; see Lemmatizer.
std::vector<Token> tokenize(std::string_view text);

// Rule-based lemmatizer: lowercase, exceptions lexicon, then suffix rules
// (-ies, -sses, -shes/-ches/-xes/-zzes, -s, -ing, -ed with undoubling and
// silent-e restoration). The rules are iterated to a fixed point, so
// lemmatizing a lemma returns it unchanged.
class Lemmatizer {
 public:
  Lemmatizer() = default;
  explicit Lemmatizer(std::unordered_map<std::string, std::string> exceptions);

  // File format: "inflected lemma" per line, '#' comments. Throws ConfigError.
  static Lemmatizer load(const std::filesystem::path& exceptions_path);

  std::string lemmatize(std::string_view word) const;
  Token lemmatize(Token token) const;

  std::size_t exception_count() const { return exceptions_.size(); }

 private:
  std::string apply_rules(const std::string& lower) const;

  std::unordered_map<std::string, std::string> exceptions_;
};

class StopwordLexicon {
 public:
  StopwordLexicon() = default;
  explicit StopwordLexicon(std::unordered_set<std::string> words) : words_(std::move(words)) {}

  // One lowercase word per line, '#' comments. Missing file → ConfigError.
  static StopwordLexicon load(const std::filesystem::path& path);

  bool contains(std::string_view word) const { return words_.count(std::string(word)) > 0; }
  std::size_t size() const { return words_.size(); }

 private:
  std::unordered_set<std::string> words_;
};

// Tokenize + lemmatize + stopword flagging in one pass.
class TextPipeline {
 public:
  TextPipeline(Lemmatizer lemmatizer, StopwordLexicon stopwords)
      : lemmatizer_(std::move(lemmatizer)), stopwords_(std::move(stopwords)) {}

  std::vector<Token> analyze(std::string_view text) const;
  std::vector<Sentence> sentences(const Document& doc) const;

  const Lemmatizer& lemmatizer() const { return lemmatizer_; }
  const StopwordLexicon& stopwords() const { return stopwords_; }

 private:
  Lemmatizer lemmatizer_;
  StopwordLexicon stopwords_;
};

// Segments title, abstract and body into sentences. Lines are hard breaks;
// inside a line a run of '.', '!' or '?' followed by whitespace or the end of
// the line closes a sentence unless the preceding word is a known
// abbreviation ("e.g.", "et al.", "Fig.", ...) or a single-letter initial.
// Tokens are filled (with lemmas and stopword flags) when a pipeline is given.
std::vector<Sentence> split_sentences(const Document& doc, const TextPipeline* pipeline = nullptr);

Token lemmatize(Token token, const Lemmatizer& lemmatizer);

// Drops punctuation and every token whose lemma (or lowercased surface) is in
// the lexicon, preserving order.
std::vector<Token> remove_stopwords(std::span<const Token> tokens, const StopwordLexicon& lexicon);

const std::vector<std::string>& covid_keywords();
bool is_covid_document(const Document& doc);
std::vector<Document> filter_covid_docs(std::span<const Document> docs);

}  // namespace medbot
