#pragma once

#include <filesystem>
#include <optional>

#include "medbot/corpus.hpp"
#include "medbot/kg.hpp"
#include "medbot/ner.hpp"

namespace medbot {

// $MEDBOT_RESOURCE_DIR when set, else the data/ directory of the source tree.
std::filesystem::path default_resource_dir();

// Language resources shared by ingestion, analytics and dialogue. Files are
// read from `data_dir`: stopwords.txt, lemma_exceptions.txt, gazetteer.csv,
// units.csv, relations.csv.
struct NlpResources {
  TextPipeline pipeline;
  Gazetteer gazetteer;
  RelationPatterns relations;

  static NlpResources load(const std::filesystem::path& data_dir,
                           const std::optional<std::filesystem::path>& gazetteer_path = std::nullopt);
};

}  // namespace medbot
