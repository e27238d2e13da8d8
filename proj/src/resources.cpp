#include "medbot/resources.hpp"

#include <cstdlib>

namespace medbot {

std::filesystem::path default_resource_dir() {
  if (const char* env = std::getenv("MEDBOT_RESOURCE_DIR"); env && *env) return env;
  return MEDBOT_DEFAULT_DATA_DIR;
}

NlpResources NlpResources::load(const std::filesystem::path& data_dir,
                                const std::optional<std::filesystem::path>& gazetteer_path) {
  TextPipeline pipeline(Lemmatizer::load(data_dir / "lemma_exceptions.txt"),
                        StopwordLexicon::load(data_dir / "stopwords.txt"));
  Gazetteer gaz = Gazetteer::load(gazetteer_path.value_or(data_dir / "gazetteer.csv"), pipeline.lemmatizer());
  gaz.load_units(data_dir / "units.csv", pipeline.lemmatizer());
  RelationPatterns relations = RelationPatterns::load(data_dir / "relations.csv", pipeline.lemmatizer());
  return NlpResources{std::move(pipeline), std::move(gaz), std::move(relations)};
}

}  // namespace medbot
