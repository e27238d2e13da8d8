#pragma once

// JSON shapes shared by the store, the HTTP service and the CLI.

#include <string_view>
#include <vector>

#include "json.hpp"
#include "medbot/kg.hpp"
#include "medbot/patient.hpp"

namespace medbot {

using Json = nlohmann::ordered_json;

// {patient_id, sessions:[{session_id, start, end, events:[{timestamp, kind, lemma_key, raw_text}]}]}
Json profile_to_json(const PatientProfile& profile);
// Throws ParseError naming `where` and the offending JSON pointer.
PatientProfile profile_from_json(const Json& j, std::string_view where = "<profile>");

Json event_to_json(const PatientEvent& event);
PatientEvent event_from_json(const Json& j, std::string_view where = "<event>");

// [{lemma_key, probability, count}]
Json neighbors_to_json(const std::vector<Neighbor>& neighbors);
// [{value, count, evidence:[{doc_id, sentence_index, text}]}]
Json attributes_to_json(const std::vector<AttributeValue>& values, const KnowledgeGraph& graph);
// [{lemma_key, score, source}]
Json predictions_to_json(const std::vector<Prediction>& predictions);

}  // namespace medbot
