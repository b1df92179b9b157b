#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "aqgen/grounding.hpp"
#include "aqgen/graph.hpp"
#include "aqgen/nn.hpp"

namespace aqgen {

/// One question with its linking results, gold query and gold answers
/// (display strings, as produced by executing the gold query).
struct DatasetRecord {
  std::string id;
  std::string question;
  std::vector<Mention> mentions;
  LinkingResults linking;
  QueryGraph gold_query;
  std::vector<std::string> gold_answers;

  nlohmann::json to_json() const;
  static DatasetRecord from_json(const nlohmann::json& j);
};

std::vector<DatasetRecord> read_jsonl(const std::filesystem::path& path);
void write_jsonl(const std::filesystem::path& path, const std::vector<DatasetRecord>& records);

/// Teacher-forcing example: preprocessed tokens plus the ground-truth
/// action sequence built by traversing the gold AQG. The Random strategy
/// derives a per-record seed from the base seed and the record index.
std::vector<TrainExample> to_train_examples(const std::vector<DatasetRecord>& records,
                                            TraversalStrategy strategy);

}  // namespace aqgen
