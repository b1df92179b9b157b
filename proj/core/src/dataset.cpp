#include "aqgen/dataset.hpp"

#include <fstream>

#include "aqgen/rng.hpp"

namespace aqgen {

namespace {

std::string_view mention_kind_name(MentionKind k) {
  return k == MentionKind::Entity ? "entity" : "number";
}

}  // namespace

nlohmann::json DatasetRecord::to_json() const {
  nlohmann::json j;
  j["id"] = id;
  j["question"] = question;
  j["mentions"] = nlohmann::json::array();
  for (const Mention& m : mentions)
    j["mentions"].push_back({{"begin", m.begin},
                             {"end", m.end},
                             {"kind", mention_kind_name(m.kind)},
                             {"text", m.text}});
  j["linking"] = linking.to_json();
  j["gold_query"] = gold_query.to_json();
  j["gold_answers"] = gold_answers;
  return j;
}

DatasetRecord DatasetRecord::from_json(const nlohmann::json& j) {
  DatasetRecord r;
  r.id = j.at("id").get<std::string>();
  r.question = j.at("question").get<std::string>();
  for (const auto& jm : j.at("mentions")) {
    Mention m;
    m.begin = jm.at("begin").get<int>();
    m.end = jm.at("end").get<int>();
    m.kind = jm.at("kind").get<std::string>() == "number" ? MentionKind::Number
                                                          : MentionKind::Entity;
    if (jm.contains("text")) m.text = jm.at("text").get<std::string>();
    r.mentions.push_back(std::move(m));
  }
  r.linking = LinkingResults::from_json(j.at("linking"));
  r.gold_query = QueryGraph::from_json(j.at("gold_query"));
  if (j.contains("gold_answers"))
    r.gold_answers = j.at("gold_answers").get<std::vector<std::string>>();
  return r;
}

std::vector<DatasetRecord> read_jsonl(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::vector<DatasetRecord> out;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      out.push_back(DatasetRecord::from_json(nlohmann::json::parse(line)));
    } catch (const std::exception& e) {
      throw ParseError(std::string("bad dataset record: ") + e.what(), line_no);
    }
  }
  return out;
}

void write_jsonl(const std::filesystem::path& path, const std::vector<DatasetRecord>& records) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  for (const DatasetRecord& r : records) out << r.to_json().dump() << '\n';
}

std::vector<TrainExample> to_train_examples(const std::vector<DatasetRecord>& records,
                                            TraversalStrategy strategy) {
  std::vector<TrainExample> out;
  out.reserve(records.size());
  for (size_t i = 0; i < records.size(); ++i) {
    const DatasetRecord& r = records[i];
    TrainExample ex;
    ex.id = r.id;
    ex.tokens = preprocess(r.question, r.mentions);
    TraversalStrategy per_record = strategy;
    if (strategy.kind == TraversalKind::Random)
      per_record.seed = derive_seed(strategy.seed, i);
    ex.gold = build_ground_truth(abstract_of(r.gold_query), per_record);
    out.push_back(std::move(ex));
  }
  return out;
}

}  // namespace aqgen
