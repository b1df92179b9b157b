#pragma once

#include <cstdint>
#include <map>
#include <stdexcept>
#include <vector>

#include <json.hpp>

#include "aqgen/dataset.hpp"
#include "aqgen/kb.hpp"

namespace aqgen {

class SynthError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Knob set for the synthetic benchmark: KB size, split sizes, and the
/// template mix over complexity levels (level = edge count of the gold
/// query, 1 to 4).
struct SynthSpec {
  int entities = 120;
  int relations = 18;
  int types = 6;
  int triples = 900;  // relational triples; type assertions come on top
  int train = 500;
  int dev = 50;
  int test = 100;
  std::map<int, double> level_weights = {{1, 0.35}, {2, 0.35}, {3, 0.30}};
  uint64_t seed = 1;

  nlohmann::json to_json() const;
  static SynthSpec from_json(const nlohmann::json& j);
};

struct SynthOutput {
  KnowledgeBase kb;
  std::vector<DatasetRecord> train;
  std::vector<DatasetRecord> dev;
  std::vector<DatasetRecord> test;
};

/// Deterministic synthetic KB and question set. Every record's gold query
/// executes nonempty against the KB; linking results carry the gold
/// candidates plus distractors. Throws SynthError when the spec is
/// infeasible (e.g. ordinal templates without numeric relations).
SynthOutput synth_generate(const SynthSpec& spec);

}  // namespace aqgen
