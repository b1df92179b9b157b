#pragma once

#include <iosfwd>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "aqgen/dataset.hpp"
#include "aqgen/grounding.hpp"
#include "aqgen/nn.hpp"

namespace aqgen {

/// All non-isomorphic groundable AQG structures with up to `max_edges`
/// edges (<= 4) rooted at a Var answer vertex. The structure-unconstrained
/// candidate space of the staged-transition style baseline.
std::vector<AbstractQueryGraph> enumerate_aqgs(int max_edges, const LinkingResults& linking,
                                               const KnowledgeBase& kb);

/// The raw structure catalog behind enumerate_aqgs, before groundability
/// filtering. Cached per max_edges; thread-safe.
const std::vector<AbstractQueryGraph>& aqg_shape_catalog(int max_edges);

struct RankChoice {
  int index = -1;
  double score = 0.0;
};

/// Baseline ranker: token-overlap (Jaccard) similarity between the question
/// tokens and the candidate's lexicon (instance names, tokenized); ties go
/// to fewer edges, then canonical serialization order.
RankChoice rank_baseline(const std::vector<std::string>& question_tokens,
                         const std::vector<GroundedQuery>& candidates);

struct PrfScores {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

/// Set precision/recall/F1. Both-empty scores 1; empty-vs-nonempty scores 0.
PrfScores evaluate_answers(const std::set<std::string>& predicted,
                           const std::set<std::string>& gold);

enum class EvalMode { PredictedAqg, StBaseline, OracleAqg };

std::string_view to_string(EvalMode m);
std::optional<EvalMode> parse_eval_mode(std::string_view s);

struct EvalConfig {
  EvalMode mode = EvalMode::PredictedAqg;
  int st_max_edges = 3;
  int threads = 1;
};

struct LevelMetrics {
  int questions = 0;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  double aqg_accuracy = 0.0;
  double mean_candidates = 0.0;
};

struct MetricsReport {
  int questions = 0;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  double mean_candidates = 0.0;  // N_c
  double aqg_accuracy = 0.0;     // isomorphic to gold; 0 in ST mode
  std::map<int, LevelMetrics> by_level;

  nlohmann::json to_json() const;
};

/// Per-question outcome, one JSON line each in the trace file.
struct QuestionTrace {
  std::string id;
  int level = 0;
  std::optional<AbstractQueryGraph> aqg;
  int candidate_count = 0;
  std::optional<GroundedQuery> chosen;
  double score = 0.0;
  std::vector<std::string> answers;
  std::vector<std::string> gold_answers;
  PrfScores prf;
  bool aqg_correct = false;

  nlohmann::json to_json() const;
};

/// Full second-stage run over a test set: structure (predicted, gold, or
/// enumerated), grounding, ranking, execution, evaluation. Deterministic
/// for a fixed model and config; `trace` receives one JSON line per
/// question when set.
MetricsReport run_e2e(const Model& model, const KnowledgeBase& kb,
                      const std::vector<DatasetRecord>& test, const EvalConfig& config,
                      std::ostream* trace = nullptr);

/// Metrics recomputed from a trace stream (one JSON object per line);
/// the independent recount used to validate MetricsReport aggregation.
MetricsReport metrics_from_trace(std::istream& trace);

}  // namespace aqgen
