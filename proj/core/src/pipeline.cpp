#include "aqgen/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <istream>
#include <mutex>
#include <ostream>
#include <thread>

#include "aqgen/text.hpp"

namespace aqgen {

namespace {

/// Mirrors the executor's early-empty rules for Cmp/Ord/Cnt so hopeless
/// structures are skipped before any grounding work. Must stay conservative:
/// reject only shapes whose every grounding executes empty.
bool constraint_shape_ok(const AbstractQueryGraph& g) {
  const AbstractQueryGraph::E* count_edge = nullptr;
  for (const auto& e : g.edges) {
    VertexClass cu = g.vertex(e.u).cls;
    VertexClass cv = g.vertex(e.v).cls;
    bool u_num = cu == VertexClass::Num;
    bool v_num = cv == VertexClass::Num;
    switch (e.cls) {
      case EdgeClass::Cmp:
      case EdgeClass::Ord: {
        if (!u_num && !v_num) return false;
        VertexClass value_side = v_num ? cu : cv;
        if (value_side == VertexClass::Ent || value_side == VertexClass::Type) return false;
        break;
      }
      case EdgeClass::Cnt: {
        if (u_num || v_num) {
          VertexClass counted = v_num ? cu : cv;
          if (counted != VertexClass::Var) return false;
        } else if (e.u == g.answer || e.v == g.answer) {
          VertexClass counted = e.u == g.answer ? cv : cu;
          if (counted != VertexClass::Var) return false;
          if (count_edge) return false;
          count_edge = &e;
        } else {
          return false;
        }
        break;
      }
      default: break;
    }
  }
  if (count_edge) {
    for (const auto& e : g.edges)
      if (e.id != count_edge->id && e.touches(g.answer)) return false;
  }
  return true;
}

}  // namespace

const std::vector<AbstractQueryGraph>& aqg_shape_catalog(int max_edges) {
  if (max_edges < 0 || max_edges > 4)
    throw std::invalid_argument("aqg_shape_catalog: max_edges must be in [0, 4]");
  static std::mutex mutex;
  static std::map<int, std::vector<AbstractQueryGraph>> cache;
  std::lock_guard<std::mutex> lock(mutex);
  auto it = cache.find(max_edges);
  if (it != cache.end()) return it->second;

  std::vector<AbstractQueryGraph> all;
  std::set<CanonicalCode> seen;
  AbstractQueryGraph root;
  root.add_vertex(VertexClass::Var);
  root.answer = 0;
  seen.insert(canonical_code(root));
  all.push_back(root);

  std::vector<AbstractQueryGraph> frontier{root};
  for (int edges = 1; edges <= max_edges; ++edges) {
    std::vector<AbstractQueryGraph> next;
    for (const AbstractQueryGraph& g : frontier) {
      for (const auto& u : g.vertices) {
        for (int vc = 0; vc < kVertexClassCount; ++vc) {
          for (int ec = 0; ec < kEdgeClassCount; ++ec) {
            AbstractQueryGraph grown = g;
            int fresh = grown.add_vertex(static_cast<VertexClass>(vc));
            grown.add_edge(static_cast<EdgeClass>(ec), u.id, fresh);
            if (seen.insert(canonical_code(grown)).second) next.push_back(grown);
          }
        }
      }
    }
    all.insert(all.end(), next.begin(), next.end());
    frontier = std::move(next);
  }
  return cache.emplace(max_edges, std::move(all)).first->second;
}

std::vector<AbstractQueryGraph> enumerate_aqgs(int max_edges, const LinkingResults& linking,
                                               const KnowledgeBase& kb) {
  std::vector<AbstractQueryGraph> out;
  for (const AbstractQueryGraph& g : aqg_shape_catalog(max_edges)) {
    if (!constraint_shape_ok(g)) continue;
    if (is_groundable(g, linking, kb)) out.push_back(g);
  }
  return out;
}

RankChoice rank_baseline(const std::vector<std::string>& question_tokens,
                         const std::vector<GroundedQuery>& candidates) {
  if (candidates.empty()) throw std::invalid_argument("rank_baseline: no candidates");
  std::set<std::string> question(question_tokens.begin(), question_tokens.end());

  RankChoice best;
  std::string best_key;
  for (size_t i = 0; i < candidates.size(); ++i) {
    const GroundedQuery& q = candidates[i];
    std::set<std::string> lexicon;
    for (const Vertex& v : q.vertices) {
      if (v.cls == VertexClass::Var || !v.instance) continue;
      for (auto& t : split_name(*v.instance)) lexicon.insert(std::move(t));
    }
    for (const Edge& e : q.edges) {
      if (!e.instance) continue;
      for (auto& t : split_name(*e.instance)) lexicon.insert(std::move(t));
    }
    size_t common = 0;
    for (const std::string& t : lexicon) common += question.count(t);
    size_t unions = question.size() + lexicon.size() - common;
    double score = unions == 0 ? 0.0 : static_cast<double>(common) / static_cast<double>(unions);

    bool better = false;
    if (best.index < 0 || score > best.score) {
      better = true;
    } else if (score == best.score) {
      size_t best_edges = candidates[static_cast<size_t>(best.index)].edges.size();
      if (q.edges.size() < best_edges) {
        better = true;
      } else if (q.edges.size() == best_edges) {
        std::string key = q.to_json().dump();
        if (key < best_key) better = true;
      }
    }
    if (better) {
      best.index = static_cast<int>(i);
      best.score = score;
      best_key = q.to_json().dump();
    }
  }
  return best;
}

PrfScores evaluate_answers(const std::set<std::string>& predicted,
                           const std::set<std::string>& gold) {
  if (predicted.empty() && gold.empty()) return {1.0, 1.0, 1.0};
  if (predicted.empty() || gold.empty()) return {0.0, 0.0, 0.0};
  size_t common = 0;
  for (const std::string& p : predicted) common += gold.count(p);
  double precision = static_cast<double>(common) / static_cast<double>(predicted.size());
  double recall = static_cast<double>(common) / static_cast<double>(gold.size());
  double f1 = (precision + recall) == 0.0 ? 0.0 : 2.0 * precision * recall / (precision + recall);
  return {precision, recall, f1};
}

std::string_view to_string(EvalMode m) {
  switch (m) {
    case EvalMode::PredictedAqg: return "aqg";
    case EvalMode::StBaseline: return "st";
    case EvalMode::OracleAqg: return "oracle";
  }
  return "?";
}

std::optional<EvalMode> parse_eval_mode(std::string_view s) {
  if (s == "aqg") return EvalMode::PredictedAqg;
  if (s == "st") return EvalMode::StBaseline;
  if (s == "oracle") return EvalMode::OracleAqg;
  return std::nullopt;
}

nlohmann::json MetricsReport::to_json() const {
  nlohmann::json j;
  j["questions"] = questions;
  j["precision"] = precision;
  j["recall"] = recall;
  j["f1"] = f1;
  j["mean_candidates"] = mean_candidates;
  j["aqg_accuracy"] = aqg_accuracy;
  nlohmann::json levels = nlohmann::json::object();
  for (const auto& [level, m] : by_level)
    levels[std::to_string(level)] = {{"questions", m.questions}, {"precision", m.precision},
                                     {"recall", m.recall},       {"f1", m.f1},
                                     {"aqg_accuracy", m.aqg_accuracy},
                                     {"mean_candidates", m.mean_candidates}};
  j["by_level"] = std::move(levels);
  return j;
}

nlohmann::json QuestionTrace::to_json() const {
  nlohmann::json j;
  j["id"] = id;
  j["level"] = level;
  j["aqg"] = aqg ? aqg->to_json() : nlohmann::json();
  j["n_candidates"] = candidate_count;
  j["chosen"] = chosen ? chosen->to_json() : nlohmann::json();
  j["score"] = score;
  j["answers"] = answers;
  j["gold_answers"] = gold_answers;
  j["precision"] = prf.precision;
  j["recall"] = prf.recall;
  j["f1"] = prf.f1;
  j["aqg_correct"] = aqg_correct;
  return j;
}

namespace {

QuestionTrace evaluate_record(const Model& model, const KnowledgeBase& kb,
                              const DatasetRecord& record, const EvalConfig& config) {
  QuestionTrace trace;
  trace.id = record.id;
  trace.level = static_cast<int>(record.gold_query.edges.size());
  trace.gold_answers = record.gold_answers;

  AbstractQueryGraph gold_aqg = abstract_of(record.gold_query);
  std::vector<GroundedQuery> candidates;
  switch (config.mode) {
    case EvalMode::PredictedAqg: {
      std::vector<std::string> tokens = preprocess(record.question, record.mentions);
      trace.aqg = generate(model, tokens, record.linking, kb);
      candidates = ground(*trace.aqg, record.linking, kb);
      break;
    }
    case EvalMode::OracleAqg:
      trace.aqg = gold_aqg;
      candidates = ground(gold_aqg, record.linking, kb);
      break;
    case EvalMode::StBaseline: {
      for (const AbstractQueryGraph& g :
           enumerate_aqgs(config.st_max_edges, record.linking, kb)) {
        std::vector<GroundedQuery> part = ground(g, record.linking, kb);
        candidates.insert(candidates.end(), part.begin(), part.end());
      }
      break;
    }
  }
  trace.candidate_count = static_cast<int>(candidates.size());
  trace.aqg_correct = trace.aqg && is_isomorphic(*trace.aqg, gold_aqg);

  std::set<std::string> predicted;
  if (!candidates.empty()) {
    std::vector<std::string> question_tokens = split_tokens(record.question);
    RankChoice choice = rank_baseline(question_tokens, candidates);
    trace.chosen = candidates[static_cast<size_t>(choice.index)];
    trace.score = choice.score;
    for (const Term& t : execute(*trace.chosen, kb)) predicted.insert(term_to_string(t, kb));
  }
  trace.answers.assign(predicted.begin(), predicted.end());

  std::set<std::string> gold(record.gold_answers.begin(), record.gold_answers.end());
  trace.prf = evaluate_answers(predicted, gold);
  return trace;
}

MetricsReport aggregate(const std::vector<QuestionTrace>& traces) {
  MetricsReport report;
  report.questions = static_cast<int>(traces.size());
  std::map<int, std::vector<const QuestionTrace*>> buckets;
  for (const QuestionTrace& t : traces) {
    report.precision += t.prf.precision;
    report.recall += t.prf.recall;
    report.f1 += t.prf.f1;
    report.mean_candidates += static_cast<double>(t.candidate_count);
    report.aqg_accuracy += t.aqg_correct ? 1.0 : 0.0;
    buckets[t.level].push_back(&t);
  }
  if (report.questions > 0) {
    double n = static_cast<double>(report.questions);
    report.precision /= n;
    report.recall /= n;
    report.f1 /= n;
    report.mean_candidates /= n;
    report.aqg_accuracy /= n;
  }
  for (const auto& [level, items] : buckets) {
    LevelMetrics m;
    m.questions = static_cast<int>(items.size());
    for (const QuestionTrace* t : items) {
      m.precision += t->prf.precision;
      m.recall += t->prf.recall;
      m.f1 += t->prf.f1;
      m.aqg_accuracy += t->aqg_correct ? 1.0 : 0.0;
      m.mean_candidates += static_cast<double>(t->candidate_count);
    }
    double n = static_cast<double>(m.questions);
    m.precision /= n;
    m.recall /= n;
    m.f1 /= n;
    m.aqg_accuracy /= n;
    m.mean_candidates /= n;
    report.by_level[level] = m;
  }
  return report;
}

}  // namespace

MetricsReport run_e2e(const Model& model, const KnowledgeBase& kb,
                      const std::vector<DatasetRecord>& test, const EvalConfig& config,
                      std::ostream* trace) {
  if (test.empty()) throw std::invalid_argument("run_e2e: empty test set");
  std::vector<QuestionTrace> traces(test.size());

  int threads = std::max(1, config.threads);
  if (threads == 1) {
    for (size_t i = 0; i < test.size(); ++i)
      traces[i] = evaluate_record(model, kb, test[i], config);
  } else {
    // Indexed result slots keep aggregation order-independent of scheduling.
    std::atomic<size_t> cursor{0};
    std::vector<std::thread> pool;
    pool.reserve(static_cast<size_t>(threads));
    for (int w = 0; w < threads; ++w) {
      pool.emplace_back([&] {
        while (true) {
          size_t i = cursor.fetch_add(1);
          if (i >= test.size()) break;
          traces[i] = evaluate_record(model, kb, test[i], config);
        }
      });
    }
    for (std::thread& t : pool) t.join();
  }

  if (trace)
    for (const QuestionTrace& t : traces) *trace << t.to_json().dump() << '\n';
  return aggregate(traces);
}

MetricsReport metrics_from_trace(std::istream& trace) {
  std::vector<QuestionTrace> traces;
  std::string line;
  while (std::getline(trace, line)) {
    if (line.empty()) continue;
    nlohmann::json j = nlohmann::json::parse(line);
    QuestionTrace t;
    t.id = j.at("id").get<std::string>();
    t.level = j.at("level").get<int>();
    t.candidate_count = j.at("n_candidates").get<int>();
    t.prf.precision = j.at("precision").get<double>();
    t.prf.recall = j.at("recall").get<double>();
    t.prf.f1 = j.at("f1").get<double>();
    t.aqg_correct = j.at("aqg_correct").get<bool>();
    traces.push_back(std::move(t));
  }
  return aggregate(traces);
}

}  // namespace aqgen
