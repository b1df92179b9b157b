#pragma once

#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "aqgen/autodiff.hpp"
#include "aqgen/grammar.hpp"
#include "aqgen/graph.hpp"
#include "aqgen/grounding.hpp"
#include "aqgen/kb.hpp"

namespace aqgen {

struct Hyperparams {
  int hidden = 64;        // d; must be even, divisible by heads
  int embed = 64;         // word embedding dimension
  int graph_layers = 3;
  int rnn_layers = 1;
  int heads = 4;
  double learning_rate = 1e-3;
  int epochs = 30;
  uint64_t seed = 7;

  void validate() const;
  nlohmann::json to_json() const;
  static Hyperparams from_json(const nlohmann::json& j);
};

/// Component switches matching the ablation settings.
struct AblationFlags {
  bool attention = true;
  bool skip_connection = true;
  bool graph_encoder = true;
  bool kb_constraint = true;

  nlohmann::json to_json() const;
  static AblationFlags from_json(const nlohmann::json& j);
};

struct ModelConfig {
  Hyperparams hyper;
  AblationFlags ablation;
  TraversalStrategy traversal = TraversalStrategy::dfs();
  int max_vertices = 8;

  nlohmann::json to_json() const;
  static ModelConfig from_json(const nlohmann::json& j);
};

/// Token table. Row 0..3 are reserved for <pad>, <unk>, <e>, <n>.
class Vocabulary {
 public:
  static constexpr std::string_view kPad = "<pad>";
  static constexpr std::string_view kUnknown = "<unk>";
  static constexpr std::string_view kEntityMention = "<e>";
  static constexpr std::string_view kNumberMention = "<n>";

  Vocabulary();
  /// Reserved tokens plus the sorted unique tokens of the corpus.
  static Vocabulary build(const std::vector<std::vector<std::string>>& corpus);

  int id_of(std::string_view token) const;  // unknown tokens map to <unk>
  const std::string& token(int id) const { return tokens_.at(static_cast<size_t>(id)); }
  int size() const { return static_cast<int>(tokens_.size()); }

  nlohmann::json to_json() const;
  static Vocabulary from_json(const nlohmann::json& j);

 private:
  std::vector<std::string> tokens_;
  std::map<std::string, int, std::less<>> ids_;
};

/// The neural AQG generator: configuration, vocabulary and all trainable
/// arrays. Read-only use from multiple threads is safe.
struct Model {
  ModelConfig config;
  Vocabulary vocab;
  ad::ParameterStore params;

  /// Fresh model with deterministic random initialization from the seed.
  static Model init(ModelConfig config, Vocabulary vocab);

  nlohmann::json to_json() const;
  static Model from_json(const nlohmann::json& j);
  void save(const std::filesystem::path& path) const;
  static Model load(const std::filesystem::path& path);

  /// Replaces word-embedding rows for tokens found in a pretrained text
  /// file (token followed by `embed` floats per line). Returns the number
  /// of replaced rows.
  int load_pretrained_embeddings(const std::filesystem::path& path);
};

enum class MentionKind { Entity, Number };

struct Mention {
  int begin = 0;  // token span [begin, end)
  int end = 0;
  MentionKind kind = MentionKind::Entity;
  std::string text;
};

class PreprocessError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Lowercased whitespace tokens with every entity mention span collapsed to
/// <e> and every number mention to <n>. Overlapping spans are an error.
std::vector<std::string> preprocess(std::string_view question, const std::vector<Mention>& mentions);

struct QuestionEncoding {
  std::vector<ad::Value> token_vecs;  // one d-vector per token
};

/// Bidirectional recurrent encoding, d/2 per direction, concatenated.
QuestionEncoding encode_question(ad::Tape& tape, const Model& model,
                                 const std::vector<std::string>& tokens);

struct GraphEncoding {
  std::vector<ad::Value> vertex_vecs;  // by vertex id
  std::vector<ad::Value> edge_vecs;    // by edge id
  ad::Value graph_vec;                 // learned empty-graph vector when empty
};

/// Graph-transformer encoding: class-label (plus answer-slot) initialization,
/// multi-head neighbor attention per layer, edge updates from endpoints, and
/// an attention readout over all states. With the graph-encoder ablation off
/// this returns the initial states untouched.
GraphEncoding encode_graph(ad::Tape& tape, const Model& model, const AbstractQueryGraph& g);

struct DecoderState {
  std::vector<std::pair<ad::Value, ad::Value>> layers;  // (h, c) per layer
};

DecoderState initial_decoder_state(ad::Tape& tape, const Model& model);

struct DecodeResult {
  ad::Value h_out;
  DecoderState next;
  std::vector<double> attention;  // per question token
};

/// One decoder step: question attention against the previous graph vector,
/// skip connection, one recurrent cell update.
DecodeResult decode_step(ad::Tape& tape, const Model& model, const DecoderState& state,
                         ad::Value graph_vec, const QuestionEncoding& question);

/// AddVertex head: probabilities over {Ent, Type, Num, Var, End}.
ad::Value predict_add_vertex(ad::Tape& tape, const Model& model, ad::Value h_out);

/// AddEdge head: probabilities over {Rel, Ord, Cmp, Cnt, Isa}.
ad::Value predict_add_edge(ad::Tape& tape, const Model& model, ad::Value h_out);

inline constexpr int kEndRow = kVertexClassCount;  // row of "End" in the AddVertex head

struct SelectDistribution {
  std::vector<int> vertex_ids;  // selectable vertices, ascending id
  ad::Value probs;              // aligned with vertex_ids
  /// Probability by vertex id; exactly 0 for the masked pending vertex.
  std::vector<double> by_vertex;
};

/// SelectVertex head: pointer over the existing vertices of the current
/// graph; the pending fresh vertex is masked out.
SelectDistribution predict_select_vertex(ad::Tape& tape, const Model& model, ad::Value h_out,
                                         const GraphEncoding& graph_enc,
                                         const AbstractQueryGraph& g,
                                         std::optional<int> pending_vertex);

class TrainingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct TrainExample {
  std::string id;
  std::vector<std::string> tokens;  // preprocessed
  ActionSequence gold;
};

struct LossStats {
  double loss = 0.0;
  int correct_actions = 0;
  int total_actions = 0;
};

/// Teacher-forced negative log-likelihood of the gold action sequence.
/// Gradients accumulate into the model parameters when `accumulate` is set.
LossStats loss(Model& model, const TrainExample& example, bool accumulate_gradients);

struct GenerateOptions {
  const KnowledgeBase* kb = nullptr;  // required when the KB constraint is on
  const LinkingResults* linking = nullptr;
};

/// Greedy generation with the predetermined operator schedule, the KB
/// constraint (revert the last triple and stop when nothing grounds), the
/// vertex cap, and the final type-attach step.
AbstractQueryGraph generate(const Model& model, const std::vector<std::string>& tokens,
                            const LinkingResults& linking, const KnowledgeBase& kb);

struct EpochStats {
  int epoch = 0;
  double mean_loss = 0.0;
  double action_accuracy = 0.0;
  double sequence_accuracy = 0.0;
  double dev_action_accuracy = 0.0;
  double dev_sequence_accuracy = 0.0;
};

struct TrainOptions {
  bool stop_at_perfect_train = false;
  std::function<void(const EpochStats&)> on_epoch;
};

struct TrainResult {
  std::vector<EpochStats> history;
  int best_epoch = -1;
};

/// Adam training with per-epoch shuffling from the seed; keeps the
/// best-dev parameters (best train when dev is empty). Aborts with
/// TrainingError on a non-finite loss.
TrainResult train(Model& model, const std::vector<TrainExample>& train_set,
                  const std::vector<TrainExample>& dev_set, const TrainOptions& options = {});

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::vector<std::pair<std::string, double>> per_array;  // insertion order
};

/// Central-difference check (h = 1e-5) of the reverse-mode gradients at
/// `coords` random coordinates of every parameter array.
GradCheckReport grad_check(Model& model, const TrainExample& example, int coords = 20,
                           double step = 1e-5, uint64_t seed = 17);

}  // namespace aqgen
