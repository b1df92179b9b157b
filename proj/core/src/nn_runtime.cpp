#include <algorithm>
#include <cmath>

#include "aqgen/nn.hpp"
#include "aqgen/rng.hpp"

namespace aqgen {

namespace {

using ad::Mat;
using ad::Value;

/// Per-forward-pass parameter context. In trainable mode each parameter
/// becomes a gradient-accumulating leaf (created once per tape); otherwise
/// parameters enter the tape as constants.
struct Ctx {
  ad::Tape& tape;
  const Model& model;
  ad::ParameterStore* trainable = nullptr;
  std::map<std::string, Value> cache;

  Ctx(ad::Tape& t, const Model& m, ad::ParameterStore* p = nullptr)
      : tape(t), model(m), trainable(p) {}

  Value P(const std::string& name) {
    auto it = cache.find(name);
    if (it != cache.end()) return it->second;
    Value v = trainable ? tape.param(trainable->at(name))
                        : tape.constant(model.params.at(name).value);
    cache.emplace(name, v);
    return v;
  }

  int hidden() const { return model.config.hyper.hidden; }
};

Value zeros(Ctx& ctx, int rows) { return ctx.tape.constant(Mat::Zero(rows, 1)); }

/// One recurrent cell update; returns the new hidden state and replaces
/// (h, c) in place.
Value lstm_cell(Ctx& ctx, const std::string& prefix, Value x, Value& h, Value& c) {
  ad::Tape& t = ctx.tape;
  auto gate = [&](const char* g) {
    return t.add(t.add(t.matmul(ctx.P(prefix + "/W_" + g), x),
                       t.matmul(ctx.P(prefix + "/U_" + g), h)),
                 ctx.P(prefix + "/b_" + g));
  };
  Value i = t.sigmoid(gate("i"));
  Value f = t.sigmoid(gate("f"));
  Value o = t.sigmoid(gate("o"));
  Value g = t.tanh(gate("g"));
  c = t.add(t.cmul(f, c), t.cmul(i, g));
  h = t.cmul(o, t.tanh(c));
  return h;
}

std::vector<Value> encode_question_ctx(Ctx& ctx, const std::vector<std::string>& tokens) {
  if (tokens.empty()) throw std::invalid_argument("encode_question: no tokens");
  ad::Tape& t = ctx.tape;
  const int half = ctx.hidden() / 2;
  Value table = ctx.P("embed/word");

  std::vector<Value> inputs;
  inputs.reserve(tokens.size());
  for (const std::string& token : tokens) inputs.push_back(t.row(table, ctx.model.vocab.id_of(token)));

  for (int layer = 0; layer < ctx.model.config.hyper.rnn_layers; ++layer) {
    std::string fwd = "enc/l" + std::to_string(layer) + "/fwd";
    std::string bwd = "enc/l" + std::to_string(layer) + "/bwd";
    std::vector<Value> fwd_h(tokens.size()), bwd_h(tokens.size());
    Value h = zeros(ctx, half), c = zeros(ctx, half);
    for (size_t i = 0; i < inputs.size(); ++i) fwd_h[i] = lstm_cell(ctx, fwd, inputs[i], h, c);
    h = zeros(ctx, half);
    c = zeros(ctx, half);
    for (size_t i = inputs.size(); i-- > 0;) bwd_h[i] = lstm_cell(ctx, bwd, inputs[i], h, c);
    for (size_t i = 0; i < inputs.size(); ++i) inputs[i] = t.vconcat({fwd_h[i], bwd_h[i]});
  }
  return inputs;
}

struct GraphStates {
  std::vector<Value> vertex_vecs;
  std::vector<Value> edge_vecs;
  Value graph_vec;
};

GraphStates encode_graph_ctx(Ctx& ctx, const AbstractQueryGraph& g) {
  ad::Tape& t = ctx.tape;
  GraphStates out;
  if (g.vertices.empty()) {
    out.graph_vec = ctx.P("gnn/empty_graph");
    return out;
  }

  Value vclass = ctx.P("embed/vertex_class");
  Value eclass = ctx.P("embed/edge_class");
  std::vector<Value> xv(g.vertices.size()), xe(g.edges.size());
  for (const auto& v : g.vertices) {
    Value init = t.row(vclass, static_cast<int>(v.cls));
    if (v.id == g.answer) init = t.add(init, t.row(ctx.P("embed/answer_slot"), 0));
    xv[static_cast<size_t>(v.id)] = init;
  }
  for (const auto& e : g.edges) xe[static_cast<size_t>(e.id)] = t.row(eclass, static_cast<int>(e.cls));

  const auto& hyper = ctx.model.config.hyper;
  if (!ctx.model.config.ablation.graph_encoder) {
    // Ablated: raw label states, no aggregation, no readout.
    out.vertex_vecs = std::move(xv);
    out.edge_vecs = std::move(xe);
    out.graph_vec = ctx.P("gnn/empty_graph");
    return out;
  }

  const int dk = hyper.hidden / hyper.heads;
  const double key_scale = 1.0 / std::sqrt(static_cast<double>(dk));

  for (int layer = 0; layer < hyper.graph_layers; ++layer) {
    std::string prefix = "gnn/l" + std::to_string(layer);
    std::vector<Value> next_v(xv.size());
    for (const auto& v : g.vertices) {
      size_t vi = static_cast<size_t>(v.id);
      // Attention items: the vertex itself plus every neighbor state with
      // its incident edge state folded in.
      std::vector<Value> items{xv[vi]};
      for (int edge_id : g.incident_edges(v.id)) {
        const auto& e = g.edge(edge_id);
        items.push_back(t.add(xv[static_cast<size_t>(e.other(v.id))],
                              xe[static_cast<size_t>(edge_id)]));
      }
      std::vector<Value> heads;
      heads.reserve(static_cast<size_t>(hyper.heads));
      for (int h = 0; h < hyper.heads; ++h) {
        std::string hp = prefix + "/h" + std::to_string(h);
        Value q = t.matmul(ctx.P(hp + "/Wq"), xv[vi]);
        std::vector<Value> scores;
        std::vector<Value> values;
        scores.reserve(items.size());
        values.reserve(items.size());
        for (const Value& item : items) {
          scores.push_back(t.scale(t.dot(q, t.matmul(ctx.P(hp + "/Wk"), item)), key_scale));
          values.push_back(t.matmul(ctx.P(hp + "/Wv"), item));
        }
        Value alpha = t.softmax(t.vconcat(scores));
        Value mixed;
        for (size_t m = 0; m < values.size(); ++m) {
          Value contribution = t.matmul(values[m], t.row(alpha, static_cast<int>(m)));
          mixed = mixed.valid() ? t.add(mixed, contribution) : contribution;
        }
        heads.push_back(mixed);
      }
      Value concat = t.vconcat(heads);
      next_v[vi] = t.tanh(
          t.add(t.add(xv[vi], t.matmul(ctx.P(prefix + "/Wo"), concat)), ctx.P(prefix + "/bo")));
    }
    xv = std::move(next_v);
    for (const auto& e : g.edges) {
      size_t ei = static_cast<size_t>(e.id);
      Value endpoint_sum = t.add(xv[static_cast<size_t>(e.u)], xv[static_cast<size_t>(e.v)]);
      xe[ei] = t.tanh(t.add(t.add(t.matmul(ctx.P(prefix + "/We_endpoint"), endpoint_sum),
                                  t.matmul(ctx.P(prefix + "/We_self"), xe[ei])),
                            ctx.P(prefix + "/be")));
    }
  }

  // Readout: attention-weighted sum of all vertex and edge states.
  const double readout_scale = 1.0 / std::sqrt(static_cast<double>(hyper.hidden));
  Value readout_q = ctx.P("gnn/readout_q");
  std::vector<Value> states = xv;
  states.insert(states.end(), xe.begin(), xe.end());
  std::vector<Value> scores;
  scores.reserve(states.size());
  for (const Value& s : states)
    scores.push_back(t.scale(t.dot(readout_q, s), readout_scale));
  Value alpha = t.softmax(t.vconcat(scores));
  Value pooled;
  for (size_t m = 0; m < states.size(); ++m) {
    Value contribution = t.matmul(states[m], t.row(alpha, static_cast<int>(m)));
    pooled = pooled.valid() ? t.add(pooled, contribution) : contribution;
  }

  out.vertex_vecs = std::move(xv);
  out.edge_vecs = std::move(xe);
  out.graph_vec = pooled;
  return out;
}

struct DecodeInternal {
  Value h_out;
  std::vector<double> attention;
};

DecodeInternal decode_step_ctx(Ctx& ctx, std::vector<std::pair<Value, Value>>& layers,
                               Value graph_vec, const std::vector<Value>& question) {
  ad::Tape& t = ctx.tape;
  const auto& flags = ctx.model.config.ablation;
  size_t l = question.size();

  Value h_q;
  std::vector<double> attention(l, 1.0 / static_cast<double>(l));
  if (flags.attention) {
    Value w = ctx.P("dec/attention_W");
    std::vector<Value> scores;
    scores.reserve(l);
    for (const Value& tok : question) scores.push_back(t.dot(graph_vec, t.matmul(w, tok)));
    Value alpha = t.softmax(t.vconcat(scores));
    for (size_t i = 0; i < l; ++i) attention[i] = alpha.val()(static_cast<Eigen::Index>(i), 0);
    for (size_t i = 0; i < l; ++i) {
      Value contribution = t.matmul(question[i], t.row(alpha, static_cast<int>(i)));
      h_q = h_q.valid() ? t.add(h_q, contribution) : contribution;
    }
  } else {
    for (const Value& tok : question) h_q = h_q.valid() ? t.add(h_q, tok) : tok;
    h_q = t.scale(h_q, 1.0 / static_cast<double>(l));
  }

  Value h_in = flags.skip_connection ? t.add(graph_vec, h_q) : h_q;

  Value x = h_in;
  for (int layer = 0; layer < ctx.model.config.hyper.rnn_layers; ++layer) {
    auto& [h, c] = layers[static_cast<size_t>(layer)];
    x = lstm_cell(ctx, "dec/l" + std::to_string(layer), x, h, c);
  }
  return {x, std::move(attention)};
}

Value label_head(Ctx& ctx, const std::string& table, Value h_out) {
  ad::Tape& t = ctx.tape;
  return t.softmax(t.matmul(ctx.P(table), h_out));
}

struct SelectInternal {
  std::vector<int> vertex_ids;
  Value probs;
};

SelectInternal select_head(Ctx& ctx, Value h_out, const GraphStates& enc,
                           const AbstractQueryGraph& g, std::optional<int> pending) {
  ad::Tape& t = ctx.tape;
  SelectInternal out;
  std::vector<Value> scores;
  for (const auto& v : g.vertices) {
    if (pending && v.id == *pending) continue;
    out.vertex_ids.push_back(v.id);
    scores.push_back(t.dot(h_out, enc.vertex_vecs[static_cast<size_t>(v.id)]));
  }
  if (scores.empty()) throw std::invalid_argument("select: no selectable vertex");
  out.probs = t.softmax(t.vconcat(scores));
  return out;
}

int argmax_row(const Mat& column) {
  int best = 0;
  for (int r = 1; r < column.rows(); ++r)
    if (column(r, 0) > column(best, 0)) best = r;
  return best;
}

/// Drives one question through the step loop shared by loss and generate:
/// encode the graph-so-far, decode, and expose the head distribution that
/// operator_at(t) calls for.
class GeneratorRun {
 public:
  GeneratorRun(Ctx& ctx, const std::vector<std::string>& tokens)
      : ctx_(ctx), question_(encode_question_ctx(ctx, tokens)) {
    layers_.assign(static_cast<size_t>(ctx.model.config.hyper.rnn_layers),
                   {zeros(ctx_, ctx_.hidden()), zeros(ctx_, ctx_.hidden())});
  }

  struct StepProbs {
    OperatorKind kind = OperatorKind::AddVertex;
    Value probs;
    std::vector<int> select_ids;  // SelectVertex only
  };

  StepProbs next_probs() {
    GraphStates enc = encode_graph_ctx(ctx_, state_.graph);
    Value graph_vec;
    if (ctx_.model.config.ablation.graph_encoder) {
      graph_vec = enc.graph_vec;
    } else {
      graph_vec = h_out_prev_.valid() ? h_out_prev_ : zeros(ctx_, ctx_.hidden());
    }
    DecodeInternal decoded = decode_step_ctx(ctx_, layers_, graph_vec, question_);
    h_out_prev_ = decoded.h_out;

    StepProbs out;
    out.kind = operator_at(state_.step);
    switch (out.kind) {
      case OperatorKind::AddVertex:
        out.probs = label_head(ctx_, "head/add_vertex", decoded.h_out);
        break;
      case OperatorKind::SelectVertex: {
        SelectInternal sel =
            select_head(ctx_, decoded.h_out, enc, state_.graph, state_.pending_vertex);
        out.probs = sel.probs;
        out.select_ids = std::move(sel.vertex_ids);
        break;
      }
      case OperatorKind::AddEdge:
        out.probs = label_head(ctx_, "head/add_edge", decoded.h_out);
        break;
    }
    return out;
  }

  void advance(const Action& action) { state_ = apply(state_, action); }

  const GenerationState& state() const { return state_; }

 private:
  Ctx& ctx_;
  std::vector<Value> question_;
  std::vector<std::pair<Value, Value>> layers_;
  Value h_out_prev_;
  GenerationState state_ = GenerationState::initial();
};

int gold_row(const GeneratorRun::StepProbs& sp, const Action& action) {
  switch (sp.kind) {
    case OperatorKind::AddVertex:
      return action.is_end() ? kEndRow : static_cast<int>(*action.vertex_class);
    case OperatorKind::SelectVertex: {
      auto it = std::find(sp.select_ids.begin(), sp.select_ids.end(), action.selected);
      if (it == sp.select_ids.end())
        throw TrainingError("gold selection is not selectable at this step");
      return static_cast<int>(it - sp.select_ids.begin());
    }
    case OperatorKind::AddEdge: return static_cast<int>(action.edge_class);
  }
  return -1;
}

}  // namespace

// ---------------------------------------------------------------------------
// Public wrappers (value-level; the differentiable path runs inside loss)

QuestionEncoding encode_question(ad::Tape& tape, const Model& model,
                                 const std::vector<std::string>& tokens) {
  Ctx ctx{tape, model};
  return {encode_question_ctx(ctx, tokens)};
}

GraphEncoding encode_graph(ad::Tape& tape, const Model& model, const AbstractQueryGraph& g) {
  Ctx ctx{tape, model};
  GraphStates s = encode_graph_ctx(ctx, g);
  return {std::move(s.vertex_vecs), std::move(s.edge_vecs), s.graph_vec};
}

DecoderState initial_decoder_state(ad::Tape& tape, const Model& model) {
  Ctx ctx{tape, model};
  DecoderState s;
  s.layers.assign(static_cast<size_t>(model.config.hyper.rnn_layers),
                  {zeros(ctx, model.config.hyper.hidden), zeros(ctx, model.config.hyper.hidden)});
  return s;
}

DecodeResult decode_step(ad::Tape& tape, const Model& model, const DecoderState& state,
                         ad::Value graph_vec, const QuestionEncoding& question) {
  Ctx ctx{tape, model};
  std::vector<std::pair<Value, Value>> layers = state.layers;
  DecodeInternal r = decode_step_ctx(ctx, layers, graph_vec, question.token_vecs);
  return {r.h_out, DecoderState{std::move(layers)}, std::move(r.attention)};
}

ad::Value predict_add_vertex(ad::Tape& tape, const Model& model, ad::Value h_out) {
  Ctx ctx{tape, model};
  return label_head(ctx, "head/add_vertex", h_out);
}

ad::Value predict_add_edge(ad::Tape& tape, const Model& model, ad::Value h_out) {
  Ctx ctx{tape, model};
  return label_head(ctx, "head/add_edge", h_out);
}

SelectDistribution predict_select_vertex(ad::Tape& tape, const Model& model, ad::Value h_out,
                                         const GraphEncoding& graph_enc,
                                         const AbstractQueryGraph& g,
                                         std::optional<int> pending_vertex) {
  Ctx ctx{tape, model};
  GraphStates states{graph_enc.vertex_vecs, graph_enc.edge_vecs, graph_enc.graph_vec};
  SelectInternal sel = select_head(ctx, h_out, states, g, pending_vertex);
  SelectDistribution out;
  out.vertex_ids = std::move(sel.vertex_ids);
  out.probs = sel.probs;
  out.by_vertex.assign(g.vertices.size(), 0.0);
  for (size_t i = 0; i < out.vertex_ids.size(); ++i)
    out.by_vertex[static_cast<size_t>(out.vertex_ids[i])] =
        sel.probs.val()(static_cast<Eigen::Index>(i), 0);
  return out;
}

// ---------------------------------------------------------------------------
// Loss, generation, training

LossStats loss(Model& model, const TrainExample& example, bool accumulate_gradients) {
  ad::Tape tape(accumulate_gradients);
  Ctx ctx{tape, model, accumulate_gradients ? &model.params : nullptr};
  GeneratorRun run(ctx, example.tokens);

  LossStats stats;
  Value total;
  for (const Action& action : example.gold) {
    GeneratorRun::StepProbs sp = run.next_probs();
    int target = gold_row(sp, action);
    Value nll = tape.scale(tape.log(tape.row(sp.probs, target)), -1.0);
    total = total.valid() ? tape.add(total, nll) : nll;
    if (argmax_row(sp.probs.val()) == target) ++stats.correct_actions;
    ++stats.total_actions;
    run.advance(action);
  }
  stats.loss = total.val()(0, 0);
  if (accumulate_gradients) tape.backward(total);
  return stats;
}

AbstractQueryGraph generate(const Model& model, const std::vector<std::string>& tokens,
                            const LinkingResults& linking, const KnowledgeBase& kb) {
  ad::Tape tape(false);
  // const_cast-free: inference context reads parameters as constants.
  Ctx ctx{tape, model};
  GeneratorRun run(ctx, tokens);
  const bool constrain = model.config.ablation.kb_constraint;

  AbstractQueryGraph accepted;  // last KB-verified graph
  bool have_accepted = false;
  bool reverted = false;

  while (true) {
    OperatorKind kind = operator_at(run.state().step);
    if (kind == OperatorKind::AddVertex && run.state().step > 1 &&
        run.state().graph.vertex_count() >= model.config.max_vertices)
      break;

    GeneratorRun::StepProbs sp = run.next_probs();
    Action action;
    switch (kind) {
      case OperatorKind::AddVertex: {
        if (run.state().step == 1) {
          // The first vertex is the answer slot, which is always a variable.
          action = Action::add_vertex(VertexClass::Var);
        } else {
          int row = argmax_row(sp.probs.val());
          action = row == kEndRow ? Action::end()
                                  : Action::add_vertex(static_cast<VertexClass>(row));
        }
        break;
      }
      case OperatorKind::SelectVertex:
        action = Action::select(sp.select_ids[static_cast<size_t>(argmax_row(sp.probs.val()))]);
        break;
      case OperatorKind::AddEdge:
        action = Action::add_edge(static_cast<EdgeClass>(argmax_row(sp.probs.val())));
        break;
    }

    run.advance(action);
    if (action.is_end()) break;

    if (kind == OperatorKind::AddVertex && run.state().step == 2) {
      accepted = run.state().graph;  // the initial one-vertex graph
      have_accepted = true;
    }
    if (kind == OperatorKind::AddEdge && constrain) {
      if (is_groundable(run.state().graph, linking, kb)) {
        accepted = run.state().graph;
      } else {
        reverted = true;  // drop the triple added by this iteration
        break;
      }
    }
  }

  AbstractQueryGraph result =
      (reverted && have_accepted) ? accepted : run.state().graph;

  if (auto augmented = attach_type(result, linking, kb)) result = *augmented;
  return result;
}

namespace {

struct EvalCounts {
  double action_accuracy = 0.0;
  double sequence_accuracy = 0.0;
};

EvalCounts evaluate_teacher_forced(Model& model, const std::vector<TrainExample>& examples) {
  EvalCounts out;
  if (examples.empty()) return out;
  long long correct = 0, total = 0, perfect = 0;
  for (const TrainExample& ex : examples) {
    LossStats s = loss(model, ex, false);
    correct += s.correct_actions;
    total += s.total_actions;
    if (s.correct_actions == s.total_actions) ++perfect;
  }
  out.action_accuracy = total == 0 ? 0.0 : static_cast<double>(correct) / static_cast<double>(total);
  out.sequence_accuracy = static_cast<double>(perfect) / static_cast<double>(examples.size());
  return out;
}

}  // namespace

TrainResult train(Model& model, const std::vector<TrainExample>& train_set,
                  const std::vector<TrainExample>& dev_set, const TrainOptions& options) {
  if (train_set.empty()) throw TrainingError("train: empty training set");
  const Hyperparams& hyper = model.config.hyper;

  TrainResult result;
  std::map<std::string, Mat> best_params = model.params.snapshot();
  double best_key_seq = -1.0, best_key_act = -1.0;

  std::vector<size_t> order(train_set.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = i;

  for (int epoch = 1; epoch <= hyper.epochs; ++epoch) {
    Rng shuffle_rng(derive_seed(hyper.seed, 0xE90C + static_cast<uint64_t>(epoch)));
    shuffle_rng.shuffle(order);

    double loss_sum = 0.0;
    for (size_t idx : order) {
      const TrainExample& ex = train_set[idx];
      LossStats s = loss(model, ex, true);
      if (!std::isfinite(s.loss))
        throw TrainingError("non-finite loss at epoch " + std::to_string(epoch) + ", example '" +
                            ex.id + "' (loss=" + std::to_string(s.loss) + ")");
      model.params.adam_step(hyper.learning_rate);
      loss_sum += s.loss;
    }

    EvalCounts train_eval = evaluate_teacher_forced(model, train_set);
    EvalCounts dev_eval = evaluate_teacher_forced(model, dev_set);

    EpochStats stats;
    stats.epoch = epoch;
    stats.mean_loss = loss_sum / static_cast<double>(train_set.size());
    stats.action_accuracy = train_eval.action_accuracy;
    stats.sequence_accuracy = train_eval.sequence_accuracy;
    stats.dev_action_accuracy = dev_eval.action_accuracy;
    stats.dev_sequence_accuracy = dev_eval.sequence_accuracy;
    result.history.push_back(stats);
    if (options.on_epoch) options.on_epoch(stats);

    double key_seq = dev_set.empty() ? stats.sequence_accuracy : stats.dev_sequence_accuracy;
    double key_act = dev_set.empty() ? stats.action_accuracy : stats.dev_action_accuracy;
    if (key_seq > best_key_seq || (key_seq == best_key_seq && key_act > best_key_act)) {
      best_key_seq = key_seq;
      best_key_act = key_act;
      best_params = model.params.snapshot();
      result.best_epoch = epoch;
    }

    if (options.stop_at_perfect_train && stats.action_accuracy == 1.0 &&
        stats.sequence_accuracy == 1.0)
      break;
  }

  model.params.restore(best_params);
  return result;
}

GradCheckReport grad_check(Model& model, const TrainExample& example, int coords, double step,
                           uint64_t seed) {
  model.params.zero_grads();
  loss(model, example, true);
  std::map<std::string, Mat> analytic;
  for (const auto& p : model.params.all()) analytic[p->name] = p->grad;
  model.params.zero_grads();

  GradCheckReport report;
  uint64_t array_tag = 0;
  for (const auto& p : model.params.all()) {
    Rng rng(derive_seed(seed, array_tag++));
    double worst = 0.0;
    for (int k = 0; k < coords; ++k) {
      int r = rng.below(p->rows());
      int c = rng.below(p->cols());
      double original = p->value(r, c);
      p->value(r, c) = original + step;
      double plus = loss(model, example, false).loss;
      p->value(r, c) = original - step;
      double minus = loss(model, example, false).loss;
      p->value(r, c) = original;
      double numeric = (plus - minus) / (2.0 * step);
      double exact = analytic[p->name](r, c);
      double denom = std::max({std::abs(numeric), std::abs(exact), 1e-8});
      worst = std::max(worst, std::abs(numeric - exact) / denom);
    }
    report.per_array.emplace_back(p->name, worst);
    report.max_rel_error = std::max(report.max_rel_error, worst);
  }
  return report;
}

}  // namespace aqgen
