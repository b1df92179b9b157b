#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

#include "aqgen/nn.hpp"
#include "aqgen/rng.hpp"
#include "aqgen/text.hpp"

namespace aqgen {

void Hyperparams::validate() const {
  if (hidden <= 0 || hidden % 2 != 0)
    throw std::invalid_argument("hyperparams: hidden must be positive and even");
  if (heads <= 0 || hidden % heads != 0)
    throw std::invalid_argument("hyperparams: heads must divide hidden");
  if (embed <= 0 || graph_layers < 0 || rnn_layers <= 0)
    throw std::invalid_argument("hyperparams: bad dimensions");
}

nlohmann::json Hyperparams::to_json() const {
  return {{"hidden", hidden},       {"embed", embed},
          {"graph_layers", graph_layers}, {"rnn_layers", rnn_layers},
          {"heads", heads},         {"learning_rate", learning_rate},
          {"epochs", epochs},       {"seed", seed}};
}

Hyperparams Hyperparams::from_json(const nlohmann::json& j) {
  Hyperparams h;
  if (j.contains("hidden")) h.hidden = j.at("hidden").get<int>();
  if (j.contains("embed")) h.embed = j.at("embed").get<int>();
  if (j.contains("graph_layers")) h.graph_layers = j.at("graph_layers").get<int>();
  if (j.contains("rnn_layers")) h.rnn_layers = j.at("rnn_layers").get<int>();
  if (j.contains("heads")) h.heads = j.at("heads").get<int>();
  if (j.contains("learning_rate")) h.learning_rate = j.at("learning_rate").get<double>();
  if (j.contains("epochs")) h.epochs = j.at("epochs").get<int>();
  if (j.contains("seed")) h.seed = j.at("seed").get<uint64_t>();
  h.validate();
  return h;
}

nlohmann::json AblationFlags::to_json() const {
  return {{"attention", attention},
          {"skip_connection", skip_connection},
          {"graph_encoder", graph_encoder},
          {"kb_constraint", kb_constraint}};
}

AblationFlags AblationFlags::from_json(const nlohmann::json& j) {
  AblationFlags f;
  if (j.contains("attention")) f.attention = j.at("attention").get<bool>();
  if (j.contains("skip_connection")) f.skip_connection = j.at("skip_connection").get<bool>();
  if (j.contains("graph_encoder")) f.graph_encoder = j.at("graph_encoder").get<bool>();
  if (j.contains("kb_constraint")) f.kb_constraint = j.at("kb_constraint").get<bool>();
  return f;
}

nlohmann::json ModelConfig::to_json() const {
  nlohmann::json j = hyper.to_json();
  j["ablation"] = ablation.to_json();
  j["traversal"] = to_string(traversal.kind);
  j["traversal_seed"] = traversal.seed;
  j["max_vertices"] = max_vertices;
  return j;
}

ModelConfig ModelConfig::from_json(const nlohmann::json& j) {
  ModelConfig c;
  c.hyper = Hyperparams::from_json(j);
  if (j.contains("ablation")) c.ablation = AblationFlags::from_json(j.at("ablation"));
  if (j.contains("traversal")) {
    auto kind = parse_traversal(j.at("traversal").get<std::string>());
    if (!kind) throw std::invalid_argument("config: unknown traversal");
    c.traversal.kind = *kind;
  }
  if (j.contains("traversal_seed")) c.traversal.seed = j.at("traversal_seed").get<uint64_t>();
  if (j.contains("max_vertices")) c.max_vertices = j.at("max_vertices").get<int>();
  return c;
}

Vocabulary::Vocabulary() {
  for (std::string_view s : {kPad, kUnknown, kEntityMention, kNumberMention}) {
    ids_.emplace(std::string(s), static_cast<int>(tokens_.size()));
    tokens_.emplace_back(s);
  }
}

Vocabulary Vocabulary::build(const std::vector<std::vector<std::string>>& corpus) {
  Vocabulary v;
  std::set<std::string> unique;
  for (const auto& tokens : corpus)
    for (const auto& t : tokens) unique.insert(t);
  for (const std::string& t : unique) {
    if (v.ids_.count(t)) continue;
    v.ids_.emplace(t, static_cast<int>(v.tokens_.size()));
    v.tokens_.push_back(t);
  }
  return v;
}

int Vocabulary::id_of(std::string_view token) const {
  auto it = ids_.find(token);
  if (it != ids_.end()) return it->second;
  return ids_.find(kUnknown)->second;
}

nlohmann::json Vocabulary::to_json() const { return tokens_; }

Vocabulary Vocabulary::from_json(const nlohmann::json& j) {
  Vocabulary v;
  v.tokens_.clear();
  v.ids_.clear();
  for (const auto& t : j) {
    std::string token = t.get<std::string>();
    v.ids_.emplace(token, static_cast<int>(v.tokens_.size()));
    v.tokens_.push_back(std::move(token));
  }
  for (std::string_view s : {kPad, kUnknown, kEntityMention, kNumberMention})
    if (!v.ids_.count(std::string(s)))
      throw std::invalid_argument("vocabulary JSON misses reserved tokens");
  return v;
}

namespace {

void init_uniform(ad::Parameter& p, Rng& rng, double bound) {
  for (int r = 0; r < p.rows(); ++r)
    for (int c = 0; c < p.cols(); ++c) p.value(r, c) = rng.uniform(-bound, bound);
}

/// Weight matrices: uniform in +/- 1/sqrt(fan-in). Embedding-like vectors:
/// uniform in +/- 0.1. Biases stay zero.
void init_matrix(ad::Parameter& p, Rng& rng) {
  init_uniform(p, rng, 1.0 / std::sqrt(static_cast<double>(p.cols())));
}

void init_embedding(ad::Parameter& p, Rng& rng) { init_uniform(p, rng, 0.1); }

void create_lstm(ad::ParameterStore& params, Rng& rng, const std::string& prefix, int input,
                 int hidden) {
  for (const char* gate : {"i", "f", "o", "g"}) {
    init_matrix(params.create(prefix + "/W_" + gate, hidden, input), rng);
    init_matrix(params.create(prefix + "/U_" + gate, hidden, hidden), rng);
    params.create(prefix + "/b_" + gate, hidden, 1);
  }
}

}  // namespace

Model Model::init(ModelConfig config, Vocabulary vocab) {
  config.hyper.validate();
  Model m;
  m.config = config;
  m.vocab = std::move(vocab);

  const int d = config.hyper.hidden;
  const int e = config.hyper.embed;
  const int heads = config.hyper.heads;
  const int dk = d / heads;
  Rng rng(derive_seed(config.hyper.seed, 0xA11D));

  init_embedding(m.params.create("embed/word", m.vocab.size(), e), rng);
  init_embedding(m.params.create("embed/vertex_class", kVertexClassCount, d), rng);
  init_embedding(m.params.create("embed/edge_class", kEdgeClassCount, d), rng);
  init_embedding(m.params.create("embed/answer_slot", 1, d), rng);

  for (int layer = 0; layer < config.hyper.rnn_layers; ++layer) {
    int input = layer == 0 ? e : d;
    for (const char* dir : {"fwd", "bwd"})
      create_lstm(m.params, rng, "enc/l" + std::to_string(layer) + "/" + dir, input, d / 2);
  }

  for (int layer = 0; layer < config.hyper.graph_layers; ++layer) {
    std::string prefix = "gnn/l" + std::to_string(layer);
    for (int h = 0; h < heads; ++h) {
      std::string hp = prefix + "/h" + std::to_string(h);
      init_matrix(m.params.create(hp + "/Wq", dk, d), rng);
      init_matrix(m.params.create(hp + "/Wk", dk, d), rng);
      init_matrix(m.params.create(hp + "/Wv", dk, d), rng);
    }
    init_matrix(m.params.create(prefix + "/Wo", d, d), rng);
    m.params.create(prefix + "/bo", d, 1);
    init_matrix(m.params.create(prefix + "/We_endpoint", d, d), rng);
    init_matrix(m.params.create(prefix + "/We_self", d, d), rng);
    m.params.create(prefix + "/be", d, 1);
  }
  init_embedding(m.params.create("gnn/empty_graph", d, 1), rng);
  init_embedding(m.params.create("gnn/readout_q", d, 1), rng);

  for (int layer = 0; layer < config.hyper.rnn_layers; ++layer)
    create_lstm(m.params, rng, "dec/l" + std::to_string(layer), d, d);
  init_matrix(m.params.create("dec/attention_W", d, d), rng);

  init_embedding(m.params.create("head/add_vertex", kVertexClassCount + 1, d), rng);
  init_embedding(m.params.create("head/add_edge", kEdgeClassCount, d), rng);

  return m;
}

nlohmann::json Model::to_json() const {
  nlohmann::json j;
  j["format_version"] = 1;
  j["config"] = config.to_json();
  j["vocab"] = vocab.to_json();
  j["params"] = params.to_json();
  return j;
}

Model Model::from_json(const nlohmann::json& j) {
  if (!j.contains("format_version") || j.at("format_version").get<int>() != 1)
    throw std::invalid_argument("checkpoint: unsupported format version");
  ModelConfig config = ModelConfig::from_json(j.at("config"));
  Vocabulary vocab = Vocabulary::from_json(j.at("vocab"));
  Model m = Model::init(config, std::move(vocab));
  m.params.load_json(j.at("params"));
  return m;
}

void Model::save(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << to_json().dump() << '\n';
}

Model Model::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  nlohmann::json j;
  in >> j;
  return from_json(j);
}

int Model::load_pretrained_embeddings(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  ad::Parameter& table = params.at("embed/word");
  int replaced = 0;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::istringstream ss(line);
    std::string token;
    ss >> token;
    std::vector<double> values;
    double x = 0.0;
    while (ss >> x) values.push_back(x);
    if (static_cast<int>(values.size()) != config.hyper.embed)
      throw ParseError("embedding width " + std::to_string(values.size()) + " != " +
                           std::to_string(config.hyper.embed),
                       line_no);
    int id = vocab.id_of(token);
    if (vocab.token(id) != token) continue;  // unknown token, skip
    for (int c = 0; c < config.hyper.embed; ++c) table.value(id, c) = values[static_cast<size_t>(c)];
    ++replaced;
  }
  return replaced;
}

std::vector<std::string> preprocess(std::string_view question,
                                    const std::vector<Mention>& mentions) {
  std::vector<std::string> tokens = split_tokens(question);
  std::vector<Mention> sorted = mentions;
  std::sort(sorted.begin(), sorted.end(),
            [](const Mention& a, const Mention& b) { return a.begin < b.begin; });
  int last_end = -1;
  for (const Mention& m : sorted) {
    if (m.begin < 0 || m.end > static_cast<int>(tokens.size()) || m.begin >= m.end)
      throw PreprocessError("mention span out of range");
    if (m.begin < last_end) throw PreprocessError("overlapping mention spans");
    last_end = m.end;
  }
  std::vector<std::string> out;
  size_t i = 0;
  size_t next = 0;
  while (i < tokens.size()) {
    if (next < sorted.size() && static_cast<int>(i) == sorted[next].begin) {
      out.emplace_back(sorted[next].kind == MentionKind::Entity ? Vocabulary::kEntityMention
                                                                : Vocabulary::kNumberMention);
      i = static_cast<size_t>(sorted[next].end);
      ++next;
    } else {
      out.push_back(tokens[i]);
      ++i;
    }
  }
  return out;
}

}  // namespace aqgen
