#include "aqgen/graph.hpp"

#include <algorithm>
#include <charconv>
#include <cstdlib>
#include <stdexcept>

namespace aqgen {

std::string_view to_string(VertexClass c) {
  switch (c) {
    case VertexClass::Ent: return "Ent";
    case VertexClass::Type: return "Type";
    case VertexClass::Num: return "Num";
    case VertexClass::Var: return "Var";
  }
  return "?";
}

std::string_view to_string(EdgeClass c) {
  switch (c) {
    case EdgeClass::Rel: return "Rel";
    case EdgeClass::Ord: return "Ord";
    case EdgeClass::Cmp: return "Cmp";
    case EdgeClass::Cnt: return "Cnt";
    case EdgeClass::Isa: return "Isa";
  }
  return "?";
}

std::optional<VertexClass> parse_vertex_class(std::string_view s) {
  if (s == "Ent") return VertexClass::Ent;
  if (s == "Type") return VertexClass::Type;
  if (s == "Num") return VertexClass::Num;
  if (s == "Var") return VertexClass::Var;
  return std::nullopt;
}

std::optional<EdgeClass> parse_edge_class(std::string_view s) {
  if (s == "Rel") return EdgeClass::Rel;
  if (s == "Ord") return EdgeClass::Ord;
  if (s == "Cmp") return EdgeClass::Cmp;
  if (s == "Cnt") return EdgeClass::Cnt;
  if (s == "Isa") return EdgeClass::Isa;
  return std::nullopt;
}

std::string_view to_string(EdgeDir d) {
  switch (d) {
    case EdgeDir::UToV: return "uv";
    case EdgeDir::VToU: return "vu";
    case EdgeDir::None: return "none";
  }
  return "?";
}

std::optional<EdgeDir> parse_edge_dir(std::string_view s) {
  if (s == "uv") return EdgeDir::UToV;
  if (s == "vu") return EdgeDir::VToU;
  if (s == "none") return EdgeDir::None;
  return std::nullopt;
}

std::string_view to_string(TreeViolation v) {
  switch (v) {
    case TreeViolation::Disconnected: return "disconnected";
    case TreeViolation::Cycle: return "cycle";
    case TreeViolation::DanglingEndpoint: return "dangling-endpoint";
  }
  return "?";
}

TreeCheck TreeCheck::fail(TreeViolation v, std::string detail) {
  TreeCheck c;
  c.ok = false;
  c.violation = v;
  c.detail = std::move(detail);
  return c;
}

int QueryGraph::add_vertex(VertexClass cls, std::optional<std::string> instance) {
  int id = static_cast<int>(vertices.size());
  vertices.push_back(Vertex{id, cls, std::move(instance)});
  return id;
}

int QueryGraph::add_edge(EdgeClass cls, std::optional<std::string> instance, int u, int v,
                         EdgeDir dir) {
  int id = static_cast<int>(edges.size());
  edges.push_back(Edge{id, cls, std::move(instance), u, v, dir});
  return id;
}

std::vector<int> QueryGraph::incident_edges(int vertex_id) const {
  std::vector<int> out;
  for (const Edge& e : edges)
    if (e.touches(vertex_id)) out.push_back(e.id);
  return out;
}

int AbstractQueryGraph::add_vertex(VertexClass cls) {
  int id = static_cast<int>(vertices.size());
  vertices.push_back(V{id, cls});
  return id;
}

int AbstractQueryGraph::add_edge(EdgeClass cls, int u, int v) {
  int id = static_cast<int>(edges.size());
  edges.push_back(E{id, cls, u, v});
  return id;
}

std::vector<int> AbstractQueryGraph::incident_edges(int vertex_id) const {
  std::vector<int> out;
  for (const E& e : edges)
    if (e.touches(vertex_id)) out.push_back(e.id);
  return out;
}

TreeCheck validate_tree(int vertex_count, const std::vector<std::pair<int, int>>& endpoints) {
  for (size_t i = 0; i < endpoints.size(); ++i) {
    auto [u, v] = endpoints[i];
    if (u < 0 || u >= vertex_count || v < 0 || v >= vertex_count)
      return TreeCheck::fail(TreeViolation::DanglingEndpoint,
                             "edge " + std::to_string(i) + " references a missing vertex");
    if (u == v)
      return TreeCheck::fail(TreeViolation::Cycle, "self-loop at vertex " + std::to_string(u));
  }
  if (vertex_count == 0)
    return TreeCheck::fail(TreeViolation::Disconnected, "graph has no vertices");
  int n = vertex_count;
  int m = static_cast<int>(endpoints.size());
  if (m > n - 1) return TreeCheck::fail(TreeViolation::Cycle, "|E| exceeds |V|-1");
  if (m < n - 1) return TreeCheck::fail(TreeViolation::Disconnected, "|E| below |V|-1");

  std::vector<std::vector<int>> adj(static_cast<size_t>(n));
  for (auto [u, v] : endpoints) {
    adj[static_cast<size_t>(u)].push_back(v);
    adj[static_cast<size_t>(v)].push_back(u);
  }
  std::vector<char> seen(static_cast<size_t>(n), 0);
  std::vector<int> stack{0};
  seen[0] = 1;
  int reached = 1;
  while (!stack.empty()) {
    int u = stack.back();
    stack.pop_back();
    for (int w : adj[static_cast<size_t>(u)]) {
      if (!seen[static_cast<size_t>(w)]) {
        seen[static_cast<size_t>(w)] = 1;
        ++reached;
        stack.push_back(w);
      }
    }
  }
  if (reached != n) return TreeCheck::fail(TreeViolation::Disconnected, "graph is not connected");
  return TreeCheck::pass();
}

namespace {

template <typename G>
std::vector<std::pair<int, int>> endpoint_pairs(const G& g) {
  std::vector<std::pair<int, int>> out;
  out.reserve(g.edges.size());
  for (const auto& e : g.edges) out.emplace_back(e.u, e.v);
  return out;
}

bool parses_as_number(const std::string& s) {
  if (s.empty()) return false;
  const char* begin = s.c_str();
  char* end = nullptr;
  std::strtod(begin, &end);
  return end == begin + s.size();
}

}  // namespace

TreeCheck validate_tree(const QueryGraph& g) {
  return validate_tree(static_cast<int>(g.vertices.size()), endpoint_pairs(g));
}

TreeCheck validate_tree(const AbstractQueryGraph& g) {
  return validate_tree(static_cast<int>(g.vertices.size()), endpoint_pairs(g));
}

TreeCheck validate_query_graph(const QueryGraph& g) {
  TreeCheck base = validate_tree(g);
  if (!base.ok) return base;
  for (size_t i = 0; i < g.vertices.size(); ++i) {
    const Vertex& v = g.vertices[i];
    if (v.id != static_cast<int>(i))
      return TreeCheck::fail(TreeViolation::DanglingEndpoint, "vertex ids are not dense");
    if (v.cls == VertexClass::Var && (!v.instance || v.instance->empty() || (*v.instance)[0] != '?'))
      return TreeCheck::fail(TreeViolation::DanglingEndpoint,
                             "Var vertex " + std::to_string(v.id) + " lacks a variable name");
    if (v.cls == VertexClass::Num && (!v.instance || !parses_as_number(*v.instance)))
      return TreeCheck::fail(TreeViolation::DanglingEndpoint,
                             "Num vertex " + std::to_string(v.id) + " is not numeric");
  }
  if (g.answer < 0 || g.answer >= static_cast<int>(g.vertices.size()) ||
      g.vertex(g.answer).cls != VertexClass::Var)
    return TreeCheck::fail(TreeViolation::DanglingEndpoint, "answer is not a Var vertex");
  return TreeCheck::pass();
}

AbstractQueryGraph abstract_of(const QueryGraph& g) {
  AbstractQueryGraph a;
  a.vertices.reserve(g.vertices.size());
  a.edges.reserve(g.edges.size());
  for (const Vertex& v : g.vertices) a.vertices.push_back({v.id, v.cls});
  for (const Edge& e : g.edges) a.edges.push_back({e.id, e.cls, e.u, e.v});
  a.answer = g.answer;
  return a;
}

namespace {

char vertex_tag(VertexClass c) {
  switch (c) {
    case VertexClass::Ent: return 'E';
    case VertexClass::Type: return 'T';
    case VertexClass::Num: return 'N';
    case VertexClass::Var: return 'V';
  }
  return '?';
}

char edge_tag(EdgeClass c) {
  switch (c) {
    case EdgeClass::Rel: return 'r';
    case EdgeClass::Ord: return 'o';
    case EdgeClass::Cmp: return 'c';
    case EdgeClass::Cnt: return 'n';
    case EdgeClass::Isa: return 'i';
  }
  return '?';
}

std::string subtree_code(const AbstractQueryGraph& g,
                         const std::vector<std::vector<std::pair<int, int>>>& adj, int vertex,
                         int from_edge) {
  std::vector<std::string> parts;
  for (auto [edge_id, next] : adj[static_cast<size_t>(vertex)]) {
    if (edge_id == from_edge) continue;
    std::string part;
    part += edge_tag(g.edge(edge_id).cls);
    part += subtree_code(g, adj, next, edge_id);
    parts.push_back(std::move(part));
  }
  std::sort(parts.begin(), parts.end());
  std::string code;
  code += '(';
  code += vertex_tag(g.vertex(vertex).cls);
  for (const std::string& p : parts) code += p;
  code += ')';
  return code;
}

}  // namespace

CanonicalCode canonical_code(const AbstractQueryGraph& g) {
  if (TreeCheck c = validate_tree(g); !c.ok)
    throw std::invalid_argument("canonical_code: not a tree (" + c.detail + ")");
  std::vector<std::vector<std::pair<int, int>>> adj(g.vertices.size());
  for (const auto& e : g.edges) {
    adj[static_cast<size_t>(e.u)].emplace_back(e.id, e.v);
    adj[static_cast<size_t>(e.v)].emplace_back(e.id, e.u);
  }
  return CanonicalCode{subtree_code(g, adj, g.answer, -1)};
}

bool is_isomorphic(const AbstractQueryGraph& a, const AbstractQueryGraph& b) {
  if (a.vertices.size() != b.vertices.size() || a.edges.size() != b.edges.size()) return false;
  return canonical_code(a) == canonical_code(b);
}

nlohmann::json QueryGraph::to_json() const {
  nlohmann::json j;
  j["vertices"] = nlohmann::json::array();
  for (const Vertex& v : vertices) {
    nlohmann::json jv{{"id", v.id}, {"class", to_string(v.cls)}};
    if (v.instance) jv["instance"] = *v.instance;
    j["vertices"].push_back(std::move(jv));
  }
  j["edges"] = nlohmann::json::array();
  for (const Edge& e : edges) {
    nlohmann::json je{{"id", e.id}, {"class", to_string(e.cls)}, {"u", e.u}, {"v", e.v},
                      {"dir", to_string(e.dir)}};
    if (e.instance) je["instance"] = *e.instance;
    j["edges"].push_back(std::move(je));
  }
  j["answer"] = answer;
  return j;
}

namespace {

[[noreturn]] void bad_graph_json(const std::string& what) {
  throw std::invalid_argument("query graph JSON: " + what);
}

}  // namespace

QueryGraph QueryGraph::from_json(const nlohmann::json& j) {
  QueryGraph g;
  if (!j.contains("vertices") || !j.contains("edges") || !j.contains("answer"))
    bad_graph_json("missing vertices/edges/answer");
  for (const auto& jv : j.at("vertices")) {
    Vertex v;
    v.id = jv.at("id").get<int>();
    auto cls = parse_vertex_class(jv.at("class").get<std::string>());
    if (!cls) bad_graph_json("unknown vertex class");
    v.cls = *cls;
    if (jv.contains("instance")) {
      const auto& inst = jv.at("instance");
      v.instance = inst.is_string() ? inst.get<std::string>() : inst.dump();
    }
    if (v.id != static_cast<int>(g.vertices.size())) bad_graph_json("vertex ids must be dense");
    g.vertices.push_back(std::move(v));
  }
  for (const auto& je : j.at("edges")) {
    Edge e;
    e.id = je.at("id").get<int>();
    auto cls = parse_edge_class(je.at("class").get<std::string>());
    if (!cls) bad_graph_json("unknown edge class");
    e.cls = *cls;
    e.u = je.at("u").get<int>();
    e.v = je.at("v").get<int>();
    if (je.contains("dir")) {
      auto dir = parse_edge_dir(je.at("dir").get<std::string>());
      if (!dir) bad_graph_json("unknown edge dir");
      e.dir = *dir;
    }
    if (je.contains("instance")) {
      const auto& inst = je.at("instance");
      e.instance = inst.is_string() ? inst.get<std::string>() : inst.dump();
    }
    if (e.id != static_cast<int>(g.edges.size())) bad_graph_json("edge ids must be dense");
    g.edges.push_back(std::move(e));
  }
  g.answer = j.at("answer").get<int>();
  return g;
}

nlohmann::json AbstractQueryGraph::to_json() const {
  nlohmann::json j;
  j["vertices"] = nlohmann::json::array();
  for (const V& v : vertices)
    j["vertices"].push_back({{"id", v.id}, {"class", to_string(v.cls)}});
  j["edges"] = nlohmann::json::array();
  for (const E& e : edges)
    j["edges"].push_back({{"id", e.id}, {"class", to_string(e.cls)}, {"u", e.u}, {"v", e.v}});
  j["answer"] = answer;
  return j;
}

AbstractQueryGraph AbstractQueryGraph::from_json(const nlohmann::json& j) {
  AbstractQueryGraph g;
  if (!j.contains("vertices") || !j.contains("edges") || !j.contains("answer"))
    bad_graph_json("missing vertices/edges/answer");
  for (const auto& jv : j.at("vertices")) {
    auto cls = parse_vertex_class(jv.at("class").get<std::string>());
    if (!cls) bad_graph_json("unknown vertex class");
    int id = jv.at("id").get<int>();
    if (id != static_cast<int>(g.vertices.size())) bad_graph_json("vertex ids must be dense");
    g.vertices.push_back({id, *cls});
  }
  for (const auto& je : j.at("edges")) {
    auto cls = parse_edge_class(je.at("class").get<std::string>());
    if (!cls) bad_graph_json("unknown edge class");
    int id = je.at("id").get<int>();
    if (id != static_cast<int>(g.edges.size())) bad_graph_json("edge ids must be dense");
    g.edges.push_back({id, *cls, je.at("u").get<int>(), je.at("v").get<int>()});
  }
  g.answer = j.at("answer").get<int>();
  return g;
}

}  // namespace aqgen
