#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <json.hpp>

namespace aqgen {

/// Vertex classes of a query graph. `Var` vertices are the query variables;
/// the answer variable is conventionally named "?v0".
enum class VertexClass { Ent, Type, Num, Var };

/// Edge classes. `Rel` is a KB relation; the others are built-in properties
/// (ordinal, comparison, count, and type membership).
enum class EdgeClass { Rel, Ord, Cmp, Cnt, Isa };

inline constexpr int kVertexClassCount = 4;
inline constexpr int kEdgeClassCount = 5;

std::string_view to_string(VertexClass c);
std::string_view to_string(EdgeClass c);
std::optional<VertexClass> parse_vertex_class(std::string_view s);
std::optional<EdgeClass> parse_edge_class(std::string_view s);

/// Orientation of an edge relative to its stored endpoints (u, v).
/// Rel edges in a query graph are directed. Built-in edges stay `None`;
/// they are stored in a canonical orientation instead: the Type vertex is
/// the second endpoint of an Isa edge, and the Num vertex (or the count
/// target) is the second endpoint of a Cmp/Ord/Cnt edge.
enum class EdgeDir { UToV, VToU, None };

std::string_view to_string(EdgeDir d);
std::optional<EdgeDir> parse_edge_dir(std::string_view s);

struct Vertex {
  int id = 0;
  VertexClass cls = VertexClass::Var;
  /// Entity IRI, type IRI, numeric literal, or variable name. Absent while
  /// the vertex is still abstract.
  std::optional<std::string> instance;
};

struct Edge {
  int id = 0;
  EdgeClass cls = EdgeClass::Rel;
  /// Relation IRI, {min_at_n,max_at_n}, {<,>,=}, "count", or "rdf:type".
  std::optional<std::string> instance;
  int u = 0;
  int v = 0;
  EdgeDir dir = EdgeDir::None;

  bool touches(int vertex_id) const { return u == vertex_id || v == vertex_id; }
  int other(int vertex_id) const { return u == vertex_id ? v : u; }
  /// Subject/object endpoint for a directed edge; u/v order for undirected.
  int subject() const { return dir == EdgeDir::VToU ? v : u; }
  int object() const { return dir == EdgeDir::VToU ? u : v; }
};

/// A formal query: a labeled tree of instantiated vertices and edges.
/// The answer variable ?v0 is identified by `answer`.
struct QueryGraph {
  std::vector<Vertex> vertices;
  std::vector<Edge> edges;
  int answer = 0;

  int add_vertex(VertexClass cls, std::optional<std::string> instance = std::nullopt);
  int add_edge(EdgeClass cls, std::optional<std::string> instance, int u, int v,
               EdgeDir dir = EdgeDir::None);

  const Vertex& vertex(int id) const { return vertices.at(static_cast<size_t>(id)); }
  const Edge& edge(int id) const { return edges.at(static_cast<size_t>(id)); }
  Vertex& vertex(int id) { return vertices.at(static_cast<size_t>(id)); }
  Edge& edge(int id) { return edges.at(static_cast<size_t>(id)); }

  /// Edge ids incident to a vertex, in ascending edge-id order.
  std::vector<int> incident_edges(int vertex_id) const;

  nlohmann::json to_json() const;
  static QueryGraph from_json(const nlohmann::json& j);
};

/// The structure of a query graph: same topology, class labels only,
/// undirected edges. `answer` designates the ?v0 slot.
struct AbstractQueryGraph {
  struct V {
    int id = 0;
    VertexClass cls = VertexClass::Var;
  };
  struct E {
    int id = 0;
    EdgeClass cls = EdgeClass::Rel;
    int u = 0;
    int v = 0;

    bool touches(int vertex_id) const { return u == vertex_id || v == vertex_id; }
    int other(int vertex_id) const { return u == vertex_id ? v : u; }
  };

  std::vector<V> vertices;
  std::vector<E> edges;
  int answer = 0;

  int add_vertex(VertexClass cls);
  int add_edge(EdgeClass cls, int u, int v);

  const V& vertex(int id) const { return vertices.at(static_cast<size_t>(id)); }
  const E& edge(int id) const { return edges.at(static_cast<size_t>(id)); }

  std::vector<int> incident_edges(int vertex_id) const;
  int vertex_count() const { return static_cast<int>(vertices.size()); }
  int edge_count() const { return static_cast<int>(edges.size()); }

  nlohmann::json to_json() const;
  static AbstractQueryGraph from_json(const nlohmann::json& j);
};

enum class TreeViolation { Disconnected, Cycle, DanglingEndpoint };

std::string_view to_string(TreeViolation v);

struct TreeCheck {
  bool ok = true;
  TreeViolation violation = TreeViolation::Disconnected;
  std::string detail;

  static TreeCheck pass() { return TreeCheck{}; }
  static TreeCheck fail(TreeViolation v, std::string detail);
  explicit operator bool() const { return ok; }
};

/// Checks that the undirected graph (vertex ids 0..n-1, endpoint pairs) is a
/// tree: connected with exactly n-1 edges.
TreeCheck validate_tree(int vertex_count, const std::vector<std::pair<int, int>>& endpoints);
TreeCheck validate_tree(const QueryGraph& g);
TreeCheck validate_tree(const AbstractQueryGraph& g);

/// Tree check plus query-graph specifics: ids dense, answer in range and a
/// Var vertex, Var instances named, Num instances numeric.
TreeCheck validate_query_graph(const QueryGraph& g);

/// Drops instances and Rel directions, keeping topology, ids and answer.
AbstractQueryGraph abstract_of(const QueryGraph& g);

/// Identifies an AQG up to label-preserving, answer-preserving isomorphism.
struct CanonicalCode {
  std::string bytes;

  friend bool operator==(const CanonicalCode&, const CanonicalCode&) = default;
  friend auto operator<=>(const CanonicalCode&, const CanonicalCode&) = default;
};

/// Answer-rooted recursive subtree encoding; children ordered by their own
/// codes, so the result is invariant under vertex/edge reordering.
CanonicalCode canonical_code(const AbstractQueryGraph& g);

bool is_isomorphic(const AbstractQueryGraph& a, const AbstractQueryGraph& b);

}  // namespace aqgen
