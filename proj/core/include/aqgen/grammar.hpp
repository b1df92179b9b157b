#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "aqgen/graph.hpp"

namespace aqgen {

/// The three graph-level operators. Which one runs at step t is fixed by the
/// schedule (`operator_at`); only the operator's last argument is free.
enum class OperatorKind { AddVertex, SelectVertex, AddEdge };

std::string_view to_string(OperatorKind k);

/// Step t=1 adds the first vertex; afterwards the operators cycle
/// AddVertex, SelectVertex, AddEdge. Steps are 1-based.
OperatorKind operator_at(int step);

class GrammarError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// One argument of the generation process: a vertex class (or the special
/// End label), a selected vertex id, or an edge class.
struct Action {
  OperatorKind kind = OperatorKind::AddVertex;
  std::optional<VertexClass> vertex_class;  // AddVertex, absent means End
  int selected = -1;                        // SelectVertex
  EdgeClass edge_class = EdgeClass::Rel;    // AddEdge

  static Action add_vertex(VertexClass c);
  static Action end();
  static Action select(int vertex_id);
  static Action add_edge(EdgeClass c);

  bool is_end() const { return kind == OperatorKind::AddVertex && !vertex_class; }
  friend bool operator==(const Action&, const Action&) = default;

  std::string to_display() const;
};

/// The argument sequence that drives (or records) one AQG generation.
/// For a tree of n vertices a complete sequence has length 3n-1.
using ActionSequence = std::vector<Action>;

nlohmann::json actions_to_json(const ActionSequence& actions);
ActionSequence actions_from_json(const nlohmann::json& j);

/// Generation state: the AQG built so far plus the fresh vertex awaiting
/// connection and the selected attachment point of the current iteration.
struct GenerationState {
  AbstractQueryGraph graph;
  std::optional<int> pending_vertex;
  std::optional<int> pending_selection;
  int step = 1;
  bool finished = false;

  static GenerationState initial();
};

/// Applies one action. Throws GrammarError when the action kind does not
/// match operator_at(state.step), when a selection targets the pending or a
/// missing vertex, or when End appears anywhere but an AddVertex step.
GenerationState apply(const GenerationState& state, const Action& action);

/// Folds `apply` over a complete, End-terminated sequence and returns the
/// resulting AQG. The answer vertex is the one created by the first action.
AbstractQueryGraph replay(const ActionSequence& actions);

enum class TraversalKind { DepthFirst, BreadthFirst, Random };

std::string_view to_string(TraversalKind k);
std::optional<TraversalKind> parse_traversal(std::string_view s);

struct TraversalStrategy {
  TraversalKind kind = TraversalKind::DepthFirst;
  uint64_t seed = 0;  // Random only

  static TraversalStrategy dfs() { return {TraversalKind::DepthFirst, 0}; }
  static TraversalStrategy bfs() { return {TraversalKind::BreadthFirst, 0}; }
  static TraversalStrategy random(uint64_t seed) { return {TraversalKind::Random, seed}; }
};

/// Restores a generation process for a gold AQG by traversing it from the
/// answer vertex. Each fresh vertex visited from u along e contributes
/// (class of v, visit rank of u, class of e); the sequence ends with End.
ActionSequence build_ground_truth(const AbstractQueryGraph& gold, TraversalStrategy strategy);

}  // namespace aqgen
