#include "aqgen/grammar.hpp"

#include <algorithm>
#include <deque>

#include "aqgen/rng.hpp"

namespace aqgen {

std::string_view to_string(OperatorKind k) {
  switch (k) {
    case OperatorKind::AddVertex: return "addVertex";
    case OperatorKind::SelectVertex: return "selectVertex";
    case OperatorKind::AddEdge: return "addEdge";
  }
  return "?";
}

OperatorKind operator_at(int step) {
  if (step < 1) throw GrammarError("operator_at: steps are 1-based");
  if (step == 1) return OperatorKind::AddVertex;
  switch ((step - 2) % 3) {
    case 0: return OperatorKind::AddVertex;
    case 1: return OperatorKind::SelectVertex;
    default: return OperatorKind::AddEdge;
  }
}

Action Action::add_vertex(VertexClass c) {
  Action a;
  a.kind = OperatorKind::AddVertex;
  a.vertex_class = c;
  return a;
}

Action Action::end() {
  Action a;
  a.kind = OperatorKind::AddVertex;
  a.vertex_class = std::nullopt;
  return a;
}

Action Action::select(int vertex_id) {
  Action a;
  a.kind = OperatorKind::SelectVertex;
  a.selected = vertex_id;
  return a;
}

Action Action::add_edge(EdgeClass c) {
  Action a;
  a.kind = OperatorKind::AddEdge;
  a.edge_class = c;
  return a;
}

std::string Action::to_display() const {
  switch (kind) {
    case OperatorKind::AddVertex:
      return vertex_class ? std::string(to_string(*vertex_class)) : std::string("End");
    case OperatorKind::SelectVertex: return std::to_string(selected);
    case OperatorKind::AddEdge: return std::string(to_string(edge_class));
  }
  return "?";
}

nlohmann::json actions_to_json(const ActionSequence& actions) {
  nlohmann::json j = nlohmann::json::array();
  for (const Action& a : actions) {
    if (a.kind == OperatorKind::SelectVertex)
      j.push_back(a.selected);
    else
      j.push_back(a.to_display());
  }
  return j;
}

ActionSequence actions_from_json(const nlohmann::json& j) {
  if (!j.is_array()) throw GrammarError("action sequence JSON must be an array");
  ActionSequence actions;
  int step = 1;
  for (const auto& item : j) {
    OperatorKind kind = operator_at(step++);
    switch (kind) {
      case OperatorKind::AddVertex: {
        std::string s = item.get<std::string>();
        if (s == "End") {
          actions.push_back(Action::end());
        } else if (auto c = parse_vertex_class(s)) {
          actions.push_back(Action::add_vertex(*c));
        } else {
          throw GrammarError("unknown vertex label '" + s + "'");
        }
        break;
      }
      case OperatorKind::SelectVertex:
        if (!item.is_number_integer()) throw GrammarError("selection must be an integer");
        actions.push_back(Action::select(item.get<int>()));
        break;
      case OperatorKind::AddEdge: {
        std::string s = item.get<std::string>();
        auto c = parse_edge_class(s);
        if (!c) throw GrammarError("unknown edge label '" + s + "'");
        actions.push_back(Action::add_edge(*c));
        break;
      }
    }
  }
  return actions;
}

GenerationState GenerationState::initial() { return GenerationState{}; }

GenerationState apply(const GenerationState& state, const Action& action) {
  if (state.finished) throw GrammarError("apply: sequence already ended");
  OperatorKind expected = operator_at(state.step);
  if (action.kind != expected)
    throw GrammarError("apply: step " + std::to_string(state.step) + " expects " +
                       std::string(to_string(expected)) + ", got " +
                       std::string(to_string(action.kind)));

  GenerationState next = state;
  next.step = state.step + 1;
  switch (action.kind) {
    case OperatorKind::AddVertex: {
      if (action.is_end()) {
        if (state.step == 1) throw GrammarError("apply: End before the first vertex");
        next.finished = true;
        next.step = state.step;
        return next;
      }
      int id = next.graph.add_vertex(*action.vertex_class);
      if (state.step == 1) {
        next.graph.answer = id;
      } else {
        next.pending_vertex = id;
      }
      return next;
    }
    case OperatorKind::SelectVertex: {
      if (!state.pending_vertex) throw GrammarError("apply: selection without a fresh vertex");
      int id = action.selected;
      if (id < 0 || id >= next.graph.vertex_count())
        throw GrammarError("apply: selected vertex " + std::to_string(id) + " does not exist");
      if (id == *state.pending_vertex)
        throw GrammarError("apply: cannot select the fresh vertex itself");
      next.pending_selection = id;
      return next;
    }
    case OperatorKind::AddEdge: {
      if (!state.pending_vertex || !state.pending_selection)
        throw GrammarError("apply: edge without pending vertex and selection");
      next.graph.add_edge(action.edge_class, *state.pending_selection, *state.pending_vertex);
      next.pending_vertex.reset();
      next.pending_selection.reset();
      return next;
    }
  }
  throw GrammarError("apply: unreachable");
}

AbstractQueryGraph replay(const ActionSequence& actions) {
  if (actions.empty()) throw GrammarError("replay: empty sequence");
  GenerationState state = GenerationState::initial();
  for (const Action& a : actions) {
    state = apply(state, a);
    if (state.finished) break;
  }
  if (!state.finished) throw GrammarError("replay: sequence is not terminated by End");
  return state.graph;
}

std::string_view to_string(TraversalKind k) {
  switch (k) {
    case TraversalKind::DepthFirst: return "dfs";
    case TraversalKind::BreadthFirst: return "bfs";
    case TraversalKind::Random: return "random";
  }
  return "?";
}

std::optional<TraversalKind> parse_traversal(std::string_view s) {
  if (s == "dfs") return TraversalKind::DepthFirst;
  if (s == "bfs") return TraversalKind::BreadthFirst;
  if (s == "random") return TraversalKind::Random;
  return std::nullopt;
}

ActionSequence build_ground_truth(const AbstractQueryGraph& gold, TraversalStrategy strategy) {
  if (TreeCheck c = validate_tree(gold); !c.ok)
    throw GrammarError("build_ground_truth: gold graph is not a tree (" + c.detail + ")");

  int n = gold.vertex_count();
  std::vector<int> rank(static_cast<size_t>(n), -1);  // visit order, used as selection index
  ActionSequence out;
  out.reserve(static_cast<size_t>(3 * n - 1));

  auto visit_edge = [&](int parent, int edge_id, int child, int next_rank) {
    out.push_back(Action::add_vertex(gold.vertex(child).cls));
    out.push_back(Action::select(rank[static_cast<size_t>(parent)]));
    out.push_back(Action::add_edge(gold.edge(edge_id).cls));
    rank[static_cast<size_t>(child)] = next_rank;
  };

  rank[static_cast<size_t>(gold.answer)] = 0;
  out.push_back(Action::add_vertex(gold.vertex(gold.answer).cls));
  int visited = 1;

  switch (strategy.kind) {
    case TraversalKind::DepthFirst: {
      // Children pushed in descending edge-id order so the smallest incident
      // edge is expanded first.
      std::vector<std::pair<int, int>> stack;  // (vertex, incoming edge)
      stack.emplace_back(gold.answer, -1);
      while (!stack.empty()) {
        auto [u, from_edge] = stack.back();
        stack.pop_back();
        if (from_edge >= 0) visit_edge(gold.edge(from_edge).other(u), from_edge, u, visited++);
        std::vector<int> incident = gold.incident_edges(u);
        for (auto it = incident.rbegin(); it != incident.rend(); ++it) {
          int w = gold.edge(*it).other(u);
          if (*it != from_edge && rank[static_cast<size_t>(w)] < 0) stack.emplace_back(w, *it);
        }
      }
      break;
    }
    case TraversalKind::BreadthFirst: {
      std::deque<int> queue{gold.answer};
      while (!queue.empty()) {
        int u = queue.front();
        queue.pop_front();
        for (int edge_id : gold.incident_edges(u)) {
          int w = gold.edge(edge_id).other(u);
          if (rank[static_cast<size_t>(w)] >= 0) continue;
          visit_edge(u, edge_id, w, visited++);
          queue.push_back(w);
        }
      }
      break;
    }
    case TraversalKind::Random: {
      // Uniform choice over the (visited, unvisited) boundary at every step.
      Rng rng(strategy.seed);
      while (visited < n) {
        std::vector<std::pair<int, int>> frontier;  // (edge, unvisited endpoint)
        for (const auto& e : gold.edges) {
          bool u_in = rank[static_cast<size_t>(e.u)] >= 0;
          bool v_in = rank[static_cast<size_t>(e.v)] >= 0;
          if (u_in != v_in) frontier.emplace_back(e.id, u_in ? e.v : e.u);
        }
        auto [edge_id, w] = frontier[static_cast<size_t>(rng.below(static_cast<int>(frontier.size())))];
        visit_edge(gold.edge(edge_id).other(w), edge_id, w, visited++);
      }
      break;
    }
  }

  out.push_back(Action::end());
  return out;
}

}  // namespace aqgen
