#include "aqgen/grounding.hpp"

#include <algorithm>
#include <deque>
#include <functional>
#include <set>

#include "aqgen/text.hpp"

namespace aqgen {

nlohmann::json LinkingResults::to_json() const {
  nlohmann::json j;
  j["entities"] = entities;
  j["types"] = types;
  j["numbers"] = numbers;
  return j;
}

LinkingResults LinkingResults::from_json(const nlohmann::json& j) {
  LinkingResults r;
  if (j.contains("entities")) r.entities = j.at("entities").get<std::vector<std::vector<std::string>>>();
  if (j.contains("types")) r.types = j.at("types").get<std::vector<std::string>>();
  if (j.contains("numbers")) r.numbers = j.at("numbers").get<std::vector<double>>();
  return r;
}

namespace {

/// Skeleton query graph for an AQG: classes copied, Var vertices named
/// (?v0 at the answer slot, ?v1.. ascending elsewhere), built-in edges
/// swung into canonical orientation. Instances left blank.
QueryGraph skeleton_of(const AbstractQueryGraph& g) {
  QueryGraph q;
  int next_var = 1;
  for (const auto& v : g.vertices) {
    std::optional<std::string> name;
    if (v.cls == VertexClass::Var)
      name = v.id == g.answer ? std::string("?v0") : ("?v" + std::to_string(next_var++));
    q.add_vertex(v.cls, std::move(name));
  }
  for (const auto& e : g.edges) {
    int u = e.u;
    int v = e.v;
    bool swap = false;
    switch (e.cls) {
      case EdgeClass::Isa:
        swap = g.vertex(u).cls == VertexClass::Type && g.vertex(v).cls != VertexClass::Type;
        break;
      case EdgeClass::Cmp:
      case EdgeClass::Ord:
      case EdgeClass::Cnt:
        swap = g.vertex(u).cls == VertexClass::Num && g.vertex(v).cls != VertexClass::Num;
        break;
      case EdgeClass::Rel: break;
    }
    if (swap) std::swap(u, v);
    q.add_edge(e.cls, std::nullopt, u, v, EdgeDir::None);
  }
  q.answer = g.answer;
  return q;
}

std::vector<std::string> builtin_instances(EdgeClass cls) {
  switch (cls) {
    case EdgeClass::Ord: return {"min_at_n", "max_at_n"};
    case EdgeClass::Cmp: return {"<", ">", "="};
    case EdgeClass::Cnt: return {"count"};
    case EdgeClass::Isa: return {std::string(KnowledgeBase::kTypeRelation)};
    case EdgeClass::Rel: break;
  }
  return {};
}

/// Depth of every vertex from the answer (BFS).
std::vector<int> vertex_depths(const QueryGraph& q) {
  std::vector<int> depth(q.vertices.size(), -1);
  std::deque<int> queue{q.answer};
  depth[static_cast<size_t>(q.answer)] = 0;
  while (!queue.empty()) {
    int u = queue.front();
    queue.pop_front();
    for (const Edge& e : q.edges) {
      if (!e.touches(u)) continue;
      int w = e.other(u);
      if (depth[static_cast<size_t>(w)] < 0) {
        depth[static_cast<size_t>(w)] = depth[static_cast<size_t>(u)] + 1;
        queue.push_back(w);
      }
    }
  }
  return depth;
}

/// Shared grounding driver. Calls `emit` for every fully instantiated query
/// with a nonempty result; stops early when emit returns false.
void ground_driver(const AbstractQueryGraph& g, const LinkingResults& linking,
                   const KnowledgeBase& kb,
                   const std::function<bool(const GroundedQuery&)>& emit) {
  std::vector<IntermediateGraph> intermediates;
  try {
    intermediates = enumerate_intermediate(g, linking);
  } catch (const UngroundableError&) {
    return;
  }

  for (const IntermediateGraph& ig : intermediates) {
    std::vector<int> depth = vertex_depths(ig);

    // Edges ordered by distance from the answer; prefixes of this order are
    // connected subtrees rooted at the answer.
    std::vector<int> order(ig.edges.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
    auto edge_depth = [&](int idx) {
      const Edge& e = ig.edges[static_cast<size_t>(idx)];
      return std::max(depth[static_cast<size_t>(e.u)], depth[static_cast<size_t>(e.v)]);
    };
    std::stable_sort(order.begin(), order.end(),
                     [&](int a, int b) { return edge_depth(a) < edge_depth(b); });

    DirectionAssignments dirs = enumerate_directions(ig);
    for (const std::vector<EdgeDir>& assignment : dirs.assignments) {
      QueryGraph base = ig;
      for (size_t i = 0; i < dirs.rel_edge_ids.size(); ++i)
        base.edges[static_cast<size_t>(dirs.rel_edge_ids[i])].dir = assignment[i];

      // Instantiate Rel edges in order, each constrained by the prefix.
      std::function<bool(QueryGraph&, size_t)> descend = [&](QueryGraph& current,
                                                             size_t pos) -> bool {
        while (pos < order.size() &&
               current.edges[static_cast<size_t>(order[pos])].cls != EdgeClass::Rel)
          ++pos;
        if (pos == order.size()) {
          if (execute(current, kb).empty()) return true;
          return emit(current);
        }
        int edge_index = order[pos];
        QueryGraph prefix;
        prefix.vertices = current.vertices;
        prefix.answer = current.answer;
        for (size_t i = 0; i <= pos; ++i)
          prefix.edges.push_back(current.edges[static_cast<size_t>(order[i])]);
        for (int rel : relation_candidates(prefix, kb)) {
          current.edges[static_cast<size_t>(edge_index)].instance = kb.relation_name(rel);
          if (!descend(current, pos + 1)) return false;
        }
        current.edges[static_cast<size_t>(edge_index)].instance.reset();
        return true;
      };
      if (!descend(base, 0)) return;
    }
  }
}

}  // namespace

std::vector<IntermediateGraph> enumerate_intermediate(const AbstractQueryGraph& g,
                                                      const LinkingResults& linking) {
  QueryGraph skeleton = skeleton_of(g);

  std::vector<int> ent_vertices, type_vertices, num_vertices;
  for (const auto& v : g.vertices) {
    if (v.cls == VertexClass::Ent) ent_vertices.push_back(v.id);
    if (v.cls == VertexClass::Type) type_vertices.push_back(v.id);
    if (v.cls == VertexClass::Num) num_vertices.push_back(v.id);
  }

  std::vector<IntermediateGraph> out;
  std::set<std::string> seen;

  // Injective assignment of mentions to Ent vertices, then per-slot choices.
  std::vector<char> mention_used(linking.entities.size(), 0);

  std::function<void(QueryGraph&, size_t)> fill_builtin_edges = [&](QueryGraph& q, size_t i) {
    while (i < q.edges.size() && q.edges[i].cls == EdgeClass::Rel) ++i;
    if (i == q.edges.size()) {
      std::string key = q.to_json().dump();
      if (seen.insert(key).second) out.push_back(q);
      return;
    }
    for (const std::string& inst : builtin_instances(q.edges[i].cls)) {
      q.edges[i].instance = inst;
      fill_builtin_edges(q, i + 1);
    }
    q.edges[i].instance.reset();
  };

  std::function<void(QueryGraph&, size_t)> fill_numbers = [&](QueryGraph& q, size_t i) {
    if (i == num_vertices.size()) {
      fill_builtin_edges(q, 0);
      return;
    }
    for (double value : linking.numbers) {
      q.vertex(num_vertices[i]).instance = number_to_string(value);
      fill_numbers(q, i + 1);
    }
    q.vertex(num_vertices[i]).instance.reset();
  };

  std::function<void(QueryGraph&, size_t)> fill_types = [&](QueryGraph& q, size_t i) {
    if (i == type_vertices.size()) {
      fill_numbers(q, 0);
      return;
    }
    for (const std::string& type_name : linking.types) {
      q.vertex(type_vertices[i]).instance = type_name;
      fill_types(q, i + 1);
    }
    q.vertex(type_vertices[i]).instance.reset();
  };

  std::function<void(QueryGraph&, size_t)> fill_entities = [&](QueryGraph& q, size_t i) {
    if (i == ent_vertices.size()) {
      fill_types(q, 0);
      return;
    }
    for (size_t m = 0; m < linking.entities.size(); ++m) {
      if (mention_used[m]) continue;
      mention_used[m] = 1;
      for (const std::string& entity : linking.entities[m]) {
        q.vertex(ent_vertices[i]).instance = entity;
        fill_entities(q, i + 1);
      }
      q.vertex(ent_vertices[i]).instance.reset();
      mention_used[m] = 0;
    }
  };

  fill_entities(skeleton, 0);

  if (out.empty() && !(ent_vertices.empty() && type_vertices.empty() && num_vertices.empty()))
    throw UngroundableError("a non-variable vertex has no candidate instances");
  return out;
}

DirectionAssignments enumerate_directions(const IntermediateGraph& g) {
  DirectionAssignments result;
  for (const Edge& e : g.edges)
    if (e.cls == EdgeClass::Rel) result.rel_edge_ids.push_back(e.id);
  size_t k = result.rel_edge_ids.size();
  result.assignments.reserve(static_cast<size_t>(1) << k);
  for (uint64_t bits = 0; bits < (static_cast<uint64_t>(1) << k); ++bits) {
    std::vector<EdgeDir> assignment(k);
    for (size_t j = 0; j < k; ++j)
      assignment[j] = (bits >> j) & 1 ? EdgeDir::VToU : EdgeDir::UToV;
    result.assignments.push_back(std::move(assignment));
  }
  return result;
}

std::vector<GroundedQuery> ground(const AbstractQueryGraph& g, const LinkingResults& linking,
                                  const KnowledgeBase& kb) {
  std::map<std::string, GroundedQuery> by_key;
  ground_driver(g, linking, kb, [&](const GroundedQuery& q) {
    by_key.emplace(q.to_json().dump(), q);
    return true;
  });
  std::vector<GroundedQuery> out;
  out.reserve(by_key.size());
  for (auto& [key, q] : by_key) out.push_back(std::move(q));
  return out;
}

bool is_groundable(const AbstractQueryGraph& g, const LinkingResults& linking,
                   const KnowledgeBase& kb) {
  bool found = false;
  ground_driver(g, linking, kb, [&](const GroundedQuery&) {
    found = true;
    return false;  // stop at the first complete grounding
  });
  return found;
}

std::optional<AbstractQueryGraph> attach_type(const AbstractQueryGraph& g,
                                              const LinkingResults& linking,
                                              const KnowledgeBase& kb) {
  for (const auto& v : g.vertices)
    if (v.cls == VertexClass::Type) return std::nullopt;
  if (linking.types.empty()) return std::nullopt;

  for (const auto& v : g.vertices) {
    if (v.cls != VertexClass::Var) continue;
    AbstractQueryGraph augmented = g;
    int type_vertex = augmented.add_vertex(VertexClass::Type);
    augmented.add_edge(EdgeClass::Isa, v.id, type_vertex);
    if (is_groundable(augmented, linking, kb)) return augmented;
  }
  return std::nullopt;
}

}  // namespace aqgen
