#pragma once

#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "aqgen/graph.hpp"
#include "aqgen/kb.hpp"

namespace aqgen {

/// Precomputed linking results for one question: candidate entity ids per
/// mention, candidate type ids, and number literals.
struct LinkingResults {
  std::vector<std::vector<std::string>> entities;
  std::vector<std::string> types;
  std::vector<double> numbers;

  nlohmann::json to_json() const;
  static LinkingResults from_json(const nlohmann::json& j);
};

/// Some Ent/Type/Num vertex has no candidate instances.
class UngroundableError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// An intermediate graph: the AQG with all non-variable vertices and all
/// built-in edges instantiated; Rel edges still abstract (no instance).
using IntermediateGraph = QueryGraph;

/// All intermediate graphs for an AQG: the product of entity assignments
/// (injective over mentions), type and number choices, and built-in edge
/// instances (Ord: min_at_n/max_at_n; Cmp: <,>,=; Cnt: count; Isa: rdf:type).
/// Throws UngroundableError when a vertex has no candidates.
std::vector<IntermediateGraph> enumerate_intermediate(const AbstractQueryGraph& g,
                                                      const LinkingResults& linking);

/// All 2^k direction assignments over the k Rel edges, each entry parallel
/// to `rel_edge_ids`.
struct DirectionAssignments {
  std::vector<int> rel_edge_ids;             // ascending
  std::vector<std::vector<EdgeDir>> assignments;
};

DirectionAssignments enumerate_directions(const IntermediateGraph& g);

/// Grounds an AQG: instantiates Rel edges one at a time (closest to the
/// answer first) with KB-verified relation candidates, keeps fully
/// instantiated graphs that execute nonempty, and deduplicates. Returns an
/// empty set when nothing grounds.
std::vector<GroundedQuery> ground(const AbstractQueryGraph& g, const LinkingResults& linking,
                                  const KnowledgeBase& kb);

/// True iff ground() would return at least one candidate; exits at the
/// first complete grounding.
bool is_groundable(const AbstractQueryGraph& g, const LinkingResults& linking,
                   const KnowledgeBase& kb);

/// If g has no Type vertex and type candidates exist, tries attaching a
/// Type vertex via an Isa edge to each Var vertex in ascending id order and
/// returns the first groundable augmentation.
std::optional<AbstractQueryGraph> attach_type(const AbstractQueryGraph& g,
                                              const LinkingResults& linking,
                                              const KnowledgeBase& kb);

}  // namespace aqgen
