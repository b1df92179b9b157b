#pragma once

// Independent reference implementations used as test oracles. These stay
// deliberately naive (permutations, nested loops, full enumeration) and
// must not share logic with the library code paths they check.

#include <optional>
#include <set>
#include <string>
#include <vector>

#include "aqgen/graph.hpp"
#include "aqgen/grounding.hpp"
#include "aqgen/kb.hpp"
#include "aqgen/rng.hpp"

namespace aqgen::oracle {

/// Label-preserving, answer-preserving isomorphism by trying every vertex
/// bijection. Exponential; keep inputs at <= 8 vertices.
bool isomorphic_brute_force(const AbstractQueryGraph& a, const AbstractQueryGraph& b);

/// Nested-loop evaluator: enumerates one triple per Rel/Isa pattern from
/// the full triple list, checks consistency, then applies Cmp/Ord/Cnt.
std::vector<Term> execute_brute_force(const GroundedQuery& query, const KnowledgeBase& kb);

/// Full grounding enumeration: every intermediate assignment, every
/// direction combination, every relation tuple from the KB vocabulary,
/// kept when execution is nonempty. Returns canonical JSON dumps.
std::set<std::string> ground_brute_force(const AbstractQueryGraph& g,
                                         const LinkingResults& linking, const KnowledgeBase& kb);

/// Random labeled tree with `vertices` vertices; the answer vertex is
/// vertex 0 and gets class Var, other labels are uniform.
AbstractQueryGraph random_aqg(Rng& rng, int vertices, bool answer_is_var = true);

/// Random small KB: entities e0..e(n-1), relations r0.., numeric literals
/// and rdf:type rows mixed in.
KnowledgeBase random_kb(Rng& rng, int entities, int relations, int triples);

/// Random linking results drawn from the KB vocabulary (may include empty
/// mention sets and distractors).
LinkingResults random_linking(Rng& rng, const KnowledgeBase& kb, int mentions, int types,
                              int numbers);

}  // namespace aqgen::oracle
