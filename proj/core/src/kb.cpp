#include "aqgen/kb.hpp"

#include <algorithm>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>

#include "aqgen/text.hpp"

namespace aqgen {

namespace {

const std::vector<Term> kNoTerms;
const std::vector<int> kNoInts;

bool looks_numeric(std::string_view s) {
  if (s.empty()) return false;
  size_t i = (s[0] == '+' || s[0] == '-') ? 1 : 0;
  if (i == s.size()) return false;
  for (; i < s.size(); ++i)
    if (!(s[i] >= '0' && s[i] <= '9') && s[i] != '.') return false;
  return true;
}

}  // namespace

int KnowledgeBase::intern_entity(const std::string& name) {
  auto it = entity_ids_.find(name);
  if (it != entity_ids_.end()) return it->second;
  int id = static_cast<int>(entity_names_.size());
  entity_ids_.emplace(name, id);
  entity_names_.push_back(name);
  in_universe_.push_back(0);
  return id;
}

int KnowledgeBase::intern_relation(const std::string& name) {
  auto it = relation_ids_.find(name);
  if (it != relation_ids_.end()) return it->second;
  int id = static_cast<int>(relation_names_.size());
  relation_ids_.emplace(name, id);
  relation_names_.push_back(name);
  return id;
}

std::optional<int> KnowledgeBase::entity_id(std::string_view name) const {
  auto it = entity_ids_.find(name);
  if (it == entity_ids_.end()) return std::nullopt;
  return it->second;
}

std::optional<int> KnowledgeBase::relation_id(std::string_view name) const {
  auto it = relation_ids_.find(name);
  if (it == relation_ids_.end()) return std::nullopt;
  return it->second;
}

void KnowledgeBase::note_entity_use(int id) {
  if (!in_universe_[static_cast<size_t>(id)]) {
    in_universe_[static_cast<size_t>(id)] = 1;
    universe_.push_back(id);
  }
}

void KnowledgeBase::add_triple(const std::string& subject, const std::string& relation,
                               const std::string& object_raw) {
  Term object;
  double value = 0.0;
  if (looks_numeric(object_raw) && parse_number(object_raw, value)) {
    object = Term::make_number(value);
  } else if (object_raw.size() >= 2 && object_raw.front() == '"' && object_raw.back() == '"') {
    object = Term::make_string(object_raw.substr(1, object_raw.size() - 2));
  } else {
    object = Term::make_entity(intern_entity(object_raw));
  }
  add_triple(subject, relation, std::move(object));
}

void KnowledgeBase::add_triple(const std::string& subject, const std::string& relation,
                               Term object) {
  int s = intern_entity(subject);
  int p = intern_relation(relation);

  const std::vector<int>& existing = relations_between(s, object);
  if (std::find(existing.begin(), existing.end(), p) != existing.end()) return;

  triples_.push_back(Triple{s, p, object});
  by_subject_relation_[{s, p}].push_back(object);
  by_relation_object_[{p, object}].push_back(s);
  by_subject_object_[{s, object}].push_back(p);
  by_relation_[p].push_back(static_cast<int>(triples_.size()) - 1);
  note_entity_use(s);
  if (object.is_entity()) note_entity_use(object.entity);
}

const std::vector<Term>& KnowledgeBase::objects_of(int subject, int relation) const {
  auto it = by_subject_relation_.find({subject, relation});
  return it == by_subject_relation_.end() ? kNoTerms : it->second;
}

const std::vector<int>& KnowledgeBase::subjects_of(int relation, const Term& object) const {
  auto it = by_relation_object_.find({relation, object});
  return it == by_relation_object_.end() ? kNoInts : it->second;
}

const std::vector<int>& KnowledgeBase::relations_between(int subject, const Term& object) const {
  auto it = by_subject_object_.find({subject, object});
  return it == by_subject_object_.end() ? kNoInts : it->second;
}

const std::vector<int>& KnowledgeBase::triples_with(int relation) const {
  auto it = by_relation_.find(relation);
  return it == by_relation_.end() ? kNoInts : it->second;
}

std::vector<int> KnowledgeBase::relations() const {
  std::vector<int> out(relation_names_.size());
  for (size_t i = 0; i < out.size(); ++i) out[i] = static_cast<int>(i);
  return out;
}

void KnowledgeBase::save(const std::filesystem::path& path) const {
  std::vector<std::string> lines;
  lines.reserve(triples_.size());
  for (const Triple& t : triples_) {
    std::string object;
    switch (t.object.kind) {
      case Term::Kind::Entity: object = entity_name(t.object.entity); break;
      case Term::Kind::Number: object = number_to_string(t.object.number); break;
      case Term::Kind::String: object = '"' + t.object.text + '"'; break;
    }
    lines.push_back(entity_name(t.subject) + "\t" + relation_name(t.relation) + "\t" + object);
  }
  std::sort(lines.begin(), lines.end());
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  for (const std::string& line : lines) out << line << '\n';
}

KnowledgeBase load_triples(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  KnowledgeBase kb;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    size_t t1 = line.find('\t');
    size_t t2 = t1 == std::string::npos ? std::string::npos : line.find('\t', t1 + 1);
    if (t1 == std::string::npos || t2 == std::string::npos)
      throw ParseError("expected s<TAB>p<TAB>o", line_no);
    if (line.find('\t', t2 + 1) != std::string::npos)
      throw ParseError("too many fields", line_no);
    std::string s = line.substr(0, t1);
    std::string p = line.substr(t1 + 1, t2 - t1 - 1);
    std::string o = line.substr(t2 + 1);
    if (s.empty() || p.empty() || o.empty()) throw ParseError("empty field", line_no);
    double ignored = 0.0;
    if (looks_numeric(o) && !parse_number(o, ignored))
      throw ParseError("malformed numeric literal '" + o + "'", line_no);
    kb.add_triple(s, p, o);
  }
  return kb;
}

// ---------------------------------------------------------------------------
// Execution

namespace {

/// A pattern side: a constant term or a variable slot (vertex id).
struct Side {
  bool is_var = false;
  int var = -1;
  Term term;
};

struct Pattern {
  Side subject;
  std::optional<int> relation;  // absent when the relation name is unknown to the KB
  Side object;
  int edge_id = 0;
};

struct RowSet {
  // One slot per vertex id; `bound` masks the slots that hold values.
  int width = 0;
  std::vector<std::vector<Term>> rows;
  std::vector<char> bound;
};

Side make_side(const QueryGraph& q, const KnowledgeBase& kb, int vertex_id) {
  const Vertex& v = q.vertex(vertex_id);
  Side side;
  if (v.cls == VertexClass::Var) {
    side.is_var = true;
    side.var = vertex_id;
    return side;
  }
  if (v.cls == VertexClass::Num) {
    double value = 0.0;
    if (v.instance && parse_number(*v.instance, value)) side.term = Term::make_number(value);
    else side.term = Term::make_number(std::numeric_limits<double>::quiet_NaN());
    return side;
  }
  // Ent / Type: entity constant; unknown names never match.
  auto id = v.instance ? kb.entity_id(*v.instance) : std::nullopt;
  side.term = Term::make_entity(id.value_or(-2));
  return side;
}

/// Estimated extension count used for greedy join ordering.
size_t pattern_cost(const Pattern& p, const std::vector<char>& bound, const KnowledgeBase& kb) {
  if (!p.relation) return 0;  // fails immediately, run first
  bool s_known = !p.subject.is_var || bound[static_cast<size_t>(p.subject.var)];
  bool o_known = !p.object.is_var || bound[static_cast<size_t>(p.object.var)];
  if (s_known && o_known) return 1;
  return kb.triples_with(*p.relation).size();
}

void join_pattern(RowSet& rs, const Pattern& p, const KnowledgeBase& kb) {
  std::vector<std::vector<Term>> next;
  if (!p.relation) {
    rs.rows.clear();
    return;
  }
  int rel = *p.relation;
  bool s_bound = p.subject.is_var && rs.bound[static_cast<size_t>(p.subject.var)];
  bool o_bound = p.object.is_var && rs.bound[static_cast<size_t>(p.object.var)];
  bool same_var = p.subject.is_var && p.object.is_var && p.subject.var == p.object.var;

  for (const std::vector<Term>& row : rs.rows) {
    Term s_val = p.subject.is_var
                     ? (s_bound ? row[static_cast<size_t>(p.subject.var)] : Term{})
                     : p.subject.term;
    Term o_val = p.object.is_var ? (o_bound ? row[static_cast<size_t>(p.object.var)] : Term{})
                                 : p.object.term;
    bool s_known = !p.subject.is_var || s_bound;
    bool o_known = !p.object.is_var || o_bound;

    if (s_known && !s_val.is_entity()) continue;  // literal subjects never occur

    if (s_known && o_known) {
      const auto& rels = kb.relations_between(s_val.entity, o_val);
      if (std::find(rels.begin(), rels.end(), rel) != rels.end()) next.push_back(row);
    } else if (s_known) {
      for (const Term& o : kb.objects_of(s_val.entity, rel)) {
        std::vector<Term> extended = row;
        if (p.object.is_var) extended[static_cast<size_t>(p.object.var)] = o;
        next.push_back(std::move(extended));
      }
    } else if (o_known) {
      for (int s : kb.subjects_of(rel, o_val)) {
        std::vector<Term> extended = row;
        extended[static_cast<size_t>(p.subject.var)] = Term::make_entity(s);
        next.push_back(std::move(extended));
      }
    } else {
      for (int idx : kb.triples_with(rel)) {
        const Triple& t = kb.triples()[static_cast<size_t>(idx)];
        if (same_var && !(t.object == Term::make_entity(t.subject))) continue;
        std::vector<Term> extended = row;
        extended[static_cast<size_t>(p.subject.var)] = Term::make_entity(t.subject);
        extended[static_cast<size_t>(p.object.var)] = t.object;
        next.push_back(std::move(extended));
      }
    }
  }
  if (p.subject.is_var) rs.bound[static_cast<size_t>(p.subject.var)] = 1;
  if (p.object.is_var) rs.bound[static_cast<size_t>(p.object.var)] = 1;
  rs.rows = std::move(next);
}

/// Splits a constraint edge into (value endpoint, constraint endpoint).
/// The constraint argument k sits on the Num endpoint; by canonical
/// orientation that is v, but either endpoint is accepted.
struct ConstraintEnds {
  bool ok = false;
  int value_vertex = -1;
  double k = 0.0;
};

ConstraintEnds constraint_ends(const QueryGraph& q, const Edge& e) {
  ConstraintEnds ends;
  const Vertex& u = q.vertex(e.u);
  const Vertex& v = q.vertex(e.v);
  int num_vertex = -1;
  if (v.cls == VertexClass::Num) num_vertex = e.v;
  else if (u.cls == VertexClass::Num) num_vertex = e.u;
  if (num_vertex < 0) return ends;
  const Vertex& num = q.vertex(num_vertex);
  double k = 0.0;
  if (!num.instance || !parse_number(*num.instance, k)) return ends;
  ends.ok = true;
  ends.value_vertex = e.other(num_vertex);
  ends.k = k;
  return ends;
}

std::optional<double> numeric_value(const QueryGraph& q, const RowSet& rs,
                                    const std::vector<Term>& row, int vertex_id) {
  const Vertex& v = q.vertex(vertex_id);
  if (v.cls == VertexClass::Var) {
    if (!rs.bound[static_cast<size_t>(vertex_id)]) return std::nullopt;
    const Term& t = row[static_cast<size_t>(vertex_id)];
    if (!t.is_number()) return std::nullopt;
    return t.number;
  }
  if (v.cls == VertexClass::Num && v.instance) {
    double value = 0.0;
    if (parse_number(*v.instance, value)) return value;
  }
  return std::nullopt;
}

}  // namespace

std::vector<Term> execute(const GroundedQuery& query, const KnowledgeBase& kb) {
  // Count-answer detection: a Cnt edge whose non-Num endpoint is
  // the answer turns the query into a count query. The answer variable
  // must not occur in any other edge in that case.
  const Edge* count_edge = nullptr;
  for (const Edge& e : query.edges) {
    if (e.cls != EdgeClass::Cnt) continue;
    bool u_num = query.vertex(e.u).cls == VertexClass::Num;
    bool v_num = query.vertex(e.v).cls == VertexClass::Num;
    if (u_num || v_num) continue;  // assertion form
    if (e.u == query.answer || e.v == query.answer) {
      if (count_edge) return {};  // two count edges on the answer
      count_edge = &e;
    }
  }
  if (count_edge) {
    for (const Edge& e : query.edges)
      if (e.id != count_edge->id && e.touches(query.answer)) return {};
  }

  // Join the conjunctive part: directed Rel patterns plus Isa patterns.
  std::vector<Pattern> patterns;
  for (const Edge& e : query.edges) {
    if (e.cls == EdgeClass::Rel) {
      if (!e.instance) throw std::invalid_argument("execute: uninstantiated Rel edge");
      Pattern p;
      p.subject = make_side(query, kb, e.subject());
      p.object = make_side(query, kb, e.object());
      p.relation = kb.relation_id(*e.instance);
      p.edge_id = e.id;
      patterns.push_back(std::move(p));
    } else if (e.cls == EdgeClass::Isa) {
      Pattern p;
      p.subject = make_side(query, kb, e.u);
      p.object = make_side(query, kb, e.v);
      p.relation = kb.relation_id(KnowledgeBase::kTypeRelation);
      p.edge_id = e.id;
      patterns.push_back(std::move(p));
    }
  }

  RowSet rs;
  rs.width = static_cast<int>(query.vertices.size());
  rs.bound.assign(query.vertices.size(), 0);
  rs.rows.push_back(std::vector<Term>(query.vertices.size()));

  std::vector<char> done(patterns.size(), 0);
  for (size_t round = 0; round < patterns.size(); ++round) {
    size_t best = patterns.size();
    size_t best_cost = 0;
    for (size_t i = 0; i < patterns.size(); ++i) {
      if (done[i]) continue;
      size_t cost = pattern_cost(patterns[i], rs.bound, kb);
      if (best == patterns.size() || cost < best_cost) {
        best = i;
        best_cost = cost;
      }
    }
    done[best] = 1;
    join_pattern(rs, patterns[best], kb);
    if (rs.rows.empty()) break;
  }

  // Cmp filters, ascending edge id.
  for (const Edge& e : query.edges) {
    if (e.cls != EdgeClass::Cmp) continue;
    ConstraintEnds ends = constraint_ends(query, e);
    if (!ends.ok || !e.instance) {
      rs.rows.clear();
      break;
    }
    std::vector<std::vector<Term>> kept;
    for (auto& row : rs.rows) {
      std::optional<double> x = numeric_value(query, rs, row, ends.value_vertex);
      if (!x) continue;
      bool pass = (*e.instance == "<" && *x < ends.k) || (*e.instance == ">" && *x > ends.k) ||
                  (*e.instance == "=" && *x == ends.k);
      if (pass) kept.push_back(std::move(row));
    }
    rs.rows = std::move(kept);
  }

  // Ord constraints: keep rows whose value equals the n-th distinct numeric
  // value, descending for max_at_n and ascending for min_at_n (1-indexed).
  for (const Edge& e : query.edges) {
    if (e.cls != EdgeClass::Ord) continue;
    ConstraintEnds ends = constraint_ends(query, e);
    if (!ends.ok || !e.instance || (e.instance != "max_at_n" && e.instance != "min_at_n")) {
      rs.rows.clear();
      break;
    }
    int n = static_cast<int>(ends.k);
    if (n < 1 || static_cast<double>(n) != ends.k) {
      rs.rows.clear();
      break;
    }
    std::set<double> values;
    for (const auto& row : rs.rows) {
      if (auto x = numeric_value(query, rs, row, ends.value_vertex)) values.insert(*x);
    }
    if (static_cast<size_t>(n) > values.size()) {
      rs.rows.clear();
      break;
    }
    double picked = 0.0;
    if (*e.instance == "max_at_n") {
      auto it = values.rbegin();
      std::advance(it, n - 1);
      picked = *it;
    } else {
      auto it = values.begin();
      std::advance(it, n - 1);
      picked = *it;
    }
    std::vector<std::vector<Term>> kept;
    for (auto& row : rs.rows) {
      std::optional<double> x = numeric_value(query, rs, row, ends.value_vertex);
      if (x && *x == picked) kept.push_back(std::move(row));
    }
    rs.rows = std::move(kept);
  }

  // Distinct-count of a vertex over the surviving rows. A counted variable
  // that no pattern bound ranges over the whole entity universe.
  auto distinct_count = [&](int vertex_id) -> size_t {
    if (rs.rows.empty()) return 0;
    const Vertex& v = query.vertex(vertex_id);
    if (v.cls != VertexClass::Var) return 1;
    if (!rs.bound[static_cast<size_t>(vertex_id)]) return kb.entity_universe().size();
    std::set<Term> seen;
    for (const auto& row : rs.rows) seen.insert(row[static_cast<size_t>(vertex_id)]);
    return seen.size();
  };

  // Cnt assertions (Num endpoint): the whole result stands or falls.
  for (const Edge& e : query.edges) {
    if (e.cls != EdgeClass::Cnt || (count_edge && e.id == count_edge->id)) continue;
    if (!e.instance || *e.instance != "count") return {};
    bool u_num = query.vertex(e.u).cls == VertexClass::Num;
    bool v_num = query.vertex(e.v).cls == VertexClass::Num;
    if (!u_num && !v_num) return {};  // neither count form applies
    int num_vertex = v_num ? e.v : e.u;
    int counted = e.other(num_vertex);
    if (query.vertex(counted).cls != VertexClass::Var) return {};
    double k = 0.0;
    if (!query.vertex(num_vertex).instance ||
        !parse_number(*query.vertex(num_vertex).instance, k))
      return {};
    if (static_cast<double>(distinct_count(counted)) != k) return {};
  }

  if (count_edge) {
    if (!count_edge->instance || *count_edge->instance != "count") return {};
    int counted = count_edge->other(query.answer);
    if (query.vertex(counted).cls != VertexClass::Var) return {};
    return {Term::make_number(static_cast<double>(distinct_count(counted)))};
  }

  // Project the distinct answers.
  if (rs.rows.empty()) return {};
  std::set<Term> answers;
  if (query.vertex(query.answer).cls != VertexClass::Var) return {};
  if (rs.bound[static_cast<size_t>(query.answer)]) {
    for (const auto& row : rs.rows) answers.insert(row[static_cast<size_t>(query.answer)]);
  } else {
    // Unconstrained answer variable: matches any entity in the KB.
    for (int id : kb.entity_universe()) answers.insert(Term::make_entity(id));
  }
  return {answers.begin(), answers.end()};
}

std::vector<int> relation_candidates(const GroundedQuery& pattern, const KnowledgeBase& kb) {
  // Located by position, not id: callers may pass connected sub-patterns
  // whose edge ids are not dense.
  size_t wildcard = pattern.edges.size();
  for (size_t i = 0; i < pattern.edges.size(); ++i) {
    const Edge& e = pattern.edges[i];
    if (e.cls == EdgeClass::Rel && !e.instance) {
      if (wildcard != pattern.edges.size())
        throw std::invalid_argument("relation_candidates: more than one wildcard Rel edge");
      wildcard = i;
    }
  }
  if (wildcard == pattern.edges.size())
    throw std::invalid_argument("relation_candidates: no wildcard Rel edge");

  std::vector<int> out;
  GroundedQuery probe = pattern;
  for (int rel : kb.relations()) {
    probe.edges[wildcard].instance = kb.relation_name(rel);
    if (!execute(probe, kb).empty()) out.push_back(rel);
  }
  return out;
}

std::string term_to_string(const Term& t, const KnowledgeBase& kb) {
  switch (t.kind) {
    case Term::Kind::Entity: return t.entity >= 0 ? kb.entity_name(t.entity) : "<unknown>";
    case Term::Kind::Number: return number_to_string(t.number);
    case Term::Kind::String: return t.text;
  }
  return "?";
}

std::string to_sparql(const GroundedQuery& query) {
  auto vertex_text = [&](int id) -> std::string {
    const Vertex& v = query.vertex(id);
    return v.instance ? *v.instance : ("_:v" + std::to_string(id));
  };

  const Edge* count_edge = nullptr;
  for (const Edge& e : query.edges) {
    if (e.cls == EdgeClass::Cnt && e.touches(query.answer) &&
        query.vertex(e.u).cls != VertexClass::Num && query.vertex(e.v).cls != VertexClass::Num)
      count_edge = &e;
  }

  std::ostringstream out;
  if (count_edge) {
    out << "SELECT (COUNT(DISTINCT " << vertex_text(count_edge->other(query.answer)) << ") AS "
        << vertex_text(query.answer) << ") WHERE {\n";
  } else {
    out << "SELECT DISTINCT " << vertex_text(query.answer) << " WHERE {\n";
  }

  for (const Edge& e : query.edges) {
    switch (e.cls) {
      case EdgeClass::Rel:
        out << "  " << vertex_text(e.subject()) << " " << e.instance.value_or("?p") << " "
            << vertex_text(e.object()) << " .\n";
        break;
      case EdgeClass::Isa:
        out << "  " << vertex_text(e.u) << " rdf:type " << vertex_text(e.v) << " .\n";
        break;
      case EdgeClass::Cmp: {
        ConstraintEnds ends = constraint_ends(query, e);
        out << "  FILTER(" << (ends.ok ? vertex_text(ends.value_vertex) : "?x") << " "
            << e.instance.value_or("?") << " " << number_to_string(ends.k) << ")\n";
        break;
      }
      case EdgeClass::Ord: {
        ConstraintEnds ends = constraint_ends(query, e);
        std::string var = ends.ok ? vertex_text(ends.value_vertex) : "?x";
        bool desc = e.instance && *e.instance == "max_at_n";
        int n = ends.ok ? static_cast<int>(ends.k) : 1;
        out << "  { SELECT DISTINCT " << var << " WHERE { } ORDER BY "
            << (desc ? "DESC(" : "ASC(") << var << ") OFFSET " << (n - 1) << " LIMIT 1 }\n";
        break;
      }
      case EdgeClass::Cnt:
        if (count_edge && e.id == count_edge->id) break;
        {
          bool v_num = query.vertex(e.v).cls == VertexClass::Num;
          int num_vertex = v_num ? e.v : e.u;
          out << "  HAVING(COUNT(DISTINCT " << vertex_text(e.other(num_vertex))
              << ") = " << vertex_text(num_vertex) << ")\n";
        }
        break;
    }
  }
  out << "}\n";
  return out.str();
}

}  // namespace aqgen
