#pragma once

#include <compare>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "aqgen/graph.hpp"

namespace aqgen {

/// A triple object or a query answer: an interned entity, a numeric
/// literal, or a string literal.
struct Term {
  enum class Kind { Entity, Number, String };

  Kind kind = Kind::Entity;
  int entity = -1;
  double number = 0.0;
  std::string text;

  static Term make_entity(int id) { return Term{Kind::Entity, id, 0.0, {}}; }
  static Term make_number(double v) { return Term{Kind::Number, -1, v, {}}; }
  static Term make_string(std::string s) { return Term{Kind::String, -1, 0.0, std::move(s)}; }

  bool is_entity() const { return kind == Kind::Entity; }
  bool is_number() const { return kind == Kind::Number; }

  friend bool operator==(const Term& a, const Term& b) {
    if (a.kind != b.kind) return false;
    switch (a.kind) {
      case Kind::Entity: return a.entity == b.entity;
      case Kind::Number: return a.number == b.number;
      case Kind::String: return a.text == b.text;
    }
    return false;
  }
  friend bool operator<(const Term& a, const Term& b) {
    if (a.kind != b.kind) return a.kind < b.kind;
    switch (a.kind) {
      case Kind::Entity: return a.entity < b.entity;
      case Kind::Number: return a.number < b.number;
      case Kind::String: return a.text < b.text;
    }
    return false;
  }
};

struct Triple {
  int subject = -1;
  int relation = -1;
  Term object;

  friend bool operator==(const Triple&, const Triple&) = default;
  friend bool operator<(const Triple& a, const Triple& b) {
    if (a.subject != b.subject) return a.subject < b.subject;
    if (a.relation != b.relation) return a.relation < b.relation;
    return a.object < b.object;
  }
};

class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& what, int line)
      : std::runtime_error(what + " (line " + std::to_string(line) + ")"), line_(line) {}
  int line() const { return line_; }

 private:
  int line_ = 0;
};

/// In-memory triple set with interned entities/relations and lookup indexes.
/// Immutable once loaded; concurrent read-only use is safe.
class KnowledgeBase {
 public:
  static constexpr std::string_view kTypeRelation = "rdf:type";

  int intern_entity(const std::string& name);
  int intern_relation(const std::string& name);
  std::optional<int> entity_id(std::string_view name) const;
  std::optional<int> relation_id(std::string_view name) const;
  const std::string& entity_name(int id) const { return entity_names_.at(static_cast<size_t>(id)); }
  const std::string& relation_name(int id) const {
    return relation_names_.at(static_cast<size_t>(id));
  }

  /// Adds a triple (set semantics). `object_raw` follows the TSV typing
  /// rules: numeric-looking strings become numbers, quoted strings become
  /// string literals, everything else is an entity.
  void add_triple(const std::string& subject, const std::string& relation,
                  const std::string& object_raw);
  void add_triple(const std::string& subject, const std::string& relation, Term object);

  const std::vector<Triple>& triples() const { return triples_; }
  size_t size() const { return triples_.size(); }
  int entity_count() const { return static_cast<int>(entity_names_.size()); }
  int relation_count() const { return static_cast<int>(relation_names_.size()); }

  /// Every entity id seen in subject or object position (type ids included).
  const std::vector<int>& entity_universe() const { return universe_; }
  /// All relation ids, ascending.
  std::vector<int> relations() const;

  const std::vector<Term>& objects_of(int subject, int relation) const;
  const std::vector<int>& subjects_of(int relation, const Term& object) const;
  const std::vector<int>& relations_between(int subject, const Term& object) const;
  /// Indices into triples() for all triples with the given relation.
  const std::vector<int>& triples_with(int relation) const;

  /// Serializes as sorted TSV, loadable by load_triples.
  void save(const std::filesystem::path& path) const;

 private:
  std::map<std::string, int, std::less<>> entity_ids_;
  std::vector<std::string> entity_names_;
  std::map<std::string, int, std::less<>> relation_ids_;
  std::vector<std::string> relation_names_;

  std::vector<Triple> triples_;
  std::map<std::pair<int, int>, std::vector<Term>> by_subject_relation_;
  std::map<std::pair<int, Term>, std::vector<int>> by_relation_object_;
  std::map<std::pair<int, Term>, std::vector<int>> by_subject_object_;
  std::map<int, std::vector<int>> by_relation_;
  std::vector<int> universe_;
  std::vector<char> in_universe_;

  void note_entity_use(int id);
};

/// Loads a UTF-8 TSV file, one `s<TAB>p<TAB>o` triple per line. Duplicate
/// rows collapse; parse failures report the line number.
KnowledgeBase load_triples(const std::filesystem::path& path);

/// A fully instantiated query graph: every edge carries an instance and
/// every Rel edge a direction.
using GroundedQuery = QueryGraph;

/// Evaluates a grounded query: joins the Rel/Isa patterns, applies Cmp,
/// Ord and Cnt constraints, and projects the distinct values of the answer
/// variable. Returns a sorted, duplicate-free answer list.
std::vector<Term> execute(const GroundedQuery& query, const KnowledgeBase& kb);

/// Relations r such that substituting r for the single wildcard Rel edge
/// (instance absent) makes the query execute nonempty. Ascending ids.
std::vector<int> relation_candidates(const GroundedQuery& pattern, const KnowledgeBase& kb);

/// Human-readable SPARQL-shaped text for debugging; no parser exists.
std::string to_sparql(const GroundedQuery& query);

/// Display form of an answer: entity name, shortest-round-trip number,
/// or raw string text.
std::string term_to_string(const Term& t, const KnowledgeBase& kb);

}  // namespace aqgen
