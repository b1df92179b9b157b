#include "aqgen/synth.hpp"

#include <algorithm>
#include <set>
#include <sstream>

#include "aqgen/rng.hpp"
#include "aqgen/text.hpp"

namespace aqgen {

nlohmann::json SynthSpec::to_json() const {
  nlohmann::json levels = nlohmann::json::object();
  for (auto [level, weight] : level_weights) levels[std::to_string(level)] = weight;
  return {{"entities", entities}, {"relations", relations}, {"types", types},
          {"triples", triples},   {"train", train},         {"dev", dev},
          {"test", test},         {"levels", levels},       {"seed", seed}};
}

SynthSpec SynthSpec::from_json(const nlohmann::json& j) {
  SynthSpec s;
  if (j.contains("entities")) s.entities = j.at("entities").get<int>();
  if (j.contains("relations")) s.relations = j.at("relations").get<int>();
  if (j.contains("types")) s.types = j.at("types").get<int>();
  if (j.contains("triples")) s.triples = j.at("triples").get<int>();
  if (j.contains("train")) s.train = j.at("train").get<int>();
  if (j.contains("dev")) s.dev = j.at("dev").get<int>();
  if (j.contains("test")) s.test = j.at("test").get<int>();
  if (j.contains("seed")) s.seed = j.at("seed").get<uint64_t>();
  if (j.contains("levels")) {
    s.level_weights.clear();
    for (const auto& [key, value] : j.at("levels").items())
      s.level_weights[std::stoi(key)] = value.get<double>();
  }
  return s;
}

namespace {

const char* kAdjectives[] = {"silver",  "golden",  "crimson", "azure",   "emerald", "ivory",
                             "cobalt",  "amber",   "scarlet", "onyx",    "jade",    "coral",
                             "pearl",   "ruby",    "topaz",   "bronze",  "copper",  "iron",
                             "maple",   "cedar",   "willow",  "aspen",   "slate",   "mossy"};
const char* kNouns[] = {"falcon",  "castle",  "river",   "harbor",  "engine",  "garden",
                        "temple",  "bridge",  "tower",   "meadow",  "canyon",  "summit",
                        "lantern", "archive", "forge",   "vineyard", "quarry", "mill",
                        "depot",   "atlas",   "beacon",  "citadel", "orchard", "grove"};
const char* kEntityRelations[] = {"supplies", "mentors", "rivals",   "borders",  "founded",
                                  "leads",    "owns",    "sponsors", "supports", "follows",
                                  "precedes", "contains", "employs", "honors",   "guards",
                                  "serves",   "oversees", "inspects", "escorts",  "hosts"};
const char* kNumericRelations[] = {"score",    "height", "budget", "rating", "capacity",
                                   "age",      "weight", "length", "depth",  "output"};
const char* kTypes[] = {"city",    "person",  "company",  "landmark", "vessel",
                        "creature", "institute", "festival", "artifact", "league"};

template <size_t N>
std::string pool_name(const char* (&pool)[N], int index) {
  int base = static_cast<int>(N);
  if (index < base) return pool[index];
  return std::string(pool[index % base]) + "_" + std::to_string(index / base + 1);
}

std::string entity_name(int index) {
  int a = static_cast<int>(sizeof(kAdjectives) / sizeof(kAdjectives[0]));
  int n = static_cast<int>(sizeof(kNouns) / sizeof(kNouns[0]));
  int combos = a * n;
  std::string name =
      std::string(kAdjectives[(index / n) % a]) + "_" + kNouns[index % n];
  if (index >= combos) name += "_" + std::to_string(index / combos + 1);
  return name;
}

/// Tokens of a name plus the [begin, end) span they will occupy when
/// appended at position `at`.
struct Phrase {
  std::vector<std::string> tokens;
};

Phrase phrase_of(const std::string& name) { return {split_name(name)}; }

struct QuestionBuilder {
  std::vector<std::string> tokens;
  std::vector<Mention> mentions;

  void words(std::initializer_list<const char*> ws) {
    for (const char* w : ws) tokens.emplace_back(w);
  }
  void name(const std::string& n) {
    for (auto& t : phrase_of(n).tokens) tokens.push_back(t);
  }
  void entity_mention(const std::string& n) {
    Mention m;
    m.begin = static_cast<int>(tokens.size());
    name(n);
    m.end = static_cast<int>(tokens.size());
    m.kind = MentionKind::Entity;
    m.text = n;
    mentions.push_back(std::move(m));
  }
  void number_mention(double value) {
    Mention m;
    m.begin = static_cast<int>(tokens.size());
    tokens.push_back(number_to_string(value));
    m.end = static_cast<int>(tokens.size());
    m.kind = MentionKind::Number;
    m.text = number_to_string(value);
    mentions.push_back(std::move(m));
  }
  std::string text() const {
    std::string out;
    for (size_t i = 0; i < tokens.size(); ++i) {
      if (i) out += ' ';
      out += tokens[i];
    }
    return out;
  }
};

struct Generator {
  const SynthSpec& spec;
  KnowledgeBase kb;
  Rng rng;

  std::vector<std::string> entity_names;
  std::vector<std::string> type_names;
  std::vector<std::string> entity_rel_names;
  std::vector<std::string> numeric_rel_names;
  std::map<std::string, std::string> type_of;  // entity -> type name

  // Sampling pools rebuilt after the KB is populated.
  struct EntityTriple {
    std::string s, r, o;
  };
  struct NumericTriple {
    std::string s, r;
    double value;
  };
  std::vector<EntityTriple> entity_triples;
  std::vector<NumericTriple> numeric_triples;
  std::map<std::string, std::vector<int>> entity_triples_by_subject;
  std::map<std::string, std::vector<int>> numeric_triples_by_subject;

  explicit Generator(const SynthSpec& s) : spec(s), rng(derive_seed(s.seed, 0x5EED)) {}

  void build_kb() {
    if (spec.entities < 4 || spec.relations < 2 || spec.types < 1 || spec.triples < 8)
      throw SynthError("spec too small to generate meaningful questions");

    for (int i = 0; i < spec.entities; ++i) entity_names.push_back(entity_name(i));
    for (int i = 0; i < spec.types; ++i) type_names.push_back(pool_name(kTypes, i));

    int numeric_count = std::max(1, spec.relations / 3);
    int entity_count = spec.relations - numeric_count;
    if (entity_count < 1) throw SynthError("spec needs at least one entity-valued relation");
    for (int i = 0; i < entity_count; ++i)
      entity_rel_names.push_back(pool_name(kEntityRelations, i));
    for (int i = 0; i < numeric_count; ++i)
      numeric_rel_names.push_back(pool_name(kNumericRelations, i));

    for (const std::string& e : entity_names) {
      const std::string& t = type_names[static_cast<size_t>(rng.below(spec.types))];
      kb.add_triple(e, std::string(KnowledgeBase::kTypeRelation), t);
      type_of[e] = t;
    }

    int added = 0;
    int attempts = 0;
    while (added < spec.triples && attempts < spec.triples * 20) {
      ++attempts;
      size_t before = kb.size();
      // Roughly a third of the relational triples carry numeric objects.
      if (rng.below(3) == 0) {
        const std::string& s = rng.pick(entity_names);
        const std::string& r = rng.pick(numeric_rel_names);
        double value = static_cast<double>(rng.range(1, 40));
        if (rng.chance(0.25)) value += 0.5;
        kb.add_triple(s, r, Term::make_number(value));
      } else {
        const std::string& s = rng.pick(entity_names);
        const std::string& o = rng.pick(entity_names);
        if (s == o) continue;
        const std::string& r = rng.pick(entity_rel_names);
        kb.add_triple(s, r, Term::make_entity(kb.intern_entity(o)));
      }
      if (kb.size() > before) ++added;
    }

    for (const Triple& t : kb.triples()) {
      const std::string& r = kb.relation_name(t.relation);
      if (r == KnowledgeBase::kTypeRelation) continue;
      const std::string& s = kb.entity_name(t.subject);
      if (t.object.is_entity()) {
        entity_triples.push_back({s, r, kb.entity_name(t.object.entity)});
        entity_triples_by_subject[s].push_back(static_cast<int>(entity_triples.size()) - 1);
      } else if (t.object.is_number()) {
        numeric_triples.push_back({s, r, t.object.number});
        numeric_triples_by_subject[s].push_back(static_cast<int>(numeric_triples.size()) - 1);
      }
    }
    if (entity_triples.empty()) throw SynthError("no entity-valued triples were generated");
  }

  std::string distractor_entity(const std::string& avoid) {
    for (int tries = 0; tries < 50; ++tries) {
      const std::string& candidate = rng.pick(entity_names);
      if (candidate != avoid) return candidate;
    }
    return entity_names.front();
  }

  std::vector<std::string> entity_candidates(const std::string& gold) {
    std::vector<std::string> c{gold};
    int extra = rng.range(1, 2);
    for (int i = 0; i < extra; ++i) c.push_back(distractor_entity(gold));
    return c;
  }

  std::vector<std::string> type_candidates(const std::string& gold) {
    std::vector<std::string> c{gold};
    if (type_names.size() > 1 && rng.chance(0.5)) {
      for (int tries = 0; tries < 20; ++tries) {
        const std::string& candidate = rng.pick(type_names);
        if (candidate != gold) {
          c.push_back(candidate);
          break;
        }
      }
    }
    return c;
  }

  // --- templates; each returns false when no supporting structure exists

  bool make_chain1(DatasetRecord& r) {
    const EntityTriple& t = rng.pick(entity_triples);
    QuestionBuilder q;
    bool forward = rng.chance(0.5);
    if (forward) {
      // answers = objects of (s, rel, ?v0)
      q.words({"what", "is", "the"});
      q.name(t.r);
      q.words({"of"});
      q.entity_mention(t.s);
      int v0 = r.gold_query.add_vertex(VertexClass::Var, "?v0");
      int ent = r.gold_query.add_vertex(VertexClass::Ent, t.s);
      r.gold_query.add_edge(EdgeClass::Rel, t.r, v0, ent, EdgeDir::VToU);
      r.linking.entities.push_back(entity_candidates(t.s));
    } else {
      q.words({"who"});
      q.name(t.r);
      q.entity_mention(t.o);
      int v0 = r.gold_query.add_vertex(VertexClass::Var, "?v0");
      int ent = r.gold_query.add_vertex(VertexClass::Ent, t.o);
      r.gold_query.add_edge(EdgeClass::Rel, t.r, v0, ent, EdgeDir::UToV);
      r.linking.entities.push_back(entity_candidates(t.o));
    }
    r.question = q.text();
    r.mentions = q.mentions;
    return true;
  }

  bool make_chain2(DatasetRecord& r) {
    for (int tries = 0; tries < 60; ++tries) {
      const EntityTriple& first = rng.pick(entity_triples);
      auto it = entity_triples_by_subject.find(first.o);
      if (it == entity_triples_by_subject.end()) continue;
      const EntityTriple& second =
          entity_triples[static_cast<size_t>(rng.pick(it->second))];
      QuestionBuilder q;
      q.words({"what", "is", "the"});
      q.name(second.r);
      q.words({"of", "the"});
      q.name(first.r);
      q.words({"of"});
      q.entity_mention(first.s);
      int v0 = r.gold_query.add_vertex(VertexClass::Var, "?v0");
      int v1 = r.gold_query.add_vertex(VertexClass::Var, "?v1");
      int ent = r.gold_query.add_vertex(VertexClass::Ent, first.s);
      r.gold_query.add_edge(EdgeClass::Rel, second.r, v0, v1, EdgeDir::VToU);
      r.gold_query.add_edge(EdgeClass::Rel, first.r, v1, ent, EdgeDir::VToU);
      r.linking.entities.push_back(entity_candidates(first.s));
      r.question = q.text();
      r.mentions = q.mentions;
      return true;
    }
    return false;
  }

  bool make_typed(DatasetRecord& r) {
    const EntityTriple& t = rng.pick(entity_triples);
    const std::string& gold_type = type_of.at(t.s);
    QuestionBuilder q;
    q.words({"which"});
    q.name(gold_type);
    q.name(t.r);
    q.entity_mention(t.o);
    int v0 = r.gold_query.add_vertex(VertexClass::Var, "?v0");
    int ent = r.gold_query.add_vertex(VertexClass::Ent, t.o);
    int ty = r.gold_query.add_vertex(VertexClass::Type, gold_type);
    r.gold_query.add_edge(EdgeClass::Rel, t.r, v0, ent, EdgeDir::UToV);
    r.gold_query.add_edge(EdgeClass::Isa, std::string(KnowledgeBase::kTypeRelation), v0, ty,
                          EdgeDir::None);
    r.linking.entities.push_back(entity_candidates(t.o));
    r.linking.types = type_candidates(gold_type);
    r.question = q.text();
    r.mentions = q.mentions;
    return true;
  }

  bool make_count(DatasetRecord& r) {
    const EntityTriple& t = rng.pick(entity_triples);
    QuestionBuilder q;
    q.words({"how", "many", "things"});
    q.name(t.r);
    q.entity_mention(t.o);
    int v0 = r.gold_query.add_vertex(VertexClass::Var, "?v0");
    int v1 = r.gold_query.add_vertex(VertexClass::Var, "?v1");
    int ent = r.gold_query.add_vertex(VertexClass::Ent, t.o);
    r.gold_query.add_edge(EdgeClass::Cnt, "count", v1, v0, EdgeDir::None);
    r.gold_query.add_edge(EdgeClass::Rel, t.r, v1, ent, EdgeDir::UToV);
    r.linking.entities.push_back(entity_candidates(t.o));
    r.question = q.text();
    r.mentions = q.mentions;
    return true;
  }

  bool make_star2(DatasetRecord& r) {
    for (int tries = 0; tries < 60; ++tries) {
      const EntityTriple& first = rng.pick(entity_triples);
      auto it = entity_triples_by_subject.find(first.s);
      if (it == entity_triples_by_subject.end() || it->second.size() < 2) continue;
      const EntityTriple& second =
          entity_triples[static_cast<size_t>(rng.pick(it->second))];
      if (second.r == first.r && second.o == first.o) continue;
      if (second.o == first.o) continue;  // two mentions must differ
      QuestionBuilder q;
      q.words({"who"});
      q.name(first.r);
      q.entity_mention(first.o);
      q.words({"and"});
      q.name(second.r);
      q.entity_mention(second.o);
      int v0 = r.gold_query.add_vertex(VertexClass::Var, "?v0");
      int e1 = r.gold_query.add_vertex(VertexClass::Ent, first.o);
      int e2 = r.gold_query.add_vertex(VertexClass::Ent, second.o);
      r.gold_query.add_edge(EdgeClass::Rel, first.r, v0, e1, EdgeDir::UToV);
      r.gold_query.add_edge(EdgeClass::Rel, second.r, v0, e2, EdgeDir::UToV);
      r.linking.entities.push_back(entity_candidates(first.o));
      r.linking.entities.push_back(entity_candidates(second.o));
      r.question = q.text();
      r.mentions = q.mentions;
      return true;
    }
    return false;
  }

  bool make_compare(DatasetRecord& r) {
    if (numeric_triples.empty()) return false;
    for (int tries = 0; tries < 60; ++tries) {
      const EntityTriple& anchor = rng.pick(entity_triples);
      auto it = numeric_triples_by_subject.find(anchor.s);
      if (it == numeric_triples_by_subject.end()) continue;
      const NumericTriple& numeric =
          numeric_triples[static_cast<size_t>(rng.pick(it->second))];
      int op_pick = rng.below(3);
      const char* op = op_pick == 0 ? ">" : op_pick == 1 ? "<" : "=";
      double k = numeric.value;
      if (op_pick == 0) k = std::max(0.0, numeric.value - static_cast<double>(rng.range(1, 3)));
      if (op_pick == 1) k = numeric.value + static_cast<double>(rng.range(1, 3));
      QuestionBuilder q;
      q.words({"which", "one"});
      q.name(anchor.r);
      q.entity_mention(anchor.o);
      q.words({"and", "has"});
      q.name(numeric.r);
      if (op_pick == 0) q.words({"greater", "than"});
      if (op_pick == 1) q.words({"less", "than"});
      if (op_pick == 2) q.words({"equal", "to"});
      q.number_mention(k);
      int v0 = r.gold_query.add_vertex(VertexClass::Var, "?v0");
      int ent = r.gold_query.add_vertex(VertexClass::Ent, anchor.o);
      int v1 = r.gold_query.add_vertex(VertexClass::Var, "?v1");
      int num = r.gold_query.add_vertex(VertexClass::Num, number_to_string(k));
      r.gold_query.add_edge(EdgeClass::Rel, anchor.r, v0, ent, EdgeDir::UToV);
      r.gold_query.add_edge(EdgeClass::Rel, numeric.r, v0, v1, EdgeDir::UToV);
      r.gold_query.add_edge(EdgeClass::Cmp, op, v1, num, EdgeDir::None);
      r.linking.entities.push_back(entity_candidates(anchor.o));
      r.linking.numbers.push_back(k);
      r.question = q.text();
      r.mentions = q.mentions;
      return true;
    }
    return false;
  }

  bool make_ordinal(DatasetRecord& r) {
    if (numeric_triples.empty()) return false;
    for (int tries = 0; tries < 60; ++tries) {
      const EntityTriple& anchor = rng.pick(entity_triples);
      const std::string& numeric_rel = rng.pick(numeric_rel_names);
      auto numeric_rel_id = kb.relation_id(numeric_rel);
      if (!numeric_rel_id) continue;  // relation never realized in the KB
      // Distinct numeric values over the group sharing (rel, object).
      auto group = kb.subjects_of(*kb.relation_id(anchor.r),
                                  Term::make_entity(*kb.entity_id(anchor.o)));
      std::set<double> values;
      for (int s : group)
        for (const Term& v : kb.objects_of(s, *numeric_rel_id))
          if (v.is_number()) values.insert(v.number);
      if (values.empty()) continue;
      int n = rng.range(1, std::min(3, static_cast<int>(values.size())));
      bool use_max = rng.chance(0.5);
      QuestionBuilder q;
      q.words({"among", "those", "that"});
      q.name(anchor.r);
      q.entity_mention(anchor.o);
      q.words({"which", "is", "rank"});
      q.number_mention(static_cast<double>(n));
      q.words({"by"});
      q.words({use_max ? "highest" : "lowest"});
      q.name(numeric_rel);
      int v0 = r.gold_query.add_vertex(VertexClass::Var, "?v0");
      int ent = r.gold_query.add_vertex(VertexClass::Ent, anchor.o);
      int v1 = r.gold_query.add_vertex(VertexClass::Var, "?v1");
      int num = r.gold_query.add_vertex(VertexClass::Num, number_to_string(n));
      r.gold_query.add_edge(EdgeClass::Rel, anchor.r, v0, ent, EdgeDir::UToV);
      r.gold_query.add_edge(EdgeClass::Rel, numeric_rel, v0, v1, EdgeDir::UToV);
      r.gold_query.add_edge(EdgeClass::Ord, use_max ? "max_at_n" : "min_at_n", v1, num,
                            EdgeDir::None);
      r.linking.entities.push_back(entity_candidates(anchor.o));
      r.linking.numbers.push_back(static_cast<double>(n));
      r.question = q.text();
      r.mentions = q.mentions;
      return true;
    }
    return false;
  }

  bool make_typed_compare(DatasetRecord& r) {
    if (numeric_triples.empty()) return false;
    for (int tries = 0; tries < 60; ++tries) {
      const EntityTriple& anchor = rng.pick(entity_triples);
      auto it = numeric_triples_by_subject.find(anchor.s);
      if (it == numeric_triples_by_subject.end()) continue;
      const NumericTriple& numeric =
          numeric_triples[static_cast<size_t>(rng.pick(it->second))];
      const std::string& gold_type = type_of.at(anchor.s);
      double k = std::max(0.0, numeric.value - static_cast<double>(rng.range(1, 3)));
      QuestionBuilder q;
      q.words({"which"});
      q.name(gold_type);
      q.name(anchor.r);
      q.entity_mention(anchor.o);
      q.words({"and", "has"});
      q.name(numeric.r);
      q.words({"greater", "than"});
      q.number_mention(k);
      int v0 = r.gold_query.add_vertex(VertexClass::Var, "?v0");
      int ent = r.gold_query.add_vertex(VertexClass::Ent, anchor.o);
      int ty = r.gold_query.add_vertex(VertexClass::Type, gold_type);
      int v1 = r.gold_query.add_vertex(VertexClass::Var, "?v1");
      int num = r.gold_query.add_vertex(VertexClass::Num, number_to_string(k));
      r.gold_query.add_edge(EdgeClass::Rel, anchor.r, v0, ent, EdgeDir::UToV);
      r.gold_query.add_edge(EdgeClass::Isa, std::string(KnowledgeBase::kTypeRelation), v0, ty,
                            EdgeDir::None);
      r.gold_query.add_edge(EdgeClass::Rel, numeric.r, v0, v1, EdgeDir::UToV);
      r.gold_query.add_edge(EdgeClass::Cmp, ">", v1, num, EdgeDir::None);
      r.linking.entities.push_back(entity_candidates(anchor.o));
      r.linking.types = type_candidates(gold_type);
      r.linking.numbers.push_back(k);
      r.question = q.text();
      r.mentions = q.mentions;
      return true;
    }
    return false;
  }

  bool make_record_at_level(DatasetRecord& r, int level) {
    switch (level) {
      case 1: return make_chain1(r);
      case 2: {
        int pick = rng.below(3);
        if (pick == 0) return make_chain2(r);
        if (pick == 1) return make_typed(r);
        return make_count(r);
      }
      case 3: {
        int pick = rng.below(3);
        if (pick == 0) return make_star2(r);
        if (pick == 1) return make_compare(r);
        return make_ordinal(r);
      }
      case 4: return make_typed_compare(r);
      default: throw SynthError("unsupported complexity level " + std::to_string(level));
    }
  }

  int sample_level() {
    double total = 0.0;
    for (auto [level, weight] : spec.level_weights) total += weight;
    if (total <= 0.0) throw SynthError("level weights sum to zero");
    double x = rng.uniform() * total;
    for (auto [level, weight] : spec.level_weights) {
      x -= weight;
      if (x < 0.0) return level;
    }
    return spec.level_weights.rbegin()->first;
  }

  DatasetRecord make_record(int index) {
    for (int attempt = 0; attempt < 300; ++attempt) {
      int level = sample_level();
      DatasetRecord r;
      char id[16];
      std::snprintf(id, sizeof(id), "q%05d", index);
      r.id = id;
      if (!make_record_at_level(r, level)) continue;
      if (TreeCheck c = validate_query_graph(r.gold_query); !c.ok)
        throw SynthError("generated gold query is invalid: " + c.detail);
      std::vector<Term> answers = execute(r.gold_query, kb);
      if (answers.empty()) continue;  // sampled structure did not survive constraints
      for (const Term& t : answers) r.gold_answers.push_back(term_to_string(t, kb));
      return r;
    }
    throw SynthError("spec infeasible: could not realize a question after 300 attempts");
  }
};

}  // namespace

SynthOutput synth_generate(const SynthSpec& spec) {
  bool needs_numeric = false;
  for (auto [level, weight] : spec.level_weights)
    if (level >= 3 && weight > 0.0) needs_numeric = true;
  if (needs_numeric && std::max(1, spec.relations / 3) < 1)
    throw SynthError("spec infeasible: comparison/ordinal levels need numeric relations");

  Generator gen(spec);
  gen.build_kb();

  SynthOutput out;
  int index = 0;
  for (int i = 0; i < spec.train; ++i) out.train.push_back(gen.make_record(index++));
  for (int i = 0; i < spec.dev; ++i) out.dev.push_back(gen.make_record(index++));
  for (int i = 0; i < spec.test; ++i) out.test.push_back(gen.make_record(index++));
  out.kb = std::move(gen.kb);
  return out;
}

}  // namespace aqgen
