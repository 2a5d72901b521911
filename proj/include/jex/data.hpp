#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "jex/common.hpp"
#include "jex/crf.hpp"
#include "jex/masks.hpp"

namespace jex {

enum class EntityType : int64_t { Negation = 0, BodyPart, Degree, Quantifier, Location };
inline constexpr int64_t kNumEntityTypes = 5;

enum class RelationType : int64_t { Negative = 0, Modifier, Position, Percentage, NoRelation };
inline constexpr int64_t kNumRelationTypes = 5;

// Classifier label space: relation type with the direction folded in.
// "Fwd" points from the earlier entity in text order to the later one,
// "Rev" the other way. Negative and Modifier only occur Rev, Position only
// Fwd, Percentage both ways.
enum class RelationLabel : int64_t {
    NoRelation = 0,
    NegativeRev,
    ModifierRev,
    PositionFwd,
    PercentageFwd,
    PercentageRev,
};
inline constexpr int64_t kNumRelationLabels = 6;

std::string entity_type_name(EntityType t);
EntityType entity_type_from_name(const std::string& name);
std::string relation_type_name(RelationType t);
RelationType relation_type_from_name(const std::string& name);
std::string relation_label_name(RelationLabel l);

struct EntitySpan {
    int64_t start = 0;  // inclusive, in characters
    int64_t end = 0;    // exclusive
    EntityType type = EntityType::Negation;
    bool operator==(const EntitySpan&) const = default;
    bool operator<(const EntitySpan& o) const {
        return std::tie(start, end, type) < std::tie(o.start, o.end, o.type);
    }
};

// Directed relation between two annotated entities: the arrow points from
// head to tail.
struct RelationTriple {
    int64_t head = 0;
    int64_t tail = 0;
    RelationType type = RelationType::Negative;
    bool operator==(const RelationTriple&) const = default;
};

struct Document {
    std::vector<std::string> chars;  // one UTF-8 codepoint per token
    std::vector<EntitySpan> entities;
    std::vector<RelationTriple> relations;

    std::string text() const;

    // Bounds, non-overlap, valid entity references, and schema-consistent
    // relation directions; throws AnnotationError on violation.
    void validate() const;
};

// Splits a UTF-8 string into codepoint tokens.
std::vector<std::string> utf8_chars(const std::string& text);

class Vocab {
public:
    static constexpr int64_t kPad = 0;
    static constexpr int64_t kCls = 1;
    static constexpr int64_t kSep = 2;
    static constexpr int64_t kUnk = 3;

    static Vocab build(const std::vector<Document>& docs);

    int64_t id(const std::string& ch) const;  // kUnk for unseen characters
    int64_t size() const { return static_cast<int64_t>(tokens_.size()); }
    const std::string& token(int64_t id) const { return tokens_.at(static_cast<size_t>(id)); }

    // [CLS] + character ids + [SEP]
    std::vector<int64_t> encode_sentence(const std::vector<std::string>& chars) const;

    std::vector<std::string> tokens_list() const { return tokens_; }
    static Vocab from_tokens(std::vector<std::string> tokens);

private:
    std::vector<std::string> tokens_;
    std::unordered_map<std::string, int64_t> ids_;
};

// --- BIEOS tagging ------------------------------------------------------

// O plus {B,I,E,S} per entity type.
int64_t n_ner_tags();
int64_t bieos_tag(EntityType type, char role);  // role one of B I E S
std::string tag_name(int64_t tag);

// Single-character entities tag S, longer ones B I* E, everything else O.
TagSequence encode_bieos(const std::vector<EntitySpan>& entities, int64_t length);

// Total inverse: exact on well-formed input; ill-formed fragments are
// dropped (strict repair), so only maximal B..E runs and S tags survive.
std::vector<EntitySpan> decode_bieos(const TagSequence& tags);

// --- relation-classification instances ----------------------------------

struct RcInstance {
    std::vector<int64_t> token_ids;  // with specials
    PositionSet positions;           // token positions (offset by the leading special)
    RelationLabel gold = RelationLabel::NoRelation;
    int64_t first_entity = -1;   // index into the source span list
    int64_t second_entity = -1;
};

// Directed gold label for the entity pair (first, second) given in text
// order; NoRelation when the document has no triple between them.
RelationLabel gold_label_for_pair(const Document& doc, int64_t first, int64_t second);

RcInstance make_rc_instance(const std::vector<std::string>& chars, const Vocab& vocab,
                            const EntitySpan& first, const EntitySpan& second, RelationLabel gold);

// One instance per unordered entity pair in canonical text order. During
// training, NoRelation pairs are kept with probability keep_rate.
std::vector<RcInstance> build_rc_instances(const Document& doc, const Vocab& vocab, bool training,
                                           double keep_rate, Rng& rng);

// --- splits --------------------------------------------------------------

struct Splits {
    std::vector<Document> train, dev, test;
};

// Document-level 8:1:1 split: floor(0.8n) / floor(0.1n) / remainder.
Splits split_dataset(std::vector<Document> docs, uint64_t seed);

// --- synthetic corpus ----------------------------------------------------

struct GeneratorConfig {
    // template mix; normalized internally
    double w_profile = 0.3;    // site + location + degree + quantity
    double w_pct_rev = 0.2;    // quantity before its degree
    double w_negation = 0.3;   // site + location + negated degree
    double w_two_sites = 0.2;  // two unrelated site/location groups
    int64_t min_filler = 1;    // filler words per gap
    int64_t max_filler = 2;

    void validate() const;

    // marginal distribution over true relation types implied by the mix
    std::map<RelationType, double> expected_relation_proportions() const;
};

std::vector<Document> generate_synthetic_corpus(int64_t n_docs, uint64_t seed,
                                                const GeneratorConfig& config = {});

// --- wire format ----------------------------------------------------------

// One document per line: {"text": ..., "entities": [[start,end,type]...],
// "relations": [[head,tail,type]...]}, UTF-8.
std::string document_to_json(const Document& doc);
Document document_from_json(const std::string& line);
void save_documents(const std::string& path, const std::vector<Document>& docs);
std::vector<Document> load_documents(const std::string& path);

}  // namespace jex
