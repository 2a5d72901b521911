#include "jex/data.hpp"

#include <json.hpp>

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

namespace jex {

using nlohmann::json;

std::string entity_type_name(EntityType t) {
    switch (t) {
        case EntityType::Negation: return "Negation";
        case EntityType::BodyPart: return "BodyPart";
        case EntityType::Degree: return "Degree";
        case EntityType::Quantifier: return "Quantifier";
        case EntityType::Location: return "Location";
    }
    throw DataError("unknown entity type");
}

EntityType entity_type_from_name(const std::string& name) {
    for (int64_t i = 0; i < kNumEntityTypes; ++i)
        if (entity_type_name(static_cast<EntityType>(i)) == name)
            return static_cast<EntityType>(i);
    throw DataError("unknown entity type '" + name + "'");
}

std::string relation_type_name(RelationType t) {
    switch (t) {
        case RelationType::Negative: return "Negative";
        case RelationType::Modifier: return "Modifier";
        case RelationType::Position: return "Position";
        case RelationType::Percentage: return "Percentage";
        case RelationType::NoRelation: return "NoRelation";
    }
    throw DataError("unknown relation type");
}

RelationType relation_type_from_name(const std::string& name) {
    for (int64_t i = 0; i < kNumRelationTypes; ++i)
        if (relation_type_name(static_cast<RelationType>(i)) == name)
            return static_cast<RelationType>(i);
    throw DataError("unknown relation type '" + name + "'");
}

std::string relation_label_name(RelationLabel l) {
    switch (l) {
        case RelationLabel::NoRelation: return "NoRelation";
        case RelationLabel::NegativeRev: return "Negative<-";
        case RelationLabel::ModifierRev: return "Modifier<-";
        case RelationLabel::PositionFwd: return "Position->";
        case RelationLabel::PercentageFwd: return "Percentage->";
        case RelationLabel::PercentageRev: return "Percentage<-";
    }
    throw DataError("unknown relation label");
}

std::string Document::text() const {
    std::string out;
    for (const std::string& c : chars) out += c;
    return out;
}

void Document::validate() const {
    const int64_t len = static_cast<int64_t>(chars.size());
    for (const EntitySpan& e : entities) {
        if (e.start < 0 || e.end > len || e.start >= e.end)
            throw AnnotationError("entity span [" + std::to_string(e.start) + "," +
                                  std::to_string(e.end) + ") invalid for length " +
                                  std::to_string(len));
    }
    std::vector<EntitySpan> sorted = entities;
    std::sort(sorted.begin(), sorted.end());
    for (size_t i = 1; i < sorted.size(); ++i)
        if (sorted[i].start < sorted[i - 1].end)
            throw AnnotationError("overlapping entity spans at " + std::to_string(sorted[i].start));

    const int64_t n = static_cast<int64_t>(entities.size());
    for (const RelationTriple& r : relations) {
        if (r.head < 0 || r.head >= n || r.tail < 0 || r.tail >= n)
            throw AnnotationError("relation endpoint out of range");
        if (r.head == r.tail) throw AnnotationError("relation with identical endpoints");
        const bool head_earlier =
            entities[static_cast<size_t>(r.head)].start < entities[static_cast<size_t>(r.tail)].start;
        switch (r.type) {
            case RelationType::Negative:
            case RelationType::Modifier:
                if (head_earlier)
                    throw AnnotationError(relation_type_name(r.type) +
                                          " must point from the later entity to the earlier");
                break;
            case RelationType::Position:
                if (!head_earlier)
                    throw AnnotationError("Position must point from the earlier entity to the later");
                break;
            case RelationType::Percentage:
            case RelationType::NoRelation:
                break;
        }
    }
}

std::vector<std::string> utf8_chars(const std::string& text) {
    std::vector<std::string> out;
    size_t i = 0;
    while (i < text.size()) {
        const unsigned char b = static_cast<unsigned char>(text[i]);
        size_t len = 1;
        if (b >= 0xF0)
            len = 4;
        else if (b >= 0xE0)
            len = 3;
        else if (b >= 0xC0)
            len = 2;
        else if (b >= 0x80)
            throw DataError("invalid UTF-8 continuation byte at offset " + std::to_string(i));
        if (i + len > text.size()) throw DataError("truncated UTF-8 sequence");
        out.push_back(text.substr(i, len));
        i += len;
    }
    return out;
}

Vocab Vocab::build(const std::vector<Document>& docs) {
    std::set<std::string> seen;
    for (const Document& d : docs)
        for (const std::string& c : d.chars) seen.insert(c);
    std::vector<std::string> tokens = {"[PAD]", "[CLS]", "[SEP]", "[UNK]"};
    tokens.insert(tokens.end(), seen.begin(), seen.end());
    return from_tokens(std::move(tokens));
}

Vocab Vocab::from_tokens(std::vector<std::string> tokens) {
    Vocab v;
    v.tokens_ = std::move(tokens);
    if (v.tokens_.size() < 4 || v.tokens_[0] != "[PAD]" || v.tokens_[1] != "[CLS]" ||
        v.tokens_[2] != "[SEP]" || v.tokens_[3] != "[UNK]")
        throw DataError("vocab must start with the four reserved tokens");
    for (size_t i = 0; i < v.tokens_.size(); ++i) {
        if (!v.ids_.emplace(v.tokens_[i], static_cast<int64_t>(i)).second)
            throw DataError("duplicate vocab token '" + v.tokens_[i] + "'");
    }
    return v;
}

int64_t Vocab::id(const std::string& ch) const {
    auto it = ids_.find(ch);
    return it == ids_.end() ? kUnk : it->second;
}

std::vector<int64_t> Vocab::encode_sentence(const std::vector<std::string>& chars) const {
    std::vector<int64_t> ids;
    ids.reserve(chars.size() + 2);
    ids.push_back(kCls);
    for (const std::string& c : chars) ids.push_back(id(c));
    ids.push_back(kSep);
    return ids;
}

// --- BIEOS ---------------------------------------------------------------

int64_t n_ner_tags() { return 4 * kNumEntityTypes + 1; }

int64_t bieos_tag(EntityType type, char role) {
    const int64_t base = 1 + 4 * static_cast<int64_t>(type);
    switch (role) {
        case 'B': return base;
        case 'I': return base + 1;
        case 'E': return base + 2;
        case 'S': return base + 3;
    }
    throw ContractError("bieos_tag: bad role");
}

std::string tag_name(int64_t tag) {
    if (tag == 0) return "O";
    if (tag < 0 || tag >= n_ner_tags()) throw ContractError("tag_name: tag out of range");
    const int64_t type = (tag - 1) / 4;
    const char* roles = "BIES";
    return std::string(1, roles[(tag - 1) % 4]) + "-" +
           entity_type_name(static_cast<EntityType>(type));
}

TagSequence encode_bieos(const std::vector<EntitySpan>& entities, int64_t length) {
    TagSequence tags(static_cast<size_t>(length), 0);
    for (const EntitySpan& e : entities) {
        if (e.start < 0 || e.end > length || e.start >= e.end)
            throw AnnotationError("encode_bieos: span out of bounds");
        for (int64_t i = e.start; i < e.end; ++i)
            if (tags[static_cast<size_t>(i)] != 0)
                throw AnnotationError("encode_bieos: overlapping spans at " + std::to_string(i));
        if (e.end - e.start == 1) {
            tags[static_cast<size_t>(e.start)] = bieos_tag(e.type, 'S');
        } else {
            tags[static_cast<size_t>(e.start)] = bieos_tag(e.type, 'B');
            for (int64_t i = e.start + 1; i < e.end - 1; ++i)
                tags[static_cast<size_t>(i)] = bieos_tag(e.type, 'I');
            tags[static_cast<size_t>(e.end - 1)] = bieos_tag(e.type, 'E');
        }
    }
    return tags;
}

namespace {

struct TagView {
    char role = 'O';
    EntityType type = EntityType::Negation;
};

TagView view_tag(int64_t tag) {
    TagView v;
    if (tag == 0) return v;
    const char* roles = "BIES";
    v.role = roles[(tag - 1) % 4];
    v.type = static_cast<EntityType>((tag - 1) / 4);
    return v;
}

}  // namespace

std::vector<EntitySpan> decode_bieos(const TagSequence& tags) {
    std::vector<EntitySpan> spans;
    const int64_t len = static_cast<int64_t>(tags.size());
    int64_t i = 0;
    while (i < len) {
        const TagView t = view_tag(tags[static_cast<size_t>(i)]);
        if (t.role == 'S') {
            spans.push_back({i, i + 1, t.type});
            ++i;
        } else if (t.role == 'B') {
            int64_t j = i + 1;
            while (j < len) {
                const TagView u = view_tag(tags[static_cast<size_t>(j)]);
                if (u.role == 'I' && u.type == t.type)
                    ++j;
                else
                    break;
            }
            if (j < len) {
                const TagView u = view_tag(tags[static_cast<size_t>(j)]);
                if (u.role == 'E' && u.type == t.type) {
                    spans.push_back({i, j + 1, t.type});
                    i = j + 1;
                    continue;
                }
            }
            i = j;  // dangling run dropped; resume at the offending tag
        } else {
            ++i;  // O or out-of-context I/E
        }
    }
    return spans;
}

// --- relation-classification instances ------------------------------------

RelationLabel gold_label_for_pair(const Document& doc, int64_t first, int64_t second) {
    const int64_t n = static_cast<int64_t>(doc.entities.size());
    if (first < 0 || first >= n || second < 0 || second >= n || first == second)
        throw ContractError("gold_label_for_pair: bad entity indices");
    if (doc.entities[static_cast<size_t>(first)].start >=
        doc.entities[static_cast<size_t>(second)].start)
        throw ContractError("gold_label_for_pair: entities not in text order");
    for (const RelationTriple& r : doc.relations) {
        const bool forward = (r.head == first && r.tail == second);
        const bool backward = (r.head == second && r.tail == first);
        if (!forward && !backward) continue;
        switch (r.type) {
            case RelationType::Negative: return RelationLabel::NegativeRev;
            case RelationType::Modifier: return RelationLabel::ModifierRev;
            case RelationType::Position: return RelationLabel::PositionFwd;
            case RelationType::Percentage:
                return forward ? RelationLabel::PercentageFwd : RelationLabel::PercentageRev;
            case RelationType::NoRelation: return RelationLabel::NoRelation;
        }
    }
    return RelationLabel::NoRelation;
}

RcInstance make_rc_instance(const std::vector<std::string>& chars, const Vocab& vocab,
                            const EntitySpan& first, const EntitySpan& second, RelationLabel gold) {
    if (first.start >= second.start)
        throw ContractError("make_rc_instance: spans not in text order");
    RcInstance inst;
    inst.token_ids = vocab.encode_sentence(chars);
    inst.positions.cls = 0;
    for (int64_t i = first.start; i < first.end; ++i) inst.positions.en1.insert(i + 1);
    for (int64_t i = second.start; i < second.end; ++i) inst.positions.en2.insert(i + 1);
    inst.positions.validate(static_cast<int64_t>(inst.token_ids.size()));
    inst.gold = gold;
    return inst;
}

std::vector<RcInstance> build_rc_instances(const Document& doc, const Vocab& vocab, bool training,
                                           double keep_rate, Rng& rng) {
    std::vector<RcInstance> out;
    const int64_t n = static_cast<int64_t>(doc.entities.size());
    if (n < 2) return out;

    // canonical text order
    std::vector<int64_t> order(static_cast<size_t>(n));
    for (int64_t i = 0; i < n; ++i) order[static_cast<size_t>(i)] = i;
    std::sort(order.begin(), order.end(), [&](int64_t a, int64_t b) {
        return doc.entities[static_cast<size_t>(a)] < doc.entities[static_cast<size_t>(b)];
    });

    for (int64_t a = 0; a < n; ++a) {
        for (int64_t b = a + 1; b < n; ++b) {
            const int64_t first = order[static_cast<size_t>(a)];
            const int64_t second = order[static_cast<size_t>(b)];
            const RelationLabel gold = gold_label_for_pair(doc, first, second);
            if (training && gold == RelationLabel::NoRelation && rng.uniform() >= keep_rate)
                continue;
            RcInstance inst = make_rc_instance(doc.chars, vocab,
                                               doc.entities[static_cast<size_t>(first)],
                                               doc.entities[static_cast<size_t>(second)], gold);
            inst.first_entity = first;
            inst.second_entity = second;
            out.push_back(std::move(inst));
        }
    }
    return out;
}

// --- splits ----------------------------------------------------------------

Splits split_dataset(std::vector<Document> docs, uint64_t seed) {
    const int64_t n = static_cast<int64_t>(docs.size());
    if (n < 10) throw ContractError("split_dataset: need at least 10 documents, got " +
                                    std::to_string(n));
    Rng rng(seed);
    std::vector<int64_t> order(static_cast<size_t>(n));
    for (int64_t i = 0; i < n; ++i) order[static_cast<size_t>(i)] = i;
    rng.shuffle(order);

    const int64_t n_train = (n * 8) / 10;
    const int64_t n_dev = n / 10;
    Splits s;
    for (int64_t i = 0; i < n; ++i) {
        Document& d = docs[static_cast<size_t>(order[static_cast<size_t>(i)])];
        if (i < n_train)
            s.train.push_back(std::move(d));
        else if (i < n_train + n_dev)
            s.dev.push_back(std::move(d));
        else
            s.test.push_back(std::move(d));
    }
    return s;
}

// --- synthetic corpus --------------------------------------------------------

void GeneratorConfig::validate() const {
    if (w_profile < 0 || w_pct_rev < 0 || w_negation < 0 || w_two_sites < 0)
        throw ConfigError("generator: template weights must be nonnegative");
    if (w_profile + w_pct_rev + w_negation + w_two_sites <= 0)
        throw ConfigError("generator: at least one template weight must be positive");
    if (min_filler < 0 || max_filler < min_filler)
        throw ConfigError("generator: need 0 <= min_filler <= max_filler");
}

std::map<RelationType, double> GeneratorConfig::expected_relation_proportions() const {
    validate();
    std::map<RelationType, double> counts = {
        {RelationType::Negative, w_negation},
        {RelationType::Modifier, w_profile + w_negation},
        {RelationType::Position, w_profile + w_pct_rev + w_negation + 2 * w_two_sites},
        {RelationType::Percentage, w_profile + w_pct_rev},
    };
    double total = 0;
    for (auto& [t, c] : counts) total += c;
    for (auto& [t, c] : counts) c /= total;
    return counts;
}

namespace {

const std::vector<std::string>& lexicon(EntityType t) {
    static const std::vector<std::string> body = {"ab", "abc", "ba", "cab", "a"};
    static const std::vector<std::string> degree = {"de", "def", "ed", "fed", "d"};
    static const std::vector<std::string> quant = {"gh", "ghi", "hg", "g"};
    static const std::vector<std::string> loc = {"jk", "jkl", "kj", "j"};
    static const std::vector<std::string> neg = {"mn", "nm", "m"};
    switch (t) {
        case EntityType::BodyPart: return body;
        case EntityType::Degree: return degree;
        case EntityType::Quantifier: return quant;
        case EntityType::Location: return loc;
        case EntityType::Negation: return neg;
    }
    throw DataError("unknown entity type");
}

const std::vector<std::string>& filler_words() {
    static const std::vector<std::string> words = {"op", "qr", "rst", "uv", "w", "pq"};
    return words;
}

class SentenceBuilder {
public:
    // Returns the entity index for entity words.
    int64_t add_word(const std::string& word, std::optional<EntityType> etype) {
        if (!doc_.chars.empty()) doc_.chars.push_back(" ");
        const int64_t start = static_cast<int64_t>(doc_.chars.size());
        for (const std::string& c : utf8_chars(word)) doc_.chars.push_back(c);
        if (etype) {
            doc_.entities.push_back({start, static_cast<int64_t>(doc_.chars.size()), *etype});
            return static_cast<int64_t>(doc_.entities.size()) - 1;
        }
        return -1;
    }

    int64_t add_entity(EntityType t, Rng& rng) {
        const auto& lex = lexicon(t);
        return add_word(lex[static_cast<size_t>(rng.uniform_int(0, static_cast<int64_t>(lex.size()) - 1))], t);
    }

    void add_gap(Rng& rng, const GeneratorConfig& cfg) {
        const int64_t n = rng.uniform_int(cfg.min_filler, cfg.max_filler);
        const auto& words = filler_words();
        for (int64_t i = 0; i < n; ++i)
            add_word(words[static_cast<size_t>(rng.uniform_int(0, static_cast<int64_t>(words.size()) - 1))],
                     std::nullopt);
    }

    void relate(int64_t head, int64_t tail, RelationType type) {
        doc_.relations.push_back({head, tail, type});
    }

    Document take() { return std::move(doc_); }

private:
    Document doc_;
};

Document gen_profile(Rng& rng, const GeneratorConfig& cfg) {
    // site location ... degree quantity ...
    SentenceBuilder b;
    const int64_t site = b.add_entity(EntityType::BodyPart, rng);
    const int64_t where = b.add_entity(EntityType::Location, rng);
    b.add_gap(rng, cfg);
    const int64_t deg = b.add_entity(EntityType::Degree, rng);
    const int64_t amount = b.add_entity(EntityType::Quantifier, rng);
    b.add_gap(rng, cfg);
    b.relate(site, where, RelationType::Position);
    b.relate(deg, site, RelationType::Modifier);
    b.relate(deg, amount, RelationType::Percentage);
    return b.take();
}

Document gen_pct_rev(Rng& rng, const GeneratorConfig& cfg) {
    // ... quantity degree ... site location
    SentenceBuilder b;
    b.add_gap(rng, cfg);
    const int64_t amount = b.add_entity(EntityType::Quantifier, rng);
    const int64_t deg = b.add_entity(EntityType::Degree, rng);
    b.add_gap(rng, cfg);
    const int64_t site = b.add_entity(EntityType::BodyPart, rng);
    const int64_t where = b.add_entity(EntityType::Location, rng);
    b.relate(deg, amount, RelationType::Percentage);
    b.relate(site, where, RelationType::Position);
    return b.take();
}

Document gen_negation(Rng& rng, const GeneratorConfig& cfg) {
    // site location ... degree ... negation
    SentenceBuilder b;
    const int64_t site = b.add_entity(EntityType::BodyPart, rng);
    const int64_t where = b.add_entity(EntityType::Location, rng);
    b.add_gap(rng, cfg);
    const int64_t deg = b.add_entity(EntityType::Degree, rng);
    b.add_gap(rng, cfg);
    const int64_t no = b.add_entity(EntityType::Negation, rng);
    b.relate(site, where, RelationType::Position);
    b.relate(deg, site, RelationType::Modifier);
    b.relate(no, deg, RelationType::Negative);
    return b.take();
}

Document gen_two_sites(Rng& rng, const GeneratorConfig& cfg) {
    // site location ... site location
    SentenceBuilder b;
    const int64_t s1 = b.add_entity(EntityType::BodyPart, rng);
    const int64_t l1 = b.add_entity(EntityType::Location, rng);
    b.add_gap(rng, cfg);
    const int64_t s2 = b.add_entity(EntityType::BodyPart, rng);
    const int64_t l2 = b.add_entity(EntityType::Location, rng);
    b.relate(s1, l1, RelationType::Position);
    b.relate(s2, l2, RelationType::Position);
    return b.take();
}

}  // namespace

std::vector<Document> generate_synthetic_corpus(int64_t n_docs, uint64_t seed,
                                                const GeneratorConfig& config) {
    if (n_docs < 1) throw ContractError("generate_synthetic_corpus: n_docs must be >= 1");
    config.validate();
    Rng rng(seed);
    const double total = config.w_profile + config.w_pct_rev + config.w_negation +
                         config.w_two_sites;
    std::vector<Document> docs;
    docs.reserve(static_cast<size_t>(n_docs));
    for (int64_t i = 0; i < n_docs; ++i) {
        const double pick = rng.uniform() * total;
        Document d;
        if (pick < config.w_profile)
            d = gen_profile(rng, config);
        else if (pick < config.w_profile + config.w_pct_rev)
            d = gen_pct_rev(rng, config);
        else if (pick < config.w_profile + config.w_pct_rev + config.w_negation)
            d = gen_negation(rng, config);
        else
            d = gen_two_sites(rng, config);
        d.validate();
        docs.push_back(std::move(d));
    }
    return docs;
}

// --- wire format --------------------------------------------------------------

std::string document_to_json(const Document& doc) {
    json j;
    j["text"] = doc.text();
    j["entities"] = json::array();
    for (const EntitySpan& e : doc.entities)
        j["entities"].push_back({e.start, e.end, entity_type_name(e.type)});
    j["relations"] = json::array();
    for (const RelationTriple& r : doc.relations)
        j["relations"].push_back({r.head, r.tail, relation_type_name(r.type)});
    return j.dump();
}

Document document_from_json(const std::string& line) {
    Document doc;
    try {
        const json j = json::parse(line);
        doc.chars = utf8_chars(j.at("text").get<std::string>());
        for (const auto& e : j.at("entities"))
            doc.entities.push_back(
                {e.at(0).get<int64_t>(), e.at(1).get<int64_t>(),
                 entity_type_from_name(e.at(2).get<std::string>())});
        for (const auto& r : j.at("relations"))
            doc.relations.push_back(
                {r.at(0).get<int64_t>(), r.at(1).get<int64_t>(),
                 relation_type_from_name(r.at(2).get<std::string>())});
    } catch (const json::exception& e) {
        throw DataError(std::string("malformed document record: ") + e.what());
    }
    doc.validate();
    return doc;
}

void save_documents(const std::string& path, const std::vector<Document>& docs) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write " + path);
    for (const Document& d : docs) out << document_to_json(d) << '\n';
    if (!out) throw IoError("write failed for " + path);
}

std::vector<Document> load_documents(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot read " + path);
    std::vector<Document> docs;
    std::string line;
    int64_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        try {
            docs.push_back(document_from_json(line));
        } catch (const Error& e) {
            throw DataError(path + ":" + std::to_string(line_no) + ": " + e.what());
        }
    }
    return docs;
}

}  // namespace jex
