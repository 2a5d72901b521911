#include "jex/model.hpp"

namespace jex {

ModelConfig ModelConfig::resolved() const {
    ModelConfig c = *this;
    if (c.n_tags == 0) c.n_tags = n_ner_tags();
    if (c.n_relations == 0) c.n_relations = kNumRelationLabels;
    if (c.d_hidden == 0) c.d_hidden = c.encoder.d_model;
    return c;
}

void ModelConfig::validate() const {
    encoder.validate();
    if (n_tags < 1) throw ConfigError("model: n_tags must be positive");
    if (n_relations < 2) throw ConfigError("model: need at least two relation labels");
    if (d_hidden < 1) throw ConfigError("model: d_hidden must be positive");
}

ModelParams ModelParams::init(const ModelConfig& config, uint64_t seed) {
    ModelParams p;
    p.config = config.resolved();
    p.config.validate();
    Rng rng(seed);
    p.encoder = EncoderParams::init(p.config.encoder, rng);
    p.crf = CrfParams::init(p.config.encoder.d_model, p.config.n_tags, rng);
    p.rc = RcParams::init(p.config.encoder.d_model, p.config.d_hidden, p.config.n_relations, rng);
    return p;
}

std::vector<std::pair<std::string, Tensor>> ModelParams::named_parameters() const {
    std::vector<std::pair<std::string, Tensor>> out;
    out.emplace_back("emb.token", encoder.embedding.token);
    out.emplace_back("emb.position", encoder.embedding.position);
    for (size_t l = 0; l < encoder.layers.size(); ++l) {
        const LayerParams& layer = encoder.layers[l];
        const std::string prefix = "layer" + std::to_string(l) + ".";
        for (size_t h = 0; h < layer.wq.size(); ++h) {
            out.emplace_back(prefix + "wq" + std::to_string(h), layer.wq[h]);
            out.emplace_back(prefix + "wk" + std::to_string(h), layer.wk[h]);
            out.emplace_back(prefix + "wv" + std::to_string(h), layer.wv[h]);
        }
        out.emplace_back(prefix + "wo", layer.wo);
        out.emplace_back(prefix + "ff_w1", layer.ff_w1);
        out.emplace_back(prefix + "ff_b1", layer.ff_b1);
        out.emplace_back(prefix + "ff_w2", layer.ff_w2);
        out.emplace_back(prefix + "ff_b2", layer.ff_b2);
        out.emplace_back(prefix + "ln1_gamma", layer.ln1_gamma);
        out.emplace_back(prefix + "ln1_beta", layer.ln1_beta);
        out.emplace_back(prefix + "ln2_gamma", layer.ln2_gamma);
        out.emplace_back(prefix + "ln2_beta", layer.ln2_beta);
    }
    out.emplace_back("crf.emission_w", crf.emission_w);
    out.emplace_back("crf.emission_b", crf.emission_b);
    out.emplace_back("crf.transitions", crf.transitions);
    out.emplace_back("rc.w1", rc.w1);
    out.emplace_back("rc.b1", rc.b1);
    out.emplace_back("rc.w2", rc.w2);
    out.emplace_back("rc.b2", rc.b2);
    return out;
}

void ModelParams::zero_grads() {
    for (auto& [name, tensor] : named_parameters()) {
        Tensor t = tensor;
        t.zero_grad();
    }
}

SentencePrefix encode_context(const std::vector<int64_t>& token_ids, const ModelParams& params,
                              int64_t valid_len) {
    SentencePrefix prefix;
    prefix.t = static_cast<int64_t>(token_ids.size());
    prefix.valid_len = valid_len;
    const AttentionMask ctx = compose_padding(build_mask_all(prefix.t), valid_len);
    const int64_t split = params.config.encoder.n_layers - params.config.encoder.k_task;
    prefix.h_shared = run_layers(embed(token_ids, params.encoder), ctx, params.encoder, 0, split);
    return prefix;
}

namespace {

Tensor run_task_layers(const SentencePrefix& prefix, const AttentionMask& task_mask,
                       const ModelParams& params) {
    const int64_t n = params.config.encoder.n_layers;
    const int64_t split = n - params.config.encoder.k_task;
    const AttentionMask composed = compose_padding(task_mask, prefix.valid_len);
    return run_layers(prefix.h_shared, composed, params.encoder, split, n);
}

}  // namespace

Tensor ner_encode_from(const SentencePrefix& prefix, const ModelParams& params) {
    return run_task_layers(prefix, build_mask_ner(prefix.t), params);
}

Tensor rc_encode_from(const SentencePrefix& prefix, const PositionSet& positions,
                      RcMaskVariant variant, const ModelParams& params) {
    return run_task_layers(prefix, build_mask_rc(variant, prefix.t, positions), params);
}

Tensor ner_emissions_for(const std::vector<int64_t>& token_ids, const ModelParams& params) {
    const int64_t t = static_cast<int64_t>(token_ids.size());
    if (t < 3) throw ContractError("ner_emissions_for: sentence has no word positions");
    SentencePrefix prefix = encode_context(token_ids, params, t);
    Tensor h = ner_encode_from(prefix, params);
    return emissions(h, 1, t - 1, params.crf);
}

TagSequence predict_tags(const std::vector<int64_t>& token_ids, const ModelParams& params) {
    return viterbi_decode(ner_emissions_for(token_ids, params), params.crf.transitions);
}

std::vector<EntitySpan> predict_entities(const Document& doc, const Vocab& vocab,
                                         const ModelParams& params) {
    if (doc.chars.empty()) return {};
    return decode_bieos(predict_tags(vocab.encode_sentence(doc.chars), params));
}

RelationLabel predict_relation(const RcInstance& instance, const ModelParams& params,
                               RcMaskVariant variant) {
    SentencePrefix prefix = encode_context(instance.token_ids, params,
                                           static_cast<int64_t>(instance.token_ids.size()));
    Tensor h = rc_encode_from(prefix, instance.positions, variant, params);
    Tensor logits = rc_logits(h, params.rc);
    int64_t best = 0;
    for (int64_t j = 1; j < logits.shape()[1]; ++j)
        if (logits.at(0, j) > logits.at(0, best)) best = j;
    return static_cast<RelationLabel>(best);
}

std::map<std::string, std::string> model_config_to_map(const ModelConfig& config) {
    const ModelConfig c = config.resolved();
    std::map<std::string, std::string> m;
    m["vocab_size"] = std::to_string(c.encoder.vocab_size);
    m["d_model"] = std::to_string(c.encoder.d_model);
    m["n_heads"] = std::to_string(c.encoder.n_heads);
    m["d_ff"] = std::to_string(c.encoder.d_ff);
    m["n_layers"] = std::to_string(c.encoder.n_layers);
    m["k"] = std::to_string(c.encoder.k_task);
    m["max_len"] = std::to_string(c.encoder.max_len);
    m["activation"] = c.encoder.activation;
    m["n_tags"] = std::to_string(c.n_tags);
    m["n_relations"] = std::to_string(c.n_relations);
    m["d_hidden"] = std::to_string(c.d_hidden);
    return m;
}

namespace {

int64_t map_int(const std::map<std::string, std::string>& m, const std::string& key) {
    auto it = m.find(key);
    if (it == m.end()) throw ConfigError("model config: missing key '" + key + "'");
    try {
        return std::stoll(it->second);
    } catch (const std::exception&) {
        throw ConfigError("model config: bad value for '" + key + "'");
    }
}

}  // namespace

ModelConfig model_config_from_map(const std::map<std::string, std::string>& map) {
    ModelConfig c;
    c.encoder.vocab_size = map_int(map, "vocab_size");
    c.encoder.d_model = map_int(map, "d_model");
    c.encoder.n_heads = map_int(map, "n_heads");
    c.encoder.d_ff = map_int(map, "d_ff");
    c.encoder.n_layers = map_int(map, "n_layers");
    c.encoder.k_task = map_int(map, "k");
    c.encoder.max_len = map_int(map, "max_len");
    auto act = map.find("activation");
    c.encoder.activation = act == map.end() ? "gelu" : act->second;
    c.n_tags = map_int(map, "n_tags");
    c.n_relations = map_int(map, "n_relations");
    c.d_hidden = map_int(map, "d_hidden");
    c.validate();
    return c;
}

}  // namespace jex
