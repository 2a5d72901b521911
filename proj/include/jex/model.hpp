#pragma once

#include <string>
#include <utility>
#include <vector>

#include "jex/crf.hpp"
#include "jex/data.hpp"
#include "jex/encoder.hpp"
#include "jex/rc.hpp"

namespace jex {

struct ModelConfig {
    EncoderConfig encoder;
    int64_t n_tags = 0;       // 0 -> tag inventory of the data schema
    int64_t n_relations = 0;  // 0 -> directed label inventory
    int64_t d_hidden = 0;     // 0 -> d_model

    ModelConfig resolved() const;
    void validate() const;
};

// Every learned weight of the joint model. The encoder is shared by both
// heads; only the CRF and relation layers are task-specific.
struct ModelParams {
    ModelConfig config;
    EncoderParams encoder;
    CrfParams crf;
    RcParams rc;

    static ModelParams init(const ModelConfig& config, uint64_t seed);

    // Stable name -> tensor view of every parameter, in a fixed order.
    std::vector<std::pair<std::string, Tensor>> named_parameters() const;
    void zero_grads();
};

// Context encoding shared between the two tasks for one sentence: the output
// of the first N-K layers under the all-ones mask.
struct SentencePrefix {
    Tensor h_shared;
    int64_t t = 0;
    int64_t valid_len = 0;
};

SentencePrefix encode_context(const std::vector<int64_t>& token_ids, const ModelParams& params,
                              int64_t valid_len);

// Last K layers under the sequence-tagging mask (all-ones).
Tensor ner_encode_from(const SentencePrefix& prefix, const ModelParams& params);

// Last K layers under the relation mask for one entity pair.
Tensor rc_encode_from(const SentencePrefix& prefix, const PositionSet& positions,
                      RcMaskVariant variant, const ModelParams& params);

// Emission scores for the word positions of a sentence (specials excluded).
Tensor ner_emissions_for(const std::vector<int64_t>& token_ids, const ModelParams& params);

TagSequence predict_tags(const std::vector<int64_t>& token_ids, const ModelParams& params);
std::vector<EntitySpan> predict_entities(const Document& doc, const Vocab& vocab,
                                         const ModelParams& params);
RelationLabel predict_relation(const RcInstance& instance, const ModelParams& params,
                               RcMaskVariant variant);

// Flat string map round-trip, used by checkpoints and manifests.
std::map<std::string, std::string> model_config_to_map(const ModelConfig& config);
ModelConfig model_config_from_map(const std::map<std::string, std::string>& map);

}  // namespace jex
