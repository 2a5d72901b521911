#pragma once

#include <map>
#include <span>
#include <string>
#include <vector>

#include "jex/data.hpp"
#include "jex/model.hpp"

namespace jex {

// Micro counts with the 0/0 -> 0 convention for every derived rate.
struct PrfCounts {
    int64_t tp = 0;
    int64_t fp = 0;
    int64_t fn = 0;

    double precision() const { return tp + fp == 0 ? 0.0 : double(tp) / double(tp + fp); }
    double recall() const { return tp + fn == 0 ? 0.0 : double(tp) / double(tp + fn); }
    double f1() const {
        const double p = precision(), r = recall();
        return p + r == 0.0 ? 0.0 : 2.0 * p * r / (p + r);
    }
    int64_t support() const { return tp + fn; }
};

struct MetricsReport {
    PrfCounts micro;
    std::map<std::string, PrfCounts> per_label;

    double precision() const { return micro.precision(); }
    double recall() const { return micro.recall(); }
    double f1() const { return micro.f1(); }
};

// Entity-level scores: a prediction is correct only when start, end and type
// all match a gold span. Document lists must be aligned.
MetricsReport ner_metrics(const std::vector<std::vector<EntitySpan>>& pred,
                          const std::vector<std::vector<EntitySpan>>& gold);

// Relation scores over aligned instance label lists. NoRelation is the
// negative class and never counts as a positive prediction or gold item.
MetricsReport rc_metrics(const std::vector<RelationLabel>& pred,
                         const std::vector<RelationLabel>& gold);

struct PipelineReport {
    MetricsReport ner;
    MetricsReport rc;
};

// A relation prediction over concrete spans, in text order.
struct PredictedTriple {
    EntitySpan first;
    EntitySpan second;
    RelationLabel label = RelationLabel::NoRelation;
};

// Pure scoring core for pipeline RC: a predicted triple is a true positive
// only when both spans match gold entities exactly and the directed label
// matches the gold pair; every unmatched gold relation is a false negative.
MetricsReport rc_pipeline_metrics(std::span<const Document> docs,
                                  const std::vector<std::vector<PredictedTriple>>& predicted);

// "RC with correct entities": classify gold entity pairs.
MetricsReport rc_eval_gold_entities(const ModelParams& params, const Vocab& vocab,
                                    std::span<const Document> docs, RcMaskVariant variant);

// Full pipeline: decode entities, pair them up, classify, and score triples.
// A predicted triple is correct only when both spans match gold entities
// exactly and the directed label matches; gold relations whose entities were
// missed count as false negatives.
PipelineReport pipeline_eval(const ModelParams& params, const Vocab& vocab,
                             std::span<const Document> docs, RcMaskVariant variant);

// NER-side evaluation of a model over documents.
MetricsReport ner_eval(const ModelParams& params, const Vocab& vocab,
                       std::span<const Document> docs);

std::string format_metrics_table(const std::vector<std::pair<std::string, MetricsReport>>& rows);
std::string metrics_to_json(const MetricsReport& report);

}  // namespace jex
