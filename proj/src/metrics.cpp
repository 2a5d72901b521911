#include "jex/metrics.hpp"

#include <json.hpp>

#include <algorithm>
#include <iomanip>
#include <set>
#include <sstream>

namespace jex {

MetricsReport ner_metrics(const std::vector<std::vector<EntitySpan>>& pred,
                          const std::vector<std::vector<EntitySpan>>& gold) {
    if (pred.size() != gold.size())
        throw ContractError("ner_metrics: " + std::to_string(pred.size()) + " predicted vs " +
                            std::to_string(gold.size()) + " gold documents");
    MetricsReport report;
    for (size_t d = 0; d < pred.size(); ++d) {
        std::set<EntitySpan> gold_set(gold[d].begin(), gold[d].end());
        for (const EntitySpan& span : pred[d]) {
            PrfCounts& label = report.per_label[entity_type_name(span.type)];
            if (gold_set.count(span)) {
                ++report.micro.tp;
                ++label.tp;
            } else {
                ++report.micro.fp;
                ++label.fp;
            }
        }
        std::set<EntitySpan> pred_set(pred[d].begin(), pred[d].end());
        for (const EntitySpan& span : gold[d]) {
            if (!pred_set.count(span)) {
                ++report.micro.fn;
                ++report.per_label[entity_type_name(span.type)].fn;
            }
        }
    }
    return report;
}

MetricsReport rc_metrics(const std::vector<RelationLabel>& pred,
                         const std::vector<RelationLabel>& gold) {
    if (pred.size() != gold.size())
        throw ContractError("rc_metrics: " + std::to_string(pred.size()) + " predicted vs " +
                            std::to_string(gold.size()) + " gold labels");
    MetricsReport report;
    for (size_t i = 0; i < pred.size(); ++i) {
        const RelationLabel p = pred[i], g = gold[i];
        if (static_cast<int64_t>(p) < 0 || static_cast<int64_t>(p) >= kNumRelationLabels ||
            static_cast<int64_t>(g) < 0 || static_cast<int64_t>(g) >= kNumRelationLabels)
            throw ContractError("rc_metrics: label outside the schema");
        if (p != RelationLabel::NoRelation) {
            PrfCounts& label = report.per_label[relation_label_name(p)];
            if (p == g) {
                ++report.micro.tp;
                ++label.tp;
            } else {
                ++report.micro.fp;
                ++label.fp;
            }
        }
        if (g != RelationLabel::NoRelation && p != g) {
            ++report.micro.fn;
            ++report.per_label[relation_label_name(g)].fn;
        }
    }
    return report;
}

MetricsReport ner_eval(const ModelParams& params, const Vocab& vocab,
                       std::span<const Document> docs) {
    std::vector<std::vector<EntitySpan>> pred, gold;
    for (const Document& doc : docs) {
        pred.push_back(predict_entities(doc, vocab, params));
        gold.push_back(doc.entities);
    }
    return ner_metrics(pred, gold);
}

MetricsReport rc_eval_gold_entities(const ModelParams& params, const Vocab& vocab,
                                    std::span<const Document> docs, RcMaskVariant variant) {
    std::vector<RelationLabel> pred, gold;
    Rng rng(0);  // keep_rate 1: never consulted
    for (const Document& doc : docs) {
        for (const RcInstance& inst : build_rc_instances(doc, vocab, false, 1.0, rng)) {
            pred.push_back(predict_relation(inst, params, variant));
            gold.push_back(inst.gold);
        }
    }
    return rc_metrics(pred, gold);
}

namespace {

// A scored triple: both spans plus the directed label.
struct Triple {
    EntitySpan first;
    EntitySpan second;
    RelationLabel label;
    bool operator<(const Triple& o) const {
        return std::tie(first, second, label) < std::tie(o.first, o.second, o.label);
    }
};

std::vector<Triple> gold_triples(const Document& doc) {
    std::vector<Triple> out;
    std::vector<int64_t> order(doc.entities.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int64_t>(i);
    std::sort(order.begin(), order.end(), [&](int64_t a, int64_t b) {
        return doc.entities[static_cast<size_t>(a)] < doc.entities[static_cast<size_t>(b)];
    });
    for (size_t a = 0; a < order.size(); ++a)
        for (size_t b = a + 1; b < order.size(); ++b) {
            const RelationLabel label = gold_label_for_pair(doc, order[a], order[b]);
            if (label == RelationLabel::NoRelation) continue;
            out.push_back({doc.entities[static_cast<size_t>(order[a])],
                           doc.entities[static_cast<size_t>(order[b])], label});
        }
    return out;
}

}  // namespace

MetricsReport rc_pipeline_metrics(std::span<const Document> docs,
                                  const std::vector<std::vector<PredictedTriple>>& predicted) {
    if (docs.size() != predicted.size())
        throw ContractError("rc_pipeline_metrics: document and prediction lists differ");
    MetricsReport report;
    for (size_t d = 0; d < docs.size(); ++d) {
        std::set<Triple> predicted_set;
        for (const PredictedTriple& t : predicted[d]) {
            if (t.label == RelationLabel::NoRelation) continue;
            predicted_set.insert({t.first, t.second, t.label});
        }
        std::set<Triple> gold_set;
        for (const Triple& t : gold_triples(docs[d])) gold_set.insert(t);

        for (const Triple& t : predicted_set) {
            PrfCounts& label = report.per_label[relation_label_name(t.label)];
            if (gold_set.count(t)) {
                ++report.micro.tp;
                ++label.tp;
            } else {
                ++report.micro.fp;
                ++label.fp;
            }
        }
        for (const Triple& t : gold_set) {
            if (!predicted_set.count(t)) {
                ++report.micro.fn;
                ++report.per_label[relation_label_name(t.label)].fn;
            }
        }
    }
    return report;
}

PipelineReport pipeline_eval(const ModelParams& params, const Vocab& vocab,
                             std::span<const Document> docs, RcMaskVariant variant) {
    PipelineReport report;
    std::vector<std::vector<EntitySpan>> pred_entities, gold_entities;
    std::vector<std::vector<PredictedTriple>> pred_triples;

    for (const Document& doc : docs) {
        std::vector<EntitySpan> predicted = predict_entities(doc, vocab, params);
        std::sort(predicted.begin(), predicted.end());
        pred_entities.push_back(predicted);
        gold_entities.push_back(doc.entities);

        std::vector<PredictedTriple> triples;
        for (size_t a = 0; a < predicted.size(); ++a)
            for (size_t b = a + 1; b < predicted.size(); ++b) {
                RcInstance inst = make_rc_instance(doc.chars, vocab, predicted[a], predicted[b],
                                                   RelationLabel::NoRelation);
                const RelationLabel label = predict_relation(inst, params, variant);
                if (label == RelationLabel::NoRelation) continue;
                triples.push_back({predicted[a], predicted[b], label});
            }
        pred_triples.push_back(std::move(triples));
    }
    report.ner = ner_metrics(pred_entities, gold_entities);
    report.rc = rc_pipeline_metrics(docs, pred_triples);
    return report;
}

std::string format_metrics_table(const std::vector<std::pair<std::string, MetricsReport>>& rows) {
    std::ostringstream os;
    size_t width = 12;
    for (const auto& [name, report] : rows) width = std::max(width, name.size() + 2);
    os << std::left << std::setw(static_cast<int>(width)) << "Task"
       << std::right << std::setw(11) << "Precision" << std::setw(9) << "Recall"
       << std::setw(9) << "F1" << '\n';
    os << std::fixed << std::setprecision(4);
    for (const auto& [name, report] : rows)
        os << std::left << std::setw(static_cast<int>(width)) << name << std::right
           << std::setw(11) << report.precision() << std::setw(9) << report.recall()
           << std::setw(9) << report.f1() << '\n';
    return os.str();
}

std::string metrics_to_json(const MetricsReport& report) {
    nlohmann::json j;
    j["precision"] = report.precision();
    j["recall"] = report.recall();
    j["f1"] = report.f1();
    j["tp"] = report.micro.tp;
    j["fp"] = report.micro.fp;
    j["fn"] = report.micro.fn;
    nlohmann::json labels = nlohmann::json::object();
    for (const auto& [name, counts] : report.per_label) {
        labels[name] = {{"precision", counts.precision()},
                        {"recall", counts.recall()},
                        {"f1", counts.f1()},
                        {"support", counts.support()}};
    }
    j["labels"] = labels;
    return j.dump();
}

}  // namespace jex
