#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "jex/data.hpp"
#include "jex/metrics.hpp"
#include "jex/model.hpp"

namespace jex {

enum class TrainMode { joint, ner_only, rc_only };

TrainMode train_mode_from_name(const std::string& name);
std::string train_mode_name(TrainMode mode);

struct TrainConfig {
    double lr = 1e-3;
    int64_t epochs = 30;
    int64_t batch_size = 8;
    uint64_t seed = 1;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double adam_eps = 1e-8;
    TrainMode mode = TrainMode::joint;
    RcMaskVariant mask_variant = RcMaskVariant::v1;
    int64_t k = -1;           // >= 0 overrides the encoder's task-layer count
    double keep_rate = 0.15;  // NoRelation keep probability when building training pairs
    int64_t warmup_steps = 0; // linear learning-rate warmup, 0 = off
    bool alternate_tasks = false;  // ablation: alternate single-task steps

    void validate() const;
};

class Adam {
public:
    Adam(double beta1, double beta2, double eps) : beta1_(beta1), beta2_(beta2), eps_(eps) {}

    // One update over the named parameters for which `active` returns true.
    // Gradients are read from the tensors and left untouched.
    void step(const std::vector<std::pair<std::string, Tensor>>& params,
              const std::function<bool(const std::string&)>& active, double lr);

    int64_t steps_taken() const { return t_; }

private:
    struct Slot {
        std::vector<real> m, v;
    };
    std::map<std::string, Slot> slots_;
    double beta1_, beta2_, eps_;
    int64_t t_ = 0;
};

// One sentence prepared for training: token ids, gold tags, and its
// (subsampled) relation instances.
struct TrainItem {
    std::vector<int64_t> token_ids;
    TagSequence gold_tags;
    std::vector<RcInstance> instances;
};

std::vector<TrainItem> prepare_items(std::span<const Document> docs, const Vocab& vocab,
                                     bool training, double keep_rate, uint64_t seed);

struct StepLosses {
    double ner = 0;
    double rc = 0;
    double all = 0;
    int64_t n_ner = 0;
    int64_t n_rc = 0;
};

// One optimizer step over a batch: both per-task batch-mean losses are summed
// into a single scalar, one backward pass runs over the shared graph, and one
// Adam update is applied to the parameters owned by the active mode.
// A non-finite loss throws DivergenceError.
StepLosses joint_step(std::span<const TrainItem> batch, ModelParams& params, Adam& opt,
                      const TrainConfig& config, double lr, TrainMode mode);

struct EpochRecord {
    int64_t epoch = 0;
    double loss_ner = 0;
    double loss_rc = 0;
    double loss_all = 0;
    double dev_ner_p = 0, dev_ner_r = 0, dev_ner_f1 = 0;
    double dev_rc_p = 0, dev_rc_r = 0, dev_rc_f1 = 0;

    std::string to_json_line() const;
};

struct Dataset {
    std::vector<Document> train, dev, test;
    Vocab vocab;
};

Dataset make_dataset(Splits splits);

struct TrainResult {
    ModelParams params;  // best-dev checkpoint
    std::vector<EpochRecord> log;
    int64_t best_epoch = 0;
};

// Deterministic training given the seed. On divergence the run restarts once
// from scratch with the learning rate halved; a second divergence propagates.
TrainResult train(const Dataset& dataset, const ModelConfig& model_config,
                  const TrainConfig& config);

// --- checkpoints ----------------------------------------------------------

std::vector<uint8_t> checkpoint_bytes(const ModelParams& params);
ModelParams params_from_bytes(const std::vector<uint8_t>& bytes);
void save_checkpoint(const ModelParams& params, const std::string& path);
ModelParams load_checkpoint(const std::string& path);

}  // namespace jex
