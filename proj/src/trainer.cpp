#include "jex/trainer.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

namespace jex {

TrainMode train_mode_from_name(const std::string& name) {
    if (name == "joint") return TrainMode::joint;
    if (name == "ner_only") return TrainMode::ner_only;
    if (name == "rc_only") return TrainMode::rc_only;
    throw ConfigError("unknown mode '" + name + "' (expected joint, ner_only or rc_only)");
}

std::string train_mode_name(TrainMode mode) {
    switch (mode) {
        case TrainMode::joint: return "joint";
        case TrainMode::ner_only: return "ner_only";
        case TrainMode::rc_only: return "rc_only";
    }
    throw ConfigError("bad mode");
}

void TrainConfig::validate() const {
    if (!(lr > 0)) throw ConfigError("train: learning rate must be positive");
    if (epochs < 0) throw ConfigError("train: epochs must be nonnegative");
    if (batch_size < 1) throw ConfigError("train: batch_size must be positive");
    if (keep_rate < 0 || keep_rate > 1) throw ConfigError("train: keep_rate must be in [0,1]");
    if (warmup_steps < 0) throw ConfigError("train: warmup_steps must be nonnegative");
}

void Adam::step(const std::vector<std::pair<std::string, Tensor>>& params,
                const std::function<bool(const std::string&)>& active, double lr) {
    ++t_;
    const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    for (const auto& [name, tensor] : params) {
        if (!active(name)) continue;
        Tensor t = tensor;
        if (!t.has_grad()) continue;
        auto g = t.grad();
        auto v = t.values_mut();
        Slot& slot = slots_[name];
        if (slot.m.empty()) {
            slot.m.assign(v.size(), real(0));
            slot.v.assign(v.size(), real(0));
        }
        for (size_t i = 0; i < v.size(); ++i) {
            slot.m[i] = static_cast<real>(beta1_) * slot.m[i] +
                        static_cast<real>(1.0 - beta1_) * g[i];
            slot.v[i] = static_cast<real>(beta2_) * slot.v[i] +
                        static_cast<real>(1.0 - beta2_) * g[i] * g[i];
            const double mhat = static_cast<double>(slot.m[i]) / bc1;
            const double vhat = static_cast<double>(slot.v[i]) / bc2;
            v[i] -= static_cast<real>(lr * mhat / (std::sqrt(vhat) + eps_));
        }
    }
}

std::vector<TrainItem> prepare_items(std::span<const Document> docs, const Vocab& vocab,
                                     bool training, double keep_rate, uint64_t seed) {
    Rng rng(seed);
    std::vector<TrainItem> items;
    items.reserve(docs.size());
    for (const Document& doc : docs) {
        TrainItem item;
        item.token_ids = vocab.encode_sentence(doc.chars);
        item.gold_tags = encode_bieos(doc.entities, static_cast<int64_t>(doc.chars.size()));
        item.instances = build_rc_instances(doc, vocab, training, keep_rate, rng);
        items.push_back(std::move(item));
    }
    return items;
}

namespace {

bool param_active(TrainMode mode, const std::string& name) {
    if (mode == TrainMode::ner_only && name.rfind("rc.", 0) == 0) return false;
    if (mode == TrainMode::rc_only && name.rfind("crf.", 0) == 0) return false;
    return true;
}

}  // namespace

StepLosses joint_step(std::span<const TrainItem> batch, ModelParams& params, Adam& opt,
                      const TrainConfig& config, double lr, TrainMode mode) {
    const bool want_ner = mode != TrainMode::rc_only;
    const bool want_rc = mode != TrainMode::ner_only;

    Tensor ner_sum, rc_sum;
    int64_t n_ner = 0, n_rc = 0;
    for (const TrainItem& item : batch) {
        const int64_t t = static_cast<int64_t>(item.token_ids.size());
        const bool item_ner = want_ner && t >= 3;
        const bool item_rc = want_rc && !item.instances.empty();
        if (!item_ner && !item_rc) continue;
        SentencePrefix prefix = encode_context(item.token_ids, params, t);
        if (item_ner) {
            Tensor h = ner_encode_from(prefix, params);
            Tensor e = emissions(h, 1, t - 1, params.crf);
            Tensor loss = crf_nll(e, item.gold_tags, params.crf.transitions);
            ner_sum = ner_sum.defined() ? add(ner_sum, loss) : loss;
            ++n_ner;
        }
        if (item_rc) {
            for (const RcInstance& inst : item.instances) {
                Tensor h = rc_encode_from(prefix, inst.positions, config.mask_variant, params);
                Tensor loss = rc_nll_logits(rc_logits(h, params.rc),
                                            static_cast<int64_t>(inst.gold));
                rc_sum = rc_sum.defined() ? add(rc_sum, loss) : loss;
                ++n_rc;
            }
        }
    }

    StepLosses out;
    Tensor l_ner, l_rc, l_all;
    if (n_ner > 0) l_ner = scale(ner_sum, real(1) / static_cast<real>(n_ner));
    if (n_rc > 0) l_rc = scale(rc_sum, real(1) / static_cast<real>(n_rc));
    if (l_ner.defined() && l_rc.defined())
        l_all = add(l_ner, l_rc);
    else if (l_ner.defined())
        l_all = l_ner;
    else if (l_rc.defined())
        l_all = l_rc;
    else
        throw ContractError("joint_step: batch produced no loss terms");

    out.ner = l_ner.defined() ? static_cast<double>(l_ner.item()) : 0.0;
    out.rc = l_rc.defined() ? static_cast<double>(l_rc.item()) : 0.0;
    out.all = static_cast<double>(l_all.item());
    out.n_ner = n_ner;
    out.n_rc = n_rc;
    if (!std::isfinite(out.all))
        throw DivergenceError("joint_step: non-finite loss (ner=" + std::to_string(out.ner) +
                              ", rc=" + std::to_string(out.rc) + ")");

    params.zero_grads();
    backward(l_all);
    opt.step(params.named_parameters(), [mode](const std::string& n) { return param_active(mode, n); },
             lr);
    params.zero_grads();
    return out;
}

std::string EpochRecord::to_json_line() const {
    nlohmann::json j;
    j["epoch"] = epoch;
    j["loss_ner"] = loss_ner;
    j["loss_rc"] = loss_rc;
    j["loss_all"] = loss_all;
    j["dev_ner"] = {{"precision", dev_ner_p}, {"recall", dev_ner_r}, {"f1", dev_ner_f1}};
    j["dev_rc"] = {{"precision", dev_rc_p}, {"recall", dev_rc_r}, {"f1", dev_rc_f1}};
    return j.dump();
}

Dataset make_dataset(Splits splits) {
    Dataset d;
    std::vector<Document> all;
    all.insert(all.end(), splits.train.begin(), splits.train.end());
    all.insert(all.end(), splits.dev.begin(), splits.dev.end());
    all.insert(all.end(), splits.test.begin(), splits.test.end());
    d.vocab = Vocab::build(all);
    d.train = std::move(splits.train);
    d.dev = std::move(splits.dev);
    d.test = std::move(splits.test);
    return d;
}

namespace {

TrainResult run_training(const Dataset& dataset, const ModelConfig& model_config,
                         const TrainConfig& config, double lr) {
    ModelParams params = ModelParams::init(model_config, config.seed);
    Adam opt(config.beta1, config.beta2, config.adam_eps);
    std::vector<TrainItem> items =
        prepare_items(dataset.train, dataset.vocab, true, config.keep_rate, config.seed ^ 0x9e37u);
    Rng shuffle_rng(config.seed ^ 0x51f1u);

    TrainResult result;
    std::vector<uint8_t> best_bytes = checkpoint_bytes(params);
    double best_score = -1.0;
    int64_t step_index = 0;

    for (int64_t epoch = 1; epoch <= config.epochs; ++epoch) {
        std::vector<size_t> order(items.size());
        for (size_t i = 0; i < order.size(); ++i) order[i] = i;
        shuffle_rng.shuffle(order);

        double sum_ner = 0, sum_rc = 0, sum_all = 0;
        int64_t n_ner = 0, n_rc = 0, n_steps = 0;
        for (size_t begin = 0; begin < order.size();
             begin += static_cast<size_t>(config.batch_size)) {
            const size_t end = std::min(order.size(), begin + static_cast<size_t>(config.batch_size));
            std::vector<TrainItem> batch;
            batch.reserve(end - begin);
            for (size_t i = begin; i < end; ++i) batch.push_back(items[order[i]]);

            TrainMode mode = config.mode;
            if (config.alternate_tasks && mode == TrainMode::joint)
                mode = (step_index % 2 == 0) ? TrainMode::ner_only : TrainMode::rc_only;
            double lr_now = lr;
            if (config.warmup_steps > 0)
                lr_now *= std::min(1.0, static_cast<double>(step_index + 1) /
                                            static_cast<double>(config.warmup_steps));

            StepLosses losses = joint_step(batch, params, opt, config, lr_now, mode);
            sum_ner += losses.ner * static_cast<double>(losses.n_ner);
            sum_rc += losses.rc * static_cast<double>(losses.n_rc);
            sum_all += losses.all;
            n_ner += losses.n_ner;
            n_rc += losses.n_rc;
            ++n_steps;
            ++step_index;
        }

        EpochRecord record;
        record.epoch = epoch;
        record.loss_ner = n_ner > 0 ? sum_ner / static_cast<double>(n_ner) : 0.0;
        record.loss_rc = n_rc > 0 ? sum_rc / static_cast<double>(n_rc) : 0.0;
        record.loss_all = n_steps > 0 ? sum_all / static_cast<double>(n_steps) : 0.0;

        double score = 0;
        if (config.mode != TrainMode::rc_only) {
            MetricsReport ner = ner_eval(params, dataset.vocab, dataset.dev);
            record.dev_ner_p = ner.precision();
            record.dev_ner_r = ner.recall();
            record.dev_ner_f1 = ner.f1();
            score += ner.f1();
        }
        if (config.mode != TrainMode::ner_only) {
            MetricsReport rc = rc_eval_gold_entities(params, dataset.vocab, dataset.dev,
                                                     config.mask_variant);
            record.dev_rc_p = rc.precision();
            record.dev_rc_r = rc.recall();
            record.dev_rc_f1 = rc.f1();
            score += rc.f1();
        }
        result.log.push_back(record);

        if (score > best_score) {
            best_score = score;
            best_bytes = checkpoint_bytes(params);
            result.best_epoch = epoch;
        }
    }

    result.params = params_from_bytes(best_bytes);
    return result;
}

}  // namespace

TrainResult train(const Dataset& dataset, const ModelConfig& model_config,
                  const TrainConfig& config) {
    config.validate();
    if (dataset.train.empty()) throw ContractError("train: empty training split");
    ModelConfig mc = model_config.resolved();
    mc.encoder.vocab_size = dataset.vocab.size();
    if (config.k >= 0) mc.encoder.k_task = config.k;
    mc.validate();

    try {
        return run_training(dataset, mc, config, config.lr);
    } catch (const DivergenceError&) {
        // one deterministic retry at half the learning rate
        return run_training(dataset, mc, config, config.lr * 0.5);
    }
}

// --- checkpoints -------------------------------------------------------------

namespace {

constexpr char kMagic[4] = {'J', 'E', 'X', 'C'};
constexpr char kTrailer[4] = {'K', 'E', 'N', 'D'};
constexpr uint8_t kVersion = 1;

void put_u8(std::vector<uint8_t>& out, uint8_t v) { out.push_back(v); }

void put_u32(std::vector<uint8_t>& out, uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<uint8_t>((v >> (8 * i)) & 0xff));
}

void put_f64(std::vector<uint8_t>& out, double v) {
    uint64_t bits;
    static_assert(sizeof(bits) == sizeof(v));
    std::memcpy(&bits, &v, sizeof(bits));
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<uint8_t>((bits >> (8 * i)) & 0xff));
}

struct Reader {
    const std::vector<uint8_t>& data;
    size_t pos = 0;

    void need(size_t n) const {
        if (pos + n > data.size()) throw CheckpointCorruptError("checkpoint truncated");
    }
    uint8_t u8() {
        need(1);
        return data[pos++];
    }
    uint32_t u32() {
        need(4);
        uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(data[pos++]) << (8 * i);
        return v;
    }
    double f64() {
        need(8);
        uint64_t bits = 0;
        for (int i = 0; i < 8; ++i) bits |= static_cast<uint64_t>(data[pos++]) << (8 * i);
        double v;
        std::memcpy(&v, &bits, sizeof(v));
        return v;
    }
    std::string str(size_t n) {
        need(n);
        std::string s(reinterpret_cast<const char*>(data.data() + pos), n);
        pos += n;
        return s;
    }
};

}  // namespace

std::vector<uint8_t> checkpoint_bytes(const ModelParams& params) {
    std::vector<uint8_t> out;
    out.insert(out.end(), kMagic, kMagic + 4);
    put_u8(out, kVersion);

    std::string config_text;
    for (const auto& [k, v] : model_config_to_map(params.config))
        config_text += k + " = " + v + "\n";
    put_u32(out, static_cast<uint32_t>(config_text.size()));
    out.insert(out.end(), config_text.begin(), config_text.end());

    const auto named = params.named_parameters();
    put_u32(out, static_cast<uint32_t>(named.size()));
    for (const auto& [name, tensor] : named) {
        put_u32(out, static_cast<uint32_t>(name.size()));
        out.insert(out.end(), name.begin(), name.end());
        put_u8(out, static_cast<uint8_t>(tensor.shape().size()));
        for (int64_t dim : tensor.shape()) put_u32(out, static_cast<uint32_t>(dim));
        for (real v : tensor.values()) put_f64(out, static_cast<double>(v));
    }
    out.insert(out.end(), kTrailer, kTrailer + 4);
    return out;
}

ModelParams params_from_bytes(const std::vector<uint8_t>& bytes) {
    Reader r{bytes};
    if (r.str(4) != std::string(kMagic, 4))
        throw CheckpointCorruptError("checkpoint: bad magic header");
    const uint8_t version = r.u8();
    if (version != kVersion)
        throw CheckpointVersionError("checkpoint: version " + std::to_string(version) +
                                     " is not supported (expected " + std::to_string(kVersion) +
                                     ")");
    const uint32_t config_len = r.u32();
    const std::string config_text = r.str(config_len);
    std::map<std::string, std::string> config_map;
    {
        std::istringstream in(config_text);
        std::string line;
        while (std::getline(in, line)) {
            const size_t eq = line.find('=');
            if (eq == std::string::npos) continue;
            std::string key = line.substr(0, eq);
            std::string value = line.substr(eq + 1);
            auto strip = [](std::string& s) {
                while (!s.empty() && (s.front() == ' ')) s.erase(s.begin());
                while (!s.empty() && (s.back() == ' ' || s.back() == '\r')) s.pop_back();
            };
            strip(key);
            strip(value);
            config_map[key] = value;
        }
    }
    ModelParams params = ModelParams::init(model_config_from_map(config_map), /*seed=*/0);

    std::map<std::string, Tensor> by_name;
    for (auto& [name, tensor] : params.named_parameters()) by_name.emplace(name, tensor);

    const uint32_t n_tensors = r.u32();
    if (n_tensors != by_name.size())
        throw CheckpointCorruptError("checkpoint: expected " + std::to_string(by_name.size()) +
                                     " tensors, found " + std::to_string(n_tensors));
    for (uint32_t i = 0; i < n_tensors; ++i) {
        const uint32_t name_len = r.u32();
        const std::string name = r.str(name_len);
        auto it = by_name.find(name);
        if (it == by_name.end())
            throw CheckpointCorruptError("checkpoint: unknown tensor '" + name + "'");
        const uint8_t rank = r.u8();
        Shape shape;
        for (uint8_t d = 0; d < rank; ++d) shape.push_back(static_cast<int64_t>(r.u32()));
        if (shape != it->second.shape())
            throw CheckpointCorruptError("checkpoint: tensor '" + name + "' has shape " +
                                         shape_str(shape) + ", expected " +
                                         shape_str(it->second.shape()));
        Tensor t = it->second;
        auto values = t.values_mut();
        for (real& v : values) v = static_cast<real>(r.f64());
    }
    if (r.str(4) != std::string(kTrailer, 4))
        throw CheckpointCorruptError("checkpoint: missing trailer");
    return params;
}

void save_checkpoint(const ModelParams& params, const std::string& path) {
    const std::vector<uint8_t> bytes = checkpoint_bytes(params);
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write checkpoint " + path);
    out.write(reinterpret_cast<const char*>(bytes.data()),
              static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("write failed for checkpoint " + path);
}

ModelParams load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot read checkpoint " + path);
    std::vector<uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                               std::istreambuf_iterator<char>());
    return params_from_bytes(bytes);
}

}  // namespace jex
