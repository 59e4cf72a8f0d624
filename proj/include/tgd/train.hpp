#pragma once

// Training protocols: noise-adaptive training from scratch, targeted (masked)
// fine-tuning, and Noise2Noise online adaptation on two thinned halves of a
// single acquisition.

#include <algorithm>
#include <chrono>
#include <cstdint>
#include <numeric>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "tgd/kse.hpp"
#include "tgd/masking.hpp"
#include "tgd/metrics.hpp"
#include "tgd/network.hpp"
#include "tgd/phantom.hpp"
#include "tgd/volume.hpp"

namespace tgd {

enum class TrainMode { scratch, tgd_finetune, n2n_online };

inline const char* to_string(TrainMode m) {
    switch (m) {
        case TrainMode::scratch: return "scratch";
        case TrainMode::tgd_finetune: return "tgd_finetune";
        case TrainMode::n2n_online: return "n2n_online";
    }
    return "?";
}

inline TrainMode train_mode_from_string(const std::string& s) {
    if (s == "scratch") return TrainMode::scratch;
    if (s == "tgd_finetune") return TrainMode::tgd_finetune;
    if (s == "n2n_online") return TrainMode::n2n_online;
    throw ConfigError("unknown training mode '" + s + "'");
}

struct TrainConfig {
    NetworkConfig network;
    TrainMode mode = TrainMode::scratch;
    double learning_rate = 1e-3;
    double weight_decay = 1e-5;
    int epochs = 500;
    int batch_size = 16;  // 0 trains full-batch
    std::uint64_t seed = 0;
    std::optional<double> phi;
    bool last_layer_frozen = false;
    KseConfig kse;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double adam_epsilon = 1e-8;

    /// Defaults of each protocol: 500 epochs at 1e-3 from scratch, 1e-4 for
    /// fine-tuning, 150 epochs for online N2N.
    static TrainConfig defaults_for(TrainMode mode) {
        TrainConfig c;
        c.mode = mode;
        if (mode != TrainMode::scratch) {
            c.learning_rate = 1e-4;
            c.phi = 0.3;
        }
        if (mode == TrainMode::n2n_online) c.epochs = 150;
        return c;
    }

    void validate() const {
        network.validate();
        kse.validate();
        if (!(learning_rate > 0)) throw ConfigError("train: learning_rate must be > 0");
        if (!(weight_decay >= 0)) throw ConfigError("train: weight_decay must be >= 0");
        if (epochs < 0 || (mode == TrainMode::scratch && epochs < 1)) throw ConfigError("train: epochs must be >= 1");
        if (batch_size < 0) throw ConfigError("train: batch_size must be >= 0");
        if (mode != TrainMode::scratch) {
            if (!phi) throw ConfigError("train: phi is required for targeted modes");
            if (!(*phi >= 0.0)) throw ConfigError("train: phi must be >= 0");
        }
    }

    AdamConfig adam() const { return {learning_rate, beta1, beta2, adam_epsilon, weight_decay}; }
};

/// Paired network inputs [n,slices,H,W] and targets [n,1,H,W].
struct TrainingSet {
    Tensor<float> inputs;
    Tensor<float> targets;

    std::size_t size() const { return inputs.empty() ? 0 : inputs.dim(0); }
};

namespace detail {

inline void append_pair(std::vector<float>& inputs, std::vector<float>& targets, const Tensor<float>& input_volume,
                        const Tensor<float>& target_volume, std::size_t slice, std::size_t count) {
    const std::size_t plane = input_volume.dim(1) * input_volume.dim(2);
    const std::size_t at = inputs.size();
    inputs.resize(at + count * plane);
    stack_slices(input_volume, slice, count, inputs.data() + at);
    const float* t = target_volume.data() + slice * plane;
    targets.insert(targets.end(), t, t + plane);
}

inline TrainingSet finish_set(std::vector<float> inputs, std::vector<float> targets, std::size_t count, std::size_t H,
                              std::size_t W) {
    const std::size_t n = targets.size() / (H * W);
    return {Tensor<float>({n, count, H, W}, std::move(inputs)), Tensor<float>({n, 1, H, W}, std::move(targets))};
}

}  // namespace detail

/// Every (count level, slice) of the chosen split becomes one training pair.
inline TrainingSet make_training_set(const Dataset& ds, bool validation, int input_slices) {
    std::vector<float> inputs, targets;
    std::size_t H = 0, W = 0;
    for (const auto& p : ds.phantoms) {
        if (p.validation != validation) continue;
        H = p.target.dim(1);
        W = p.target.dim(2);
        for (const auto& in : p.inputs) {
            for (std::size_t s = 0; s < p.target.dim(0); ++s) {
                detail::append_pair(inputs, targets, in, p.target, s, static_cast<std::size_t>(input_slices));
            }
        }
    }
    if (targets.empty()) return {};
    return detail::finish_set(std::move(inputs), std::move(targets), static_cast<std::size_t>(input_slices), H, W);
}

/// Noise2Noise pairs from two independent realizations: each half predicts the
/// other. The two directions are ordered by content so that swapping the
/// halves yields the same set in the same order.
inline TrainingSet make_n2n_set(const Tensor<float>& half1, const Tensor<float>& half2, int input_slices) {
    require_rank(half1.shape(), 3, "make_n2n_set");
    if (half1.shape() != half2.shape()) {
        throw ShapeError("make_n2n_set: realizations differ in shape " + shape_string(half1.shape()) + " vs " +
                         shape_string(half2.shape()));
    }
    Fnv1a h1, h2;
    h1.update(half1.values());
    h2.update(half2.values());
    const bool keep = h1.digest() <= h2.digest();
    const Tensor<float>& a = keep ? half1 : half2;
    const Tensor<float>& b = keep ? half2 : half1;
    std::vector<float> inputs, targets;
    for (std::size_t s = 0; s < a.dim(0); ++s) {
        detail::append_pair(inputs, targets, a, b, s, static_cast<std::size_t>(input_slices));
        detail::append_pair(inputs, targets, b, a, s, static_cast<std::size_t>(input_slices));
    }
    return detail::finish_set(std::move(inputs), std::move(targets), static_cast<std::size_t>(input_slices), a.dim(1),
                              a.dim(2));
}

struct EpochRecord {
    int epoch = 0;
    double train_loss = 0.0;
};

struct TrainRecord {
    TrainConfig config;
    std::vector<EpochRecord> epochs;
    std::optional<double> validation_mse;
    double wall_seconds = 0.0;
    std::uint64_t initial_hash = 0;
    std::uint64_t final_hash = 0;
    std::size_t retrained_channels = 0;

    double initial_loss() const { return epochs.empty() ? 0.0 : epochs.front().train_loss; }
    double final_loss() const { return epochs.empty() ? 0.0 : epochs.back().train_loss; }
};

/// Infer-mode MSE of the network over a training set.
inline double evaluate_mse(const Network<float>& net, const TrainingSet& set, std::size_t chunk = 32) {
    if (set.size() == 0) throw std::invalid_argument("evaluate_mse: empty set");
    const std::size_t per_in = set.inputs.size() / set.size(), per_out = set.targets.size() / set.size();
    double sum = 0.0;
    for (std::size_t start = 0; start < set.size(); start += chunk) {
        const std::size_t n = std::min(chunk, set.size() - start);
        Shape in_shape = set.inputs.shape();
        in_shape[0] = n;
        std::vector<float> in(set.inputs.data() + start * per_in, set.inputs.data() + (start + n) * per_in);
        const auto out = forward(net, Tensor<float>(in_shape, std::move(in)), Mode::infer);
        for (std::size_t i = 0; i < n * per_out; ++i) {
            const double d = static_cast<double>(out[i]) - set.targets[start * per_out + i];
            sum += d * d;
        }
    }
    return sum / static_cast<double>(set.targets.size());
}

/// Runs `config.epochs` epochs of Adam on `net` in place. With `masks`, only
/// channels whose mask entry is 1 are updated; without, every channel is.
/// Batches are drawn in a seed-determined order; full-batch mode keeps the
/// set order fixed.
inline TrainRecord run_training(Network<float>& net, const TrainConfig& config, const TrainingSet& train,
                                const TrainingSet* validation = nullptr, const MaskSet* masks = nullptr) {
    if (train.size() == 0) throw std::invalid_argument("training: empty dataset");
    if (train.inputs.dim(1) != static_cast<std::size_t>(net.config.input_slices)) {
        throw ShapeError("training: inputs have " + std::to_string(train.inputs.dim(1)) + " slices, network expects " +
                         std::to_string(net.config.input_slices));
    }
    const auto start = std::chrono::steady_clock::now();
    TrainRecord record;
    record.config = config;
    record.initial_hash = network_hash(net);
    record.retrained_channels = masks ? masks->retrained_channels() : 0;

    const std::size_t n = train.size();
    const std::size_t batch = (config.batch_size <= 0 || static_cast<std::size_t>(config.batch_size) >= n)
                                  ? n
                                  : static_cast<std::size_t>(config.batch_size);
    const std::size_t per_in = train.inputs.size() / n, per_out = train.targets.size() / n;
    const AdamConfig adam = config.adam();
    auto state = AdamState<float>::zeros_like(net);
    std::mt19937_64 rng(config.seed ^ 0x5eedba7c4ULL);
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});

    for (int epoch = 1; epoch <= config.epochs; ++epoch) {
        if (batch < n) std::shuffle(order.begin(), order.end(), rng);
        double loss_sum = 0.0;
        for (std::size_t first = 0, b = 0; first < n; first += b) {
            b = std::min(batch, n - first);
            if (n - first - b == 1) ++b;  // a lone trailing sample has no batch statistics; fold it in
            Shape in_shape = train.inputs.shape(), out_shape = train.targets.shape();
            in_shape[0] = out_shape[0] = b;
            Tensor<float> x(in_shape), target(out_shape);
            for (std::size_t i = 0; i < b; ++i) {
                const std::size_t src = order[first + i];
                std::copy_n(train.inputs.data() + src * per_in, per_in, x.data() + i * per_in);
                std::copy_n(train.targets.data() + src * per_out, per_out, target.data() + i * per_out);
            }
            const auto trace = forward_trace(net, x, Mode::train);
            Tensor<float> grad(out_shape);
            double loss = 0.0;
            const double scale = 2.0 / static_cast<double>(target.size());
            for (std::size_t i = 0; i < target.size(); ++i) {
                const double d = static_cast<double>(trace.output[i]) - target[i];
                loss += d * d;
                grad[i] = static_cast<float>(scale * d);
            }
            loss /= static_cast<double>(target.size());
            loss_sum += loss * static_cast<double>(b);
            const auto grads = backward(net, trace, grad);
            apply_step(net, grads, trace, masks, state, adam);
        }
        const double epoch_loss = loss_sum / static_cast<double>(n);
        if (!std::isfinite(epoch_loss)) throw std::runtime_error("training diverged at epoch " + std::to_string(epoch));
        record.epochs.push_back({epoch, epoch_loss});
    }
    if (validation && validation->size() > 0) record.validation_mse = evaluate_mse(net, *validation);
    record.final_hash = network_hash(net);
    record.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return record;
}

struct TrainResult {
    Network<float> net;
    TrainRecord record;
};

struct TargetedResult {
    Network<float> net;
    TrainRecord record;
    MaskSet masks;
};

/// Noise-adaptive training of a freshly initialized network.
inline TrainResult train_scratch(const TrainConfig& config, const TrainingSet& train,
                                 const TrainingSet* validation = nullptr) {
    config.validate();
    if (train.size() == 0) throw std::invalid_argument("train_scratch: empty dataset");
    auto net = build_network<float>(config.network, config.seed);
    auto record = run_training(net, config, train, validation);
    return {std::move(net), std::move(record)};
}

/// Unmasked training that continues from an existing network.
inline TrainResult train_warm(Network<float> net, const TrainConfig& config, const TrainingSet& train,
                              const TrainingSet* validation = nullptr) {
    auto record = run_training(net, config, train, validation);
    return {std::move(net), std::move(record)};
}

/// Scores the network, builds masks at `config.phi` and retrains only the
/// channels that produce low-KSE feature maps.
inline TargetedResult finetune_tgd(Network<float> net, const TrainConfig& config, const TrainingSet& train,
                                   const TrainingSet* validation = nullptr, int generation = 1) {
    if (!config.phi) throw ConfigError("finetune_tgd: phi is required");
    TrainConfig cfg = config;
    cfg.network = net.config;
    cfg.validate();
    if (train.size() == 0) throw std::invalid_argument("finetune_tgd: empty dataset");
    auto masks = build_masks(net, kse_scores(net, cfg.kse), *cfg.phi, cfg.last_layer_frozen, generation);
    auto record = run_training(net, cfg, train, validation, &masks);
    return {std::move(net), std::move(record), std::move(masks)};
}

/// Online adaptation to one study: targeted fine-tuning on the two thinned
/// halves, each serving as the other's target.
inline TargetedResult online_n2n(Network<float> net, const TrainConfig& config, const Tensor<float>& half1,
                                 const Tensor<float>& half2, int generation = 1) {
    const auto set = make_n2n_set(half1, half2, net.config.input_slices);
    return finetune_tgd(std::move(net), config, set, nullptr, generation);
}

}  // namespace tgd
