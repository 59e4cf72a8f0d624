#pragma once

// Gradient masks for targeted retraining. A mask entry of 1 lets an output
// channel (its kernel slice W[n,:,:,:], bias, and following BN gamma/beta and
// running statistics) train; 0 freezes it bit-exactly. Masks act only in the
// update path: forward passes never see them.

#include <cmath>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "tgd/kse.hpp"
#include "tgd/network.hpp"

namespace tgd {

using ChannelMask = std::vector<std::uint8_t>;

struct MaskSet {
    std::vector<ChannelMask> conv;  // per conv layer, one entry per output channel
    std::vector<ChannelMask> bn;    // per conv layer; empty where no BN follows
    double phi = 0.0;
    std::uint64_t source_hash = 0;
    int generation = 1;
    bool last_layer_frozen = false;

    /// Uniform mask shaped for `net`.
    template <class T>
    static MaskSet uniform(const Network<T>& net, std::uint8_t value) {
        MaskSet m;
        m.source_hash = network_hash(net);
        for (const auto& b : net.blocks) {
            m.conv.emplace_back(b.conv.out_channels(), value);
            m.bn.push_back(b.bn ? ChannelMask(b.bn->channels(), value) : ChannelMask{});
        }
        return m;
    }

    std::size_t retrained_channels() const {
        std::size_t n = 0;
        for (const auto& l : conv) {
            for (auto v : l) n += v;
        }
        return n;
    }

    friend bool operator==(const MaskSet&, const MaskSet&) = default;
};

/// Number of (layer, channel) entries that differ between two mask sets of the same shape.
inline std::size_t mask_symmetric_difference(const MaskSet& a, const MaskSet& b) {
    if (a.conv.size() != b.conv.size()) throw std::invalid_argument("mask_symmetric_difference: layer count differs");
    std::size_t diff = 0;
    for (std::size_t l = 0; l < a.conv.size(); ++l) {
        if (a.conv[l].size() != b.conv[l].size()) throw std::invalid_argument("mask_symmetric_difference: shape differs");
        for (std::size_t c = 0; c < a.conv[l].size(); ++c) diff += a.conv[l][c] != b.conv[l][c];
    }
    return diff;
}

/// Maps KSE of layer i's input maps onto the output channels of layer i-1:
/// channel n of layer i-1 retrains iff KSE_i(n) < phi. The BN after layer i-1
/// shares that mask. The last layer has a single output that no later layer
/// scores; it is frozen when `last_layer_frozen`, otherwise it follows the
/// rule with a score of 0 (trains for any phi > 0).
template <class T>
MaskSet build_masks(const Network<T>& net, const KseReport& report, double phi, bool last_layer_frozen,
                    int generation = 1) {
    if (!(phi >= 0.0)) throw std::invalid_argument("build_masks: phi must be >= 0");
    const std::uint64_t hash = network_hash(net);
    if (report.source_hash != hash) {
        throw std::invalid_argument("build_masks: KSE report was computed from a different network (" +
                                    hex_digest(report.source_hash) + " vs " + hex_digest(hash) + ")");
    }
    MaskSet masks = MaskSet::uniform(net, 0);
    masks.phi = phi;
    masks.generation = generation;
    masks.last_layer_frozen = last_layer_frozen;

    const std::size_t depth = net.blocks.size();
    for (std::size_t i = 1; i < depth; ++i) {
        const LayerKse* layer = report.find(i);
        if (!layer || layer->kse.size() != net.blocks[i].conv.in_channels() ||
            layer->kse.size() != net.blocks[i - 1].conv.out_channels()) {
            throw std::invalid_argument("build_masks: report has no matching scores for conv layer " + std::to_string(i));
        }
        for (std::size_t c = 0; c < layer->kse.size(); ++c) masks.conv[i - 1][c] = layer->kse[c] < phi ? 1 : 0;
        if (net.blocks[i - 1].bn) masks.bn[i - 1] = masks.conv[i - 1];
    }
    const std::uint8_t last = (!last_layer_frozen && 0.0 < phi) ? 1 : 0;
    std::fill(masks.conv[depth - 1].begin(), masks.conv[depth - 1].end(), last);
    return masks;
}

/// Fresh masks from the current weights; no memory of earlier masks beyond the counter.
template <class T>
MaskSet remask(const Network<T>& net, double phi, int previous_generation, bool last_layer_frozen,
               const KseConfig& config = {}) {
    return build_masks(net, kse_scores(net, config), phi, last_layer_frozen, previous_generation + 1);
}

struct AdamConfig {
    double learning_rate = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    double weight_decay = 0.0;  // L2 term added to conv weight gradients
};

template <class T>
struct Moments {
    Tensor<T> m;
    Tensor<T> v;

    static Moments like(const Tensor<T>& t) { return {Tensor<T>(t.shape()), Tensor<T>(t.shape())}; }
};

template <class T>
struct BlockMoments {
    Moments<T> weights, bias, gamma, beta;
};

template <class T>
struct AdamState {
    std::vector<BlockMoments<T>> blocks;
    std::int64_t step = 0;

    static AdamState zeros_like(const Network<T>& net) {
        AdamState s;
        for (const auto& b : net.blocks) {
            BlockMoments<T> bm{Moments<T>::like(b.conv.weights), Moments<T>::like(b.conv.bias), {}, {}};
            if (b.bn) {
                bm.gamma = Moments<T>::like(b.bn->gamma);
                bm.beta = Moments<T>::like(b.bn->beta);
            }
            s.blocks.push_back(std::move(bm));
        }
        return s;
    }
};

namespace detail {

// Adam on one contiguous slice of parameters.
template <class T>
void adam_slice(T* param, const T* grad, T* m, T* v, std::size_t n, const AdamConfig& cfg, double decay,
                double correction1, double correction2) {
    for (std::size_t i = 0; i < n; ++i) {
        const double g = static_cast<double>(grad[i]) + decay * static_cast<double>(param[i]);
        const double mi = cfg.beta1 * static_cast<double>(m[i]) + (1.0 - cfg.beta1) * g;
        const double vi = cfg.beta2 * static_cast<double>(v[i]) + (1.0 - cfg.beta2) * g * g;
        m[i] = static_cast<T>(mi);
        v[i] = static_cast<T>(vi);
        const double mhat = static_cast<double>(m[i]) / correction1;
        const double vhat = static_cast<double>(v[i]) / correction2;
        param[i] = static_cast<T>(static_cast<double>(param[i]) - cfg.learning_rate * mhat / (std::sqrt(vhat) + cfg.epsilon));
    }
}

inline std::pair<double, double> bias_corrections(const AdamConfig& cfg, std::int64_t step) {
    if (step < 1) throw std::invalid_argument("adam: step counter must be >= 1");
    return {1.0 - std::pow(cfg.beta1, static_cast<double>(step)), 1.0 - std::pow(cfg.beta2, static_cast<double>(step))};
}

inline void check_mask(std::span<const std::uint8_t> mask, std::size_t channels, const char* what) {
    if (mask.size() != channels) {
        throw std::invalid_argument(std::string(what) + ": mask length " + std::to_string(mask.size()) +
                                    " != output channels " + std::to_string(channels));
    }
}

}  // namespace detail

/// One Adam step on a conv layer restricted to output channels with mask 1.
/// Frozen channels keep their weights, bias and moments untouched; weight decay
/// is masked the same way since it only enters through the gradient.
template <class T>
void masked_update(ConvParams<T>& params, const Tensor<T>& grad_weights, const Tensor<T>& grad_bias,
                   std::span<const std::uint8_t> mask, BlockMoments<T>& state, const AdamConfig& cfg,
                   std::int64_t step) {
    const std::size_t out = params.out_channels();
    detail::check_mask(mask, out, "masked_update");
    if (grad_weights.shape() != params.weights.shape() || grad_bias.shape() != params.bias.shape()) {
        throw ShapeError("masked_update: gradient shapes do not match parameters");
    }
    const auto [c1, c2] = detail::bias_corrections(cfg, step);
    const std::size_t slice = params.weights.size() / out;
    for (std::size_t n = 0; n < out; ++n) {
        if (mask[n] == 0) continue;
        const std::size_t o = n * slice;
        detail::adam_slice(params.weights.data() + o, grad_weights.data() + o, state.weights.m.data() + o,
                           state.weights.v.data() + o, slice, cfg, cfg.weight_decay, c1, c2);
        if (params.has_bias()) {
            detail::adam_slice(params.bias.data() + n, grad_bias.data() + n, state.bias.m.data() + n,
                               state.bias.v.data() + n, 1, cfg, 0.0, c1, c2);
        }
    }
}

/// One Adam step on gamma/beta plus the running-statistics EMA, all restricted
/// to channels with mask 1. Frozen channels stay bit-identical.
template <class T>
void masked_bn_update(BatchNormParams<T>& bn, const Tensor<T>& grad_gamma, const Tensor<T>& grad_beta,
                      const BatchStats<T>& stats, std::span<const std::uint8_t> mask, BlockMoments<T>& state,
                      const AdamConfig& cfg, std::int64_t step) {
    const std::size_t channels = bn.channels();
    detail::check_mask(mask, channels, "masked_bn_update");
    if (grad_gamma.size() != channels || grad_beta.size() != channels) {
        throw ShapeError("masked_bn_update: gradient shapes do not match parameters");
    }
    const auto [c1, c2] = detail::bias_corrections(cfg, step);
    for (std::size_t c = 0; c < channels; ++c) {
        if (mask[c] == 0) continue;
        detail::adam_slice(bn.gamma.data() + c, grad_gamma.data() + c, state.gamma.m.data() + c,
                           state.gamma.v.data() + c, 1, cfg, 0.0, c1, c2);
        detail::adam_slice(bn.beta.data() + c, grad_beta.data() + c, state.beta.m.data() + c,
                           state.beta.v.data() + c, 1, cfg, 0.0, c1, c2);
    }
    update_running_stats(bn, stats, mask);
}

/// Applies one optimizer step to the whole network. `masks == nullptr` trains
/// every channel through the same code path as an all-ones mask.
template <class T>
void apply_step(Network<T>& net, const NetworkGrads<T>& grads, const ForwardTrace<T>& trace, const MaskSet* masks,
                AdamState<T>& state, const AdamConfig& cfg) {
    if (grads.size() != net.blocks.size() || state.blocks.size() != net.blocks.size()) {
        throw std::invalid_argument("apply_step: gradients or optimizer state do not match network");
    }
    if (masks && masks->conv.size() != net.blocks.size()) {
        throw std::invalid_argument("apply_step: mask set does not match network depth");
    }
    ++state.step;
    for (std::size_t j = 0; j < net.blocks.size(); ++j) {
        auto& block = net.blocks[j];
        const ChannelMask ones(block.conv.out_channels(), 1);
        const ChannelMask& conv_mask = masks ? masks->conv[j] : ones;
        masked_update(block.conv, grads[j].weights, grads[j].bias, conv_mask, state.blocks[j], cfg, state.step);
        if (block.bn) {
            const ChannelMask& bn_mask = masks ? masks->bn[j] : ones;
            masked_bn_update(*block.bn, grads[j].gamma, grads[j].beta, trace.blocks[j].stats, bn_mask,
                             state.blocks[j], cfg, state.step);
        }
    }
}

}  // namespace tgd
