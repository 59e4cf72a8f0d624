#pragma once

// Residual 2.5-D denoiser: `depth` 3x3 conv layers, the first followed by
// ReLU, the interior ones by BN + ReLU, the last one bare with a single output
// channel. The center input slice is added to the last conv output.

#include <cmath>
#include <cstdint>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "tgd/hash.hpp"
#include "tgd/layers.hpp"
#include "tgd/tensor.hpp"

namespace tgd {

class ConfigError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

struct NetworkConfig {
    int depth = 8;
    int channels = 64;
    int input_slices = 3;

    void validate() const {
        if (depth < 3) throw ConfigError("network: depth must be >= 3, got " + std::to_string(depth));
        if (channels < 1) throw ConfigError("network: channels must be >= 1, got " + std::to_string(channels));
        if (input_slices < 1 || input_slices % 2 == 0) {
            throw ConfigError("network: input_slices must be a positive odd number, got " + std::to_string(input_slices));
        }
    }

    friend bool operator==(const NetworkConfig&, const NetworkConfig&) = default;
};

/// One conv layer together with the BN and activation that follow it.
template <class T>
struct ConvBlock {
    ConvParams<T> conv;
    std::optional<BatchNormParams<T>> bn;
    bool relu = true;
};

template <class T>
struct Network {
    NetworkConfig config;
    std::vector<ConvBlock<T>> blocks;
    std::string version_tag;

    std::size_t depth() const { return blocks.size(); }
    std::size_t center_slice() const { return static_cast<std::size_t>(config.input_slices / 2); }

    template <class U>
    Network<U> cast() const {
        Network<U> out{config, {}, version_tag};
        for (const auto& b : blocks) {
            ConvBlock<U> nb{{b.conv.weights.template cast<U>(), b.conv.bias.template cast<U>()}, std::nullopt, b.relu};
            if (b.bn) {
                nb.bn = BatchNormParams<U>{b.bn->gamma.template cast<U>(),        b.bn->beta.template cast<U>(),
                                           b.bn->running_mean.template cast<U>(), b.bn->running_var.template cast<U>(),
                                           static_cast<U>(b.bn->momentum),        static_cast<U>(b.bn->epsilon)};
            }
            out.blocks.push_back(std::move(nb));
        }
        return out;
    }
};

/// Layer i input and output channel counts for a config.
inline std::size_t layer_in_channels(const NetworkConfig& cfg, std::size_t layer) {
    return layer == 0 ? static_cast<std::size_t>(cfg.input_slices) : static_cast<std::size_t>(cfg.channels);
}
inline std::size_t layer_out_channels(const NetworkConfig& cfg, std::size_t layer) {
    return layer + 1 == static_cast<std::size_t>(cfg.depth) ? 1 : static_cast<std::size_t>(cfg.channels);
}
/// Interior layers feed a BN, which makes a conv bias redundant.
inline bool layer_has_bn(const NetworkConfig& cfg, std::size_t layer) {
    return layer > 0 && layer + 1 < static_cast<std::size_t>(cfg.depth);
}

/// Closed-form trainable parameter count: conv weights, conv biases, BN gamma and beta.
inline std::size_t parameter_count(const NetworkConfig& cfg) {
    std::size_t total = 0;
    for (std::size_t i = 0; i < static_cast<std::size_t>(cfg.depth); ++i) {
        const std::size_t n = layer_out_channels(cfg, i), c = layer_in_channels(cfg, i);
        total += n * c * kKernelArea;
        total += layer_has_bn(cfg, i) ? 2 * n : n;
    }
    return total;
}

template <class T = float>
Network<T> build_network(const NetworkConfig& config, std::uint64_t seed) {
    config.validate();
    Network<T> net{config, {}, "tgd-dncnn"};
    std::mt19937_64 rng(seed);
    for (std::size_t i = 0; i < static_cast<std::size_t>(config.depth); ++i) {
        const std::size_t n = layer_out_channels(config, i), c = layer_in_channels(config, i);
        const bool bn = layer_has_bn(config, i);
        ConvBlock<T> block;
        block.conv.weights = Tensor<T>({n, c, kKernelSize, kKernelSize});
        std::normal_distribution<double> he(0.0, std::sqrt(2.0 / static_cast<double>(c * kKernelArea)));
        for (auto& w : block.conv.weights.values()) w = static_cast<T>(he(rng));
        if (!bn) block.conv.bias = Tensor<T>({n}, T(0));
        if (bn) block.bn = BatchNormParams<T>::identity(n);
        block.relu = i + 1 < static_cast<std::size_t>(config.depth);
        net.blocks.push_back(std::move(block));
    }
    return net;
}

template <class T>
struct BlockTrace {
    Tensor<T> input;     // conv input
    Tensor<T> conv_out;  // BN input when the block has one
    BatchStats<T> stats;
};

template <class T>
struct ForwardTrace {
    std::vector<BlockTrace<T>> blocks;
    Tensor<T> output;
};

template <class T>
struct BlockGrads {
    Tensor<T> weights;
    Tensor<T> bias;
    Tensor<T> gamma;
    Tensor<T> beta;
};

template <class T>
using NetworkGrads = std::vector<BlockGrads<T>>;

namespace detail {

template <class T>
void check_network_input(const Network<T>& net, const Tensor<T>& x) {
    require_rank(x.shape(), 4, "forward");
    if (x.dim(1) != static_cast<std::size_t>(net.config.input_slices)) {
        throw ShapeError("forward: input has " + std::to_string(x.dim(1)) + " slices, network expects " +
                         std::to_string(net.config.input_slices));
    }
    if (x.dim(2) < 3 || x.dim(3) < 3) throw ShapeError("forward: spatial size must be at least 3x3");
}

template <class T>
void add_center_slice(Tensor<T>& out, const Tensor<T>& x, std::size_t center) {
    const std::size_t plane = x.dim(2) * x.dim(3), slices = x.dim(1);
    for (std::size_t b = 0; b < x.dim(0); ++b) {
        const T* src = x.data() + (b * slices + center) * plane;
        T* dst = out.data() + b * plane;
        for (std::size_t i = 0; i < plane; ++i) dst[i] += src[i];
    }
}

}  // namespace detail

/// Forward pass that keeps the activations needed by `backward`.
template <class T>
ForwardTrace<T> forward_trace(const Network<T>& net, const Tensor<T>& x, Mode mode) {
    detail::check_network_input(net, x);
    ForwardTrace<T> trace;
    trace.blocks.reserve(net.blocks.size());
    Tensor<T> h = x;
    for (const auto& block : net.blocks) {
        BlockTrace<T> bt;
        bt.input = std::move(h);
        bt.conv_out = conv2d_forward(bt.input, block.conv);
        Tensor<T> y;
        if (block.bn) {
            auto bn = batchnorm_forward(bt.conv_out, *block.bn, mode);
            y = std::move(bn.output);
            bt.stats = std::move(bn.stats);
        } else {
            y = bt.conv_out;
        }
        h = block.relu ? relu_forward(y) : std::move(y);
        trace.blocks.push_back(std::move(bt));
    }
    detail::add_center_slice(h, x, net.center_slice());
    trace.output = std::move(h);
    return trace;
}

template <class T>
Tensor<T> forward(const Network<T>& net, const Tensor<T>& x, Mode mode = Mode::infer) {
    detail::check_network_input(net, x);
    Tensor<T> h = x;
    for (const auto& block : net.blocks) {
        h = conv2d_forward(h, block.conv);
        if (block.bn) h = batchnorm_forward(h, *block.bn, mode).output;
        if (block.relu) h = relu_forward(h);
    }
    detail::add_center_slice(h, x, net.center_slice());
    return h;
}

/// Parameter gradients for a traced forward pass given dL/d(output).
template <class T>
NetworkGrads<T> backward(const Network<T>& net, const ForwardTrace<T>& trace, const Tensor<T>& grad_out) {
    if (grad_out.shape() != trace.output.shape()) {
        throw ShapeError("backward: grad_out shape " + shape_string(grad_out.shape()) + " != output shape");
    }
    NetworkGrads<T> grads(net.blocks.size());
    Tensor<T> g = grad_out;  // the residual join passes the gradient straight to the last conv
    for (std::size_t j = net.blocks.size(); j-- > 0;) {
        const auto& block = net.blocks[j];
        const auto& bt = trace.blocks[j];
        if (block.relu) {
            // relu(y) > 0 exactly where y > 0, and relu(y) is the next block's input
            const Tensor<T>& activated = trace.blocks[j + 1].input;
            for (std::size_t i = 0; i < g.size(); ++i) {
                if (!(activated[i] > T(0))) g[i] = T(0);
            }
        }
        if (block.bn) {
            auto bg = batchnorm_backward(bt.conv_out, *block.bn, bt.stats, g);
            grads[j].gamma = std::move(bg.gamma);
            grads[j].beta = std::move(bg.beta);
            g = std::move(bg.input);
        }
        auto cg = conv2d_backward(bt.input, block.conv, g);
        grads[j].weights = std::move(cg.weights);
        grads[j].bias = std::move(cg.bias);
        g = std::move(cg.input);
    }
    return grads;
}

/// Fingerprint of the config and every parameter and running statistic.
template <class T>
std::uint64_t network_hash(const Network<T>& net) {
    Fnv1a h;
    h.update_value(net.config.depth);
    h.update_value(net.config.channels);
    h.update_value(net.config.input_slices);
    for (const auto& b : net.blocks) {
        h.update(b.conv.weights.values());
        h.update(b.conv.bias.values());
        if (b.bn) {
            h.update(b.bn->gamma.values());
            h.update(b.bn->beta.values());
            h.update(b.bn->running_mean.values());
            h.update(b.bn->running_var.values());
        }
    }
    return h.digest();
}

/// Bit-level equality of every parameter and running statistic.
template <class T>
bool networks_bit_equal(const Network<T>& a, const Network<T>& b) {
    if (!(a.config == b.config) || a.blocks.size() != b.blocks.size()) return false;
    for (std::size_t i = 0; i < a.blocks.size(); ++i) {
        const auto& x = a.blocks[i];
        const auto& y = b.blocks[i];
        if (!bit_equal(x.conv.weights, y.conv.weights) || !bit_equal(x.conv.bias, y.conv.bias)) return false;
        if (x.bn.has_value() != y.bn.has_value()) return false;
        if (x.bn && (!bit_equal(x.bn->gamma, y.bn->gamma) || !bit_equal(x.bn->beta, y.bn->beta) ||
                     !bit_equal(x.bn->running_mean, y.bn->running_mean) ||
                     !bit_equal(x.bn->running_var, y.bn->running_var))) {
            return false;
        }
    }
    return true;
}

}  // namespace tgd
