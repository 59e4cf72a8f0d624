#pragma once

// Kernel sparsity and entropy (KSE) scoring of the input feature maps of each
// conv layer, and kernel dropping driven by the score.
//
// For input channel c of a layer with weights W[N,C,3,3]:
//   s_c  = sum_n |W[n,c]|_1
//   dm_i = sum of Euclidean distances from W[i,c] to its k nearest W[j,c]
//   e_c  = entropy (base 2) of dm / sum(dm)
//   KSE  = sqrt(s~_c / (1 + alpha * e~_c)), with ~ a per-layer min-max rescale.
// Low KSE marks a redundant feature map.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "tgd/network.hpp"

namespace tgd {

struct KseConfig {
    double alpha = 1.0;
    int k_neighbors = 5;

    void validate() const {
        if (!(alpha >= 0.0)) throw ConfigError("kse: alpha must be >= 0");
        if (k_neighbors < 1) throw ConfigError("kse: k_neighbors must be >= 1");
    }
};

struct LayerKse {
    std::size_t conv_layer = 0;  // index of the conv layer whose inputs were scored
    std::vector<double> sparsity;
    std::vector<double> entropy;
    std::vector<double> sparsity_norm;
    std::vector<double> entropy_norm;
    std::vector<double> kse;
};

struct KseReport {
    KseConfig config;
    std::uint64_t source_hash = 0;
    std::vector<LayerKse> layers;

    const LayerKse* find(std::size_t conv_layer) const {
        for (const auto& l : layers) {
            if (l.conv_layer == conv_layer) return &l;
        }
        return nullptr;
    }
};

namespace detail {

template <class T>
void check_kernel_channel(const Tensor<T>& weights, std::size_t c, const char* what) {
    require_rank(weights.shape(), 4, what);
    if (c >= weights.dim(1)) {
        throw std::out_of_range(std::string(what) + ": channel " + std::to_string(c) + " out of range [0," +
                                std::to_string(weights.dim(1)) + ")");
    }
}

template <class T>
const T* kernel_ptr(const Tensor<T>& weights, std::size_t n, std::size_t c) {
    return weights.data() + (n * weights.dim(1) + c) * weights.dim(2) * weights.dim(3);
}

}  // namespace detail

template <class T>
double kernel_sparsity(const Tensor<T>& weights, std::size_t c) {
    detail::check_kernel_channel(weights, c, "kernel_sparsity");
    const std::size_t area = weights.dim(2) * weights.dim(3);
    double s = 0.0;
    for (std::size_t n = 0; n < weights.dim(0); ++n) {
        const T* k = detail::kernel_ptr(weights, n, c);
        for (std::size_t i = 0; i < area; ++i) s += std::abs(static_cast<double>(k[i]));
    }
    return s;
}

/// k is clamped to N-1. Ties at the k-th neighbor go to the lower channel index.
template <class T>
std::vector<double> density_metric(const Tensor<T>& weights, std::size_t c, int k_neighbors) {
    detail::check_kernel_channel(weights, c, "density_metric");
    const std::size_t n_kernels = weights.dim(0), area = weights.dim(2) * weights.dim(3);
    std::vector<double> dm(n_kernels, 0.0);
    if (n_kernels < 2 || k_neighbors < 1) return dm;
    const std::size_t k = std::min<std::size_t>(static_cast<std::size_t>(k_neighbors), n_kernels - 1);

    std::vector<double> dist(n_kernels * n_kernels, 0.0);
    for (std::size_t i = 0; i < n_kernels; ++i) {
        const T* a = detail::kernel_ptr(weights, i, c);
        for (std::size_t j = i + 1; j < n_kernels; ++j) {
            const T* b = detail::kernel_ptr(weights, j, c);
            double d2 = 0.0;
            for (std::size_t e = 0; e < area; ++e) {
                const double d = static_cast<double>(a[e]) - static_cast<double>(b[e]);
                d2 += d * d;
            }
            dist[i * n_kernels + j] = dist[j * n_kernels + i] = std::sqrt(d2);
        }
    }
    std::vector<std::size_t> order;
    order.reserve(n_kernels - 1);
    for (std::size_t i = 0; i < n_kernels; ++i) {
        order.clear();
        for (std::size_t j = 0; j < n_kernels; ++j) {
            if (j != i) order.push_back(j);
        }
        const double* row = dist.data() + i * n_kernels;
        std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k), order.end(),
                          [row](std::size_t a, std::size_t b) { return row[a] < row[b] || (row[a] == row[b] && a < b); });
        double sum = 0.0;
        for (std::size_t r = 0; r < k; ++r) sum += row[order[r]];
        dm[i] = sum;
    }
    return dm;
}

/// Entropy of a nonnegative density vector. A single kernel carries no
/// entropy; an all-zero density is treated as uniform (log2 N).
inline double entropy_of_density(const std::vector<double>& dm) {
    const std::size_t n = dm.size();
    if (n <= 1) return 0.0;
    double total = 0.0;
    for (double v : dm) total += v;
    if (!(total > 0.0)) return std::log2(static_cast<double>(n));
    double e = 0.0;
    for (double v : dm) {
        if (v > 0.0) {
            const double p = v / total;
            e -= p * std::log2(p);
        }
    }
    return e;
}

template <class T>
double kernel_entropy(const Tensor<T>& weights, std::size_t c, const KseConfig& config = {}) {
    return entropy_of_density(density_metric(weights, c, config.k_neighbors));
}

/// Min-max rescale to [0,1]; a constant sequence maps to all zeros.
inline std::vector<double> min_max_normalize(const std::vector<double>& v) {
    std::vector<double> out(v.size(), 0.0);
    if (v.empty()) return out;
    const auto [lo, hi] = std::minmax_element(v.begin(), v.end());
    const double range = *hi - *lo;
    if (!(range > 0.0)) return out;
    for (std::size_t i = 0; i < v.size(); ++i) out[i] = std::clamp((v[i] - *lo) / range, 0.0, 1.0);
    return out;
}

/// Scores the input channels of one conv layer's weights.
template <class T>
LayerKse score_layer(const Tensor<T>& weights, const KseConfig& config, std::size_t conv_layer = 0) {
    require_rank(weights.shape(), 4, "score_layer");
    LayerKse layer;
    layer.conv_layer = conv_layer;
    const std::size_t channels = weights.dim(1);
    layer.sparsity.resize(channels);
    layer.entropy.resize(channels);
    for (std::size_t c = 0; c < channels; ++c) {
        layer.sparsity[c] = kernel_sparsity(weights, c);
        layer.entropy[c] = kernel_entropy(weights, c, config);
    }
    layer.sparsity_norm = min_max_normalize(layer.sparsity);
    layer.entropy_norm = min_max_normalize(layer.entropy);
    layer.kse.resize(channels);
    for (std::size_t c = 0; c < channels; ++c) {
        layer.kse[c] = std::clamp(std::sqrt(layer.sparsity_norm[c] / (1.0 + config.alpha * layer.entropy_norm[c])), 0.0, 1.0);
    }
    return layer;
}

/// Scores every conv layer whose inputs are feature maps (all but the first).
template <class T>
KseReport kse_scores(const Network<T>& net, const KseConfig& config = {}) {
    config.validate();
    if (net.blocks.empty()) throw std::invalid_argument("kse_scores: network has no conv layers");
    KseReport report{config, network_hash(net), {}};
    for (std::size_t i = 1; i < net.blocks.size(); ++i) {
        report.layers.push_back(score_layer(net.blocks[i].conv.weights, config, i));
    }
    return report;
}

template <class T>
struct DropResult {
    Network<T> net;
    std::size_t dropped_params = 0;
    std::size_t total_params = 0;  // all conv weights in the network

    double dropped_fraction() const {
        return total_params ? static_cast<double>(dropped_params) / static_cast<double>(total_params) : 0.0;
    }
};

/// Zeroes the kernels W[., c] of every scored layer whose input map c has KSE < phi.
template <class T>
DropResult<T> drop_kernels(const Network<T>& net, const KseReport& report, double phi) {
    // phi above 1 is accepted and drops every scored kernel
    if (!(phi >= 0.0)) throw std::invalid_argument("drop_kernels: phi must be >= 0");
    DropResult<T> result{net, 0, 0};
    for (const auto& b : net.blocks) result.total_params += b.conv.weights.size();
    for (const auto& layer : report.layers) {
        if (layer.conv_layer >= result.net.blocks.size()) throw std::invalid_argument("drop_kernels: report does not match network");
        auto& w = result.net.blocks[layer.conv_layer].conv.weights;
        if (w.dim(1) != layer.kse.size()) throw std::invalid_argument("drop_kernels: report does not match network");
        const std::size_t area = w.dim(2) * w.dim(3);
        for (std::size_t c = 0; c < layer.kse.size(); ++c) {
            if (!(layer.kse[c] < phi)) continue;
            for (std::size_t n = 0; n < w.dim(0); ++n) {
                T* k = w.data() + (n * w.dim(1) + c) * area;
                std::fill(k, k + area, T(0));
            }
            result.dropped_params += w.dim(0) * area;
        }
    }
    return result;
}

}  // namespace tgd
