#pragma once

// Forward and backward passes for the fixed layer set of the denoiser:
// 3x3 "same" convolution, per-channel batch normalization and ReLU.
// All functions are pure; running statistics are advanced separately by
// update_running_stats so that callers can mask the update per channel.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "tgd/tensor.hpp"

namespace tgd {

inline constexpr std::size_t kKernelSize = 3;
inline constexpr std::size_t kKernelArea = kKernelSize * kKernelSize;

enum class Mode { train, infer };

template <class T>
struct ConvParams {
    Tensor<T> weights;  // [N_out, C_in, 3, 3]
    Tensor<T> bias;     // [N_out], or empty when the layer carries no bias

    std::size_t out_channels() const { return weights.dim(0); }
    std::size_t in_channels() const { return weights.dim(1); }
    bool has_bias() const { return !bias.empty(); }
};

template <class T>
struct ConvGrads {
    Tensor<T> input;
    Tensor<T> weights;
    Tensor<T> bias;  // empty when the layer carries no bias
};

template <class T>
struct BatchNormParams {
    Tensor<T> gamma;
    Tensor<T> beta;
    Tensor<T> running_mean;
    Tensor<T> running_var;
    T momentum = T(0.1);
    T epsilon = T(1e-5);

    std::size_t channels() const { return gamma.size(); }

    static BatchNormParams identity(std::size_t channels) {
        return {Tensor<T>({channels}, T(1)), Tensor<T>({channels}, T(0)), Tensor<T>({channels}, T(0)),
                Tensor<T>({channels}, T(1))};
    }
};

/// Per-channel statistics of one train-mode batch. `var` is the biased estimate.
template <class T>
struct BatchStats {
    std::vector<T> mean;
    std::vector<T> var;
    std::size_t count = 0;  // samples per channel (batch x spatial)
};

template <class T>
struct BatchNormResult {
    Tensor<T> output;
    BatchStats<T> stats;
};

template <class T>
struct BatchNormGrads {
    Tensor<T> input;
    Tensor<T> gamma;
    Tensor<T> beta;
};

namespace detail {

template <class T>
using RowMatrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <class T>
void check_conv_shapes(const Tensor<T>& input, const ConvParams<T>& params, const char* what) {
    require_rank(input.shape(), 4, what);
    require_rank(params.weights.shape(), 4, what);
    if (params.weights.dim(2) != kKernelSize || params.weights.dim(3) != kKernelSize) {
        throw ShapeError(std::string(what) + ": kernels must be 3x3, got " + shape_string(params.weights.shape()));
    }
    if (input.dim(1) != params.in_channels()) {
        throw ShapeError(std::string(what) + ": input has " + std::to_string(input.dim(1)) +
                         " channels but weights expect " + std::to_string(params.in_channels()));
    }
    if (params.has_bias() && params.bias.size() != params.out_channels()) {
        throw ShapeError(std::string(what) + ": bias length " + std::to_string(params.bias.size()) +
                         " != output channels " + std::to_string(params.out_channels()));
    }
}

// Unfolds one [C,H,W] image into a [C*9, H*W] patch matrix with zero padding of 1.
template <class T>
void im2col(const T* image, std::size_t channels, std::size_t height, std::size_t width, RowMatrix<T>& col) {
    const std::size_t plane = height * width;
    col.resize(static_cast<Eigen::Index>(channels * kKernelArea), static_cast<Eigen::Index>(plane));
    for (std::size_t c = 0; c < channels; ++c) {
        const T* src = image + c * plane;
        for (std::size_t ky = 0; ky < kKernelSize; ++ky) {
            for (std::size_t kx = 0; kx < kKernelSize; ++kx) {
                T* dst = col.data() + (c * kKernelArea + ky * kKernelSize + kx) * plane;
                for (std::size_t y = 0; y < height; ++y) {
                    const std::ptrdiff_t sy = static_cast<std::ptrdiff_t>(y + ky) - 1;
                    T* row = dst + y * width;
                    if (sy < 0 || sy >= static_cast<std::ptrdiff_t>(height)) {
                        std::fill(row, row + width, T(0));
                        continue;
                    }
                    const T* srow = src + static_cast<std::size_t>(sy) * width;
                    for (std::size_t x = 0; x < width; ++x) {
                        const std::ptrdiff_t sx = static_cast<std::ptrdiff_t>(x + kx) - 1;
                        row[x] = (sx < 0 || sx >= static_cast<std::ptrdiff_t>(width)) ? T(0) : srow[sx];
                    }
                }
            }
        }
    }
}

// Adjoint of im2col: scatters a patch matrix back onto the [C,H,W] image, accumulating.
template <class T>
void col2im(const RowMatrix<T>& col, std::size_t channels, std::size_t height, std::size_t width, T* image) {
    const std::size_t plane = height * width;
    for (std::size_t c = 0; c < channels; ++c) {
        T* dst = image + c * plane;
        for (std::size_t ky = 0; ky < kKernelSize; ++ky) {
            for (std::size_t kx = 0; kx < kKernelSize; ++kx) {
                const T* src = col.data() + (c * kKernelArea + ky * kKernelSize + kx) * plane;
                for (std::size_t y = 0; y < height; ++y) {
                    const std::ptrdiff_t sy = static_cast<std::ptrdiff_t>(y + ky) - 1;
                    if (sy < 0 || sy >= static_cast<std::ptrdiff_t>(height)) continue;
                    T* drow = dst + static_cast<std::size_t>(sy) * width;
                    const T* row = src + y * width;
                    for (std::size_t x = 0; x < width; ++x) {
                        const std::ptrdiff_t sx = static_cast<std::ptrdiff_t>(x + kx) - 1;
                        if (sx >= 0 && sx < static_cast<std::ptrdiff_t>(width)) drow[sx] += row[x];
                    }
                }
            }
        }
    }
}

}  // namespace detail

/// 3x3 cross-correlation with zero padding of 1, so H and W are preserved.
template <class T>
Tensor<T> conv2d_forward(const Tensor<T>& input, const ConvParams<T>& params) {
    detail::check_conv_shapes(input, params, "conv2d_forward");
    const std::size_t batch = input.dim(0), channels = input.dim(1);
    const std::size_t height = input.dim(2), width = input.dim(3), plane = height * width;
    const std::size_t out_channels = params.out_channels();

    Tensor<T> output({batch, out_channels, height, width});
    const Eigen::Map<const detail::RowMatrix<T>> kernel(params.weights.data(), static_cast<Eigen::Index>(out_channels),
                                                        static_cast<Eigen::Index>(channels * kKernelArea));
    detail::RowMatrix<T> col;
    for (std::size_t b = 0; b < batch; ++b) {
        detail::im2col(input.data() + b * channels * plane, channels, height, width, col);
        Eigen::Map<detail::RowMatrix<T>> out(output.data() + b * out_channels * plane,
                                             static_cast<Eigen::Index>(out_channels), static_cast<Eigen::Index>(plane));
        out.noalias() = kernel * col;
        if (params.has_bias()) {
            for (std::size_t n = 0; n < out_channels; ++n) out.row(static_cast<Eigen::Index>(n)).array() += params.bias[n];
        }
    }
    return output;
}

template <class T>
ConvGrads<T> conv2d_backward(const Tensor<T>& input, const ConvParams<T>& params, const Tensor<T>& grad_out) {
    detail::check_conv_shapes(input, params, "conv2d_backward");
    const std::size_t batch = input.dim(0), channels = input.dim(1);
    const std::size_t height = input.dim(2), width = input.dim(3), plane = height * width;
    const std::size_t out_channels = params.out_channels();
    if (grad_out.shape() != Shape{batch, out_channels, height, width}) {
        throw ShapeError("conv2d_backward: grad_out shape " + shape_string(grad_out.shape()) + " inconsistent with forward");
    }

    ConvGrads<T> grads{Tensor<T>(input.shape()), Tensor<T>(params.weights.shape()),
                       params.has_bias() ? Tensor<T>(params.bias.shape()) : Tensor<T>()};
    const auto rows = static_cast<Eigen::Index>(out_channels);
    const auto patch = static_cast<Eigen::Index>(channels * kKernelArea);
    const Eigen::Map<const detail::RowMatrix<T>> kernel(params.weights.data(), rows, patch);
    Eigen::Map<detail::RowMatrix<T>> grad_kernel(grads.weights.data(), rows, patch);

    detail::RowMatrix<T> col;
    detail::RowMatrix<T> grad_col;
    for (std::size_t b = 0; b < batch; ++b) {
        const Eigen::Map<const detail::RowMatrix<T>> gout(grad_out.data() + b * out_channels * plane, rows,
                                                          static_cast<Eigen::Index>(plane));
        detail::im2col(input.data() + b * channels * plane, channels, height, width, col);
        grad_kernel.noalias() += gout * col.transpose();
        grad_col.noalias() = kernel.transpose() * gout;
        detail::col2im(grad_col, channels, height, width, grads.input.data() + b * channels * plane);
        if (params.has_bias()) {
            for (std::size_t n = 0; n < out_channels; ++n) grads.bias[n] += gout.row(static_cast<Eigen::Index>(n)).sum();
        }
    }
    return grads;
}

namespace detail {

template <class T>
void check_bn_shapes(const Tensor<T>& input, const BatchNormParams<T>& params, const char* what) {
    require_rank(input.shape(), 4, what);
    const std::size_t c = input.dim(1);
    if (params.gamma.size() != c || params.beta.size() != c || params.running_mean.size() != c ||
        params.running_var.size() != c) {
        throw ShapeError(std::string(what) + ": parameters do not match " + std::to_string(c) + " channels");
    }
}

}  // namespace detail

/// Train mode normalizes with the batch statistics and returns them; infer mode
/// uses the running statistics (which are returned as `stats`).
template <class T>
BatchNormResult<T> batchnorm_forward(const Tensor<T>& input, const BatchNormParams<T>& params, Mode mode) {
    detail::check_bn_shapes(input, params, "batchnorm_forward");
    const std::size_t batch = input.dim(0), channels = input.dim(1), plane = input.dim(2) * input.dim(3);
    const std::size_t count = batch * plane;

    BatchNormResult<T> result{Tensor<T>(input.shape()), {std::vector<T>(channels), std::vector<T>(channels), count}};
    if (mode == Mode::train && count < 2) {
        throw ShapeError("batchnorm_forward: train mode needs at least 2 samples per channel");
    }
    for (std::size_t c = 0; c < channels; ++c) {
        double mean = 0.0, var = 0.0;
        if (mode == Mode::train) {
            for (std::size_t b = 0; b < batch; ++b) {
                const T* x = input.data() + (b * channels + c) * plane;
                for (std::size_t i = 0; i < plane; ++i) mean += x[i];
            }
            mean /= static_cast<double>(count);
            for (std::size_t b = 0; b < batch; ++b) {
                const T* x = input.data() + (b * channels + c) * plane;
                for (std::size_t i = 0; i < plane; ++i) {
                    const double d = x[i] - mean;
                    var += d * d;
                }
            }
            var /= static_cast<double>(count);
        } else {
            mean = params.running_mean[c];
            var = params.running_var[c];
        }
        result.stats.mean[c] = static_cast<T>(mean);
        result.stats.var[c] = static_cast<T>(var);

        const double inv_std = 1.0 / std::sqrt(var + static_cast<double>(params.epsilon));
        const double scale = static_cast<double>(params.gamma[c]) * inv_std;
        const double shift = static_cast<double>(params.beta[c]) - mean * scale;
        for (std::size_t b = 0; b < batch; ++b) {
            const T* x = input.data() + (b * channels + c) * plane;
            T* y = result.output.data() + (b * channels + c) * plane;
            for (std::size_t i = 0; i < plane; ++i) y[i] = static_cast<T>(x[i] * scale + shift);
        }
    }
    return result;
}

/// Exact gradients of the train-mode forward.
template <class T>
BatchNormGrads<T> batchnorm_backward(const Tensor<T>& input, const BatchNormParams<T>& params,
                                     const BatchStats<T>& stats, const Tensor<T>& grad_out) {
    detail::check_bn_shapes(input, params, "batchnorm_backward");
    if (grad_out.shape() != input.shape()) {
        throw ShapeError("batchnorm_backward: grad_out shape " + shape_string(grad_out.shape()) + " != input shape");
    }
    const std::size_t batch = input.dim(0), channels = input.dim(1), plane = input.dim(2) * input.dim(3);
    const double count = static_cast<double>(batch * plane);
    if (stats.mean.size() != channels || stats.var.size() != channels) {
        throw ShapeError("batchnorm_backward: batch statistics do not match channel count");
    }

    BatchNormGrads<T> grads{Tensor<T>(input.shape()), Tensor<T>({channels}), Tensor<T>({channels})};
    for (std::size_t c = 0; c < channels; ++c) {
        const double mean = stats.mean[c];
        const double inv_std = 1.0 / std::sqrt(static_cast<double>(stats.var[c]) + static_cast<double>(params.epsilon));
        double sum_dy = 0.0, sum_dy_xhat = 0.0;
        for (std::size_t b = 0; b < batch; ++b) {
            const T* x = input.data() + (b * channels + c) * plane;
            const T* dy = grad_out.data() + (b * channels + c) * plane;
            for (std::size_t i = 0; i < plane; ++i) {
                sum_dy += dy[i];
                sum_dy_xhat += dy[i] * (x[i] - mean) * inv_std;
            }
        }
        grads.beta[c] = static_cast<T>(sum_dy);
        grads.gamma[c] = static_cast<T>(sum_dy_xhat);

        const double k = static_cast<double>(params.gamma[c]) * inv_std / count;
        for (std::size_t b = 0; b < batch; ++b) {
            const T* x = input.data() + (b * channels + c) * plane;
            const T* dy = grad_out.data() + (b * channels + c) * plane;
            T* dx = grads.input.data() + (b * channels + c) * plane;
            for (std::size_t i = 0; i < plane; ++i) {
                const double xhat = (x[i] - mean) * inv_std;
                dx[i] = static_cast<T>(k * (count * dy[i] - sum_dy - xhat * sum_dy_xhat));
            }
        }
    }
    return grads;
}

/// Exponential moving average of the running statistics. Channels whose
/// `mask` entry is 0 keep their running statistics untouched; an empty mask
/// updates every channel. Running variance tracks the unbiased estimate.
template <class T>
void update_running_stats(BatchNormParams<T>& params, const BatchStats<T>& stats,
                          std::span<const std::uint8_t> mask = {}) {
    const std::size_t channels = params.channels();
    if (stats.mean.size() != channels || (!mask.empty() && mask.size() != channels)) {
        throw ShapeError("update_running_stats: channel count mismatch");
    }
    const double unbias = stats.count > 1 ? static_cast<double>(stats.count) / static_cast<double>(stats.count - 1) : 1.0;
    const double m = params.momentum;
    for (std::size_t c = 0; c < channels; ++c) {
        if (!mask.empty() && mask[c] == 0) continue;
        params.running_mean[c] = static_cast<T>((1.0 - m) * params.running_mean[c] + m * stats.mean[c]);
        params.running_var[c] = static_cast<T>((1.0 - m) * params.running_var[c] + m * stats.var[c] * unbias);
    }
}

template <class T>
Tensor<T> relu_forward(const Tensor<T>& input) {
    Tensor<T> out(input.shape());
    for (std::size_t i = 0; i < input.size(); ++i) out[i] = input[i] > T(0) ? input[i] : T(0);
    return out;
}

template <class T>
Tensor<T> relu_backward(const Tensor<T>& input, const Tensor<T>& grad_out) {
    if (input.shape() != grad_out.shape()) throw ShapeError("relu_backward: shape mismatch");
    Tensor<T> out(input.shape());
    for (std::size_t i = 0; i < input.size(); ++i) out[i] = input[i] > T(0) ? grad_out[i] : T(0);
    return out;
}

}  // namespace tgd
