#pragma once

// 2.5-D helpers: stacking neighboring slices of a [S,H,W] volume into network
// inputs, and denoising whole volumes slice by slice.

#include <algorithm>

#include "tgd/network.hpp"

namespace tgd {

/// Input stack for slice `s`: slices s-k..s+k with the volume's edge slices
/// replicated past the ends, written as one [count,H,W] block.
template <class T>
void stack_slices(const Tensor<T>& volume, std::size_t s, std::size_t count, T* out) {
    require_rank(volume.shape(), 3, "stack_slices");
    const std::size_t S = volume.dim(0), plane = volume.dim(1) * volume.dim(2);
    const auto half = static_cast<std::ptrdiff_t>(count / 2);
    for (std::size_t k = 0; k < count; ++k) {
        const std::ptrdiff_t src = std::clamp<std::ptrdiff_t>(static_cast<std::ptrdiff_t>(s) + static_cast<std::ptrdiff_t>(k) - half, 0,
                                                              static_cast<std::ptrdiff_t>(S) - 1);
        const T* from = volume.data() + static_cast<std::size_t>(src) * plane;
        std::copy(from, from + plane, out + k * plane);
    }
}

/// All slices of a volume as a [S,count,H,W] batch.
template <class T>
Tensor<T> volume_to_batch(const Tensor<T>& volume, std::size_t count) {
    require_rank(volume.shape(), 3, "volume_to_batch");
    const std::size_t S = volume.dim(0), H = volume.dim(1), W = volume.dim(2);
    Tensor<T> batch({S, count, H, W});
    for (std::size_t s = 0; s < S; ++s) stack_slices(volume, s, count, batch.data() + s * count * H * W);
    return batch;
}

/// Infer-mode denoising of every slice; returns a [S,H,W] volume.
template <class T>
Tensor<T> denoise_volume(const Network<T>& net, const Tensor<T>& volume) {
    const auto batch = volume_to_batch(volume, static_cast<std::size_t>(net.config.input_slices));
    const auto out = forward(net, batch, Mode::infer);
    return out.reshaped(volume.shape());
}

}  // namespace tgd
