#pragma once

#include <cmath>
#include <cstddef>
#include <cstring>
#include <new>
#include <algorithm>
#include <functional>
#include <numeric>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace tgd {

/// Over-aligned storage. Vectorized kernels pick their loop peeling from the
/// buffer address, so a fixed alignment keeps results a function of the
/// values alone, which bit-exact replay depends on.
template <class T>
struct AlignedAllocator {
    using value_type = T;
    static constexpr std::align_val_t alignment{64};

    AlignedAllocator() = default;
    template <class U>
    AlignedAllocator(const AlignedAllocator<U>&) noexcept {}

    T* allocate(std::size_t n) { return static_cast<T*>(::operator new(n * sizeof(T), alignment)); }
    void deallocate(T* p, std::size_t) noexcept { ::operator delete(p, alignment); }

    template <class U>
    bool operator==(const AlignedAllocator<U>&) const noexcept { return true; }
};

using Shape = std::vector<std::size_t>;

/// Element count. The empty shape denotes an absent tensor and holds nothing.
inline std::size_t shape_size(const Shape& shape) {
    if (shape.empty()) return 0;
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

inline std::string shape_string(const Shape& shape) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) os << ',';
        os << shape[i];
    }
    os << ']';
    return os.str();
}

/// Raised when tensor shapes do not line up for an operation.
class ShapeError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Dense row-major tensor. The last axis is contiguous.
template <class T>
class Tensor {
public:
    using value_type = T;

    Tensor() = default;

    explicit Tensor(Shape shape, T fill = T{}) : shape_(std::move(shape)), data_(shape_size(shape_), fill) {}

    Tensor(Shape shape, const std::vector<T>& data) : shape_(std::move(shape)), data_(data.begin(), data.end()) {
        if (shape_size(shape_) != data_.size()) {
            throw ShapeError("tensor: shape " + shape_string(shape_) + " does not match " +
                             std::to_string(data_.size()) + " values");
        }
    }

    const Shape& shape() const noexcept { return shape_; }
    std::size_t rank() const noexcept { return shape_.size(); }
    std::size_t dim(std::size_t axis) const { return shape_.at(axis); }
    std::size_t size() const noexcept { return data_.size(); }
    bool empty() const noexcept { return data_.empty(); }

    std::span<T> values() noexcept { return data_; }
    std::span<const T> values() const noexcept { return data_; }
    T* data() noexcept { return data_.data(); }
    const T* data() const noexcept { return data_.data(); }

    T& operator[](std::size_t i) noexcept { return data_[i]; }
    const T& operator[](std::size_t i) const noexcept { return data_[i]; }

    /// Offset of element (a, b, c, d) in a rank-4 tensor.
    std::size_t offset(std::size_t a, std::size_t b, std::size_t c, std::size_t d) const noexcept {
        return ((a * shape_[1] + b) * shape_[2] + c) * shape_[3] + d;
    }
    T& at(std::size_t a, std::size_t b, std::size_t c, std::size_t d) noexcept {
        return data_[offset(a, b, c, d)];
    }
    const T& at(std::size_t a, std::size_t b, std::size_t c, std::size_t d) const noexcept {
        return data_[offset(a, b, c, d)];
    }

    void fill(T value) { std::fill(data_.begin(), data_.end(), value); }

    /// Same values, different shape with equal element count.
    Tensor reshaped(Shape shape) const {
        if (shape_size(shape) != data_.size()) {
            throw ShapeError("reshape: " + shape_string(shape_) + " -> " + shape_string(shape) + " changes size");
        }
        Tensor out = *this;
        out.shape_ = std::move(shape);
        return out;
    }

    template <class U>
    Tensor<U> cast() const {
        Tensor<U> out(shape_);
        for (std::size_t i = 0; i < data_.size(); ++i) out[i] = static_cast<U>(data_[i]);
        return out;
    }

    friend bool operator==(const Tensor& a, const Tensor& b) {
        return a.shape_ == b.shape_ && a.data_ == b.data_;
    }

private:
    Shape shape_;
    std::vector<T, AlignedAllocator<T>> data_;
};

/// True when both tensors have the same shape and identical bit patterns.
template <class T>
bool bit_equal(const Tensor<T>& a, const Tensor<T>& b) {
    return a.shape() == b.shape() &&
           (a.size() == 0 || std::memcmp(a.data(), b.data(), a.size() * sizeof(T)) == 0);
}

template <class T>
bool all_finite(const Tensor<T>& t) {
    for (T v : t.values()) {
        if (!std::isfinite(v)) return false;
    }
    return true;
}

inline void require_rank(const Shape& shape, std::size_t rank, const char* what) {
    if (shape.size() != rank) {
        throw ShapeError(std::string(what) + ": expected rank " + std::to_string(rank) + ", got " +
                         shape_string(shape));
    }
}

/// Copies channel `channel` of every batch item of a [B,C,H,W] tensor into a [B,1,H,W] tensor.
template <class T>
Tensor<T> slice_channel(const Tensor<T>& x, std::size_t channel) {
    require_rank(x.shape(), 4, "slice_channel");
    const std::size_t batch = x.dim(0), channels = x.dim(1), plane = x.dim(2) * x.dim(3);
    if (channel >= channels) throw ShapeError("slice_channel: channel out of range");
    Tensor<T> out({batch, 1, x.dim(2), x.dim(3)});
    for (std::size_t b = 0; b < batch; ++b) {
        const T* src = x.data() + (b * channels + channel) * plane;
        std::copy(src, src + plane, out.data() + b * plane);
    }
    return out;
}

/// Concatenates rank-4 tensors along the batch axis.
template <class T>
Tensor<T> concat_batch(std::span<const Tensor<T>> parts) {
    if (parts.empty()) return {};
    Shape shape = parts.front().shape();
    require_rank(shape, 4, "concat_batch");
    std::size_t batch = 0;
    for (const auto& p : parts) {
        if (p.rank() != 4 || p.dim(1) != shape[1] || p.dim(2) != shape[2] || p.dim(3) != shape[3]) {
            throw ShapeError("concat_batch: mismatched part " + shape_string(p.shape()));
        }
        batch += p.dim(0);
    }
    shape[0] = batch;
    Tensor<T> out(std::move(shape));
    T* dst = out.data();
    for (const auto& p : parts) dst = std::copy(p.values().begin(), p.values().end(), dst);
    return out;
}

}  // namespace tgd
