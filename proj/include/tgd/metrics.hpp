#pragma once

#include <cmath>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "tgd/network.hpp"
#include "tgd/phantom.hpp"
#include "tgd/volume.hpp"

namespace tgd {

enum class RoiKind { lesion, background, structure };

inline const char* to_string(RoiKind k) {
    switch (k) {
        case RoiKind::lesion: return "lesion";
        case RoiKind::background: return "background";
        case RoiKind::structure: return "structure";
    }
    return "?";
}

inline RoiKind roi_kind_from_string(const std::string& s) {
    if (s == "lesion") return RoiKind::lesion;
    if (s == "background") return RoiKind::background;
    if (s == "structure") return RoiKind::structure;
    throw std::invalid_argument("unknown ROI kind '" + s + "'");
}

/// Voxel set given as flat indices into a volume.
struct Roi {
    RoiKind kind = RoiKind::background;
    std::string name;
    std::vector<std::size_t> indices;

    void validate(std::size_t volume_size) const {
        if (indices.empty()) throw std::invalid_argument("ROI '" + name + "' is empty");
        for (auto i : indices) {
            if (i >= volume_size) throw std::invalid_argument("ROI '" + name + "' has index " + std::to_string(i) + " out of bounds");
        }
    }
};

inline double roi_mean(const Tensor<float>& v, const Roi& roi) {
    roi.validate(v.size());
    double s = 0.0;
    for (auto i : roi.indices) s += v[i];
    return s / static_cast<double>(roi.indices.size());
}

namespace detail {

inline void check_stack(std::span<const Tensor<float>> stack, std::size_t min_count, const char* what) {
    if (stack.size() < min_count) {
        throw std::invalid_argument(std::string(what) + ": need at least " + std::to_string(min_count) + " realizations");
    }
    for (const auto& r : stack) {
        if (r.shape() != stack.front().shape()) throw ShapeError(std::string(what) + ": realizations differ in shape");
    }
}

}  // namespace detail

/// Percent deviation of the ensemble-mean lesion value from the true lesion value.
inline double ensemble_bias(std::span<const Tensor<float>> realizations, const Roi& lesion, const Tensor<float>& truth) {
    detail::check_stack(realizations, 1, "ensemble_bias");
    if (truth.shape() != realizations.front().shape()) throw ShapeError("ensemble_bias: truth shape differs");
    const double true_value = roi_mean(truth, lesion);
    if (true_value == 0.0) throw std::invalid_argument("ensemble_bias: true lesion value is zero");
    double mean = 0.0;
    for (const auto& r : realizations) mean += roi_mean(r, lesion);
    mean /= static_cast<double>(realizations.size());
    return (mean - true_value) / true_value * 100.0;
}

/// ROI-average of the per-voxel ensemble standard deviation (sample, R-1)
/// over the ROI grand mean, in percent.
inline double ensemble_cov(std::span<const Tensor<float>> realizations, const Roi& background) {
    detail::check_stack(realizations, 2, "ensemble_cov");
    background.validate(realizations.front().size());
    const double R = static_cast<double>(realizations.size());
    // running means stay exact on constant sequences, so the closed-form cases come out exactly
    double mean_std = 0.0, grand = 0.0, k = 0.0;
    for (auto i : background.indices) {
        double m = 0.0;
        for (const auto& r : realizations) m += r[i];
        m /= R;
        double ss = 0.0;
        for (const auto& r : realizations) ss += (r[i] - m) * (r[i] - m);
        k += 1.0;
        mean_std += (std::sqrt(ss / (R - 1.0)) - mean_std) / k;
        grand += (m - grand) / k;
    }
    if (grand == 0.0) throw std::invalid_argument("ensemble_cov: ROI grand mean is zero, CoV undefined");
    return mean_std / grand * 100.0;
}

template <class T>
double mse(const Tensor<T>& a, const Tensor<T>& b) {
    if (a.shape() != b.shape()) throw ShapeError("mse: shape mismatch " + shape_string(a.shape()) + " vs " + shape_string(b.shape()));
    if (a.empty()) return 0.0;
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = static_cast<double>(a[i]) - static_cast<double>(b[i]);
        s += d * d;
    }
    return s / static_cast<double>(a.size());
}

/// +infinity for identical inputs.
template <class T>
double psnr(const Tensor<T>& a, const Tensor<T>& b, double peak) {
    const double m = mse(a, b);
    if (m == 0.0) return std::numeric_limits<double>::infinity();
    return 10.0 * std::log10(peak * peak / m);
}

inline double roi_mse(const Tensor<float>& a, const Tensor<float>& b, const Roi& roi) {
    if (a.shape() != b.shape()) throw ShapeError("roi_mse: shape mismatch");
    roi.validate(a.size());
    double s = 0.0;
    for (auto i : roi.indices) {
        const double d = static_cast<double>(a[i]) - static_cast<double>(b[i]);
        s += d * d;
    }
    return s / static_cast<double>(roi.indices.size());
}

struct ProbeSide {
    double roi_mse = 0.0;
    double roi_mean_shift = 0.0;  // ROI mean of output minus ROI mean of truth
};

struct HallucinationReport {
    ProbeSide before;
    ProbeSide after;
    double delta_mse = 0.0;    // after - before
    double delta_shift = 0.0;  // |after shift| - |before shift|
};

inline HallucinationReport hallucination_probe(const Network<float>& before, const Network<float>& after,
                                               const Tensor<float>& input, const Tensor<float>& truth, const Roi& roi) {
    auto side = [&](const Network<float>& net) {
        const auto out = denoise_volume(net, input);
        return ProbeSide{roi_mse(out, truth, roi), roi_mean(out, roi) - roi_mean(truth, roi)};
    };
    HallucinationReport r{side(before), side(after), 0.0, 0.0};
    r.delta_mse = r.after.roi_mse - r.before.roi_mse;
    r.delta_shift = std::abs(r.after.roi_mean_shift) - std::abs(r.before.roi_mean_shift);
    return r;
}

// ROI construction from phantom geometry.

inline Roi lesion_roi(const PhantomSpec& spec, std::size_t lesion) {
    if (lesion >= spec.lesions.size()) throw std::out_of_range("lesion_roi: no lesion " + std::to_string(lesion));
    const auto& l = spec.lesions[lesion];
    Roi roi{RoiKind::lesion, "lesion" + std::to_string(lesion), {}};
    for (std::size_t z = 0; z < spec.slices; ++z) {
        const double r = l.radius * slice_scale(z, spec.slices);
        for (std::size_t y = 0; y < spec.height; ++y) {
            for (std::size_t x = 0; x < spec.width; ++x) {
                if (in_disk(l.cx, l.cy, r, x + 0.5, y + 0.5)) roi.indices.push_back((z * spec.height + y) * spec.width + x);
            }
        }
    }
    return roi;
}

/// Disk `disk` grown by `margin` pixels, so artifacts around the structure count too.
inline Roi structure_roi(const PhantomSpec& spec, std::size_t disk, double margin) {
    if (disk >= spec.disks.size()) throw std::out_of_range("structure_roi: no disk " + std::to_string(disk));
    const auto& d = spec.disks[disk];
    Roi roi{RoiKind::structure, "structure" + std::to_string(disk), {}};
    for (std::size_t z = 0; z < spec.slices; ++z) {
        const double r = d.radius * slice_scale(z, spec.slices) + margin;
        for (std::size_t y = 0; y < spec.height; ++y) {
            for (std::size_t x = 0; x < spec.width; ++x) {
                if (in_disk(d.cx, d.cy, r, x + 0.5, y + 0.5)) roi.indices.push_back((z * spec.height + y) * spec.width + x);
            }
        }
    }
    return roi;
}

/// Uniform part of the body ellipse (ellipse 0): shrunk by `margin` and kept
/// `margin` pixels away from organs, lesions and disks.
inline Roi background_roi(const PhantomSpec& spec, double margin) {
    if (spec.ellipses.empty()) throw std::invalid_argument("background_roi: phantom has no body ellipse");
    Roi roi{RoiKind::background, "background", {}};
    for (std::size_t z = 0; z < spec.slices; ++z) {
        const double scale = slice_scale(z, spec.slices);
        Ellipse body = spec.ellipses[0];
        body.ax = std::max(0.0, body.ax * scale - margin) / scale;
        body.ay = std::max(0.0, body.ay * scale - margin) / scale;
        for (std::size_t y = 0; y < spec.height; ++y) {
            for (std::size_t x = 0; x < spec.width; ++x) {
                const double px = x + 0.5, py = y + 0.5;
                if (!(body.ax > 0 && body.ay > 0) || !in_ellipse(body, px, py, scale)) continue;
                bool excluded = false;
                for (std::size_t e = 1; e < spec.ellipses.size() && !excluded; ++e) {
                    Ellipse grown = spec.ellipses[e];
                    grown.ax += margin / scale;
                    grown.ay += margin / scale;
                    excluded = in_ellipse(grown, px, py, scale);
                }
                for (const auto& l : spec.lesions) excluded = excluded || in_disk(l.cx, l.cy, l.radius * scale + margin, px, py);
                for (const auto& d : spec.disks) excluded = excluded || in_disk(d.cx, d.cy, d.radius * scale + margin, px, py);
                if (!excluded) roi.indices.push_back((z * spec.height + y) * spec.width + x);
            }
        }
    }
    return roi;
}

}  // namespace tgd
