#pragma once

// Synthetic emission phantoms and scan simulation.
//
// An acquisition draws Poisson counts from the activity scaled to a count
// budget; reconstruction blurs the counts with the protocol PSF and rescales to
// activity units. Blurring after the draw correlates the noise between
// neighboring pixels in proportion to the PSF width, so a narrower PSF gives a
// finer noise grain.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "tgd/tensor.hpp"

namespace tgd {

struct Ellipse {
    double cx = 0, cy = 0;  // pixel coordinates of the center
    double ax = 1, ay = 1;  // semi-axes in pixels
    double angle = 0;       // radians
    double intensity = 1;   // added inside the ellipse
};

struct Lesion {
    double cx = 0, cy = 0;
    double radius = 3;
    double contrast = 2;  // multiplies the underlying activity
};

/// Bright disk with absolute intensity; stands in for structures never seen in training.
struct HotDisk {
    double cx = 0, cy = 0;
    double radius = 4;
    double intensity = 6;
};

struct PhantomSpec {
    std::size_t height = 64;
    std::size_t width = 64;
    std::size_t slices = 5;
    std::vector<Ellipse> ellipses;
    std::vector<Lesion> lesions;
    std::vector<HotDisk> disks;
    std::uint64_t seed = 0;

    void validate() const {
        if (height < 3 || width < 3) throw std::invalid_argument("phantom: image must be at least 3x3");
        if (slices < 1) throw std::invalid_argument("phantom: need at least one slice");
        for (const auto& e : ellipses) {
            if (e.intensity < 0 || !(e.ax > 0) || !(e.ay > 0)) {
                throw std::invalid_argument("phantom: ellipses need positive axes and nonnegative intensity");
            }
        }
        auto inside = [&](double cx, double cy, double r) {
            return cx - r >= 0 && cy - r >= 0 && cx + r <= static_cast<double>(width) &&
                   cy + r <= static_cast<double>(height);
        };
        for (const auto& l : lesions) {
            if (!(l.radius > 0) || l.contrast < 0 || !inside(l.cx, l.cy, l.radius)) {
                throw std::invalid_argument("phantom: lesion at (" + std::to_string(l.cx) + "," + std::to_string(l.cy) +
                                            ") radius " + std::to_string(l.radius) + " lies outside the image");
            }
        }
        for (const auto& d : disks) {
            if (!(d.radius > 0) || d.intensity < 0 || !inside(d.cx, d.cy, d.radius)) {
                throw std::invalid_argument("phantom: disk lies outside the image");
            }
        }
    }
};

struct ScanProtocol {
    double psf_sigma = 1.5;      // pixels
    double count_budget = 1e6;   // expected total counts per slice
    std::uint64_t seed = 0;

    void validate() const {
        if (!(psf_sigma > 0)) throw std::invalid_argument("scan protocol: psf_sigma must be > 0");
        if (!(count_budget > 0)) throw std::invalid_argument("scan protocol: count_budget must be > 0");
    }
};

/// Axis scale of slice z: shapes shrink smoothly away from the center slice.
inline double slice_scale(std::size_t z, std::size_t slices) {
    const double d = (static_cast<double>(z) - 0.5 * static_cast<double>(slices - 1)) / static_cast<double>(slices);
    return std::sqrt(std::max(0.0, 1.0 - d * d));
}

/// Pixel (x, y) has its center at (x + 0.5, y + 0.5).
inline bool in_ellipse(const Ellipse& e, double px, double py, double scale) {
    const double c = std::cos(e.angle), s = std::sin(e.angle);
    const double dx = px - e.cx, dy = py - e.cy;
    const double u = (dx * c + dy * s) / (e.ax * scale), v = (-dx * s + dy * c) / (e.ay * scale);
    return u * u + v * v <= 1.0;
}

inline bool in_disk(double cx, double cy, double r, double px, double py) {
    const double dx = px - cx, dy = py - cy;
    return dx * dx + dy * dy <= r * r;
}

/// Rasterizes the spec into a [S,H,W] activity volume.
inline Tensor<float> generate_phantom(const PhantomSpec& spec) {
    spec.validate();
    const std::size_t S = spec.slices, H = spec.height, W = spec.width;
    Tensor<float> out({S, H, W});
    for (std::size_t z = 0; z < S; ++z) {
        const double scale = slice_scale(z, S);
        for (std::size_t y = 0; y < H; ++y) {
            for (std::size_t x = 0; x < W; ++x) {
                const double px = static_cast<double>(x) + 0.5, py = static_cast<double>(y) + 0.5;
                double v = 0.0;
                for (const auto& e : spec.ellipses) {
                    if (in_ellipse(e, px, py, scale)) v += e.intensity;
                }
                for (const auto& l : spec.lesions) {
                    if (in_disk(l.cx, l.cy, l.radius * scale, px, py)) v *= l.contrast;
                }
                for (const auto& d : spec.disks) {
                    if (in_disk(d.cx, d.cy, d.radius * scale, px, py)) v = d.intensity;
                }
                out[(z * H + y) * W + x] = static_cast<float>(v);
            }
        }
    }
    return out;
}

struct RandomPhantomOptions {
    std::size_t height = 64;
    std::size_t width = 64;
    std::size_t slices = 5;
    int max_organs = 3;
    int max_lesions = 2;
    double lesion_radius = 3.0;
    double lesion_contrast = 2.0;
};

/// Body ellipse of unit activity with a few warmer organs and lesions, drawn from `seed`.
inline PhantomSpec random_phantom_spec(std::uint64_t seed, const RandomPhantomOptions& opt = {}) {
    std::mt19937_64 rng(seed);
    auto uniform = [&](double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); };
    PhantomSpec spec;
    spec.height = opt.height;
    spec.width = opt.width;
    spec.slices = opt.slices;
    spec.seed = seed;
    const double W = static_cast<double>(opt.width), H = static_cast<double>(opt.height);

    Ellipse body{W * uniform(0.46, 0.54), H * uniform(0.46, 0.54), W * uniform(0.34, 0.44), H * uniform(0.30, 0.40),
                 uniform(-0.3, 0.3), 1.0};
    spec.ellipses.push_back(body);
    const int organs = static_cast<int>(std::uniform_int_distribution<int>(1, std::max(1, opt.max_organs))(rng));
    for (int i = 0; i < organs; ++i) {
        Ellipse e;
        e.cx = body.cx + uniform(-0.45, 0.45) * body.ax;
        e.cy = body.cy + uniform(-0.45, 0.45) * body.ay;
        e.ax = body.ax * uniform(0.15, 0.35);
        e.ay = body.ay * uniform(0.15, 0.35);
        e.angle = uniform(0.0, 3.14159);
        e.intensity = uniform(-0.5, 1.5);
        if (e.intensity < 0) e.intensity = 0.0;  // cold organ: body level only
        spec.ellipses.push_back(e);
    }
    const int lesions = static_cast<int>(std::uniform_int_distribution<int>(0, std::max(0, opt.max_lesions))(rng));
    for (int i = 0; i < lesions; ++i) {
        Lesion l;
        l.radius = opt.lesion_radius;
        l.contrast = opt.lesion_contrast;
        l.cx = std::clamp(body.cx + uniform(-0.55, 0.55) * body.ax, l.radius, W - l.radius);
        l.cy = std::clamp(body.cy + uniform(-0.55, 0.55) * body.ay, l.radius, H - l.radius);
        spec.lesions.push_back(l);
    }
    return spec;
}

/// Separable Gaussian blur of each [H,W] plane of a [S,H,W] volume; zero outside the image.
template <class T>
Tensor<T> gaussian_blur(const Tensor<T>& volume, double sigma) {
    require_rank(volume.shape(), 3, "gaussian_blur");
    if (!(sigma > 0)) throw std::invalid_argument("gaussian_blur: sigma must be > 0");
    const std::size_t S = volume.dim(0), H = volume.dim(1), W = volume.dim(2);
    const int radius = static_cast<int>(std::ceil(3.0 * sigma));
    std::vector<double> kernel(static_cast<std::size_t>(2 * radius + 1));
    double norm = 0.0;
    for (int i = -radius; i <= radius; ++i) {
        kernel[static_cast<std::size_t>(i + radius)] = std::exp(-0.5 * i * i / (sigma * sigma));
        norm += kernel[static_cast<std::size_t>(i + radius)];
    }
    for (auto& k : kernel) k /= norm;

    Tensor<T> out(volume.shape());
    std::vector<double> tmp(H * W);
    for (std::size_t z = 0; z < S; ++z) {
        const T* src = volume.data() + z * H * W;
        for (std::size_t y = 0; y < H; ++y) {
            for (std::size_t x = 0; x < W; ++x) {
                double acc = 0.0;
                for (int i = -radius; i <= radius; ++i) {
                    const auto sx = static_cast<std::ptrdiff_t>(x) + i;
                    if (sx >= 0 && sx < static_cast<std::ptrdiff_t>(W)) {
                        acc += kernel[static_cast<std::size_t>(i + radius)] * static_cast<double>(src[y * W + static_cast<std::size_t>(sx)]);
                    }
                }
                tmp[y * W + x] = acc;
            }
        }
        T* dst = out.data() + z * H * W;
        for (std::size_t y = 0; y < H; ++y) {
            for (std::size_t x = 0; x < W; ++x) {
                double acc = 0.0;
                for (int i = -radius; i <= radius; ++i) {
                    const auto sy = static_cast<std::ptrdiff_t>(y) + i;
                    if (sy >= 0 && sy < static_cast<std::ptrdiff_t>(H)) {
                        acc += kernel[static_cast<std::size_t>(i + radius)] * tmp[static_cast<std::size_t>(sy) * W + x];
                    }
                }
                dst[y * W + x] = static_cast<T>(acc);
            }
        }
    }
    return out;
}

/// Raw counts of one acquisition plus the per-slice counts-per-activity scale.
struct Acquisition {
    Tensor<double> counts;      // [S,H,W], nonnegative integers
    std::vector<double> scale;  // per slice
};

inline std::mt19937_64 seeded_rng(std::initializer_list<std::uint64_t> parts) {
    std::vector<std::uint32_t> words;
    for (auto p : parts) {
        words.push_back(static_cast<std::uint32_t>(p));
        words.push_back(static_cast<std::uint32_t>(p >> 32));
    }
    std::seed_seq seq(words.begin(), words.end());
    return std::mt19937_64(seq);
}

inline Acquisition acquire(const Tensor<float>& activity, const ScanProtocol& protocol, std::uint64_t seed) {
    require_rank(activity.shape(), 3, "acquire");
    protocol.validate();
    const std::size_t S = activity.dim(0), plane = activity.dim(1) * activity.dim(2);
    Acquisition acq{Tensor<double>(activity.shape()), std::vector<double>(S, 1.0)};
    auto rng = seeded_rng({seed});
    for (std::size_t z = 0; z < S; ++z) {
        const float* a = activity.data() + z * plane;
        double total = 0.0;
        for (std::size_t i = 0; i < plane; ++i) {
            if (a[i] < 0) throw std::invalid_argument("acquire: activity must be nonnegative");
            total += a[i];
        }
        if (total > 0) acq.scale[z] = protocol.count_budget / total;
        double* counts = acq.counts.data() + z * plane;
        for (std::size_t i = 0; i < plane; ++i) {
            const double mean = acq.scale[z] * a[i];
            counts[i] = mean > 0 ? static_cast<double>(std::poisson_distribution<long long>(mean)(rng)) : 0.0;
        }
    }
    return acq;
}

/// Blurs counts with the PSF and rescales to activity units.
inline Tensor<float> reconstruct(const Tensor<double>& counts, const std::vector<double>& scale, double psf_sigma) {
    require_rank(counts.shape(), 3, "reconstruct");
    if (scale.size() != counts.dim(0)) throw ShapeError("reconstruct: one scale per slice required");
    const Tensor<double> blurred = gaussian_blur(counts, psf_sigma);
    const std::size_t plane = counts.dim(1) * counts.dim(2);
    Tensor<float> out(counts.shape());
    for (std::size_t z = 0; z < counts.dim(0); ++z) {
        for (std::size_t i = 0; i < plane; ++i) {
            out[z * plane + i] = static_cast<float>(blurred[z * plane + i] / scale[z]);
        }
    }
    return out;
}

/// Noisy image of `activity` under `protocol`; its expectation is the PSF-blurred activity.
inline Tensor<float> simulate_scan(const Tensor<float>& activity, const ScanProtocol& protocol) {
    const auto acq = acquire(activity, protocol, protocol.seed);
    return reconstruct(acq.counts, acq.scale, protocol.psf_sigma);
}

/// Noise-free image: the PSF-blurred activity.
inline Tensor<float> expected_scan(const Tensor<float>& activity, const ScanProtocol& protocol) {
    protocol.validate();
    return gaussian_blur(activity, protocol.psf_sigma);
}

struct ThinnedCounts {
    Tensor<double> first;
    Tensor<double> second;
};

/// Routes every count to `first` with probability p, otherwise to `second`.
inline ThinnedCounts thin(const Tensor<double>& counts, double p, std::uint64_t seed) {
    if (!(p > 0.0 && p < 1.0)) throw std::invalid_argument("thin: p must lie in (0,1)");
    ThinnedCounts out{Tensor<double>(counts.shape()), Tensor<double>(counts.shape())};
    auto rng = seeded_rng({seed, 0x7468696eULL});
    for (std::size_t i = 0; i < counts.size(); ++i) {
        const double n = counts[i];
        if (n < 0 || std::floor(n) != n || n > 9.0e15) {
            throw std::invalid_argument("thin: input must hold nonnegative integer counts (index " + std::to_string(i) + ")");
        }
        const auto total = static_cast<long long>(n);
        const long long k = total > 0 ? std::binomial_distribution<long long>(total, p)(rng) : 0;
        out.first[i] = static_cast<double>(k);
        out.second[i] = static_cast<double>(total - k);
    }
    return out;
}

/// Count levels as fractions of the target budget: 30..180 s of a 600 s acquisition.
inline std::vector<double> default_count_levels() {
    return {30.0 / 600.0, 45.0 / 600.0, 60.0 / 600.0, 90.0 / 600.0, 120.0 / 600.0, 180.0 / 600.0};
}

struct PhantomVolumes {
    std::size_t id = 0;
    PhantomSpec spec;
    bool validation = false;
    Tensor<float> truth;                // activity
    Tensor<float> target;               // full-budget scan
    std::vector<Tensor<float>> inputs;  // one scan per count level
    std::uint64_t target_seed = 0;
    std::vector<std::uint64_t> input_seeds;
};

struct Dataset {
    ScanProtocol protocol;
    std::vector<double> count_levels;
    std::vector<PhantomVolumes> phantoms;

    std::size_t pair_count() const {
        std::size_t n = 0;
        for (const auto& p : phantoms) n += p.inputs.size();
        return n;
    }
};

/// Deterministic per-(protocol seed, phantom, level) realization seed.
inline std::uint64_t realization_seed(std::uint64_t protocol_seed, std::size_t phantom, std::size_t level) {
    auto rng = seeded_rng({protocol_seed, phantom, level});
    return rng();
}

inline constexpr std::size_t kTargetLevel = 0xFFFF;

/// One target and one noisy input per count level for each phantom. The last
/// `validation_phantoms` phantoms form the validation split.
inline Dataset build_dataset(const std::vector<PhantomSpec>& specs, const ScanProtocol& protocol,
                             const std::vector<double>& count_levels, std::size_t validation_phantoms = 0) {
    protocol.validate();
    if (count_levels.empty()) throw std::invalid_argument("build_dataset: count_levels must not be empty");
    for (double l : count_levels) {
        if (!(l > 0)) throw std::invalid_argument("build_dataset: count levels must be > 0");
    }
    if (validation_phantoms > specs.size()) throw std::invalid_argument("build_dataset: more validation phantoms than phantoms");
    Dataset ds{protocol, count_levels, {}};
    for (std::size_t id = 0; id < specs.size(); ++id) {
        PhantomVolumes pv;
        pv.id = id;
        pv.spec = specs[id];
        pv.validation = id >= specs.size() - validation_phantoms;
        pv.truth = generate_phantom(specs[id]);
        pv.target_seed = realization_seed(protocol.seed, id, kTargetLevel);
        const auto target_acq = acquire(pv.truth, protocol, pv.target_seed);
        pv.target = reconstruct(target_acq.counts, target_acq.scale, protocol.psf_sigma);
        for (std::size_t k = 0; k < count_levels.size(); ++k) {
            ScanProtocol low = protocol;
            low.count_budget = protocol.count_budget * count_levels[k];
            const std::uint64_t seed = realization_seed(protocol.seed, id, k);
            const auto acq = acquire(pv.truth, low, seed);
            pv.inputs.push_back(reconstruct(acq.counts, acq.scale, protocol.psf_sigma));
            pv.input_seeds.push_back(seed);
        }
        ds.phantoms.push_back(std::move(pv));
    }
    return ds;
}

/// A single test acquisition family: R independent full-budget realizations
/// and the two thinned halves of realization 0. A noiseless study replaces
/// every realization and both halves with the expected image.
struct Study {
    PhantomSpec spec;
    ScanProtocol protocol;
    Tensor<float> activity;
    Tensor<float> truth;  // noise-free expected image
    std::vector<Tensor<float>> realizations;
    Tensor<float> half1;
    Tensor<float> half2;
    std::vector<std::uint64_t> seeds;
    double thin_p = 0.5;
};

inline Study make_study(const PhantomSpec& spec, const ScanProtocol& protocol, std::size_t realizations,
                        double thin_p = 0.5, bool noiseless = false) {
    if (realizations < 1) throw std::invalid_argument("make_study: need at least one realization");
    Study st;
    st.spec = spec;
    st.protocol = protocol;
    st.thin_p = thin_p;
    st.activity = generate_phantom(spec);
    st.truth = expected_scan(st.activity, protocol);
    if (noiseless) {
        st.realizations.assign(realizations, st.truth);
        st.half1 = st.half2 = st.truth;
        return st;
    }
    Acquisition first;
    for (std::size_t r = 0; r < realizations; ++r) {
        const std::uint64_t seed = realization_seed(protocol.seed, 0, r);
        st.seeds.push_back(seed);
        auto acq = acquire(st.activity, protocol, seed);
        st.realizations.push_back(reconstruct(acq.counts, acq.scale, protocol.psf_sigma));
        if (r == 0) first = std::move(acq);
    }
    const std::uint64_t thin_seed = realization_seed(protocol.seed, 1, 0);
    st.seeds.push_back(thin_seed);
    const auto halves = thin(first.counts, thin_p, thin_seed);
    std::vector<double> s1(first.scale), s2(first.scale);
    for (auto& s : s1) s *= thin_p;
    for (auto& s : s2) s *= 1.0 - thin_p;
    st.half1 = reconstruct(halves.first, s1, protocol.psf_sigma);
    st.half2 = reconstruct(halves.second, s2, protocol.psf_sigma);
    return st;
}

}  // namespace tgd
