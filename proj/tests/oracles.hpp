#pragma once

// Independent reference implementations used to check the library. Nothing
// here calls into the code paths it checks: loops are written out directly,
// in double precision, without Eigen.

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <vector>

#include "tgd/tensor.hpp"

namespace oracle {

using tgd::Tensor;

template <class T>
Tensor<T> random_tensor(tgd::Shape shape, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
    Tensor<T> t(std::move(shape));
    std::uniform_real_distribution<double> d(lo, hi);
    for (auto& v : t.values()) v = static_cast<T>(d(rng));
    return t;
}

/// Direct quadruple loop: out[b,n,y,x] = bias[n] + sum_c,ky,kx w[n,c,ky,kx] * in[b,c,y+ky-1,x+kx-1].
inline std::vector<double> conv_loops(const std::vector<double>& in, std::size_t B, std::size_t C, std::size_t H,
                                      std::size_t W, const std::vector<double>& w, std::size_t N,
                                      const std::vector<double>& bias) {
    std::vector<double> out(B * N * H * W, 0.0);
    for (std::size_t b = 0; b < B; ++b)
        for (std::size_t n = 0; n < N; ++n)
            for (std::size_t y = 0; y < H; ++y)
                for (std::size_t x = 0; x < W; ++x) {
                    double acc = bias.empty() ? 0.0 : bias[n];
                    for (std::size_t c = 0; c < C; ++c)
                        for (int ky = 0; ky < 3; ++ky)
                            for (int kx = 0; kx < 3; ++kx) {
                                const long sy = static_cast<long>(y) + ky - 1, sx = static_cast<long>(x) + kx - 1;
                                if (sy < 0 || sx < 0 || sy >= static_cast<long>(H) || sx >= static_cast<long>(W)) continue;
                                acc += w[((n * C + c) * 3 + ky) * 3 + kx] *
                                       in[((b * C + c) * H + sy) * W + sx];
                            }
                    out[((b * N + n) * H + y) * W + x] = acc;
                }
    return out;
}

/// Central finite difference of a scalar function with respect to every entry of `x`.
inline std::vector<double> finite_difference(const std::function<double(const std::vector<double>&)>& f,
                                             std::vector<double> x, double step = 1e-4) {
    std::vector<double> g(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double keep = x[i];
        x[i] = keep + step;
        const double up = f(x);
        x[i] = keep - step;
        const double down = f(x);
        x[i] = keep;
        g[i] = (up - down) / (2.0 * step);
    }
    return g;
}

/// Elementwise |a-b| / max(|a|, |b|, floor), maximized.
inline double max_relative_error(const std::vector<double>& a, const std::vector<double>& b, double floor = 1e-6) {
    double worst = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double denom = std::max({std::abs(a[i]), std::abs(b[i]), floor});
        worst = std::max(worst, std::abs(a[i] - b[i]) / denom);
    }
    return worst;
}

template <class T>
std::vector<double> to_doubles(const Tensor<T>& t) {
    return std::vector<double>(t.values().begin(), t.values().end());
}

/// Two-pass batch norm in train mode over [B,C,H,W], gamma/beta per channel.
inline std::vector<double> batchnorm_two_pass(const std::vector<double>& in, std::size_t B, std::size_t C,
                                              std::size_t HW, const std::vector<double>& gamma,
                                              const std::vector<double>& beta, double eps) {
    std::vector<double> out(in.size());
    for (std::size_t c = 0; c < C; ++c) {
        double mean = 0.0;
        for (std::size_t b = 0; b < B; ++b)
            for (std::size_t i = 0; i < HW; ++i) mean += in[(b * C + c) * HW + i];
        mean /= static_cast<double>(B * HW);
        double var = 0.0;
        for (std::size_t b = 0; b < B; ++b)
            for (std::size_t i = 0; i < HW; ++i) {
                const double d = in[(b * C + c) * HW + i] - mean;
                var += d * d;
            }
        var /= static_cast<double>(B * HW);
        for (std::size_t b = 0; b < B; ++b)
            for (std::size_t i = 0; i < HW; ++i) {
                const std::size_t k = (b * C + c) * HW + i;
                out[k] = gamma[c] * (in[k] - mean) / std::sqrt(var + eps) + beta[c];
            }
    }
    return out;
}

// --- KSE, recomputed from scratch ---

/// Kernels of input channel c as a list of 9-vectors, read with flat index math.
inline std::vector<std::vector<double>> kernels_of(const std::vector<double>& w, std::size_t N, std::size_t C,
                                                   std::size_t c) {
    std::vector<std::vector<double>> k(N, std::vector<double>(9));
    for (std::size_t n = 0; n < N; ++n)
        for (std::size_t e = 0; e < 9; ++e) k[n][e] = w[(n * C + c) * 9 + e];
    return k;
}

inline double sparsity(const std::vector<double>& w, std::size_t N, std::size_t C, std::size_t c) {
    double s = 0.0;
    for (const auto& k : kernels_of(w, N, C, c))
        for (double v : k) s += std::fabs(v);
    return s;
}

/// All-pairs distance matrix, full sort of each row, sum of the k smallest.
inline std::vector<double> density(const std::vector<double>& w, std::size_t N, std::size_t C, std::size_t c, int k) {
    const auto ks = kernels_of(w, N, C, c);
    std::vector<double> dm(N, 0.0);
    if (N < 2) return dm;
    const std::size_t kk = std::min<std::size_t>(static_cast<std::size_t>(k), N - 1);
    for (std::size_t i = 0; i < N; ++i) {
        std::vector<std::pair<double, std::size_t>> row;
        for (std::size_t j = 0; j < N; ++j) {
            if (j == i) continue;
            double d2 = 0.0;
            for (std::size_t e = 0; e < 9; ++e) d2 += (ks[i][e] - ks[j][e]) * (ks[i][e] - ks[j][e]);
            row.emplace_back(std::sqrt(d2), j);
        }
        std::sort(row.begin(), row.end());
        for (std::size_t r = 0; r < kk; ++r) dm[i] += row[r].first;
    }
    return dm;
}

inline double entropy(const std::vector<double>& dm) {
    if (dm.size() <= 1) return 0.0;
    double total = 0.0;
    for (double v : dm) total += v;
    if (total <= 0.0) return std::log2(static_cast<double>(dm.size()));
    double e = 0.0;
    for (double v : dm)
        if (v > 0) e -= (v / total) * std::log2(v / total);
    return e;
}

inline std::vector<double> minmax(const std::vector<double>& v) {
    double lo = v[0], hi = v[0];
    for (double x : v) lo = std::min(lo, x), hi = std::max(hi, x);
    std::vector<double> out(v.size(), 0.0);
    if (hi > lo)
        for (std::size_t i = 0; i < v.size(); ++i) out[i] = (v[i] - lo) / (hi - lo);
    return out;
}

struct KseLayer {
    std::vector<double> s, e, kse;
};

inline KseLayer kse_layer(const std::vector<double>& w, std::size_t N, std::size_t C, int k, double alpha) {
    KseLayer r;
    for (std::size_t c = 0; c < C; ++c) {
        r.s.push_back(sparsity(w, N, C, c));
        r.e.push_back(entropy(density(w, N, C, c, k)));
    }
    const auto sn = minmax(r.s), en = minmax(r.e);
    for (std::size_t c = 0; c < C; ++c) r.kse.push_back(std::sqrt(sn[c] / (1.0 + alpha * en[c])));
    return r;
}

// --- Ensemble metrics, recomputed with flat loops ---

inline double bias_percent(const std::vector<std::vector<double>>& stack, const std::vector<std::size_t>& roi,
                           const std::vector<double>& truth) {
    double t = 0.0;
    for (auto i : roi) t += truth[i];
    t /= static_cast<double>(roi.size());
    double m = 0.0;
    for (const auto& r : stack) {
        double mu = 0.0;
        for (auto i : roi) mu += r[i];
        m += mu / static_cast<double>(roi.size());
    }
    m /= static_cast<double>(stack.size());
    return 100.0 * (m - t) / t;
}

inline double cov_percent(const std::vector<std::vector<double>>& stack, const std::vector<std::size_t>& roi) {
    const double R = static_cast<double>(stack.size());
    double sd_sum = 0.0, total = 0.0;
    for (auto i : roi) {
        double m = 0.0;
        for (const auto& r : stack) m += r[i];
        m /= R;
        double ss = 0.0;
        for (const auto& r : stack) ss += (r[i] - m) * (r[i] - m);
        sd_sum += std::sqrt(ss / (R - 1));
        for (const auto& r : stack) total += r[i];
    }
    const double grand = total / (R * static_cast<double>(roi.size()));
    return 100.0 * (sd_sum / static_cast<double>(roi.size())) / grand;
}

}  // namespace oracle
