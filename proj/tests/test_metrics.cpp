#include <gtest/gtest.h>

#include <random>

#include "oracles.hpp"
#include "tgd/metrics.hpp"

using namespace tgd;

namespace {

std::vector<std::vector<double>> as_doubles(const std::vector<Tensor<float>>& stack) {
    std::vector<std::vector<double>> out;
    for (const auto& t : stack) out.push_back(oracle::to_doubles(t));
    return out;
}

Roi all_voxels(std::size_t n, RoiKind kind) {
    Roi r{kind, "all", {}};
    for (std::size_t i = 0; i < n; ++i) r.indices.push_back(i);
    return r;
}

}  // namespace

TEST(EnsembleBias, TruthEqualRealizationsGiveZero) {
    std::mt19937_64 rng(1);
    const auto truth = oracle::random_tensor<float>({1, 4, 4}, rng, 1.0, 2.0);
    const std::vector<Tensor<float>> stack{truth, truth, truth};
    EXPECT_EQ(ensemble_bias(stack, all_voxels(16, RoiKind::lesion), truth), 0.0);
}

TEST(EnsembleBias, HandArithmetic) {
    const Tensor<float> truth({1, 1, 2}, 2.5f);
    const std::vector<Tensor<float>> stack{Tensor<float>({1, 1, 2}, 2.0f), Tensor<float>({1, 1, 2}, 2.0f)};
    EXPECT_DOUBLE_EQ(ensemble_bias(stack, all_voxels(2, RoiKind::lesion), truth), -20.0);
}

TEST(EnsembleBias, EmptyRoiRejected) {
    const Tensor<float> t({1, 1, 2}, 1.0f);
    const std::vector<Tensor<float>> stack{t};
    EXPECT_THROW(ensemble_bias(stack, Roi{RoiKind::lesion, "x", {}}, t), std::invalid_argument);
    EXPECT_THROW(ensemble_bias(stack, Roi{RoiKind::lesion, "x", {5}}, t), std::invalid_argument);
}

TEST(EnsembleBias, InvariantToAddingMeanRealization) {
    std::mt19937_64 rng(2);
    const auto truth = oracle::random_tensor<float>({1, 3, 3}, rng, 1.0, 2.0);
    std::vector<Tensor<float>> stack{Tensor<float>({1, 3, 3}, 1.0f), Tensor<float>({1, 3, 3}, 3.0f)};
    const auto roi = all_voxels(9, RoiKind::lesion);
    const double before = ensemble_bias(stack, roi, truth);
    stack.push_back(Tensor<float>({1, 3, 3}, 2.0f));
    EXPECT_NEAR(ensemble_bias(stack, roi, truth), before, 1e-12);
}

TEST(EnsembleCov, IdenticalRealizationsGiveZero) {
    const Tensor<float> t({1, 2, 2}, 4.0f);
    const std::vector<Tensor<float>> stack{t, t, t};
    EXPECT_EQ(ensemble_cov(stack, all_voxels(4, RoiKind::background)), 0.0);
}

TEST(EnsembleCov, TwoRealizationClosedForm) {
    for (auto [c, d] : {std::pair{4.0f, 1.0f}, {10.0f, 0.5f}, {2.0f, -0.25f}}) {
        const std::vector<Tensor<float>> stack{Tensor<float>({1, 3, 3}, c + d), Tensor<float>({1, 3, 3}, c - d)};
        EXPECT_EQ(ensemble_cov(stack, all_voxels(9, RoiKind::background)),
                  std::abs(double(d)) * std::sqrt(2.0) / c * 100.0);
    }
}

TEST(EnsembleCov, RejectsSingleRealizationAndZeroMean) {
    const Tensor<float> t({1, 2, 2}, 1.0f);
    EXPECT_THROW(ensemble_cov(std::vector<Tensor<float>>{t}, all_voxels(4, RoiKind::background)), std::invalid_argument);
    const Tensor<float> z({1, 2, 2});
    EXPECT_THROW(ensemble_cov(std::vector<Tensor<float>>{z, z}, all_voxels(4, RoiKind::background)), std::invalid_argument);
}

TEST(EnsembleCov, ScaleInvariant) {
    std::mt19937_64 rng(3);
    std::vector<Tensor<float>> stack, scaled;
    for (int r = 0; r < 5; ++r) {
        stack.push_back(oracle::random_tensor<float>({1, 5, 5}, rng, 1.0, 3.0));
        auto s = stack.back();
        for (auto& v : s.values()) v *= 4.0f;  // power of two keeps every value exact
        scaled.push_back(s);
    }
    const auto roi = all_voxels(25, RoiKind::background);
    EXPECT_NEAR(ensemble_cov(scaled, roi), ensemble_cov(stack, roi), 1e-10);
}

TEST(Metrics, MatchBruteForceOnRandomStacks) {
    std::mt19937_64 rng(4);
    for (int trial = 0; trial < 100; ++trial) {
        const std::size_t R = 2 + rng() % 8, H = 2 + rng() % 6, W = 2 + rng() % 6;
        std::vector<Tensor<float>> stack;
        for (std::size_t r = 0; r < R; ++r) stack.push_back(oracle::random_tensor<float>({1, H, W}, rng, 0.5, 4.0));
        const auto truth = oracle::random_tensor<float>({1, H, W}, rng, 0.5, 4.0);
        Roi roi{RoiKind::lesion, "r", {}};
        for (std::size_t i = 0; i < H * W; ++i)
            if (rng() % 3 != 0 || roi.indices.empty()) roi.indices.push_back(i);
        const auto ds = as_doubles(stack);
        EXPECT_NEAR(ensemble_bias(stack, roi, truth), oracle::bias_percent(ds, roi.indices, oracle::to_doubles(truth)), 1e-6);
        EXPECT_NEAR(ensemble_cov(stack, roi), oracle::cov_percent(ds, roi.indices), 1e-6);
    }
}

TEST(Mse, Definitions) {
    const Tensor<float> a({2}, std::vector<float>{0, 2}), b({2}, std::vector<float>{0, 0});
    EXPECT_EQ(mse(a, b), 2.0);
    EXPECT_EQ(mse(a, a), 0.0);
    EXPECT_TRUE(std::isinf(psnr(a, a, 1.0)));
    EXPECT_NEAR(psnr(a, b, 2.0), 10.0 * std::log10(4.0 / 2.0), 1e-12);
    EXPECT_THROW(mse(a, Tensor<float>({3})), ShapeError);
}

TEST(RoiGeometry, LesionAndBackgroundAreDisjoint) {
    PhantomSpec spec;
    spec.height = spec.width = 48;
    spec.slices = 3;
    spec.ellipses.push_back({24, 24, 18, 15, 0.0, 1.0});
    spec.ellipses.push_back({30, 20, 4, 3, 0.5, 1.0});
    spec.lesions.push_back({16, 28, 3, 2.0});
    spec.disks.push_back({28, 32, 3, 6.0});
    const auto lesion = lesion_roi(spec, 0), bg = background_roi(spec, 2.0), st = structure_roi(spec, 0, 2.0);
    const auto truth = generate_phantom(spec);
    EXPECT_FALSE(lesion.indices.empty());
    EXPECT_FALSE(bg.indices.empty());
    for (auto i : lesion.indices) EXPECT_EQ(truth[i], 2.0f);
    for (auto i : bg.indices) EXPECT_EQ(truth[i], 1.0f);  // uniform body only
    for (auto i : bg.indices) {
        EXPECT_EQ(std::count(lesion.indices.begin(), lesion.indices.end(), i), 0);
        EXPECT_EQ(std::count(st.indices.begin(), st.indices.end(), i), 0);
    }
    EXPECT_THROW(lesion_roi(spec, 1), std::out_of_range);
    EXPECT_EQ(roi_kind_from_string(to_string(RoiKind::structure)), RoiKind::structure);
}

TEST(HallucinationProbe, IdenticalNetsGiveZeroDeltas) {
    auto net = build_network(NetworkConfig{3, 4, 3}, 1);
    std::mt19937_64 rng(5);
    const auto input = oracle::random_tensor<float>({3, 8, 8}, rng, 0.0, 2.0);
    const auto truth = oracle::random_tensor<float>({3, 8, 8}, rng, 0.0, 2.0);
    const auto roi = all_voxels(64, RoiKind::structure);
    const auto rep = hallucination_probe(net, net, input, truth, roi);
    EXPECT_EQ(rep.delta_mse, 0.0);
    EXPECT_EQ(rep.delta_shift, 0.0);

    // zero last layer passes the center slice through; feeding the truth gives zero ROI error
    net.blocks.back().conv.weights.fill(0.0f);
    const auto exact = hallucination_probe(net, net, truth, truth, roi);
    EXPECT_EQ(exact.after.roi_mse, 0.0);
}
