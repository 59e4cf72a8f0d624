#include <gtest/gtest.h>

#include <random>

#include "oracles.hpp"
#include "tgd/masking.hpp"

using namespace tgd;

namespace {

struct Step {
    NetworkGrads<float> grads;
    ForwardTrace<float> trace;
};

Step gradients(const Network<float>& net, const Tensor<float>& x, const Tensor<float>& target) {
    auto trace = forward_trace(net, x, Mode::train);
    Tensor<float> g(trace.output.shape());
    for (std::size_t i = 0; i < g.size(); ++i) g[i] = 2.0f * (trace.output[i] - target[i]) / static_cast<float>(g.size());
    auto grads = backward(net, trace, g);
    return {std::move(grads), std::move(trace)};
}

// Copy frozen slices of `from` into `to`, as the equivalence oracle for one masked step.
void restore_frozen(Network<float>& to, AdamState<float>& to_state, const Network<float>& from,
                    const AdamState<float>& from_state, const MaskSet& masks) {
    for (std::size_t j = 0; j < to.blocks.size(); ++j) {
        auto& b = to.blocks[j];
        const auto& f = from.blocks[j];
        const std::size_t slice = b.conv.weights.size() / b.conv.out_channels();
        for (std::size_t n = 0; n < b.conv.out_channels(); ++n) {
            if (masks.conv[j][n]) continue;
            for (std::size_t i = 0; i < slice; ++i) {
                b.conv.weights[n * slice + i] = f.conv.weights[n * slice + i];
                to_state.blocks[j].weights.m[n * slice + i] = from_state.blocks[j].weights.m[n * slice + i];
                to_state.blocks[j].weights.v[n * slice + i] = from_state.blocks[j].weights.v[n * slice + i];
            }
            if (b.conv.has_bias()) {
                b.conv.bias[n] = f.conv.bias[n];
                to_state.blocks[j].bias.m[n] = from_state.blocks[j].bias.m[n];
                to_state.blocks[j].bias.v[n] = from_state.blocks[j].bias.v[n];
            }
        }
        if (!b.bn) continue;
        for (std::size_t c = 0; c < b.bn->channels(); ++c) {
            if (masks.bn[j][c]) continue;
            b.bn->gamma[c] = f.bn->gamma[c];
            b.bn->beta[c] = f.bn->beta[c];
            b.bn->running_mean[c] = f.bn->running_mean[c];
            b.bn->running_var[c] = f.bn->running_var[c];
            to_state.blocks[j].gamma.m[c] = from_state.blocks[j].gamma.m[c];
            to_state.blocks[j].gamma.v[c] = from_state.blocks[j].gamma.v[c];
            to_state.blocks[j].beta.m[c] = from_state.blocks[j].beta.m[c];
            to_state.blocks[j].beta.v[c] = from_state.blocks[j].beta.v[c];
        }
    }
}

bool states_bit_equal(const AdamState<float>& a, const AdamState<float>& b) {
    if (a.step != b.step) return false;
    for (std::size_t j = 0; j < a.blocks.size(); ++j) {
        const auto& x = a.blocks[j];
        const auto& y = b.blocks[j];
        for (auto [p, q] : {std::pair{&x.weights, &y.weights}, {&x.bias, &y.bias}, {&x.gamma, &y.gamma}, {&x.beta, &y.beta}}) {
            if (!bit_equal(p->m, q->m) || !bit_equal(p->v, q->v)) return false;
        }
    }
    return true;
}

KseReport report_with(const Network<float>& net, std::size_t layer, std::vector<double> kse) {
    auto report = kse_scores(net);
    for (auto& l : report.layers) {
        if (l.conv_layer == layer) l.kse = kse;
    }
    return report;
}

}  // namespace

TEST(BuildMasks, PhiZeroFreezesEverything) {
    const auto net = build_network(NetworkConfig{4, 6, 3}, 1);
    const auto m = build_masks(net, kse_scores(net), 0.0, false);
    EXPECT_EQ(m.retrained_channels(), 0u);
    for (const auto& b : m.bn)
        for (auto v : b) EXPECT_EQ(v, 0);
}

TEST(BuildMasks, PhiAboveOneRetrainsEverything) {
    const auto net = build_network(NetworkConfig{4, 6, 3}, 1);
    const auto m = build_masks(net, kse_scores(net), 1.000001, false);
    EXPECT_EQ(m.retrained_channels(), 6u * 3 + 1);
    EXPECT_EQ(m.bn[0].size(), 0u);
    EXPECT_EQ(m.bn[1], ChannelMask(6, 1));
    const auto frozen = build_masks(net, kse_scores(net), 1.000001, true);
    EXPECT_EQ(frozen.conv.back(), ChannelMask{0});
}

TEST(BuildMasks, ScoresMapOntoPreviousLayerOutputs) {
    const auto net = build_network(NetworkConfig{3, 3, 1}, 2);
    const auto m = build_masks(net, report_with(net, 1, {0.2, 0.5, 0.1}), 0.3, true);
    EXPECT_EQ(m.conv[0], (ChannelMask{1, 0, 1}));
    EXPECT_TRUE(m.bn[0].empty());  // layer 0 has no BN
    const auto m2 = build_masks(net, report_with(net, 2, {0.2, 0.5, 0.1}), 0.3, true);
    EXPECT_EQ(m2.conv[1], (ChannelMask{1, 0, 1}));
    EXPECT_EQ(m2.bn[1], m2.conv[1]);
    EXPECT_EQ(m2.phi, 0.3);
    EXPECT_EQ(m2.source_hash, network_hash(net));
}

TEST(BuildMasks, RejectsReportFromAnotherNetwork) {
    const auto a = build_network(NetworkConfig{3, 3, 1}, 2);
    const auto b = build_network(NetworkConfig{3, 3, 1}, 3);
    EXPECT_THROW(build_masks(a, kse_scores(b), 0.3, false), std::invalid_argument);
    EXPECT_THROW(build_masks(a, kse_scores(a), -0.3, false), std::invalid_argument);
}

TEST(Remask, UnchangedWeightsGiveSameMasksNextGeneration) {
    const auto net = build_network(NetworkConfig{4, 8, 3}, 4);
    const auto m1 = build_masks(net, kse_scores(net), 0.4, true);
    const auto m2 = remask(net, 0.4, m1.generation, true);
    EXPECT_EQ(m2.generation, m1.generation + 1);
    EXPECT_EQ(mask_symmetric_difference(m1, m2), 0u);
    EXPECT_EQ(m1.conv, m2.conv);
    const auto m3 = remask(net, 0.4, m2.generation, true);
    EXPECT_GT(m3.generation, m2.generation);
}

TEST(MaskedUpdate, FirstAdamStepMatchesHandComputation) {
    ConvParams<double> p{Tensor<double>({2, 1, 3, 3}, 1.0), Tensor<double>({2}, 0.5)};
    Tensor<double> gw({2, 1, 3, 3}, 0.0), gb({2}, std::vector<double>{-3.0, 2.0});
    gw[0] = 4.0;
    gw[9] = -0.25;
    auto state = AdamState<double>::zeros_like(Network<double>{{}, {ConvBlock<double>{p, std::nullopt, false}}, ""}).blocks[0];
    AdamConfig cfg{0.01, 0.9, 0.999, 1e-8, 0.0};
    const ChannelMask ones{1, 1};
    masked_update(p, gw, gb, ones, state, cfg, 1);
    // step 1: mhat = g, vhat = g^2, so the update is lr * g / (|g| + eps)
    EXPECT_NEAR(p.weights[0], 1.0 - 0.01 * 4.0 / (4.0 + 1e-8), 1e-15);
    EXPECT_NEAR(p.weights[9], 1.0 + 0.01 * 0.25 / (0.25 + 1e-8), 1e-15);
    EXPECT_EQ(p.weights[1], 1.0);
    EXPECT_NEAR(p.bias[0], 0.5 + 0.01 * 3.0 / (3.0 + 1e-8), 1e-15);
    EXPECT_NEAR(p.bias[1], 0.5 - 0.01 * 2.0 / (2.0 + 1e-8), 1e-15);
}

TEST(MaskedUpdate, WeightDecayOnlyTouchesRetrainedWeights) {
    ConvParams<double> p{Tensor<double>({2, 1, 3, 3}, 1.0), Tensor<double>({2}, 0.5)};
    const Tensor<double> zw({2, 1, 3, 3}), zb({2});
    auto state = AdamState<double>::zeros_like(Network<double>{{}, {ConvBlock<double>{p, std::nullopt, false}}, ""}).blocks[0];
    AdamConfig cfg{0.01, 0.9, 0.999, 1e-8, 1e-5};
    masked_update(p, zw, zb, ChannelMask{1, 0}, state, cfg, 1);
    EXPECT_LT(p.weights[0], 1.0);
    EXPECT_EQ(p.weights[9], 1.0);
    EXPECT_EQ(p.bias[0], 0.5);  // no decay on biases
    EXPECT_EQ(state.weights.m[9], 0.0);
}

TEST(MaskedUpdate, RejectsWrongMaskLength) {
    ConvParams<float> p{Tensor<float>({2, 1, 3, 3}), Tensor<float>({2})};
    BlockMoments<float> s{Moments<float>::like(p.weights), Moments<float>::like(p.bias), {}, {}};
    EXPECT_THROW(masked_update(p, p.weights, p.bias, ChannelMask{1}, s, AdamConfig{}, 1), std::invalid_argument);
}

class MaskedTraining : public ::testing::Test {
protected:
    void SetUp() override {
        net = build_network(NetworkConfig{4, 6, 3}, 21);
        std::mt19937_64 rng(5);
        x = oracle::random_tensor<float>({4, 3, 8, 8}, rng, 0.0, 1.0);
        target = oracle::random_tensor<float>({4, 1, 8, 8}, rng, 0.0, 1.0);
    }

    MaskSet mixed_masks() const {
        auto m = MaskSet::uniform(net, 0);
        std::mt19937_64 rng(77);
        for (std::size_t j = 0; j < m.conv.size(); ++j) {
            for (auto& v : m.conv[j]) v = rng() & 1u;
            if (!m.bn[j].empty()) m.bn[j] = m.conv[j];
        }
        m.conv.back() = {0};
        return m;
    }

    Network<float> net;
    Tensor<float> x, target;
    AdamConfig cfg{1e-2, 0.9, 0.999, 1e-8, 1e-5};
};

TEST_F(MaskedTraining, AllZeroMaskLeavesEverythingBitIdentical) {
    auto trained = net;
    auto state = AdamState<float>::zeros_like(trained);
    const auto masks = MaskSet::uniform(net, 0);
    for (int s = 0; s < 5; ++s) {
        auto st = gradients(trained, x, target);
        apply_step(trained, st.grads, st.trace, &masks, state, cfg);
    }
    EXPECT_TRUE(networks_bit_equal(trained, net));
    EXPECT_TRUE(states_bit_equal(state, [&] { auto z = AdamState<float>::zeros_like(net); z.step = 5; return z; }()));
}

TEST_F(MaskedTraining, AllOnesMaskEqualsUnmaskedTrajectory) {
    auto a = net, b = net;
    auto sa = AdamState<float>::zeros_like(net), sb = sa;
    const auto ones = MaskSet::uniform(net, 1);
    for (int s = 0; s < 10; ++s) {
        ASSERT_TRUE(networks_bit_equal(a, b)) << s;
        ASSERT_TRUE(states_bit_equal(sa, sb)) << s;
        auto ga = gradients(a, x, target);
        apply_step(a, ga.grads, ga.trace, &ones, sa, cfg);
        auto gb = gradients(b, x, target);
        apply_step(b, gb.grads, gb.trace, nullptr, sb, cfg);
    }
    EXPECT_TRUE(networks_bit_equal(a, b));
    EXPECT_FALSE(networks_bit_equal(a, net));
}

TEST_F(MaskedTraining, OneMaskedStepEqualsUnmaskedStepThenRestore) {
    const auto masks = mixed_masks();
    auto masked = net, reference = net;
    auto sm = AdamState<float>::zeros_like(net), sr = sm;
    // a few unmasked warm-up steps so moments are nonzero
    for (int s = 0; s < 3; ++s) {
        auto g = gradients(masked, x, target);
        apply_step(masked, g.grads, g.trace, nullptr, sm, cfg);
    }
    reference = masked;
    sr = sm;
    const auto snapshot = masked;
    const auto snapshot_state = sm;

    auto g = gradients(masked, x, target);
    apply_step(masked, g.grads, g.trace, &masks, sm, cfg);
    apply_step(reference, g.grads, g.trace, nullptr, sr, cfg);
    restore_frozen(reference, sr, snapshot, snapshot_state, masks);

    EXPECT_TRUE(networks_bit_equal(masked, reference));
    EXPECT_TRUE(states_bit_equal(sm, sr));
}

TEST_F(MaskedTraining, FrozenChannelsSurviveHundredStepsExactly) {
    const auto masks = mixed_masks();
    auto trained = net;
    auto state = AdamState<float>::zeros_like(net);
    for (int s = 0; s < 100; ++s) {
        auto g = gradients(trained, x, target);
        apply_step(trained, g.grads, g.trace, &masks, state, cfg);
    }
    std::size_t changed = 0;
    for (std::size_t j = 0; j < net.blocks.size(); ++j) {
        const auto& a = net.blocks[j];
        const auto& b = trained.blocks[j];
        const std::size_t slice = a.conv.weights.size() / a.conv.out_channels();
        for (std::size_t n = 0; n < a.conv.out_channels(); ++n) {
            bool same = true;
            for (std::size_t i = 0; i < slice; ++i) same &= std::bit_cast<std::uint32_t>(a.conv.weights[n * slice + i]) ==
                                                              std::bit_cast<std::uint32_t>(b.conv.weights[n * slice + i]);
            if (a.conv.has_bias()) same &= std::bit_cast<std::uint32_t>(a.conv.bias[n]) == std::bit_cast<std::uint32_t>(b.conv.bias[n]);
            if (masks.conv[j][n] == 0) {
                EXPECT_TRUE(same) << "layer " << j << " channel " << n;
            } else {
                changed += !same;
            }
        }
        if (!a.bn) continue;
        for (std::size_t c = 0; c < a.bn->channels(); ++c) {
            const bool same = a.bn->gamma[c] == b.bn->gamma[c] && a.bn->beta[c] == b.bn->beta[c] &&
                              a.bn->running_mean[c] == b.bn->running_mean[c] && a.bn->running_var[c] == b.bn->running_var[c];
            if (masks.bn[j][c] == 0) {
                EXPECT_TRUE(same) << "bn " << j << " channel " << c;
            } else {
                EXPECT_FALSE(same) << "bn " << j << " channel " << c;
            }
        }
    }
    EXPECT_GT(changed, 0u);
}

TEST_F(MaskedTraining, MasksDoNotAffectForward) {
    const auto masks = mixed_masks();
    (void)masks;
    EXPECT_TRUE(bit_equal(forward(net, x, Mode::infer), forward(net, x, Mode::infer)));
    EXPECT_TRUE(bit_equal(forward_trace(net, x, Mode::train).output, forward(net, x, Mode::train)));
}

TEST_F(MaskedTraining, MaskedBnUpdateMixedMask) {
    auto bn = *net.blocks[1].bn;
    const auto before = bn;
    BlockMoments<float> st{{}, {}, Moments<float>::like(bn.gamma), Moments<float>::like(bn.beta)};
    std::mt19937_64 rng(9);
    const ChannelMask mask{1, 0, 1, 0, 0, 1};
    for (int s = 1; s <= 100; ++s) {
        const auto h = oracle::random_tensor<float>({4, 6, 5, 5}, rng);
        const auto fw = batchnorm_forward(h, bn, Mode::train);
        const auto g = batchnorm_backward(h, bn, fw.stats, oracle::random_tensor<float>(h.shape(), rng));
        masked_bn_update(bn, g.gamma, g.beta, fw.stats, mask, st, cfg, s);
    }
    for (std::size_t c = 0; c < 6; ++c) {
        const bool same = bn.gamma[c] == before.gamma[c] && bn.beta[c] == before.beta[c] &&
                          bn.running_mean[c] == before.running_mean[c] && bn.running_var[c] == before.running_var[c];
        EXPECT_EQ(same, mask[c] == 0) << c;
    }
}
