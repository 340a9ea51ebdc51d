// Copyright Contributors to the instsplat project
// SPDX-License-Identifier: Apache-2.0
//
#include <instsplat/error.hpp>
#include <instsplat/losses.hpp>

#include <gtest/gtest.h>

#include "test_support.hpp"

#include <functional>

using namespace instsplat;

namespace {

using LossFn = std::function<double(const FeatureMap &)>;

// Central differences over every map entry; returns the worst relative error.
double
worst_relative_error(const FeatureMap &map, const FeatureMap &grad, const LossFn &loss,
                     double step = 1e-3, double skip_below = -1.0) {
    double worst = 0.0;
    FeatureMap probe = map;
    for (Eigen::Index p = 0; p < map.values.rows(); ++p) {
        for (int c = 0; c < kFeatureDim; ++c) {
            const double base = map.values(p, c);
            probe.values(p, c) = base + step;
            const double up    = loss(probe);
            probe.values(p, c) = base - step;
            const double down  = loss(probe);
            probe.values(p, c) = base;
            const double fd    = (up - down) / (2.0 * step);
            const double g     = grad.values(p, c);
            if (skip_below > 0.0 && std::abs(g) < skip_below && std::abs(fd) < skip_below)
                continue;
            const double err = std::abs(fd - g) / std::max(1.0, std::max(std::abs(fd), std::abs(g)));
            worst = std::max(worst, err);
        }
    }
    return worst;
}

BoolMap
mask_of(int w, int h, std::initializer_list<int> pixels) {
    BoolMap m = BoolMap::filled(w, h, false);
    for (int p : pixels)
        m.values[std::size_t(p)] = 1;
    return m;
}

} // namespace

TEST(MaskMean, MatchesPixelLoop) {
    std::mt19937_64 rng(1);
    const FeatureMap map = fixtures::random_map(4, 4, rng);
    const BoolMap mask   = mask_of(4, 4, {0, 3, 6, 9, 15});
    Feature expected     = Feature::Zero();
    for (int p : {0, 3, 6, 9, 15})
        for (int c = 0; c < kFeatureDim; ++c)
            expected[c] += map.values(p, c) / 5.0;
    EXPECT_TRUE(mask_mean_feature(map, mask).isApprox(expected, 1e-14));

    const BoolMap single = mask_of(4, 4, {7});
    EXPECT_EQ(mask_mean_feature(map, single), map.values.row(7).transpose());
    EXPECT_THROW(mask_mean_feature(map, BoolMap::filled(4, 4, false)), Error);
}

TEST(IntraMaskLoss, ZeroWhenConstantInsideMasks) {
    FeatureMap map = FeatureMap::zeros(4, 4);
    // Dyadic value and power-of-two mask sizes keep every mean exact.
    map.values.rowwise() = Feature::Constant(0.75).transpose();
    const std::vector<BoolMap> masks{mask_of(4, 4, {0, 1, 2, 3}), mask_of(4, 4, {5, 9})};
    const LossResult r = intra_mask_loss(map, masks);
    EXPECT_EQ(r.value, 0.0);
    EXPECT_EQ(r.grad.values.cwiseAbs().maxCoeff(), 0.0);
}

TEST(IntraMaskLoss, TwoPixelMaskIsHalfSquaredDistance) {
    std::mt19937_64 rng(2);
    const FeatureMap map = fixtures::random_map(3, 3, rng);
    const std::vector<BoolMap> masks{mask_of(3, 3, {2, 7})};
    const double expected = (map.values.row(2) - map.values.row(7)).squaredNorm() / 2.0;
    EXPECT_NEAR(intra_mask_loss(map, masks).value, expected, 1e-12);
}

TEST(IntraMaskLoss, GradientMatchesFiniteDifferences) {
    std::mt19937_64 rng(3);
    for (int trial = 0; trial < 5; ++trial) {
        const FeatureMap map = fixtures::random_map(8, 8, rng);
        const std::vector<BoolMap> masks{fixtures::random_mask(8, 8, rng),
                                         fixtures::random_mask(8, 8, rng, 0.1)};
        const LossResult r = intra_mask_loss(map, masks);
        const double err   = worst_relative_error(
            map, r.grad, [&](const FeatureMap &m) { return intra_mask_loss(m, masks).value; });
        EXPECT_LT(err, 1e-4);
    }
}

TEST(IntraMaskLoss, InvariantToGlobalShift) {
    std::mt19937_64 rng(4);
    const FeatureMap map = fixtures::random_map(8, 8, rng);
    const std::vector<BoolMap> masks{fixtures::random_mask(8, 8, rng)};
    FeatureMap shifted = map;
    shifted.values.rowwise() += Feature::Constant(3.25).transpose();
    EXPECT_NEAR(intra_mask_loss(map, masks).value, intra_mask_loss(shifted, masks).value, 1e-10);
}

TEST(InterMaskLoss, TwoMasksClosedForm) {
    FeatureMap map = FeatureMap::zeros(4, 1);
    map.values.row(0) << 1, 0, 0, 0, 0, 0;
    map.values.row(1) << 1, 0, 0, 0, 0, 0;
    map.values.row(2) << 0, 2, 0, 0, 0, 0;
    const std::vector<BoolMap> masks{mask_of(4, 1, {0, 1}), mask_of(4, 1, {2})};
    // Means (1,0,..) and (0,2,..): squared distance 5; two ordered pairs over m(m+1) = 6.
    EXPECT_NEAR(inter_mask_loss(map, masks).value, (1.0 / 3.0) / (5.0 + kContrastEpsilon), 1e-15);

    const std::vector<BoolMap> same{mask_of(4, 1, {0}), mask_of(4, 1, {1})};
    const double floor = inter_mask_loss(map, same).value;
    EXPECT_NEAR(floor, (2.0 / 6.0) / kContrastEpsilon, 1e-6);
    EXPECT_TRUE(std::isfinite(floor));
}

TEST(InterMaskLoss, NeedsTwoMasks) {
    const FeatureMap map = FeatureMap::zeros(2, 2);
    const std::vector<BoolMap> one{mask_of(2, 2, {0})};
    EXPECT_THROW(inter_mask_loss(map, one), Error);
}

TEST(InterMaskLoss, GradientMatchesFiniteDifferences) {
    std::mt19937_64 rng(5);
    for (int trial = 0; trial < 5; ++trial) {
        const FeatureMap map = fixtures::random_map(8, 8, rng);
        std::vector<BoolMap> masks;
        for (int k = 0; k < 2 + trial; ++k)
            masks.push_back(fixtures::random_mask(8, 8, rng, 0.15));
        const LossResult r = inter_mask_loss(map, masks);
        const double err   = worst_relative_error(
            map, r.grad, [&](const FeatureMap &m) { return inter_mask_loss(m, masks).value; });
        EXPECT_LT(err, 1e-4);
    }
}

TEST(InterMaskLoss, DecreasesAsMeansSeparate) {
    FeatureMap map = FeatureMap::zeros(2, 1);
    const std::vector<BoolMap> masks{mask_of(2, 1, {0}), mask_of(2, 1, {1})};
    double previous = std::numeric_limits<double>::infinity();
    for (int k = 1; k <= 10; ++k) {
        map.values(1, 0) = 0.1 * k;
        const double v   = inter_mask_loss(map, masks).value;
        EXPECT_GT(v, 0.0);
        EXPECT_LT(v, previous);
        previous = v;
    }
}

TEST(PseudoLoss, L1AndSignGradient) {
    std::mt19937_64 rng(6);
    const FeatureMap a = fixtures::random_map(5, 4, rng);
    EXPECT_EQ(pseudo_loss(a, a).value, 0.0);
    EXPECT_EQ(pseudo_loss(a, a).grad.values.cwiseAbs().maxCoeff(), 0.0);

    FeatureMap b = a;
    b.values.array() -= 1.0;
    const LossResult r = pseudo_loss(a, b);
    EXPECT_NEAR(r.value, 5.0 * 4.0 * 6.0, 1e-9);
    EXPECT_EQ(r.grad.values.minCoeff(), 1.0);

    EXPECT_THROW(pseudo_loss(a, FeatureMap::zeros(4, 5)), Error);
}

TEST(PseudoLoss, GradientMatchesFiniteDifferencesAwayFromTies) {
    std::mt19937_64 rng(7);
    const FeatureMap rendered = fixtures::random_map(8, 8, rng);
    const FeatureMap target   = fixtures::random_map(8, 8, rng);
    const LossResult r        = pseudo_loss(rendered, target);
    double worst              = 0.0;
    FeatureMap probe          = rendered;
    for (Eigen::Index p = 0; p < rendered.values.rows(); ++p) {
        for (int c = 0; c < kFeatureDim; ++c) {
            if (std::abs(rendered.values(p, c) - target.values(p, c)) < 1e-2)
                continue;
            const double base = rendered.values(p, c);
            probe.values(p, c) = base + 1e-3;
            const double up    = pseudo_loss(probe, target).value;
            probe.values(p, c) = base - 1e-3;
            const double down  = pseudo_loss(probe, target).value;
            probe.values(p, c) = base;
            worst = std::max(worst, std::abs((up - down) / 2e-3 - r.grad.values(p, c)));
        }
    }
    EXPECT_LT(worst, 1e-3);
}
