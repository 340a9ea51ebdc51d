// Copyright Contributors to the instsplat project
// SPDX-License-Identifier: Apache-2.0
//
#include <instsplat/error.hpp>
#include <instsplat/losses.hpp>

#include <cmath>
#include <string>

namespace instsplat {

namespace {

void
check_mask(const FeatureMap &map, const BoolMap &mask, std::size_t index) {
    require(mask.width == map.width && mask.height == map.height, ErrorCode::Validation,
            "mask " + std::to_string(index) + " does not match the feature map shape");
    require(mask.count() > 0, ErrorCode::Validation,
            "mask " + std::to_string(index) + " is empty");
}

struct MaskStats {
    std::vector<std::uint32_t> pixels;
    Feature mean;
};

std::vector<MaskStats>
mask_stats(const FeatureMap &map, std::span<const BoolMap> masks) {
    std::vector<MaskStats> out;
    out.reserve(masks.size());
    for (std::size_t i = 0; i < masks.size(); ++i) {
        check_mask(map, masks[i], i);
        MaskStats s;
        s.pixels = masks[i].true_pixels();
        s.mean.setZero();
        for (std::uint32_t p : s.pixels)
            s.mean += map.values.row(p).transpose();
        s.mean /= double(s.pixels.size());
        out.push_back(std::move(s));
    }
    return out;
}

} // namespace

Feature
mask_mean_feature(const FeatureMap &map, const BoolMap &mask) {
    check_mask(map, mask, 0);
    Feature sum = Feature::Zero();
    std::size_t count = 0;
    for (std::size_t p = 0; p < mask.values.size(); ++p) {
        if (mask.values[p]) {
            sum += map.values.row(Eigen::Index(p)).transpose();
            ++count;
        }
    }
    return sum / double(count);
}

LossResult
intra_mask_loss(const FeatureMap &map, std::span<const BoolMap> masks) {
    const auto stats = mask_stats(map, masks);
    LossResult out{0.0, FeatureMap::zeros(map.width, map.height)};
    // The mean's own derivative contributes sum_u (M_u - mean) / |B| = 0,
    // so the full chain rule reduces to 2 (M_u - mean).
    for (const MaskStats &s : stats) {
        for (std::uint32_t p : s.pixels) {
            const Feature diff = map.values.row(p).transpose() - s.mean;
            out.value += diff.squaredNorm();
            out.grad.values.row(p) += 2.0 * diff.transpose();
        }
    }
    return out;
}

LossResult
inter_mask_loss(const FeatureMap &map, std::span<const BoolMap> masks, double epsilon) {
    require(masks.size() >= 2, ErrorCode::Validation,
            "the contrastive loss needs at least two masks");
    const auto stats   = mask_stats(map, masks);
    const double m     = double(stats.size());
    const double scale = 1.0 / (m * (m + 1.0));

    LossResult out{0.0, FeatureMap::zeros(map.width, map.height)};
    std::vector<Feature> mean_grad(stats.size(), Feature::Zero());
    for (std::size_t i = 0; i < stats.size(); ++i) {
        for (std::size_t j = i + 1; j < stats.size(); ++j) {
            const Feature diff   = stats[i].mean - stats[j].mean;
            const double denom   = diff.squaredNorm() + epsilon;
            // (i, j) and (j, i) are both in the sum.
            out.value += 2.0 * scale / denom;
            const Feature g = (-4.0 * scale / (denom * denom)) * diff;
            mean_grad[i] += g;
            mean_grad[j] -= g;
        }
    }
    for (std::size_t i = 0; i < stats.size(); ++i) {
        const Feature per_pixel = mean_grad[i] / double(stats[i].pixels.size());
        for (std::uint32_t p : stats[i].pixels)
            out.grad.values.row(p) += per_pixel.transpose();
    }
    return out;
}

LossResult
pseudo_loss(const FeatureMap &rendered, const FeatureMap &pseudo) {
    require(rendered.same_shape(pseudo), ErrorCode::Validation,
            "pseudo loss maps differ in shape");
    LossResult out{0.0, FeatureMap::zeros(rendered.width, rendered.height)};
    const auto diff = (rendered.values - pseudo.values).eval();
    out.value       = diff.cwiseAbs().sum();
    out.grad.values = diff.unaryExpr([](double d) { return double((d > 0.0) - (d < 0.0)); });
    return out;
}

} // namespace instsplat
