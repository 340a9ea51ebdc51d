// Copyright Contributors to the instsplat project
// SPDX-License-Identifier: Apache-2.0
//
#pragma once

#include <instsplat/image.hpp>

#include <optional>
#include <span>

namespace instsplat {

/// Added to squared mean distances in the contrastive term so that masks
/// sharing a mean give a large but finite loss.
inline constexpr double kContrastEpsilon = 1e-6;

/// One view-level boolean segment with its optional language embedding.
/// Masks carry no identity across views.
struct InstanceMask {
    BoolMap mask;
    std::uint32_t view_id = 0;
    std::optional<Eigen::VectorXd> embedding;
};

struct LossResult {
    double value = 0.0;
    FeatureMap grad; ///< d value / d M
};

/// Channel-wise mean of M over the true pixels of the mask.
Feature mask_mean_feature(const FeatureMap &map, const BoolMap &mask);

/// sum_i sum_{u in B_i} |M_u - mean_i|^2, differentiated through the means.
LossResult intra_mask_loss(const FeatureMap &map, std::span<const BoolMap> masks);

/// 1 / (m (m + 1)) * sum_{i != j} 1 / (|mean_i - mean_j|^2 + eps).
LossResult inter_mask_loss(const FeatureMap &map, std::span<const BoolMap> masks,
                           double epsilon = kContrastEpsilon);

/// Element-wise L1 distance between the map rendered from quantized
/// features and the map rendered from the pseudo ground truth. The gradient
/// is taken with respect to `rendered` and is zero at exact ties.
LossResult pseudo_loss(const FeatureMap &rendered, const FeatureMap &pseudo);

} // namespace instsplat
