// Copyright Contributors to the instsplat project
// SPDX-License-Identifier: Apache-2.0
//
#pragma once

#include <instsplat/codebook.hpp>
#include <instsplat/image.hpp>
#include <instsplat/instance_table.hpp>
#include <instsplat/losses.hpp>
#include <instsplat/scene.hpp>

#include <span>
#include <string>
#include <vector>

namespace instsplat {

enum class ScoreMode {
    Combined,    ///< IoU * (1 - feature distance)
    IouOnly,     ///< feature distance treated as 0
    FeatureOnly, ///< IoU treated as 1 wherever the supports intersect
};

struct AssociationOptions {
    double tau       = 0.5; ///< binarization threshold on single-instance alpha
    double min_score = 0.1; ///< best mask must score above this to count
    ScoreMode mode   = ScoreMode::Combined;
};

/// True where alpha > tau.
BoolMap binarize(const AlphaMap &alpha, double tau);

/// |a & b| / |a | b|, 0 when both are empty.
double iou(const BoolMap &a, const BoolMap &b);

/// Pseudo-feature map inside the mask, zero outside.
FeatureMap fill_mask_with_pseudo(const BoolMap &mask, const FeatureMap &pseudo);

/// Mean per-pixel L1 distance between the single-instance map and the
/// feature-filled mask over the intersection of their supports, clamped to
/// [0, 1]. Zero when the supports do not intersect.
double feature_distance(const FeatureMap &instance_map, const BoolMap &support,
                        const BoolMap &mask, const FeatureMap &filled);

/// Joint IoU / feature-distance score of one (instance, mask) pair.
double score(const FeatureMap &instance_map, const AlphaMap &instance_alpha,
             const BoolMap &mask, const FeatureMap &filled, double tau,
             ScoreMode mode = ScoreMode::Combined);

struct AssociationView {
    Camera camera;
    std::vector<InstanceMask> masks;
};

struct AssociationResult {
    InstanceTable table;
    std::size_t skipped_masks = 0; ///< masks without an embedding
    std::vector<std::string> warnings;
};

/// For every view and every instance, the best-scoring mask contributes its
/// embedding with the score as weight; each instance ends with the
/// renormalized weighted mean, or no embedding.
///
/// `partition` supplies member lists (existing embeddings are discarded),
/// `quantized` the per-point features rendered into single-instance maps and
/// `pseudo` the per-point targets used to fill masks.
AssociationResult associate(const Scene &scene, const InstanceTable &partition,
                            const FeatureMatrix &quantized, std::span<const AssociationView> views,
                            const FeatureMatrix &pseudo, const AssociationOptions &options = {});

AssociationResult associate(const Scene &scene, const TwoLevelCodebook &codebook,
                            std::span<const AssociationView> views, const FeatureMatrix &pseudo,
                            const AssociationOptions &options = {});

} // namespace instsplat
