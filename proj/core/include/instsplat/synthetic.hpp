// Copyright Contributors to the instsplat project
// SPDX-License-Identifier: Apache-2.0
//
#pragma once

#include <instsplat/image.hpp>
#include <instsplat/io.hpp>
#include <instsplat/query.hpp>
#include <instsplat/scene.hpp>

#include <cstdint>
#include <vector>

namespace instsplat {

enum class Layout { Grid, Random };

struct SyntheticSceneSpec {
    std::size_t instance_count      = 8;
    std::size_t points_per_instance = 250;
    Layout layout                   = Layout::Grid;
    /// Minimum center distance for Layout::Random (world units).
    double min_separation = 1.2;
    /// Spacing between grid cells (world units).
    double grid_spacing = 1.5;
    /// Standard deviation of point offsets inside a blob.
    double blob_radius = 0.25;
    /// Mean Gaussian scale.
    double gaussian_scale = 0.06;
    /// Per-instance colors; a fixed palette fills missing entries.
    std::vector<Vec3> colors;
    /// Per-instance class ids; instance index when empty.
    std::vector<int> class_ids;
    int image_width  = 64;
    int image_height = 64;
    std::size_t camera_count = 6;
    double camera_elevation_degrees = 35.0;
    double camera_fov_degrees       = 60.0;
    /// Move instance 1 between camera 0 and instance 0 so it covers part of it.
    bool occlusion = false;
    /// Lateral offset of the occluder, in blob radii, when occlusion is set.
    double occlusion_offset = 1.5;
    std::uint64_t seed = 0;

    void validate() const;
};

struct SyntheticScene {
    Scene scene;
    std::vector<Camera> cameras;
    std::vector<int> point_instance;  ///< instance index per point
    std::vector<int> point_class;     ///< class id per point
    std::vector<int> instance_class;  ///< class id per instance
    /// Supervision masks per view: pixels with accumulated alpha > 0.5,
    /// each given to the instance contributing most of the blend weight.
    /// Each mask carries its class embedding.
    std::vector<ViewMasks> masks;
    /// Which instance each supervision mask came from, per view.
    std::vector<std::vector<int>> mask_instance;
    /// Ground truth per view and instance: the instance rendered alone,
    /// binarized at 0.5.
    std::vector<std::vector<BoolMap>> gt_masks;
    /// Orthonormal class embeddings, one per class id.
    std::vector<Embedding> class_embeddings;
};

/// Throws ErrorCode::Generation when a random layout cannot honor the
/// separation after bounded retries.
SyntheticScene generate_synthetic(const SyntheticSceneSpec &spec);

/// Rows of a seeded random orthonormal basis of R^512.
std::vector<Embedding> orthonormal_embeddings(std::size_t count, std::uint64_t seed);

} // namespace instsplat
