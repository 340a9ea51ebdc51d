// Copyright Contributors to the instsplat project
// SPDX-License-Identifier: Apache-2.0
//
#pragma once

#include <instsplat/image.hpp>
#include <instsplat/instance_table.hpp>
#include <instsplat/scene.hpp>

#include <optional>
#include <span>

namespace instsplat {

/// Added to the diagonal of every screen-space covariance (pixels^2).
inline constexpr double kCovarianceDilation = 0.3;
/// Camera-space depth below which a Gaussian is culled.
inline constexpr double kNearPlane = 0.01;
/// Gaussians contribute inside their 3-sigma screen-space ellipse only.
inline constexpr double kCutoffSigma = 3.0;
/// Front-to-back blending stops once transmittance falls below this.
inline constexpr double kMinTransmittance = 1e-4;

struct Projected2D {
    Vec2 mean2d;
    Mat2 cov2d;
    double depth = 0.0;
    Eigen::Matrix<double, 2, 3> jacobian;
};

/// World-space covariance R S S^T R^T.
Mat3 covariance3d(const GaussianPoint &point);

/// Pinhole projection of the mean plus the local affine (EWA) projection of
/// the covariance. Returns nullopt when the point is in front of the near
/// plane.
std::optional<Projected2D> project_gaussian(const GaussianPoint &point, const Camera &camera);

struct BlendEntry {
    std::uint32_t point;
    double weight; ///< T_i * G_i(u) * opacity_i
};

/// Per-pixel front-to-back blending coefficients. Feature rendering is a
/// linear map through these weights, so they are computed once per view and
/// reused for both the forward pass and its adjoint.
class BlendWeights {
public:
    int width  = 0;
    int height = 0;
    std::size_t point_count = 0;

    std::vector<std::size_t> offsets;  ///< pixel_count + 1 entries
    std::vector<BlendEntry> entries;   ///< grouped by pixel, ascending depth
    std::vector<double> transmittance; ///< residual T after the last entry

    std::size_t pixel_count() const { return std::size_t(width) * std::size_t(height); }
    std::span<const BlendEntry> pixel(std::size_t p) const {
        return {entries.data() + offsets[p], entries.data() + offsets[p + 1]};
    }
    double alpha(std::size_t p) const;
    AlphaMap alpha_map() const;
};

BlendWeights compute_blend_weights(const Scene &scene, const Camera &camera);

/// Blending restricted to the listed points; indices in the result still
/// refer to the full scene.
BlendWeights compute_blend_weights(const Scene &scene, const Camera &camera,
                                   std::span<const std::uint32_t> subset);

ColorImage render_color(const Scene &scene, const BlendWeights &weights,
                        const Vec3 &background = Vec3::Zero());
ColorImage render_color(const Scene &scene, const Camera &camera,
                        const Vec3 &background = Vec3::Zero());

/// M[u] = sum_i w_i(u) * features[i]. Background feature is zero.
FeatureMap render_feature_map(const BlendWeights &weights, const FeatureMatrix &features);
FeatureMap render_feature_map(const Scene &scene, const Camera &camera,
                              const FeatureMatrix &features);

/// Exact adjoint of render_feature_map for fixed weights.
FeatureMatrix backprop_features(const FeatureMap &grad_map, const BlendWeights &weights);

struct SingleInstanceRender {
    FeatureMap features;
    AlphaMap alpha;
};

/// Renders only the member points of one instance, recomputing visibility
/// among them. `features` holds one row per scene point.
SingleInstanceRender render_single_instance(const Scene &scene, const Camera &camera,
                                            const InstanceTable &table, InstanceId id,
                                            const FeatureMatrix &features);
SingleInstanceRender render_single_instance(const Scene &scene, const Camera &camera,
                                            const InstanceTable &table, InstanceId id);

/// Accumulated opacity at one pixel, blending only the listed points.
double accumulated_alpha_at(const Scene &scene, const Camera &camera,
                            std::span<const std::uint32_t> subset, int x, int y);

} // namespace instsplat
