// Copyright Contributors to the instsplat project
// SPDX-License-Identifier: Apache-2.0
//
#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>

#include <cstddef>
#include <cstdint>
#include <limits>
#include <span>
#include <vector>

namespace instsplat {

inline constexpr int kFeatureDim   = 6;
inline constexpr int kEmbeddingDim = 512;

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Mat2 = Eigen::Matrix2d;
using Mat3 = Eigen::Matrix3d;

using Feature       = Eigen::Matrix<double, kFeatureDim, 1>;
/// One row per Gaussian (or per pixel, for feature maps).
using FeatureMatrix = Eigen::Matrix<double, Eigen::Dynamic, kFeatureDim, Eigen::RowMajor>;
using RowMatrix     = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using PositionMatrix = Eigen::Matrix<double, Eigen::Dynamic, 3, Eigen::RowMajor>;

/// A single anisotropic Gaussian. Opacity is stored post-activation and
/// color is the degree-0 (view independent) RGB term.
struct GaussianPoint {
    Vec3 position             = Vec3::Zero();
    Eigen::Quaterniond rotation = Eigen::Quaterniond::Identity();
    Vec3 scale                = Vec3::Constant(0.01);
    double opacity            = 0.5;
    Vec3 color                = Vec3::Zero();
    Feature instance_feature  = Feature::Zero();
};

/// Throws ErrorCode::Validation when a point violates the unit-quaternion,
/// positive-scale or open-interval opacity invariants.
void validate(const GaussianPoint &point);

/// Bitwise comparison of every stored field.
bool bitwise_equal(const GaussianPoint &a, const GaussianPoint &b);

struct Aabb {
    Vec3 min = Vec3::Constant(std::numeric_limits<double>::infinity());
    Vec3 max = Vec3::Constant(-std::numeric_limits<double>::infinity());

    bool empty() const { return (min.array() > max.array()).any(); }
    void extend(const Vec3 &p) {
        min = min.cwiseMin(p);
        max = max.cwiseMax(p);
    }
    bool contains(const Vec3 &p) const {
        return (p.array() >= min.array()).all() && (p.array() <= max.array()).all();
    }
    Vec3 center() const { return 0.5 * (min + max); }
    Vec3 extent() const { return max - min; }
};

/// Immutable snapshot of a Gaussian scene. Point order is the identity of a
/// point: every index array in the library refers to it.
class Scene {
public:
    Scene() = default;
    explicit Scene(std::vector<GaussianPoint> points);

    std::size_t size() const { return mPoints.size(); }
    bool empty() const { return mPoints.empty(); }
    std::span<const GaussianPoint> points() const { return mPoints; }
    const GaussianPoint &operator[](std::size_t i) const { return mPoints[i]; }
    const Aabb &bounds() const { return mBounds; }

    /// Stack of instance_feature rows (n x 6).
    FeatureMatrix features() const;
    /// Stack of positions (n x 3).
    PositionMatrix positions() const;

    /// Copy of this scene with every instance_feature replaced.
    Scene with_features(const FeatureMatrix &features) const;

    bool bitwise_equal(const Scene &other) const;

private:
    std::vector<GaussianPoint> mPoints;
    Aabb mBounds;
};

/// Pinhole camera. Pixel (x, y) samples the image plane at integer
/// coordinates, so a point on the optical axis lands on pixel (cx, cy).
/// Camera space follows the usual vision convention: +z forward, +y down.
struct Camera {
    double fx = 1.0;
    double fy = 1.0;
    double cx = 0.0;
    double cy = 0.0;
    int width  = 1;
    int height = 1;
    Mat3 rotation    = Mat3::Identity(); ///< world -> camera
    Vec3 translation = Vec3::Zero();     ///< world -> camera

    Vec3 to_camera(const Vec3 &world) const { return rotation * world + translation; }
    Vec3 center() const { return -rotation.transpose() * translation; }
    std::size_t pixel_count() const { return std::size_t(width) * std::size_t(height); }

    /// Camera at `eye` looking at `target`; intrinsics from a horizontal
    /// field of view with the principal point at the image center.
    static Camera look_at(const Vec3 &eye, const Vec3 &target, const Vec3 &up,
                          double horizontal_fov_radians, int width, int height);
};

void validate(const Camera &camera);

} // namespace instsplat
