// Copyright Contributors to the instsplat project
// SPDX-License-Identifier: Apache-2.0
//
#include <instsplat/error.hpp>
#include <instsplat/scene.hpp>

#include <cmath>
#include <cstring>
#include <string>

namespace instsplat {

namespace {

template <typename T>
bool
same_bits(const T &a, const T &b) {
    return std::memcmp(&a, &b, sizeof(T)) == 0;
}

template <typename Derived>
bool
same_bits_dense(const Eigen::DenseBase<Derived> &a, const Eigen::DenseBase<Derived> &b) {
    for (Eigen::Index i = 0; i < a.size(); ++i) {
        if (!same_bits(a.derived().coeff(i), b.derived().coeff(i)))
            return false;
    }
    return true;
}

} // namespace

void
validate(const GaussianPoint &p) {
    require(p.position.allFinite(), ErrorCode::Validation, "gaussian position is not finite");
    require(std::abs(p.rotation.norm() - 1.0) <= 1e-6, ErrorCode::Validation,
            "gaussian rotation must be a unit quaternion");
    require((p.scale.array() > 0.0).all() && p.scale.allFinite(), ErrorCode::Validation,
            "gaussian scale components must be positive");
    require(p.opacity > 0.0 && p.opacity < 1.0, ErrorCode::Validation,
            "gaussian opacity must lie strictly inside (0, 1)");
    require(p.color.allFinite(), ErrorCode::Validation, "gaussian color is not finite");
    require(p.instance_feature.allFinite(), ErrorCode::Validation,
            "gaussian instance feature is not finite");
}

bool
bitwise_equal(const GaussianPoint &a, const GaussianPoint &b) {
    return same_bits_dense(a.position, b.position) &&
           same_bits_dense(a.rotation.coeffs(), b.rotation.coeffs()) &&
           same_bits_dense(a.scale, b.scale) && same_bits(a.opacity, b.opacity) &&
           same_bits_dense(a.color, b.color) &&
           same_bits_dense(a.instance_feature, b.instance_feature);
}

Scene::Scene(std::vector<GaussianPoint> points) : mPoints(std::move(points)) {
    for (std::size_t i = 0; i < mPoints.size(); ++i) {
        try {
            validate(mPoints[i]);
        } catch (const Error &e) {
            fail(ErrorCode::Validation, "point " + std::to_string(i) + ": " + e.what());
        }
        mBounds.extend(mPoints[i].position);
    }
}

FeatureMatrix
Scene::features() const {
    FeatureMatrix out(Eigen::Index(mPoints.size()), kFeatureDim);
    for (std::size_t i = 0; i < mPoints.size(); ++i)
        out.row(Eigen::Index(i)) = mPoints[i].instance_feature.transpose();
    return out;
}

PositionMatrix
Scene::positions() const {
    PositionMatrix out(Eigen::Index(mPoints.size()), 3);
    for (std::size_t i = 0; i < mPoints.size(); ++i)
        out.row(Eigen::Index(i)) = mPoints[i].position.transpose();
    return out;
}

Scene
Scene::with_features(const FeatureMatrix &features) const {
    require(std::size_t(features.rows()) == mPoints.size(), ErrorCode::Validation,
            "feature rows must match the point count");
    std::vector<GaussianPoint> points = mPoints;
    for (std::size_t i = 0; i < points.size(); ++i)
        points[i].instance_feature = features.row(Eigen::Index(i)).transpose();
    return Scene(std::move(points));
}

bool
Scene::bitwise_equal(const Scene &other) const {
    if (mPoints.size() != other.mPoints.size())
        return false;
    for (std::size_t i = 0; i < mPoints.size(); ++i) {
        if (!instsplat::bitwise_equal(mPoints[i], other.mPoints[i]))
            return false;
    }
    return true;
}

Camera
Camera::look_at(const Vec3 &eye, const Vec3 &target, const Vec3 &up,
                double horizontal_fov_radians, int width, int height) {
    const Vec3 forward = (target - eye).normalized();
    Vec3 right         = forward.cross(up);
    require(right.norm() > 1e-9, ErrorCode::Validation, "look_at: up is parallel to the view");
    right.normalize();
    // Image y points down.
    const Vec3 down = forward.cross(right);

    Camera cam;
    cam.rotation.row(0) = right.transpose();
    cam.rotation.row(1) = down.transpose();
    cam.rotation.row(2) = forward.transpose();
    cam.translation     = -cam.rotation * eye;
    cam.width           = width;
    cam.height          = height;
    cam.fx              = 0.5 * width / std::tan(0.5 * horizontal_fov_radians);
    cam.fy              = cam.fx;
    cam.cx              = 0.5 * width;
    cam.cy              = 0.5 * height;
    return cam;
}

void
validate(const Camera &c) {
    require(c.width > 0 && c.height > 0, ErrorCode::Validation, "camera size must be positive");
    require(c.fx > 0.0 && c.fy > 0.0, ErrorCode::Validation, "camera focal lengths must be positive");
    require(c.cx >= 0.0 && c.cx < c.width && c.cy >= 0.0 && c.cy < c.height,
            ErrorCode::Validation, "camera principal point must lie inside the image");
    require(c.rotation.allFinite() && c.translation.allFinite(), ErrorCode::Validation,
            "camera pose is not finite");
    require((c.rotation * c.rotation.transpose() - Mat3::Identity()).norm() < 1e-6,
            ErrorCode::Validation, "camera rotation must be orthonormal");
}

} // namespace instsplat
