// Copyright Contributors to the instsplat project
// SPDX-License-Identifier: Apache-2.0
//
#include <instsplat/error.hpp>
#include <instsplat/render.hpp>

#include <algorithm>
#include <cmath>
#include <numeric>

namespace instsplat {

namespace {

struct Splat {
    std::uint32_t index;
    double depth;
    Vec2 mean;
    Mat2 conic; // inverse screen-space covariance
    double opacity;
    int x0, x1, y0, y1;
};

double
max_eigenvalue(const Mat2 &m) {
    const double mid  = 0.5 * (m(0, 0) + m(1, 1));
    const double det  = m(0, 0) * m(1, 1) - m(0, 1) * m(1, 0);
    const double disc = std::max(mid * mid - det, 0.0);
    return mid + std::sqrt(disc);
}

std::optional<Splat>
make_splat(const Scene &scene, const Camera &camera, std::uint32_t index) {
    const GaussianPoint &p = scene[index];
    const auto projected   = project_gaussian(p, camera);
    if (!projected)
        return std::nullopt;

    const double radius = kCutoffSigma * std::sqrt(max_eigenvalue(projected->cov2d));
    Splat s;
    s.index   = index;
    s.depth   = projected->depth;
    s.mean    = projected->mean2d;
    s.conic   = projected->cov2d.inverse();
    s.opacity = p.opacity;
    s.x0      = std::max(0, int(std::ceil(s.mean.x() - radius)));
    s.x1      = std::min(camera.width - 1, int(std::floor(s.mean.x() + radius)));
    s.y0      = std::max(0, int(std::ceil(s.mean.y() - radius)));
    s.y1      = std::min(camera.height - 1, int(std::floor(s.mean.y() + radius)));
    if (s.x0 > s.x1 || s.y0 > s.y1)
        return std::nullopt;
    return s;
}

// Opacity-weighted Gaussian falloff at pixel (x, y), or a negative value
// outside the cutoff ellipse.
double
splat_alpha(const Splat &s, int x, int y) {
    const Vec2 d            = Vec2(double(x), double(y)) - s.mean;
    const double mahalanobis = d.dot(s.conic * d);
    if (mahalanobis > kCutoffSigma * kCutoffSigma)
        return -1.0;
    return s.opacity * std::exp(-0.5 * mahalanobis);
}

std::vector<Splat>
sorted_splats(const Scene &scene, const Camera &camera, std::span<const std::uint32_t> subset) {
    std::vector<Splat> splats;
    splats.reserve(subset.size());
    for (std::uint32_t index : subset) {
        require(index < scene.size(), ErrorCode::Validation, "point index out of range");
        if (auto s = make_splat(scene, camera, index))
            splats.push_back(*s);
    }
    std::sort(splats.begin(), splats.end(), [](const Splat &a, const Splat &b) {
        return a.depth < b.depth || (a.depth == b.depth && a.index < b.index);
    });
    return splats;
}

std::vector<std::uint32_t>
all_indices(std::size_t n) {
    std::vector<std::uint32_t> out(n);
    std::iota(out.begin(), out.end(), 0u);
    return out;
}

} // namespace

Mat3
covariance3d(const GaussianPoint &point) {
    const Mat3 r = point.rotation.normalized().toRotationMatrix();
    const Mat3 m = r * point.scale.asDiagonal();
    return m * m.transpose();
}

std::optional<Projected2D>
project_gaussian(const GaussianPoint &point, const Camera &camera) {
    const Vec3 pc = camera.to_camera(point.position);
    if (pc.z() <= kNearPlane)
        return std::nullopt;

    const double inv_z  = 1.0 / pc.z();
    const double inv_z2 = inv_z * inv_z;

    Projected2D out;
    out.depth  = pc.z();
    out.mean2d = Vec2(camera.fx * pc.x() * inv_z + camera.cx, camera.fy * pc.y() * inv_z + camera.cy);
    out.jacobian << camera.fx * inv_z, 0.0, -camera.fx * pc.x() * inv_z2,
                    0.0, camera.fy * inv_z, -camera.fy * pc.y() * inv_z2;

    const Mat3 cov_cam = camera.rotation * covariance3d(point) * camera.rotation.transpose();
    Mat2 cov2d         = out.jacobian * cov_cam * out.jacobian.transpose();
    cov2d              = 0.5 * (cov2d + cov2d.transpose());
    cov2d.diagonal().array() += kCovarianceDilation;
    out.cov2d = cov2d;
    return out;
}

double
BlendWeights::alpha(std::size_t p) const {
    double a = 0.0;
    for (const BlendEntry &e : pixel(p))
        a += e.weight;
    return a;
}

AlphaMap
BlendWeights::alpha_map() const {
    AlphaMap map;
    map.width  = width;
    map.height = height;
    map.values.resize(pixel_count());
    for (std::size_t p = 0; p < pixel_count(); ++p)
        map.values[p] = alpha(p);
    return map;
}

BlendWeights
compute_blend_weights(const Scene &scene, const Camera &camera) {
    const auto indices = all_indices(scene.size());
    return compute_blend_weights(scene, camera, indices);
}

BlendWeights
compute_blend_weights(const Scene &scene, const Camera &camera,
                      std::span<const std::uint32_t> subset) {
    validate(camera);
    const std::vector<Splat> splats = sorted_splats(scene, camera, subset);

    BlendWeights out;
    out.width       = camera.width;
    out.height      = camera.height;
    out.point_count = scene.size();
    const std::size_t pixels = out.pixel_count();

    // Splats are visited front to back, so every bucket is already in depth
    // order with the index tie-break applied.
    std::vector<std::vector<std::pair<std::uint32_t, double>>> buckets(pixels);
    for (const Splat &s : splats) {
        for (int y = s.y0; y <= s.y1; ++y) {
            for (int x = s.x0; x <= s.x1; ++x) {
                const double a = splat_alpha(s, x, y);
                if (a >= 0.0)
                    buckets[std::size_t(y) * out.width + x].emplace_back(s.index, a);
            }
        }
    }

    out.offsets.resize(pixels + 1);
    out.transmittance.resize(pixels);
    out.offsets[0] = 0;
    for (std::size_t p = 0; p < pixels; ++p) {
        double t = 1.0;
        for (const auto &[index, a] : buckets[p]) {
            if (t < kMinTransmittance)
                break;
            out.entries.push_back({index, t * a});
            t *= 1.0 - a;
        }
        out.transmittance[p] = t;
        out.offsets[p + 1]   = out.entries.size();
    }
    return out;
}

ColorImage
render_color(const Scene &scene, const BlendWeights &weights, const Vec3 &background) {
    ColorImage image = ColorImage::filled(weights.width, weights.height, Vec3::Zero());
    for (std::size_t p = 0; p < weights.pixel_count(); ++p) {
        Vec3 c       = Vec3::Zero();
        double alpha = 0.0;
        for (const BlendEntry &e : weights.pixel(p)) {
            c += e.weight * scene[e.point].color;
            alpha += e.weight;
        }
        image.values.row(Eigen::Index(p)) = (c + (1.0 - alpha) * background).transpose();
    }
    return image;
}

ColorImage
render_color(const Scene &scene, const Camera &camera, const Vec3 &background) {
    return render_color(scene, compute_blend_weights(scene, camera), background);
}

FeatureMap
render_feature_map(const BlendWeights &weights, const FeatureMatrix &features) {
    require(std::size_t(features.rows()) == weights.point_count, ErrorCode::Validation,
            "feature rows must match the point count");
    FeatureMap map = FeatureMap::zeros(weights.width, weights.height);
    for (std::size_t p = 0; p < weights.pixel_count(); ++p) {
        auto row = map.values.row(Eigen::Index(p));
        for (const BlendEntry &e : weights.pixel(p))
            row += e.weight * features.row(e.point);
    }
    return map;
}

FeatureMap
render_feature_map(const Scene &scene, const Camera &camera, const FeatureMatrix &features) {
    require(std::size_t(features.rows()) == scene.size(), ErrorCode::Validation,
            "feature rows must match the point count");
    return render_feature_map(compute_blend_weights(scene, camera), features);
}

FeatureMatrix
backprop_features(const FeatureMap &grad_map, const BlendWeights &weights) {
    require(grad_map.width == weights.width && grad_map.height == weights.height,
            ErrorCode::Validation, "gradient map shape does not match the blend weights");
    FeatureMatrix grad = FeatureMatrix::Zero(Eigen::Index(weights.point_count), kFeatureDim);
    for (std::size_t p = 0; p < weights.pixel_count(); ++p) {
        const auto g = grad_map.values.row(Eigen::Index(p));
        for (const BlendEntry &e : weights.pixel(p))
            grad.row(e.point) += e.weight * g;
    }
    return grad;
}

SingleInstanceRender
render_single_instance(const Scene &scene, const Camera &camera, const InstanceTable &table,
                       InstanceId id, const FeatureMatrix &features) {
    const Instance &instance = table.at(id);
    const BlendWeights weights = compute_blend_weights(scene, camera, instance.members);
    return {render_feature_map(weights, features), weights.alpha_map()};
}

SingleInstanceRender
render_single_instance(const Scene &scene, const Camera &camera, const InstanceTable &table,
                       InstanceId id) {
    return render_single_instance(scene, camera, table, id, scene.features());
}

double
accumulated_alpha_at(const Scene &scene, const Camera &camera,
                     std::span<const std::uint32_t> subset, int x, int y) {
    require(x >= 0 && y >= 0 && x < camera.width && y < camera.height, ErrorCode::Validation,
            "pixel out of bounds");
    double t     = 1.0;
    double alpha = 0.0;
    for (const Splat &s : sorted_splats(scene, camera, subset)) {
        if (x < s.x0 || x > s.x1 || y < s.y0 || y > s.y1)
            continue;
        const double a = splat_alpha(s, x, y);
        if (a < 0.0)
            continue;
        if (t < kMinTransmittance)
            break;
        alpha += t * a;
        t *= 1.0 - a;
    }
    return alpha;
}

} // namespace instsplat
