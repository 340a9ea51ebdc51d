// Copyright Contributors to the instsplat project
// SPDX-License-Identifier: Apache-2.0
//
#include <instsplat/error.hpp>
#include <instsplat/render.hpp>
#include <instsplat/synthetic.hpp>

#include <Eigen/QR>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

namespace instsplat {

namespace {

const Vec3 kPalette[] = {
    {0.90, 0.20, 0.20}, {0.20, 0.70, 0.25}, {0.20, 0.35, 0.90}, {0.95, 0.80, 0.15},
    {0.75, 0.25, 0.80}, {0.15, 0.80, 0.80}, {0.95, 0.55, 0.15}, {0.55, 0.55, 0.55},
};

Vec3
palette_color(std::size_t i) {
    constexpr std::size_t base = std::size(kPalette);
    if (i < base)
        return kPalette[i];
    // Golden-ratio hue walk for anything past the fixed palette.
    const double h = std::fmod(0.13 + 0.618033988749895 * double(i), 1.0) * 6.0;
    const double x = 1.0 - std::abs(std::fmod(h, 2.0) - 1.0);
    Vec3 c;
    switch (int(h)) {
    case 0: c = {1, x, 0}; break;
    case 1: c = {x, 1, 0}; break;
    case 2: c = {0, 1, x}; break;
    case 3: c = {0, x, 1}; break;
    case 4: c = {x, 0, 1}; break;
    default: c = {1, 0, x}; break;
    }
    return 0.15 + 0.7 * c.array();
}

std::vector<Vec3>
grid_centers(const SyntheticSceneSpec &spec) {
    const auto cols = std::size_t(std::ceil(std::sqrt(double(spec.instance_count))));
    const auto rows = (spec.instance_count + cols - 1) / cols;
    std::vector<Vec3> out;
    for (std::size_t i = 0; i < spec.instance_count; ++i) {
        const double c = double(i % cols) - 0.5 * double(cols - 1);
        const double r = double(i / cols) - 0.5 * double(rows - 1);
        out.emplace_back(c * spec.grid_spacing, r * spec.grid_spacing, 0.0);
    }
    return out;
}

std::vector<Vec3>
random_centers(const SyntheticSceneSpec &spec, std::mt19937_64 &rng) {
    const double side = spec.grid_spacing * std::ceil(std::sqrt(double(spec.instance_count)));
    std::uniform_real_distribution<double> coord(-0.5 * side, 0.5 * side);
    constexpr int kRestarts = 20;
    constexpr int kTries    = 2000;
    for (int restart = 0; restart < kRestarts; ++restart) {
        std::vector<Vec3> out;
        for (int t = 0; t < kTries && out.size() < spec.instance_count; ++t) {
            const Vec3 c(coord(rng), coord(rng), 0.0);
            const bool clear = std::all_of(out.begin(), out.end(), [&](const Vec3 &o) {
                return (o - c).norm() >= spec.min_separation;
            });
            if (clear)
                out.push_back(c);
        }
        if (out.size() == spec.instance_count)
            return out;
    }
    fail(ErrorCode::Generation, "cannot place instances with the requested separation");
}

std::vector<Camera>
camera_ring(const SyntheticSceneSpec &spec, const std::vector<Vec3> &centers) {
    double reach = 0.0;
    for (const Vec3 &c : centers)
        reach = std::max(reach, c.norm());
    reach += 3.0 * spec.blob_radius;
    const double fov      = spec.camera_fov_degrees * std::numbers::pi / 180.0;
    const double distance = 1.1 * reach / std::sin(0.5 * fov);
    const double el       = spec.camera_elevation_degrees * std::numbers::pi / 180.0;
    std::vector<Camera> out;
    for (std::size_t k = 0; k < spec.camera_count; ++k) {
        const double az = 2.0 * std::numbers::pi * double(k) / double(spec.camera_count);
        const Vec3 eye  = distance * Vec3(std::cos(el) * std::cos(az), std::cos(el) * std::sin(az),
                                         std::sin(el));
        out.push_back(Camera::look_at(eye, Vec3::Zero(), Vec3::UnitZ(), fov, spec.image_width,
                                      spec.image_height));
    }
    return out;
}

} // namespace

void
SyntheticSceneSpec::validate() const {
    require(instance_count > 0 && points_per_instance > 0, ErrorCode::Validation,
            "instance and point counts must be positive");
    require(layout != Layout::Random || min_separation > 0.0, ErrorCode::Validation,
            "random layout needs a positive minimum separation");
    require(grid_spacing > 0.0 && blob_radius > 0.0 && gaussian_scale > 0.0,
            ErrorCode::Validation, "spacing, blob radius and scale must be positive");
    require(class_ids.empty() || class_ids.size() == instance_count, ErrorCode::Validation,
            "class ids must be given for every instance or none");
    for (int c : class_ids)
        require(c >= 0 && c < kEmbeddingDim, ErrorCode::Validation, "class id out of range");
    require(colors.size() <= instance_count, ErrorCode::Validation, "more colors than instances");
    require(image_width > 0 && image_height > 0 && camera_count > 0, ErrorCode::Validation,
            "image size and camera count must be positive");
    require(camera_fov_degrees > 0.0 && camera_fov_degrees < 180.0, ErrorCode::Validation,
            "field of view must lie in (0, 180)");
    require(!occlusion || instance_count >= 2, ErrorCode::Validation,
            "occlusion needs at least two instances");
}

std::vector<Embedding>
orthonormal_embeddings(std::size_t count, std::uint64_t seed) {
    require(count <= std::size_t(kEmbeddingDim), ErrorCode::Validation,
            "at most 512 orthonormal embeddings exist");
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    Eigen::MatrixXd g(kEmbeddingDim, Eigen::Index(count));
    for (Eigen::Index j = 0; j < g.cols(); ++j)
        for (Eigen::Index i = 0; i < g.rows(); ++i)
            g(i, j) = normal(rng);
    Eigen::HouseholderQR<Eigen::MatrixXd> qr(g);
    const Eigen::MatrixXd q =
        qr.householderQ() * Eigen::MatrixXd::Identity(kEmbeddingDim, Eigen::Index(count));
    std::vector<Embedding> out(count);
    for (std::size_t k = 0; k < count; ++k) {
        out[k].vector = q.col(Eigen::Index(k)).normalized();
        out[k].label  = "class_" + std::to_string(k);
    }
    return out;
}

SyntheticScene
generate_synthetic(const SyntheticSceneSpec &spec) {
    spec.validate();
    std::mt19937_64 rng(spec.seed);

    std::vector<Vec3> centers =
        spec.layout == Layout::Grid ? grid_centers(spec) : random_centers(spec, rng);
    SyntheticScene out;
    out.cameras = camera_ring(spec, centers);
    if (spec.occlusion) {
        // Pull instance 1 toward camera 0 in front of instance 0, shifted sideways.
        const Camera &cam = out.cameras[0];
        const Vec3 eye    = cam.center();
        const Vec3 right  = cam.rotation.row(0).transpose();
        centers[1] = centers[0] + 0.35 * (eye - centers[0]) +
                     spec.occlusion_offset * spec.blob_radius * right;
    }

    for (std::size_t i = 0; i < spec.instance_count; ++i)
        out.instance_class.push_back(spec.class_ids.empty() ? int(i) : spec.class_ids[i]);
    const int classes = *std::max_element(out.instance_class.begin(), out.instance_class.end()) + 1;

    std::normal_distribution<double> normal(0.0, 1.0);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::vector<GaussianPoint> points;
    points.reserve(spec.instance_count * spec.points_per_instance);
    for (std::size_t i = 0; i < spec.instance_count; ++i) {
        const Vec3 color = i < spec.colors.size() ? spec.colors[i] : palette_color(i);
        for (std::size_t k = 0; k < spec.points_per_instance; ++k) {
            GaussianPoint p;
            Vec3 offset;
            for (int a = 0; a < 3; ++a)
                offset[a] = std::clamp(normal(rng), -2.5, 2.5) * spec.blob_radius;
            p.position = centers[i] + offset;
            Eigen::Vector4d q(normal(rng), normal(rng), normal(rng), normal(rng));
            q.normalize();
            p.rotation = Eigen::Quaterniond(q[0], q[1], q[2], q[3]);
            for (int a = 0; a < 3; ++a)
                p.scale[a] = spec.gaussian_scale * (0.7 + 0.6 * unit(rng));
            p.opacity = 0.6 + 0.35 * unit(rng);
            for (int a = 0; a < 3; ++a)
                p.color[a] = std::clamp(color[a] + 0.05 * normal(rng), 0.0, 1.0);
            points.push_back(p);
            out.point_instance.push_back(int(i));
            out.point_class.push_back(out.instance_class[i]);
        }
    }
    out.scene            = Scene(std::move(points));
    out.class_embeddings = orthonormal_embeddings(std::size_t(classes), spec.seed ^ 0xc1a55ull);

    std::vector<std::vector<std::uint32_t>> members(spec.instance_count);
    for (std::size_t p = 0; p < out.point_instance.size(); ++p)
        members[out.point_instance[p]].push_back(std::uint32_t(p));

    for (std::size_t v = 0; v < out.cameras.size(); ++v) {
        const Camera &cam          = out.cameras[v];
        const BlendWeights weights = compute_blend_weights(out.scene, cam);

        // Each covered pixel goes to the instance with the largest share.
        std::vector<BoolMap> modal(spec.instance_count,
                                   BoolMap::filled(cam.width, cam.height, false));
        std::vector<double> share(spec.instance_count);
        for (std::size_t px = 0; px < weights.pixel_count(); ++px) {
            if (!(weights.alpha(px) > 0.5))
                continue;
            std::fill(share.begin(), share.end(), 0.0);
            for (const BlendEntry &e : weights.pixel(px))
                share[out.point_instance[e.point]] += e.weight;
            const auto best = std::size_t(std::max_element(share.begin(), share.end()) - share.begin());
            modal[best].values[px] = 1;
        }

        ViewMasks vm;
        vm.view = std::uint32_t(v);
        std::vector<int> owners;
        for (std::size_t i = 0; i < spec.instance_count; ++i) {
            if (modal[i].count() == 0)
                continue;
            InstanceMask m;
            m.mask      = std::move(modal[i]);
            m.view_id   = std::uint32_t(v);
            m.embedding = out.class_embeddings[out.instance_class[i]].vector;
            vm.masks.push_back(std::move(m));
            owners.push_back(int(i));
        }
        out.masks.push_back(std::move(vm));
        out.mask_instance.push_back(std::move(owners));

        std::vector<BoolMap> gt;
        for (std::size_t i = 0; i < spec.instance_count; ++i) {
            const AlphaMap alpha = compute_blend_weights(out.scene, cam, members[i]).alpha_map();
            BoolMap b            = BoolMap::filled(cam.width, cam.height, false);
            for (std::size_t px = 0; px < alpha.values.size(); ++px)
                b.values[px] = alpha.values[px] > 0.5 ? 1 : 0;
            gt.push_back(std::move(b));
        }
        out.gt_masks.push_back(std::move(gt));
    }
    return out;
}

} // namespace instsplat
