// Copyright Contributors to the instsplat project
// SPDX-License-Identifier: Apache-2.0
//
#pragma once

#include <instsplat/image.hpp>
#include <instsplat/scene.hpp>

#include <cmath>
#include <filesystem>
#include <numbers>
#include <random>
#include <string>

namespace instsplat::fixtures {

/// Camera 4 units behind the origin looking down +z.
inline Camera
front_camera(int width, int height, double fov_degrees = 60.0) {
    return Camera::look_at(Vec3(0.0, 0.0, -4.0), Vec3::Zero(), Vec3(0.0, -1.0, 0.0),
                           fov_degrees * std::numbers::pi / 180.0, width, height);
}

inline Eigen::Quaterniond
random_rotation(std::mt19937_64 &rng) {
    std::normal_distribution<double> n(0.0, 1.0);
    Eigen::Vector4d q(n(rng), n(rng), n(rng), n(rng));
    q.normalize();
    return {q[0], q[1], q[2], q[3]};
}

struct RandomSceneOptions {
    double spread    = 0.8;
    double min_scale = 0.04;
    double max_scale = 0.2;
};

inline Scene
random_scene(std::size_t n, std::uint64_t seed, const RandomSceneOptions &o = {}) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::normal_distribution<double> g(0.0, 1.0);
    std::vector<GaussianPoint> points(n);
    for (GaussianPoint &p : points) {
        for (int a = 0; a < 3; ++a)
            p.position[a] = o.spread * (2.0 * u(rng) - 1.0);
        p.rotation = random_rotation(rng);
        for (int a = 0; a < 3; ++a)
            p.scale[a] = o.min_scale + (o.max_scale - o.min_scale) * u(rng);
        p.opacity = 0.1 + 0.85 * u(rng);
        for (int a = 0; a < 3; ++a)
            p.color[a] = u(rng);
        for (int c = 0; c < kFeatureDim; ++c)
            p.instance_feature[c] = g(rng);
    }
    return Scene(std::move(points));
}

inline FeatureMatrix
random_features(std::size_t n, std::mt19937_64 &rng, double scale = 1.0) {
    std::normal_distribution<double> g(0.0, scale);
    FeatureMatrix f(Eigen::Index(n), kFeatureDim);
    for (Eigen::Index i = 0; i < f.rows(); ++i)
        for (int c = 0; c < kFeatureDim; ++c)
            f(i, c) = g(rng);
    return f;
}

inline FeatureMap
random_map(int width, int height, std::mt19937_64 &rng, double scale = 1.0) {
    FeatureMap m = FeatureMap::zeros(width, height);
    m.values     = random_features(std::size_t(width) * height, rng, scale);
    return m;
}

inline BoolMap
random_mask(int width, int height, std::mt19937_64 &rng, double density = 0.3) {
    std::bernoulli_distribution b(density);
    BoolMap m = BoolMap::filled(width, height, false);
    for (auto &v : m.values)
        v = b(rng) ? 1 : 0;
    if (m.count() == 0)
        m.values[0] = 1;
    return m;
}

/// Fresh empty directory under the system temp dir.
inline std::filesystem::path
scratch_dir(const std::string &name) {
    const auto dir = std::filesystem::temp_directory_path() / ("instsplat_test_" + name);
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

} // namespace instsplat::fixtures
