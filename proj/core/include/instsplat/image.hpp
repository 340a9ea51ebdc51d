// Copyright Contributors to the instsplat project
// SPDX-License-Identifier: Apache-2.0
//
#pragma once

#include <instsplat/scene.hpp>

#include <cstdint>
#include <vector>

namespace instsplat {

using ColorMatrix = Eigen::Matrix<double, Eigen::Dynamic, 3, Eigen::RowMajor>;

/// H x W x 6 feature image; row y * width + x holds pixel (x, y).
struct FeatureMap {
    int width  = 0;
    int height = 0;
    FeatureMatrix values;

    static FeatureMap zeros(int width, int height);
    std::size_t pixel_count() const { return std::size_t(width) * std::size_t(height); }
    bool same_shape(const FeatureMap &other) const {
        return width == other.width && height == other.height;
    }
};

struct ColorImage {
    int width  = 0;
    int height = 0;
    ColorMatrix values;

    static ColorImage filled(int width, int height, const Vec3 &color);
    std::size_t pixel_count() const { return std::size_t(width) * std::size_t(height); }
};

/// Per-pixel accumulated opacity.
struct AlphaMap {
    int width  = 0;
    int height = 0;
    std::vector<double> values;

    std::size_t pixel_count() const { return values.size(); }
};

/// Boolean image stored one byte per pixel (0 or 1).
struct BoolMap {
    int width  = 0;
    int height = 0;
    std::vector<std::uint8_t> values;

    static BoolMap filled(int width, int height, bool value);
    std::size_t pixel_count() const { return values.size(); }
    std::size_t count() const;
    bool at(int x, int y) const { return values[std::size_t(y) * width + x] != 0; }
    void set(int x, int y, bool v) { values[std::size_t(y) * width + x] = v ? 1 : 0; }
    bool same_shape(const BoolMap &other) const {
        return width == other.width && height == other.height;
    }
    /// Indices of true pixels in row-major order.
    std::vector<std::uint32_t> true_pixels() const;
};

} // namespace instsplat
