// Copyright Contributors to the instsplat project
// SPDX-License-Identifier: Apache-2.0
//
#include <instsplat/image.hpp>

#include <algorithm>

namespace instsplat {

FeatureMap
FeatureMap::zeros(int width, int height) {
    FeatureMap map;
    map.width  = width;
    map.height = height;
    map.values = FeatureMatrix::Zero(Eigen::Index(width) * height, kFeatureDim);
    return map;
}

ColorImage
ColorImage::filled(int width, int height, const Vec3 &color) {
    ColorImage image;
    image.width  = width;
    image.height = height;
    image.values.resize(Eigen::Index(width) * height, 3);
    image.values.rowwise() = color.transpose();
    return image;
}

BoolMap
BoolMap::filled(int width, int height, bool value) {
    BoolMap map;
    map.width  = width;
    map.height = height;
    map.values.assign(std::size_t(width) * height, value ? 1 : 0);
    return map;
}

std::size_t
BoolMap::count() const {
    return std::size_t(std::count_if(values.begin(), values.end(), [](auto v) { return v != 0; }));
}

std::vector<std::uint32_t>
BoolMap::true_pixels() const {
    std::vector<std::uint32_t> out;
    for (std::size_t i = 0; i < values.size(); ++i) {
        if (values[i])
            out.push_back(std::uint32_t(i));
    }
    return out;
}

} // namespace instsplat
