// Copyright Contributors to the instsplat project
// SPDX-License-Identifier: Apache-2.0
//
#pragma once

#include <instsplat/instance_table.hpp>
#include <instsplat/scene.hpp>

namespace instsplat {

/// Scene and instance table after an edit that changes point indices.
struct EditedScene {
    Scene scene;
    InstanceTable table;
};

/// Drops the member points of `id`, keeping the order of everything else.
/// Member indices of the remaining instances are remapped.
EditedScene remove_instance(const Scene &scene, const InstanceTable &table, InstanceId id);

/// Replaces the color of every member point. Geometry, opacity and features
/// are untouched.
Scene recolor_instance(const Scene &scene, const InstanceTable &table, InstanceId id,
                       const Vec3 &rgb);

/// Appends `points` as a new instance owning the appended index range.
EditedScene insert_instance(const Scene &scene, const InstanceTable &table,
                            std::span<const GaussianPoint> points, InstanceId id);

} // namespace instsplat
