// Copyright Contributors to the instsplat project
// SPDX-License-Identifier: Apache-2.0
//
#include <instsplat/edit.hpp>
#include <instsplat/error.hpp>

#include <limits>

namespace instsplat {

EditedScene
remove_instance(const Scene &scene, const InstanceTable &table, InstanceId id) {
    const Instance &victim = table.at(id);

    std::vector<char> removed(scene.size(), 0);
    for (std::uint32_t m : victim.members) {
        require(m < scene.size(), ErrorCode::Validation, "instance member out of range");
        removed[m] = 1;
    }

    constexpr auto kGone = std::numeric_limits<std::uint32_t>::max();
    std::vector<std::uint32_t> remap(scene.size(), kGone);
    std::vector<GaussianPoint> kept;
    kept.reserve(scene.size() - victim.members.size());
    for (std::size_t i = 0; i < scene.size(); ++i) {
        if (removed[i])
            continue;
        remap[i] = std::uint32_t(kept.size());
        kept.push_back(scene[i]);
    }

    InstanceTable out;
    for (const Instance &inst : table.instances()) {
        if (inst.id == id)
            continue;
        Instance copy = inst;
        copy.members.clear();
        for (std::uint32_t m : inst.members) {
            if (m < remap.size() && remap[m] != kGone)
                copy.members.push_back(remap[m]);
        }
        out.add(std::move(copy));
    }
    return {Scene(std::move(kept)), std::move(out)};
}

Scene
recolor_instance(const Scene &scene, const InstanceTable &table, InstanceId id, const Vec3 &rgb) {
    require((rgb.array() >= 0.0).all() && (rgb.array() <= 1.0).all(), ErrorCode::Validation,
            "color components must lie in [0, 1]");
    const Instance &target = table.at(id);
    std::vector<GaussianPoint> points(scene.points().begin(), scene.points().end());
    for (std::uint32_t m : target.members) {
        require(m < points.size(), ErrorCode::Validation, "instance member out of range");
        points[m].color = rgb;
    }
    return Scene(std::move(points));
}

EditedScene
insert_instance(const Scene &scene, const InstanceTable &table,
                std::span<const GaussianPoint> points, InstanceId id) {
    require(table.find(id) == nullptr, ErrorCode::Conflict,
            "instance " + to_string(id) + " already exists");
    std::vector<GaussianPoint> all(scene.points().begin(), scene.points().end());
    Instance added{id, {}, std::nullopt, {}};
    for (const GaussianPoint &p : points) {
        added.members.push_back(std::uint32_t(all.size()));
        all.push_back(p);
    }
    InstanceTable out = table;
    out.add(std::move(added));
    return {Scene(std::move(all)), std::move(out)};
}

} // namespace instsplat
