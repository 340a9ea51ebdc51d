// Copyright Contributors to the instsplat project
// SPDX-License-Identifier: Apache-2.0
//
#include <instsplat/error.hpp>
#include <instsplat/instance_table.hpp>

#include <algorithm>
#include <cmath>
#include <charconv>
#include <map>

namespace instsplat {

std::string
to_string(InstanceId id) {
    return std::to_string(id.coarse) + ":" + std::to_string(id.fine);
}

InstanceId
parse_instance_id(const std::string &text) {
    const auto colon = text.find(':');
    require(colon != std::string::npos, ErrorCode::Validation,
            "instance id must look like <coarse>:<fine>");
    auto number = [&](std::size_t begin, std::size_t end) {
        std::uint32_t v = 0;
        const char *b   = text.data() + begin;
        const char *e   = text.data() + end;
        const auto r    = std::from_chars(b, e, v);
        require(begin < end && r.ec == std::errc() && r.ptr == e, ErrorCode::Validation,
                "bad instance id '" + text + "'");
        return v;
    };
    return {number(0, colon), number(colon + 1, text.size())};
}

InstanceTable
InstanceTable::from_assignments(std::span<const std::uint32_t> coarse,
                                std::span<const std::uint32_t> fine) {
    require(coarse.size() == fine.size(), ErrorCode::Validation,
            "coarse and fine assignments differ in length");
    std::map<InstanceId, std::vector<std::uint32_t>> groups;
    for (std::size_t i = 0; i < coarse.size(); ++i)
        groups[{coarse[i], fine[i]}].push_back(std::uint32_t(i));

    InstanceTable table;
    table.mInstances.reserve(groups.size());
    for (auto &[id, members] : groups)
        table.mInstances.push_back(Instance{id, std::move(members), std::nullopt, {}});
    return table;
}

const Instance *
InstanceTable::find(InstanceId id) const {
    auto it = std::lower_bound(mInstances.begin(), mInstances.end(), id,
                               [](const Instance &a, InstanceId b) { return a.id < b; });
    return (it != mInstances.end() && it->id == id) ? &*it : nullptr;
}

Instance *
InstanceTable::find(InstanceId id) {
    return const_cast<Instance *>(std::as_const(*this).find(id));
}

const Instance &
InstanceTable::at(InstanceId id) const {
    const Instance *found = find(id);
    require(found != nullptr, ErrorCode::NotFound, "unknown instance " + to_string(id));
    return *found;
}

void
InstanceTable::add(Instance instance) {
    require(find(instance.id) == nullptr, ErrorCode::Conflict,
            "instance " + to_string(instance.id) + " already exists");
    auto it = std::lower_bound(mInstances.begin(), mInstances.end(), instance.id,
                               [](const Instance &a, InstanceId b) { return a.id < b; });
    mInstances.insert(it, std::move(instance));
}

void
InstanceTable::erase(InstanceId id) {
    std::erase_if(mInstances, [&](const Instance &a) { return a.id == id; });
}

std::size_t
InstanceTable::embedded_count() const {
    return std::size_t(std::count_if(mInstances.begin(), mInstances.end(),
                                     [](const Instance &a) { return a.embedding.has_value(); }));
}

std::vector<int>
InstanceTable::point_owner(std::size_t point_count) const {
    std::vector<int> owner(point_count, -1);
    for (std::size_t k = 0; k < mInstances.size(); ++k) {
        for (std::uint32_t m : mInstances[k].members) {
            if (m < point_count)
                owner[m] = int(k);
        }
    }
    return owner;
}

void
InstanceTable::validate(std::size_t point_count) const {
    std::vector<char> seen(point_count, 0);
    for (const Instance &inst : mInstances) {
        for (std::uint32_t m : inst.members) {
            require(m < point_count, ErrorCode::Validation,
                    "instance " + to_string(inst.id) + " references point out of range");
            require(!seen[m], ErrorCode::Validation,
                    "point " + std::to_string(m) + " belongs to more than one instance");
            seen[m] = 1;
        }
        if (inst.embedding) {
            require(std::abs(inst.embedding->norm() - 1.0) <= 1e-4, ErrorCode::Validation,
                    "instance " + to_string(inst.id) + " embedding is not unit norm");
        }
    }
    require(std::all_of(seen.begin(), seen.end(), [](char c) { return c != 0; }),
            ErrorCode::Validation, "instances do not cover every point");
}

} // namespace instsplat
