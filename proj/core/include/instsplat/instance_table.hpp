// Copyright Contributors to the instsplat project
// SPDX-License-Identifier: Apache-2.0
//
#pragma once

#include <instsplat/scene.hpp>

#include <compare>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace instsplat {

/// Instance identity: (coarse codebook entry, fine entry within it).
struct InstanceId {
    std::uint32_t coarse = 0;
    std::uint32_t fine   = 0;

    auto operator<=>(const InstanceId &) const = default;
};

std::string to_string(InstanceId id);
/// Parses "coarse:fine"; throws ErrorCode::Validation.
InstanceId parse_instance_id(const std::string &text);

/// Which mask won the association for an instance in one view.
struct AuditEntry {
    std::uint32_t view = 0;
    std::uint32_t mask = 0;
    double score       = 0.0;
};

struct Instance {
    InstanceId id;
    std::vector<std::uint32_t> members;
    std::optional<Eigen::VectorXd> embedding; ///< unit norm when present
    std::vector<AuditEntry> audit;
};

/// Instances in ascending id order. Member lists index into the scene.
class InstanceTable {
public:
    InstanceTable() = default;

    /// Groups points by their (coarse, fine) assignment.
    static InstanceTable from_assignments(std::span<const std::uint32_t> coarse,
                                          std::span<const std::uint32_t> fine);

    std::size_t size() const { return mInstances.size(); }
    bool empty() const { return mInstances.empty(); }
    std::span<const Instance> instances() const { return mInstances; }
    std::span<Instance> instances() { return mInstances; }

    const Instance *find(InstanceId id) const;
    Instance *find(InstanceId id);
    /// Throws ErrorCode::NotFound.
    const Instance &at(InstanceId id) const;

    /// Throws ErrorCode::Conflict if the id is taken.
    void add(Instance instance);
    void erase(InstanceId id);

    std::size_t embedded_count() const;

    /// Per point: index into instances(), or -1 when the point has none.
    std::vector<int> point_owner(std::size_t point_count) const;

    /// Throws ErrorCode::Validation unless the member sets partition
    /// [0, point_count) and every embedding has unit norm.
    void validate(std::size_t point_count) const;

private:
    std::vector<Instance> mInstances;
};

} // namespace instsplat
