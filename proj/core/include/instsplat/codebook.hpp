// Copyright Contributors to the instsplat project
// SPDX-License-Identifier: Apache-2.0
//
#pragma once

#include <instsplat/instance_table.hpp>
#include <instsplat/scene.hpp>

#include <cstdint>
#include <optional>
#include <vector>

namespace instsplat {

/// k x d entries plus one entry index per input row.
struct Codebook {
    RowMatrix entries;
    std::vector<std::uint32_t> assignments;

    std::size_t size() const { return std::size_t(entries.rows()); }
    int dim() const { return int(entries.cols()); }
};

enum class Seeding {
    Uniform,        ///< k distinct rows drawn uniformly at random
    KMeansPlusPlus, ///< greedy D^2 seeding
};

struct CodebookInit {
    Codebook codebook;
    bool degraded = false; ///< fewer rows than requested entries; k was lowered to n
};

/// Seeds k entries from distinct rows of `features` and assigns every row to
/// its nearest entry.
CodebookInit init_codebook(const RowMatrix &features, std::size_t k, std::uint64_t seed,
                           Seeding seeding = Seeding::Uniform);

/// Nearest entry by squared Euclidean distance; ties go to the lowest index.
std::vector<std::uint32_t> assign(const RowMatrix &features, const RowMatrix &entries);

/// Moves every entry to the mean of its assigned rows. Entries left without
/// rows are re-seeded on the rows with the largest distortion, which are
/// reassigned to them. Never increases distortion().
Codebook update_codebook(const RowMatrix &features, const Codebook &current);

/// Sum over rows of the squared distance to the assigned entry.
double distortion(const RowMatrix &features, const Codebook &codebook);

/// Row i = entries[assignments[i]].
RowMatrix quantize_forward(const Codebook &codebook);

/// Straight-through rule: the gradient w.r.t. a quantized row is copied
/// unchanged to the continuous row that selected it.
RowMatrix straight_through_backward(const RowMatrix &grad_quantized);

struct KMeansTrace {
    std::size_t rounds = 0;
    bool converged     = false;
    std::vector<double> distortion; ///< initial value then one per half-step
};

/// Alternates assign / update until assignments stop changing or
/// `max_rounds` is reached.
KMeansTrace run_kmeans(const RowMatrix &features, Codebook &codebook,
                       std::size_t max_rounds = 50);

/// init_codebook followed by run_kmeans.
Codebook build_flat(const RowMatrix &features, std::size_t k, std::uint64_t seed,
                    Seeding seeding = Seeding::KMeansPlusPlus, std::size_t max_rounds = 50);

struct TwoLevelOptions {
    std::size_t coarse_size = 64;
    std::size_t fine_size   = 10;
    bool use_positions      = true;
    double position_weight  = 1.0;
    Seeding seeding         = Seeding::KMeansPlusPlus;
    std::size_t max_rounds  = 50;
    std::uint64_t seed      = 0;
};

/// Coarse clusters over [feature; normalized position] refined by
/// feature-only clusters inside each coarse cluster.
class TwoLevelCodebook {
public:
    TwoLevelOptions options;
    Aabb bounds;                           ///< position normalization box
    RowMatrix coarse_entries;              ///< k1 x 9
    std::vector<RowMatrix> fine_entries;   ///< per coarse entry: k2' x 6
    std::vector<std::uint32_t> coarse_assignments;
    std::vector<std::uint32_t> fine_assignments;

    std::size_t point_count() const { return coarse_assignments.size(); }
    InstanceId instance_of(std::size_t point) const {
        return {coarse_assignments[point], fine_assignments[point]};
    }

    /// [feature; weight * normalized position], or zeros in place of the
    /// position when positions are disabled.
    RowMatrix coarse_input(const FeatureMatrix &features, const PositionMatrix &positions) const;

    /// Fine entry of each point (n x 6).
    FeatureMatrix quantized() const;

    /// Per point: the summed gradient of every point sharing its fine entry,
    /// i.e. the gradient with respect to that entry.
    FeatureMatrix entry_gradient(const FeatureMatrix &grad_quantized) const;

    /// Instances that own at least one point.
    std::vector<InstanceId> populated() const;
    InstanceTable instance_table() const;

    /// Nearest coarse entry over the concatenated input, then nearest fine
    /// entry within that coarse cluster.
    void reassign(const FeatureMatrix &features, const PositionMatrix &positions);
    /// Recomputes entries as means of the current assignments with the same
    /// empty-entry repair as update_codebook.
    void update(const FeatureMatrix &features, const PositionMatrix &positions);

    /// Sum of squared distances between each feature and its fine entry.
    double fine_distortion(const FeatureMatrix &features) const;
};

/// n < coarse_size silently lowers the coarse size to n.
TwoLevelCodebook build_two_level(const FeatureMatrix &features, const PositionMatrix &positions,
                                 const TwoLevelOptions &options);

/// Maps positions into the unit cube spanned by `bounds`; degenerate axes map to 0.
PositionMatrix normalize_positions(const PositionMatrix &positions, const Aabb &bounds);

} // namespace instsplat
