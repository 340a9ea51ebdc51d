// Copyright Contributors to the instsplat project
// SPDX-License-Identifier: Apache-2.0
//
#pragma once

#include <instsplat/image.hpp>
#include <instsplat/instance_table.hpp>
#include <instsplat/scene.hpp>

#include <optional>
#include <span>
#include <string>
#include <vector>

namespace instsplat {

struct Embedding {
    Eigen::VectorXd vector; ///< 512 entries, unit norm
    std::string label;
};

/// Default cosine threshold for SelectMode::Threshold.
inline constexpr double kDefaultSelectThreshold = 0.23;
/// Minimum single-instance alpha at the clicked pixel.
inline constexpr double kClickThreshold = 0.1;
/// IoU above which a query counts as accurate.
inline constexpr double kAccuracyIou = 0.25;
inline constexpr int kUnassigned = -1;

enum class SelectMode { Top1, Threshold };

struct SelectOptions {
    SelectMode mode  = SelectMode::Top1;
    double threshold = kDefaultSelectThreshold;
};

struct RankedInstance {
    InstanceId id;
    double cosine = 0.0;
    std::size_t member_count = 0;
};

/// Embedded instances by descending cosine similarity (ties: ascending id).
std::vector<RankedInstance> rank_instances(const InstanceTable &table,
                                           const Eigen::VectorXd &query);

/// Instances chosen by the query under `options`; empty when nothing is
/// embedded.
std::vector<RankedInstance> select_instances(const InstanceTable &table,
                                             const Eigen::VectorXd &query,
                                             const SelectOptions &options = {});

/// Sorted member indices of the selected instances.
std::vector<std::uint32_t> text_select(const InstanceTable &table, const Eigen::VectorXd &query,
                                       const SelectOptions &options = {});

/// Per point: argmax-cosine class of its instance embedding (lowest index on
/// ties), or kUnassigned.
std::vector<int> classify_points(const InstanceTable &table, std::span<const Embedding> classes,
                                 std::size_t point_count);

/// Instance with the largest single-instance alpha at pixel (x, y), or
/// nullopt when no instance exceeds `threshold` there.
std::optional<InstanceId> click_select(const Scene &scene, const InstanceTable &table,
                                       const Camera &camera, int x, int y,
                                       double threshold = kClickThreshold);

struct EvalReport {
    std::vector<int> classes;          ///< class ids that were evaluated
    std::vector<double> per_class_iou;
    std::vector<double> per_class_acc;
    double miou = 0.0;
    double macc = 0.0;
    /// Row per evaluated class. Columns follow `classes`, then predictions of
    /// any other class id, then unassigned. Empty for 2D reports.
    std::vector<std::vector<std::size_t>> confusion;
};

/// One text query for 2D evaluation: the selected points and the ground
/// truth mask in each camera (empty masks are allowed).
struct SelectionCase {
    std::vector<std::uint32_t> selected;
    std::vector<BoolMap> gt_masks;
};

/// IoU between the binarized render of the selected points and the ground
/// truth, pooled over all views.
double selection_iou(const Scene &scene, std::span<const Camera> cameras,
                     const SelectionCase &selection, double tau = 0.5);

/// Mean IoU over queries and the fraction of queries with IoU >= 0.25.
EvalReport eval_2d(const Scene &scene, std::span<const Camera> cameras,
                   std::span<const SelectionCase> selections, double tau = 0.5);

/// Per-class point IoU and accuracy, macro-averaged over classes present in
/// the ground truth. Unassigned predictions count as misses for IoU and are
/// left out of accuracy. Negative ground-truth labels are ignored.
EvalReport eval_3d(std::span<const int> predicted, std::span<const int> ground_truth);

} // namespace instsplat
