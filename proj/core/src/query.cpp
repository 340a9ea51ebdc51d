// Copyright Contributors to the instsplat project
// SPDX-License-Identifier: Apache-2.0
//
#include <instsplat/error.hpp>
#include <instsplat/query.hpp>
#include <instsplat/render.hpp>

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>

namespace instsplat {

std::vector<RankedInstance>
rank_instances(const InstanceTable &table, const Eigen::VectorXd &query) {
    const double qn = query.norm();
    require(qn > 0.0 && std::isfinite(qn), ErrorCode::Validation, "query vector has zero norm");
    std::vector<RankedInstance> out;
    for (const Instance &inst : table.instances()) {
        if (!inst.embedding)
            continue;
        require(inst.embedding->size() == query.size(), ErrorCode::Validation,
                "query and instance embeddings differ in dimension");
        const double en = inst.embedding->norm();
        const double c  = en > 0.0 ? inst.embedding->dot(query) / (en * qn) : 0.0;
        out.push_back({inst.id, c, inst.members.size()});
    }
    std::stable_sort(out.begin(), out.end(), [](const RankedInstance &a, const RankedInstance &b) {
        return a.cosine > b.cosine;
    });
    return out;
}

std::vector<RankedInstance>
select_instances(const InstanceTable &table, const Eigen::VectorXd &query,
                 const SelectOptions &options) {
    auto ranked = rank_instances(table, query);
    if (options.mode == SelectMode::Top1) {
        if (ranked.size() > 1)
            ranked.resize(1);
        return ranked;
    }
    std::erase_if(ranked, [&](const RankedInstance &r) { return r.cosine < options.threshold; });
    return ranked;
}

std::vector<std::uint32_t>
text_select(const InstanceTable &table, const Eigen::VectorXd &query,
            const SelectOptions &options) {
    std::vector<std::uint32_t> out;
    for (const RankedInstance &r : select_instances(table, query, options)) {
        const auto &members = table.at(r.id).members;
        out.insert(out.end(), members.begin(), members.end());
    }
    std::sort(out.begin(), out.end());
    return out;
}

std::vector<int>
classify_points(const InstanceTable &table, std::span<const Embedding> classes,
                std::size_t point_count) {
    require(!classes.empty(), ErrorCode::Validation, "at least one class is required");
    std::vector<int> labels(point_count, kUnassigned);
    for (const Instance &inst : table.instances()) {
        if (!inst.embedding)
            continue;
        int best          = 0;
        double best_score = -std::numeric_limits<double>::infinity();
        for (std::size_t c = 0; c < classes.size(); ++c) {
            const Eigen::VectorXd &v = classes[c].vector;
            require(v.size() == inst.embedding->size(), ErrorCode::Validation,
                    "class and instance embeddings differ in dimension");
            const double denom = v.norm() * inst.embedding->norm();
            const double s     = denom > 0.0 ? v.dot(*inst.embedding) / denom : 0.0;
            if (s > best_score) {
                best_score = s;
                best       = int(c);
            }
        }
        for (std::uint32_t p : inst.members) {
            require(p < point_count, ErrorCode::Validation, "instance member out of range");
            labels[p] = best;
        }
    }
    return labels;
}

std::optional<InstanceId>
click_select(const Scene &scene, const InstanceTable &table, const Camera &camera, int x, int y,
             double threshold) {
    validate(camera);
    require(x >= 0 && y >= 0 && x < camera.width && y < camera.height, ErrorCode::Validation,
            "pixel out of bounds");
    std::optional<InstanceId> best;
    double best_alpha = threshold;
    for (const Instance &inst : table.instances()) {
        const double a = accumulated_alpha_at(scene, camera, inst.members, x, y);
        if (a > best_alpha) {
            best_alpha = a;
            best       = inst.id;
        }
    }
    return best;
}

double
selection_iou(const Scene &scene, std::span<const Camera> cameras, const SelectionCase &selection,
              double tau) {
    require(selection.gt_masks.size() == cameras.size(), ErrorCode::Validation,
            "one ground-truth mask per camera is required");
    std::size_t inter = 0, uni = 0;
    for (std::size_t v = 0; v < cameras.size(); ++v) {
        const BoolMap &gt = selection.gt_masks[v];
        require(gt.width == cameras[v].width && gt.height == cameras[v].height,
                ErrorCode::Validation, "ground-truth mask shape mismatch");
        std::vector<double> alpha(gt.values.size(), 0.0);
        if (!selection.selected.empty())
            alpha = compute_blend_weights(scene, cameras[v], selection.selected).alpha_map().values;
        for (std::size_t p = 0; p < gt.values.size(); ++p) {
            const bool pred = alpha[p] > tau;
            inter += (pred && gt.values[p]) ? 1 : 0;
            uni += (pred || gt.values[p]) ? 1 : 0;
        }
    }
    return uni == 0 ? 0.0 : double(inter) / double(uni);
}

EvalReport
eval_2d(const Scene &scene, std::span<const Camera> cameras,
        std::span<const SelectionCase> selections, double tau) {
    EvalReport report;
    for (std::size_t q = 0; q < selections.size(); ++q) {
        const double v = selection_iou(scene, cameras, selections[q], tau);
        report.classes.push_back(int(q));
        report.per_class_iou.push_back(v);
        report.per_class_acc.push_back(v >= kAccuracyIou ? 1.0 : 0.0);
    }
    if (!selections.empty()) {
        for (std::size_t q = 0; q < selections.size(); ++q) {
            report.miou += report.per_class_iou[q];
            report.macc += report.per_class_acc[q];
        }
        report.miou /= double(selections.size());
        report.macc /= double(selections.size());
    }
    return report;
}

EvalReport
eval_3d(std::span<const int> predicted, std::span<const int> ground_truth) {
    require(predicted.size() == ground_truth.size(), ErrorCode::Validation,
            "prediction and ground truth differ in length");
    std::set<int> present;
    for (int g : ground_truth) {
        if (g >= 0)
            present.insert(g);
    }
    EvalReport report;
    report.classes.assign(present.begin(), present.end());
    const std::size_t k = report.classes.size();
    auto column = [&](int label) -> std::size_t {
        if (label < 0)
            return k + 1;
        auto it = std::lower_bound(report.classes.begin(), report.classes.end(), label);
        return (it != report.classes.end() && *it == label) ? std::size_t(it - report.classes.begin())
                                                            : k;
    };
    report.confusion.assign(k, std::vector<std::size_t>(k + 2, 0));
    for (std::size_t i = 0; i < predicted.size(); ++i) {
        if (ground_truth[i] < 0)
            continue;
        ++report.confusion[column(ground_truth[i])][column(predicted[i])];
    }

    for (std::size_t c = 0; c < k; ++c) {
        const auto &row = report.confusion[c];
        std::size_t total = 0;
        for (std::size_t n : row)
            total += n;
        const std::size_t tp = row[c];
        std::size_t fp = 0;
        for (std::size_t r = 0; r < k; ++r) {
            if (r != c)
                fp += report.confusion[r][c];
        }
        const std::size_t fn       = total - tp;
        const std::size_t assigned = total - row[k + 1];
        report.per_class_iou.push_back(double(tp) / double(tp + fp + fn));
        report.per_class_acc.push_back(assigned == 0 ? 0.0 : double(tp) / double(assigned));
    }
    if (k > 0) {
        for (std::size_t c = 0; c < k; ++c) {
            report.miou += report.per_class_iou[c];
            report.macc += report.per_class_acc[c];
        }
        report.miou /= double(k);
        report.macc /= double(k);
    }
    return report;
}

} // namespace instsplat
