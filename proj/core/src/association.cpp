// Copyright Contributors to the instsplat project
// SPDX-License-Identifier: Apache-2.0
//
#include <instsplat/association.hpp>
#include <instsplat/error.hpp>
#include <instsplat/render.hpp>

#include <algorithm>
#include <cmath>

namespace instsplat {

namespace {

void
check_shape(int w, int h, int ow, int oh, const char *what) {
    require(w == ow && h == oh, ErrorCode::Validation, std::string(what) + " shape mismatch");
}

// Score against the raw pseudo map; inside the mask the filled map equals it.
double
score_on_support(const FeatureMap &instance_map,
                 const std::vector<std::uint32_t> &support_pixels, std::size_t support_count,
                 const BoolMap &mask, std::size_t mask_count, const FeatureMap &pseudo,
                 ScoreMode mode) {
    std::size_t overlap = 0;
    double l1           = 0.0;
    for (std::uint32_t p : support_pixels) {
        if (!mask.values[p])
            continue;
        ++overlap;
        if (mode != ScoreMode::IouOnly)
            l1 += (instance_map.values.row(p) - pseudo.values.row(p)).cwiseAbs().sum();
    }
    if (overlap == 0)
        return 0.0;
    const double distance = std::clamp(l1 / double(overlap), 0.0, 1.0);
    const double overlap_ratio =
        double(overlap) / double(support_count + mask_count - overlap);
    switch (mode) {
    case ScoreMode::IouOnly:
        return overlap_ratio;
    case ScoreMode::FeatureOnly:
        return 1.0 - distance;
    case ScoreMode::Combined:
        break;
    }
    return overlap_ratio * (1.0 - distance);
}

} // namespace

BoolMap
binarize(const AlphaMap &alpha, double tau) {
    require(tau > 0.0 && tau < 1.0, ErrorCode::Validation, "threshold must lie in (0, 1)");
    BoolMap out = BoolMap::filled(alpha.width, alpha.height, false);
    for (std::size_t p = 0; p < alpha.values.size(); ++p)
        out.values[p] = alpha.values[p] > tau ? 1 : 0;
    return out;
}

double
iou(const BoolMap &a, const BoolMap &b) {
    check_shape(a.width, a.height, b.width, b.height, "mask");
    std::size_t both = 0, either = 0;
    for (std::size_t p = 0; p < a.values.size(); ++p) {
        both += (a.values[p] && b.values[p]) ? 1 : 0;
        either += (a.values[p] || b.values[p]) ? 1 : 0;
    }
    return either == 0 ? 0.0 : double(both) / double(either);
}

FeatureMap
fill_mask_with_pseudo(const BoolMap &mask, const FeatureMap &pseudo) {
    check_shape(mask.width, mask.height, pseudo.width, pseudo.height, "mask");
    FeatureMap out = FeatureMap::zeros(mask.width, mask.height);
    for (std::size_t p = 0; p < mask.values.size(); ++p) {
        if (mask.values[p])
            out.values.row(Eigen::Index(p)) = pseudo.values.row(Eigen::Index(p));
    }
    return out;
}

double
feature_distance(const FeatureMap &instance_map, const BoolMap &support, const BoolMap &mask,
                 const FeatureMap &filled) {
    check_shape(support.width, support.height, mask.width, mask.height, "mask");
    check_shape(instance_map.width, instance_map.height, mask.width, mask.height, "feature map");
    check_shape(filled.width, filled.height, mask.width, mask.height, "feature map");
    std::size_t overlap = 0;
    double l1           = 0.0;
    for (std::size_t p = 0; p < mask.values.size(); ++p) {
        if (support.values[p] && mask.values[p]) {
            ++overlap;
            l1 += (instance_map.values.row(Eigen::Index(p)) - filled.values.row(Eigen::Index(p)))
                      .cwiseAbs()
                      .sum();
        }
    }
    return overlap == 0 ? 0.0 : std::clamp(l1 / double(overlap), 0.0, 1.0);
}

double
score(const FeatureMap &instance_map, const AlphaMap &instance_alpha, const BoolMap &mask,
      const FeatureMap &filled, double tau, ScoreMode mode) {
    check_shape(instance_alpha.width, instance_alpha.height, mask.width, mask.height, "alpha");
    check_shape(instance_map.width, instance_map.height, mask.width, mask.height, "feature map");
    check_shape(filled.width, filled.height, mask.width, mask.height, "feature map");
    const BoolMap support = binarize(instance_alpha, tau);
    const auto pixels     = support.true_pixels();
    return score_on_support(instance_map, pixels, pixels.size(), mask, mask.count(),
                            filled, mode);
}

AssociationResult
associate(const Scene &scene, const InstanceTable &partition, const FeatureMatrix &quantized,
          std::span<const AssociationView> views, const FeatureMatrix &pseudo,
          const AssociationOptions &options) {
    require(std::size_t(quantized.rows()) == scene.size() &&
                std::size_t(pseudo.rows()) == scene.size(),
            ErrorCode::Validation, "feature rows do not match the scene");
    require(options.tau > 0.0 && options.tau < 1.0, ErrorCode::Validation,
            "threshold must lie in (0, 1)");
    partition.validate(scene.size());

    AssociationResult result;
    result.table = partition;
    const std::size_t count = partition.size();
    std::vector<Eigen::VectorXd> sums(count);
    std::vector<double> weights(count, 0.0);
    for (Instance &inst : result.table.instances()) {
        inst.embedding.reset();
        inst.audit.clear();
    }

    for (std::size_t v = 0; v < views.size(); ++v) {
        const AssociationView &view = views[v];
        validate(view.camera);
        std::vector<std::size_t> usable;
        std::vector<std::size_t> mask_counts(view.masks.size(), 0);
        for (std::size_t j = 0; j < view.masks.size(); ++j) {
            const InstanceMask &m = view.masks[j];
            check_shape(m.mask.width, m.mask.height, view.camera.width, view.camera.height,
                        "mask");
            if (!m.embedding) {
                ++result.skipped_masks;
                result.warnings.push_back("view " + std::to_string(v) + " mask " +
                                          std::to_string(j) + " has no embedding; skipped");
                continue;
            }
            mask_counts[j] = m.mask.count();
            usable.push_back(j);
        }
        if (usable.empty())
            continue;

        const FeatureMap pseudo_map = render_feature_map(scene, view.camera, pseudo);
        for (std::size_t i = 0; i < count; ++i) {
            const Instance &inst = partition.instances()[i];
            const SingleInstanceRender single =
                render_single_instance(scene, view.camera, partition, inst.id, quantized);
            const BoolMap support = binarize(single.alpha, options.tau);
            const auto pixels     = support.true_pixels();
            if (pixels.empty())
                continue;

            double best       = 0.0;
            std::size_t which = 0;
            bool found        = false;
            for (std::size_t j : usable) {
                const double s =
                    score_on_support(single.features, pixels, pixels.size(),
                                     view.masks[j].mask, mask_counts[j], pseudo_map, options.mode);
                if (!found || s > best) {
                    best  = s;
                    which = j;
                    found = true;
                }
            }
            if (!found || !(best > options.min_score))
                continue;

            const Eigen::VectorXd &embedding = *view.masks[which].embedding;
            if (sums[i].size() == 0)
                sums[i] = Eigen::VectorXd::Zero(embedding.size());
            require(sums[i].size() == embedding.size(), ErrorCode::Validation,
                    "mask embeddings differ in dimension");
            sums[i] += best * embedding;
            weights[i] += best;
            result.table.instances()[i].audit.push_back(
                {std::uint32_t(v), std::uint32_t(which), best});
        }
    }

    for (std::size_t i = 0; i < count; ++i) {
        if (weights[i] <= 0.0)
            continue;
        const double norm = sums[i].norm();
        if (norm > 0.0)
            result.table.instances()[i].embedding = sums[i] / norm;
    }
    return result;
}

AssociationResult
associate(const Scene &scene, const TwoLevelCodebook &codebook,
          std::span<const AssociationView> views, const FeatureMatrix &pseudo,
          const AssociationOptions &options) {
    require(codebook.point_count() == scene.size(), ErrorCode::Validation,
            "codebook does not match the scene");
    return associate(scene, codebook.instance_table(), codebook.quantized(), views, pseudo,
                     options);
}

} // namespace instsplat
