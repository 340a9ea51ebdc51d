// Copyright Contributors to the instsplat project
// SPDX-License-Identifier: Apache-2.0
//
#include <instsplat/error.hpp>
#include <instsplat/losses.hpp>
#include <instsplat/trainer.hpp>

#include <cmath>
#include <random>

namespace instsplat {

namespace {

std::uint64_t
splitmix(std::uint64_t &state) {
    std::uint64_t z = (state += 0x9E3779B97F4A7C15ull);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
}

struct CachedView {
    BlendWeights weights;
    std::vector<BoolMap> masks; ///< non-empty masks only
};

std::vector<CachedView>
cache_views(const Scene &scene, std::span<const TrainingView> views) {
    require(!views.empty(), ErrorCode::Validation, "training needs at least one view");
    std::vector<CachedView> out;
    out.reserve(views.size());
    for (const TrainingView &v : views) {
        validate(v.camera);
        CachedView c;
        c.weights = compute_blend_weights(scene, v.camera);
        for (const BoolMap &m : v.masks) {
            require(m.width == v.camera.width && m.height == v.camera.height,
                    ErrorCode::Validation, "mask shape does not match its camera");
            if (m.count() > 0)
                c.masks.push_back(m);
        }
        out.push_back(std::move(c));
    }
    return out;
}

bool
should_log(const TrainConfig &config, std::size_t iter, std::size_t total) {
    return config.log_every > 0 && (iter % config.log_every == 0 || iter + 1 == total);
}

} // namespace

void
TrainConfig::validate() const {
    require(stage1_iters > 0 && stage2_iters > 0, ErrorCode::Validation,
            "iteration counts must be positive");
    require(learning_rate > 0.0 && std::isfinite(learning_rate), ErrorCode::Validation,
            "learning rate must be positive");
    require(intra_weight >= 0.0 && inter_weight >= 0.0, ErrorCode::Validation,
            "loss weights must be non-negative");
    require(coarse_size > 0 && fine_size > 0, ErrorCode::Validation,
            "codebook sizes must be positive");
    require(views_per_iteration > 0, ErrorCode::Validation,
            "views per iteration must be positive");
    require(init_scale >= 0.0 && position_weight >= 0.0, ErrorCode::Validation,
            "scales must be non-negative");
}

Adam::Adam(Eigen::Index rows, double learning_rate, double beta1, double beta2, double epsilon)
    : mLearningRate(learning_rate), mBeta1(beta1), mBeta2(beta2), mEpsilon(epsilon),
      mFirst(FeatureMatrix::Zero(rows, kFeatureDim)),
      mSecond(FeatureMatrix::Zero(rows, kFeatureDim)) {}

void
Adam::step(FeatureMatrix &params, const FeatureMatrix &grad) {
    require(params.rows() == mFirst.rows() && grad.rows() == mFirst.rows(),
            ErrorCode::Validation, "optimizer row count mismatch");
    ++mStep;
    mFirst  = mBeta1 * mFirst + (1.0 - mBeta1) * grad;
    mSecond = mBeta2 * mSecond + (1.0 - mBeta2) * grad.cwiseProduct(grad);
    const double c1 = 1.0 - std::pow(mBeta1, double(mStep));
    const double c2 = 1.0 - std::pow(mBeta2, double(mStep));
    params.array() -= mLearningRate * (mFirst.array() / c1) /
                      ((mSecond.array() / c2).sqrt() + mEpsilon);
}

ViewSampler::ViewSampler(std::size_t view_count, std::uint64_t seed)
    : mOrder(view_count), mCursor(view_count), mState(seed) {
    require(view_count > 0, ErrorCode::Validation, "no views to sample");
}

std::size_t
ViewSampler::next() {
    if (mCursor == mOrder.size()) {
        for (std::size_t i = 0; i < mOrder.size(); ++i)
            mOrder[i] = i;
        for (std::size_t i = mOrder.size() - 1; i > 0; --i)
            std::swap(mOrder[i], mOrder[splitmix(mState) % (i + 1)]);
        mCursor = 0;
    }
    return mOrder[mCursor++];
}

TwoLevelOptions
two_level_options(const TrainConfig &config) {
    TwoLevelOptions o;
    o.coarse_size     = config.coarse_size;
    o.fine_size       = config.fine_size;
    o.use_positions   = config.use_positions;
    o.position_weight = config.position_weight;
    o.seeding         = config.seeding;
    o.seed            = config.seed;
    return o;
}

Stage1Result
train_stage1(const Scene &scene, std::span<const TrainingView> views, const TrainConfig &config,
             const ProgressFn &progress) {
    config.validate();
    require(!scene.empty(), ErrorCode::Validation, "cannot train an empty scene");
    const auto cached = cache_views(scene, views);
    const auto n      = Eigen::Index(scene.size());

    Stage1Result out;
    out.features.resize(n, kFeatureDim);
    std::mt19937_64 rng(config.seed);
    std::normal_distribution<double> normal(0.0, config.init_scale);
    for (Eigen::Index i = 0; i < n; ++i) {
        for (int c = 0; c < kFeatureDim; ++c)
            out.features(i, c) = normal(rng);
    }

    Adam adam(n, config.learning_rate);
    ViewSampler sampler(cached.size(), config.seed ^ 0x5eedull);
    out.loss_history.reserve(config.stage1_iters);
    for (std::size_t iter = 0; iter < config.stage1_iters; ++iter) {
        FeatureMatrix grad = FeatureMatrix::Zero(n, kFeatureDim);
        IterationLog log{1, iter};
        for (std::size_t k = 0; k < config.views_per_iteration; ++k) {
            const CachedView &view = cached[sampler.next()];
            if (view.masks.empty())
                continue;
            const FeatureMap map = render_feature_map(view.weights, out.features);
            LossResult intra     = intra_mask_loss(map, view.masks);
            FeatureMap grad_map  = intra.grad;
            grad_map.values *= config.intra_weight;
            log.intra += intra.value;
            if (view.masks.size() >= 2) {
                LossResult inter = inter_mask_loss(map, view.masks);
                grad_map.values += config.inter_weight * inter.grad.values;
                log.inter += inter.value;
            }
            grad += backprop_features(grad_map, view.weights);
        }
        adam.step(out.features, grad);
        out.loss_history.push_back(config.intra_weight * log.intra +
                                   config.inter_weight * log.inter);
        if (progress && should_log(config, iter, config.stage1_iters))
            progress(log);
    }
    return out;
}

Stage2Result
train_stage2(const Scene &scene, const FeatureMatrix &pseudo, std::span<const TrainingView> views,
             const TrainConfig &config, const ProgressFn &progress) {
    config.validate();
    require(!scene.empty(), ErrorCode::Validation, "cannot train an empty scene");
    require(std::size_t(pseudo.rows()) == scene.size(), ErrorCode::Validation,
            "pseudo features do not match the scene");
    const auto cached = cache_views(scene, views);
    const auto n      = Eigen::Index(scene.size());

    const FeatureMatrix targets = pseudo;
    std::vector<FeatureMap> target_maps;
    target_maps.reserve(cached.size());
    for (const CachedView &v : cached)
        target_maps.push_back(render_feature_map(v.weights, targets));

    const PositionMatrix positions = scene.positions();
    Stage2Result out;
    out.features = targets;
    out.codebook = build_two_level(out.features, positions, two_level_options(config));

    Adam adam(n, config.learning_rate);
    ViewSampler sampler(cached.size(), config.seed ^ 0x5eedull);
    out.loss_history.reserve(config.stage2_iters);
    for (std::size_t iter = 0; iter < config.stage2_iters; ++iter) {
        const FeatureMatrix quantized = out.codebook.quantized();
        FeatureMatrix grad            = FeatureMatrix::Zero(n, kFeatureDim);
        IterationLog log{2, iter};
        for (std::size_t k = 0; k < config.views_per_iteration; ++k) {
            const std::size_t v   = sampler.next();
            const FeatureMap map  = render_feature_map(cached[v].weights, quantized);
            const LossResult loss = pseudo_loss(map, target_maps[v]);
            log.pseudo += loss.value;
            grad += backprop_features(loss.grad, cached[v].weights);
        }
        // Straight-through: every member receives the gradient of its entry.
        FeatureMatrix passthrough = straight_through_backward(out.codebook.entry_gradient(grad));
        adam.step(out.features, passthrough);
        if (config.refresh_codebook_each_step) {
            out.codebook.reassign(out.features, positions);
            out.codebook.update(out.features, positions);
        }
        out.loss_history.push_back(log.pseudo);
        if (progress && should_log(config, iter, config.stage2_iters))
            progress(log);
    }
    out.quantized = out.codebook.quantized();
    return out;
}

} // namespace instsplat
