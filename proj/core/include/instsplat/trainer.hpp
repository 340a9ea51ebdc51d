// Copyright Contributors to the instsplat project
// SPDX-License-Identifier: Apache-2.0
//
#pragma once

#include <instsplat/codebook.hpp>
#include <instsplat/image.hpp>
#include <instsplat/render.hpp>
#include <instsplat/scene.hpp>

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

namespace instsplat {

struct TrainConfig {
    std::size_t stage1_iters = 2000;
    std::size_t stage2_iters = 4000;
    double learning_rate     = 2.5e-3;
    double intra_weight      = 1.0;
    double inter_weight      = 1.0;
    std::size_t coarse_size  = 64;
    std::size_t fine_size    = 10;
    bool use_positions       = true;
    double position_weight   = 1.0;
    Seeding seeding          = Seeding::KMeansPlusPlus;
    std::uint64_t seed       = 0;
    std::size_t views_per_iteration = 1;
    /// Standard deviation of the random initial features. Points that no view
    /// reaches keep these values, so small values keep them neutral.
    double init_scale = 0.01;
    /// Re-assign and re-average the codebook after every stage-2 step. When
    /// false the codebook from the initial clustering stays frozen.
    bool refresh_codebook_each_step = true;
    /// Emit a progress record every this many iterations (0 disables).
    std::size_t log_every = 100;

    void validate() const;
};

/// One supervision view: its camera and the boolean masks seen from it.
struct TrainingView {
    Camera camera;
    std::vector<BoolMap> masks;
};

struct IterationLog {
    int stage = 1;
    std::size_t iter = 0;
    double intra = 0.0;   ///< L_s
    double inter = 0.0;   ///< L_c
    double pseudo = 0.0;  ///< L_p
};

using ProgressFn = std::function<void(const IterationLog &)>;

/// First-moment/second-moment adaptive step (beta1 0.9, beta2 0.999).
class Adam {
public:
    Adam(Eigen::Index rows, double learning_rate, double beta1 = 0.9, double beta2 = 0.999,
         double epsilon = 1e-8);

    void step(FeatureMatrix &params, const FeatureMatrix &grad);
    std::size_t steps() const { return mStep; }

private:
    double mLearningRate, mBeta1, mBeta2, mEpsilon;
    FeatureMatrix mFirst, mSecond;
    std::size_t mStep = 0;
};

/// Deterministic view order: a fresh seeded permutation per epoch.
class ViewSampler {
public:
    ViewSampler(std::size_t view_count, std::uint64_t seed);
    std::size_t next();

private:
    std::vector<std::size_t> mOrder;
    std::size_t mCursor = 0;
    std::uint64_t mState;
};

struct Stage1Result {
    FeatureMatrix features;
    std::vector<double> loss_history; ///< weighted total per iteration
};

/// Learns continuous instance features from view-level masks. Geometry is
/// read-only.
Stage1Result train_stage1(const Scene &scene, std::span<const TrainingView> views,
                          const TrainConfig &config, const ProgressFn &progress = {});

struct Stage2Result {
    TwoLevelCodebook codebook;
    FeatureMatrix features;   ///< continuous features after training
    FeatureMatrix quantized;  ///< fine entry of every point
    std::vector<double> loss_history;
};

/// Clones `pseudo` as frozen targets and trains quantized features through
/// the two-level codebook with the straight-through rule.
Stage2Result train_stage2(const Scene &scene, const FeatureMatrix &pseudo,
                          std::span<const TrainingView> views, const TrainConfig &config,
                          const ProgressFn &progress = {});

TwoLevelOptions two_level_options(const TrainConfig &config);

} // namespace instsplat
