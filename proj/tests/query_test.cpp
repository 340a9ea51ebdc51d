// Copyright Contributors to the instsplat project
// SPDX-License-Identifier: Apache-2.0
//
#include <instsplat/error.hpp>
#include <instsplat/query.hpp>
#include <instsplat/render.hpp>
#include <instsplat/synthetic.hpp>

#include <gtest/gtest.h>

#include "test_support.hpp"

using namespace instsplat;

namespace {

// Instances 0:0, 1:0, 2:0 over 9 points; 2:0 has no embedding.
InstanceTable
embedded_table(const std::vector<Embedding> &basis) {
    const std::vector<std::uint32_t> coarse{0, 0, 1, 1, 1, 2, 2, 0, 1};
    const std::vector<std::uint32_t> fine(9, 0);
    InstanceTable t = InstanceTable::from_assignments(coarse, fine);
    t.instances()[0].embedding = basis[0].vector;
    t.instances()[1].embedding = basis[1].vector;
    return t;
}

GaussianPoint
blob(const Vec3 &at, double scale, double opacity) {
    GaussianPoint p;
    p.position = at;
    p.scale    = Vec3::Constant(scale);
    p.opacity  = opacity;
    return p;
}

} // namespace

TEST(TextSelect, ExactEmbeddingPicksThatInstance) {
    const auto basis      = orthonormal_embeddings(3, 1);
    const InstanceTable t = embedded_table(basis);
    EXPECT_EQ(text_select(t, basis[1].vector), (std::vector<std::uint32_t>{2, 3, 4, 8}));
    EXPECT_EQ(text_select(t, basis[0].vector), (std::vector<std::uint32_t>{0, 1, 7}));

    SelectOptions all{SelectMode::Threshold, -1.0};
    EXPECT_EQ(text_select(t, basis[2].vector, all),
              (std::vector<std::uint32_t>{0, 1, 2, 3, 4, 7, 8}));
    SelectOptions strict{SelectMode::Threshold, 0.5};
    EXPECT_TRUE(text_select(t, basis[2].vector, strict).empty());
}

TEST(TextSelect, InvariantToQueryScale) {
    const auto basis      = orthonormal_embeddings(3, 2);
    const InstanceTable t = embedded_table(basis);
    std::mt19937_64 rng(3);
    std::normal_distribution<double> g(0.0, 1.0);
    for (int trial = 0; trial < 20; ++trial) {
        Eigen::VectorXd q(kEmbeddingDim);
        for (Eigen::Index i = 0; i < q.size(); ++i)
            q[i] = g(rng);
        EXPECT_EQ(text_select(t, q), text_select(t, 7.5 * q));
        const auto ranked = rank_instances(t, q);
        for (std::size_t k = 1; k < ranked.size(); ++k)
            EXPECT_GE(ranked[k - 1].cosine, ranked[k].cosine);
    }
    EXPECT_THROW(rank_instances(t, Eigen::VectorXd::Zero(kEmbeddingDim)), Error);
}

TEST(TextSelect, NoEmbeddedInstancesGivesEmptyResult) {
    const std::vector<std::uint32_t> coarse{0, 1}, fine{0, 0};
    const InstanceTable t = InstanceTable::from_assignments(coarse, fine);
    EXPECT_TRUE(text_select(t, orthonormal_embeddings(1, 1)[0].vector).empty());
}

TEST(ClassifyPoints, ArgmaxClassPerInstance) {
    const auto basis      = orthonormal_embeddings(3, 4);
    const InstanceTable t = embedded_table(basis);
    const std::vector<Embedding> classes{basis[1], basis[0]};
    const auto labels = classify_points(t, classes, 9);
    EXPECT_EQ(labels, (std::vector<int>{1, 1, 0, 0, 0, kUnassigned, kUnassigned, 1, 0}));

    // Duplicated classes resolve to the lowest index.
    const std::vector<Embedding> dup{basis[0], basis[0], basis[1]};
    EXPECT_EQ(classify_points(t, dup, 9),
              (std::vector<int>{0, 0, 2, 2, 2, kUnassigned, kUnassigned, 0, 2}));

    const std::vector<Embedding> one{basis[2]};
    for (int l : classify_points(t, one, 9))
        EXPECT_TRUE(l == 0 || l == kUnassigned);
    EXPECT_THROW(classify_points(t, {}, 9), Error);
}

TEST(ClickSelect, LargestSingleInstanceAlpha) {
    const Camera cam = fixtures::front_camera(16, 16);
    // Instance 0 is a dense blob in front; instance 1 is fainter behind it and
    // also reaches the right edge.
    const Scene scene({blob(Vec3(0, 0, -2), 0.15, 0.9), blob(Vec3(0, 0, 0), 0.4, 0.6),
                       blob(Vec3(1.2, 0, 0), 0.2, 0.9)});
    const std::vector<std::uint32_t> coarse{0, 1, 1}, fine{0, 0, 0};
    const InstanceTable t = InstanceTable::from_assignments(coarse, fine);
    const auto centre     = click_select(scene, t, cam, 8, 8);
    ASSERT_TRUE(centre);
    EXPECT_EQ(*centre, (InstanceId{0, 0}));
    EXPECT_FALSE(click_select(scene, t, cam, 0, 0));
    EXPECT_THROW(click_select(scene, t, cam, 16, 0), Error);
    EXPECT_EQ(click_select(scene, t, cam, 8, 8), centre);

    // Oracle: per-instance alpha maps rendered in isolation.
    const AlphaMap a0 = render_single_instance(scene, cam, t, InstanceId{0, 0}).alpha;
    const AlphaMap a1 = render_single_instance(scene, cam, t, InstanceId{1, 0}).alpha;
    int hits = 0;
    for (int y = 0; y < 16; ++y)
        for (int x = 0; x < 16; ++x) {
            const std::size_t p = std::size_t(y) * 16 + std::size_t(x);
            const double best   = std::max(a0.values[p], a1.values[p]);
            const auto hit      = click_select(scene, t, cam, x, y);
            if (best <= kClickThreshold) {
                EXPECT_FALSE(hit) << x << "," << y;
                continue;
            }
            ASSERT_TRUE(hit) << x << "," << y;
            ++hits;
            const InstanceId want =
                a1.values[p] > a0.values[p] ? InstanceId{1, 0} : InstanceId{0, 0};
            EXPECT_EQ(*hit, want) << x << "," << y;
        }
    EXPECT_GT(hits, 4);
}

TEST(Eval2d, RenderedSelectionAgainstMasks) {
    SyntheticSceneSpec spec;
    spec.instance_count      = 3;
    spec.points_per_instance = 60;
    spec.image_width         = 32;
    spec.image_height        = 32;
    spec.camera_count        = 2;
    const SyntheticScene s   = generate_synthetic(spec);

    std::vector<SelectionCase> cases;
    for (int inst = 0; inst < 3; ++inst) {
        SelectionCase c;
        for (std::size_t p = 0; p < s.scene.size(); ++p)
            if (s.point_instance[p] == inst)
                c.selected.push_back(std::uint32_t(p));
        for (std::size_t v = 0; v < 2; ++v)
            c.gt_masks.push_back(s.gt_masks[v][std::size_t(inst)]);
        cases.push_back(std::move(c));
    }
    // Empty selection against a real object.
    SelectionCase empty{{}, cases[0].gt_masks};
    cases.push_back(empty);

    const EvalReport r = eval_2d(s.scene, s.cameras, cases);
    ASSERT_EQ(r.per_class_iou.size(), 4u);
    for (int k = 0; k < 3; ++k) {
        EXPECT_EQ(r.per_class_iou[std::size_t(k)], 1.0);
        EXPECT_EQ(r.per_class_acc[std::size_t(k)], 1.0);
    }
    EXPECT_EQ(r.per_class_iou[3], 0.0);
    EXPECT_EQ(r.per_class_acc[3], 0.0);
    EXPECT_DOUBLE_EQ(r.miou, 0.75);
    EXPECT_DOUBLE_EQ(r.macc, 0.75);
}

TEST(Eval3d, HandBuiltConfusion) {
    // gt:   0 0 0 0 1 1 1 2 2 2
    // pred: 0 0 1 U 1 1 0 2 2 1
    const std::vector<int> gt{0, 0, 0, 0, 1, 1, 1, 2, 2, 2};
    const std::vector<int> pred{0, 0, 1, kUnassigned, 1, 1, 0, 2, 2, 1};
    const EvalReport r = eval_3d(pred, gt);
    ASSERT_EQ(r.classes, (std::vector<int>{0, 1, 2}));
    // class 0: tp 2, fp 1 (gt1->0), fn 2 (->1, ->U)  => 2/5
    // class 1: tp 2, fp 2 (gt0->1, gt2->1), fn 1      => 2/5
    // class 2: tp 2, fp 0, fn 1                        => 2/3
    EXPECT_DOUBLE_EQ(r.per_class_iou[0], 2.0 / 5.0);
    EXPECT_DOUBLE_EQ(r.per_class_iou[1], 2.0 / 5.0);
    EXPECT_DOUBLE_EQ(r.per_class_iou[2], 2.0 / 3.0);
    // Accuracy leaves the unassigned point out: class 0 is 2 of 3.
    EXPECT_DOUBLE_EQ(r.per_class_acc[0], 2.0 / 3.0);
    EXPECT_DOUBLE_EQ(r.per_class_acc[1], 2.0 / 3.0);
    EXPECT_DOUBLE_EQ(r.per_class_acc[2], 2.0 / 3.0);
    EXPECT_DOUBLE_EQ(r.miou, (0.4 + 0.4 + 2.0 / 3.0) / 3.0);
    EXPECT_EQ(r.confusion[0], (std::vector<std::size_t>{2, 1, 0, 0, 1}));
    EXPECT_EQ(r.confusion[1], (std::vector<std::size_t>{1, 2, 0, 0, 0}));
    EXPECT_EQ(r.confusion[2], (std::vector<std::size_t>{0, 1, 2, 0, 0}));
}

TEST(Eval3d, IdentityAndAllWrong) {
    std::mt19937_64 rng(5);
    std::uniform_int_distribution<int> label(0, 4);
    std::vector<int> p(100);
    for (int &v : p)
        v = label(rng);
    const EvalReport same = eval_3d(p, p);
    EXPECT_EQ(same.miou, 1.0);
    EXPECT_EQ(same.macc, 1.0);

    const std::vector<int> gt(10, 3), wrong(10, 1);
    EXPECT_EQ(eval_3d(wrong, gt).miou, 0.0);
    EXPECT_EQ(eval_3d(wrong, gt).macc, 0.0);

    const std::vector<int> shorter(9, 3);
    EXPECT_THROW(eval_3d(shorter, gt), Error);

    // Negative ground truth is ignored entirely.
    const std::vector<int> g2{-1, 0, 0}, p2{0, 0, 0};
    EXPECT_EQ(eval_3d(p2, g2).miou, 1.0);
}
