// Copyright Contributors to the instsplat project
// SPDX-License-Identifier: Apache-2.0
//
#include <instsplat/error.hpp>
#include <instsplat/render.hpp>
#include <instsplat/synthetic.hpp>

#include <gtest/gtest.h>

#include <algorithm>

using namespace instsplat;

namespace {

SyntheticSceneSpec
small_spec(std::size_t instances, std::size_t cameras) {
    SyntheticSceneSpec s;
    s.instance_count      = instances;
    s.points_per_instance = 80;
    s.camera_count        = cameras;
    s.image_width         = 48;
    s.image_height        = 48;
    s.seed                = 21;
    return s;
}

} // namespace

TEST(Synthetic, SameSeedSameScene) {
    const SyntheticSceneSpec spec = small_spec(3, 2);
    const SyntheticScene a        = generate_synthetic(spec);
    const SyntheticScene b        = generate_synthetic(spec);
    EXPECT_TRUE(a.scene.bitwise_equal(b.scene));
    ASSERT_EQ(a.masks.size(), b.masks.size());
    for (std::size_t v = 0; v < a.masks.size(); ++v)
        for (std::size_t m = 0; m < a.masks[v].masks.size(); ++m)
            EXPECT_EQ(a.masks[v].masks[m].mask.values, b.masks[v].masks[m].mask.values);

    SyntheticSceneSpec other = spec;
    other.seed               = 22;
    EXPECT_FALSE(generate_synthetic(other).scene.bitwise_equal(a.scene));
}

TEST(Synthetic, ModalMasksAreDisjointAndLabelled) {
    const SyntheticScene s = generate_synthetic(small_spec(2, 1));
    ASSERT_EQ(s.masks.size(), 1u);
    ASSERT_EQ(s.masks[0].masks.size(), 2u);
    EXPECT_EQ(s.mask_instance[0], (std::vector<int>{0, 1}));
    const BoolMap &a = s.masks[0].masks[0].mask;
    const BoolMap &b = s.masks[0].masks[1].mask;
    for (std::size_t p = 0; p < a.values.size(); ++p)
        EXPECT_FALSE(a.values[p] && b.values[p]);
    for (std::size_t m = 0; m < 2; ++m) {
        ASSERT_TRUE(s.masks[0].masks[m].embedding);
        EXPECT_LT((*s.masks[0].masks[m].embedding - s.class_embeddings[m].vector).norm(), 1e-15);
    }
    EXPECT_EQ(s.point_instance.size(), 160u);
    EXPECT_EQ(s.point_class, s.point_instance);
}

TEST(Synthetic, EveryGridObjectIsSeen) {
    SyntheticSceneSpec spec = small_spec(8, 6);
    spec.image_width        = 64;
    spec.image_height       = 64;
    const SyntheticScene s  = generate_synthetic(spec);
    ASSERT_EQ(s.cameras.size(), 6u);
    for (int i = 0; i < 8; ++i) {
        std::size_t best = 0;
        for (std::size_t v = 0; v < 6; ++v)
            for (std::size_t m = 0; m < s.mask_instance[v].size(); ++m)
                if (s.mask_instance[v][m] == i)
                    best = std::max(best, s.masks[v].masks[m].mask.count());
        EXPECT_GE(best, 4u) << "instance " << i;
    }
    // Every camera sees the whole layout: all points project inside the image.
    for (const Camera &cam : s.cameras)
        for (const GaussianPoint &p : s.scene.points()) {
            const Vec3 c = cam.to_camera(p.position);
            ASSERT_GT(c.z(), 0.0);
            const double u = cam.fx * c.x() / c.z() + cam.cx;
            const double v = cam.fy * c.y() / c.z() + cam.cy;
            EXPECT_GE(u, 0.0);
            EXPECT_LT(u, cam.width);
            EXPECT_GE(v, 0.0);
            EXPECT_LT(v, cam.height);
        }
}

TEST(Synthetic, GroundTruthIsAmodal) {
    SyntheticSceneSpec spec = small_spec(2, 3);
    spec.occlusion          = true;
    const SyntheticScene s  = generate_synthetic(spec);
    // In view 0 the occluder hides part of instance 0: some of its amodal
    // pixels are handed to instance 1 in the supervision masks.
    const BoolMap &gt0 = s.gt_masks[0][0];
    const BoolMap &gt1 = s.gt_masks[0][1];
    std::size_t overlap = 0;
    for (std::size_t p = 0; p < gt0.values.size(); ++p)
        overlap += (gt0.values[p] && gt1.values[p]) ? 1 : 0;
    EXPECT_GT(overlap, 0u);
    const auto &owners = s.mask_instance[0];
    const auto at0     = std::find(owners.begin(), owners.end(), 0);
    const auto at1     = std::find(owners.begin(), owners.end(), 1);
    ASSERT_NE(at0, owners.end());
    ASSERT_NE(at1, owners.end());
    const BoolMap &modal0 = s.masks[0].masks[std::size_t(at0 - owners.begin())].mask;
    const BoolMap &modal1 = s.masks[0].masks[std::size_t(at1 - owners.begin())].mask;
    std::size_t inside = 0, stolen = 0;
    for (std::size_t p = 0; p < modal0.values.size(); ++p) {
        inside += (modal0.values[p] && gt0.values[p]) ? 1 : 0;
        stolen += (modal1.values[p] && gt0.values[p]) ? 1 : 0;
    }
    EXPECT_GE(double(inside), 0.9 * double(modal0.count()));
    EXPECT_GT(stolen, 0u);
    EXPECT_LT(modal0.count(), gt0.count());
}

TEST(Synthetic, RandomLayoutRespectsSeparation) {
    SyntheticSceneSpec spec = small_spec(5, 1);
    spec.layout             = Layout::Random;
    spec.min_separation     = 1.0;
    const SyntheticScene s  = generate_synthetic(spec);
    std::vector<Vec3> centroid(5, Vec3::Zero());
    for (std::size_t p = 0; p < s.scene.size(); ++p)
        centroid[std::size_t(s.point_instance[p])] += s.scene[p].position / 80.0;
    for (std::size_t a = 0; a < 5; ++a)
        for (std::size_t b = a + 1; b < 5; ++b)
            EXPECT_GT((centroid[a] - centroid[b]).norm(), 0.7);

    spec.instance_count = 40;
    spec.min_separation = 50.0;
    try {
        generate_synthetic(spec);
        FAIL() << "impossible layout accepted";
    } catch (const Error &e) {
        EXPECT_EQ(e.code(), ErrorCode::Generation);
    }
}

TEST(Synthetic, SpecValidation) {
    SyntheticSceneSpec spec = small_spec(1, 1);
    spec.occlusion          = true;
    EXPECT_THROW(generate_synthetic(spec), Error);
    spec           = small_spec(2, 0);
    EXPECT_THROW(generate_synthetic(spec), Error);
    spec           = small_spec(2, 1);
    spec.class_ids = {0};
    EXPECT_THROW(generate_synthetic(spec), Error);
}

TEST(OrthonormalEmbeddings, BasisProperties) {
    const auto e = orthonormal_embeddings(20, 4);
    for (std::size_t a = 0; a < e.size(); ++a) {
        EXPECT_EQ(e[a].vector.size(), kEmbeddingDim);
        EXPECT_EQ(e[a].label, "class_" + std::to_string(a));
        for (std::size_t b = 0; b < e.size(); ++b)
            EXPECT_NEAR(e[a].vector.dot(e[b].vector), a == b ? 1.0 : 0.0, 1e-12);
    }
    EXPECT_THROW(orthonormal_embeddings(513, 1), Error);
    EXPECT_EQ(orthonormal_embeddings(3, 4)[1].vector, orthonormal_embeddings(3, 4)[1].vector);
}
