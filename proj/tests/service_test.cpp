// Copyright Contributors to the instsplat project
// SPDX-License-Identifier: Apache-2.0
//
#include <instsplat/io.hpp>
#include <instsplat/render.hpp>
#include <instsplat/service.hpp>
#include <instsplat/synthetic.hpp>

#include <gtest/gtest.h>
#include <httplib.h>
#include <json.hpp>

#include <thread>

#include "test_support.hpp"

using namespace instsplat;
using json = nlohmann::json;

namespace {

struct Fixture {
    SyntheticScene synth;
    SceneBundle bundle;
};

// Three objects; the table groups points by true instance and embeds
// instances 0 and 1 with their class vectors.
Fixture
make_fixture(bool embed = true) {
    SyntheticSceneSpec spec;
    spec.instance_count      = 3;
    spec.points_per_instance = 60;
    spec.image_width         = 32;
    spec.image_height        = 32;
    spec.camera_count        = 6;
    spec.seed                = 5;
    Fixture f;
    f.synth = generate_synthetic(spec);
    std::vector<std::uint32_t> coarse, fine;
    for (int i : f.synth.point_instance) {
        coarse.push_back(std::uint32_t(i));
        fine.push_back(0);
    }
    InstanceTable table = InstanceTable::from_assignments(coarse, fine);
    if (embed)
        for (int i = 0; i < 2; ++i)
            table.instances()[std::size_t(i)].embedding =
                f.synth.class_embeddings[std::size_t(i)].vector;
    f.bundle.scene     = f.synth.scene;
    f.bundle.cameras   = f.synth.cameras;
    f.bundle.instances = table;
    return f;
}

json
body_of(const Response &r) {
    return json::parse(r.body);
}

// Pixel of the ground-truth mask closest to its centroid.
std::pair<int, int>
centre_pixel(const BoolMap &m) {
    double sx = 0, sy = 0;
    std::size_t n = 0;
    for (int y = 0; y < m.height; ++y)
        for (int x = 0; x < m.width; ++x)
            if (m.values[std::size_t(y * m.width + x)]) {
                sx += x;
                sy += y;
                ++n;
            }
    sx /= double(n);
    sy /= double(n);
    std::pair<int, int> best{-1, -1};
    double bd = 1e30;
    for (int y = 0; y < m.height; ++y)
        for (int x = 0; x < m.width; ++x)
            if (m.values[std::size_t(y * m.width + x)]) {
                const double d = (x - sx) * (x - sx) + (y - sy) * (y - sy);
                if (d < bd) {
                    bd   = d;
                    best = {x, y};
                }
            }
    return best;
}

} // namespace

TEST(Service, ViewsListAndAdd) {
    Fixture f = make_fixture();
    Service s(f.bundle);
    const json v = body_of(s.get_views());
    ASSERT_EQ(v["views"].size(), 6u);
    EXPECT_EQ(v["views"][0]["width"], 32);

    const json pose = {{"eye", {0, -5, 2}}, {"target", {0, 0, 0}}, {"up", {0, 0, 1}},
                       {"fov_degrees", 50}, {"width", 40}, {"height", 30}};
    const Response added = s.post_views(pose.dump());
    EXPECT_EQ(added.status, 201);
    EXPECT_EQ(body_of(added)["id"], 6);
    EXPECT_EQ(body_of(s.get_views())["views"].size(), 7u);

    json bad = pose;
    bad["width"] = 0;
    EXPECT_EQ(s.post_views(bad.dump()).status, 422);
    EXPECT_EQ(s.post_views("{not json").status, 400);
}

TEST(Service, RenderSizesAndErrors) {
    Fixture f = make_fixture();
    Service s(f.bundle);
    const Response r = s.post_render(R"({"view_id": 0})");
    ASSERT_EQ(r.status, 200);
    EXPECT_EQ(r.content_type, "image/png");
    const Image8 img = decode_png(r.body);
    EXPECT_EQ(img.width, 32);
    EXPECT_EQ(img.channels, 3);
    // Matches a direct render.
    EXPECT_EQ(img.pixels, to_image8(render_color(f.synth.scene, f.synth.cameras[0])).pixels);

    const Image8 big = decode_png(s.post_render(R"({"view_id": 1, "width": 64, "height": 48})").body);
    EXPECT_EQ(big.width, 64);
    EXPECT_EQ(big.height, 48);

    const json pose = {{"pose",
                        {{"eye", {4, 0, 1}}, {"target", {0, 0, 0}}, {"up", {0, 0, 1}},
                         {"fov_degrees", 60}}},
                       {"width", 20},
                       {"height", 10}};
    EXPECT_EQ(decode_png(s.post_render(pose.dump()).body).width, 20);

    EXPECT_EQ(s.post_render(R"({"view_id": 9})").status, 404);
    EXPECT_EQ(s.post_render(R"({"view_id": 0, "width": 2048, "height": 2048})").status, 422);
    EXPECT_EQ(s.post_render(R"({})").status, 422);
    EXPECT_EQ(s.post_render(R"({"view_id": 0, "overlay": "7:0"})").status, 404);
    const json err = body_of(s.post_render(R"({"view_id": 9})"));
    EXPECT_TRUE(err["error"].contains("code"));
    EXPECT_TRUE(err["error"].contains("message"));
}

TEST(Service, OverlayTintsOnlyTheInstance) {
    Fixture f = make_fixture();
    Service s(f.bundle);
    const Image8 plain = decode_png(s.post_render(R"({"view_id": 0})").body);
    const Image8 lit   = decode_png(s.post_render(R"({"view_id": 0, "overlay": "1:0"})").body);
    const Instance &inst = f.bundle.instances->at(InstanceId{1, 0});
    const AlphaMap alpha =
        compute_blend_weights(f.synth.scene, f.synth.cameras[0], inst.members).alpha_map();
    std::size_t tinted = 0;
    for (std::size_t p = 0; p < alpha.values.size(); ++p) {
        const bool differs = plain.pixels[3 * p] != lit.pixels[3 * p] ||
                             plain.pixels[3 * p + 1] != lit.pixels[3 * p + 1] ||
                             plain.pixels[3 * p + 2] != lit.pixels[3 * p + 2];
        if (alpha.values[p] <= 0.5)
            EXPECT_FALSE(differs) << p;
        tinted += alpha.values[p] > 0.5 ? 1 : 0;
    }
    EXPECT_GT(tinted, 0u);
}

TEST(Service, ClickObjectAndBackground) {
    Fixture f = make_fixture();
    Service s(f.bundle);
    for (int i = 0; i < 3; ++i) {
        const auto [x, y] = centre_pixel(f.synth.gt_masks[0][std::size_t(i)]);
        ASSERT_GE(x, 0);
        const json req = {{"view_id", 0}, {"u", x}, {"v", y}};
        const json hit = body_of(s.post_click(req.dump()));
        // The occluding object may win, but only if it also covers the pixel.
        const std::string id = hit["instance_id"].get<std::string>();
        const int owner      = std::stoi(id.substr(0, id.find(':')));
        EXPECT_TRUE(owner == i || f.synth.gt_masks[0][std::size_t(owner)].values[std::size_t(y * 32 + x)])
            << "instance " << i;
        EXPECT_EQ(hit["member_count"], 60);
        EXPECT_EQ(s.post_click(req.dump()).body, s.post_click(req.dump()).body);
    }
    const json miss = body_of(s.post_click(R"({"view_id": 0, "u": 0, "v": 0})"));
    EXPECT_TRUE(miss["instance_id"].is_null());
    EXPECT_EQ(s.post_click(R"({"view_id": 0, "u": 32, "v": 0})").status, 422);
    EXPECT_EQ(s.post_click(R"({"view_id": 6, "u": 0, "v": 0})").status, 404);
}

TEST(Service, QueryRanksAndValidates) {
    Fixture f = make_fixture();
    Service s(f.bundle, f.synth.class_embeddings);
    json req = {{"class_name", "class_1"}};
    json out = body_of(s.post_query(req.dump()));
    ASSERT_EQ(out["instances"].size(), 1u);
    EXPECT_EQ(out["instances"][0]["id"], "1:0");
    EXPECT_EQ(out["point_count"], 60);

    json emb = json::array();
    for (int i = 0; i < kEmbeddingDim; ++i)
        emb.push_back(f.synth.class_embeddings[0].vector[i]);
    out = body_of(s.post_query(json{{"embedding", emb}, {"mode", "threshold"}, {"threshold", -1.0}}.dump()));
    ASSERT_EQ(out["instances"].size(), 2u);
    EXPECT_EQ(out["instances"][0]["id"], "0:0");
    EXPECT_GE(out["instances"][0]["cosine"].get<double>(), out["instances"][1]["cosine"].get<double>());

    json shortv = json::array({1.0, 0.0});
    EXPECT_EQ(s.post_query(json{{"embedding", shortv}}.dump()).status, 422);
    EXPECT_EQ(s.post_query(R"({"class_name": "nope"})").status, 404);
    EXPECT_EQ(s.post_query(R"({"class_name": "class_0", "mode": "all"})").status, 422);

    Fixture bare = make_fixture(false);
    Service plain(bare.bundle, bare.synth.class_embeddings);
    EXPECT_EQ(plain.post_query(R"({"class_name": "class_0"})").status, 409);
}

TEST(Service, RemoveUndoRestoresFrame) {
    Fixture f = make_fixture();
    Service s(f.bundle);
    const std::string before = s.post_render(R"({"view_id": 0})").body;
    const json r = body_of(s.post_edit(R"({"op": "remove", "instance_id": "2:0"})"));
    EXPECT_EQ(r["point_count"], 120);
    EXPECT_EQ(r["instance_count"], 2);
    EXPECT_EQ(r["undo_depth"], 1);

    // The removed object no longer renders: its exclusive pixels turn black.
    const Image8 after = decode_png(s.post_render(R"({"view_id": 0})").body);
    EXPECT_NE(s.post_render(R"({"view_id": 0})").body, before);
    const BoolMap &gt2 = f.synth.gt_masks[0][2];
    for (std::size_t p = 0; p < gt2.values.size(); ++p)
        if (gt2.values[p] && !f.synth.gt_masks[0][0].values[p] && !f.synth.gt_masks[0][1].values[p]) {
            const AlphaMap rest =
                compute_blend_weights(s.snapshot()->scene, f.synth.cameras[0]).alpha_map();
            EXPECT_LT(rest.values[p], 0.5);
            break;
        }
    EXPECT_EQ(s.post_click(json{{"view_id", 0}, {"u", centre_pixel(gt2).first},
                                {"v", centre_pixel(gt2).second}}.dump())
                  .status,
              200);
    (void)after;

    EXPECT_EQ(s.post_undo().status, 200);
    EXPECT_EQ(s.post_render(R"({"view_id": 0})").body, before);
    EXPECT_TRUE(s.snapshot()->scene.bitwise_equal(f.synth.scene));
    EXPECT_EQ(s.post_undo().status, 409);
    EXPECT_EQ(s.post_edit(R"({"op": "remove", "instance_id": "9:0"})").status, 404);
    EXPECT_EQ(s.post_edit(R"({"op": "explode"})").status, 422);
    EXPECT_EQ(s.undo_depth(), 0u);
}

TEST(Service, RecolorAndInsert) {
    Fixture f = make_fixture();
    Service s(f.bundle);
    ASSERT_EQ(s.post_edit(R"({"op": "recolor", "instance_id": "0:0", "color": [1, 0, 0]})").status,
              200);
    for (std::uint32_t m : s.snapshot()->table.at(InstanceId{0, 0}).members)
        EXPECT_EQ(s.snapshot()->scene[m].color, Vec3(1, 0, 0));

    const json ins = body_of(s.post_edit(R"({"op": "insert", "source": "1:0", "offset": [0, 0, 1]})"));
    EXPECT_EQ(ins["point_count"], 240);
    EXPECT_EQ(ins["instance_count"], 4);
    const Instance &copy = s.snapshot()->table.at(InstanceId{3, 0});
    EXPECT_EQ(copy.members.size(), 60u);

    const json pt = {{"op", "insert"},
                     {"instance_id", "5:2"},
                     {"points",
                      {{{"position", {0, 0, 3}}, {"scale", {0.1, 0.1, 0.1}}, {"opacity", 0.8},
                        {"color", {0, 1, 0}}}}}};
    EXPECT_EQ(body_of(s.post_edit(pt.dump()))["point_count"], 241);
    EXPECT_EQ(s.post_edit(pt.dump()).status, 409);
    json badpt = pt;
    badpt["instance_id"]               = "6:0";
    badpt["points"][0]["opacity"]      = 1.5;
    EXPECT_EQ(s.post_edit(badpt.dump()).status, 422);
    EXPECT_EQ(s.undo_depth(), 3u);
}

TEST(Service, UndoStackIsBounded) {
    Fixture f = make_fixture();
    Service s(f.bundle);
    for (int k = 0; k < 17; ++k)
        ASSERT_EQ(s.post_edit(json{{"op", "recolor"}, {"instance_id", "0:0"},
                                   {"color", {k / 17.0, 0, 0}}}
                                  .dump())
                      .status,
                  200);
    EXPECT_EQ(s.undo_depth(), kUndoDepth);
    for (std::size_t k = 0; k < kUndoDepth; ++k)
        EXPECT_EQ(s.post_undo().status, 200);
    EXPECT_EQ(s.post_undo().status, 409);
    // The oldest state fell off: the first recolor survives.
    const std::uint32_t m = s.snapshot()->table.at(InstanceId{0, 0}).members[0];
    EXPECT_EQ(s.snapshot()->scene[m].color, Vec3(0, 0, 0));
}

TEST(Service, SaveWritesLoadableBundle) {
    Fixture f      = make_fixture();
    Service s(f.bundle);
    const auto dir = fixtures::scratch_dir("service_save");
    const auto out = (dir / "saved.bundle").string();
    ASSERT_EQ(s.post_save(json{{"path", out}}.dump()).status, 200);
    const SceneBundle back = load_bundle(out);
    EXPECT_EQ(back.scene.size(), 180u);
    ASSERT_TRUE(back.instances);
    EXPECT_EQ(back.instances->embedded_count(), 2u);
    const json scene = body_of(s.get_scene());
    EXPECT_EQ(scene["point_count"], 180);
    EXPECT_EQ(scene["instances"].size(), 3u);
}

TEST(Service, ConcurrentReadsDuringEdits) {
    Fixture f = make_fixture();
    Service s(f.bundle);
    std::atomic<bool> stop{false};
    std::atomic<int> bad{0};
    std::thread reader([&] {
        while (!stop) {
            const Response r = s.post_render(R"({"view_id": 2})");
            if (r.status != 200)
                ++bad;
        }
    });
    for (int k = 0; k < 10; ++k) {
        s.post_edit(R"({"op": "remove", "instance_id": "2:0"})");
        s.post_undo();
    }
    stop = true;
    reader.join();
    EXPECT_EQ(bad.load(), 0);
    EXPECT_TRUE(s.snapshot()->scene.bitwise_equal(f.synth.scene));
}

TEST(Service, HttpRoundTrip) {
    Fixture f = make_fixture();
    Service s(f.bundle, f.synth.class_embeddings);
    httplib::Server server;
    s.mount(server);
    const int port = server.bind_to_any_port("127.0.0.1");
    ASSERT_GT(port, 0);
    std::thread worker([&] { server.listen_after_bind(); });
    server.wait_until_ready();

    httplib::Client client("127.0.0.1", port);
    auto views = client.Get("/views");
    ASSERT_TRUE(views);
    EXPECT_EQ(views->status, 200);
    EXPECT_EQ(json::parse(views->body)["views"].size(), 6u);

    auto png = client.Post("/render", R"({"view_id": 0})", "application/json");
    ASSERT_TRUE(png);
    EXPECT_EQ(png->status, 200);
    EXPECT_EQ(png->get_header_value("Content-Type"), "image/png");
    EXPECT_EQ(decode_png(png->body).width, 32);

    auto q = client.Post("/query", R"({"class_name": "class_0"})", "application/json");
    ASSERT_TRUE(q);
    EXPECT_EQ(json::parse(q->body)["instances"][0]["id"], "0:0");

    auto missing = client.Post("/undo", "", "application/json");
    ASSERT_TRUE(missing);
    EXPECT_EQ(missing->status, 409);

    server.stop();
    worker.join();
}
