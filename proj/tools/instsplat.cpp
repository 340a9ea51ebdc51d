// Copyright Contributors to the instsplat project
// SPDX-License-Identifier: Apache-2.0
//
// Command-line front end: synthesize scenes, train, associate, query,
// evaluate and serve.

#include <instsplat/association.hpp>
#include <instsplat/error.hpp>
#include <instsplat/io.hpp>
#include <instsplat/query.hpp>
#include <instsplat/render.hpp>
#include <instsplat/service.hpp>
#include <instsplat/synthetic.hpp>
#include <instsplat/trainer.hpp>

#include <CLI11.hpp>
#include <httplib.h>
#include <json.hpp>

#include <array>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using nlohmann::json;
using namespace instsplat;

namespace {

json
read_json(const fs::path &path) {
    const std::string text = read_file(path);
    try {
        return json::parse(text);
    } catch (const json::parse_error &e) {
        fail(ErrorCode::Parse, path.string() + ": " + e.what());
    }
}

// Copies `key` into `out` when present, with the JSON type checked.
template <typename T>
void
read_key(const json &j, const char *key, T &out) {
    if (!j.contains(key))
        return;
    try {
        out = j.at(key).get<T>();
    } catch (const json::exception &e) {
        fail(ErrorCode::Validation, std::string("bad value for \"") + key + "\": " + e.what());
    }
}

void
reject_unknown_keys(const json &j, std::initializer_list<const char *> known) {
    require(j.is_object(), ErrorCode::Validation, "expected a JSON object");
    for (const auto &[key, value] : j.items()) {
        bool found = false;
        for (const char *k : known)
            found = found || key == k;
        require(found, ErrorCode::Validation, "unknown key \"" + key + "\"");
    }
}

SyntheticSceneSpec
parse_spec(const json &j) {
    reject_unknown_keys(j, {"instance_count", "points_per_instance", "layout", "min_separation",
                            "grid_spacing", "blob_radius", "gaussian_scale", "colors",
                            "class_ids", "image_width", "image_height", "camera_count",
                            "camera_elevation_degrees", "camera_fov_degrees", "occlusion",
                            "occlusion_offset", "seed"});
    SyntheticSceneSpec spec;
    read_key(j, "instance_count", spec.instance_count);
    read_key(j, "points_per_instance", spec.points_per_instance);
    std::string layout = "grid";
    read_key(j, "layout", layout);
    if (layout == "grid")
        spec.layout = Layout::Grid;
    else if (layout == "random")
        spec.layout = Layout::Random;
    else
        fail(ErrorCode::Validation, "layout must be \"grid\" or \"random\"");
    read_key(j, "min_separation", spec.min_separation);
    read_key(j, "grid_spacing", spec.grid_spacing);
    read_key(j, "blob_radius", spec.blob_radius);
    read_key(j, "gaussian_scale", spec.gaussian_scale);
    std::vector<std::array<double, 3>> colors;
    read_key(j, "colors", colors);
    for (const auto &c : colors)
        spec.colors.push_back(Vec3(c[0], c[1], c[2]));
    read_key(j, "class_ids", spec.class_ids);
    read_key(j, "image_width", spec.image_width);
    read_key(j, "image_height", spec.image_height);
    read_key(j, "camera_count", spec.camera_count);
    read_key(j, "camera_elevation_degrees", spec.camera_elevation_degrees);
    read_key(j, "camera_fov_degrees", spec.camera_fov_degrees);
    read_key(j, "occlusion", spec.occlusion);
    read_key(j, "occlusion_offset", spec.occlusion_offset);
    read_key(j, "seed", spec.seed);
    spec.validate();
    return spec;
}

TrainConfig
parse_config(const json &j) {
    reject_unknown_keys(j, {"stage1_iters", "stage2_iters", "learning_rate", "intra_weight",
                            "inter_weight", "coarse_size", "fine_size", "use_positions",
                            "position_weight", "seeding", "seed", "views_per_iteration",
                            "init_scale", "refresh_codebook_each_step", "log_every"});
    TrainConfig c;
    read_key(j, "stage1_iters", c.stage1_iters);
    read_key(j, "stage2_iters", c.stage2_iters);
    read_key(j, "learning_rate", c.learning_rate);
    read_key(j, "intra_weight", c.intra_weight);
    read_key(j, "inter_weight", c.inter_weight);
    read_key(j, "coarse_size", c.coarse_size);
    read_key(j, "fine_size", c.fine_size);
    read_key(j, "use_positions", c.use_positions);
    read_key(j, "position_weight", c.position_weight);
    std::string seeding = "kmeans++";
    read_key(j, "seeding", seeding);
    if (seeding == "kmeans++")
        c.seeding = Seeding::KMeansPlusPlus;
    else if (seeding == "uniform")
        c.seeding = Seeding::Uniform;
    else
        fail(ErrorCode::Validation, "seeding must be \"kmeans++\" or \"uniform\"");
    read_key(j, "seed", c.seed);
    read_key(j, "views_per_iteration", c.views_per_iteration);
    read_key(j, "init_scale", c.init_scale);
    read_key(j, "refresh_codebook_each_step", c.refresh_codebook_each_step);
    read_key(j, "log_every", c.log_every);
    c.validate();
    return c;
}

std::vector<TrainingView>
training_views(const SceneBundle &bundle, const std::vector<ViewMasks> &masks) {
    std::vector<TrainingView> out;
    for (const ViewMasks &vm : masks) {
        if (vm.masks.empty())
            continue;
        TrainingView tv{bundle.cameras[vm.view], {}};
        for (const InstanceMask &m : vm.masks)
            tv.masks.push_back(m.mask);
        out.push_back(std::move(tv));
    }
    return out;
}

std::uint32_t
checked_view(const SceneBundle &bundle, std::uint32_t view) {
    require(view < bundle.cameras.size(), ErrorCode::NotFound,
            "view " + std::to_string(view) + " does not exist (" +
                std::to_string(bundle.cameras.size()) + " cameras)");
    return view;
}

const InstanceTable &
require_table(const SceneBundle &bundle) {
    require(bundle.instances.has_value(), ErrorCode::Validation,
            "bundle has no instance table; run associate first");
    return *bundle.instances;
}

//
// Subcommands
//

int
run_synth(const fs::path &spec_path, const fs::path &out_dir) {
    const SyntheticScene s = generate_synthetic(parse_spec(read_json(spec_path)));
    fs::create_directories(out_dir);
    SceneBundle bundle;
    bundle.scene   = s.scene;
    bundle.cameras = s.cameras;
    save_bundle(out_dir / "scene.bundle", bundle);
    save_masks(out_dir / "masks", s.masks);
    save_embeddings(out_dir / "classes.emb", s.class_embeddings);
    save_labels(out_dir / "labels.txt", s.point_class);
    std::size_t mask_count = 0;
    for (const ViewMasks &vm : s.masks)
        mask_count += vm.masks.size();
    std::printf("points=%zu cameras=%zu masks=%zu classes=%zu\n", s.scene.size(),
                s.cameras.size(), mask_count, s.class_embeddings.size());
    return 0;
}

int
run_train(const fs::path &scene_path, const fs::path &config_path, const fs::path &masks_dir,
          const fs::path &out_path) {
    SceneBundle bundle     = load_bundle(scene_path);
    const TrainConfig cfg  = parse_config(read_json(config_path));
    const auto masks       = load_masks(masks_dir, bundle.cameras);
    const auto views       = training_views(bundle, masks);
    require(!views.empty(), ErrorCode::Validation, "no masks found in " + masks_dir.string());

    const ProgressFn log = [&](const IterationLog &l) {
        const std::size_t iter = l.stage == 1 ? l.iter : cfg.stage1_iters + l.iter;
        std::printf("iter=%zu Ls=%.6g Lc=%.6g Lp=%.6g\n", iter, l.intra, l.inter, l.pseudo);
        std::fflush(stdout);
    };
    const Stage1Result s1 = train_stage1(bundle.scene, views, cfg, log);
    const Stage2Result s2 = train_stage2(bundle.scene, s1.features, views, cfg, log);

    bundle.scene           = bundle.scene.with_features(s2.quantized);
    bundle.pseudo_features = s1.features;
    bundle.codebook        = s2.codebook;
    bundle.instances       = s2.codebook.instance_table();
    save_bundle(out_path, bundle);
    std::printf("instances=%zu\n", bundle.instances->size());
    return 0;
}

int
run_associate(const fs::path &scene_path, const fs::path &masks_dir, const fs::path &out_path,
              const AssociationOptions &options) {
    SceneBundle bundle = load_bundle(scene_path);
    require(bundle.codebook && bundle.pseudo_features, ErrorCode::Validation,
            "bundle has no codebook or pseudo features; run train first");
    const auto masks = load_masks(masks_dir, bundle.cameras);
    std::vector<AssociationView> views;
    for (const ViewMasks &vm : masks)
        views.push_back({bundle.cameras[vm.view], vm.masks});
    const AssociationResult r =
        associate(bundle.scene, *bundle.codebook, views, *bundle.pseudo_features, options);
    for (const std::string &w : r.warnings)
        std::fprintf(stderr, "warning: %s\n", w.c_str());
    bundle.instances = r.table;
    save_bundle(out_path, bundle);
    std::printf("instances=%zu embedded=%zu skipped_masks=%zu\n", r.table.size(),
                r.table.embedded_count(), r.skipped_masks);
    return 0;
}

int
run_query(const fs::path &scene_path, const fs::path &emb_path, std::optional<double> threshold) {
    const SceneBundle bundle   = load_bundle(scene_path);
    const InstanceTable &table = require_table(bundle);
    const LoadedEmbeddings q   = load_embeddings(emb_path);
    for (const std::string &w : q.warnings)
        std::fprintf(stderr, "warning: %s\n", w.c_str());
    require(!q.embeddings.empty(), ErrorCode::Validation, "embedding file is empty");
    require(table.embedded_count() > 0, ErrorCode::Conflict, "no instance carries an embedding");

    SelectOptions opts;
    if (threshold) {
        opts.mode      = SelectMode::Threshold;
        opts.threshold = *threshold;
    }
    for (std::size_t k = 0; k < q.embeddings.size(); ++k) {
        const Embedding &e = q.embeddings[k];
        const auto picked  = select_instances(table, e.vector, opts);
        std::size_t points = 0;
        for (const RankedInstance &r : picked)
            points += r.member_count;
        std::printf("query=%zu label=%s selected=%zu points=%zu\n", k,
                    e.label.empty() ? "-" : e.label.c_str(), picked.size(), points);
        for (const RankedInstance &r : picked)
            std::printf("  instance=%s cosine=%.6f points=%zu\n", to_string(r.id).c_str(),
                        r.cosine, r.member_count);
    }
    return 0;
}

int
run_eval3d(const fs::path &scene_path, const fs::path &classes_path, const fs::path &gt_path) {
    const SceneBundle bundle   = load_bundle(scene_path);
    const InstanceTable &table = require_table(bundle);
    const LoadedEmbeddings classes = load_embeddings(classes_path);
    const std::vector<int> gt      = load_labels(gt_path);
    require(gt.size() == bundle.scene.size(), ErrorCode::Validation,
            "label count " + std::to_string(gt.size()) + " differs from point count " +
                std::to_string(bundle.scene.size()));
    const auto predicted = classify_points(table, classes.embeddings, bundle.scene.size());
    const EvalReport r   = eval_3d(predicted, gt);
    for (std::size_t k = 0; k < r.classes.size(); ++k) {
        const int c = r.classes[k];
        const bool labelled = c >= 0 && std::size_t(c) < classes.embeddings.size() &&
                              !classes.embeddings[std::size_t(c)].label.empty();
        std::printf("class=%d label=%s iou=%.4f acc=%.4f\n", c,
                    labelled ? classes.embeddings[std::size_t(c)].label.c_str() : "-",
                    r.per_class_iou[k], r.per_class_acc[k]);
    }
    std::printf("mIoU=%.4f mAcc=%.4f\n", r.miou, r.macc);
    return 0;
}

int
run_click(const fs::path &scene_path, std::uint32_t view, const std::string &pixel) {
    const SceneBundle bundle   = load_bundle(scene_path);
    const InstanceTable &table = require_table(bundle);
    int x = 0, y = 0;
    char tail = 0;
    require(std::sscanf(pixel.c_str(), "%d,%d%c", &x, &y, &tail) == 2, ErrorCode::Validation,
            "pixel must be given as u,v");
    const Camera &cam = bundle.cameras[checked_view(bundle, view)];
    require(x >= 0 && y >= 0 && x < cam.width && y < cam.height, ErrorCode::Validation,
            "pixel outside the " + std::to_string(cam.width) + "x" +
                std::to_string(cam.height) + " image");
    const auto hit = click_select(bundle.scene, table, cam, x, y);
    if (!hit) {
        std::printf("instance=none\n");
        return 0;
    }
    std::printf("instance=%s points=%zu\n", to_string(*hit).c_str(),
                table.at(*hit).members.size());
    return 0;
}

int
run_export(const fs::path &scene_path, std::uint32_t view, const fs::path &out, bool pca) {
    const SceneBundle bundle = load_bundle(scene_path);
    const Camera &cam        = bundle.cameras[checked_view(bundle, view)];
    if (pca)
        export_feature_pca(render_feature_map(bundle.scene, cam, bundle.scene.features()), out);
    else
        export_image(render_color(bundle.scene, cam), out);
    return 0;
}

int
run_serve(const fs::path &scene_path, int port, const std::optional<fs::path> &emb_path,
          const std::string &host) {
    std::vector<Embedding> classes;
    if (emb_path)
        classes = load_embeddings(*emb_path).embeddings;
    Service service(load_bundle(scene_path), std::move(classes));
    httplib::Server server;
    service.mount(server);
    std::printf("listening on %s:%d\n", host.c_str(), port);
    std::fflush(stdout);
    require(server.listen(host, port), ErrorCode::Io,
            "cannot listen on " + host + ":" + std::to_string(port));
    return 0;
}

} // namespace

int
main(int argc, char **argv) {
    CLI::App app{"instsplat: instance-level scene understanding on Gaussian splats"};
    app.require_subcommand(1);

    fs::path scene, out, masks, spec, config, emb, classes, gt;

    auto *synth = app.add_subcommand("synth", "Generate a synthetic scene with masks and labels");
    synth->add_option("--spec", spec, "JSON scene spec")->required()->check(CLI::ExistingFile);
    synth->add_option("--out", out, "Output directory")->required();

    auto *train = app.add_subcommand("train", "Learn instance features and the codebook");
    train->add_option("--scene", scene, "Input bundle")->required();
    train->add_option("--config", config, "JSON training config")->required();
    train->add_option("--masks", masks, "Mask directory (default: masks/ next to the scene)");
    train->add_option("--out", out, "Output bundle")->required();

    AssociationOptions assoc;
    std::string mode = "combined";
    auto *associate_cmd = app.add_subcommand("associate", "Attach mask embeddings to instances");
    associate_cmd->add_option("--scene", scene, "Trained bundle")->required();
    associate_cmd->add_option("--masks", masks, "Mask directory with .emb sidecars")->required();
    associate_cmd->add_option("--out", out, "Output bundle")->required();
    associate_cmd->add_option("--tau", assoc.tau, "Alpha binarization threshold")
        ->capture_default_str();
    associate_cmd->add_option("--min-score", assoc.min_score, "Minimum winning score")
        ->capture_default_str();
    associate_cmd->add_option("--mode", mode, "Score: combined, iou or feature")
        ->check(CLI::IsMember({"combined", "iou", "feature"}))
        ->capture_default_str();

    double threshold = kDefaultSelectThreshold;
    auto *query = app.add_subcommand("query", "Select instances matching text embeddings");
    query->add_option("--scene", scene, "Associated bundle")->required();
    query->add_option("--text-emb", emb, "Embedding file of queries")->required();
    auto *thr  = query->add_option("--threshold", threshold, "Cosine threshold");
    auto *top1 = query->add_flag("--top1", "Best instance only (default)");
    thr->excludes(top1);

    auto *eval3d = app.add_subcommand("eval3d", "Per-class point IoU and accuracy");
    eval3d->add_option("--scene", scene, "Associated bundle")->required();
    eval3d->add_option("--classes", classes, "Class embedding file")->required();
    eval3d->add_option("--gt", gt, "Ground-truth label file")->required();

    std::uint32_t view = 0;
    std::string pixel;
    auto *click = app.add_subcommand("click", "Instance under a pixel");
    click->add_option("--scene", scene, "Associated bundle")->required();
    click->add_option("--view", view, "Camera index")->required();
    click->add_option("--pixel", pixel, "Pixel as u,v")->required();

    bool pca = false;
    auto *exp = app.add_subcommand("export", "Render a view to an image");
    exp->add_option("--scene", scene, "Bundle")->required();
    exp->add_option("--view", view, "Camera index")->required();
    exp->add_option("--out", out, "Output .png or .pgm")->required();
    exp->add_flag("--pca", pca, "Render features as a PCA false-color image");

    int port = 8080;
    std::string host = "127.0.0.1";
    auto *serve = app.add_subcommand("serve", "Serve a scene over HTTP");
    serve->add_option("--scene", scene, "Bundle")->required();
    serve->add_option("--port", port, "TCP port")->capture_default_str();
    serve->add_option("--host", host, "Bind address")->capture_default_str();
    serve->add_option("--embeddings", emb, "Class embeddings for named queries");

    CLI11_PARSE(app, argc, argv);

    try {
        if (*synth)
            return run_synth(spec, out);
        if (*train) {
            if (masks.empty())
                masks = scene.parent_path() / "masks";
            return run_train(scene, config, masks, out);
        }
        if (*associate_cmd) {
            assoc.mode = mode == "iou"       ? ScoreMode::IouOnly
                         : mode == "feature" ? ScoreMode::FeatureOnly
                                             : ScoreMode::Combined;
            return run_associate(scene, masks, out, assoc);
        }
        if (*query)
            return run_query(scene, emb, thr->count() ? std::optional(threshold) : std::nullopt);
        if (*eval3d)
            return run_eval3d(scene, classes, gt);
        if (*click)
            return run_click(scene, view, pixel);
        if (*exp)
            return run_export(scene, view, out, pca);
        if (*serve)
            return run_serve(scene, port, emb.empty() ? std::nullopt : std::optional(emb), host);
    } catch (const Error &e) {
        std::fprintf(stderr, "error [%s]: %s\n", std::string(to_string(e.code())).c_str(),
                     e.what());
        return 2;
    } catch (const std::exception &e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    }
    return 1;
}
