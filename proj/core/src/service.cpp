// Copyright Contributors to the instsplat project
// SPDX-License-Identifier: Apache-2.0
//
#include <instsplat/edit.hpp>
#include <instsplat/error.hpp>
#include <instsplat/render.hpp>
#include <instsplat/service.hpp>

#include <httplib.h>
#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <numbers>

namespace instsplat {

using json = nlohmann::json;

namespace {

const Vec3 kOverlayTint(1.0, 0.85, 0.0);
constexpr double kOverlayMix = 0.5;

Response
json_response(const json &body, int status = 200) {
    return {status, "application/json", body.dump()};
}

int
http_status(ErrorCode code) {
    switch (code) {
    case ErrorCode::Validation: return 422;
    case ErrorCode::NotFound: return 404;
    case ErrorCode::Conflict: return 409;
    case ErrorCode::Parse: return 400;
    case ErrorCode::Version: return 400;
    case ErrorCode::Io:
    case ErrorCode::Generation: break;
    }
    return 500;
}

Response
error_response(int status, std::string_view code, const std::string &message) {
    return json_response({{"error", {{"code", code}, {"message", message}}}}, status);
}

template <typename F>
Response
guarded(F &&handler) {
    try {
        return handler();
    } catch (const Error &e) {
        return error_response(http_status(e.code()), to_string(e.code()), e.what());
    } catch (const json::parse_error &e) {
        return error_response(400, "parse", e.what());
    } catch (const json::exception &e) {
        return error_response(422, "validation", e.what());
    } catch (const std::exception &e) {
        return error_response(500, "internal", e.what());
    }
}

json
parse_body(std::string_view body) {
    json j = json::parse(body.empty() ? std::string_view("{}") : body);
    require(j.is_object(), ErrorCode::Validation, "request body must be an object");
    return j;
}

template <int N>
Eigen::Matrix<double, N, 1>
vec_from(const json &j, const char *name) {
    require(j.is_array() && j.size() == std::size_t(N), ErrorCode::Validation,
            std::string(name) + " must be an array of " + std::to_string(N) + " numbers");
    Eigen::Matrix<double, N, 1> v;
    for (int i = 0; i < N; ++i)
        v[i] = j[std::size_t(i)].get<double>();
    return v;
}

json
camera_json(std::size_t id, const Camera &c) {
    json rot = json::array();
    for (int i = 0; i < 3; ++i)
        for (int k = 0; k < 3; ++k)
            rot.push_back(c.rotation(i, k));
    return {{"id", id},          {"width", c.width}, {"height", c.height},
            {"fx", c.fx},        {"fy", c.fy},       {"cx", c.cx},
            {"cy", c.cy},        {"rotation", rot},
            {"translation", {c.translation[0], c.translation[1], c.translation[2]}}};
}

void
check_size(long width, long height) {
    require(width > 0 && height > 0, ErrorCode::Validation, "image size must be positive");
    require(width * height <= kMaxRenderPixels, ErrorCode::Validation,
            "image larger than 1024x1024 pixels");
}

Camera
camera_from_json(const json &j) {
    const long width  = j.at("width").get<long>();
    const long height = j.at("height").get<long>();
    check_size(width, height);
    Camera cam;
    if (j.contains("eye")) {
        const Vec3 up   = j.contains("up") ? Vec3(vec_from<3>(j["up"], "up")) : Vec3::UnitZ();
        const double fov = j.value("fov_degrees", 60.0);
        require(fov > 0.0 && fov < 180.0, ErrorCode::Validation, "fov must lie in (0, 180)");
        cam = Camera::look_at(vec_from<3>(j["eye"], "eye"), vec_from<3>(j.at("target"), "target"),
                              up, fov * std::numbers::pi / 180.0, int(width), int(height));
    } else {
        cam.width  = int(width);
        cam.height = int(height);
        cam.fx     = j.at("fx").get<double>();
        cam.fy     = j.at("fy").get<double>();
        cam.cx     = j.value("cx", 0.5 * double(width));
        cam.cy     = j.value("cy", 0.5 * double(height));
        const auto r = vec_from<9>(j.at("rotation"), "rotation");
        for (int i = 0; i < 3; ++i)
            for (int k = 0; k < 3; ++k)
                cam.rotation(i, k) = r[3 * i + k];
        cam.translation = vec_from<3>(j.at("translation"), "translation");
    }
    validate(cam);
    return cam;
}

GaussianPoint
point_from_json(const json &j) {
    GaussianPoint p;
    p.position  = vec_from<3>(j.at("position"), "position");
    const auto q = vec_from<4>(j.value("rotation", json::array({1, 0, 0, 0})), "rotation");
    p.rotation  = Eigen::Quaterniond(q[0], q[1], q[2], q[3]);
    p.scale     = vec_from<3>(j.at("scale"), "scale");
    p.opacity   = j.at("opacity").get<double>();
    p.color     = vec_from<3>(j.at("color"), "color");
    if (j.contains("feature"))
        p.instance_feature = vec_from<kFeatureDim>(j["feature"], "feature");
    validate(p);
    return p;
}

InstanceId
next_free_id(const InstanceTable &table) {
    std::uint32_t coarse = 0;
    for (const Instance &inst : table.instances())
        coarse = std::max(coarse, inst.id.coarse + 1);
    return {coarse, 0};
}

} // namespace

Service::Service(SceneBundle bundle, std::vector<Embedding> class_embeddings)
    : mCameras(std::move(bundle.cameras)), mClasses(std::move(class_embeddings)) {
    auto snap = std::make_shared<Snapshot>();
    snap->scene = std::move(bundle.scene);
    if (bundle.instances)
        snap->table = std::move(*bundle.instances);
    else if (bundle.codebook)
        snap->table = bundle.codebook->instance_table();
    if (bundle.instances || bundle.codebook)
        snap->table.validate(snap->scene.size());
    snap->pseudo_features = std::move(bundle.pseudo_features);
    snap->codebook        = std::move(bundle.codebook);
    mCurrent              = std::move(snap);
}

std::shared_ptr<const Snapshot>
Service::snapshot() const {
    std::lock_guard lock(mStateMutex);
    return mCurrent;
}

std::vector<Camera>
Service::cameras() const {
    std::lock_guard lock(mStateMutex);
    return mCameras;
}

std::size_t
Service::undo_depth() const {
    std::lock_guard lock(mWriterMutex);
    return mUndo.size();
}

void
Service::publish(std::shared_ptr<const Snapshot> next) {
    std::lock_guard lock(mStateMutex);
    mCurrent = std::move(next);
}

Response
Service::get_views() const {
    return guarded([&] {
        const auto cams = cameras();
        json out        = json::array();
        for (std::size_t i = 0; i < cams.size(); ++i)
            out.push_back(camera_json(i, cams[i]));
        return json_response({{"views", out}});
    });
}

Response
Service::post_views(std::string_view body) {
    return guarded([&] {
        const Camera cam = camera_from_json(parse_body(body));
        std::lock_guard lock(mStateMutex);
        mCameras.push_back(cam);
        return json_response(camera_json(mCameras.size() - 1, cam), 201);
    });
}

Response
Service::get_scene() const {
    return guarded([&] {
        const auto snap = snapshot();
        json instances  = json::array();
        for (const Instance &inst : snap->table.instances())
            instances.push_back({{"id", to_string(inst.id)},
                                 {"member_count", inst.members.size()},
                                 {"embedded", inst.embedding.has_value()}});
        json classes = json::array();
        for (const Embedding &e : mClasses)
            classes.push_back(e.label);
        return json_response({{"point_count", snap->scene.size()},
                              {"instance_count", snap->table.size()},
                              {"embedded_count", snap->table.embedded_count()},
                              {"instances", instances},
                              {"classes", classes}});
    });
}

Response
Service::post_render(std::string_view body) const {
    return guarded([&] {
        const json req = parse_body(body);
        Camera cam;
        if (req.contains("view_id")) {
            const auto cams = cameras();
            const auto id   = req["view_id"].get<long>();
            require(id >= 0 && std::size_t(id) < cams.size(), ErrorCode::NotFound,
                    "unknown view " + std::to_string(id));
            cam = cams[std::size_t(id)];
            const long width  = req.value("width", long(cam.width));
            const long height = req.value("height", long(cam.height));
            check_size(width, height);
            const double sx = double(width) / cam.width, sy = double(height) / cam.height;
            cam.fx *= sx;
            cam.cx *= sx;
            cam.fy *= sy;
            cam.cy *= sy;
            cam.width  = int(width);
            cam.height = int(height);
        } else {
            require(req.contains("pose"), ErrorCode::Validation, "render needs view_id or pose");
            json pose = req["pose"];
            if (!pose.contains("width") && req.contains("width"))
                pose["width"] = req["width"];
            if (!pose.contains("height") && req.contains("height"))
                pose["height"] = req["height"];
            cam = camera_from_json(pose);
        }
        Vec3 background = Vec3::Zero();
        if (req.contains("background"))
            background = vec_from<3>(req["background"], "background");

        const auto snap = snapshot();
        ColorImage image = render_color(snap->scene, cam, background);
        if (req.contains("overlay") && !req["overlay"].is_null()) {
            const Instance &inst = snap->table.at(parse_instance_id(req["overlay"].get<std::string>()));
            const AlphaMap alpha = compute_blend_weights(snap->scene, cam, inst.members).alpha_map();
            for (std::size_t p = 0; p < alpha.values.size(); ++p) {
                if (alpha.values[p] > 0.5)
                    image.values.row(Eigen::Index(p)) =
                        (1.0 - kOverlayMix) * image.values.row(Eigen::Index(p)) +
                        kOverlayMix * kOverlayTint.transpose();
            }
        }
        return Response{200, "image/png", encode_png(to_image8(image))};
    });
}

Response
Service::post_click(std::string_view body) const {
    return guarded([&] {
        const json req  = parse_body(body);
        const auto cams = cameras();
        const auto id   = req.at("view_id").get<long>();
        require(id >= 0 && std::size_t(id) < cams.size(), ErrorCode::NotFound,
                "unknown view " + std::to_string(id));
        const Camera &cam = cams[std::size_t(id)];
        const long u = req.at("u").get<long>(), v = req.at("v").get<long>();
        require(u >= 0 && v >= 0 && u < cam.width && v < cam.height, ErrorCode::Validation,
                "pixel out of bounds");
        const auto snap = snapshot();
        const auto hit  = click_select(snap->scene, snap->table, cam, int(u), int(v));
        if (!hit)
            return json_response({{"instance_id", nullptr}, {"member_count", 0}});
        return json_response({{"instance_id", to_string(*hit)},
                              {"member_count", snap->table.at(*hit).members.size()}});
    });
}

Response
Service::post_query(std::string_view body) const {
    return guarded([&] {
        const json req = parse_body(body);
        Eigen::VectorXd query;
        if (req.contains("embedding")) {
            const json &e = req["embedding"];
            require(e.is_array() && e.size() == std::size_t(kEmbeddingDim), ErrorCode::Validation,
                    "embedding must hold 512 numbers");
            query.resize(kEmbeddingDim);
            for (int i = 0; i < kEmbeddingDim; ++i)
                query[i] = e[std::size_t(i)].get<double>();
        } else {
            const std::string name = req.at("class_name").get<std::string>();
            const auto it = std::find_if(mClasses.begin(), mClasses.end(),
                                         [&](const Embedding &e) { return e.label == name; });
            require(it != mClasses.end(), ErrorCode::NotFound, "unknown class " + name);
            query = it->vector;
        }

        SelectOptions opts;
        const std::string mode = req.value("mode", std::string("top1"));
        if (mode == "threshold") {
            opts.mode      = SelectMode::Threshold;
            opts.threshold = req.value("threshold", kDefaultSelectThreshold);
        } else {
            require(mode == "top1", ErrorCode::Validation, "mode must be top1 or threshold");
        }

        const auto snap = snapshot();
        require(snap->table.embedded_count() > 0, ErrorCode::Conflict,
                "no instance carries an embedding");
        json instances          = json::array();
        std::size_t point_count = 0;
        for (const RankedInstance &r : select_instances(snap->table, query, opts)) {
            instances.push_back({{"id", to_string(r.id)},
                                 {"cosine", r.cosine},
                                 {"member_count", r.member_count}});
            point_count += r.member_count;
        }
        return json_response({{"instances", instances}, {"point_count", point_count}});
    });
}

Response
Service::post_edit(std::string_view body) {
    return guarded([&] {
        const json req = parse_body(body);
        const std::string op = req.at("op").get<std::string>();
        std::lock_guard writer(mWriterMutex);
        const auto current = snapshot();
        auto next          = std::make_shared<Snapshot>();

        if (op == "remove") {
            const InstanceId id = parse_instance_id(req.at("instance_id").get<std::string>());
            EditedScene edited  = remove_instance(current->scene, current->table, id);
            next->scene         = std::move(edited.scene);
            next->table         = std::move(edited.table);
        } else if (op == "recolor") {
            const InstanceId id = parse_instance_id(req.at("instance_id").get<std::string>());
            next->scene = recolor_instance(current->scene, current->table, id,
                                           vec_from<3>(req.at("color"), "color"));
            next->table = current->table;
        } else if (op == "insert") {
            const InstanceId id = req.contains("instance_id")
                                      ? parse_instance_id(req["instance_id"].get<std::string>())
                                      : next_free_id(current->table);
            std::vector<GaussianPoint> points;
            if (req.contains("source")) {
                const Instance &src =
                    current->table.at(parse_instance_id(req["source"].get<std::string>()));
                const Vec3 offset = req.contains("offset") ? Vec3(vec_from<3>(req["offset"], "offset"))
                                                           : Vec3::Zero();
                for (std::uint32_t m : src.members) {
                    GaussianPoint p = current->scene[m];
                    p.position += offset;
                    points.push_back(p);
                }
            } else {
                const json &list = req.at("points");
                require(list.is_array() && !list.empty(), ErrorCode::Validation,
                        "insert needs a non-empty points array or a source instance");
                for (const json &p : list)
                    points.push_back(point_from_json(p));
            }
            EditedScene edited = insert_instance(current->scene, current->table, points, id);
            next->scene        = std::move(edited.scene);
            next->table        = std::move(edited.table);
        } else {
            fail(ErrorCode::Validation, "unknown edit op " + op);
        }

        mUndo.push_back(current);
        if (mUndo.size() > kUndoDepth)
            mUndo.pop_front();
        const std::size_t points = next->scene.size(), instances = next->table.size();
        publish(std::move(next));
        return json_response({{"point_count", points},
                              {"instance_count", instances},
                              {"undo_depth", mUndo.size()}});
    });
}

Response
Service::post_undo() {
    return guarded([&] {
        std::lock_guard writer(mWriterMutex);
        require(!mUndo.empty(), ErrorCode::Conflict, "nothing to undo");
        auto previous = std::move(mUndo.back());
        mUndo.pop_back();
        const std::size_t points = previous->scene.size(), instances = previous->table.size();
        publish(std::move(previous));
        return json_response({{"point_count", points},
                              {"instance_count", instances},
                              {"undo_depth", mUndo.size()}});
    });
}

Response
Service::post_save(std::string_view body) const {
    return guarded([&] {
        const json req  = parse_body(body);
        const auto snap = snapshot();
        SceneBundle bundle;
        bundle.scene           = snap->scene;
        bundle.cameras         = cameras();
        bundle.pseudo_features = snap->pseudo_features;
        bundle.codebook        = snap->codebook;
        bundle.instances       = snap->table;
        const std::string path = req.at("path").get<std::string>();
        save_bundle(path, bundle);
        return json_response({{"path", path}, {"point_count", snap->scene.size()}});
    });
}

void
Service::mount(httplib::Server &server) {
    auto send = [](httplib::Response &res, const Response &r) {
        res.status = r.status;
        res.set_content(r.body, r.content_type);
    };
    server.Get("/views", [this, send](const httplib::Request &, httplib::Response &res) {
        send(res, get_views());
    });
    server.Post("/views", [this, send](const httplib::Request &req, httplib::Response &res) {
        send(res, post_views(req.body));
    });
    server.Get("/scene", [this, send](const httplib::Request &, httplib::Response &res) {
        send(res, get_scene());
    });
    server.Post("/render", [this, send](const httplib::Request &req, httplib::Response &res) {
        send(res, post_render(req.body));
    });
    server.Post("/click", [this, send](const httplib::Request &req, httplib::Response &res) {
        send(res, post_click(req.body));
    });
    server.Post("/query", [this, send](const httplib::Request &req, httplib::Response &res) {
        send(res, post_query(req.body));
    });
    server.Post("/edit", [this, send](const httplib::Request &req, httplib::Response &res) {
        send(res, post_edit(req.body));
    });
    server.Post("/undo", [this, send](const httplib::Request &, httplib::Response &res) {
        send(res, post_undo());
    });
    server.Post("/save", [this, send](const httplib::Request &req, httplib::Response &res) {
        send(res, post_save(req.body));
    });
}

} // namespace instsplat
