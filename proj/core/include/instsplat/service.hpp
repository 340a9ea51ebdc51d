// Copyright Contributors to the instsplat project
// SPDX-License-Identifier: Apache-2.0
//
#pragma once

#include <instsplat/io.hpp>
#include <instsplat/query.hpp>

#include <deque>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace httplib {
class Server;
}

namespace instsplat {

inline constexpr std::size_t kUndoDepth       = 16;
inline constexpr long kMaxRenderPixels        = 1024L * 1024L;

/// Transport-free HTTP response.
struct Response {
    int status = 200;
    std::string content_type = "application/json";
    std::string body;
};

/// Everything a request can observe. Snapshots are immutable once published.
struct Snapshot {
    Scene scene;
    InstanceTable table;
    std::optional<FeatureMatrix> pseudo_features; ///< dropped after the first edit
    std::optional<TwoLevelCodebook> codebook;     ///< dropped after the first edit
};

/// One loaded scene served to many readers. Reads work on a shared snapshot;
/// edits run one at a time and publish a new snapshot when complete.
class Service {
public:
    explicit Service(SceneBundle bundle, std::vector<Embedding> class_embeddings = {});

    Response get_views() const;
    Response post_views(std::string_view body);
    Response get_scene() const;
    Response post_render(std::string_view body) const;
    Response post_click(std::string_view body) const;
    Response post_query(std::string_view body) const;
    Response post_edit(std::string_view body);
    Response post_undo();
    Response post_save(std::string_view body) const;

    /// Registers every endpoint on `server`.
    void mount(httplib::Server &server);

    std::shared_ptr<const Snapshot> snapshot() const;
    std::vector<Camera> cameras() const;
    std::size_t undo_depth() const;

private:
    void publish(std::shared_ptr<const Snapshot> next);

    mutable std::mutex mStateMutex; ///< guards mCurrent and mCameras
    std::shared_ptr<const Snapshot> mCurrent;
    std::vector<Camera> mCameras;

    mutable std::mutex mWriterMutex; ///< one edit at a time; guards mUndo
    std::deque<std::shared_ptr<const Snapshot>> mUndo;

    std::vector<Embedding> mClasses;
};

} // namespace instsplat
