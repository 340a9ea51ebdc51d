// Copyright Contributors to the instsplat project
// SPDX-License-Identifier: Apache-2.0
//
#pragma once

#include <instsplat/codebook.hpp>
#include <instsplat/image.hpp>
#include <instsplat/instance_table.hpp>
#include <instsplat/losses.hpp>
#include <instsplat/query.hpp>
#include <instsplat/scene.hpp>

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace instsplat {

//
// Scene bundles
//
// A bundle is a plain-text manifest terminated by a line "end", followed by
// tagged binary blocks. Every scalar is stored little-endian; reals are
// IEEE 32-bit floats, so save/load is exact for values representable in
// single precision.
//

inline constexpr std::uint32_t kBundleVersion = 1;

struct SceneBundle {
    Scene scene;
    std::vector<Camera> cameras;
    std::optional<FeatureMatrix> pseudo_features; ///< stage-1 output
    std::optional<TwoLevelCodebook> codebook;
    std::optional<InstanceTable> instances;
};

std::string encode_bundle(const SceneBundle &bundle);
/// Throws ErrorCode::Parse on truncated or inconsistent data and
/// ErrorCode::Version for newer manifests.
SceneBundle decode_bundle(std::string_view bytes);

void save_bundle(const std::filesystem::path &path, const SceneBundle &bundle);
SceneBundle load_bundle(const std::filesystem::path &path);

//
// Masks: view_<v>_mask_<m>.png (or .pgm), 8-bit 0/255, with an optional
// view_<v>_mask_<m>.emb sidecar of 512 little-endian floats.
//

struct ViewMasks {
    std::uint32_t view = 0;
    std::vector<InstanceMask> masks;
};

/// Masks grouped by ascending view id. When `cameras` is non-empty, each
/// view id must name a camera and every mask must match its image size.
std::vector<ViewMasks> load_masks(const std::filesystem::path &dir,
                                  std::span<const Camera> cameras = {});
void save_masks(const std::filesystem::path &dir, std::span<const ViewMasks> views);

//
// Embedding files: "IEMB", u32 count, u32 dim (= 512), count * dim floats,
// then an optional "LBLS" section of (u32 length, utf-8 bytes) per entry.
//

struct LoadedEmbeddings {
    std::vector<Embedding> embeddings;
    std::vector<std::string> warnings; ///< vectors whose norm was off by > 1e-2
};

LoadedEmbeddings load_embeddings(const std::filesystem::path &path);
void save_embeddings(const std::filesystem::path &path, std::span<const Embedding> embeddings);

/// Throws ErrorCode::Validation on wrong size or a zero vector.
Eigen::VectorXd read_embedding_sidecar(const std::filesystem::path &path);
void write_embedding_sidecar(const std::filesystem::path &path, const Eigen::VectorXd &embedding);

//
// Images
//

struct Image8 {
    int width    = 0;
    int height   = 0;
    int channels = 1; ///< 1 (gray) or 3 (RGB)
    std::vector<std::uint8_t> pixels;
};

std::string encode_png(const Image8 &image);
Image8 decode_png(std::string_view bytes);
Image8 read_image(const std::filesystem::path &path);  ///< .png or .pgm
void write_image(const std::filesystem::path &path, const Image8 &image);

Image8 to_image8(const ColorImage &image);
Image8 to_image8(const BoolMap &mask);
BoolMap to_bool_map(const Image8 &image);

/// Orthonormal 6 x 3 projection onto the top principal directions of the
/// map's pixels (zero columns where the map has no variance).
Eigen::Matrix<double, kFeatureDim, 3> pca_projection(const FeatureMap &map);
/// Projects onto pca_projection and min-max normalizes each channel.
Image8 feature_pca_image(const FeatureMap &map);

void export_image(const ColorImage &image, const std::filesystem::path &path);
void export_feature_pca(const FeatureMap &map, const std::filesystem::path &path);

//
// Ground-truth label files: one integer class id per line.
//

std::vector<int> load_labels(const std::filesystem::path &path);
void save_labels(const std::filesystem::path &path, std::span<const int> labels);

std::string read_file(const std::filesystem::path &path);
void write_file(const std::filesystem::path &path, std::string_view bytes);

} // namespace instsplat
