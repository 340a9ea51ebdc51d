// Copyright Contributors to the instsplat project
// SPDX-License-Identifier: Apache-2.0
//
#include <instsplat/error.hpp>
#include <instsplat/io.hpp>

#include <Eigen/Eigenvalues>
#include <png.h>

#include <algorithm>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>
#include <map>
#include <regex>
#include <sstream>

namespace instsplat {

namespace fs = std::filesystem;

namespace {

constexpr std::size_t kPointFloats = 20;

class Writer {
public:
    void u8(std::uint8_t v) { mOut.push_back(char(v)); }
    void u32(std::uint32_t v) {
        for (int b = 0; b < 4; ++b)
            mOut.push_back(char((v >> (8 * b)) & 0xffu));
    }
    void u64(std::uint64_t v) {
        for (int b = 0; b < 8; ++b)
            mOut.push_back(char((v >> (8 * b)) & 0xffu));
    }
    void f32(double v) { u32(std::bit_cast<std::uint32_t>(float(v))); }
    void bytes(std::string_view s) { mOut.append(s); }
    std::string &str() { return mOut; }

private:
    std::string mOut;
};

class Reader {
public:
    Reader(std::string_view data, std::string what) : mData(data), mWhat(std::move(what)) {}

    std::string_view take(std::size_t n) {
        require(n <= mData.size() - mPos, ErrorCode::Parse, mWhat + " is truncated");
        const auto out = mData.substr(mPos, n);
        mPos += n;
        return out;
    }
    std::uint8_t u8() { return std::uint8_t(take(1)[0]); }
    std::uint32_t u32() {
        const auto s    = take(4);
        std::uint32_t v = 0;
        for (int b = 3; b >= 0; --b)
            v = (v << 8) | std::uint8_t(s[b]);
        return v;
    }
    std::uint64_t u64() {
        const auto s    = take(8);
        std::uint64_t v = 0;
        for (int b = 7; b >= 0; --b)
            v = (v << 8) | std::uint8_t(s[b]);
        return v;
    }
    double f32() { return double(std::bit_cast<float>(u32())); }
    /// Element count that must fit in the remaining bytes at `unit` bytes each.
    std::size_t count64(std::size_t unit) {
        const std::uint64_t n = u64();
        require(unit == 0 || n <= remaining() / unit, ErrorCode::Parse, mWhat + " is truncated");
        return std::size_t(n);
    }
    std::size_t count32(std::size_t unit) {
        const std::uint32_t n = u32();
        require(unit == 0 || n <= remaining() / unit, ErrorCode::Parse, mWhat + " is truncated");
        return std::size_t(n);
    }
    std::size_t remaining() const { return mData.size() - mPos; }
    bool done() const { return mPos == mData.size(); }

private:
    std::string_view mData;
    std::size_t mPos = 0;
    std::string mWhat;
};

void
put_block(Writer &out, const char *tag, std::string payload) {
    out.bytes(std::string_view(tag, 4));
    out.u64(payload.size());
    out.bytes(payload);
}

std::string
encode_points(const Scene &scene) {
    Writer w;
    w.u64(scene.size());
    for (const GaussianPoint &p : scene.points()) {
        for (int a = 0; a < 3; ++a)
            w.f32(p.position[a]);
        w.f32(p.rotation.w());
        w.f32(p.rotation.x());
        w.f32(p.rotation.y());
        w.f32(p.rotation.z());
        for (int a = 0; a < 3; ++a)
            w.f32(p.scale[a]);
        w.f32(p.opacity);
        for (int a = 0; a < 3; ++a)
            w.f32(p.color[a]);
        for (int c = 0; c < kFeatureDim; ++c)
            w.f32(p.instance_feature[c]);
    }
    return std::move(w.str());
}

Scene
decode_points(std::string_view payload) {
    Reader r(payload, "points block");
    const std::size_t n = r.count64(kPointFloats * 4);
    std::vector<GaussianPoint> points(n);
    for (GaussianPoint &p : points) {
        for (int a = 0; a < 3; ++a)
            p.position[a] = r.f32();
        const double w = r.f32(), x = r.f32(), y = r.f32(), z = r.f32();
        p.rotation     = Eigen::Quaterniond(w, x, y, z);
        for (int a = 0; a < 3; ++a)
            p.scale[a] = r.f32();
        p.opacity = r.f32();
        for (int a = 0; a < 3; ++a)
            p.color[a] = r.f32();
        for (int c = 0; c < kFeatureDim; ++c)
            p.instance_feature[c] = r.f32();
    }
    require(r.done(), ErrorCode::Parse, "points block has trailing bytes");
    return Scene(std::move(points));
}

std::string
encode_cameras(std::span<const Camera> cameras) {
    Writer w;
    w.u32(std::uint32_t(cameras.size()));
    for (const Camera &c : cameras) {
        w.f32(c.fx);
        w.f32(c.fy);
        w.f32(c.cx);
        w.f32(c.cy);
        w.u32(std::uint32_t(c.width));
        w.u32(std::uint32_t(c.height));
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 3; ++j)
                w.f32(c.rotation(i, j));
        for (int i = 0; i < 3; ++i)
            w.f32(c.translation[i]);
    }
    return std::move(w.str());
}

std::vector<Camera>
decode_cameras(std::string_view payload) {
    Reader r(payload, "cameras block");
    std::vector<Camera> out(r.count32(18 * 4));
    for (Camera &c : out) {
        c.fx     = r.f32();
        c.fy     = r.f32();
        c.cx     = r.f32();
        c.cy     = r.f32();
        c.width  = int(r.u32());
        c.height = int(r.u32());
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 3; ++j)
                c.rotation(i, j) = r.f32();
        for (int i = 0; i < 3; ++i)
            c.translation[i] = r.f32();
        validate(c);
    }
    require(r.done(), ErrorCode::Parse, "cameras block has trailing bytes");
    return out;
}

void
put_matrix(Writer &w, const RowMatrix &m) {
    for (Eigen::Index i = 0; i < m.rows(); ++i)
        for (Eigen::Index j = 0; j < m.cols(); ++j)
            w.f32(m(i, j));
}

RowMatrix
get_matrix(Reader &r, std::size_t rows, std::size_t cols) {
    require(cols == 0 || rows <= r.remaining() / (4 * cols), ErrorCode::Parse,
            "matrix is truncated");
    RowMatrix m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
    for (Eigen::Index i = 0; i < m.rows(); ++i)
        for (Eigen::Index j = 0; j < m.cols(); ++j)
            m(i, j) = r.f32();
    return m;
}

std::string
encode_features(const FeatureMatrix &f) {
    Writer w;
    w.u64(std::uint64_t(f.rows()));
    put_matrix(w, f);
    return std::move(w.str());
}

FeatureMatrix
decode_features(std::string_view payload) {
    Reader r(payload, "features block");
    const std::size_t n = r.count64(kFeatureDim * 4);
    FeatureMatrix f     = get_matrix(r, n, kFeatureDim);
    require(r.done(), ErrorCode::Parse, "features block has trailing bytes");
    return f;
}

std::string
encode_codebook(const TwoLevelCodebook &cb) {
    Writer w;
    const TwoLevelOptions &o = cb.options;
    w.u32(std::uint32_t(o.coarse_size));
    w.u32(std::uint32_t(o.fine_size));
    w.u8(o.use_positions ? 1 : 0);
    w.u8(o.seeding == Seeding::Uniform ? 0 : 1);
    w.f32(o.position_weight);
    w.u32(std::uint32_t(o.max_rounds));
    w.u64(o.seed);
    for (int a = 0; a < 3; ++a)
        w.f32(cb.bounds.min[a]);
    for (int a = 0; a < 3; ++a)
        w.f32(cb.bounds.max[a]);
    w.u32(std::uint32_t(cb.coarse_entries.rows()));
    w.u32(std::uint32_t(cb.coarse_entries.cols()));
    put_matrix(w, cb.coarse_entries);
    for (const RowMatrix &fine : cb.fine_entries) {
        w.u32(std::uint32_t(fine.rows()));
        put_matrix(w, fine);
    }
    w.u64(cb.point_count());
    for (std::uint32_t a : cb.coarse_assignments)
        w.u32(a);
    for (std::uint32_t a : cb.fine_assignments)
        w.u32(a);
    return std::move(w.str());
}

TwoLevelCodebook
decode_codebook(std::string_view payload) {
    Reader r(payload, "codebook block");
    TwoLevelCodebook cb;
    TwoLevelOptions &o = cb.options;
    o.coarse_size      = r.u32();
    o.fine_size        = r.u32();
    o.use_positions    = r.u8() != 0;
    o.seeding          = r.u8() == 0 ? Seeding::Uniform : Seeding::KMeansPlusPlus;
    o.position_weight  = r.f32();
    o.max_rounds       = r.u32();
    o.seed             = r.u64();
    for (int a = 0; a < 3; ++a)
        cb.bounds.min[a] = r.f32();
    for (int a = 0; a < 3; ++a)
        cb.bounds.max[a] = r.f32();
    const std::size_t k1   = r.u32();
    const std::size_t cols = r.u32();
    require(cols == std::size_t(kFeatureDim) + 3, ErrorCode::Validation,
            "coarse entries have the wrong width");
    cb.coarse_entries = get_matrix(r, k1, cols);
    cb.fine_entries.reserve(k1);
    for (std::size_t c = 0; c < k1; ++c) {
        const std::size_t rows = r.count32(kFeatureDim * 4);
        cb.fine_entries.push_back(get_matrix(r, rows, kFeatureDim));
    }
    const std::size_t n = r.count64(8);
    cb.coarse_assignments.resize(n);
    cb.fine_assignments.resize(n);
    for (auto &a : cb.coarse_assignments)
        a = r.u32();
    for (auto &a : cb.fine_assignments)
        a = r.u32();
    require(r.done(), ErrorCode::Parse, "codebook block has trailing bytes");
    for (std::size_t i = 0; i < n; ++i) {
        require(cb.coarse_assignments[i] < k1 &&
                    cb.fine_assignments[i] < cb.fine_entries[cb.coarse_assignments[i]].rows(),
                ErrorCode::Validation, "codebook assignment out of range");
    }
    return cb;
}

std::string
encode_instances(const InstanceTable &table) {
    Writer w;
    w.u32(std::uint32_t(table.size()));
    for (const Instance &inst : table.instances()) {
        w.u32(inst.id.coarse);
        w.u32(inst.id.fine);
        w.u64(inst.members.size());
        for (std::uint32_t m : inst.members)
            w.u32(m);
        w.u8(inst.embedding ? 1 : 0);
        if (inst.embedding) {
            w.u32(std::uint32_t(inst.embedding->size()));
            for (Eigen::Index i = 0; i < inst.embedding->size(); ++i)
                w.f32((*inst.embedding)[i]);
        }
        w.u32(std::uint32_t(inst.audit.size()));
        for (const AuditEntry &a : inst.audit) {
            w.u32(a.view);
            w.u32(a.mask);
            w.f32(a.score);
        }
    }
    return std::move(w.str());
}

InstanceTable
decode_instances(std::string_view payload) {
    Reader r(payload, "instances block");
    InstanceTable table;
    const std::size_t count = r.count32(8);
    for (std::size_t k = 0; k < count; ++k) {
        Instance inst;
        inst.id.coarse = r.u32();
        inst.id.fine   = r.u32();
        inst.members.resize(r.count64(4));
        for (auto &m : inst.members)
            m = r.u32();
        if (r.u8() != 0) {
            Eigen::VectorXd e(Eigen::Index(r.count32(4)));
            for (Eigen::Index i = 0; i < e.size(); ++i)
                e[i] = r.f32();
            inst.embedding = std::move(e);
        }
        inst.audit.resize(r.count32(12));
        for (AuditEntry &a : inst.audit) {
            a.view  = r.u32();
            a.mask  = r.u32();
            a.score = r.f32();
        }
        table.add(std::move(inst));
    }
    require(r.done(), ErrorCode::Parse, "instances block has trailing bytes");
    return table;
}

std::uint32_t
sidecar_float_count(std::size_t bytes) {
    return std::uint32_t(bytes / 4);
}

Eigen::VectorXd
normalized_or_throw(Eigen::VectorXd v, const std::string &what) {
    const double n = v.norm();
    require(n > 0.0 && std::isfinite(n), ErrorCode::Validation, what + " has zero norm");
    return v / n;
}

} // namespace

// Bundles

std::string
encode_bundle(const SceneBundle &bundle) {
    const std::size_t n = bundle.scene.size();
    if (bundle.pseudo_features)
        require(std::size_t(bundle.pseudo_features->rows()) == n, ErrorCode::Validation,
                "pseudo features do not match the scene");
    if (bundle.codebook)
        require(bundle.codebook->point_count() == n, ErrorCode::Validation,
                "codebook does not match the scene");
    if (bundle.instances)
        bundle.instances->validate(n);

    std::ostringstream manifest;
    manifest << "instsplat-bundle\n"
             << "version " << kBundleVersion << "\n"
             << "points " << n << "\n"
             << "cameras " << bundle.cameras.size() << "\n"
             << "features " << (bundle.pseudo_features ? 1 : 0) << "\n"
             << "codebook " << (bundle.codebook ? 1 : 0) << "\n"
             << "instances " << (bundle.instances ? 1 : 0) << "\n"
             << "end\n";
    Writer w;
    w.bytes(manifest.str());
    put_block(w, "PNTS", encode_points(bundle.scene));
    put_block(w, "CAMS", encode_cameras(bundle.cameras));
    if (bundle.pseudo_features)
        put_block(w, "FEAT", encode_features(*bundle.pseudo_features));
    if (bundle.codebook)
        put_block(w, "CDBK", encode_codebook(*bundle.codebook));
    if (bundle.instances)
        put_block(w, "INST", encode_instances(*bundle.instances));
    return std::move(w.str());
}

SceneBundle
decode_bundle(std::string_view bytes) {
    std::map<std::string, std::uint64_t> header;
    std::size_t pos  = 0;
    bool magic       = false;
    bool terminated  = false;
    while (pos < bytes.size()) {
        const std::size_t eol = bytes.find('\n', pos);
        require(eol != std::string_view::npos, ErrorCode::Parse, "manifest is truncated");
        const std::string line(bytes.substr(pos, eol - pos));
        pos = eol + 1;
        if (!magic) {
            require(line == "instsplat-bundle", ErrorCode::Parse, "not a scene bundle");
            magic = true;
            continue;
        }
        if (line == "end") {
            terminated = true;
            break;
        }
        std::istringstream fields(line);
        std::string key;
        std::uint64_t value = 0;
        require(bool(fields >> key >> value), ErrorCode::Parse, "bad manifest line: " + line);
        header[key] = value;
    }
    require(magic && terminated, ErrorCode::Parse, "manifest is truncated");
    require(header.count("version") == 1, ErrorCode::Parse, "manifest lacks a version");
    require(header["version"] <= kBundleVersion, ErrorCode::Version,
            "bundle version " + std::to_string(header["version"]) + " is newer than supported " +
                std::to_string(kBundleVersion));

    std::map<std::string, std::string_view> blocks;
    Reader r(bytes.substr(pos), "bundle");
    while (!r.done()) {
        const std::string tag(r.take(4));
        const std::uint64_t length = r.u64();
        require(length <= r.remaining(), ErrorCode::Parse, "block " + tag + " is truncated");
        require(blocks.count(tag) == 0, ErrorCode::Parse, "duplicate block " + tag);
        blocks[tag] = r.take(std::size_t(length));
    }

    auto expect = [&](const char *tag, const char *key) {
        const bool declared = header[key] != 0;
        require(declared == (blocks.count(tag) == 1), ErrorCode::Parse,
                std::string("block ") + tag + " is missing or undeclared");
        return declared;
    };
    require(blocks.count("PNTS") == 1, ErrorCode::Parse, "bundle has no points block");
    require(blocks.count("CAMS") == 1, ErrorCode::Parse, "bundle has no cameras block");

    SceneBundle out;
    out.scene   = decode_points(blocks["PNTS"]);
    out.cameras = decode_cameras(blocks["CAMS"]);
    require(out.scene.size() == header["points"], ErrorCode::Validation,
            "point count disagrees with the manifest");
    require(out.cameras.size() == header["cameras"], ErrorCode::Validation,
            "camera count disagrees with the manifest");
    const std::size_t n = out.scene.size();
    if (expect("FEAT", "features")) {
        out.pseudo_features = decode_features(blocks["FEAT"]);
        require(std::size_t(out.pseudo_features->rows()) == n, ErrorCode::Validation,
                "features block does not match the points");
    }
    if (expect("CDBK", "codebook")) {
        out.codebook = decode_codebook(blocks["CDBK"]);
        require(out.codebook->point_count() == n, ErrorCode::Validation,
                "codebook block does not match the points");
    }
    if (expect("INST", "instances")) {
        out.instances = decode_instances(blocks["INST"]);
        out.instances->validate(n);
    }
    return out;
}

void
save_bundle(const fs::path &path, const SceneBundle &bundle) {
    write_file(path, encode_bundle(bundle));
}

SceneBundle
load_bundle(const fs::path &path) {
    return decode_bundle(read_file(path));
}

// Masks

std::vector<ViewMasks>
load_masks(const fs::path &dir, std::span<const Camera> cameras) {
    require(fs::is_directory(dir), ErrorCode::Io, "mask directory not found: " + dir.string());
    static const std::regex pattern(R"(view_(\d+)_mask_(\d+)\.(png|pgm))");
    std::map<std::uint32_t, std::map<std::uint32_t, fs::path>> found;
    for (const auto &entry : fs::directory_iterator(dir)) {
        std::smatch m;
        const std::string name = entry.path().filename().string();
        if (!entry.is_regular_file() || !std::regex_match(name, m, pattern))
            continue;
        const auto view = std::uint32_t(std::stoul(m[1].str()));
        const auto mask = std::uint32_t(std::stoul(m[2].str()));
        require(found[view].count(mask) == 0, ErrorCode::Validation,
                "duplicate mask file for view " + m[1].str() + " mask " + m[2].str());
        found[view][mask] = entry.path();
    }

    std::vector<ViewMasks> out;
    for (const auto &[view, files] : found) {
        if (!cameras.empty())
            require(view < cameras.size(), ErrorCode::Validation,
                    "mask refers to unknown view " + std::to_string(view));
        ViewMasks vm;
        vm.view = view;
        for (const auto &[index, path] : files) {
            InstanceMask im;
            im.mask    = to_bool_map(read_image(path));
            im.view_id = view;
            if (!cameras.empty())
                require(im.mask.width == cameras[view].width &&
                            im.mask.height == cameras[view].height,
                        ErrorCode::Validation, path.filename().string() +
                                                   " does not match its camera resolution");
            fs::path sidecar = path;
            sidecar.replace_extension(".emb");
            if (fs::exists(sidecar))
                im.embedding = read_embedding_sidecar(sidecar);
            vm.masks.push_back(std::move(im));
        }
        out.push_back(std::move(vm));
    }
    return out;
}

void
save_masks(const fs::path &dir, std::span<const ViewMasks> views) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    require(!ec, ErrorCode::Io, "cannot create " + dir.string());
    for (const ViewMasks &vm : views) {
        for (std::size_t m = 0; m < vm.masks.size(); ++m) {
            const std::string stem =
                "view_" + std::to_string(vm.view) + "_mask_" + std::to_string(m);
            write_image(dir / (stem + ".png"), to_image8(vm.masks[m].mask));
            if (vm.masks[m].embedding)
                write_embedding_sidecar(dir / (stem + ".emb"), *vm.masks[m].embedding);
        }
    }
}

// Embeddings

LoadedEmbeddings
load_embeddings(const fs::path &path) {
    const std::string bytes = read_file(path);
    Reader r(bytes, "embedding file");
    require(r.take(4) == "IEMB", ErrorCode::Parse, "not an embedding file");
    const std::size_t count = r.u32();
    const std::uint32_t dim = r.u32();
    require(dim == std::uint32_t(kEmbeddingDim), ErrorCode::Validation,
            "embedding dimension " + std::to_string(dim) + " is not " +
                std::to_string(kEmbeddingDim));
    require(count <= r.remaining() / (4 * std::size_t(dim)), ErrorCode::Parse,
            "embedding file is truncated");

    LoadedEmbeddings out;
    out.embeddings.resize(count);
    for (std::size_t k = 0; k < count; ++k) {
        Eigen::VectorXd v(dim);
        for (std::uint32_t i = 0; i < dim; ++i)
            v[i] = r.f32();
        const double norm = v.norm();
        require(norm > 0.0 && std::isfinite(norm), ErrorCode::Validation,
                "embedding " + std::to_string(k) + " has zero norm");
        if (std::abs(norm - 1.0) > 1e-2)
            out.warnings.push_back("embedding " + std::to_string(k) + " had norm " +
                                   std::to_string(norm) + "; renormalized");
        out.embeddings[k].vector = v / norm;
        out.embeddings[k].label  = std::to_string(k);
    }
    if (!r.done()) {
        require(r.take(4) == "LBLS", ErrorCode::Parse, "unknown section after embeddings");
        for (Embedding &e : out.embeddings) {
            const std::size_t len = r.count32(1);
            e.label               = std::string(r.take(len));
        }
        require(r.done(), ErrorCode::Parse, "embedding file has trailing bytes");
    }
    return out;
}

void
save_embeddings(const fs::path &path, std::span<const Embedding> embeddings) {
    Writer w;
    w.bytes("IEMB");
    w.u32(std::uint32_t(embeddings.size()));
    w.u32(std::uint32_t(kEmbeddingDim));
    for (const Embedding &e : embeddings) {
        require(e.vector.size() == kEmbeddingDim, ErrorCode::Validation,
                "embedding has the wrong dimension");
        for (Eigen::Index i = 0; i < e.vector.size(); ++i)
            w.f32(e.vector[i]);
    }
    w.bytes("LBLS");
    for (const Embedding &e : embeddings) {
        w.u32(std::uint32_t(e.label.size()));
        w.bytes(e.label);
    }
    write_file(path, w.str());
}

Eigen::VectorXd
read_embedding_sidecar(const fs::path &path) {
    const std::string bytes = read_file(path);
    require(sidecar_float_count(bytes.size()) == std::uint32_t(kEmbeddingDim) &&
                bytes.size() % 4 == 0,
            ErrorCode::Validation, path.filename().string() + " does not hold 512 floats");
    Reader r(bytes, "embedding sidecar");
    Eigen::VectorXd v(kEmbeddingDim);
    for (int i = 0; i < kEmbeddingDim; ++i)
        v[i] = r.f32();
    return normalized_or_throw(std::move(v), path.filename().string());
}

void
write_embedding_sidecar(const fs::path &path, const Eigen::VectorXd &embedding) {
    require(embedding.size() == kEmbeddingDim, ErrorCode::Validation,
            "embedding has the wrong dimension");
    Writer w;
    for (Eigen::Index i = 0; i < embedding.size(); ++i)
        w.f32(embedding[i]);
    write_file(path, w.str());
}

// Images

std::string
encode_png(const Image8 &image) {
    require(image.channels == 1 || image.channels == 3, ErrorCode::Validation,
            "images must have 1 or 3 channels");
    require(image.width > 0 && image.height > 0 &&
                image.pixels.size() ==
                    std::size_t(image.width) * std::size_t(image.height) * image.channels,
            ErrorCode::Validation, "image buffer does not match its shape");
    png_image desc;
    std::memset(&desc, 0, sizeof(desc));
    desc.version = PNG_IMAGE_VERSION;
    desc.width   = png_uint_32(image.width);
    desc.height  = png_uint_32(image.height);
    desc.format  = image.channels == 1 ? PNG_FORMAT_GRAY : PNG_FORMAT_RGB;
    png_alloc_size_t size = 0;
    require(png_image_write_to_memory(&desc, nullptr, &size, 0, image.pixels.data(), 0, nullptr),
            ErrorCode::Io, std::string("png encode failed: ") + desc.message);
    std::string out(size, '\0');
    require(png_image_write_to_memory(&desc, out.data(), &size, 0, image.pixels.data(), 0, nullptr),
            ErrorCode::Io, std::string("png encode failed: ") + desc.message);
    out.resize(size);
    return out;
}

Image8
decode_png(std::string_view bytes) {
    png_image desc;
    std::memset(&desc, 0, sizeof(desc));
    desc.version = PNG_IMAGE_VERSION;
    require(png_image_begin_read_from_memory(&desc, bytes.data(), bytes.size()), ErrorCode::Parse,
            std::string("png decode failed: ") + desc.message);
    const bool gray = (desc.format & PNG_FORMAT_FLAG_COLOR) == 0;
    desc.format     = gray ? PNG_FORMAT_GRAY : PNG_FORMAT_RGB;
    Image8 out;
    out.width    = int(desc.width);
    out.height   = int(desc.height);
    out.channels = gray ? 1 : 3;
    out.pixels.resize(PNG_IMAGE_SIZE(desc));
    if (!png_image_finish_read(&desc, nullptr, out.pixels.data(), 0, nullptr)) {
        const std::string message = desc.message;
        png_image_free(&desc);
        fail(ErrorCode::Parse, "png decode failed: " + message);
    }
    return out;
}

namespace {

Image8
decode_pgm(std::string_view bytes) {
    std::size_t pos = 0;
    auto token = [&]() {
        while (pos < bytes.size()) {
            if (bytes[pos] == '#') {
                while (pos < bytes.size() && bytes[pos] != '\n')
                    ++pos;
            } else if (std::isspace(static_cast<unsigned char>(bytes[pos]))) {
                ++pos;
            } else {
                break;
            }
        }
        const std::size_t start = pos;
        while (pos < bytes.size() && !std::isspace(static_cast<unsigned char>(bytes[pos])))
            ++pos;
        require(pos > start, ErrorCode::Parse, "pgm header is truncated");
        return bytes.substr(start, pos - start);
    };
    auto number = [&]() {
        const auto t = token();
        int v        = 0;
        const auto r = std::from_chars(t.data(), t.data() + t.size(), v);
        require(r.ec == std::errc() && r.ptr == t.data() + t.size(), ErrorCode::Parse,
                "bad number in pgm header");
        return v;
    };
    const auto magic = token();
    require(magic == "P5" || magic == "P2", ErrorCode::Parse, "unsupported pgm variant");
    Image8 out;
    out.width    = number();
    out.height   = number();
    const int mx = number();
    require(out.width > 0 && out.height > 0 && mx > 0 && mx < 256, ErrorCode::Parse,
            "unsupported pgm dimensions");
    const std::size_t n = std::size_t(out.width) * std::size_t(out.height);
    out.pixels.resize(n);
    if (magic == "P5") {
        ++pos; // single whitespace after maxval
        require(bytes.size() >= pos + n, ErrorCode::Parse, "pgm data is truncated");
        for (std::size_t i = 0; i < n; ++i)
            out.pixels[i] = std::uint8_t(bytes[pos + i]);
    } else {
        for (std::size_t i = 0; i < n; ++i)
            out.pixels[i] = std::uint8_t(number());
    }
    if (mx != 255) {
        for (auto &p : out.pixels)
            p = std::uint8_t(std::lround(255.0 * p / mx));
    }
    return out;
}

std::string
lower_extension(const fs::path &path) {
    std::string ext = path.extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(),
                   [](unsigned char c) { return char(std::tolower(c)); });
    return ext;
}

} // namespace

Image8
read_image(const fs::path &path) {
    const std::string ext = lower_extension(path);
    const std::string bytes = read_file(path);
    if (ext == ".png")
        return decode_png(bytes);
    if (ext == ".pgm")
        return decode_pgm(bytes);
    fail(ErrorCode::Validation, "unsupported image type: " + path.string());
}

void
write_image(const fs::path &path, const Image8 &image) {
    const std::string ext = lower_extension(path);
    if (ext == ".pgm") {
        require(image.channels == 1, ErrorCode::Validation, "pgm output must be grayscale");
        std::string out = "P5\n" + std::to_string(image.width) + " " +
                          std::to_string(image.height) + "\n255\n";
        out.append(image.pixels.begin(), image.pixels.end());
        write_file(path, out);
        return;
    }
    require(ext == ".png", ErrorCode::Validation, "unsupported image type: " + path.string());
    write_file(path, encode_png(image));
}

Image8
to_image8(const ColorImage &image) {
    Image8 out{image.width, image.height, 3, {}};
    out.pixels.resize(image.pixel_count() * 3);
    for (std::size_t p = 0; p < image.pixel_count(); ++p)
        for (int c = 0; c < 3; ++c)
            out.pixels[3 * p + c] = std::uint8_t(
                std::lround(255.0 * std::clamp(image.values(Eigen::Index(p), c), 0.0, 1.0)));
    return out;
}

Image8
to_image8(const BoolMap &mask) {
    Image8 out{mask.width, mask.height, 1, {}};
    out.pixels.resize(mask.values.size());
    for (std::size_t p = 0; p < mask.values.size(); ++p)
        out.pixels[p] = mask.values[p] ? 255 : 0;
    return out;
}

BoolMap
to_bool_map(const Image8 &image) {
    BoolMap out = BoolMap::filled(image.width, image.height, false);
    const std::size_t ch = std::size_t(image.channels);
    require(image.pixels.size() == out.values.size() * ch, ErrorCode::Validation,
            "image buffer does not match its shape");
    for (std::size_t p = 0; p < out.values.size(); ++p) {
        unsigned sum = 0;
        for (std::size_t c = 0; c < ch; ++c)
            sum += image.pixels[p * ch + c];
        out.values[p] = sum >= 128u * ch ? 1 : 0;
    }
    return out;
}

Eigen::Matrix<double, kFeatureDim, 3>
pca_projection(const FeatureMap &map) {
    using Mat6 = Eigen::Matrix<double, kFeatureDim, kFeatureDim>;
    Mat6 cov   = Mat6::Zero();
    if (map.values.rows() > 0) {
        const Feature mean            = map.values.colwise().mean().transpose();
        const FeatureMatrix centered  = map.values.rowwise() - mean.transpose();
        cov = centered.transpose() * centered / double(map.values.rows());
    }
    Eigen::SelfAdjointEigenSolver<Mat6> solver(cov);
    Eigen::Matrix<double, kFeatureDim, 3> out;
    for (int k = 0; k < 3; ++k) {
        // Eigenvalues come back ascending.
        Feature axis = solver.eigenvectors().col(kFeatureDim - 1 - k);
        Eigen::Index big = 0;
        axis.cwiseAbs().maxCoeff(&big);
        if (axis[big] < 0.0)
            axis = -axis;
        out.col(k) = axis;
    }
    return out;
}

Image8
feature_pca_image(const FeatureMap &map) {
    const auto projection = pca_projection(map);
    const Eigen::Index n  = map.values.rows();
    Eigen::Matrix<double, Eigen::Dynamic, 3> coords(n, 3);
    if (n > 0) {
        const Feature mean = map.values.colwise().mean().transpose();
        coords = (map.values.rowwise() - mean.transpose()) * projection;
    }
    Image8 out{map.width, map.height, 3, std::vector<std::uint8_t>(std::size_t(n) * 3, 0)};
    for (int c = 0; c < 3; ++c) {
        if (n == 0)
            break;
        const double lo = coords.col(c).minCoeff();
        const double hi = coords.col(c).maxCoeff();
        if (!(hi - lo > 1e-12))
            continue;
        for (Eigen::Index p = 0; p < n; ++p)
            out.pixels[std::size_t(p) * 3 + c] =
                std::uint8_t(std::lround(255.0 * (coords(p, c) - lo) / (hi - lo)));
    }
    return out;
}

void
export_image(const ColorImage &image, const fs::path &path) {
    write_image(path, to_image8(image));
}

void
export_feature_pca(const FeatureMap &map, const fs::path &path) {
    write_image(path, feature_pca_image(map));
}

// Labels and raw files

std::vector<int>
load_labels(const fs::path &path) {
    std::istringstream in(read_file(path));
    std::vector<int> out;
    std::string line;
    std::size_t number = 0;
    while (std::getline(in, line)) {
        ++number;
        const auto first = line.find_first_not_of(" \t\r");
        if (first == std::string::npos)
            continue;
        const auto last = line.find_last_not_of(" \t\r");
        int v           = 0;
        const char *b   = line.data() + first;
        const char *e   = line.data() + last + 1;
        const auto r    = std::from_chars(b, e, v);
        require(r.ec == std::errc() && r.ptr == e, ErrorCode::Parse,
                "bad label on line " + std::to_string(number));
        out.push_back(v);
    }
    return out;
}

void
save_labels(const fs::path &path, std::span<const int> labels) {
    std::string out;
    for (int v : labels)
        out += std::to_string(v) + "\n";
    write_file(path, out);
}

std::string
read_file(const fs::path &path) {
    require(fs::exists(path), ErrorCode::NotFound, "no such file " + path.string());
    std::ifstream in(path, std::ios::binary);
    require(bool(in), ErrorCode::Io, "cannot open " + path.string());
    std::ostringstream buf;
    buf << in.rdbuf();
    require(!in.bad(), ErrorCode::Io, "cannot read " + path.string());
    return std::move(buf).str();
}

void
write_file(const fs::path &path, std::string_view bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    require(bool(out), ErrorCode::Io, "cannot open " + path.string() + " for writing");
    out.write(bytes.data(), std::streamsize(bytes.size()));
    out.close();
    require(!out.fail(), ErrorCode::Io, "cannot write " + path.string());
}

} // namespace instsplat
