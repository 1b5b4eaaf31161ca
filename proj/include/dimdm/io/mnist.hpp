#pragma once

// IDX container reader (big-endian header; raw or gzip-compressed).
//   images: magic 2051, n, rows, cols, then n*rows*cols unsigned bytes
//   labels: magic 2049, n, then n unsigned bytes

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include <zlib.h>

#include "dimdm/core/error.hpp"
#include "dimdm/io/dataset.hpp"

namespace dimdm::io {

class MagicMismatch : public ParseError {
public:
    using ParseError::ParseError;
};
class TruncatedFile : public ParseError {
public:
    using ParseError::ParseError;
};
class CountMismatch : public ParseError {
public:
    using ParseError::ParseError;
};

inline constexpr std::uint32_t idx_images_magic = 2051;
inline constexpr std::uint32_t idx_labels_magic = 2049;

namespace detail {

/// Whole file, transparently decompressed when gzip.
inline std::vector<unsigned char> read_maybe_gzip(const std::string& path) {
    gzFile f = gzopen(path.c_str(), "rb");
    if (!f) throw IoError("cannot open '" + path + "'");
    std::vector<unsigned char> out;
    std::array<unsigned char, 1 << 16> buf{};
    for (;;) {
        const int got = gzread(f, buf.data(), static_cast<unsigned>(buf.size()));
        if (got < 0) {
            int err = 0;
            const std::string msg = gzerror(f, &err);
            gzclose(f);
            throw TruncatedFile("'" + path + "': " + msg);
        }
        if (got == 0) break;
        out.insert(out.end(), buf.begin(), buf.begin() + got);
    }
    gzclose(f);
    return out;
}

inline std::uint32_t be32(const std::vector<unsigned char>& b, std::size_t at) {
    return (std::uint32_t{b[at]} << 24) | (std::uint32_t{b[at + 1]} << 16) | (std::uint32_t{b[at + 2]} << 8) | b[at + 3];
}

} // namespace detail

struct MnistOptions {
    /// Center crop to this size (0 keeps the stored size).
    int crop = 24;
};

/// Parses an IDX image/label pair into a dataset with pixels scaled to [0,1].
inline Dataset load_mnist_idx(const std::string& images_path, const std::string& labels_path, MnistOptions opt = {}) {
    const auto img = detail::read_maybe_gzip(images_path);
    const auto lab = detail::read_maybe_gzip(labels_path);

    if (img.size() < 16) throw TruncatedFile("'" + images_path + "': shorter than an IDX image header");
    if (const auto m = detail::be32(img, 0); m != idx_images_magic)
        throw MagicMismatch("'" + images_path + "': magic " + std::to_string(m) + ", expected " + std::to_string(idx_images_magic));
    if (lab.size() < 8) throw TruncatedFile("'" + labels_path + "': shorter than an IDX label header");
    if (const auto m = detail::be32(lab, 0); m != idx_labels_magic)
        throw MagicMismatch("'" + labels_path + "': magic " + std::to_string(m) + ", expected " + std::to_string(idx_labels_magic));

    const std::size_t n = detail::be32(img, 4), rows = detail::be32(img, 8), cols = detail::be32(img, 12);
    const std::size_t nl = detail::be32(lab, 4);
    if (img.size() < 16 + n * rows * cols)
        throw TruncatedFile("'" + images_path + "': header declares " + std::to_string(n) + " images but the file is shorter");
    if (lab.size() < 8 + nl) throw TruncatedFile("'" + labels_path + "': header declares " + std::to_string(nl) + " labels but the file is shorter");
    if (n != nl)
        throw CountMismatch("image count " + std::to_string(n) + " differs from label count " + std::to_string(nl));

    const int crop_h = opt.crop > 0 ? opt.crop : static_cast<int>(rows);
    const int crop_w = opt.crop > 0 ? opt.crop : static_cast<int>(cols);
    dimdm::detail::require(crop_h <= static_cast<int>(rows) && crop_w <= static_cast<int>(cols), "crop larger than the images");
    const std::size_t oy = (rows - static_cast<std::size_t>(crop_h)) / 2, ox = (cols - static_cast<std::size_t>(crop_w)) / 2;

    Dataset ds;
    ds.name = "mnist";
    ds.shape = {crop_h, crop_w, 1};
    ds.inputs.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(crop_h) * crop_w);
    ds.labels.emplace(n);
    for (std::size_t i = 0; i < n; ++i) {
        const unsigned char* base = img.data() + 16 + i * rows * cols;
        for (int y = 0; y < crop_h; ++y)
            for (int x = 0; x < crop_w; ++x)
                ds.inputs(static_cast<Eigen::Index>(i), y * crop_w + x) = base[(oy + static_cast<std::size_t>(y)) * cols + ox + static_cast<std::size_t>(x)] / 255.0;
        (*ds.labels)[i] = lab[8 + i];
    }
    return ds;
}

} // namespace dimdm::io
