#pragma once

// Embedding files.
//   csv      header `dim_0,...,dim_{d-1}[,label]`, then one row per sample
//            (values printed and read back at float32 precision)
//   raw_f32  little-endian float32, row-major, plus a `<path>.meta` sidecar:
//              format = raw_f32
//              n = <rows>
//              d = <cols>
//              head = <gaussian_head|uniform_head|raw>
//              labels = <file name next to the data, or none>
//            labels are stored one integer per line.

#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "dimdm/core/config.hpp"
#include "dimdm/core/error.hpp"
#include "dimdm/core/types.hpp"

namespace dimdm::io {

enum class EmbeddingFormat { csv, raw_f32 };

inline std::string_view to_string(EmbeddingFormat f) { return f == EmbeddingFormat::csv ? "csv" : "raw_f32"; }

inline std::optional<EmbeddingFormat> parse_embedding_format(std::string_view s) {
    if (s == "csv") return EmbeddingFormat::csv;
    if (s == "raw_f32") return EmbeddingFormat::raw_f32;
    return std::nullopt;
}

struct LabelledEmbeddings {
    EmbeddingBatch embeddings;
    std::optional<std::vector<int>> labels;
};

inline std::string sidecar_path(const std::string& path) { return path + ".meta"; }

namespace detail {

/// Shortest text that reads back to the same float32 value.
inline std::string format_float(float v) {
    char buf[32];
    for (int prec = 6; prec <= 9; ++prec) {
        std::snprintf(buf, sizeof buf, "%.*g", prec, static_cast<double>(v));
        if (std::strtof(buf, nullptr) == v) break;
    }
    return buf;
}

inline void check_labels(const EmbeddingBatch& emb, const std::optional<std::vector<int>>& labels) {
    if (labels)
        dimdm::detail::require(static_cast<Eigen::Index>(labels->size()) == emb.n(), "label count differs from the embedding count");
}

inline std::vector<std::string> split_csv(const std::string& line) {
    std::vector<std::string> out;
    std::string cell;
    std::istringstream is(line);
    while (std::getline(is, cell, ',')) out.push_back(cell);
    if (!line.empty() && line.back() == ',') out.emplace_back();
    return out;
}

inline std::string strip(std::string s) {
    while (!s.empty() && (s.back() == '\r' || s.back() == ' ' || s.back() == '\t')) s.pop_back();
    std::size_t b = 0;
    while (b < s.size() && (s[b] == ' ' || s[b] == '\t')) ++b;
    return s.substr(b);
}

template <typename T>
bool parse_number(const std::string& s, T& out) {
    const char* end = s.data() + s.size();
    const auto [ptr, ec] = std::from_chars(s.data(), end, out);
    return !s.empty() && ec == std::errc() && ptr == end;
}

} // namespace detail

inline void export_embeddings(const EmbeddingBatch& emb, const std::optional<std::vector<int>>& labels, const std::string& path,
                              EmbeddingFormat format) {
    detail::check_labels(emb, labels);
    const Matrix& v = emb.values();
    if (format == EmbeddingFormat::csv) {
        std::ofstream f(path, std::ios::binary | std::ios::trunc);
        if (!f) throw IoError("cannot write embeddings '" + path + "'");
        for (Eigen::Index j = 0; j < v.cols(); ++j) f << (j ? "," : "") << "dim_" << j;
        if (labels) f << ",label";
        f << '\n';
        for (Eigen::Index i = 0; i < v.rows(); ++i) {
            for (Eigen::Index j = 0; j < v.cols(); ++j) f << (j ? "," : "") << detail::format_float(static_cast<float>(v(i, j)));
            if (labels) f << ',' << (*labels)[static_cast<std::size_t>(i)];
            f << '\n';
        }
        if (!f) throw IoError("failed writing embeddings '" + path + "'");
        return;
    }

    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw IoError("cannot write embeddings '" + path + "'");
    std::vector<unsigned char> bytes(static_cast<std::size_t>(v.size()) * 4);
    std::size_t at = 0;
    for (Eigen::Index i = 0; i < v.rows(); ++i)
        for (Eigen::Index j = 0; j < v.cols(); ++j) {
            const float x = static_cast<float>(v(i, j));
            std::uint32_t u;
            std::memcpy(&u, &x, 4);
            for (int b = 0; b < 4; ++b) bytes[at++] = static_cast<unsigned char>(u >> (8 * b));
        }
    f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!f) throw IoError("failed writing embeddings '" + path + "'");

    const std::string label_name = std::filesystem::path(path).filename().string() + ".labels";
    if (labels) {
        const std::string lp = (std::filesystem::path(path).parent_path() / label_name).string();
        std::ofstream lf(lp, std::ios::binary | std::ios::trunc);
        if (!lf) throw IoError("cannot write labels '" + lp + "'");
        for (int l : *labels) lf << l << '\n';
        if (!lf) throw IoError("failed writing labels '" + lp + "'");
    }
    std::ofstream m(sidecar_path(path), std::ios::binary | std::ios::trunc);
    if (!m) throw IoError("cannot write sidecar '" + sidecar_path(path) + "'");
    m << "format = raw_f32\n"
      << "n = " << v.rows() << '\n'
      << "d = " << v.cols() << '\n'
      << "head = " << to_string(emb.head()) << '\n'
      << "labels = " << (labels ? label_name : std::string("none")) << '\n';
    if (!m) throw IoError("failed writing sidecar '" + sidecar_path(path) + "'");
}

namespace detail {

inline LabelledEmbeddings import_csv(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open embeddings '" + path + "'");
    std::string line;
    if (!std::getline(f, line)) throw ParseError("'" + path + "': missing header row");
    const auto header = split_csv(strip(line));
    std::size_t d = header.size();
    const bool has_labels = d > 0 && strip(header.back()) == "label";
    if (has_labels) --d;
    if (d == 0) throw ParseError("'" + path + "': header has no dim_ columns");
    for (std::size_t j = 0; j < d; ++j)
        if (strip(header[j]) != "dim_" + std::to_string(j))
            throw ParseError("'" + path + "': header column " + std::to_string(j + 1) + " is '" + header[j] + "', expected 'dim_" +
                             std::to_string(j) + "'");

    std::vector<double> values;
    std::vector<int> labels;
    std::size_t row = 0;
    while (std::getline(f, line)) {
        line = strip(line);
        if (line.empty()) continue;
        ++row;
        const auto cells = split_csv(line);
        const std::size_t want = d + (has_labels ? 1 : 0);
        if (cells.size() != want)
            throw ParseError("'" + path + "': row " + std::to_string(row) + " has " + std::to_string(cells.size()) + " cells, expected " +
                             std::to_string(want));
        for (std::size_t j = 0; j < d; ++j) {
            float x;
            if (!parse_number(strip(cells[j]), x) || !std::isfinite(x))
                throw ParseError("'" + path + "': row " + std::to_string(row) + ", column " + std::to_string(j + 1) + " (" +
                                 header[j] + "): non-numeric cell '" + cells[j] + "'");
            values.push_back(x);
        }
        if (has_labels) {
            int l;
            if (!parse_number(strip(cells[d]), l))
                throw ParseError("'" + path + "': row " + std::to_string(row) + ", column " + std::to_string(d + 1) +
                                 " (label): non-integer cell '" + cells[d] + "'");
            labels.push_back(l);
        }
    }
    Matrix m(static_cast<Eigen::Index>(row), static_cast<Eigen::Index>(d));
    for (std::size_t i = 0; i < row; ++i)
        for (std::size_t j = 0; j < d; ++j) m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = values[i * d + j];
    LabelledEmbeddings out{EmbeddingBatch(std::move(m), HeadKind::raw), std::nullopt};
    if (has_labels) out.labels = std::move(labels);
    return out;
}

inline LabelledEmbeddings import_raw(const std::string& path) {
    std::ifstream mf(sidecar_path(path), std::ios::binary);
    if (!mf) throw IoError("cannot open sidecar '" + sidecar_path(path) + "'");
    std::map<std::string, std::string> meta;
    std::string line;
    int lineno = 0;
    while (std::getline(mf, line)) {
        ++lineno;
        line = strip(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw ParseError("'" + sidecar_path(path) + "': line " + std::to_string(lineno) + " is not 'key = value'");
        meta[strip(line.substr(0, eq))] = strip(line.substr(eq + 1));
    }
    auto field = [&](const std::string& k) {
        auto it = meta.find(k);
        if (it == meta.end()) throw ParseError("'" + sidecar_path(path) + "': missing field '" + k + "'");
        return it->second;
    };
    if (field("format") != "raw_f32") throw ParseError("'" + sidecar_path(path) + "': format is not raw_f32");
    long long n = 0, d = 0;
    if (!parse_number(field("n"), n) || n < 0) throw ParseError("'" + sidecar_path(path) + "': n is not a non-negative integer");
    if (!parse_number(field("d"), d) || d < 1) throw ParseError("'" + sidecar_path(path) + "': d is not a positive integer");
    const auto head = parse_head_kind(field("head"));
    if (!head) throw ParseError("'" + sidecar_path(path) + "': unknown head '" + field("head") + "'");

    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open embeddings '" + path + "'");
    std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    const auto expected = static_cast<std::size_t>(n) * static_cast<std::size_t>(d) * 4;
    if (bytes.size() != expected)
        throw ParseError("'" + path + "': sidecar declares " + std::to_string(n) + " x " + std::to_string(d) + " floats (" +
                         std::to_string(expected) + " bytes) but the file has " + std::to_string(bytes.size()) + " bytes");
    Matrix m(n, d);
    std::size_t at = 0;
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = 0; j < d; ++j) {
            std::uint32_t u = 0;
            for (int b = 0; b < 4; ++b) u |= static_cast<std::uint32_t>(bytes[at++]) << (8 * b);
            float x;
            std::memcpy(&x, &u, 4);
            m(i, j) = x;
        }
    if (!m.allFinite()) throw ParseError("'" + path + "': non-finite value in embeddings");
    LabelledEmbeddings out{EmbeddingBatch(std::move(m), *head), std::nullopt};
    if (const auto ln = field("labels"); ln != "none") {
        const std::string lp = (std::filesystem::path(path).parent_path() / ln).string();
        std::ifstream lf(lp, std::ios::binary);
        if (!lf) throw IoError("cannot open labels '" + lp + "'");
        std::vector<int> labels;
        int row = 0;
        while (std::getline(lf, line)) {
            ++row;
            line = strip(line);
            if (line.empty()) continue;
            int l;
            if (!parse_number(line, l)) throw ParseError("'" + lp + "': row " + std::to_string(row) + ": non-integer label '" + line + "'");
            labels.push_back(l);
        }
        if (static_cast<long long>(labels.size()) != n)
            throw ParseError("'" + lp + "': " + std::to_string(labels.size()) + " labels for " + std::to_string(n) + " embeddings");
        out.labels = std::move(labels);
    }
    return out;
}

} // namespace detail

/// Reads either format: raw_f32 when `<path>.meta` exists, csv otherwise.
inline LabelledEmbeddings import_embeddings(const std::string& path) {
    if (std::filesystem::exists(sidecar_path(path))) return detail::import_raw(path);
    return detail::import_csv(path);
}

} // namespace dimdm::io
