#include <catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>
#include <map>

#include "dimdm/io/embeddings.hpp"
#include "dimdm/io/mnist.hpp"
#include "dimdm/io/synth.hpp"

using namespace dimdm;
using namespace dimdm::io;

namespace {

namespace fs = std::filesystem;

fs::path scratch(const std::string& name) {
    const fs::path dir = fs::temp_directory_path() / "dimdm_test_io";
    fs::create_directories(dir);
    return dir / name;
}

void write_bytes(const fs::path& p, const std::vector<unsigned char>& b) {
    std::ofstream f(p, std::ios::binary | std::ios::trunc);
    f.write(reinterpret_cast<const char*>(b.data()), static_cast<std::streamsize>(b.size()));
}

void put_be32(std::vector<unsigned char>& b, std::uint32_t v) {
    for (int s = 24; s >= 0; s -= 8) b.push_back(static_cast<unsigned char>(v >> s));
}

std::vector<unsigned char> idx_images(std::uint32_t magic, std::uint32_t n, std::uint32_t rows, std::uint32_t cols,
                                      const std::vector<unsigned char>& pixels) {
    std::vector<unsigned char> b;
    put_be32(b, magic);
    put_be32(b, n);
    put_be32(b, rows);
    put_be32(b, cols);
    b.insert(b.end(), pixels.begin(), pixels.end());
    return b;
}

std::vector<unsigned char> idx_labels(std::uint32_t n, const std::vector<unsigned char>& labels) {
    std::vector<unsigned char> b;
    put_be32(b, idx_labels_magic);
    put_be32(b, n);
    b.insert(b.end(), labels.begin(), labels.end());
    return b;
}

std::vector<std::string> lines_of(const fs::path& p) {
    std::ifstream f(p);
    std::vector<std::string> out;
    for (std::string l; std::getline(f, l);) out.push_back(l);
    return out;
}

} // namespace

TEST_CASE("hand-built IDX fixture is recovered exactly", "[mnist]") {
    // Two 3x3 images, pixel k of image i is 10*i + k.
    std::vector<unsigned char> px;
    for (int i = 0; i < 2; ++i)
        for (int k = 0; k < 9; ++k) px.push_back(static_cast<unsigned char>(10 * i + k));
    const auto ip = scratch("fixture-images"), lp = scratch("fixture-labels");
    write_bytes(ip, idx_images(idx_images_magic, 2, 3, 3, px));
    write_bytes(lp, idx_labels(2, {7, 3}));

    SECTION("no crop") {
        const auto ds = load_mnist_idx(ip.string(), lp.string(), {0});
        REQUIRE(ds.n() == 2);
        REQUIRE(ds.dim() == 9);
        REQUIRE(ds.shape.height == 3);
        REQUIRE(ds.shape.width == 3);
        for (int i = 0; i < 2; ++i)
            for (int k = 0; k < 9; ++k) CHECK(ds.inputs(i, k) == (10.0 * i + k) / 255.0);
        CHECK(*ds.labels == std::vector<int>{7, 3});
        ds.validate();
    }
    SECTION("center crop keeps the middle pixel") {
        const auto ds = load_mnist_idx(ip.string(), lp.string(), {1});
        REQUIRE(ds.dim() == 1);
        CHECK(ds.inputs(0, 0) == 4.0 / 255.0);
        CHECK(ds.inputs(1, 0) == 14.0 / 255.0);
    }
}

TEST_CASE("IDX errors are distinct", "[mnist]") {
    const std::vector<unsigned char> px(2 * 4, 0);
    const auto ip = scratch("err-images"), lp = scratch("err-labels");
    write_bytes(lp, idx_labels(2, {0, 1}));

    SECTION("label file passed as images") {
        write_bytes(ip, idx_images(idx_labels_magic, 2, 2, 2, px));
        CHECK_THROWS_AS(load_mnist_idx(ip.string(), lp.string(), {0}), MagicMismatch);
    }
    SECTION("truncated pixels") {
        write_bytes(ip, idx_images(idx_images_magic, 2, 2, 2, std::vector<unsigned char>(5, 0)));
        CHECK_THROWS_AS(load_mnist_idx(ip.string(), lp.string(), {0}), TruncatedFile);
    }
    SECTION("truncated header") {
        write_bytes(ip, {0, 0, 8});
        CHECK_THROWS_AS(load_mnist_idx(ip.string(), lp.string(), {0}), TruncatedFile);
    }
    SECTION("image and label counts differ") {
        write_bytes(ip, idx_images(idx_images_magic, 2, 2, 2, px));
        write_bytes(lp, idx_labels(1, {0}));
        CHECK_THROWS_AS(load_mnist_idx(ip.string(), lp.string(), {0}), CountMismatch);
    }
    SECTION("missing file") {
        CHECK_THROWS_AS(load_mnist_idx(scratch("absent").string(), lp.string(), {0}), IoError);
    }
}

TEST_CASE("bundled MNIST files load with the 24x24 crop", "[mnist]") {
    const std::string dir = std::string(DIMDM_TEST_DATA_DIR) + "/mnist";
    const auto ds = load_mnist_idx(dir + "/images-idx3-ubyte.gz", dir + "/labels-idx1-ubyte.gz");
    CHECK(ds.dim() == 24 * 24);
    CHECK(ds.num_classes() == 10);
    CHECK(ds.inputs.minCoeff() >= 0.0);
    CHECK(ds.inputs.maxCoeff() <= 1.0);
    ds.validate();
}

TEST_CASE("synthetic datasets", "[synth]") {
    SECTION("blob class means sit at the centres") {
        auto rng = make_rng(11);
        const auto ds = synth_dataset({SynthKind::gaussian_blobs, 10000, 2, 2, 5.0, 1.0}, rng);
        ds.validate();
        for (int c = 0; c < 2; ++c) {
            Eigen::RowVectorXd sum = Eigen::RowVectorXd::Zero(2);
            int count = 0;
            for (Eigen::Index i = 0; i < ds.n(); ++i)
                if ((*ds.labels)[static_cast<std::size_t>(i)] == c) {
                    sum += ds.inputs.row(i);
                    ++count;
                }
            const double centre = c == 0 ? -5.0 : 5.0;
            for (int j = 0; j < 2; ++j) CHECK(std::abs(sum(j) / count - centre) < 0.05);
        }
    }
    SECTION("uniform cube stays in [0,1]") {
        auto rng = make_rng(3);
        const auto ds = synth_dataset({SynthKind::uniform_cube, 500, 2}, rng);
        CHECK(ds.inputs.minCoeff() >= 0.0);
        CHECK(ds.inputs.maxCoeff() <= 1.0);
        CHECK_FALSE(ds.labels.has_value());
    }
    SECTION("same seed, same data") {
        for (auto kind : {SynthKind::gaussian_blobs, SynthKind::uniform_cube, SynthKind::two_moons}) {
            auto a = make_rng(5), b = make_rng(5);
            const auto x = synth_dataset({kind, 64, 2}, a), y = synth_dataset({kind, 64, 2}, b);
            CHECK(x.inputs == y.inputs);
            CHECK(x.labels == y.labels);
        }
    }
    SECTION("bad requests") {
        auto rng = make_rng(0);
        CHECK_THROWS_AS(synth_dataset({SynthKind::uniform_cube, 0, 2}, rng), DomainError);
        CHECK_THROWS_AS(synth_dataset({SynthKind::two_moons, 10, 3}, rng), DomainError);
    }
}

TEST_CASE("csv export layout", "[embeddings]") {
    Matrix v(2, 2);
    v << 0.5, -1.25, 3.0, 0.1;
    const auto p = scratch("small.csv");
    export_embeddings(EmbeddingBatch(v, HeadKind::gaussian_head), std::vector<int>{1, 0}, p.string(), EmbeddingFormat::csv);
    const auto lines = lines_of(p);
    REQUIRE(lines.size() == 3);
    CHECK(lines[0] == "dim_0,dim_1,label");
    CHECK(lines[1] == "0.5,-1.25,1");
    CHECK(lines[2] == "3,0.1,0");

    export_embeddings(EmbeddingBatch(v, HeadKind::gaussian_head), std::nullopt, p.string(), EmbeddingFormat::csv);
    CHECK(lines_of(p)[0] == "dim_0,dim_1");
}

TEST_CASE("export then import is lossless at float32 precision", "[embeddings]") {
    auto rng = make_rng(21);
    Matrix wide(37, 3), unit(37, 3);
    for (Eigen::Index i = 0; i < wide.size(); ++i) {
        wide.data()[i] = rng.normal() * 1e3;
        unit.data()[i] = rng.uniform();
    }
    std::vector<int> labels;
    for (int i = 0; i < 37; ++i) labels.push_back(i % 4);

    for (auto [v, head] : {std::pair{wide, HeadKind::raw}, std::pair{unit, HeadKind::uniform_head}})
        for (auto format : {EmbeddingFormat::csv, EmbeddingFormat::raw_f32}) {
            const auto p = scratch(std::string("round.") + std::string(to_string(format)));
            fs::remove(sidecar_path(p.string()));
            export_embeddings(EmbeddingBatch(v, head), labels, p.string(), format);
            const auto back = import_embeddings(p.string());
            CHECK(back.embeddings.values() == v.cast<float>().cast<double>());
            CHECK(back.labels == std::optional<std::vector<int>>(labels));
            if (format == EmbeddingFormat::raw_f32) {
                CHECK(back.embeddings.head() == head);
                CHECK(fs::file_size(p) == 37u * 3u * 4u);
            }
        }
}

TEST_CASE("raw sidecar records n, d, head and labels", "[embeddings]") {
    Matrix v = Matrix::Zero(4, 2);
    const auto p = scratch("side.bin");
    export_embeddings(EmbeddingBatch(v, HeadKind::gaussian_head), std::nullopt, p.string(), EmbeddingFormat::raw_f32);
    std::map<std::string, std::string> kv;
    for (const auto& l : lines_of(sidecar_path(p.string()))) {
        const auto eq = l.find(" = ");
        REQUIRE(eq != std::string::npos);
        kv[l.substr(0, eq)] = l.substr(eq + 3);
    }
    CHECK(kv["format"] == "raw_f32");
    CHECK(kv["n"] == "4");
    CHECK(kv["d"] == "2");
    CHECK(kv["head"] == "gaussian_head");
    CHECK(kv["labels"] == "none");
    CHECK(fs::file_size(p) == std::stoull(kv["n"]) * std::stoull(kv["d"]) * 4);
    CHECK_FALSE(import_embeddings(p.string()).labels.has_value());
}

TEST_CASE("malformed embedding files", "[embeddings]") {
    SECTION("non-numeric csv cell names row and column") {
        const auto p = scratch("bad.csv");
        fs::remove(sidecar_path(p.string()));
        {
            std::ofstream f(p);
            f << "dim_0,dim_1\n1,2\n3,abc\n";
        }
        try {
            import_embeddings(p.string());
            FAIL("expected a parse error");
        } catch (const ParseError& e) {
            const std::string msg = e.what();
            CHECK(msg.find("row 2") != std::string::npos);
            CHECK(msg.find("column 2") != std::string::npos);
        }
    }
    SECTION("ragged csv row") {
        const auto p = scratch("ragged.csv");
        {
            std::ofstream f(p);
            f << "dim_0,dim_1\n1,2\n3\n";
        }
        CHECK_THROWS_AS(import_embeddings(p.string()), ParseError);
    }
    SECTION("bad csv header") {
        const auto p = scratch("header.csv");
        {
            std::ofstream f(p);
            f << "x,y\n1,2\n";
        }
        CHECK_THROWS_AS(import_embeddings(p.string()), ParseError);
    }
    SECTION("sidecar n disagrees with byte length") {
        const auto p = scratch("short.bin");
        export_embeddings(EmbeddingBatch(Matrix::Ones(5, 2), HeadKind::raw), std::nullopt, p.string(), EmbeddingFormat::raw_f32);
        fs::resize_file(p, 5 * 2 * 4 - 4);
        CHECK_THROWS_AS(import_embeddings(p.string()), ParseError);
    }
    SECTION("sidecar missing a field") {
        const auto p = scratch("nofield.bin");
        export_embeddings(EmbeddingBatch(Matrix::Ones(1, 1), HeadKind::raw), std::nullopt, p.string(), EmbeddingFormat::raw_f32);
        {
            std::ofstream m(sidecar_path(p.string()), std::ios::trunc);
            m << "format = raw_f32\nn = 1\n";
        }
        CHECK_THROWS_AS(import_embeddings(p.string()), ParseError);
    }
    SECTION("label count must match") {
        CHECK_THROWS_AS(export_embeddings(EmbeddingBatch(Matrix::Ones(3, 1), HeadKind::raw), std::vector<int>{1}, scratch("x.csv").string(),
                                          EmbeddingFormat::csv),
                        DomainError);
    }
    SECTION("unwritable path") {
        CHECK_THROWS_AS(export_embeddings(EmbeddingBatch(Matrix::Ones(1, 1), HeadKind::raw), std::nullopt, "/nonexistent/dir/e.csv",
                                          EmbeddingFormat::csv),
                        IoError);
    }
}
