#pragma once

// Binary checkpoint container (little-endian):
//   "DIMDMCKP" u32 version
//   str config text, encoder spec, u64 step, u32 scalar size
//   u32 count, then per parameter: str name, u64 rows, u64 cols, data
//   u32 count, then per batch norm: u64 channels, running mean, running var
//   u64 adam steps, then first and second moments per parameter
// Strings are u64 length + bytes. Files are written to a temporary path and
// renamed into place.

#include <cstdint>
#include <bit>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <type_traits>

#include "dimdm/core/config.hpp"
#include "dimdm/core/error.hpp"
#include "dimdm/training/trainer.hpp"

namespace dimdm::training {

inline constexpr std::uint32_t checkpoint_version = 1;
inline constexpr char checkpoint_magic[8] = {'D', 'I', 'M', 'D', 'M', 'C', 'K', 'P'};

namespace detail {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

class Writer {
public:
    explicit Writer(std::ofstream& f) : f_(f) {}
    template <typename T>
    void pod(T v) {
        static_assert(std::is_trivially_copyable_v<T>);
        f_.write(reinterpret_cast<const char*>(&v), sizeof v);
    }
    void str(const std::string& s) {
        pod<std::uint64_t>(s.size());
        f_.write(s.data(), static_cast<std::streamsize>(s.size()));
    }
    template <typename M>
    void data(const M& m) {
        f_.write(reinterpret_cast<const char*>(m.data()), static_cast<std::streamsize>(m.size() * sizeof(typename M::Scalar)));
    }

private:
    std::ofstream& f_;
};

class Reader {
public:
    Reader(std::ifstream& f, std::string path) : f_(f), path_(std::move(path)) {}
    template <typename T>
    T pod() {
        T v{};
        f_.read(reinterpret_cast<char*>(&v), sizeof v);
        check();
        return v;
    }
    std::string str() {
        const auto n = pod<std::uint64_t>();
        if (n > (std::uint64_t{1} << 24)) fail("implausible string length");
        std::string s(n, '\0');
        f_.read(s.data(), static_cast<std::streamsize>(n));
        check();
        return s;
    }
    template <typename M>
    void data(M& m) {
        f_.read(reinterpret_cast<char*>(m.data()), static_cast<std::streamsize>(m.size() * sizeof(typename M::Scalar)));
        check();
    }
    [[noreturn]] void fail(const std::string& what) const { throw ParseError("checkpoint '" + path_ + "': " + what); }

private:
    void check() const {
        if (!f_) fail("truncated file");
    }
    std::ifstream& f_;
    std::string path_;
};

inline void write_spec(Writer& w, const EncoderSpec& s) {
    w.pod<std::uint32_t>(static_cast<std::uint32_t>(s.backbone));
    w.pod<std::int32_t>(s.input.height);
    w.pod<std::int32_t>(s.input.width);
    w.pod<std::int32_t>(s.input.channels);
    w.pod<std::int32_t>(s.d);
    w.pod<std::uint32_t>(static_cast<std::uint32_t>(s.head));
    w.pod<std::uint32_t>(static_cast<std::uint32_t>(s.hidden.size()));
    for (int h : s.hidden) w.pod<std::int32_t>(h);
}

inline EncoderSpec read_spec(Reader& r) {
    EncoderSpec s;
    const auto backbone = r.pod<std::uint32_t>();
    if (backbone > 2) r.fail("unknown backbone kind");
    s.backbone = static_cast<BackboneKind>(backbone);
    s.input.height = r.pod<std::int32_t>();
    s.input.width = r.pod<std::int32_t>();
    s.input.channels = r.pod<std::int32_t>();
    s.d = r.pod<std::int32_t>();
    const auto head = r.pod<std::uint32_t>();
    if (head > 2) r.fail("unknown head kind");
    s.head = static_cast<HeadKind>(head);
    const auto nh = r.pod<std::uint32_t>();
    if (nh > 64) r.fail("implausible hidden layer count");
    s.hidden.resize(nh);
    for (auto& h : s.hidden) h = r.pod<std::int32_t>();
    return s;
}

} // namespace detail

template <typename S>
void save_checkpoint(TrainState<S>& st, const std::string& path) {
    const std::string tmp = path + ".tmp";
    {
        std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
        if (!f) throw IoError("cannot open '" + tmp + "' for writing");
        detail::Writer w(f);
        f.write(checkpoint_magic, sizeof checkpoint_magic);
        w.pod(checkpoint_version);
        w.str(format_config(st.config));
        detail::write_spec(w, st.encoder.spec());
        w.pod<std::uint64_t>(st.step);
        w.pod<std::uint32_t>(sizeof(S));

        const auto params = st.parameters();
        w.pod<std::uint32_t>(static_cast<std::uint32_t>(params.size()));
        for (auto* p : params) {
            w.str(p->name);
            w.pod<std::uint64_t>(static_cast<std::uint64_t>(p->value.rows()));
            w.pod<std::uint64_t>(static_cast<std::uint64_t>(p->value.cols()));
            w.data(p->value);
        }
        const auto bns = st.encoder.batch_norms();
        w.pod<std::uint32_t>(static_cast<std::uint32_t>(bns.size()));
        for (auto* bn : bns) {
            w.pod<std::uint64_t>(static_cast<std::uint64_t>(bn->channels()));
            w.data(bn->running_mean());
            w.data(bn->running_var());
        }
        auto& opt = st.optimizer;
        w.pod<std::uint64_t>(opt.steps());
        const bool has_moments = opt.first_moments().size() == params.size();
        w.pod<std::uint8_t>(has_moments ? 1 : 0);
        if (has_moments)
            for (std::size_t i = 0; i < params.size(); ++i) {
                w.data(opt.first_moments()[i]);
                w.data(opt.second_moments()[i]);
            }
        f.flush();
        if (!f) throw IoError("failed writing checkpoint '" + tmp + "'");
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) throw IoError("cannot move checkpoint into place at '" + path + "': " + ec.message());
}

template <typename S>
TrainState<S> load_checkpoint(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open checkpoint '" + path + "'");
    detail::Reader r(f, path);
    char magic[8];
    f.read(magic, sizeof magic);
    if (!f || std::memcmp(magic, checkpoint_magic, sizeof magic) != 0) r.fail("not a checkpoint file");
    const auto version = r.pod<std::uint32_t>();
    if (version != checkpoint_version) r.fail("unsupported format version " + std::to_string(version));
    const TrainConfig cfg = parse_config(r.str(), TrainConfig::paper_scale());
    const EncoderSpec spec = detail::read_spec(r);
    const auto step = r.pod<std::uint64_t>();
    if (r.pod<std::uint32_t>() != sizeof(S)) r.fail("scalar type differs from the requested one");

    auto rng = make_rng(0);
    TrainState<S> st = make_state<S>(cfg, spec, rng);
    st.step = step;
    auto params = st.parameters();
    if (r.pod<std::uint32_t>() != params.size()) r.fail("parameter count mismatch");
    for (auto* p : params) {
        const auto name = r.str();
        const auto rows = r.pod<std::uint64_t>(), cols = r.pod<std::uint64_t>();
        if (name != p->name || rows != static_cast<std::uint64_t>(p->value.rows()) || cols != static_cast<std::uint64_t>(p->value.cols()))
            r.fail("parameter '" + name + "' does not match the architecture");
        r.data(p->value);
    }
    auto bns = st.encoder.batch_norms();
    if (r.pod<std::uint32_t>() != bns.size()) r.fail("batch-norm count mismatch");
    for (auto* bn : bns) {
        if (r.pod<std::uint64_t>() != static_cast<std::uint64_t>(bn->channels())) r.fail("batch-norm width mismatch");
        r.data(bn->running_mean());
        r.data(bn->running_var());
    }
    auto& opt = st.optimizer;
    opt.set_steps(r.pod<std::uint64_t>());
    if (r.pod<std::uint8_t>() == 1) {
        opt.first_moments().clear();
        opt.second_moments().clear();
        for (auto* p : params) {
            Mat<S> m(p->value.rows(), p->value.cols()), v(p->value.rows(), p->value.cols());
            r.data(m);
            r.data(v);
            opt.first_moments().push_back(std::move(m));
            opt.second_moments().push_back(std::move(v));
        }
    }
    return st;
}

} // namespace dimdm::training
