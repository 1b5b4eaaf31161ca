// dimdm: command-line front end. Every command is a thin wrapper over the
// library; its output depends only on the config file, the flags and the seed.
//
// Exit codes: 0 success, 1 validation error, 2 runtime/training error,
// 3 I/O error.

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "dimdm/core/alloc.hpp"
#include "dimdm/core/config.hpp"
#include "dimdm/experiment/sweep.hpp"
#include "dimdm/io/embeddings.hpp"
#include "dimdm/io/mnist.hpp"
#include "dimdm/io/synth.hpp"
#include "dimdm/metrics/audit.hpp"
#include "dimdm/metrics/probe.hpp"
#include "dimdm/oracle/analytic.hpp"
#include "dimdm/training/trainer.hpp"

namespace fs = std::filesystem;
using namespace dimdm;

namespace {

enum Exit { ok = 0, validation = 1, runtime = 2, io_failure = 3 };

struct Args {
    // config
    std::string config;
    std::optional<std::uint64_t> seed;
    bool paper_scale = false;
    std::optional<double> sigma, epsilon;
    std::string head, bound;
    std::optional<int> epochs;
    // data
    std::string data, synth;
    std::int64_t synth_n = 1000;
    int synth_d = 2;
    // inputs and outputs
    std::string out = ".";
    std::string format = "csv";
    std::string embeddings, checkpoint;
    bool quiet = false;
    // audit
    std::string target;
    metrics::ProjectionSettings projection;
    std::optional<double> kl_noise_output, kl_objective;
    // probe
    std::string method = "all";
    // sweep
    std::vector<double> sigmas{0.03, 0.1, 0.3, 1.0};
    int repetitions = 5;
    // oracle
    int d = 2;
    int classes = 10;
};

template <typename T>
T parsed_or_fail(std::optional<T> v, const std::string& flag, const std::string& text) {
    if (!v) throw DomainError(flag + ": unknown value '" + text + "'");
    return *v;
}

/// Preset, then the config file, then individual flags.
TrainConfig resolve_config(const Args& a) {
    TrainConfig cfg = a.paper_scale ? TrainConfig::paper_scale() : TrainConfig::desk_scale();
    if (!a.config.empty()) cfg = load_config(a.config, cfg);
    if (a.sigma && a.epsilon) throw DomainError("--sigma and --epsilon are mutually exclusive");
    if (!a.head.empty()) {
        const auto kind = a.head == "gaussian" ? std::optional(NoiseKind::gaussian)
                          : a.head == "uniform" ? std::optional(NoiseKind::uniform)
                                                : std::nullopt;
        cfg.noise.kind = parsed_or_fail(kind, "--head", a.head);
        if (cfg.noise.kind == NoiseKind::uniform && !a.epsilon && cfg.noise.scale >= 0.5) cfg.noise.scale = 0.05;
    }
    if (a.sigma) {
        if (a.head == "uniform") throw DomainError("--sigma applies to the gaussian head; use --epsilon");
        cfg.noise = {NoiseKind::gaussian, *a.sigma};
    }
    if (a.epsilon) {
        if (a.head == "gaussian") throw DomainError("--epsilon applies to the uniform head; use --sigma");
        cfg.noise = {NoiseKind::uniform, *a.epsilon};
    }
    if (!a.bound.empty()) cfg.bound = parsed_or_fail(parse_bound_kind(a.bound), "--bound", a.bound);
    if (a.epochs) cfg.epochs = *a.epochs;
    if (a.seed) cfg.seed = *a.seed;
    ensure_valid(cfg);
    return cfg;
}

std::string first_existing(const fs::path& dir, std::initializer_list<const char*> names) {
    for (const char* n : names)
        for (const char* ext : {"", ".gz"})
            if (fs::exists(dir / (std::string(n) + ext))) return (dir / (std::string(n) + ext)).string();
    throw IoError("no IDX file '" + std::string(*names.begin()) + "[.gz]' in '" + dir.string() + "'");
}

Dataset load_dataset(const Args& a) {
    if (!a.data.empty() && !a.synth.empty()) throw DomainError("--data and --synth are mutually exclusive");
    if (!a.synth.empty()) {
        io::SynthSpec spec;
        spec.kind = parsed_or_fail(io::parse_synth_kind(a.synth), "--synth", a.synth);
        spec.n = a.synth_n;
        spec.d = a.synth_d;
        auto rng = make_rng(a.seed.value_or(0)).fork(0x5eed);
        return io::synth_dataset(spec, rng);
    }
    if (a.data.empty()) throw DomainError("no dataset: pass --data <mnist dir> or --synth <kind>");
    const fs::path dir(a.data);
    return io::load_mnist_idx(first_existing(dir, {"images-idx3-ubyte", "train-images-idx3-ubyte", "t10k-images-idx3-ubyte"}),
                              first_existing(dir, {"labels-idx1-ubyte", "train-labels-idx1-ubyte", "t10k-labels-idx1-ubyte"}));
}

io::EmbeddingFormat output_format(const Args& a) { return parsed_or_fail(io::parse_embedding_format(a.format), "--format", a.format); }

std::string embeddings_file(const Args& a) {
    return (fs::path(a.out) / (output_format(a) == io::EmbeddingFormat::csv ? "embeddings.csv" : "embeddings.f32")).string();
}

void write_text(const fs::path& p, const std::string& text) {
    std::ofstream f(p, std::ios::binary | std::ios::trunc);
    if (!f) throw IoError("cannot write '" + p.string() + "'");
    f << text;
    if (!f) throw IoError("failed writing '" + p.string() + "'");
}

void ensure_out_dir(const Args& a) {
    std::error_code ec;
    fs::create_directories(a.out, ec);
    if (ec) throw IoError("cannot create output directory '" + a.out + "': " + ec.message());
}

/// Embeddings from --embeddings, or from --checkpoint applied to the dataset.
io::LabelledEmbeddings input_embeddings(const Args& a) {
    if (!a.embeddings.empty() && !a.checkpoint.empty()) throw DomainError("--embeddings and --checkpoint are mutually exclusive");
    if (!a.embeddings.empty()) return io::import_embeddings(a.embeddings);
    if (a.checkpoint.empty()) throw DomainError("pass --embeddings <file> or --checkpoint <file> with a dataset");
    auto st = training::load_checkpoint<float>(a.checkpoint);
    const Dataset data = load_dataset(a);
    return {training::embed_dataset(st.encoder, data), data.labels};
}

int cmd_train(const Args& a) {
    const TrainConfig cfg = resolve_config(a);
    const Dataset data = load_dataset(a);
    ensure_out_dir(a);
    const fs::path out(a.out);
    write_text(out / "config.txt", format_config(cfg));

    training::TrainOptions opt;
    opt.checkpoint_path = (out / "checkpoint.bin").string();
    if (!a.quiet)
        opt.on_epoch = [](const training::EpochRecord& r) {
            std::cerr << "epoch " << r.epoch << "  bound " << r.bound_nats << " +- " << r.stderr_nats << "  capacity " << r.capacity_nats
                      << "  (" << r.seconds << " s)\n";
        };
    auto res = training::train<float>(cfg, data, opt);
    res.log.checkpoint = "checkpoint.bin";
    res.log.write_tsv((out / "train_log.tsv").string());
    write_text(out / "summary.txt", res.log.summary());
    io::export_embeddings(training::embed_dataset(res.state.encoder, data), data.labels, embeddings_file(a), output_format(a));
    std::cout << res.log.summary();
    return ok;
}

int cmd_export(const Args& a) {
    if (a.checkpoint.empty()) throw DomainError("export needs --checkpoint");
    ensure_out_dir(a);
    const auto in = input_embeddings(a);
    const auto path = embeddings_file(a);
    io::export_embeddings(in.embeddings, in.labels, path, output_format(a));
    std::cout << "embeddings = " << path << "\nn = " << in.embeddings.n() << "\nd = " << in.embeddings.d() << '\n';
    return ok;
}

int cmd_audit(const Args& a) {
    const auto in = input_embeddings(a);
    metrics::Target target = in.embeddings.head() == HeadKind::uniform_head ? metrics::Target::uniform : metrics::Target::gaussian;
    if (!a.target.empty()) target = parsed_or_fail(metrics::parse_target(a.target), "--target", a.target);

    metrics::AuditSettings settings{a.projection, std::nullopt};
    if (a.kl_noise_output || a.kl_objective) {
        if (!a.kl_noise_output || !a.kl_objective) throw DomainError("--kl-noise-output and --kl-objective go together");
        const auto scale = target == metrics::Target::gaussian ? a.sigma : a.epsilon;
        if (!scale) throw DomainError(target == metrics::Target::gaussian ? "the KL bound needs --sigma" : "the KL bound needs --epsilon");
        settings.kl = metrics::KlInputs{*a.kl_noise_output, *a.kl_objective, *scale};
    }
    auto rng = make_rng(a.seed.value_or(0));
    const auto report = metrics::audit(in.embeddings, target, settings, rng);
    std::cout << report.to_text();
    if (a.out != ".") {
        ensure_out_dir(a);
        write_text(fs::path(a.out) / "audit.txt", report.to_text());
    }
    return ok;
}

int cmd_probe(const Args& a) {
    const auto in = input_embeddings(a);
    if (!in.labels) throw DomainError("probing needs labelled embeddings");
    std::vector<metrics::ProbeMethod> methods;
    if (a.method == "all")
        methods = {metrics::ProbeMethod::gnb, metrics::ProbeMethod::knn, metrics::ProbeMethod::mlp};
    else
        methods = {parsed_or_fail(metrics::parse_probe_method(a.method), "--method", a.method)};
    std::string text;
    for (auto m : methods) {
        auto rng = make_rng(a.seed.value_or(0));
        text += metrics::downstream_probe(in.embeddings, *in.labels, m, rng).to_text();
    }
    std::cout << text;
    if (a.out != ".") {
        ensure_out_dir(a);
        write_text(fs::path(a.out) / "probe.txt", text);
    }
    return ok;
}

int cmd_sweep(const Args& a) {
    const TrainConfig cfg = resolve_config(a);
    const Dataset data = load_dataset(a);
    ensure_out_dir(a);
    const fs::path out(a.out);
    write_text(out / "config.txt", format_config(cfg));
    experiment::SweepOptions opt;
    opt.projection = a.projection;
    if (!a.quiet)
        opt.on_row = [](const experiment::SweepRow& r) {
            std::cerr << "sigma " << r.sigma << " rep " << r.repetition << "  bound " << r.bound_nats << "  knn " << r.knn_accuracy
                      << "  dp " << r.dagostino_pearson << '\n';
        };
    const auto res = experiment::run_capacity_sweep(cfg, a.sigmas, a.repetitions, data, opt);
    write_text(out / "sweep_rows.tsv", res.rows_tsv());
    write_text(out / "sweep_points.tsv", res.points_tsv());
    std::cout << res.points_tsv();
    return ok;
}

int cmd_oracle(const Args& a) {
    using dimdm::detail::format_double;
    if (a.d < 1) throw DomainError("--d must be positive");
    std::ostringstream os;
    os << "d = " << a.d << '\n';
    if (a.sigma) {
        const double s2 = *a.sigma * *a.sigma;
        os << "sigma = " << format_double(*a.sigma) << '\n'
           << "gaussian_channel_capacity = " << format_double(oracle::gaussian_channel_capacity(a.d, *a.sigma)) << '\n'
           << "gaussian_noise_entropy = "
           << format_double(oracle::gaussian_entropy(Vector::Zero(a.d), s2 * Matrix::Identity(a.d, a.d))) << '\n';
    }
    if (a.epsilon) {
        os << "epsilon = " << format_double(*a.epsilon) << '\n'
           << "uniform_channel_capacity = " << format_double(oracle::uniform_channel_capacity(a.d, *a.epsilon)) << '\n'
           << "uniform_noise_entropy = " << format_double(oracle::uniform_entropy(std::pow(2.0 * *a.epsilon, a.d))) << '\n';
        if (*a.epsilon < 0.5) os << "uniform_channel_exact_mi = " << format_double(oracle::uniform_channel_exact_mi(a.d, *a.epsilon)) << '\n';
    }
    os << "classes = " << a.classes << '\n' << "min_label_capacity = " << format_double(oracle::min_label_capacity(a.classes)) << '\n';
    std::cout << os.str();
    return ok;
}

void add_config_flags(CLI::App* c, Args& a) {
    c->add_option("--config", a.config, "key = value config file (applied over the preset)");
    c->add_option("--seed", a.seed, "root seed");
    c->add_flag("--paper-scale", a.paper_scale, "start from the full-size setting (2000 epochs, joint critic) instead of the desk-scale preset");
    c->add_option("--sigma", a.sigma, "Gaussian noise std (selects the gaussian head)");
    c->add_option("--epsilon", a.epsilon, "uniform noise half-width (selects the uniform head)");
    c->add_option("--head", a.head, "embedding head")->check(CLI::IsMember({"gaussian", "uniform"}));
    c->add_option("--bound", a.bound, "mutual-information bound")->check(CLI::IsMember({"dv", "nwj", "infonce"}));
    c->add_option("--epochs", a.epochs, "override the number of epochs");
}

void add_data_flags(CLI::App* c, Args& a) {
    c->add_option("--data", a.data, "directory with MNIST IDX images/labels (raw or .gz)");
    c->add_option("--synth", a.synth, "synthetic dataset instead of --data")
        ->check(CLI::IsMember({"gaussian_blobs", "uniform_cube", "two_moons"}));
    c->add_option("--n", a.synth_n, "synthetic sample count");
    c->add_option("--synth-d", a.synth_d, "synthetic input dimension");
}

void add_embedding_input_flags(CLI::App* c, Args& a) {
    c->add_option("--embeddings", a.embeddings, "embedding file (csv, or raw_f32 with its .meta sidecar)");
    c->add_option("--checkpoint", a.checkpoint, "checkpoint to embed the dataset with");
    add_data_flags(c, a);
}

void add_projection_flags(CLI::App* c, Args& a) {
    c->add_option("--projections", a.projection.n_projections, "random projections per bootstrap sample");
    c->add_option("--subsample", a.projection.subsample_size, "rows per bootstrap subsample");
    c->add_option("--bootstrap", a.projection.n_bootstrap, "bootstrap subsamples");
}

} // namespace

int main(int argc, char** argv) {
    retain_heap_memory();
    Args a;
    CLI::App app{"Noise-injected InfoMax training and distribution-matching audits"};
    app.require_subcommand(1);

    auto* train = app.add_subcommand("train", "train an encoder; writes config, log, summary, checkpoint and embeddings to --out");
    add_config_flags(train, a);
    add_data_flags(train, a);
    train->add_option("--out", a.out, "output directory");
    train->add_option("--format", a.format, "embedding format")->check(CLI::IsMember({"csv", "raw_f32"}));
    train->add_flag("--quiet", a.quiet, "no per-epoch progress on stderr");

    auto* exp = app.add_subcommand("export", "embed a dataset with a checkpoint");
    add_embedding_input_flags(exp, a);
    exp->add_option("--seed", a.seed, "seed for synthetic data");
    exp->add_option("--out", a.out, "output directory");
    exp->add_option("--format", a.format, "embedding format")->check(CLI::IsMember({"csv", "raw_f32"}));

    auto* aud = app.add_subcommand("audit", "projected normality and Henze-Zirkler audit of embeddings");
    add_embedding_input_flags(aud, a);
    add_projection_flags(aud, a);
    aud->add_option("--seed", a.seed, "audit seed");
    aud->add_option("--target", a.target, "target distribution (default: from the embedding head)")
        ->check(CLI::IsMember({"gaussian", "uniform"}));
    aud->add_option("--kl-noise-output", a.kl_noise_output, "I(Z; f(X)+Z) in nats, for the KL bound");
    aud->add_option("--kl-objective", a.kl_objective, "I(f(X'); f(X)+Z) in nats, for the KL bound");
    aud->add_option("--sigma", a.sigma, "Gaussian noise std, for the KL bound");
    aud->add_option("--epsilon", a.epsilon, "uniform noise half-width, for the KL bound");
    aud->add_option("--out", a.out, "also write audit.txt here");

    auto* prb = app.add_subcommand("probe", "downstream accuracy and silhouette of labelled embeddings");
    add_embedding_input_flags(prb, a);
    prb->add_option("--seed", a.seed, "split and classifier seed");
    prb->add_option("--method", a.method, "probe")->check(CLI::IsMember({"gnb", "knn", "mlp", "all"}));
    prb->add_option("--out", a.out, "also write probe.txt here");

    auto* swp = app.add_subcommand("sweep", "capacity sweep over --sigmas; writes sweep_rows.tsv and sweep_points.tsv");
    add_config_flags(swp, a);
    add_data_flags(swp, a);
    add_projection_flags(swp, a);
    swp->add_option("--sigmas", a.sigmas, "noise levels")->delimiter(',');
    swp->add_option("--repetitions", a.repetitions, "runs per noise level");
    swp->add_option("--out", a.out, "output directory");
    swp->add_flag("--quiet", a.quiet, "no per-run progress on stderr");

    auto* orc = app.add_subcommand("oracle", "closed-form capacities and entropies");
    orc->add_option("--d", a.d, "embedding dimension");
    orc->add_option("--sigma", a.sigma, "Gaussian noise std");
    orc->add_option("--epsilon", a.epsilon, "uniform noise half-width");
    orc->add_option("--classes", a.classes, "number of classes for the label-capacity threshold");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? ok : validation;
    }

    try {
        if (*train) return cmd_train(a);
        if (*exp) return cmd_export(a);
        if (*aud) return cmd_audit(a);
        if (*prb) return cmd_probe(a);
        if (*swp) return cmd_sweep(a);
        if (*orc) return cmd_oracle(a);
    } catch (const IoError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return io_failure;
    } catch (const ParseError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return validation;
    } catch (const DomainError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return validation;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return runtime;
    }
    return ok;
}
