#pragma once

// Capacity sweep: for every noise level and repetition, train, audit the
// eval-mode embeddings against the Gaussian target, and probe them.

#include <algorithm>
#include <cmath>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include "dimdm/core/config.hpp"
#include "dimdm/core/error.hpp"
#include "dimdm/core/rng.hpp"
#include "dimdm/metrics/audit.hpp"
#include "dimdm/metrics/probe.hpp"
#include "dimdm/oracle/analytic.hpp"
#include "dimdm/training/trainer.hpp"

namespace dimdm::experiment {

struct SweepRow {
    double sigma = 0.0;
    int repetition = 0;
    std::uint64_t seed = 0;
    double capacity_nats = 0.0;
    double bound_nats = 0.0;
    double bound_stderr_nats = 0.0;
    double dagostino_pearson = 0.0;
    double shapiro_wilk = 0.0;
    double henze_zirkler = 0.0;
    double gnb_accuracy = 0.0;
    double knn_accuracy = 0.0;
    double mlp_accuracy = 0.0;
    double silhouette = 0.0;
};

/// Mean and half-width of the 99% normal-approximation interval.
struct Interval {
    double mean = 0.0;
    double half_width = 0.0;
};

struct SweepPoint {
    double sigma = 0.0;
    double capacity_nats = 0.0;
    Interval bound_nats, dagostino_pearson, shapiro_wilk, henze_zirkler, gnb_accuracy, knn_accuracy, mlp_accuracy, silhouette;
};

struct SweepResult {
    std::vector<SweepRow> rows;
    std::vector<SweepPoint> points;

    std::string rows_tsv() const;
    std::string points_tsv() const;
};

struct SweepOptions {
    training::TrainOptions train;
    metrics::ProjectionSettings projection;
    std::function<void(const SweepRow&)> on_row;
};

inline constexpr double ci99_z = 2.5758293035489004;

inline Interval interval(const std::vector<double>& v) {
    const double n = static_cast<double>(v.size());
    double mean = 0;
    for (double x : v) mean += x / n;
    if (v.size() < 2) return {mean, 0.0};
    double ss = 0;
    for (double x : v) ss += (x - mean) * (x - mean);
    return {mean, ci99_z * std::sqrt(ss / (n - 1) / n)};
}

/// Seed of point (sigma index i, repetition r), derived from the base seed.
inline std::uint64_t child_seed(std::uint64_t base, std::size_t sigma_index, int repetition) {
    return make_rng(base).fork(1 + sigma_index * 100003 + static_cast<std::size_t>(repetition)).key();
}

/// One trained point: seed and sigma replace those of base_cfg.
inline SweepRow sweep_point(TrainConfig cfg, double sigma, int repetition, std::uint64_t seed, const Dataset& data,
                            const SweepOptions& opt) {
    dimdm::detail::require(data.labels.has_value(), "capacity sweep needs a labelled dataset");
    cfg.noise = NoiseSpec::gaussian(sigma);
    cfg.seed = seed;
    SweepRow row;
    row.sigma = sigma;
    row.repetition = repetition;
    row.seed = seed;
    row.capacity_nats = oracle::gaussian_channel_capacity(cfg.d, sigma);

    auto res = training::train<float>(cfg, data, opt.train);
    if (!res.log.epochs.empty()) {
        row.bound_nats = res.log.epochs.back().bound_nats;
        row.bound_stderr_nats = res.log.epochs.back().stderr_nats;
    }
    const EmbeddingBatch emb = training::embed_dataset(res.state.encoder, data);

    auto rng = make_rng(seed).fork(7);
    auto audit_rng = rng.fork(0);
    const auto report = metrics::audit(emb, metrics::Target::gaussian, {opt.projection, std::nullopt}, audit_rng);
    row.dagostino_pearson = report.dagostino_pearson;
    row.shapiro_wilk = report.shapiro_wilk;
    row.henze_zirkler = report.henze_zirkler;

    // The three probes share one split: same rng key for each.
    const auto probe_key = rng.fork(1);
    auto probe = [&](metrics::ProbeMethod m) {
        auto r = probe_key;
        return metrics::downstream_probe(emb, *data.labels, m, r);
    };
    const auto gnb = probe(metrics::ProbeMethod::gnb);
    row.gnb_accuracy = gnb.accuracy;
    row.silhouette = gnb.silhouette;
    row.knn_accuracy = probe(metrics::ProbeMethod::knn).accuracy;
    row.mlp_accuracy = probe(metrics::ProbeMethod::mlp).accuracy;
    return row;
}

/// Trains `repetitions` runs per sigma (sorted ascending) with child seeds
/// derived from base_cfg.seed; rows come out in (sigma, repetition) order.
inline SweepResult run_capacity_sweep(const TrainConfig& base_cfg, std::vector<double> sigmas, int repetitions, const Dataset& data,
                                      const SweepOptions& opt = {}) {
    dimdm::detail::require(!sigmas.empty(), "capacity sweep needs at least one sigma");
    dimdm::detail::require(repetitions >= 1, "capacity sweep needs repetitions >= 1");
    for (double s : sigmas) dimdm::detail::require(s > 0 && std::isfinite(s), "sweep sigmas must be positive and finite");
    dimdm::detail::require(base_cfg.noise.kind == NoiseKind::gaussian, "capacity sweep varies Gaussian noise");
    ensure_valid(base_cfg);
    std::sort(sigmas.begin(), sigmas.end());
    sigmas.erase(std::unique(sigmas.begin(), sigmas.end()), sigmas.end());

    SweepResult out;
    for (std::size_t i = 0; i < sigmas.size(); ++i) {
        for (int r = 0; r < repetitions; ++r) {
            const auto seed = child_seed(base_cfg.seed, i, r);
            try {
                out.rows.push_back(sweep_point(base_cfg, sigmas[i], r, seed, data, opt));
            } catch (const TrainingError& e) {
                std::ostringstream msg;
                msg << "sweep point sigma=" << sigmas[i] << " repetition=" << r << ": " << e.what();
                throw TrainingError(msg.str(), e.epoch(), e.step());
            }
            if (opt.on_row) opt.on_row(out.rows.back());
        }
        SweepPoint p;
        p.sigma = sigmas[i];
        p.capacity_nats = out.rows.back().capacity_nats;
        auto collect = [&](double SweepRow::*field) {
            std::vector<double> v;
            for (const auto& row : out.rows)
                if (row.sigma == sigmas[i]) v.push_back(row.*field);
            return interval(v);
        };
        p.bound_nats = collect(&SweepRow::bound_nats);
        p.dagostino_pearson = collect(&SweepRow::dagostino_pearson);
        p.shapiro_wilk = collect(&SweepRow::shapiro_wilk);
        p.henze_zirkler = collect(&SweepRow::henze_zirkler);
        p.gnb_accuracy = collect(&SweepRow::gnb_accuracy);
        p.knn_accuracy = collect(&SweepRow::knn_accuracy);
        p.mlp_accuracy = collect(&SweepRow::mlp_accuracy);
        p.silhouette = collect(&SweepRow::silhouette);
        out.points.push_back(p);
    }
    return out;
}

inline std::string SweepResult::rows_tsv() const {
    using dimdm::detail::format_double;
    std::ostringstream os;
    os << "sigma\trepetition\tseed\tcapacity_nats\tbound_nats\tbound_stderr_nats\tdagostino_pearson\tshapiro_wilk\thenze_zirkler\t"
          "gnb_accuracy\tknn_accuracy\tmlp_accuracy\tsilhouette\n";
    for (const auto& r : rows)
        os << format_double(r.sigma) << '\t' << r.repetition << '\t' << r.seed << '\t' << format_double(r.capacity_nats) << '\t'
           << format_double(r.bound_nats) << '\t' << format_double(r.bound_stderr_nats) << '\t' << format_double(r.dagostino_pearson)
           << '\t' << format_double(r.shapiro_wilk) << '\t' << format_double(r.henze_zirkler) << '\t' << format_double(r.gnb_accuracy)
           << '\t' << format_double(r.knn_accuracy) << '\t' << format_double(r.mlp_accuracy) << '\t' << format_double(r.silhouette)
           << '\n';
    return os.str();
}

inline std::string SweepResult::points_tsv() const {
    using dimdm::detail::format_double;
    std::ostringstream os;
    const char* names[] = {"bound_nats", "dagostino_pearson", "shapiro_wilk", "henze_zirkler",
                           "gnb_accuracy", "knn_accuracy", "mlp_accuracy", "silhouette"};
    os << "sigma\tcapacity_nats";
    for (const char* n : names) os << '\t' << n << "_mean\t" << n << "_ci99";
    os << '\n';
    for (const auto& p : points) {
        os << format_double(p.sigma) << '\t' << format_double(p.capacity_nats);
        for (const Interval* iv : {&p.bound_nats, &p.dagostino_pearson, &p.shapiro_wilk, &p.henze_zirkler, &p.gnb_accuracy,
                                   &p.knn_accuracy, &p.mlp_accuracy, &p.silhouette})
            os << '\t' << format_double(iv->mean) << '\t' << format_double(iv->half_width);
        os << '\n';
    }
    return os.str();
}

} // namespace dimdm::experiment
