#pragma once

#include <cstdio>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "dimdm/core/config.hpp"
#include "dimdm/core/error.hpp"
#include "dimdm/core/types.hpp"

namespace dimdm::training {

struct EpochRecord {
    int epoch = 0;
    double bound_nats = 0.0;
    double stderr_nats = 0.0;
    double capacity_nats = 0.0;
    double loss = 0.0;
    double seconds = 0.0;
};

/// Per-dimension moments of eval-mode embeddings.
struct EmbeddingMoments {
    Vector mean;
    Vector variance;
};

struct TrainLog {
    double capacity_nats = 0.0;
    std::vector<EpochRecord> epochs;
    std::optional<EmbeddingMoments> eval_moments;
    std::string checkpoint;

    /// Tab-separated table. Wall time is the only non-deterministic column,
    /// so it is written only on request.
    std::string to_tsv(bool with_seconds = false) const {
        std::ostringstream os;
        os << "epoch\tbound_nats\tstderr_nats\tcapacity_nats\tloss" << (with_seconds ? "\tseconds" : "") << '\n';
        for (const auto& r : epochs) {
            os << r.epoch << '\t' << dimdm::detail::format_double(r.bound_nats) << '\t' << dimdm::detail::format_double(r.stderr_nats) << '\t'
               << dimdm::detail::format_double(r.capacity_nats) << '\t' << dimdm::detail::format_double(r.loss);
            if (with_seconds) os << '\t' << dimdm::detail::format_double(r.seconds);
            os << '\n';
        }
        return os.str();
    }

    void write_tsv(const std::string& path, bool with_seconds = false) const {
        std::ofstream f(path, std::ios::binary);
        if (!f) throw IoError("cannot write training log '" + path + "'");
        f << to_tsv(with_seconds);
        if (!f) throw IoError("failed writing training log '" + path + "'");
    }

    /// Flat key = value summary of the run (capacity, final bound, eval moments).
    std::string summary() const {
        std::ostringstream os;
        os << "capacity_nats = " << dimdm::detail::format_double(capacity_nats) << '\n';
        os << "epochs = " << epochs.size() << '\n';
        if (!epochs.empty()) {
            os << "final_bound_nats = " << dimdm::detail::format_double(epochs.back().bound_nats) << '\n';
            os << "final_stderr_nats = " << dimdm::detail::format_double(epochs.back().stderr_nats) << '\n';
        }
        if (eval_moments)
            for (Eigen::Index i = 0; i < eval_moments->mean.size(); ++i) {
                os << "eval_mean_" << i << " = " << dimdm::detail::format_double(eval_moments->mean(i)) << '\n';
                os << "eval_variance_" << i << " = " << dimdm::detail::format_double(eval_moments->variance(i)) << '\n';
            }
        if (!checkpoint.empty()) os << "checkpoint = " << checkpoint << '\n';
        return os.str();
    }
};

} // namespace dimdm::training
