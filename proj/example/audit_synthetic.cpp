// Audits three synthetic samples against both targets. Only the matching
// pairs should come out with large averaged p-values.

#include <cstdio>

#include "dimdm/metrics/audit.hpp"

using namespace dimdm;

int main() {
    auto rng = make_rng(1);
    const Eigen::Index n = 5000;
    Matrix gauss(n, 2), cube(n, 2), blobs(n, 2);
    for (Eigen::Index i = 0; i < n; ++i)
        for (int j = 0; j < 2; ++j) {
            gauss(i, j) = rng.normal();
            cube(i, j) = rng.uniform();
            blobs(i, j) = rng.normal() * 0.3 + (i % 2 ? 1.0 : -1.0);
        }

    std::printf("%-10s %-9s %12s %12s %12s\n", "sample", "target", "dagostino", "shapiro", "henze");
    auto row = [&](const char* name, const Matrix& x, metrics::Target t) {
        auto r = make_rng(7);
        const auto rep = metrics::audit(EmbeddingBatch(x, HeadKind::raw), t, {}, r);
        std::printf("%-10s %-9s %12.3g %12.3g %12.3g\n", name, std::string(metrics::to_string(t)).c_str(), rep.dagostino_pearson,
                    rep.shapiro_wilk, rep.henze_zirkler);
    };
    row("gaussian", gauss, metrics::Target::gaussian);
    row("cube", cube, metrics::Target::gaussian);
    row("cube", cube, metrics::Target::uniform);
    row("blobs", blobs, metrics::Target::gaussian);
}
