// Prints the noise-channel capacity for a range of noise scales next to the
// label threshold log(10), which shows where the objective can no longer carry
// the class identity.

#include <cstdio>

#include "dimdm/oracle/analytic.hpp"

int main() {
    const int d = 2;
    const double threshold = dimdm::oracle::min_label_capacity(10);
    std::printf("d = %d, log(10) = %.4f nats\n\n", d, threshold);
    std::printf("%8s  %12s\n", "sigma", "capacity");
    for (double sigma : {0.001, 0.01, 0.03, 0.1, 0.3, 0.5, 1.0, 2.0})
        std::printf("%8g  %12.4f%s\n", sigma, dimdm::oracle::gaussian_channel_capacity(d, sigma),
                    dimdm::oracle::gaussian_channel_capacity(d, sigma) < threshold ? "  below log(10)" : "");
    std::printf("\n%8s  %12s\n", "epsilon", "capacity");
    for (double eps : {0.01, 0.05, 0.1, 0.25, 0.45})
        std::printf("%8g  %12.4f\n", eps, dimdm::oracle::uniform_channel_capacity(d, eps));
}
