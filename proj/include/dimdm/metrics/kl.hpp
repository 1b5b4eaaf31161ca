#pragma once

// Upper bounds on the divergence between the embedding distribution and the
// matching target, from two mutual-information values:
//   gaussian  I(Z; f(X)+Z) - I(f(X'); f(X)+Z) - d log sigma   >= KL(f(X) || N(0, I))
//   uniform   I(Z; f(X)+Z) - I(f(X'); f(X)+Z) - d log(2 eps) >= KL(f(X) || U[0,1]^d)

#include <cmath>

#include "dimdm/core/error.hpp"

namespace dimdm::metrics {

inline double kl_upper_bound_gaussian(double i_noise_output, double i_objective, int d, double sigma) {
    dimdm::detail::require(std::isfinite(i_noise_output) && std::isfinite(i_objective), "KL bound inputs must be finite");
    dimdm::detail::require(d >= 1, "KL bound needs d >= 1");
    dimdm::detail::require(sigma > 0 && std::isfinite(sigma), "KL bound needs a positive sigma");
    return i_noise_output - i_objective - d * std::log(sigma);
}

inline double kl_upper_bound_uniform(double i_noise_output, double i_objective, int d, double epsilon) {
    dimdm::detail::require(std::isfinite(i_noise_output) && std::isfinite(i_objective), "KL bound inputs must be finite");
    dimdm::detail::require(d >= 1, "KL bound needs d >= 1");
    dimdm::detail::require(epsilon > 0 && std::isfinite(epsilon), "KL bound needs a positive epsilon");
    return i_noise_output - i_objective - d * std::log(2 * epsilon);
}

} // namespace dimdm::metrics
