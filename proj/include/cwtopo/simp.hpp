#pragma once

#include <cmath>

namespace cwtopo {

struct SimpParams {
    double exponent = 3.0;
    double min_ratio = 1e-9;   // E_min / E_0
    double lower_bound = 1e-3; // mu_l

    void validate() const;
};

/// s(mu) = mu^p + (1 - mu^p) E_min / E_0
inline double simp(double mu, const SimpParams& p) {
    const double mp = std::pow(mu, p.exponent);
    return mp + (1.0 - mp) * p.min_ratio;
}

inline double simp_derivative(double mu, const SimpParams& p) {
    return p.exponent * std::pow(mu, p.exponent - 1.0) * (1.0 - p.min_ratio);
}

} // namespace cwtopo
