#include "wavecal/rng.hpp"

#include <boost/math/distributions/normal.hpp>

#include <algorithm>

namespace wavecal {

double truncated_normal(Rng& rng, double mean, double sd, double lo, double hi) {
    if (!(sd > 0.0)) return std::clamp(mean, lo, hi);
    const boost::math::normal_distribution<double> n(0.0, 1.0);
    const double a = boost::math::cdf(n, (lo - mean) / sd);
    const double b = boost::math::cdf(n, (hi - mean) / sd);
    double p = a + (b - a) * uniform01(rng);
    p = std::clamp(p, 1e-300, 1.0 - 1e-16);
    return std::clamp(mean + sd * boost::math::quantile(n, p), lo, hi);
}

} // namespace wavecal
