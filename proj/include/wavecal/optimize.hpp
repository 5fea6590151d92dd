#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <numeric>
#include <vector>

namespace wavecal::optimize {

struct Box {
    std::vector<double> lo;
    std::vector<double> hi;

    void project(std::vector<double>& x) const {
        for (std::size_t i = 0; i < x.size(); ++i) x[i] = std::clamp(x[i], lo[i], hi[i]);
    }
};

struct Result {
    std::vector<double> x;
    double value = std::numeric_limits<double>::infinity();
    std::size_t evals = 0;
};

/// Nelder-Mead minimisation with vertices projected onto a box. Non-finite
/// objective values are treated as +inf.
inline Result nelder_mead(const std::function<double(const std::vector<double>&)>& f, std::vector<double> x0,
                          const std::vector<double>& step, const Box& box, std::size_t max_evals,
                          double ftol = 1e-9) {
    const std::size_t n = x0.size();
    Result res;
    auto eval = [&](std::vector<double>& x) {
        box.project(x);
        ++res.evals;
        const double v = f(x);
        return std::isfinite(v) ? v : std::numeric_limits<double>::infinity();
    };

    std::vector<std::vector<double>> simplex(n + 1, x0);
    std::vector<double> fv(n + 1);
    fv[0] = eval(simplex[0]);
    for (std::size_t i = 0; i < n; ++i) {
        auto& v = simplex[i + 1];
        v[i] += step[i];
        if (v[i] > box.hi[i]) v[i] = x0[i] - step[i];
        fv[i + 1] = eval(v);
    }

    std::vector<std::size_t> order(n + 1);
    std::vector<double> centroid(n);
    std::vector<double> trial(n);
    std::vector<double> trial2(n);
    while (res.evals < max_evals) {
        std::iota(order.begin(), order.end(), 0);
        std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return fv[a] < fv[b]; });
        const std::size_t best = order.front();
        const std::size_t worst = order.back();
        const std::size_t second = order[n - 1];
        const double spread = std::abs(fv[worst] - fv[best]);
        if (std::isfinite(fv[worst]) && spread <= ftol * (1.0 + std::abs(fv[best]))) break;

        std::fill(centroid.begin(), centroid.end(), 0.0);
        for (std::size_t i = 0; i <= n; ++i) {
            if (i == worst) continue;
            for (std::size_t k = 0; k < n; ++k) centroid[k] += simplex[i][k] / static_cast<double>(n);
        }
        for (std::size_t k = 0; k < n; ++k) trial[k] = centroid[k] + (centroid[k] - simplex[worst][k]);
        const double fr = eval(trial);
        if (fr < fv[best]) {
            for (std::size_t k = 0; k < n; ++k) trial2[k] = centroid[k] + 2.0 * (centroid[k] - simplex[worst][k]);
            const double fe = eval(trial2);
            if (fe < fr) {
                simplex[worst] = trial2;
                fv[worst] = fe;
            } else {
                simplex[worst] = trial;
                fv[worst] = fr;
            }
        } else if (fr < fv[second]) {
            simplex[worst] = trial;
            fv[worst] = fr;
        } else {
            const bool outside = fr < fv[worst];
            for (std::size_t k = 0; k < n; ++k) {
                trial2[k] = outside ? centroid[k] + 0.5 * (trial[k] - centroid[k])
                                    : centroid[k] + 0.5 * (simplex[worst][k] - centroid[k]);
            }
            const double fc = eval(trial2);
            if (fc < std::min(fr, fv[worst])) {
                simplex[worst] = trial2;
                fv[worst] = fc;
            } else {
                // shrink towards the best vertex
                for (std::size_t i = 0; i <= n; ++i) {
                    if (i == best) continue;
                    for (std::size_t k = 0; k < n; ++k)
                        simplex[i][k] = simplex[best][k] + 0.5 * (simplex[i][k] - simplex[best][k]);
                    fv[i] = eval(simplex[i]);
                }
            }
        }
    }
    const auto it = std::min_element(fv.begin(), fv.end());
    res.x = simplex[static_cast<std::size_t>(it - fv.begin())];
    res.value = *it;
    return res;
}

} // namespace wavecal::optimize
