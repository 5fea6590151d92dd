#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

namespace wavecal {

/// A sampled real-valued function of time; the unit of field and model output.
/// Time is strictly increasing and there are at least two samples.
struct Curve {
    std::vector<double> t;
    std::vector<double> y;
    std::string label;
    /// Row of the design matrix this model run was evaluated at.
    std::optional<std::size_t> design_row;

    std::size_t size() const noexcept { return t.size(); }
};

/// Throws ValidationError when the Curve invariants do not hold.
void validate(const Curve& c);

/// Uniform dyadic grid: 2^levels nodes spanning [t0, t1] inclusive.
struct GridSpec {
    int levels = 12;
    double t0 = 0.0;
    double t1 = 1.0;

    std::size_t size() const noexcept { return std::size_t{1} << levels; }
    double step() const noexcept { return (t1 - t0) / static_cast<double>(size() - 1); }
    double at(std::size_t k) const noexcept {
        return k + 1 == size() ? t1 : t0 + static_cast<double>(k) * step();
    }
    std::vector<double> times() const;

    bool operator==(const GridSpec&) const = default;
};

struct GridCurve {
    GridSpec grid;
    std::vector<double> y;
    std::string label;

    Curve as_curve() const;
};

} // namespace wavecal
