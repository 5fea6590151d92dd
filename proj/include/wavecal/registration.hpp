#pragma once

// Landmark registration of field curves onto a model-run reference curve by
// piecewise-linear time warping, and resampling onto the dyadic grid.

#include "wavecal/curve.hpp"

#include <span>
#include <vector>

namespace wavecal::registration {

enum class Feature { min, max };

/// Time interval holding one event and the ordered extrema that mark it.
struct EventWindow {
    double lo = 0.0;
    double hi = 0.0;
    std::vector<Feature> features;
};

/// Anchor times, concatenated over windows and their feature lists.
struct AnchorSet {
    std::vector<double> times;

    bool operator==(const AnchorSet&) const = default;
};

void validate(std::span<const EventWindow> windows);

/// Linear interpolation of `curve` onto 2^levels uniform nodes over [t0, t1].
GridCurve resample_dyadic(const Curve& curve, const GridSpec& grid);

/// Pointwise mean of the model runs after resampling onto `grid`.
GridCurve build_reference_curve(std::span<const Curve> model_runs, const GridSpec& grid);

/// Time of each window's extrema (earliest sample wins ties).
AnchorSet locate_anchors(const Curve& curve, std::span<const EventWindow> windows);
AnchorSet locate_anchors(const GridCurve& curve, std::span<const EventWindow> windows);

/// Warps the time axis so that every `src` anchor lands on the matching `dst`
/// anchor; the curve's first and last times stay fixed and values are
/// untouched.
Curve register_curve(const Curve& curve, const AnchorSet& src, const AnchorSet& dst);

/// The piecewise-linear warp used by register_curve, evaluated at `t`.
double warp_time(double t, std::span<const double> src_knots, std::span<const double> dst_knots);

} // namespace wavecal::registration
