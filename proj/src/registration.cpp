#include "wavecal/registration.hpp"

#include "wavecal/errors.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace wavecal::registration {

void validate(std::span<const EventWindow> windows) {
    double prev_hi = -INFINITY;
    for (std::size_t w = 0; w < windows.size(); ++w) {
        const auto& win = windows[w];
        if (!(win.lo < win.hi)) throw ValidationError("event window " + std::to_string(w) + ": lo must be below hi");
        if (win.features.empty()) throw ValidationError("event window " + std::to_string(w) + ": no features");
        if (win.lo < prev_hi) throw ValidationError("event windows must be disjoint and ordered");
        prev_hi = win.hi;
    }
}

GridCurve resample_dyadic(const Curve& curve, const GridSpec& grid) {
    validate(curve);
    if (grid.levels < 1) throw ArgumentError("resample_dyadic: grid needs at least one level");
    if (curve.t.front() > grid.t0 || curve.t.back() < grid.t1)
        throw CoverageError("curve '" + curve.label + "' covers [" + std::to_string(curve.t.front()) + ", " +
                            std::to_string(curve.t.back()) + "], grid needs [" + std::to_string(grid.t0) + ", " +
                            std::to_string(grid.t1) + "]");
    GridCurve out;
    out.grid = grid;
    out.label = curve.label;
    out.y.resize(grid.size());
    std::size_t seg = 0;
    for (std::size_t k = 0; k < grid.size(); ++k) {
        const double t = grid.at(k);
        while (seg + 2 < curve.t.size() && curve.t[seg + 1] < t) ++seg;
        const double ta = curve.t[seg];
        const double tb = curve.t[seg + 1];
        if (t == ta) {
            out.y[k] = curve.y[seg];
        } else if (t == tb) {
            out.y[k] = curve.y[seg + 1];
        } else {
            const double w = (t - ta) / (tb - ta);
            out.y[k] = curve.y[seg] + w * (curve.y[seg + 1] - curve.y[seg]);
        }
    }
    return out;
}

GridCurve build_reference_curve(std::span<const Curve> model_runs, const GridSpec& grid) {
    if (model_runs.empty()) throw ArgumentError("build_reference_curve: no model runs");
    GridCurve ref;
    ref.grid = grid;
    ref.label = "reference";
    ref.y.assign(grid.size(), 0.0);
    for (const auto& run : model_runs) {
        const GridCurve g = resample_dyadic(run, grid);
        for (std::size_t k = 0; k < ref.y.size(); ++k) ref.y[k] += g.y[k];
    }
    const double inv = 1.0 / static_cast<double>(model_runs.size());
    for (double& v : ref.y) v *= inv;
    return ref;
}

namespace {

AnchorSet locate(std::span<const double> t, std::span<const double> y, std::span<const EventWindow> windows,
                 const std::string& label) {
    validate(windows);
    AnchorSet out;
    for (std::size_t w = 0; w < windows.size(); ++w) {
        const auto& win = windows[w];
        const auto first = std::lower_bound(t.begin(), t.end(), win.lo) - t.begin();
        const auto last = std::upper_bound(t.begin(), t.end(), win.hi) - t.begin();
        if (first >= last)
            throw WindowError("curve '" + label + "': no samples inside event window " + std::to_string(w) + " [" +
                              std::to_string(win.lo) + ", " + std::to_string(win.hi) + "]");
        for (Feature f : win.features) {
            auto best = first;
            for (auto k = first + 1; k < last; ++k) {
                if (f == Feature::max ? y[k] > y[best] : y[k] < y[best]) best = k;
            }
            out.times.push_back(t[best]);
        }
    }
    return out;
}

void check_increasing(const AnchorSet& a, const char* which) {
    for (std::size_t i = 1; i < a.times.size(); ++i) {
        if (!(a.times[i] > a.times[i - 1]))
            throw DegenerateWarpError(std::string(which) + " anchors are not strictly increasing at position " +
                                      std::to_string(i));
    }
}

} // namespace

AnchorSet locate_anchors(const Curve& curve, std::span<const EventWindow> windows) {
    validate(curve);
    return locate(curve.t, curve.y, windows, curve.label);
}

AnchorSet locate_anchors(const GridCurve& curve, std::span<const EventWindow> windows) {
    const auto t = curve.grid.times();
    return locate(t, curve.y, windows, curve.label);
}

double warp_time(double t, std::span<const double> src, std::span<const double> dst) {
    if (t <= src.front()) return dst.front() + (t - src.front());
    if (t >= src.back()) return dst.back() + (t - src.back());
    const auto it = std::upper_bound(src.begin(), src.end(), t);
    const std::size_t i = static_cast<std::size_t>(it - src.begin()) - 1;
    if (t == src[i]) return dst[i];
    if (src[i] == dst[i] && src[i + 1] == dst[i + 1]) return t;
    return dst[i] + (t - src[i]) * (dst[i + 1] - dst[i]) / (src[i + 1] - src[i]);
}

Curve register_curve(const Curve& curve, const AnchorSet& src, const AnchorSet& dst) {
    validate(curve);
    if (src.times.size() != dst.times.size())
        throw ArgumentError("register_curve: source and destination anchor sets differ in structure");
    check_increasing(src, "source");
    check_increasing(dst, "destination");

    const double t_first = curve.t.front();
    const double t_last = curve.t.back();
    std::vector<double> s{t_first};
    std::vector<double> d{t_first};
    s.insert(s.end(), src.times.begin(), src.times.end());
    d.insert(d.end(), dst.times.begin(), dst.times.end());
    s.push_back(t_last);
    d.push_back(t_last);
    for (std::size_t i = 1; i < s.size(); ++i) {
        if (!(s[i] > s[i - 1]))
            throw DegenerateWarpError("curve '" + curve.label + "': zero-length source segment between knots " +
                                      std::to_string(i - 1) + " and " + std::to_string(i));
        if (!(d[i] > d[i - 1]))
            throw DegenerateWarpError("curve '" + curve.label + "': destination anchors fall outside the curve domain");
    }

    Curve out = curve;
    for (double& t : out.t) t = warp_time(t, s, d);
    // Knot times map exactly; keep the endpoints bit-identical.
    out.t.front() = t_first;
    out.t.back() = t_last;
    return out;
}

} // namespace wavecal::registration
