#pragma once

// Input/uncertainty map, curve and design I/O, and maximin Latin hypercubes.

#include "wavecal/config.hpp"
#include "wavecal/curve.hpp"

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <variant>
#include <vector>

namespace wavecal {

enum class Role { calibration, variation };

struct UniformPrior {
    double lo = 0.0;
    double hi = 1.0;
};

/// Normal(mean, sd^2) on the manufacturing variation, truncated to [lo, hi].
struct TruncNormalPrior {
    double mean = 0.0;
    double sd = 1.0;
    double lo = -1.0;
    double hi = 1.0;
};

struct ParameterSpec {
    std::string name;
    Role role = Role::calibration;
    double lo = 0.0;
    double hi = 1.0;
    std::variant<UniformPrior, TruncNormalPrior> prior;

    double nominal() const noexcept { return 0.5 * (lo + hi); }
    double width() const noexcept { return hi - lo; }
};

/// Parameter table. Entry order is the column order of the design matrix and
/// of every emulator input vector.
struct IUMap {
    std::vector<ParameterSpec> entries;

    std::size_t dims() const noexcept { return entries.size(); }
    std::size_t n_calibration() const;
    std::size_t n_variation() const;
    std::vector<std::string> names() const;

    /// Indices into `entries`, split by role, in entry order.
    std::vector<std::size_t> calibration_indices() const;
    std::vector<std::size_t> variation_indices() const;

    /// Maps (delta, u) on the coded scale to the unit cube used by designs
    /// and emulators: x = nominal + delta, unit = (x - lo) / (hi - lo).
    std::vector<double> to_unit(std::span<const double> delta, std::span<const double> u) const;
    void to_unit(std::span<const double> delta, std::span<const double> u, std::span<double> out) const;
    /// Coded-scale value of each entry for a unit-cube point.
    std::vector<double> from_unit(std::span<const double> unit) const;
};

/// Validates and resolves defaults (uniform for calibration inputs;
/// N(0, (range/6)^2) truncated to range - nominal for variation inputs).
IUMap parse_iu_map(const config::Document& doc);
IUMap load_iu_map(const std::filesystem::path& path);
void validate(const IUMap& map);

enum class CurveKind { field, model };

struct CurveLoadOptions {
    /// Labels of runs to drop (e.g. runs that failed to converge).
    std::vector<std::string> deleted;
};

/// Reads every `*.csv` in `dir` as a two-column `t,y` curve, sorted by label.
/// Model-run labels must end in the design-row index (e.g. `run_017`).
std::vector<Curve> load_curves(const std::filesystem::path& dir, CurveKind kind,
                               const CurveLoadOptions& opts = {});
Curve read_curve(const std::filesystem::path& path);
void write_curve(const std::filesystem::path& path, const Curve& curve);

struct DesignMatrix {
    /// Row-major K x d points in [0,1]^d.
    std::vector<double> points;
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<std::string> column_names;

    std::span<const double> row(std::size_t k) const { return {points.data() + k * cols, cols}; }
    double at(std::size_t k, std::size_t p) const { return points[k * cols + p]; }
    double min_distance() const;
};

DesignMatrix read_design(const std::filesystem::path& path);
void write_design(const std::filesystem::path& path, const DesignMatrix& design);

/// Rows of `design` matching each model run's design_row, in curve order.
DesignMatrix select_rows(const DesignMatrix& design, std::span<const Curve> runs);

/// Approximately maximin Latin hypercube on cell-centred strata: n_restarts
/// random LHDs, each improved by coordinate exchange. Deterministic in seed.
/// When `trace` is given it receives the best min-distance after every
/// accepted exchange (non-decreasing).
DesignMatrix generate_lhd(std::size_t K, std::size_t d, std::size_t n_restarts, std::uint64_t seed,
                          std::vector<double>* trace = nullptr);

} // namespace wavecal
