#include "wavecal/prediction.hpp"

#include "wavecal/csv.hpp"
#include "wavecal/errors.hpp"

#include <algorithm>
#include <bit>
#include <cmath>

namespace wavecal::prediction {

namespace {

using calibration::Draw;
using calibration::PosteriorDraws;

void check_grid(const wavelet::RetainedIndexSet& keep, const GridSpec& grid) {
    if (keep.levels() != grid.levels)
        throw ArgumentError("retained set has " + std::to_string(keep.levels()) + " levels, grid has " +
                            std::to_string(grid.levels));
}

GridCurve grid_curve(const GridSpec& grid, std::vector<double> y, std::string label) {
    GridCurve g;
    g.grid = grid;
    g.y = std::move(y);
    g.label = std::move(label);
    return g;
}

std::vector<double> sum(const std::vector<double>& a, const std::vector<double>& b) {
    std::vector<double> out(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] + b[i];
    return out;
}

std::vector<double> noise(const Draw& d, Rng& rng) {
    std::vector<double> eps(d.sigma2.size());
    for (std::size_t i = 0; i < eps.size(); ++i) eps[i] = std::sqrt(d.sigma2[i]) * standard_normal(rng);
    return eps;
}

double normal_draw(const emulator::Prediction& p, Rng& rng) {
    const double z = standard_normal(rng);
    return p.var > 0.0 ? p.mean + std::sqrt(p.var) * z : p.mean;
}

BandedEnsemble banded(CurveEnsemble e, const BandOptions& opts) {
    BandedEnsemble out;
    out.band = tolerance_band(e, opts.alpha, opts.mode);
    out.ensemble = std::move(e);
    return out;
}

} // namespace

double quantile_sorted(std::span<const double> sorted, double q) {
    if (sorted.empty()) throw ArgumentError("quantile of an empty sample");
    const double pos = std::clamp(q, 0.0, 1.0) * static_cast<double>(sorted.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
    const double frac = pos - static_cast<double>(lo);
    return frac == 0.0 ? sorted[lo] : sorted[lo] + frac * (sorted[hi] - sorted[lo]);
}

CurveEnsemble reconstruct_ensemble(const std::vector<std::vector<double>>& coeff_draws,
                                   const wavelet::RetainedIndexSet& keep, const GridSpec& grid, EnsembleKind kind) {
    check_grid(keep, grid);
    CurveEnsemble e;
    e.grid = grid;
    e.kind = kind;
    e.curves.reserve(coeff_draws.size());
    for (std::size_t h = 0; h < coeff_draws.size(); ++h) {
        if (coeff_draws[h].size() != keep.size())
            throw ArgumentError("draw " + std::to_string(h) + " has " + std::to_string(coeff_draws[h].size()) +
                                " coefficients, retained set has " + std::to_string(keep.size()));
        e.curves.push_back(wavelet::reconstruct(coeff_draws[h], keep));
    }
    return e;
}

Band tolerance_band(const CurveEnsemble& e, double alpha, BandMode mode) {
    const std::size_t H = e.size();
    if (H < 2) throw ArgumentError("tolerance_band: at least two curves are needed");
    if (!(alpha > 0.0 && alpha < 1.0)) throw ArgumentError("tolerance_band: alpha must lie in (0, 1)");
    const std::size_t n = e.grid.size();
    Band b;
    b.alpha = alpha;
    b.mode = mode;
    std::vector<double> center(n);
    std::vector<double> lower(n);
    std::vector<double> upper(n);
    const auto m = std::min(H, static_cast<std::size_t>(std::ceil((1.0 - alpha) * static_cast<double>(H) - 1e-9)));
    std::vector<double> col(H);
    for (std::size_t k = 0; k < n; ++k) {
        double s = 0.0;
        for (std::size_t h = 0; h < H; ++h) {
            if (e.curves[h].size() != n) throw ArgumentError("tolerance_band: curve length does not match grid");
            col[h] = e.curves[h][k];
            s += col[h];
        }
        center[k] = s / static_cast<double>(H);
        std::sort(col.begin(), col.end());
        if (mode == BandMode::symmetric) {
            lower[k] = quantile_sorted(col, 0.5 * alpha);
            upper[k] = quantile_sorted(col, 1.0 - 0.5 * alpha);
        } else {
            std::size_t best = 0;
            double width = col[m - 1] - col[0];
            for (std::size_t i = 1; i + m <= H; ++i) {
                const double w = col[i + m - 1] - col[i];
                if (w < width) {
                    width = w;
                    best = i;
                }
            }
            lower[k] = col[best];
            upper[k] = col[best + m - 1];
        }
    }
    b.center = grid_curve(e.grid, std::move(center), "center");
    b.lower = grid_curve(e.grid, std::move(lower), "lower");
    b.upper = grid_curve(e.grid, std::move(upper), "upper");
    return b;
}

BandedEnsemble predict_bias(const PosteriorDraws& draws, const GridSpec& grid, const BandOptions& opts) {
    std::vector<std::vector<double>> coeffs;
    coeffs.reserve(draws.size());
    for (std::size_t h = 0; h < draws.size(); ++h) coeffs.push_back(draws.draw(h).wb);
    return banded(reconstruct_ensemble(coeffs, draws.keep(), grid, EnsembleKind::bias), opts);
}

BandedEnsemble predict_reality(const PosteriorDraws& draws, const GridSpec& grid, const BandOptions& opts) {
    std::vector<std::vector<double>> coeffs;
    coeffs.reserve(draws.size());
    for (std::size_t h = 0; h < draws.size(); ++h) coeffs.push_back(sum(draws.draw(h).wm, draws.draw(h).wb));
    return banded(reconstruct_ensemble(coeffs, draws.keep(), grid, EnsembleKind::reality), opts);
}

CurveEnsemble model_ensemble(const PosteriorDraws& draws, const GridSpec& grid) {
    std::vector<std::vector<double>> coeffs;
    coeffs.reserve(draws.size());
    for (std::size_t h = 0; h < draws.size(); ++h) coeffs.push_back(draws.draw(h).wm);
    return reconstruct_ensemble(coeffs, draws.keep(), grid, EnsembleKind::model);
}

GridCurve pure_model_prediction(const PosteriorDraws& draws, std::span<const emulator::GaspFit> fits,
                                const IUMap& map, const GridSpec& grid) {
    check_grid(draws.keep(), grid);
    if (fits.size() != draws.keep().size()) throw ArgumentError("pure_model_prediction: one fit per retained index");
    const auto z = map.to_unit(draws.mean_delta(), draws.mean_u());
    std::vector<double> mean(fits.size());
    std::vector<double> var(fits.size());
    emulator::predict_all(fits, z, mean, var);
    return grid_curve(grid, wavelet::reconstruct(mean, draws.keep()), "pure_model");
}

BandedEnsemble model_difference(const CurveEnsemble& reality, const GridCurve& model, const BandOptions& opts) {
    if (model.y.size() != reality.grid.size()) throw ArgumentError("model_difference: grid mismatch");
    CurveEnsemble diff = reality;
    for (auto& c : diff.curves)
        for (std::size_t k = 0; k < c.size(); ++k) c[k] -= model.y[k];
    return banded(std::move(diff), opts);
}

BandedEnsemble predict_new_field_run(const PosteriorDraws& draws, const GridSpec& grid, Rng& rng,
                                     const BandOptions& opts) {
    std::vector<std::vector<double>> coeffs;
    coeffs.reserve(draws.size());
    for (std::size_t h = 0; h < draws.size(); ++h) {
        const Draw& d = draws.draw(h);
        auto c = sum(d.wm, d.wb);
        const auto eps = noise(d, rng);
        for (std::size_t i = 0; i < c.size(); ++i) c[i] += eps[i];
        coeffs.push_back(std::move(c));
    }
    return banded(reconstruct_ensemble(coeffs, draws.keep(), grid, EnsembleKind::field), opts);
}

BandedEnsemble extrapolate_delta_shift(const BandedEnsemble& base, const GridCurve& run_shifted,
                                       const GridCurve& run_nominal) {
    const GridSpec& grid = base.ensemble.grid;
    if (!(run_shifted.grid == grid) || !(run_nominal.grid == grid) || run_shifted.y.size() != grid.size() ||
        run_nominal.y.size() != grid.size())
        throw ArgumentError("extrapolate_delta_shift: runs are not on the prediction grid");
    std::vector<double> D(grid.size());
    for (std::size_t k = 0; k < D.size(); ++k) D[k] = run_shifted.y[k] - run_nominal.y[k];
    BandedEnsemble out = base;
    for (auto& c : out.ensemble.curves)
        for (std::size_t k = 0; k < c.size(); ++k) c[k] += D[k];
    for (GridCurve* g : {&out.band.center, &out.band.lower, &out.band.upper})
        for (std::size_t k = 0; k < D.size(); ++k) g->y[k] += D[k];
    return out;
}

BandedEnsemble extrapolate_same_type(const PosteriorDraws& draws, std::span<const emulator::GaspFit> fits,
                                     const IUMap& map, const GridSpec& grid, Rng& rng, const BandOptions& opts) {
    check_grid(draws.keep(), grid);
    if (fits.size() != draws.keep().size()) throw ArgumentError("extrapolate_same_type: one fit per retained index");
    const auto prior = calibration::PriorSpec::from(map);
    std::vector<std::vector<double>> coeffs;
    coeffs.reserve(draws.size());
    for (std::size_t h = 0; h < draws.size(); ++h) {
        const Draw& d = draws.draw(h);
        const auto z_star = map.to_unit(d.delta, d.u);
        const auto z_new = map.to_unit(prior.draw_delta(rng), d.u);
        std::vector<double> c(fits.size());
        for (std::size_t i = 0; i < fits.size(); ++i) {
            emulator::Prediction p;
            try {
                p = fits[i].predict_augmented(z_star, d.wm[i], z_new);
            } catch (const ConditioningError& e) {
                throw ConditioningError("draw " + std::to_string(h) + ", coefficient " +
                                        wavelet::index_label(draws.keep()[i]) + ": " + e.what());
            }
            c[i] = normal_draw(p, rng);
        }
        const auto eps = noise(d, rng);
        for (std::size_t i = 0; i < c.size(); ++i) c[i] += d.wb[i] + eps[i];
        coeffs.push_back(std::move(c));
    }
    return banded(reconstruct_ensemble(coeffs, draws.keep(), grid, EnsembleKind::field), opts);
}

double transfer(double y_bm, double y_r, double y_m, TransferMode mode, double guard, bool& fell_back) {
    fell_back = false;
    if (mode == TransferMode::additive) return y_bm + (y_r - y_m);
    if (std::abs(y_m) < guard) {
        fell_back = true;
        return y_bm + (y_r - y_m);
    }
    return y_bm + (y_bm / y_m) * (y_r - y_m);
}

NominalShiftResult extrapolate_new_nominals(const PosteriorDraws& draws, std::span<const emulator::GaspFit> fits_b,
                                            const IUMap& map_b, const GridSpec& grid, TransferMode mode, Rng& rng,
                                            const BandOptions& opts, std::optional<double> eps_guard,
                                            const GridCurve* pure_model) {
    const auto& keep = draws.keep();
    check_grid(keep, grid);
    if (fits_b.size() != keep.size())
        throw ArgumentError("extrapolate_new_nominals: one shifted-system fit per retained index");
    const auto prior_b = calibration::PriorSpec::from(map_b);
    if (prior_b.u.size() != draws.u_names().size())
        throw ArgumentError("extrapolate_new_nominals: calibration inputs differ between systems");

    NominalShiftResult out;
    std::vector<std::vector<double>> y_m_curves;
    if (mode == TransferMode::multiplicative) {
        y_m_curves = model_ensemble(draws, grid).curves;
        if (eps_guard) {
            out.eps_guard = *eps_guard;
        } else {
            double peak = 0.0;
            if (pure_model) {
                for (double v : pure_model->y) peak = std::max(peak, std::abs(v));
            } else {
                for (std::size_t k = 0; k < grid.size(); ++k) {
                    double s = 0.0;
                    for (const auto& c : y_m_curves) s += c[k];
                    peak = std::max(peak, std::abs(s / static_cast<double>(y_m_curves.size())));
                }
            }
            out.eps_guard = 1e-3 * peak;
        }
    }

    CurveEnsemble e;
    e.grid = grid;
    e.kind = EnsembleKind::field;
    e.curves.reserve(draws.size());
    std::vector<double> mean(keep.size());
    std::vector<double> var(keep.size());
    for (std::size_t h = 0; h < draws.size(); ++h) {
        const Draw& d = draws.draw(h);
        const auto z = map_b.to_unit(prior_b.draw_delta(rng), d.u);
        emulator::predict_all(fits_b, z, mean, var);
        std::vector<double> w_bm(keep.size());
        for (std::size_t i = 0; i < keep.size(); ++i) w_bm[i] = normal_draw({mean[i], var[i]}, rng);
        const auto eps = noise(d, rng);
        if (mode == TransferMode::additive) {
            for (std::size_t i = 0; i < w_bm.size(); ++i) w_bm[i] += d.wb[i] + eps[i];
            e.curves.push_back(wavelet::reconstruct(w_bm, keep));
            continue;
        }
        const auto y_bm = wavelet::reconstruct(w_bm, keep);
        const auto y_r = wavelet::reconstruct(sum(d.wm, d.wb), keep);
        const auto& y_m = y_m_curves[h];
        const auto y_eps = wavelet::reconstruct(eps, keep);
        std::vector<double> y(grid.size());
        for (std::size_t k = 0; k < y.size(); ++k) {
            bool fell_back = false;
            y[k] = transfer(y_bm[k], y_r[k], y_m[k], mode, out.eps_guard, fell_back) + y_eps[k];
            out.fallbacks += fell_back ? 1 : 0;
        }
        e.curves.push_back(std::move(y));
    }
    out.result = banded(std::move(e), opts);
    return out;
}

void write_band(const std::filesystem::path& path, const Band& band) {
    csv::Table t;
    t.header = {"t", "center", "lower", "upper"};
    const auto times = band.center.grid.times();
    t.rows.reserve(times.size());
    for (std::size_t k = 0; k < times.size(); ++k)
        t.rows.push_back({times[k], band.center.y[k], band.lower.y[k], band.upper.y[k]});
    csv::write_table(path, t);
}

Band read_band(const std::filesystem::path& path) {
    const auto t = csv::read_table(path);
    if (t.header != std::vector<std::string>{"t", "center", "lower", "upper"})
        throw ParseError(path.string() + ": expected columns t,center,lower,upper");
    const std::size_t n = t.rows.size();
    if (n < 2 || !std::has_single_bit(n)) throw ParseError(path.string() + ": band is not on a dyadic grid");
    GridSpec grid;
    grid.levels = std::countr_zero(n);
    grid.t0 = t.rows.front()[0];
    grid.t1 = t.rows.back()[0];
    Band b;
    std::vector<double> c(n);
    std::vector<double> lo(n);
    std::vector<double> hi(n);
    for (std::size_t k = 0; k < n; ++k) {
        c[k] = t.rows[k][1];
        lo[k] = t.rows[k][2];
        hi[k] = t.rows[k][3];
    }
    b.center = grid_curve(grid, std::move(c), "center");
    b.lower = grid_curve(grid, std::move(lo), "lower");
    b.upper = grid_curve(grid, std::move(hi), "upper");
    return b;
}

void write_ensemble(const std::filesystem::path& path, const CurveEnsemble& e) {
    csv::Table t;
    t.header.push_back("t");
    for (std::size_t h = 0; h < e.size(); ++h) t.header.push_back("draw" + std::to_string(h));
    const auto times = e.grid.times();
    for (std::size_t k = 0; k < times.size(); ++k) {
        std::vector<double> row{times[k]};
        for (const auto& c : e.curves) row.push_back(c[k]);
        t.rows.push_back(std::move(row));
    }
    csv::write_table(path, t);
}

double coverage(const Band& band, std::span<const double> truth) {
    if (truth.size() != band.lower.y.size()) throw ArgumentError("coverage: length mismatch");
    std::size_t inside = 0;
    for (std::size_t k = 0; k < truth.size(); ++k)
        if (truth[k] >= band.lower.y[k] && truth[k] <= band.upper.y[k]) ++inside;
    return static_cast<double>(inside) / static_cast<double>(truth.size());
}

} // namespace wavecal::prediction
