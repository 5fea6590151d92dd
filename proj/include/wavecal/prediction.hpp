#pragma once

// Curve ensembles built from joint posterior draws, pointwise tolerance
// bands, and the prediction / extrapolation products derived from them.

#include "wavecal/calibration.hpp"
#include "wavecal/curve.hpp"
#include "wavecal/emulator.hpp"
#include "wavecal/io_design.hpp"
#include "wavecal/wavelet.hpp"

#include <filesystem>
#include <optional>
#include <span>
#include <vector>

namespace wavecal::prediction {

enum class EnsembleKind { bias, reality, field, model };

struct CurveEnsemble {
    GridSpec grid;
    EnsembleKind kind = EnsembleKind::reality;
    /// curves[h][k]: value of draw h at grid node k.
    std::vector<std::vector<double>> curves;

    std::size_t size() const noexcept { return curves.size(); }
};

enum class BandMode { symmetric, shortest };

struct Band {
    GridCurve center; ///< pointwise ensemble mean
    GridCurve lower;
    GridCurve upper;
    double alpha = 0.1;
    BandMode mode = BandMode::symmetric;
};

struct BandedEnsemble {
    CurveEnsemble ensemble;
    Band band;
};

struct BandOptions {
    double alpha = 0.1;
    BandMode mode = BandMode::symmetric;
};

/// Order-statistic quantile with linear interpolation between neighbours
/// (position q * (n - 1) in the sorted sample).
double quantile_sorted(std::span<const double> sorted, double q);

CurveEnsemble reconstruct_ensemble(const std::vector<std::vector<double>>& coeff_draws,
                                   const wavelet::RetainedIndexSet& keep, const GridSpec& grid, EnsembleKind kind);

Band tolerance_band(const CurveEnsemble& e, double alpha, BandMode mode = BandMode::symmetric);

BandedEnsemble predict_bias(const calibration::PosteriorDraws& draws, const GridSpec& grid, const BandOptions& opts);
BandedEnsemble predict_reality(const calibration::PosteriorDraws& draws, const GridSpec& grid,
                               const BandOptions& opts);
/// Model-coefficient draws w^M(delta*, u*) reconstructed.
CurveEnsemble model_ensemble(const calibration::PosteriorDraws& draws, const GridSpec& grid);

/// Emulator-mean reconstruction at the posterior-mean inputs.
GridCurve pure_model_prediction(const calibration::PosteriorDraws& draws, std::span<const emulator::GaspFit> fits,
                                const IUMap& map, const GridSpec& grid);

/// Band of the reality draws minus a reference model curve (the pure-model
/// prediction or an external run at the posterior-mean inputs).
BandedEnsemble model_difference(const CurveEnsemble& reality, const GridCurve& model, const BandOptions& opts);

/// Reality draws plus replicate noise eps_i ~ N(0, sigma2_i^h).
BandedEnsemble predict_new_field_run(const calibration::PosteriorDraws& draws, const GridSpec& grid, Rng& rng,
                                     const BandOptions& opts);

/// Translates every curve and both band edges by run_shifted - run_nominal.
BandedEnsemble extrapolate_delta_shift(const BandedEnsemble& base, const GridCurve& run_shifted,
                                       const GridCurve& run_nominal);

/// New unit of the same type: fresh manufacturing variation from its prior,
/// model coefficient predicted by the emulator augmented with the draw's own
/// (z*, w^M) pair, plus the draw's bias and replicate noise.
BandedEnsemble extrapolate_same_type(const calibration::PosteriorDraws& draws,
                                     std::span<const emulator::GaspFit> fits, const IUMap& map,
                                     const GridSpec& grid, Rng& rng, const BandOptions& opts);

enum class TransferMode { additive, multiplicative };

struct NominalShiftResult {
    BandedEnsemble result;
    /// Grid points (summed over draws) where the multiplicative ratio fell
    /// back to the additive form.
    std::size_t fallbacks = 0;
    double eps_guard = 0.0;
};

/// Prediction for a system with shifted nominal inputs: model coefficients
/// from emulators fitted on that system's runs, bias carried over from the
/// original posterior draw by draw. `map_b` describes the shifted system; the
/// calibration inputs are shared by name order.
NominalShiftResult extrapolate_new_nominals(const calibration::PosteriorDraws& draws,
                                            std::span<const emulator::GaspFit> fits_b, const IUMap& map_b,
                                            const GridSpec& grid, TransferMode mode, Rng& rng,
                                            const BandOptions& opts, std::optional<double> eps_guard = {},
                                            const GridCurve* pure_model = nullptr);

/// Bias-transfer arithmetic at one point. Multiplicative form:
/// y_bm + (y_bm / y_m) (y_r - y_m); additive where |y_m| < guard.
double transfer(double y_bm, double y_r, double y_m, TransferMode mode, double guard, bool& fell_back);

void write_band(const std::filesystem::path& path, const Band& band);
Band read_band(const std::filesystem::path& path);
void write_ensemble(const std::filesystem::path& path, const CurveEnsemble& e);

/// Fraction of grid points where lower <= truth <= upper.
double coverage(const Band& band, std::span<const double> truth);

} // namespace wavecal::prediction
