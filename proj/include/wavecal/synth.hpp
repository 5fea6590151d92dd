#pragma once

// Synthetic test bed with known ground truth: a cheap analytic simulator with
// two sharp events per curve, field replicates with a planted bias, wavelet
// noise and per-replicate event-time jitter, plus a shifted-nominal system.
//
// Inputs (I/U map order): x1, x2 are manufacturing-variation inputs, u1, u2
// are calibration inputs. u1 scales the event amplitudes, u2 the damping of
// the ringing that follows each event.

#include "wavecal/curve.hpp"
#include "wavecal/io_design.hpp"
#include "wavecal/registration.hpp"

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

namespace wavecal::synth {

enum class BiasKind { zero, additive, multiplicative };

struct SynthSpec {
    int levels = 8;
    double t0 = 0.0;
    double t1 = 64.0;
    std::size_t runs = 40;
    std::size_t n_rep = 3;
    /// Manufacturing variation of the tested unit (x1, x2).
    std::vector<double> true_delta{0.03, -0.02};
    /// Calibration inputs of reality (u1, u2).
    std::vector<double> true_u{0.35, 0.62};
    BiasKind bias_kind = BiasKind::additive;
    double bias_scale = 1.0;
    /// Per-coefficient noise sd at levels <= coarse_noise_levels, and
    /// fine_noise_sd above them.
    double noise_sd = 0.6;
    int coarse_noise_levels = 4;
    double fine_noise_sd = 0.1;
    /// Maximum absolute event-time shift per replicate.
    double jitter = 0.5;
    double variation_sd = 0.04;
    double variation_truncation = 0.1;
    /// Nominal shift of the second system; empty disables it.
    std::vector<double> shift_b{0.3, 0.0};
    std::size_t runs_b = 40;
    /// Input change for the delta-shift extrapolation runs; empty disables them.
    std::vector<double> delta_shift{0.1, 0.0};
    std::size_t lhd_restarts = 4;
    /// Width of the event bumps (time units).
    double event_width = 1.2;
    /// Thresholding fraction written to the generated run config.
    double pct = 0.1;
};

/// Simulator output at coded inputs (x1, x2, u1, u2).
double model_value(std::span<const double> coded, double t, double event_width = 1.2);
std::vector<double> model_curve(std::span<const double> coded, std::span<const double> times,
                                double event_width = 1.2);

/// Planted additive bias b(t) and multiplicative bias m(t).
double additive_bias(double t);
double multiplicative_bias(double t);

IUMap iu_map(const SynthSpec& spec, bool shifted_system = false);
std::vector<registration::EventWindow> event_windows();
/// Nominal event times used to place replicate jitter. The simulator's
/// extrema lie near these but move slightly with the inputs.
std::vector<double> event_anchor_times();

struct Dataset {
    GridSpec grid;
    IUMap map;
    DesignMatrix design;
    std::vector<Curve> model_runs;
    std::vector<Curve> field;
    /// Event-time shift of every replicate, per anchor.
    std::vector<std::vector<double>> jitter;

    /// Ground truth on the grid.
    std::vector<double> reality;
    std::vector<double> bias;
    std::vector<double> model_at_truth;

    bool has_shifted_system = false;
    IUMap map_b;
    DesignMatrix design_b;
    std::vector<Curve> model_runs_b;
    std::vector<double> reality_b;

    bool has_delta_shift = false;
    Curve run_shifted;
    Curve run_nominal;
    std::vector<double> reality_shift;
};

Dataset generate(const SynthSpec& spec, std::uint64_t seed);

/// Writes the data set as pipeline inputs plus a run config; returns the
/// config path. Truth curves go to `truth/`.
std::filesystem::path write_dataset(const std::filesystem::path& dir, const Dataset& data, const SynthSpec& spec,
                                    std::uint64_t seed);

} // namespace wavecal::synth
