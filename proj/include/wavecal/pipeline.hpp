#pragma once

// Stage orchestration: register -> decompose -> fit -> calibrate -> predict
// -> extrapolate. Every stage reads the files written by the previous ones,
// so stages can be rerun independently.

#include "wavecal/calibration.hpp"
#include "wavecal/config.hpp"
#include "wavecal/csv.hpp"
#include "wavecal/curve.hpp"
#include "wavecal/prediction.hpp"
#include "wavecal/registration.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace wavecal::pipeline {

struct ShiftedSystem {
    std::filesystem::path iumap;
    std::filesystem::path design;
    std::filesystem::path model;
    std::vector<prediction::TransferMode> modes;
    std::optional<double> eps_guard;
};

struct RunConfig {
    std::filesystem::path source; ///< config file, for messages
    std::uint64_t seed = 0;
    std::size_t threads = 1;

    std::filesystem::path iumap;
    std::filesystem::path design;
    std::filesystem::path model_dir;
    std::filesystem::path field_dir;
    std::filesystem::path out;
    std::vector<std::string> deleted_runs;

    GridSpec grid;
    std::vector<registration::EventWindow> windows;
    bool register_model_runs = false;

    int keep_levels = 3;
    double pct = 0.025;

    emulator::FitOptions gasp;

    calibration::McmcConfig mcmc;

    prediction::BandOptions band;

    std::optional<std::filesystem::path> shifted_run;
    std::optional<std::filesystem::path> nominal_run;
    std::optional<std::filesystem::path> external_model_run;
    bool same_type = true;
    std::optional<ShiftedSystem> condition_b;
};

/// Parses a run config; relative paths resolve against the config's folder.
/// The seed key is mandatory.
RunConfig load_run_config(const std::filesystem::path& path);
RunConfig parse_run_config(const config::Document& doc, const std::filesystem::path& base,
                           const std::filesystem::path& source = {});
/// Checks that every referenced input exists.
void validate(const RunConfig& cfg);

enum class Stage { register_, decompose, fit, calibrate, predict, extrapolate };

const char* stage_name(Stage s);
Stage parse_stage(const std::string& name);
const std::vector<Stage>& all_stages();

/// Runs one stage; failures are rethrown as StageError naming the stage and
/// the last artifact that was written successfully.
void run_stage(const RunConfig& cfg, Stage stage);
/// Runs every stage in order and writes manifest.json.
void run_pipeline(const RunConfig& cfg);

/// Reconstructed emulator fits from gasp_fits.csv (hyperparameters stored
/// at full precision, so the predictor is identical to the fitted one).
std::vector<emulator::GaspFit> load_fits(const std::filesystem::path& fits_csv, const DesignMatrix& design,
                                         const csv::Table& coeffs_model, double nugget);

} // namespace wavecal::pipeline
