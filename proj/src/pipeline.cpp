#include "wavecal/pipeline.hpp"

#include "wavecal/errors.hpp"
#include "wavecal/io_design.hpp"
#include "wavecal/rng.hpp"
#include "wavecal/wavelet.hpp"

#include <json.hpp>
#include <spdlog/spdlog.h>

#include <algorithm>
#include <fstream>

namespace wavecal::pipeline {

namespace fs = std::filesystem;

namespace {

using json = nlohmann::json;

constexpr const char* kFitsFile = "gasp_fits.csv";
constexpr const char* kFitsFileB = "gasp_fits_b.csv";
constexpr const char* kCoeffsModel = "coeffs_model.csv";
constexpr const char* kCoeffsModelB = "coeffs_model_b.csv";
constexpr const char* kCoeffsField = "coeffs_field.csv";
constexpr const char* kDraws = "draws.csv";
constexpr const char* kDrawsMeta = "draws.meta.json";
constexpr const char* kTrace = "trace.csv";
constexpr const char* kExtrapMeta = "extrapolate.meta.json";

std::uint64_t derived_seed(std::uint64_t seed, std::string_view purpose) {
    Rng rng = make_stream(seed, purpose);
    return rng();
}

fs::path resolve(const fs::path& base, const std::string& p) {
    const fs::path path(p);
    return path.is_absolute() ? path : base / path;
}

std::size_t trailing_index(const std::string& label) {
    std::size_t end = label.size();
    std::size_t begin = end;
    while (begin > 0 && std::isdigit(static_cast<unsigned char>(label[begin - 1]))) --begin;
    if (begin == end) throw ValidationError("model run label '" + label + "' does not end in a design-row index");
    return std::stoull(label.substr(begin));
}

registration::Feature parse_feature(const std::string& s, const std::string& where) {
    if (s == "min") return registration::Feature::min;
    if (s == "max") return registration::Feature::max;
    throw ConfigError("field '" + where + ".features' entries must be \"min\" or \"max\", got \"" + s + "\"");
}

prediction::BandMode parse_band_mode(const std::string& s) {
    if (s == "symmetric") return prediction::BandMode::symmetric;
    if (s == "shortest") return prediction::BandMode::shortest;
    throw ConfigError("field 'band.mode' must be \"symmetric\" or \"shortest\", got \"" + s + "\"");
}

prediction::TransferMode parse_transfer(const std::string& s) {
    if (s == "additive") return prediction::TransferMode::additive;
    if (s == "multiplicative") return prediction::TransferMode::multiplicative;
    throw ConfigError("field 'condition_b.modes' entries must be \"additive\" or \"multiplicative\", got \"" + s +
                      "\"");
}

const char* transfer_name(prediction::TransferMode m) {
    return m == prediction::TransferMode::additive ? "additive" : "multiplicative";
}

std::size_t positive_count(const config::Section& s, std::string_view key, std::int64_t fallback) {
    const auto v = s.integer_or(key, fallback);
    if (v < 0) throw ConfigError("field '" + s.name() + "." + std::string(key) + "' must be nonnegative");
    return static_cast<std::size_t>(v);
}

void write_json(const fs::path& path, const json& j) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    out << j.dump(2) << '\n';
}

json read_json(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open " + path.string());
    try {
        return json::parse(in);
    } catch (const json::exception& e) {
        throw ParseError(path.string() + ": " + e.what());
    }
}

GridCurve to_grid(const Curve& c, const GridSpec& grid) {
    const auto times = grid.times();
    if (c.t == times) {
        GridCurve g;
        g.grid = grid;
        g.y = c.y;
        g.label = c.label;
        return g;
    }
    return registration::resample_dyadic(c, grid);
}

void write_grid_curve(const fs::path& path, const GridCurve& g) {
    Curve c = g.as_curve();
    write_curve(path, c);
}

wavelet::RetainedIndexSet keep_from_header(const csv::Table& t, int levels) {
    std::vector<std::size_t> idx;
    for (const auto& h : t.header) {
        if (h == "label") continue;
        idx.push_back(wavelet::parse_index_label(h));
    }
    return {levels, std::move(idx)};
}

csv::Table coefficient_table(const std::vector<wavelet::CoeffSet>& sets, const wavelet::RetainedIndexSet& keep) {
    csv::Table t;
    t.header.push_back("label");
    for (const auto& l : keep.labels()) t.header.push_back(l);
    for (const auto& s : sets) {
        t.row_labels.push_back(s.source_label);
        t.rows.push_back(wavelet::restrict(s, keep));
    }
    return t;
}

DesignMatrix design_for(const DesignMatrix& design, const csv::Table& coeffs) {
    std::vector<Curve> stubs;
    for (const auto& label : coeffs.row_labels) {
        Curve c;
        c.label = label;
        c.design_row = trailing_index(label);
        stubs.push_back(std::move(c));
    }
    return select_rows(design, stubs);
}

std::vector<std::vector<double>> columns_of(const csv::Table& t) {
    const std::size_t n = t.rows.empty() ? 0 : t.rows.front().size();
    std::vector<std::vector<double>> cols(n, std::vector<double>(t.rows.size()));
    for (std::size_t r = 0; r < t.rows.size(); ++r)
        for (std::size_t c = 0; c < n; ++c) cols[c][r] = t.rows[r][c];
    return cols;
}

void write_fits(const fs::path& path, const std::vector<emulator::GaspFit>& fits, const std::vector<std::string>& labels,
                const std::vector<std::string>& names) {
    csv::Table t;
    t.header = {"index", "mu", "lambda"};
    for (const auto& n : names) t.header.push_back("alpha." + n);
    for (const auto& n : names) t.header.push_back("beta." + n);
    t.header.emplace_back("loo_rmse");
    for (std::size_t i = 0; i < fits.size(); ++i) {
        const auto& h = fits[i].hyper();
        std::vector<double> row{h.mu, h.lambda};
        row.insert(row.end(), h.alpha.begin(), h.alpha.end());
        row.insert(row.end(), h.beta.begin(), h.beta.end());
        row.push_back(fits[i].leave_one_out().rmse());
        t.row_labels.push_back(labels[i]);
        t.rows.push_back(std::move(row));
    }
    csv::write_table(path, t);
}

std::vector<emulator::GaspFit> fit_coefficients(const RunConfig& cfg, const DesignMatrix& design,
                                                const csv::Table& coeffs, std::string_view purpose) {
    const auto cols = columns_of(coeffs);
    std::vector<std::string> labels(coeffs.header.begin() + 1, coeffs.header.end());
    emulator::FitOptions opts = cfg.gasp;
    opts.seed = derived_seed(cfg.seed, purpose);
    return emulator::fit_many(design, cols, opts, cfg.threads, labels);
}

std::vector<Curve> load_grid_curves(const fs::path& dir, CurveKind kind, const RunConfig& cfg) {
    CurveLoadOptions opts;
    if (kind == CurveKind::model) opts.deleted = cfg.deleted_runs;
    return load_curves(dir, kind, opts);
}

// Files each stage is responsible for; the first one marks completion.
const std::vector<std::string>& stage_outputs(Stage s) {
    static const std::vector<std::string> reg{"anchors.csv"};
    static const std::vector<std::string> dec{kCoeffsModel, kCoeffsField};
    static const std::vector<std::string> fit{kFitsFile};
    static const std::vector<std::string> cal{kDraws, kDrawsMeta, kTrace};
    static const std::vector<std::string> pred{"band_reality.csv", "band_bias.csv", "band_new_run.csv",
                                               "pure_model.csv", "band_model_diff.csv"};
    static const std::vector<std::string> ext{kExtrapMeta};
    switch (s) {
    case Stage::register_: return reg;
    case Stage::decompose: return dec;
    case Stage::fit: return fit;
    case Stage::calibrate: return cal;
    case Stage::predict: return pred;
    case Stage::extrapolate: return ext;
    }
    return reg;
}

// ---------------------------------------------------------------- stages

void stage_register(const RunConfig& cfg) {
    const auto model = load_grid_curves(cfg.model_dir, CurveKind::model, cfg);
    const auto field = load_grid_curves(cfg.field_dir, CurveKind::field, cfg);
    if (model.empty()) throw ValidationError("no model runs in " + cfg.model_dir.string());
    if (field.size() < 2) throw ValidationError("at least two field replicates are needed in " + cfg.field_dir.string());

    csv::Table anchors;
    anchors.header.push_back("label");
    const bool use_windows = !cfg.windows.empty();
    registration::AnchorSet ref;
    if (use_windows) {
        registration::validate(cfg.windows);
        const auto reference = registration::build_reference_curve(model, cfg.grid);
        ref = registration::locate_anchors(reference, cfg.windows);
        for (std::size_t a = 0; a < ref.times.size(); ++a) anchors.header.push_back("a" + std::to_string(a + 1));
        anchors.row_labels.push_back("reference");
        anchors.rows.push_back(ref.times);
    }
    auto process = [&](const Curve& c, bool warp, const fs::path& dir) {
        Curve out = c;
        if (use_windows && warp) {
            const auto src = registration::locate_anchors(c, cfg.windows);
            anchors.row_labels.push_back(c.label);
            anchors.rows.push_back(src.times);
            out = registration::register_curve(c, src, ref);
        }
        GridCurve g = registration::resample_dyadic(out, cfg.grid);
        g.label = c.label;
        write_grid_curve(dir / (c.label + ".csv"), g);
    };
    fs::remove_all(cfg.out / "registered");
    for (const auto& c : field) process(c, true, cfg.out / "registered" / "field");
    for (const auto& c : model) process(c, cfg.register_model_runs, cfg.out / "registered" / "model");
    if (anchors.header.size() == 1) anchors.header.push_back("none");
    if (!use_windows) {
        anchors.row_labels.push_back("reference");
        anchors.rows.push_back({0.0});
    }
    csv::write_table(cfg.out / "anchors.csv", anchors);
    spdlog::info("registered {} field curves and {} model runs", field.size(), model.size());
}

void stage_decompose(const RunConfig& cfg) {
    const auto model = load_grid_curves(cfg.out / "registered" / "model", CurveKind::model, cfg);
    const auto field = load_grid_curves(cfg.out / "registered" / "field", CurveKind::field, cfg);
    std::vector<wavelet::CoeffSet> mc;
    std::vector<wavelet::CoeffSet> fc;
    for (const auto& c : model) mc.push_back(wavelet::dwt(to_grid(c, cfg.grid)));
    for (const auto& c : field) fc.push_back(wavelet::dwt(to_grid(c, cfg.grid)));
    std::vector<wavelet::CoeffSet> all = mc;
    all.insert(all.end(), fc.begin(), fc.end());
    const auto keep = wavelet::threshold_union(all, cfg.keep_levels, cfg.pct);
    csv::write_table(cfg.out / kCoeffsModel, coefficient_table(mc, keep));
    csv::write_table(cfg.out / kCoeffsField, coefficient_table(fc, keep));
    spdlog::info("retained {} of {} coefficients", keep.size(), cfg.grid.size());
}

void stage_fit(const RunConfig& cfg) {
    const auto coeffs = csv::read_table(cfg.out / kCoeffsModel, true);
    const auto map = load_iu_map(cfg.iumap);
    const auto design = design_for(read_design(cfg.design), coeffs);
    if (design.cols != map.dims())
        throw ValidationError("design has " + std::to_string(design.cols) + " columns, I/U map has " +
                              std::to_string(map.dims()) + " inputs");
    const auto fits = fit_coefficients(cfg, design, coeffs, "fit");
    std::vector<std::string> labels(coeffs.header.begin() + 1, coeffs.header.end());
    write_fits(cfg.out / kFitsFile, fits, labels, map.names());
    spdlog::info("fitted {} emulators on {} runs", fits.size(), design.rows);
}

struct Loaded {
    IUMap map;
    wavelet::RetainedIndexSet keep;
    std::vector<emulator::GaspFit> fits;
};

Loaded load_fitted(const RunConfig& cfg) {
    Loaded l;
    l.map = load_iu_map(cfg.iumap);
    const auto coeffs = csv::read_table(cfg.out / kCoeffsModel, true);
    l.keep = keep_from_header(coeffs, cfg.grid.levels);
    const auto design = design_for(read_design(cfg.design), coeffs);
    l.fits = load_fits(cfg.out / kFitsFile, design, coeffs, cfg.gasp.nugget);
    return l;
}

void stage_calibrate(const RunConfig& cfg) {
    const Loaded l = load_fitted(cfg);
    const auto field = csv::read_table(cfg.out / kCoeffsField, true);
    const auto summary = calibration::field_summaries(field.rows);
    calibration::McmcConfig mc = cfg.mcmc;
    mc.seed = cfg.seed;
    const auto result = calibration::run_mcmc(summary, calibration::make_predictor(l.fits), l.map, l.keep, mc);
    calibration::write_draws(cfg.out / kDraws, result.draws);
    calibration::write_trace(cfg.out / kTrace, result.trace);
    json meta;
    meta["seed"] = cfg.seed;
    meta["draws"] = result.draws.size();
    meta["thin"] = mc.thin;
    meta["burn_in"] = mc.burn_in;
    meta["n_rep"] = summary.n_rep;
    meta["accept_tau"] = result.accept_tau;
    meta["accept_du"] = result.accept_du;
    meta["s2_floored"] = result.s2_floored;
    meta["retained"] = l.keep.size();
    write_json(cfg.out / kDrawsMeta, meta);
}

void stage_predict(const RunConfig& cfg) {
    const Loaded l = load_fitted(cfg);
    const auto draws = calibration::read_draws(cfg.out / kDraws, cfg.grid.levels);
    const auto bias = prediction::predict_bias(draws, cfg.grid, cfg.band);
    prediction::write_band(cfg.out / "band_bias.csv", bias.band);
    const auto reality = prediction::predict_reality(draws, cfg.grid, cfg.band);
    prediction::write_band(cfg.out / "band_reality.csv", reality.band);
    Rng rng = make_stream(cfg.seed, "new-run");
    const auto new_run = prediction::predict_new_field_run(draws, cfg.grid, rng, cfg.band);
    prediction::write_band(cfg.out / "band_new_run.csv", new_run.band);

    const GridCurve pure = prediction::pure_model_prediction(draws, l.fits, l.map, cfg.grid);
    write_grid_curve(cfg.out / "pure_model.csv", pure);
    const GridCurve model = cfg.external_model_run ? to_grid(read_curve(*cfg.external_model_run), cfg.grid) : pure;
    const auto diff = prediction::model_difference(reality.ensemble, model, cfg.band);
    prediction::write_band(cfg.out / "band_model_diff.csv", diff.band);
}

void stage_extrapolate(const RunConfig& cfg) {
    const Loaded l = load_fitted(cfg);
    const auto draws = calibration::read_draws(cfg.out / kDraws, cfg.grid.levels);
    json meta;
    if (cfg.shifted_run && cfg.nominal_run) {
        const auto reality = prediction::predict_reality(draws, cfg.grid, cfg.band);
        const auto shifted = to_grid(read_curve(*cfg.shifted_run), cfg.grid);
        const auto nominal = to_grid(read_curve(*cfg.nominal_run), cfg.grid);
        const auto out = prediction::extrapolate_delta_shift(reality, shifted, nominal);
        prediction::write_band(cfg.out / "band_delta_shift.csv", out.band);
        meta["delta_shift"] = "band_delta_shift.csv";
    }
    if (cfg.same_type) {
        Rng rng = make_stream(cfg.seed, "same-type");
        const auto out = prediction::extrapolate_same_type(draws, l.fits, l.map, cfg.grid, rng, cfg.band);
        prediction::write_band(cfg.out / "band_same_type.csv", out.band);
        meta["same_type"] = "band_same_type.csv";
    }
    if (cfg.condition_b) {
        const auto& b = *cfg.condition_b;
        const auto map_b = load_iu_map(b.iumap);
        CurveLoadOptions opts;
        auto runs = load_curves(b.model, CurveKind::model, opts);
        std::vector<wavelet::CoeffSet> sets;
        for (const auto& c : runs) sets.push_back(wavelet::dwt(to_grid(c, cfg.grid)));
        const auto coeffs = coefficient_table(sets, l.keep);
        csv::write_table(cfg.out / kCoeffsModelB, coeffs);
        const auto design = design_for(read_design(b.design), coeffs);
        const auto fits_b = fit_coefficients(cfg, design, coeffs, "fit-b");
        std::vector<std::string> labels(coeffs.header.begin() + 1, coeffs.header.end());
        write_fits(cfg.out / kFitsFileB, fits_b, labels, map_b.names());
        const auto pure = prediction::pure_model_prediction(draws, l.fits, l.map, cfg.grid);
        for (auto mode : b.modes) {
            Rng rng = make_stream(cfg.seed, "condition-b");
            const auto out = prediction::extrapolate_new_nominals(draws, fits_b, map_b, cfg.grid, mode, rng, cfg.band,
                                                                  b.eps_guard, &pure);
            const std::string name = std::string("band_b_") + transfer_name(mode) + ".csv";
            prediction::write_band(cfg.out / name, out.result.band);
            meta[std::string("condition_b_") + transfer_name(mode)] = {
                {"band", name}, {"fallbacks", out.fallbacks}, {"eps_guard", out.eps_guard}};
            if (out.fallbacks > 0)
                spdlog::warn("{} grid points used the additive fallback (guard {})", out.fallbacks, out.eps_guard);
        }
    }
    write_json(cfg.out / kExtrapMeta, meta);
}

void write_manifest(const RunConfig& cfg) {
    json m;
    m["config"] = cfg.source.filename().generic_string();
    m["seed"] = cfg.seed;
    m["grid"] = {{"levels", cfg.grid.levels}, {"t0", cfg.grid.t0}, {"t1", cfg.grid.t1}};
    json artifacts = json::array();
    for (Stage s : all_stages()) {
        for (const auto& f : stage_outputs(s))
            if (fs::exists(cfg.out / f)) artifacts.push_back(f);
    }
    for (const char* f : {"anchors.csv", kCoeffsModelB, kFitsFileB, "band_delta_shift.csv", "band_same_type.csv",
                          "band_b_additive.csv", "band_b_multiplicative.csv"}) {
        if (fs::exists(cfg.out / f) &&
            std::find(artifacts.begin(), artifacts.end(), json(f)) == artifacts.end())
            artifacts.push_back(f);
    }
    m["artifacts"] = artifacts;
    if (fs::exists(cfg.out / kCoeffsModel)) {
        const auto cm = csv::read_table(cfg.out / kCoeffsModel, true);
        m["retained"] = cm.header.size() - 1;
        m["model_runs"] = cm.rows.size();
        m["inputs"] = load_iu_map(cfg.iumap).dims();
    }
    if (fs::exists(cfg.out / kCoeffsField)) m["n_rep"] = csv::read_table(cfg.out / kCoeffsField, true).rows.size();
    if (fs::exists(cfg.out / kFitsFile)) {
        const auto fits = csv::read_table(cfg.out / kFitsFile, true);
        double sum = 0.0;
        double worst = 0.0;
        for (const auto& r : fits.rows) {
            sum += r.back();
            worst = std::max(worst, r.back());
        }
        m["loo_rmse"] = {{"mean", fits.rows.empty() ? 0.0 : sum / static_cast<double>(fits.rows.size())},
                         {"max", worst}};
    }
    if (fs::exists(cfg.out / kDrawsMeta)) m["mcmc"] = read_json(cfg.out / kDrawsMeta);
    if (fs::exists(cfg.out / kExtrapMeta)) m["extrapolation"] = read_json(cfg.out / kExtrapMeta);
    write_json(cfg.out / "manifest.json", m);
}

std::string last_good_artifact(const RunConfig& cfg, Stage failed) {
    std::string last = "none";
    for (Stage s : all_stages()) {
        if (s == failed) break;
        const auto& outs = stage_outputs(s);
        if (fs::exists(cfg.out / outs.front())) last = (cfg.out / outs.front()).generic_string();
    }
    return last;
}

} // namespace

const char* stage_name(Stage s) {
    switch (s) {
    case Stage::register_: return "register";
    case Stage::decompose: return "decompose";
    case Stage::fit: return "fit";
    case Stage::calibrate: return "calibrate";
    case Stage::predict: return "predict";
    case Stage::extrapolate: return "extrapolate";
    }
    return "?";
}

Stage parse_stage(const std::string& name) {
    for (Stage s : all_stages())
        if (name == stage_name(s)) return s;
    throw ArgumentError("unknown stage '" + name + "'");
}

const std::vector<Stage>& all_stages() {
    static const std::vector<Stage> stages{Stage::register_, Stage::decompose, Stage::fit,
                                           Stage::calibrate, Stage::predict,   Stage::extrapolate};
    return stages;
}

RunConfig parse_run_config(const config::Document& doc, const fs::path& base, const fs::path& source) {
    RunConfig cfg;
    cfg.source = source;
    const auto& root = doc.root();
    if (!root.has("seed")) throw ConfigError("missing field 'seed'");
    const auto seed = root.integer("seed");
    if (seed < 0) throw ConfigError("field 'seed' must be nonnegative");
    cfg.seed = static_cast<std::uint64_t>(seed);
    cfg.threads = std::max<std::size_t>(1, positive_count(root, "threads", 1));

    const auto& paths = doc.section("paths");
    cfg.iumap = resolve(base, paths.string("iumap"));
    cfg.design = resolve(base, paths.string("design"));
    cfg.model_dir = resolve(base, paths.string("model"));
    cfg.field_dir = resolve(base, paths.string("field"));
    cfg.out = resolve(base, paths.string_or("out", "out"));
    if (paths.has("deleted")) cfg.deleted_runs = paths.strings("deleted");

    const auto& grid = doc.section("grid");
    cfg.grid.levels = static_cast<int>(grid.integer_or("levels", 12));
    if (cfg.grid.levels < 1 || cfg.grid.levels > 24) throw ConfigError("field 'grid.levels' must lie in [1, 24]");
    cfg.grid.t0 = grid.number("t0");
    cfg.grid.t1 = grid.number("t1");
    if (!(cfg.grid.t0 < cfg.grid.t1)) throw ConfigError("field 'grid.t1' must exceed 'grid.t0'");

    for (const auto* w : doc.with_prefix("window")) {
        registration::EventWindow ew;
        ew.lo = w->number("lo");
        ew.hi = w->number("hi");
        for (const auto& f : w->strings("features")) ew.features.push_back(parse_feature(f, w->name()));
        cfg.windows.push_back(std::move(ew));
    }
    cfg.register_model_runs = doc.section("registration").boolean_or("model", false);

    const auto& wv = doc.section("wavelet");
    cfg.keep_levels = static_cast<int>(wv.integer_or("keep_levels", 3));
    cfg.pct = wv.number_or("pct", 0.025);

    const auto& gp = doc.section("gasp");
    cfg.gasp.nugget = gp.number_or("nugget", 1e-8);
    cfg.gasp.n_starts = positive_count(gp, "starts", 0);
    cfg.gasp.max_evals = positive_count(gp, "max_evals", 0);

    const auto& mc = doc.section("mcmc");
    cfg.mcmc.n_saved = positive_count(mc, "draws", 1000);
    cfg.mcmc.thin = positive_count(mc, "thin", 200);
    cfg.mcmc.burn_in = positive_count(mc, "burn_in", 0);
    cfg.mcmc.tau_halfwidth = mc.number_or("tau_halfwidth", 0.7);
    cfg.mcmc.local_halfwidth = mc.number_or("local_halfwidth", 0.05);
    cfg.mcmc.tau2_max = mc.number_or("tau2_max", std::numeric_limits<double>::infinity());
    if (cfg.mcmc.n_saved == 0 || cfg.mcmc.thin == 0) throw ConfigError("fields 'mcmc.draws' and 'mcmc.thin' must be positive");

    const auto& band = doc.section("band");
    cfg.band.alpha = band.number_or("alpha", 0.1);
    cfg.band.mode = parse_band_mode(band.string_or("mode", "symmetric"));

    const auto& ex = doc.section("extrapolate");
    if (ex.has("shifted_run")) cfg.shifted_run = resolve(base, ex.string("shifted_run"));
    if (ex.has("nominal_run")) cfg.nominal_run = resolve(base, ex.string("nominal_run"));
    if (ex.has("external_model_run")) cfg.external_model_run = resolve(base, ex.string("external_model_run"));
    if (cfg.shifted_run.has_value() != cfg.nominal_run.has_value())
        throw ConfigError("fields 'extrapolate.shifted_run' and 'extrapolate.nominal_run' must be given together");
    cfg.same_type = ex.boolean_or("same_type", true);

    if (const auto* b = doc.find("condition_b")) {
        ShiftedSystem s;
        s.iumap = resolve(base, b->string("iumap"));
        s.design = resolve(base, b->string("design"));
        s.model = resolve(base, b->string("model"));
        const auto modes = b->has("modes") ? b->strings("modes") : std::vector<std::string>{"additive"};
        for (const auto& m : modes) s.modes.push_back(parse_transfer(m));
        if (b->has("eps_guard")) s.eps_guard = b->number("eps_guard");
        cfg.condition_b = std::move(s);
    }
    return cfg;
}

RunConfig load_run_config(const fs::path& path) {
    const auto doc = config::load(path);
    return parse_run_config(doc, path.parent_path(), path);
}

void validate(const RunConfig& cfg) {
    auto need = [](const fs::path& p, const char* what) {
        if (!fs::exists(p)) throw ConfigError(std::string(what) + " not found: " + p.string());
    };
    need(cfg.iumap, "I/U map");
    need(cfg.design, "design");
    need(cfg.model_dir, "model-run directory");
    need(cfg.field_dir, "field directory");
    if (cfg.shifted_run) need(*cfg.shifted_run, "shifted run");
    if (cfg.nominal_run) need(*cfg.nominal_run, "nominal run");
    if (cfg.external_model_run) need(*cfg.external_model_run, "external model run");
    if (cfg.condition_b) {
        need(cfg.condition_b->iumap, "condition-B I/U map");
        need(cfg.condition_b->design, "condition-B design");
        need(cfg.condition_b->model, "condition-B model-run directory");
    }
    registration::validate(cfg.windows);
}

std::vector<emulator::GaspFit> load_fits(const fs::path& fits_csv, const DesignMatrix& design,
                                         const csv::Table& coeffs_model, double nugget) {
    const auto t = csv::read_table(fits_csv, true);
    const std::size_t d = design.cols;
    if (t.header.size() != 4 + 2 * d) throw ParseError(fits_csv.string() + ": unexpected column count");
    const auto cols = columns_of(coeffs_model);
    if (t.rows.size() != cols.size())
        throw ParseError(fits_csv.string() + ": " + std::to_string(t.rows.size()) + " fits for " +
                         std::to_string(cols.size()) + " retained coefficients");
    std::vector<emulator::GaspFit> fits;
    fits.reserve(cols.size());
    for (std::size_t i = 0; i < cols.size(); ++i) {
        if (t.row_labels[i] != coeffs_model.header[i + 1])
            throw ParseError(fits_csv.string() + ": row " + std::to_string(i + 1) + " is for '" + t.row_labels[i] +
                             "', expected '" + coeffs_model.header[i + 1] + "'");
        const auto& r = t.rows[i];
        emulator::GaspHyper h;
        h.mu = r[0];
        h.lambda = r[1];
        h.alpha.assign(r.begin() + 2, r.begin() + 2 + static_cast<std::ptrdiff_t>(d));
        h.beta.assign(r.begin() + 2 + static_cast<std::ptrdiff_t>(d), r.begin() + 2 + 2 * static_cast<std::ptrdiff_t>(d));
        fits.push_back(emulator::GaspFit::with_hyper(design, cols[i], std::move(h), nugget));
    }
    return fits;
}

void run_stage(const RunConfig& cfg, Stage stage) {
    spdlog::info("stage {}", stage_name(stage));
    try {
        switch (stage) {
        case Stage::register_: stage_register(cfg); break;
        case Stage::decompose: stage_decompose(cfg); break;
        case Stage::fit: stage_fit(cfg); break;
        case Stage::calibrate: stage_calibrate(cfg); break;
        case Stage::predict: stage_predict(cfg); break;
        case Stage::extrapolate: stage_extrapolate(cfg); break;
        }
        write_manifest(cfg);
    } catch (const StageError&) {
        throw;
    } catch (const std::exception& e) {
        throw StageError(stage_name(stage), std::string(e.what()) + " (last good artifact: " +
                                                last_good_artifact(cfg, stage) + ")");
    }
}

void run_pipeline(const RunConfig& cfg) {
    try {
        validate(cfg);
    } catch (const std::exception& e) {
        throw StageError("config", e.what());
    }
    for (Stage s : all_stages()) run_stage(cfg, s);
}

} // namespace wavecal::pipeline
