#include "wavecal/synth.hpp"

#include "wavecal/csv.hpp"
#include "wavecal/errors.hpp"
#include "wavecal/rng.hpp"
#include "wavecal/wavelet.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

namespace wavecal::synth {

namespace {

constexpr double kEventTimes[2] = {8.0, 38.0};
constexpr double kEventScale[2] = {1.0, 0.8};
constexpr double kPeakLag = 2.5;
constexpr double kRingDelay = 5.0;
constexpr double kRingFreq = 2.0;

double bump(double s) { return std::exp(-0.5 * s * s); }

struct Truth {
    std::vector<double> coded;
    BiasKind kind;
    double scale;
    double width;

    double model(double t) const { return model_value(coded, t, width); }
    double operator()(double t) const {
        const double y = model(t);
        switch (kind) {
        case BiasKind::zero:
            return y;
        case BiasKind::additive:
            return y + scale * additive_bias(t);
        case BiasKind::multiplicative:
            return y * (1.0 + scale * multiplicative_bias(t));
        }
        return y;
    }
};

std::vector<double> coded_inputs(const IUMap& map, std::span<const double> delta, std::span<const double> u) {
    return map.from_unit(map.to_unit(delta, u));
}

std::vector<double> on_grid(const GridSpec& grid, const auto& f) {
    std::vector<double> y(grid.size());
    for (std::size_t k = 0; k < y.size(); ++k) y[k] = f(grid.at(k));
    return y;
}

Curve grid_run(const GridSpec& grid, std::span<const double> coded, double width, std::string label) {
    Curve c;
    c.t = grid.times();
    c.y = model_curve(coded, c.t, width);
    c.label = std::move(label);
    return c;
}

std::vector<Curve> model_runs(const IUMap& map, const DesignMatrix& design, const GridSpec& grid, double width) {
    std::vector<Curve> runs;
    for (std::size_t k = 0; k < design.rows; ++k) {
        char label[32];
        std::snprintf(label, sizeof label, "run_%03zu", k);
        Curve c = grid_run(grid, map.from_unit(design.row(k)), width, label);
        c.design_row = k;
        runs.push_back(std::move(c));
    }
    return runs;
}

void check_truth(const IUMap& map, std::span<const double> delta, std::span<const double> u) {
    if (delta.size() != map.n_variation() || u.size() != map.n_calibration())
        throw ConfigError("synthetic truth has the wrong number of inputs");
    const auto z = map.to_unit(delta, u);
    for (double v : z)
        if (v < 0.0 || v > 1.0) throw ConfigError("synthetic truth lies outside the input ranges");
    std::size_t di = 0;
    for (const auto& e : map.entries) {
        if (e.role != Role::variation) continue;
        const auto& p = std::get<TruncNormalPrior>(e.prior);
        if (delta[di] < p.lo || delta[di] > p.hi) throw ConfigError("synthetic variation outside its truncation box");
        ++di;
    }
}

std::string quoted(const std::filesystem::path& p) { return "\"" + p.generic_string() + "\""; }

void write_iu_map(const std::filesystem::path& path, const IUMap& map) {
    std::ofstream out(path, std::ios::binary);
    for (const auto& e : map.entries) {
        out << "[param." << e.name << "]\n";
        out << "role = \"" << (e.role == Role::calibration ? "calibration" : "variation") << "\"\n";
        out << "range = [" << csv::format_double(e.lo) << ", " << csv::format_double(e.hi) << "]\n";
        if (e.role == Role::variation) {
            const auto& p = std::get<TruncNormalPrior>(e.prior);
            out << "sd = " << csv::format_double(p.sd) << "\n";
            out << "truncation = " << csv::format_double(p.hi) << "\n";
        }
        out << "\n";
    }
}

void write_grid_truth(const std::filesystem::path& path, const GridSpec& grid, const std::vector<double>& y) {
    csv::Table t;
    t.header = {"t", "y"};
    for (std::size_t k = 0; k < y.size(); ++k) t.rows.push_back({grid.at(k), y[k]});
    csv::write_table(path, t);
}

} // namespace

double model_value(std::span<const double> c, double t, double width) {
    const double x1 = c[0] - 0.5;
    const double x2 = c[1] - 0.5;
    const double u1 = c[2] - 0.5;
    const double u2 = c[3];
    double y = 6.0 + 3.0 * x1 + x2;
    for (int e = 0; e < 2; ++e) {
        const double T = kEventTimes[e];
        const double a = kEventScale[e] * (3.5 + 2.0 * x2 + 1.5 * u1);
        const double b = kEventScale[e] * (3.0 + 4.0 * x1 + u1);
        y += -a * bump((t - T) / width) + b * bump((t - T - kPeakLag) / width);
        const double s = t - T - kRingDelay;
        if (s >= 0.0) {
            const double amp = kEventScale[e] * (1.2 + u1);
            const double zeta = 0.15 + 0.9 * u2;
            y += amp * std::exp(-zeta * s) * std::sin(kRingFreq * s);
        }
    }
    return y;
}

std::vector<double> model_curve(std::span<const double> coded, std::span<const double> times, double width) {
    std::vector<double> y(times.size());
    for (std::size_t k = 0; k < y.size(); ++k) y[k] = model_value(coded, times[k], width);
    return y;
}

double additive_bias(double t) { return 0.35 + 0.6 * bump((t - 24.0) / 3.0) - 0.5 * bump((t - 52.0) / 4.0); }

double multiplicative_bias(double t) {
    return 0.08 + 0.12 * bump((t - kEventTimes[0] - kPeakLag) / 3.0) +
           0.12 * bump((t - kEventTimes[1] - kPeakLag) / 3.0);
}

IUMap iu_map(const SynthSpec& spec, bool shifted_system) {
    IUMap map;
    auto variation = [&](std::string name, double lo, double hi) {
        ParameterSpec e;
        e.name = std::move(name);
        e.role = Role::variation;
        e.lo = lo;
        e.hi = hi;
        e.prior = TruncNormalPrior{0.0, spec.variation_sd, -spec.variation_truncation, spec.variation_truncation};
        map.entries.push_back(std::move(e));
    };
    auto calibration = [&](std::string name, double lo, double hi) {
        ParameterSpec e;
        e.name = std::move(name);
        e.role = Role::calibration;
        e.lo = lo;
        e.hi = hi;
        e.prior = UniformPrior{lo, hi};
        map.entries.push_back(std::move(e));
    };
    const double s1 = shifted_system && !spec.shift_b.empty() ? spec.shift_b[0] : 0.0;
    const double s2 = shifted_system && spec.shift_b.size() > 1 ? spec.shift_b[1] : 0.0;
    variation("x1", 1.0 / 6.0 + s1, 5.0 / 6.0 + s1);
    variation("x2", 5.0 / 24.0 + s2, 19.0 / 24.0 + s2);
    calibration("u1", 0.125, 0.875);
    calibration("u2", 0.125, 0.875);
    validate(map);
    return map;
}

std::vector<registration::EventWindow> event_windows() {
    using registration::Feature;
    return {{6.0, 12.0, {Feature::min, Feature::max}}, {35.0, 42.0, {Feature::min, Feature::max}}};
}

std::vector<double> event_anchor_times() {
    return {kEventTimes[0], kEventTimes[0] + kPeakLag, kEventTimes[1], kEventTimes[1] + kPeakLag};
}

Dataset generate(const SynthSpec& spec, std::uint64_t seed) {
    if (spec.n_rep < 2) throw ConfigError("synthetic bed needs at least two replicates");
    if (spec.runs < 2) throw ConfigError("synthetic bed needs at least two model runs");
    Dataset data;
    data.grid = GridSpec{spec.levels, spec.t0, spec.t1};
    data.map = iu_map(spec);
    check_truth(data.map, spec.true_delta, spec.true_u);

    Rng design_rng = make_stream(seed, "synth-design");
    data.design = generate_lhd(spec.runs, data.map.dims(), spec.lhd_restarts, design_rng());
    data.design.column_names = data.map.names();
    data.model_runs = model_runs(data.map, data.design, data.grid, spec.event_width);

    const Truth truth{coded_inputs(data.map, spec.true_delta, spec.true_u), spec.bias_kind, spec.bias_scale, spec.event_width};
    data.reality = on_grid(data.grid, truth);
    data.model_at_truth = on_grid(data.grid, [&](double t) { return truth.model(t); });
    data.bias.resize(data.reality.size());
    for (std::size_t k = 0; k < data.bias.size(); ++k) data.bias[k] = data.reality[k] - data.model_at_truth[k];

    // Field replicates: jittered events plus white noise in the wavelet domain.
    Rng field_rng = make_stream(seed, "synth-field");
    const auto anchors = event_anchor_times();
    const auto times = data.grid.times();
    for (std::size_t r = 0; r < spec.n_rep; ++r) {
        std::vector<double> src{spec.t0};
        std::vector<double> dst{spec.t0};
        std::vector<double> shifts;
        for (std::size_t e = 0; e < 2; ++e) {
            const double s = spec.jitter > 0.0 ? uniform(field_rng, -spec.jitter, spec.jitter) : 0.0;
            for (std::size_t a = 2 * e; a < 2 * e + 2; ++a) {
                src.push_back(anchors[a] + s);
                dst.push_back(anchors[a]);
                shifts.push_back(s);
            }
        }
        src.push_back(spec.t1);
        dst.push_back(spec.t1);
        std::vector<double> noise(data.grid.size());
        for (std::size_t i = 0; i < noise.size(); ++i) {
            const double sd = wavelet::level_of(i) <= spec.coarse_noise_levels ? spec.noise_sd : spec.fine_noise_sd;
            noise[i] = sd * standard_normal(field_rng);
        }
        wavelet::inverse_transform(noise);
        Curve c;
        c.t = times;
        c.y.resize(times.size());
        for (std::size_t k = 0; k < times.size(); ++k)
            c.y[k] = truth(registration::warp_time(times[k], src, dst)) + noise[k];
        c.label = "rep_" + std::to_string(r);
        data.field.push_back(std::move(c));
        data.jitter.push_back(std::move(shifts));
    }

    if (!spec.shift_b.empty()) {
        data.has_shifted_system = true;
        data.map_b = iu_map(spec, true);
        Rng rng_b = make_stream(seed, "synth-design-b");
        data.design_b = generate_lhd(spec.runs_b, data.map_b.dims(), spec.lhd_restarts, rng_b());
        data.design_b.column_names = data.map_b.names();
        data.model_runs_b = model_runs(data.map_b, data.design_b, data.grid, spec.event_width);
        const Truth truth_b{coded_inputs(data.map_b, spec.true_delta, spec.true_u), spec.bias_kind, spec.bias_scale, spec.event_width};
        data.reality_b = on_grid(data.grid, truth_b);
    }

    if (!spec.delta_shift.empty()) {
        data.has_delta_shift = true;
        const std::vector<double> zero(data.map.n_variation(), 0.0);
        std::vector<double> u_nom;
        for (auto i : data.map.calibration_indices()) u_nom.push_back(data.map.entries[i].nominal());
        data.run_nominal = grid_run(data.grid, coded_inputs(data.map, zero, u_nom), spec.event_width, "nominal");
        data.run_shifted = grid_run(data.grid, coded_inputs(data.map, spec.delta_shift, u_nom), spec.event_width, "shifted");
        std::vector<double> moved(spec.true_delta);
        for (std::size_t k = 0; k < moved.size(); ++k) moved[k] += spec.delta_shift[k];
        auto coded = data.map.from_unit(data.map.to_unit(moved, spec.true_u));
        const Truth truth_s{coded, spec.bias_kind, spec.bias_scale, spec.event_width};
        data.reality_shift = on_grid(data.grid, truth_s);
    }
    return data;
}

std::filesystem::path write_dataset(const std::filesystem::path& dir, const Dataset& data, const SynthSpec& spec,
                                    std::uint64_t seed) {
    namespace fs = std::filesystem;
    fs::create_directories(dir);
    write_iu_map(dir / "iumap.toml", data.map);
    write_design(dir / "design.csv", data.design);
    for (const auto& c : data.model_runs) write_curve(dir / "model" / (c.label + ".csv"), c);
    for (const auto& c : data.field) write_curve(dir / "field" / (c.label + ".csv"), c);
    write_grid_truth(dir / "truth" / "reality.csv", data.grid, data.reality);
    write_grid_truth(dir / "truth" / "bias.csv", data.grid, data.bias);
    write_grid_truth(dir / "truth" / "model_at_truth.csv", data.grid, data.model_at_truth);
    if (data.has_shifted_system) {
        write_iu_map(dir / "iumap_b.toml", data.map_b);
        write_design(dir / "design_b.csv", data.design_b);
        for (const auto& c : data.model_runs_b) write_curve(dir / "model_b" / (c.label + ".csv"), c);
        write_grid_truth(dir / "truth" / "reality_b.csv", data.grid, data.reality_b);
    }
    if (data.has_delta_shift) {
        write_curve(dir / "runs" / "shifted.csv", data.run_shifted);
        write_curve(dir / "runs" / "nominal.csv", data.run_nominal);
        write_grid_truth(dir / "truth" / "reality_shift.csv", data.grid, data.reality_shift);
    }

    std::ostringstream truth;
    truth << "[truth]\n";
    auto list = [](const std::vector<double>& v) {
        std::string s = "[";
        for (std::size_t i = 0; i < v.size(); ++i) s += (i ? ", " : "") + csv::format_double(v[i]);
        return s + "]";
    };
    truth << "delta = " << list(spec.true_delta) << "\n";
    truth << "u = " << list(spec.true_u) << "\n";
    truth << "bias = \""
          << (spec.bias_kind == BiasKind::zero ? "zero"
              : spec.bias_kind == BiasKind::additive ? "additive"
                                                     : "multiplicative")
          << "\"\n";
    truth << "noise_sd = " << csv::format_double(spec.noise_sd) << "\n";
    truth << "coarse_noise_levels = " << spec.coarse_noise_levels << "\n";
    truth << "fine_noise_sd = " << csv::format_double(spec.fine_noise_sd) << "\n";
    truth << "n_rep = " << spec.n_rep << "\n";
    truth << "runs = " << spec.runs << "\n";
    {
        std::ofstream out(dir / "truth" / "truth.toml", std::ios::binary);
        out << truth.str();
    }

    const fs::path config = dir / "config.toml";
    std::ofstream out(config, std::ios::binary);
    out << "seed = " << seed << "\n";
    out << "threads = 1\n\n";
    out << "[paths]\n";
    out << "iumap = " << quoted("iumap.toml") << "\n";
    out << "design = " << quoted("design.csv") << "\n";
    out << "model = " << quoted("model") << "\n";
    out << "field = " << quoted("field") << "\n";
    out << "out = " << quoted("out") << "\n\n";
    out << "[grid]\n";
    out << "levels = " << data.grid.levels << "\n";
    out << "t0 = " << csv::format_double(data.grid.t0) << "\n";
    out << "t1 = " << csv::format_double(data.grid.t1) << "\n\n";
    const auto windows = event_windows();
    for (std::size_t w = 0; w < windows.size(); ++w) {
        out << "[window." << (w + 1) << "]\n";
        out << "lo = " << csv::format_double(windows[w].lo) << "\n";
        out << "hi = " << csv::format_double(windows[w].hi) << "\n";
        out << "features = [";
        for (std::size_t f = 0; f < windows[w].features.size(); ++f)
            out << (f ? ", " : "") << (windows[w].features[f] == registration::Feature::min ? "\"min\"" : "\"max\"");
        out << "]\n\n";
    }
    out << "[wavelet]\nkeep_levels = 3\npct = " << csv::format_double(spec.pct) << "\n\n";
    out << "[gasp]\nnugget = 1e-8\n\n";
    out << "[mcmc]\ndraws = 1000\nthin = 200\n\n";
    out << "[band]\nalpha = 0.1\nmode = \"symmetric\"\n\n";
    out << "[extrapolate]\nsame_type = true\n";
    if (data.has_delta_shift) {
        out << "shifted_run = " << quoted("runs/shifted.csv") << "\n";
        out << "nominal_run = " << quoted("runs/nominal.csv") << "\n";
    }
    out << "\n";
    if (data.has_shifted_system) {
        out << "[condition_b]\n";
        out << "iumap = " << quoted("iumap_b.toml") << "\n";
        out << "design = " << quoted("design_b.csv") << "\n";
        out << "model = " << quoted("model_b") << "\n";
        out << "modes = [\"additive\", \"multiplicative\"]\n";
    }
    return config;
}

} // namespace wavecal::synth
