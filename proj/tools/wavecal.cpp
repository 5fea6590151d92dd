// Command-line front end: one subcommand per pipeline stage, `all` for the
// whole chain, and `synth` to generate the synthetic test bed.

#include "wavecal/errors.hpp"
#include "wavecal/pipeline.hpp"
#include "wavecal/synth.hpp"

#include <CLI11.hpp>
#include <spdlog/spdlog.h>

#include <cstdio>
#include <optional>
#include <string>

namespace {

struct Common {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::string out;
};

void add_common(CLI::App* app, Common& c) {
    app->add_option("--config", c.config, "Run configuration file")->required()->check(CLI::ExistingFile);
    app->add_option("--seed", c.seed, "Override the configured master seed");
    app->add_option("--out", c.out, "Override the output directory");
}

wavecal::pipeline::RunConfig load(const Common& c) {
    try {
        auto cfg = wavecal::pipeline::load_run_config(c.config);
        if (c.seed) cfg.seed = *c.seed;
        if (!c.out.empty()) cfg.out = c.out;
        return cfg;
    } catch (const wavecal::Error& e) {
        throw wavecal::StageError("config", e.what());
    }
}

wavecal::synth::BiasKind parse_bias(const std::string& s) {
    if (s == "zero") return wavecal::synth::BiasKind::zero;
    if (s == "additive") return wavecal::synth::BiasKind::additive;
    return wavecal::synth::BiasKind::multiplicative;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Wavelet-domain calibration and validation of functional computer models"};
    app.require_subcommand(1);
    bool verbose = false;
    app.add_flag("-v,--verbose", verbose, "Log debug messages");

    Common common;
    std::string start_stage;
    std::vector<std::pair<CLI::App*, wavecal::pipeline::Stage>> stage_cmds;
    for (auto s : wavecal::pipeline::all_stages()) {
        auto* sub = app.add_subcommand(wavecal::pipeline::stage_name(s), std::string("Run the ") +
                                                                             wavecal::pipeline::stage_name(s) + " stage");
        add_common(sub, common);
        stage_cmds.emplace_back(sub, s);
    }
    auto* all = app.add_subcommand("all", "Run every stage in order");
    add_common(all, common);
    all->add_option("--stage", start_stage, "Resume from this stage");

    std::string synth_out;
    std::uint64_t synth_seed = 1;
    std::string bias = "additive";
    wavecal::synth::SynthSpec spec;
    auto* synth = app.add_subcommand("synth", "Generate the synthetic test bed and a run config");
    synth->add_option("--out", synth_out, "Output directory")->required();
    synth->add_option("--seed", synth_seed, "Generator seed (also written to the config)");
    synth->add_option("--bias", bias, "Planted bias")->check(CLI::IsMember({"zero", "additive", "multiplicative"}));
    synth->add_option("--levels", spec.levels, "Grid levels (2^levels points)");
    synth->add_option("--runs", spec.runs, "Number of model runs");
    synth->add_option("--reps", spec.n_rep, "Number of field replicates");
    synth->add_option("--noise", spec.noise_sd, "Noise sd per coarse-level wavelet coefficient");
    synth->add_option("--fine-noise", spec.fine_noise_sd, "Noise sd per fine-level wavelet coefficient");
    synth->add_option("--pct", spec.pct, "Thresholding fraction written to the config");
    synth->add_option("--width", spec.event_width, "Event width (time units)");

    CLI11_PARSE(app, argc, argv);
    spdlog::set_level(verbose ? spdlog::level::debug : spdlog::level::info);

    try {
        if (synth->parsed()) {
            spec.bias_kind = parse_bias(bias);
            const auto data = wavecal::synth::generate(spec, synth_seed);
            const auto cfg = wavecal::synth::write_dataset(synth_out, data, spec, synth_seed);
            std::printf("%s\n", cfg.string().c_str());
            return 0;
        }
        const auto cfg = load(common);
        if (all->parsed()) {
            try {
                wavecal::pipeline::validate(cfg);
            } catch (const wavecal::Error& e) {
                throw wavecal::StageError("config", e.what());
            }
            bool running = start_stage.empty();
            const auto first = running ? wavecal::pipeline::Stage::register_ : wavecal::pipeline::parse_stage(start_stage);
            for (auto s : wavecal::pipeline::all_stages()) {
                running = running || s == first;
                if (running) wavecal::pipeline::run_stage(cfg, s);
            }
            return 0;
        }
        for (const auto& [sub, stage] : stage_cmds) {
            if (sub->parsed()) wavecal::pipeline::run_stage(cfg, stage);
        }
        return 0;
    } catch (const wavecal::StageError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
}
