// Acceptance suite: one PASS/FAIL line per criterion. Exit status is nonzero
// if any criterion fails.

#include "wavecal/calibration.hpp"
#include "wavecal/emulator.hpp"
#include "wavecal/errors.hpp"
#include "wavecal/io_design.hpp"
#include "wavecal/pipeline.hpp"
#include "wavecal/prediction.hpp"
#include "wavecal/registration.hpp"
#include "wavecal/rng.hpp"
#include "wavecal/synth.hpp"
#include "wavecal/wavelet.hpp"

#include <Eigen/Dense>
#include <boost/math/distributions/normal.hpp>
#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iterator>
#include <numbers>
#include <set>
#include <sstream>

using namespace wavecal;
namespace fs = std::filesystem;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

int failures = 0;

void report(int id, const std::string& name, const std::function<Outcome()>& check) {
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
        o = check();
    } catch (const std::exception& e) {
        o = {false, std::string("exception: ") + e.what()};
    }
    if (!o.pass) ++failures;
    std::printf("%s %2d %s: %s [%.1f s]\n", o.pass ? "PASS" : "FAIL", id, name.c_str(), o.detail.c_str(),
                seconds_since(t0));
    std::fflush(stdout);
}

std::vector<double> normals(std::size_t n, Rng& rng) {
    std::vector<double> v(n);
    for (auto& x : v) x = standard_normal(rng);
    return v;
}

// ---------------------------------------------------------------- wavelets

Outcome wavelet_round_trip() {
    const auto t0 = std::chrono::steady_clock::now();
    Rng rng = make_stream(1, "acceptance-wavelet");
    const GridSpec grid{12, 0.0, 1.0};
    double worst = 0.0, worst_energy = 0.0;
    for (int rep = 0; rep < 100; ++rep) {
        GridCurve g{grid, normals(grid.size(), rng), "r"};
        const auto c = wavelet::dwt(g);
        const auto back = wavelet::idwt(c, grid);
        double et = 0.0, ec = 0.0;
        for (std::size_t k = 0; k < g.y.size(); ++k) {
            worst = std::max(worst, std::abs(back.y[k] - g.y[k]));
            et += g.y[k] * g.y[k];
            ec += c.coeffs[k] * c.coeffs[k];
        }
        worst_energy = std::max(worst_energy, std::abs(ec - et) / et);
    }
    const double secs = seconds_since(t0);
    return {worst <= 1e-10 && worst_energy <= 1e-9 && secs < 5.0,
            fmt::format("max error {:.2e}, energy error {:.2e}, {:.2f} s", worst, worst_energy, secs)};
}

std::set<std::size_t> brute_union(const std::vector<wavelet::CoeffSet>& curves, int keep_levels, double pct) {
    const std::size_t n = curves.front().coeffs.size();
    std::set<std::size_t> out;
    for (std::size_t i = 0; i < (std::size_t{1} << keep_levels); ++i) out.insert(i);
    const auto slots = static_cast<std::size_t>(std::floor(pct * static_cast<double>(n)));
    for (const auto& c : curves) {
        std::vector<std::pair<double, std::size_t>> ranked;
        for (std::size_t i = 0; i < n; ++i) ranked.emplace_back(-std::abs(c.coeffs[i]), i);
        std::sort(ranked.begin(), ranked.end());
        for (std::size_t r = 0; r < slots; ++r)
            if (ranked[r].first != 0.0) out.insert(ranked[r].second);
    }
    return out;
}

Outcome threshold_structure() {
    const std::vector<wavelet::CoeffSet> zero{wavelet::dwt(std::vector<double>(256, 0.0))};
    const auto empty = wavelet::threshold_union(zero, 3, 0.025);
    const bool block = empty.size() == 8 && empty.indices().back() == 7;
    Rng rng = make_stream(2, "acceptance-threshold");
    int agree = 0;
    for (int trial = 0; trial < 20; ++trial) {
        const int levels = 7 + trial % 4;
        std::vector<wavelet::CoeffSet> curves;
        for (int k = 0; k < 6; ++k) curves.push_back(wavelet::dwt(normals(std::size_t{1} << levels, rng)));
        const auto keep = wavelet::threshold_union(curves, 3, 0.025);
        const auto oracle = brute_union(curves, 3, 0.025);
        bool ok = std::vector<std::size_t>(oracle.begin(), oracle.end()) == keep.indices();
        for (std::size_t i = 0; i < 8; ++i) ok = ok && keep.contains(i);
        agree += ok;
    }
    return {block && agree == 20, fmt::format("always-kept block {} indices, oracle agreement {}/20", empty.size(), agree)};
}

// ---------------------------------------------------------------- emulator

Eigen::MatrixXd corr_matrix(const DesignMatrix& a, const DesignMatrix& b, const emulator::GaspHyper& h) {
    Eigen::MatrixXd R(static_cast<long>(a.rows), static_cast<long>(b.rows));
    for (std::size_t i = 0; i < a.rows; ++i)
        for (std::size_t j = 0; j < b.rows; ++j) {
            double s = 0.0;
            for (std::size_t p = 0; p < a.cols; ++p)
                s += h.beta[p] * std::pow(std::abs(a.at(i, p) - b.at(j, p)), 2.0 - h.alpha[p]);
            R(static_cast<long>(i), static_cast<long>(j)) = std::exp(-s);
        }
    return R;
}

emulator::Prediction dense_predict(const DesignMatrix& x, const std::vector<double>& w, const emulator::GaspHyper& h,
                                   double nugget, const std::vector<double>& z) {
    Eigen::MatrixXd R = corr_matrix(x, x, h);
    R.diagonal().array() += nugget;
    const DesignMatrix zz{z, 1, z.size(), {}};
    const Eigen::VectorXd r = corr_matrix(x, zz, h).col(0);
    Eigen::VectorXd res(static_cast<long>(w.size()));
    for (std::size_t k = 0; k < w.size(); ++k) res(static_cast<long>(k)) = w[k] - h.mu;
    const auto lu = R.fullPivLu();
    return {h.mu + r.dot(lu.solve(res)), (1.0 - r.dot(lu.solve(r))) / h.lambda};
}

std::vector<double> gp_sample(const DesignMatrix& x, const emulator::GaspHyper& h, Rng& rng) {
    Eigen::MatrixXd R = corr_matrix(x, x, h);
    R.diagonal().array() += 1e-10;
    const Eigen::MatrixXd L = R.llt().matrixL();
    const auto e = normals(x.rows, rng);
    const Eigen::VectorXd y = L * Eigen::Map<const Eigen::VectorXd>(e.data(), static_cast<long>(e.size()));
    std::vector<double> w(x.rows);
    for (std::size_t k = 0; k < x.rows; ++k) w[k] = h.mu + y(static_cast<long>(k)) / std::sqrt(h.lambda);
    return w;
}

Outcome gasp_interpolation() {
    const auto t0 = std::chrono::steady_clock::now();
    Rng rng = make_stream(3, "acceptance-gasp");
    const emulator::GaspHyper truth{1.5, 4.0, {0.2, 0.0, 0.6}, {3.0, 8.0, 1.0}};
    const auto x = generate_lhd(21, 3, 3, 3);
    const auto w = gp_sample(x, truth, rng);
    emulator::FitOptions opts;
    opts.seed = 3;
    const auto fit = emulator::fit_gasp(x, w, opts);
    const auto& h = fit.hyper();

    double scale = 0.0;
    for (double v : w) scale = std::max(scale, std::abs(v));
    double reproduce = 0.0, var_ratio = 0.0;
    for (std::size_t k = 0; k < x.rows; ++k) {
        const auto p = fit.predict(std::vector<double>(x.row(k).begin(), x.row(k).end()));
        reproduce = std::max(reproduce, std::abs(p.mean - w[k]) / scale);
        var_ratio = std::max(var_ratio, p.var * h.lambda);
    }
    double oracle = 0.0, augment = 0.0;
    for (int t = 0; t < 20; ++t) {
        const std::vector<double> z{uniform01(rng), uniform01(rng), uniform01(rng)};
        const auto p = fit.predict(z);
        const auto o = dense_predict(x, w, h, fit.nugget(), z);
        oracle = std::max({oracle, std::abs(p.mean - o.mean) / (1.0 + std::abs(o.mean)), std::abs(p.var - o.var) * h.lambda});

        const std::vector<double> zs{uniform01(rng), uniform01(rng), uniform01(rng)};
        const double ws = fit.predict(zs).mean + 0.3 * standard_normal(rng);
        DesignMatrix big = x;
        big.rows += 1;
        big.points.insert(big.points.end(), zs.begin(), zs.end());
        auto wb = w;
        wb.push_back(ws);
        const auto refit = emulator::GaspFit::with_hyper(big, wb, h, fit.nugget());
        const auto a = fit.predict_augmented(zs, ws, z);
        const auto r = refit.predict(z);
        augment = std::max({augment, std::abs(a.mean - r.mean) / (1.0 + std::abs(r.mean)), std::abs(a.var - r.var) * h.lambda});
    }
    const double secs = seconds_since(t0);
    const bool ok = reproduce <= 1e-6 && var_ratio <= 1e-8 && oracle <= 1e-8 && augment <= 1e-8 && secs < 30.0;
    return {ok, fmt::format("design error {:.1e} (rel), var*lambda {:.1e}, oracle {:.1e}, refit {:.1e}, {:.1f} s", reproduce,
                            var_ratio, oracle, augment, secs)};
}

Outcome gasp_loo() {
    std::size_t inside = 0, total = 0;
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        Rng rng = make_stream(seed, "acceptance-loo");
        const auto x = generate_lhd(24, 3, 2, seed);
        const double a = uniform(rng, 0.5, 2.0), b = uniform(rng, 0.5, 2.0), c = uniform(rng, -1.0, 1.0);
        std::vector<double> w(x.rows);
        for (std::size_t k = 0; k < x.rows; ++k)
            w[k] = a * std::sin(2.0 * x.at(k, 0)) + b * x.at(k, 1) * x.at(k, 1) + c * std::exp(-x.at(k, 2));
        emulator::FitOptions opts;
        opts.seed = seed;
        for (double s : emulator::fit_gasp(x, w, opts).leave_one_out().studentized()) {
            inside += std::abs(s) <= 2.0;
            ++total;
        }
    }
    const double frac = static_cast<double>(inside) / static_cast<double>(total);
    return {frac >= 0.9, fmt::format("{}/{} within +-2 ({:.3f})", inside, total, frac)};
}

// ------------------------------------------------------------- calibration

double half_sample_mode(std::vector<double> x) {
    std::sort(x.begin(), x.end());
    std::size_t lo = 0, n = x.size();
    while (n > 3) {
        const std::size_t h = (n + 1) / 2;
        std::size_t best = lo;
        double width = INFINITY;
        for (std::size_t i = lo; i + h <= lo + n; ++i)
            if (x[i + h - 1] - x[i] < width) {
                width = x[i + h - 1] - x[i];
                best = i;
            }
        lo = best;
        n = h;
    }
    if (n < 3) return 0.5 * (x[lo] + x[lo + n - 1]);
    return x[lo + 1] - x[lo] < x[lo + 2] - x[lo + 1] ? 0.5 * (x[lo] + x[lo + 1]) : 0.5 * (x[lo + 1] + x[lo + 2]);
}

Outcome sigma2_posterior() {
    const auto t0 = std::chrono::steady_clock::now();
    Rng rng = make_stream(5, "acceptance-sigma2");
    const auto d = calibration::sample_sigma2(4.0, 7, 100000, rng);
    double mean = 0.0;
    for (double v : d) mean += v;
    mean /= static_cast<double>(d.size());
    const double mode = half_sample_mode(d);
    const double secs = seconds_since(t0);
    return {std::abs(mean - 1.0) <= 0.01 && std::abs(mode - 0.5) <= 0.025 && secs < 2.0,
            fmt::format("mean {:.4f}, mode {:.4f}, {:.2f} s", mean, mode, secs)};
}

Outcome conjugacy() {
    Rng rng = make_stream(6, "acceptance-conjugacy");
    double worst_mean = 0.0, worst_var = 0.0;
    // Standardised variance errors; a correct sampler gives roughly N(0, 1).
    double z_sum = 0.0, z_sq = 0.0, z_max = 0.0;
    bool closed_form = true;
    for (int t = 0; t < 50; ++t) {
        const double wbar = standard_normal(rng), m = standard_normal(rng), wb = standard_normal(rng);
        const double V = std::exp(uniform(rng, -4, 1)), s2 = std::exp(uniform(rng, -3, 1));
        const double tau2 = std::exp(uniform(rng, -4, 1));
        const std::size_t n = 2 + static_cast<std::size_t>(uniform(rng, 0, 8));
        const double s2n = s2 / static_cast<double>(n);

        // Closed forms written out directly.
        const double bm = tau2 / (tau2 + V + s2n) * (wbar - m);
        const double bv = tau2 * (V + s2n) / (tau2 + V + s2n);
        const double mm = (V * (wbar - wb) + s2n * m) / (V + s2n);
        const double mv = V * s2n / (V + s2n);
        const auto b = calibration::bias_conditional(wbar, m, V, s2, tau2, n);
        const auto c = calibration::model_conditional(wbar, wb, m, V, s2, n);
        closed_form = closed_form && std::abs(b.mean - bm) <= 1e-12 * (1 + std::abs(bm)) &&
                      std::abs(b.var - bv) <= 1e-12 * bv && std::abs(c.mean - mm) <= 1e-12 * (1 + std::abs(mm)) &&
                      std::abs(c.var - mv) <= 1e-12 * mv;

        for (const auto& nd : {b, c}) {
            const int H = 100000;
            double s = 0.0, ss = 0.0;
            for (int h = 0; h < H; ++h) {
                const double x = calibration::sample(nd, rng);
                s += x;
                ss += x * x;
            }
            const double em = s / H, ev = ss / H - em * em;
            worst_mean = std::max(worst_mean, std::abs(em - nd.mean) / std::max(std::abs(nd.mean), std::sqrt(nd.var)));
            worst_var = std::max(worst_var, std::abs(ev / nd.var - 1.0));
            const double z = (ev / nd.var - 1.0) / std::sqrt(2.0 / H);
            z_sum += z;
            z_sq += z * z;
            z_max = std::max(z_max, std::abs(z));
        }
    }
    const auto z1 = calibration::bias_conditional(1.0, 0.2, 0.3, 0.5, 0.0, 4);
    const auto z2 = calibration::model_conditional(1.0, 0.1, 0.7, 0.0, 0.5, 4);
    const bool limits = z1.mean == 0.0 && z1.var == 0.0 && z2.mean == 0.7 && z2.var == 0.0;
    return {closed_form && limits && worst_mean <= 0.01 && worst_var <= 0.01,
            fmt::format("closed forms {}, limits {}, worst mean error {:.4f}, worst var error {:.4f} "
                        "(variance z-scores over 100 checks: mean {:.2f}, sd {:.2f}, max |z| {:.2f})",
                        closed_form ? "ok" : "wrong", limits ? "exact" : "wrong", worst_mean, worst_var, z_sum / 100.0,
                        std::sqrt(z_sq / 100.0 - z_sum * z_sum / 1e4), z_max)};
}

Outcome marginal_likelihood() {
    const calibration::LevelMap levels(std::vector<int>{1, 2, 2});
    calibration::FieldSummary field;
    field.wbar = {0.8, -0.4, 1.7};
    field.s2 = {0, 0, 0};
    field.n_rep = 4;
    const std::vector<double> m{0.5, -0.1, 1.0}, v{0.04, 0.2, 0.01}, sigma2{0.3, 0.5, 0.2}, tau2{0.1, 0.6};
    const double ll = calibration::log_marginal_likelihood(m, v, tau2, sigma2, field, levels);
    auto pdf = [](double x, double mean, double var) {
        return std::exp(-0.5 * (x - mean) * (x - mean) / var) / std::sqrt(2 * std::numbers::pi * var);
    };
    boost::math::quadrature::gauss_kronrod<double, 61> gk;
    double q = 0.0;
    for (std::size_t i = 0; i < 3; ++i) {
        const double t2 = tau2[levels.group_of(i)], s2n = sigma2[i] / 4.0;
        const double sb = std::sqrt(t2), sm = std::sqrt(v[i]);
        auto inner = [&](double wb) {
            auto f = [&](double wm) { return pdf(field.wbar[i], wb + wm, s2n) * pdf(wm, m[i], v[i]); };
            return gk.integrate(f, m[i] - 12 * sm, m[i] + 12 * sm, 15, 1e-14) * pdf(wb, 0.0, t2);
        };
        q += std::log(gk.integrate(inner, -12 * sb, 12 * sb, 15, 1e-14));
    }
    const double err = std::abs(ll - 1.5 * std::log(2 * std::numbers::pi) - q);
    return {err <= 1e-4, fmt::format("|log L - quadrature| = {:.2e}", err)};
}

Outcome prior_recovery() {
    const auto t0 = std::chrono::steady_clock::now();
    const synth::SynthSpec spec;
    const IUMap map = synth::iu_map(spec);
    // Levels 0..8 all present: nine tau^2 groups.
    const wavelet::RetainedIndexSet keep(8, {0, 1, 2, 3, 4, 5, 6, 7, 9, 20, 33, 70, 140});
    const std::size_t n = keep.size();
    calibration::FieldSummary field{std::vector<double>(n, 0.0), std::vector<double>(n, 1.0), 3};
    const calibration::Predictor pred = [](std::span<const double>, std::span<double> mean, std::span<double> var) {
        std::fill(mean.begin(), mean.end(), 0.0);
        std::fill(var.begin(), var.end(), 0.1);
    };
    calibration::McmcConfig cfg;
    cfg.n_saved = 1000;
    cfg.thin = 200;
    cfg.seed = 8;
    cfg.constant_likelihood = true;
    cfg.tau2_max = 2.0;
    cfg.fixed_sigma2 = std::vector<double>(n, 0.5);
    const auto res = calibration::run_mcmc(field, pred, map, keep, cfg);
    const auto& draws = res.draws;

    auto ecdf_error = [&](auto get, auto quantile) {
        double worst = 0.0;
        for (double p : {0.1, 0.5, 0.9}) {
            const double q = quantile(p);
            std::size_t c = 0;
            for (std::size_t h = 0; h < draws.size(); ++h) c += get(draws.draw(h)) <= q;
            worst = std::max(worst, std::abs(static_cast<double>(c) / static_cast<double>(draws.size()) - p));
        }
        return worst;
    };
    double worst = 0.0;
    const auto prior = calibration::PriorSpec::from(map);
    for (std::size_t j = 0; j < prior.delta.size(); ++j) {
        const auto& tn = prior.delta[j];
        const boost::math::normal nd(tn.mean, tn.sd);
        const double fa = boost::math::cdf(nd, tn.lo), fb = boost::math::cdf(nd, tn.hi);
        worst = std::max(worst, ecdf_error([j](const calibration::Draw& d) { return d.delta[j]; },
                                           [&](double p) { return boost::math::quantile(nd, fa + p * (fb - fa)); }));
    }
    for (std::size_t j = 0; j < prior.u.size(); ++j) {
        const auto& un = prior.u[j];
        worst = std::max(worst, ecdf_error([j](const calibration::Draw& d) { return d.u[j]; },
                                           [&](double p) { return un.lo + p * (un.hi - un.lo); }));
    }
    // Density 1/(tau2 + c) on [0, M]: F(x) = log((x + c)/c) / log((M + c)/c).
    const double c = 0.5 / 3.0, M = cfg.tau2_max;
    for (std::size_t g = 0; g < draws.group_levels().size(); ++g)
        worst = std::max(worst, ecdf_error([g](const calibration::Draw& d) { return d.tau2[g]; },
                                           [&](double p) { return c * std::pow((M + c) / c, p) - c; }));
    const double secs = seconds_since(t0);
    return {worst <= 0.03 && secs < 120.0,
            fmt::format("{} delta, {} u, {} tau2 marginals; worst CDF error at 10/50/90% {:.4f}; {:.1f} s",
                        prior.delta.size(), prior.u.size(), draws.group_levels().size(), worst, secs)};
}

// -------------------------------------------------------------- test beds

struct BedRun {
    fs::path dir;
    synth::SynthSpec spec;
    synth::Dataset data;
    pipeline::RunConfig cfg;
    double seconds = 0.0;
};

BedRun run_bed(const fs::path& dir, const synth::SynthSpec& spec, std::uint64_t seed, std::size_t threads) {
    BedRun b;
    b.dir = dir;
    b.spec = spec;
    fs::remove_all(dir);
    b.data = synth::generate(spec, seed);
    const auto config = synth::write_dataset(dir, b.data, spec, seed);
    const auto t0 = std::chrono::steady_clock::now();
    b.cfg = pipeline::load_run_config(config);
    b.cfg.threads = threads;
    pipeline::run_pipeline(b.cfg);
    b.seconds = seconds_since(t0);
    return b;
}

fs::path scratch_root() {
    const auto root = fs::temp_directory_path() / "wavecal_acceptance";
    fs::create_directories(root);
    return root;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

const std::size_t kThreads = 2;

std::vector<BedRun>& additive_beds() {
    static std::vector<BedRun> beds = [] {
        std::vector<BedRun> out;
        for (std::uint64_t seed = 1; seed <= 5; ++seed)
            out.push_back(run_bed(scratch_root() / fmt::format("additive_{}", seed), synth::SynthSpec{}, seed, kThreads));
        return out;
    }();
    return beds;
}

Outcome synthetic_recovery() {
    int majority = 0;
    double slowest = 0.0;
    std::string detail;
    for (const auto& b : additive_beds()) {
        const auto out = b.cfg.out;
        const double cb = prediction::coverage(prediction::read_band(out / "band_bias.csv"), b.data.bias);
        const double cr = prediction::coverage(prediction::read_band(out / "band_reality.csv"), b.data.reality);
        const auto draws = calibration::read_draws(out / "draws.csv", b.cfg.grid.levels);
        const auto mu = draws.mean_u();
        const auto prior = calibration::PriorSpec::from(b.data.map);
        bool closer = false;
        for (std::size_t j = 0; j < mu.size(); ++j) {
            const double prior_mean = 0.5 * (prior.u[j].lo + prior.u[j].hi);
            closer = closer || std::abs(mu[j] - b.spec.true_u[j]) < std::abs(prior_mean - b.spec.true_u[j]);
        }
        const bool ok = cb >= 0.85 && cr >= 0.85 && closer;
        majority += ok;
        slowest = std::max(slowest, b.seconds);
        detail += fmt::format("{}(bias {:.3f}, reality {:.3f}, u1 {:.3f}) ", ok ? "ok" : "miss", cb, cr, mu[0]);
    }
    return {majority >= 3 && slowest < 600.0,
            fmt::format("{}/5 seeds: {}; slowest run {:.0f} s", majority, detail, slowest)};
}

// Each posterior draw repeated `copies` times; shrinks Monte Carlo error of
// the predictive bands without changing the predictive distribution.
calibration::PosteriorDraws replicate(const calibration::PosteriorDraws& d, std::size_t copies) {
    calibration::PosteriorDraws out(d.delta_names(), d.u_names(), d.keep(), d.group_levels());
    for (std::size_t h = 0; h < d.size(); ++h)
        for (std::size_t r = 0; r < copies; ++r) out.push(d.draw(h));
    return out;
}

std::vector<double> widths(const prediction::Band& b) {
    std::vector<double> w(b.lower.y.size());
    for (std::size_t k = 0; k < w.size(); ++k) w[k] = b.upper.y[k] - b.lower.y[k];
    return w;
}

Outcome extrapolation_identities() {
    const auto& b = additive_beds().front();
    const auto& cfg = b.cfg;
    const auto draws = calibration::read_draws(cfg.out / "draws.csv", cfg.grid.levels);
    const auto coeffs = csv::read_table(cfg.out / "coeffs_model.csv", true);
    const auto fits = pipeline::load_fits(cfg.out / "gasp_fits.csv", read_design(cfg.design), coeffs, cfg.gasp.nugget);

    // Zero shift.
    const auto base = prediction::predict_reality(draws, cfg.grid, cfg.band);
    const auto nominal = registration::resample_dyadic(b.data.run_nominal, cfg.grid);
    const auto same = prediction::extrapolate_delta_shift(base, nominal, nominal);
    const bool identity = same.ensemble.curves == base.ensemble.curves && same.band.lower.y == base.band.lower.y &&
                          same.band.upper.y == base.band.upper.y && same.band.center.y == base.band.center.y;

    // Orderings on a 20x replicated ensemble.
    const auto big = replicate(draws, 20);
    Rng r1 = make_stream(cfg.seed, "acceptance-new-run");
    Rng r2 = make_stream(cfg.seed, "acceptance-same-type");
    const auto wr = widths(base.band);
    const auto wn = widths(prediction::predict_new_field_run(big, cfg.grid, r1, cfg.band).band);
    const auto ws = widths(prediction::extrapolate_same_type(big, fits, b.data.map, cfg.grid, r2, cfg.band).band);
    std::size_t bad_new = 0, bad_same = 0;
    double min_new = INFINITY, min_same = INFINITY;
    for (std::size_t k = 0; k < wr.size(); ++k) {
        bad_new += wn[k] < 0.98 * wr[k];
        bad_same += ws[k] < 0.98 * wn[k];
        min_new = std::min(min_new, wn[k] / wr[k]);
        min_same = std::min(min_same, ws[k] / wn[k]);
    }

    // Constant model, identical on both systems: both transfer forms agree.
    const auto keep = wavelet::RetainedIndexSet::all(3);
    calibration::PosteriorDraws cd({"x1", "x2"}, {"u1", "u2"}, keep, {0, 1, 2, 3});
    Rng rng = make_stream(10, "acceptance-constant-model");
    // Scaling coefficient only: a constant model curve of height 1.7.
    std::vector<double> wm(keep.size(), 0.0);
    wm[0] = 1.7 * std::sqrt(static_cast<double>(keep.size()));
    for (int h = 0; h < 200; ++h) {
        calibration::Draw d;
        d.delta = {0.0, 0.0};
        d.u = {uniform(rng, 0.2, 0.8), uniform(rng, 0.2, 0.8)};
        d.tau2.assign(4, 0.1);
        d.sigma2.assign(keep.size(), 0.01);
        d.wm = wm;
        for (std::size_t i = 0; i < keep.size(); ++i) d.wb.push_back(0.3 * standard_normal(rng));
        cd.push(std::move(d));
    }
    const auto design = generate_lhd(10, 4, 1, 10);
    std::vector<emulator::GaspFit> cfits;
    for (double v : wm)
        cfits.push_back(emulator::GaspFit::with_hyper(design, std::vector<double>(10, v),
                                                      {v, INFINITY, {0, 0, 0, 0}, {1, 1, 1, 1}}));
    const auto map_b = synth::iu_map(synth::SynthSpec{}, true);
    const GridSpec g3{3, 0.0, 1.0};
    Rng ra = make_stream(11, "acceptance-transfer"), rm = make_stream(11, "acceptance-transfer");
    const auto add = prediction::extrapolate_new_nominals(cd, cfits, map_b, g3, prediction::TransferMode::additive, ra, {});
    const auto mul =
        prediction::extrapolate_new_nominals(cd, cfits, map_b, g3, prediction::TransferMode::multiplicative, rm, {});
    double transfer_gap = 0.0;
    for (std::size_t h = 0; h < cd.size(); ++h)
        for (std::size_t k = 0; k < g3.size(); ++k)
            transfer_gap = std::max(transfer_gap, std::abs(mul.result.ensemble.curves[h][k] - add.result.ensemble.curves[h][k]));

    const bool ok = identity && bad_new == 0 && bad_same == 0 && transfer_gap <= 1e-12 && mul.fallbacks == 0;
    return {ok, fmt::format("zero shift {}; new-run/reality width min ratio {:.3f} ({} below 0.98); same-type/new-run "
                            "min ratio {:.3f} ({} below 0.98); constant-model transfer gap {:.1e}",
                            identity ? "identity" : "differs", min_new, bad_new, min_same, bad_same, transfer_gap)};
}

Outcome multiplicative_vs_additive() {
    int wins = 0;
    std::string detail;
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
        synth::SynthSpec spec;
        spec.bias_kind = synth::BiasKind::multiplicative;
        const auto b = run_bed(scratch_root() / fmt::format("multiplicative_{}", seed), spec, seed, kThreads);
        const double cm = prediction::coverage(prediction::read_band(b.cfg.out / "band_b_multiplicative.csv"), b.data.reality_b);
        const double ca = prediction::coverage(prediction::read_band(b.cfg.out / "band_b_additive.csv"), b.data.reality_b);
        wins += cm >= ca;
        detail += fmt::format("({:.3f} vs {:.3f}) ", cm, ca);
        fs::remove_all(b.dir);
    }
    return {wins >= 3, fmt::format("multiplicative >= additive on {}/5 seeds: {}", wins, detail)};
}

Outcome registration_check() {
    std::size_t curves = 0, off = 0, moved = 0, exact = 0;
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
        const auto data = synth::generate(synth::SynthSpec{}, seed);
        const auto windows = synth::event_windows();
        const auto dst = registration::locate_anchors(registration::build_reference_curve(data.model_runs, data.grid), windows);
        const double step = data.grid.step();
        for (const auto& rep : data.field) {
            const auto src = registration::locate_anchors(rep, windows);
            const auto reg = registration::resample_dyadic(registration::register_curve(rep, src, dst), data.grid);
            const auto after = registration::locate_anchors(reg, windows);
            for (std::size_t i = 0; i < dst.times.size(); ++i) off += std::abs(after.times[i] - dst.times[i]) > step + 1e-9;
            // Second pass from freshly located anchors.
            exact += after == dst;
            const auto again = registration::resample_dyadic(registration::register_curve(reg.as_curve(), after, dst), data.grid);
            moved += again.y != reg.y;
            ++curves;
        }
    }
    return {off == 0 && moved == 0,
            fmt::format("{} replicates over 5 seeds; anchors off by more than one step: {}; anchors exactly on the "
                        "reference: {}; changed by a second pass: {}",
                        curves, off, exact, moved)};
}

Outcome determinism() {
    const auto& first = additive_beds().front();
    const auto again = run_bed(scratch_root() / "additive_1_again", synth::SynthSpec{}, 1, kThreads);
    std::vector<std::string> files{"draws.csv"};
    for (const auto& e : fs::directory_iterator(first.cfg.out)) {
        const auto name = e.path().filename().string();
        if (name.rfind("band_", 0) == 0) files.push_back(name);
    }
    std::sort(files.begin(), files.end());
    std::size_t differ = 0;
    for (const auto& f : files) differ += slurp(first.cfg.out / f) != slurp(again.cfg.out / f) || slurp(first.cfg.out / f).empty();
    fs::remove_all(again.dir);
    return {differ == 0, fmt::format("{} files compared with {} threads, {} differ", files.size(), kThreads, differ)};
}

} // namespace

int main() {
    spdlog::set_level(spdlog::level::warn);
    report(1, "wavelet round trip", wavelet_round_trip);
    report(2, "thresholding structure", threshold_structure);
    report(3, "GASP interpolation and oracle", gasp_interpolation);
    report(4, "GASP leave-one-out quality", gasp_loo);
    report(5, "noise variance posterior", sigma2_posterior);
    report(6, "conditional conjugacy", conjugacy);
    report(7, "marginal likelihood", marginal_likelihood);
    report(8, "MCMC prior recovery", prior_recovery);
    report(9, "end-to-end synthetic recovery", synthetic_recovery);
    report(10, "extrapolation identities and ordering", extrapolation_identities);
    report(11, "multiplicative vs additive transfer", multiplicative_vs_additive);
    report(12, "registration", registration_check);
    report(13, "determinism", determinism);
    for (const auto& b : additive_beds()) fs::remove_all(b.dir);
    std::printf("%d of 13 criteria failed\n", failures);
    return failures == 0 ? 0 : 1;
}
