#include "wavecal/calibration.hpp"

#include "wavecal/csv.hpp"
#include "wavecal/errors.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <random>

namespace wavecal::calibration {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

void check_sizes(std::size_t expected, std::size_t got, const char* what) {
    if (expected != got)
        throw ArgumentError(std::string(what) + ": expected " + std::to_string(expected) + " values, got " +
                            std::to_string(got));
}

} // namespace

FieldSummary field_summaries(const std::vector<std::vector<double>>& replicates) {
    if (replicates.size() < 2)
        throw ArgumentError("field_summaries: at least two replicates are needed, got " +
                            std::to_string(replicates.size()));
    const std::size_t n = replicates.front().size();
    FieldSummary out;
    out.n_rep = replicates.size();
    out.wbar.assign(n, 0.0);
    out.s2.assign(n, 0.0);
    for (const auto& r : replicates) {
        check_sizes(n, r.size(), "field_summaries");
        for (std::size_t i = 0; i < n; ++i) out.wbar[i] += r[i];
    }
    for (auto& w : out.wbar) w /= static_cast<double>(out.n_rep);
    for (const auto& r : replicates) {
        for (std::size_t i = 0; i < n; ++i) {
            const double e = r[i] - out.wbar[i];
            out.s2[i] += e * e;
        }
    }
    return out;
}

double draw_sigma2(double s2, std::size_t n_rep, Rng& rng) {
    if (n_rep < 2) throw ArgumentError("draw_sigma2: n_rep must be at least 2");
    if (!(s2 > 0.0)) throw ArgumentError("draw_sigma2: s2 must be positive");
    const double shape = 0.5 * static_cast<double>(n_rep - 1);
    const double rate = 0.5 * s2;
    return rate / std::gamma_distribution<double>(shape, 1.0)(rng);
}

std::vector<double> sample_sigma2(double s2, std::size_t n_rep, std::size_t H, Rng& rng) {
    std::vector<double> out(H);
    for (auto& v : out) v = draw_sigma2(s2, n_rep, rng);
    return out;
}

LevelMap::LevelMap(const wavelet::RetainedIndexSet& keep) {
    std::vector<int> lv(keep.size());
    for (std::size_t i = 0; i < keep.size(); ++i) lv[i] = keep.level(i);
    *this = LevelMap(std::move(lv));
}

LevelMap::LevelMap(std::vector<int> index_levels) {
    levels_ = index_levels;
    std::sort(levels_.begin(), levels_.end());
    levels_.erase(std::unique(levels_.begin(), levels_.end()), levels_.end());
    members_.resize(levels_.size());
    group_of_.resize(index_levels.size());
    for (std::size_t i = 0; i < index_levels.size(); ++i) {
        const auto g = static_cast<std::size_t>(std::lower_bound(levels_.begin(), levels_.end(), index_levels[i]) -
                                                levels_.begin());
        group_of_[i] = g;
        members_[g].push_back(i);
    }
}

std::vector<double> LevelMap::group_means(std::span<const double> per_index) const {
    check_sizes(n_indices(), per_index.size(), "group_means");
    std::vector<double> out(n_groups(), 0.0);
    for (std::size_t g = 0; g < n_groups(); ++g) {
        for (auto i : members_[g]) out[g] += per_index[i];
        out[g] /= static_cast<double>(members_[g].size());
    }
    return out;
}

PriorSpec PriorSpec::from(const IUMap& map) {
    PriorSpec p;
    for (const auto& e : map.entries) {
        if (e.role == Role::calibration) {
            p.u_names.push_back(e.name);
            p.u.push_back(std::get<UniformPrior>(e.prior));
        } else {
            p.delta_names.push_back(e.name);
            p.delta.push_back(std::get<TruncNormalPrior>(e.prior));
        }
    }
    return p;
}

bool PriorSpec::in_support(std::span<const double> d, std::span<const double> uu) const {
    if (d.size() != delta.size() || uu.size() != u.size()) return false;
    for (std::size_t k = 0; k < d.size(); ++k)
        if (!(d[k] >= delta[k].lo && d[k] <= delta[k].hi)) return false;
    for (std::size_t k = 0; k < uu.size(); ++k)
        if (!(uu[k] >= u[k].lo && uu[k] <= u[k].hi)) return false;
    return true;
}

double PriorSpec::log_density(std::span<const double> d, std::span<const double> uu) const {
    if (!in_support(d, uu)) return kNegInf;
    double lp = 0.0;
    for (std::size_t k = 0; k < d.size(); ++k) {
        const double z = (d[k] - delta[k].mean) / delta[k].sd;
        lp -= 0.5 * z * z;
    }
    return lp;
}

std::vector<double> PriorSpec::draw_delta(Rng& rng) const {
    std::vector<double> out(delta.size());
    for (std::size_t k = 0; k < delta.size(); ++k)
        out[k] = truncated_normal(rng, delta[k].mean, delta[k].sd, delta[k].lo, delta[k].hi);
    return out;
}

double log_tau2_prior(double tau2, double sbar2, std::size_t n_rep) {
    if (!(tau2 > 0.0)) return kNegInf;
    return -std::log(tau2 + sbar2 / static_cast<double>(n_rep));
}

double log_marginal_likelihood(std::span<const double> m_hat, std::span<const double> v_hat,
                               std::span<const double> tau2, std::span<const double> sigma2,
                               const FieldSummary& field, const LevelMap& levels) {
    const std::size_t n = field.size();
    check_sizes(n, m_hat.size(), "log_marginal_likelihood (means)");
    check_sizes(n, v_hat.size(), "log_marginal_likelihood (variances)");
    check_sizes(n, sigma2.size(), "log_marginal_likelihood (sigma2)");
    check_sizes(n, levels.n_indices(), "log_marginal_likelihood (levels)");
    check_sizes(levels.n_groups(), tau2.size(), "log_marginal_likelihood (tau2)");
    const double inv_n = 1.0 / static_cast<double>(field.n_rep);
    double ll = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double v = v_hat[i] + sigma2[i] * inv_n + tau2[levels.group_of(i)];
        if (!(v > 0.0)) throw Error("log_marginal_likelihood: nonpositive total variance at index " + std::to_string(i));
        const double e = field.wbar[i] - m_hat[i];
        ll -= 0.5 * (std::log(v) + e * e / v);
    }
    return ll;
}

Predictor make_predictor(std::span<const emulator::GaspFit> fits) {
    return [fits](std::span<const double> z, std::span<double> mean, std::span<double> var) {
        emulator::predict_all(fits, z, mean, var);
    };
}

double sample(const Normal& n, Rng& rng) {
    return n.var > 0.0 ? n.mean + std::sqrt(n.var) * standard_normal(rng) : n.mean;
}

Normal bias_conditional(double wbar, double m_hat, double v_hat, double sigma2, double tau2, std::size_t n_rep) {
    const double a = v_hat + sigma2 / static_cast<double>(n_rep);
    const double total = a + tau2;
    if (!(tau2 > 0.0)) return {0.0, 0.0};
    return {tau2 / total * (wbar - m_hat), tau2 * a / total};
}

Normal model_conditional(double wbar, double wb, double m_hat, double v_hat, double sigma2, std::size_t n_rep) {
    const double noise = sigma2 / static_cast<double>(n_rep);
    const double total = v_hat + noise;
    if (!(v_hat > 0.0)) return {m_hat, 0.0};
    return {v_hat / total * (wbar - wb) + noise / total * m_hat, v_hat * noise / total};
}

void Target::evaluate(std::span<const double> delta, std::span<const double> u, std::vector<double>& m,
                      std::vector<double>& v) const {
    const std::size_t n = field->size();
    m.resize(n);
    v.resize(n);
    const auto z = map->to_unit(delta, u);
    predictor(z, m, v);
}

double Target::log_lik(std::span<const double> m, std::span<const double> v, std::span<const double> tau2,
                       std::span<const double> sigma2) const {
    if (constant_likelihood) return 0.0;
    return log_marginal_likelihood(m, v, tau2, sigma2, *field, *levels);
}

double Target::log_lik(const ChainState& s) const { return log_lik(s.m_hat, s.v_hat, s.tau2, s.sigma2); }

double Target::log_tau_prior(std::span<const double> tau2) const {
    double lp = 0.0;
    for (std::size_t g = 0; g < tau2.size(); ++g) {
        if (!(tau2[g] <= tau2_max)) return kNegInf;
        lp += log_tau2_prior(tau2[g], sbar2[g], field->n_rep);
    }
    return lp;
}

bool mh_step_tau(ChainState& state, const Target& target, Rng& rng) {
    std::vector<double> prop(state.tau2.size());
    double log_hastings = 0.0;
    for (std::size_t g = 0; g < prop.size(); ++g) {
        const double step = uniform(rng, -target.tau_halfwidth, target.tau_halfwidth);
        prop[g] = state.tau2[g] * std::exp(step);
        log_hastings += step; // log(tau2_new / tau2_old)
    }
    const double u = uniform01(rng);
    const double prior_new = target.log_tau_prior(prop);
    if (prior_new == kNegInf) return false;
    const double ll_new = target.log_lik(state.m_hat, state.v_hat, prop, state.sigma2);
    const double log_rho = ll_new - state.log_lik + prior_new - target.log_tau_prior(state.tau2) + log_hastings;
    if (std::log(u) < log_rho) {
        state.tau2 = std::move(prop);
        state.log_lik = ll_new;
        return true;
    }
    return false;
}

std::pair<double, double> local_interval(double x, double lo, double hi, double h) {
    return {std::max(lo, x - h), std::min(hi, x + h)};
}

double mixture_density(double y, double x, double lo, double hi, double h) {
    if (y < lo || y > hi) return 0.0;
    double g = 0.5 / (hi - lo);
    const auto [a, b] = local_interval(x, lo, hi, h);
    if (y >= a && y <= b && b > a) g += 0.5 / (b - a);
    return g;
}

namespace {

double propose_coordinate(double x, double lo, double hi, double h, Rng& rng, double& log_q) {
    double y;
    if (uniform01(rng) < 0.5) {
        y = uniform(rng, lo, hi);
    } else {
        const auto [a, b] = local_interval(x, lo, hi, h);
        y = uniform(rng, a, b);
    }
    log_q += std::log(mixture_density(x, y, lo, hi, h)) - std::log(mixture_density(y, x, lo, hi, h));
    return y;
}

} // namespace

bool mh_step_du(ChainState& state, const Target& target, Rng& rng) {
    const PriorSpec& prior = *target.prior;
    const double h = target.local_halfwidth;
    double log_q = 0.0;
    std::vector<double> delta(state.delta.size());
    std::vector<double> u(state.u.size());
    for (std::size_t k = 0; k < delta.size(); ++k)
        delta[k] = propose_coordinate(state.delta[k], prior.delta[k].lo, prior.delta[k].hi, h, rng, log_q);
    for (std::size_t k = 0; k < u.size(); ++k)
        u[k] = propose_coordinate(state.u[k], prior.u[k].lo, prior.u[k].hi, h, rng, log_q);
    const double accept_u = uniform01(rng);

    const double lp_new = prior.log_density(delta, u);
    if (lp_new == kNegInf) return false;
    std::vector<double> m;
    std::vector<double> v;
    double ll_new = 0.0;
    if (!target.constant_likelihood) {
        target.evaluate(delta, u, m, v);
        ll_new = target.log_lik(m, v, state.tau2, state.sigma2);
    }
    const double log_rho = ll_new - state.log_lik + lp_new - prior.log_density(state.delta, state.u) + log_q;
    if (std::log(accept_u) < log_rho) {
        state.delta = std::move(delta);
        state.u = std::move(u);
        state.log_lik = ll_new;
        if (!target.constant_likelihood) {
            state.m_hat = std::move(m);
            state.v_hat = std::move(v);
        }
        return true;
    }
    return false;
}

PosteriorDraws::PosteriorDraws(std::vector<std::string> delta_names, std::vector<std::string> u_names,
                               wavelet::RetainedIndexSet keep, std::vector<int> group_levels)
    : delta_names_(std::move(delta_names)), u_names_(std::move(u_names)), keep_(std::move(keep)),
      group_levels_(std::move(group_levels)) {}

void PosteriorDraws::push(Draw d) {
    check_sizes(delta_names_.size(), d.delta.size(), "PosteriorDraws (delta)");
    check_sizes(u_names_.size(), d.u.size(), "PosteriorDraws (u)");
    check_sizes(group_levels_.size(), d.tau2.size(), "PosteriorDraws (tau2)");
    check_sizes(keep_.size(), d.sigma2.size(), "PosteriorDraws (sigma2)");
    check_sizes(keep_.size(), d.wb.size(), "PosteriorDraws (wb)");
    check_sizes(keep_.size(), d.wm.size(), "PosteriorDraws (wM)");
    draws_.push_back(std::move(d));
}

std::vector<double> PosteriorDraws::mean_delta() const {
    std::vector<double> out(delta_names_.size(), 0.0);
    for (const auto& d : draws_)
        for (std::size_t k = 0; k < out.size(); ++k) out[k] += d.delta[k];
    for (auto& v : out) v /= static_cast<double>(std::max<std::size_t>(draws_.size(), 1));
    return out;
}

std::vector<double> PosteriorDraws::mean_u() const {
    std::vector<double> out(u_names_.size(), 0.0);
    for (const auto& d : draws_)
        for (std::size_t k = 0; k < out.size(); ++k) out[k] += d.u[k];
    for (auto& v : out) v /= static_cast<double>(std::max<std::size_t>(draws_.size(), 1));
    return out;
}

PosteriorDraws PosteriorDraws::with_permuted_bias(std::span<const std::size_t> perm) const {
    check_sizes(draws_.size(), perm.size(), "with_permuted_bias");
    PosteriorDraws out = *this;
    for (std::size_t h = 0; h < draws_.size(); ++h) out.draws_[h].wb = draws_.at(perm[h]).wb;
    return out;
}

std::vector<std::string> PosteriorDraws::column_names() const {
    std::vector<std::string> cols;
    for (const auto& n : delta_names_) cols.push_back("delta." + n);
    for (const auto& n : u_names_) cols.push_back("u." + n);
    for (int j : group_levels_) cols.push_back("tau2.level" + std::to_string(j));
    const auto labels = keep_.labels();
    for (const auto& l : labels) cols.push_back("sigma2." + l);
    for (const auto& l : labels) cols.push_back("wb." + l);
    for (const auto& l : labels) cols.push_back("wM." + l);
    cols.emplace_back("loglik");
    return cols;
}

McmcResult run_mcmc(const FieldSummary& field, const Predictor& predictor, const IUMap& map,
                    const wavelet::RetainedIndexSet& keep, const McmcConfig& cfg) {
    const std::size_t n = keep.size();
    check_sizes(n, field.size(), "run_mcmc (field summaries)");
    if (field.n_rep < 2) throw ArgumentError("run_mcmc: at least two replicates are needed");
    if (cfg.n_saved == 0 || cfg.thin == 0) throw ArgumentError("run_mcmc: n_saved and thin must be positive");
    if (cfg.fixed_sigma2) check_sizes(n, cfg.fixed_sigma2->size(), "run_mcmc (fixed sigma2)");

    const PriorSpec prior = PriorSpec::from(map);
    const LevelMap levels(keep);

    McmcResult result;
    result.draws = PosteriorDraws(prior.delta_names, prior.u_names, keep, levels.levels());

    std::vector<double> s2 = field.s2;
    double energy = 0.0;
    for (double w : field.wbar) energy += w * w;
    const double s2_floor = std::max(1e-300, cfg.s2_floor_scale * energy / static_cast<double>(std::max<std::size_t>(n, 1)));
    for (std::size_t i = 0; i < n; ++i) {
        if (!(s2[i] > 0.0)) {
            s2[i] = s2_floor;
            ++result.s2_floored;
        }
    }
    if (result.s2_floored > 0)
        spdlog::warn("{} of {} replicate variances are zero; using floor {}", result.s2_floored, n, s2_floor);

    Rng rng_sigma = make_stream(cfg.seed, "sigma2");
    Rng rng_mh = make_stream(cfg.seed, "mh");
    Rng rng_conj = make_stream(cfg.seed, "conjugate");

    Target target;
    target.map = &map;
    target.prior = &prior;
    target.field = &field;
    target.levels = &levels;
    target.predictor = predictor;
    target.constant_likelihood = cfg.constant_likelihood;
    target.tau2_max = cfg.tau2_max;
    target.tau_halfwidth = cfg.tau_halfwidth;
    target.local_halfwidth = cfg.local_halfwidth;

    ChainState state;
    state.delta.resize(prior.delta.size());
    for (std::size_t k = 0; k < prior.delta.size(); ++k)
        state.delta[k] = std::clamp(0.0, prior.delta[k].lo, prior.delta[k].hi);
    state.u.resize(prior.u.size());
    for (std::size_t k = 0; k < prior.u.size(); ++k) state.u[k] = 0.5 * (prior.u[k].lo + prior.u[k].hi);
    state.sigma2.assign(n, 0.0);
    target.evaluate(state.delta, state.u, state.m_hat, state.v_hat);

    const std::size_t blocks = cfg.burn_in + cfg.n_saved;
    const double inv_n = 1.0 / static_cast<double>(field.n_rep);
    std::size_t total_tau = 0;
    std::size_t total_du = 0;
    result.trace.reserve(blocks);
    for (std::size_t b = 0; b < blocks; ++b) {
        // Step 1: noise variances from the replicate spread alone.
        if (cfg.fixed_sigma2) {
            state.sigma2 = *cfg.fixed_sigma2;
        } else {
            for (std::size_t i = 0; i < n; ++i) state.sigma2[i] = draw_sigma2(s2[i], field.n_rep, rng_sigma);
        }
        target.sbar2 = levels.group_means(state.sigma2);
        if (b == 0) {
            state.tau2.resize(levels.n_groups());
            for (std::size_t g = 0; g < levels.n_groups(); ++g)
                state.tau2[g] = std::min(target.sbar2[g] * inv_n, 0.5 * cfg.tau2_max);
        }
        state.log_lik = target.log_lik(state);
        if (b == 0) {
            const double lp = state.log_lik + target.log_tau_prior(state.tau2) + prior.log_density(state.delta, state.u);
            if (!std::isfinite(lp))
                throw InitError("run_mcmc: log-posterior is not finite at the initial state; start from prior medians");
        }

        // Step 2: Metropolis cycles with sigma^2 held fixed.
        std::size_t acc_tau = 0;
        std::size_t acc_du = 0;
        for (std::size_t c = 0; c < cfg.thin; ++c) {
            acc_tau += mh_step_tau(state, target, rng_mh) ? 1 : 0;
            acc_du += mh_step_du(state, target, rng_mh) ? 1 : 0;
        }
        total_tau += acc_tau;
        total_du += acc_du;
        result.trace.push_back({static_cast<double>(acc_tau) / static_cast<double>(cfg.thin),
                                static_cast<double>(acc_du) / static_cast<double>(cfg.thin), state.log_lik});
        if (b < cfg.burn_in) continue;

        if (cfg.constant_likelihood) target.evaluate(state.delta, state.u, state.m_hat, state.v_hat);

        // Steps 3 and 4: bias, then model coefficients, from their conditionals.
        Draw d;
        d.delta = state.delta;
        d.u = state.u;
        d.tau2 = state.tau2;
        d.sigma2 = state.sigma2;
        d.log_lik = state.log_lik;
        d.wb.resize(n);
        d.wm.resize(n);
        for (std::size_t i = 0; i < n; ++i) {
            const Normal nb = bias_conditional(field.wbar[i], state.m_hat[i], state.v_hat[i], state.sigma2[i],
                                               state.tau2[levels.group_of(i)], field.n_rep);
            d.wb[i] = sample(nb, rng_conj);
        }
        for (std::size_t i = 0; i < n; ++i) {
            const Normal nm = model_conditional(field.wbar[i], d.wb[i], state.m_hat[i], state.v_hat[i],
                                                state.sigma2[i], field.n_rep);
            d.wm[i] = sample(nm, rng_conj);
        }
        result.draws.push(std::move(d));
    }
    const double cycles = static_cast<double>(blocks * cfg.thin);
    result.accept_tau = static_cast<double>(total_tau) / cycles;
    result.accept_du = static_cast<double>(total_du) / cycles;
    spdlog::info("sampler finished: {} draws, acceptance tau {:.3f}, (delta, u) {:.3f}", result.draws.size(),
                 result.accept_tau, result.accept_du);
    return result;
}

void write_draws(const std::filesystem::path& path, const PosteriorDraws& draws) {
    csv::Table t;
    t.header = draws.column_names();
    t.rows.reserve(draws.size());
    for (std::size_t h = 0; h < draws.size(); ++h) {
        const Draw& d = draws.draw(h);
        std::vector<double> row;
        row.reserve(t.header.size());
        for (const auto* part : {&d.delta, &d.u, &d.tau2, &d.sigma2, &d.wb, &d.wm})
            row.insert(row.end(), part->begin(), part->end());
        row.push_back(d.log_lik);
        t.rows.push_back(std::move(row));
    }
    csv::write_table(path, t);
}

PosteriorDraws read_draws(const std::filesystem::path& path, int levels) {
    const csv::Table t = csv::read_table(path);
    std::vector<std::string> delta_names;
    std::vector<std::string> u_names;
    std::vector<int> group_levels;
    std::vector<std::size_t> indices;
    std::map<std::string, std::vector<std::size_t>> columns;
    for (std::size_t c = 0; c < t.header.size(); ++c) {
        const std::string& h = t.header[c];
        const auto dot = h.find('.');
        const std::string prefix = dot == std::string::npos ? h : h.substr(0, dot);
        const std::string rest = dot == std::string::npos ? std::string() : h.substr(dot + 1);
        if (prefix == "delta") {
            delta_names.push_back(rest);
        } else if (prefix == "u") {
            u_names.push_back(rest);
        } else if (prefix == "tau2") {
            if (rest.rfind("level", 0) != 0) throw ParseError(path.string() + ": bad column '" + h + "'");
            group_levels.push_back(std::stoi(rest.substr(5)));
        } else if (prefix == "sigma2") {
            indices.push_back(wavelet::parse_index_label(rest));
        } else if (prefix != "wb" && prefix != "wM" && prefix != "loglik") {
            throw ParseError(path.string() + ": unknown column '" + h + "'");
        }
        columns[prefix].push_back(c);
    }
    PosteriorDraws out(delta_names, u_names, wavelet::RetainedIndexSet(levels, indices), group_levels);
    const std::size_t n = indices.size();
    if (columns["wb"].size() != n || columns["wM"].size() != n || columns["loglik"].size() != 1)
        throw ParseError(path.string() + ": inconsistent draw columns");
    auto take = [&](const std::vector<double>& row, const std::string& prefix) {
        std::vector<double> v;
        for (auto c : columns[prefix]) v.push_back(row[c]);
        return v;
    };
    for (const auto& row : t.rows) {
        Draw d;
        d.delta = take(row, "delta");
        d.u = take(row, "u");
        d.tau2 = take(row, "tau2");
        d.sigma2 = take(row, "sigma2");
        d.wb = take(row, "wb");
        d.wm = take(row, "wM");
        d.log_lik = row[columns["loglik"].front()];
        out.push(std::move(d));
    }
    return out;
}

void write_trace(const std::filesystem::path& path, const std::vector<BlockStats>& trace) {
    csv::Table t;
    t.header = {"block", "accept_tau", "accept_du", "loglik"};
    for (std::size_t b = 0; b < trace.size(); ++b)
        t.rows.push_back({static_cast<double>(b), trace[b].accept_tau, trace[b].accept_du, trace[b].log_lik});
    csv::write_table(path, t);
}

} // namespace wavecal::calibration
