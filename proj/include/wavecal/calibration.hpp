#pragma once

// Replicate summaries, priors, the integrated likelihood of (delta, u, tau^2)
// and the blocked Metropolis-within-Gibbs sampler that produces joint draws of
// inputs, hypervariances, noise variances, bias and model coefficients.

#include "wavecal/emulator.hpp"
#include "wavecal/io_design.hpp"
#include "wavecal/rng.hpp"
#include "wavecal/wavelet.hpp"

#include <cstdint>
#include <filesystem>
#include <functional>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace wavecal::calibration {

struct FieldSummary {
    std::vector<double> wbar;
    /// Sum of squared deviations from wbar (not divided by n_rep - 1).
    std::vector<double> s2;
    std::size_t n_rep = 0;

    std::size_t size() const noexcept { return wbar.size(); }
};

/// replicates[r][i]: coefficient i of replicate r.
FieldSummary field_summaries(const std::vector<std::vector<double>>& replicates);

/// One draw of sigma^2 from density proportional to
/// (sigma^2)^-((n_rep - 1)/2 + 1) exp(-s2 / (2 sigma^2)).
double draw_sigma2(double s2, std::size_t n_rep, Rng& rng);
std::vector<double> sample_sigma2(double s2, std::size_t n_rep, std::size_t H, Rng& rng);

/// Groups retained indices by resolution level; one hypervariance per group.
class LevelMap {
public:
    LevelMap() = default;
    explicit LevelMap(const wavelet::RetainedIndexSet& keep);
    /// Direct construction from per-index levels (in retained order).
    explicit LevelMap(std::vector<int> index_levels);

    std::size_t n_indices() const noexcept { return group_of_.size(); }
    std::size_t n_groups() const noexcept { return levels_.size(); }
    /// Resolution level of group g.
    int level(std::size_t g) const { return levels_[g]; }
    const std::vector<int>& levels() const noexcept { return levels_; }
    std::size_t group_of(std::size_t i) const { return group_of_[i]; }
    const std::vector<std::size_t>& members(std::size_t g) const { return members_[g]; }

    /// Mean of per-index values within each group.
    std::vector<double> group_means(std::span<const double> per_index) const;

private:
    std::vector<int> levels_;
    std::vector<std::size_t> group_of_;
    std::vector<std::vector<std::size_t>> members_;
};

struct PriorSpec {
    std::vector<std::string> delta_names;
    std::vector<std::string> u_names;
    std::vector<TruncNormalPrior> delta;
    std::vector<UniformPrior> u;

    static PriorSpec from(const IUMap& map);

    /// Log density up to a constant; -inf outside the support.
    double log_density(std::span<const double> delta, std::span<const double> u) const;
    bool in_support(std::span<const double> delta, std::span<const double> u) const;
    std::vector<double> draw_delta(Rng& rng) const;
};

/// log pi(tau^2 | sigma^2) = -log(tau^2 + sbar2 / n_rep), up to a constant.
double log_tau2_prior(double tau2, double sbar2, std::size_t n_rep);

/// Integrated log-likelihood of the replicate means after the bias and the
/// model coefficients are integrated out, constants dropped:
///   sum_i -1/2 log v_i - 1/2 (wbar_i - m_i)^2 / v_i,
///   v_i = V_i + sigma2_i / n_rep + tau2_{group(i)}.
double log_marginal_likelihood(std::span<const double> m_hat, std::span<const double> v_hat,
                               std::span<const double> tau2, std::span<const double> sigma2,
                               const FieldSummary& field, const LevelMap& levels);

/// Emulator means and variances of every retained coefficient at the unit
/// point z.
using Predictor = std::function<void(std::span<const double> z, std::span<double> mean, std::span<double> var)>;

Predictor make_predictor(std::span<const emulator::GaspFit> fits);

struct Normal {
    double mean = 0.0;
    double var = 0.0;
};

/// One draw; a zero variance returns the mean exactly.
double sample(const Normal& n, Rng& rng);

/// Bias coefficient given (inputs, tau^2, sigma^2), model coefficient integrated out.
Normal bias_conditional(double wbar, double m_hat, double v_hat, double sigma2, double tau2, std::size_t n_rep);
/// Model coefficient given the bias coefficient.
Normal model_conditional(double wbar, double wb, double m_hat, double v_hat, double sigma2, std::size_t n_rep);

struct ChainState {
    std::vector<double> delta;
    std::vector<double> u;
    std::vector<double> tau2;
    std::vector<double> sigma2;
    std::vector<double> m_hat; ///< emulator means at (delta, u)
    std::vector<double> v_hat; ///< emulator variances at (delta, u)
    double log_lik = 0.0;
};

/// Everything the Metropolis steps need besides the state.
struct Target {
    const IUMap* map = nullptr;
    const PriorSpec* prior = nullptr;
    const FieldSummary* field = nullptr;
    const LevelMap* levels = nullptr;
    Predictor predictor;
    std::vector<double> sbar2; ///< group means of the current sigma^2 block
    bool constant_likelihood = false;
    double tau2_max = std::numeric_limits<double>::infinity();
    double tau_halfwidth = 0.7;
    double local_halfwidth = 0.05;

    void evaluate(std::span<const double> delta, std::span<const double> u, std::vector<double>& m,
                  std::vector<double>& v) const;
    double log_lik(const ChainState& s) const;
    double log_lik(std::span<const double> m, std::span<const double> v, std::span<const double> tau2,
                   std::span<const double> sigma2) const;
    double log_tau_prior(std::span<const double> tau2) const;
};

/// Joint log-uniform proposal for every tau^2; returns true when accepted.
bool mh_step_tau(ChainState& state, const Target& target, Rng& rng);
/// Mixture proposal for (delta, u); returns true when accepted.
bool mh_step_du(ChainState& state, const Target& target, Rng& rng);

/// Local component of the (delta, u) proposal: support intersected with
/// [x - h, x + h].
std::pair<double, double> local_interval(double x, double lo, double hi, double h);
/// Mixture proposal density g(y | x) for one coordinate.
double mixture_density(double y, double x, double lo, double hi, double h);

struct McmcConfig {
    std::size_t n_saved = 1000;
    std::size_t thin = 200;
    std::uint64_t seed = 0;
    /// Blocks run before the first saved draw.
    std::size_t burn_in = 0;
    double tau_halfwidth = 0.7;
    double local_halfwidth = 0.05;
    /// Upper truncation of every tau^2 (unbounded by default).
    double tau2_max = std::numeric_limits<double>::infinity();
    /// Replaces the likelihood by a constant (prior exploration).
    bool constant_likelihood = false;
    /// Holds sigma^2 at these values instead of drawing it each block.
    std::optional<std::vector<double>> fixed_sigma2;
    /// Replaces s2 == 0 by floor_scale * sum(wbar^2) / |I|.
    double s2_floor_scale = 1e-12;
};

/// One saved joint draw. Components are only ever handed out together.
struct Draw {
    std::vector<double> delta;
    std::vector<double> u;
    std::vector<double> tau2;
    std::vector<double> sigma2;
    std::vector<double> wb;
    std::vector<double> wm;
    double log_lik = 0.0;
};

struct BlockStats {
    double accept_tau = 0.0;
    double accept_du = 0.0;
    double log_lik = 0.0;
};

class PosteriorDraws {
public:
    PosteriorDraws() = default;
    PosteriorDraws(std::vector<std::string> delta_names, std::vector<std::string> u_names,
                   wavelet::RetainedIndexSet keep, std::vector<int> group_levels);

    std::size_t size() const noexcept { return draws_.size(); }
    const Draw& draw(std::size_t h) const { return draws_.at(h); }
    void push(Draw d);

    const std::vector<std::string>& delta_names() const noexcept { return delta_names_; }
    const std::vector<std::string>& u_names() const noexcept { return u_names_; }
    const wavelet::RetainedIndexSet& keep() const noexcept { return keep_; }
    const std::vector<int>& group_levels() const noexcept { return group_levels_; }

    std::vector<double> mean_delta() const;
    std::vector<double> mean_u() const;

    /// Copy with the bias coefficients of draw h taken from draw perm[h];
    /// breaks the joint structure on purpose (diagnostics only).
    PosteriorDraws with_permuted_bias(std::span<const std::size_t> perm) const;

    std::vector<std::string> column_names() const;

private:
    std::vector<std::string> delta_names_;
    std::vector<std::string> u_names_;
    wavelet::RetainedIndexSet keep_;
    std::vector<int> group_levels_;
    std::vector<Draw> draws_;
};

struct McmcResult {
    PosteriorDraws draws;
    std::vector<BlockStats> trace;
    double accept_tau = 0.0;
    double accept_du = 0.0;
    std::size_t s2_floored = 0;
};

McmcResult run_mcmc(const FieldSummary& field, const Predictor& predictor, const IUMap& map,
                    const wavelet::RetainedIndexSet& keep, const McmcConfig& cfg);

void write_draws(const std::filesystem::path& path, const PosteriorDraws& draws);
PosteriorDraws read_draws(const std::filesystem::path& path, int levels);
void write_trace(const std::filesystem::path& path, const std::vector<BlockStats>& trace);

} // namespace wavecal::calibration
