#pragma once

// Per-coefficient Gaussian-process (GASP) surrogate with power-exponential
// correlation c(z, z') = exp(-sum_p beta_p |z_p - z'_p|^(2 - alpha_p)).

#include "wavecal/io_design.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace wavecal::emulator {

struct GaspHyper {
    double mu = 0.0;
    /// Precision; the process variance is 1 / lambda.
    double lambda = 1.0;
    std::vector<double> alpha;
    std::vector<double> beta;
};

struct FitOptions {
    std::uint64_t seed = 0;
    /// Multi-start count; 0 means 2d + 1.
    std::size_t n_starts = 0;
    /// Objective evaluations per start; 0 means 150 per free parameter.
    std::size_t max_evals = 0;
    /// Added to the correlation diagonal (i.e. nugget / lambda on the covariance).
    double nugget = 1e-8;
    double log_beta_min = -14.0;
    double log_beta_max = 6.0;
    /// Name used in error messages (e.g. the coefficient label).
    std::string label;
};

struct Prediction {
    double mean = 0.0;
    double var = 0.0;
};

struct LooResult {
    std::vector<double> residual; ///< data - leave-one-out mean
    std::vector<double> sd;       ///< leave-one-out predictive standard deviation

    std::vector<double> studentized() const;
    double rmse() const;
};

double correlation(std::span<const double> z, std::span<const double> z2, std::span<const double> alpha,
                   std::span<const double> beta);

/// Fitted surrogate for one coefficient. Immutable after construction, so a
/// single instance may be shared across threads.
class GaspFit {
public:
    /// Builds the predictor for fixed hyperparameters (no optimisation).
    static GaspFit with_hyper(const DesignMatrix& design, std::span<const double> response, GaspHyper hyper,
                              double nugget = 1e-8);

    const GaspHyper& hyper() const noexcept { return hyper_; }
    const DesignMatrix& design() const noexcept { return design_; }
    const std::vector<double>& response() const noexcept { return response_; }
    double nugget() const noexcept { return nugget_; }
    std::size_t dims() const noexcept { return design_.cols; }
    std::size_t runs() const noexcept { return design_.rows; }

    Prediction predict(std::span<const double> z) const;
    double predict_mean(std::span<const double> z) const;

    /// Prediction at z_new from the design augmented by (z_star, w_star) with
    /// the hyperparameters held fixed. If z_star coincides with a design row
    /// the augmentation is skipped.
    Prediction predict_augmented(std::span<const double> z_star, double w_star, std::span<const double> z_new) const;

    LooResult leave_one_out() const;

    /// Concentrated log-likelihood at the stored hyperparameters (constants dropped).
    double log_likelihood() const { return loglik_; }

private:
    friend void predict_all(std::span<const GaspFit> fits, std::span<const double> z, std::span<double> mean,
                            std::span<double> var);
    GaspFit() = default;
    void correlations(std::span<const double> z, Eigen::VectorXd& out) const;
    double corr(std::span<const double> a, std::span<const double> b) const;

    DesignMatrix design_;
    std::vector<double> response_;
    GaspHyper hyper_;
    double nugget_ = 1e-8;
    std::vector<double> power_; // 2 - alpha_p
    Eigen::MatrixXd chol_;      // lower factor of R + nugget I
    Eigen::VectorXd white_resid_; // L^{-1}(w - mu 1)
    Eigen::VectorXd kinv_resid_;  // (R + nugget I)^{-1}(w - mu 1)
    double loglik_ = 0.0;
};

/// Maximum-likelihood fit: mu and lambda profiled in closed form, (log beta,
/// alpha) searched by multi-start Nelder-Mead from a small Latin hypercube.
GaspFit fit_gasp(const DesignMatrix& design, std::span<const double> response, const FitOptions& opts = {});

Prediction predict(const GaspFit& fit, std::span<const double> z);

struct AugmentPoint {
    std::vector<double> z;
    double w = 0.0;
};

Prediction predict_augmented(const GaspFit& fit, const AugmentPoint& extra, std::span<const double> z_new);

/// Mean and variance of every fit at one point. All fits must share one
/// design (as produced by fit_many); pairwise distances are computed once.
void predict_all(std::span<const GaspFit> fits, std::span<const double> z, std::span<double> mean,
                 std::span<double> var);

/// Fits responses[c] (one value per design row) for every c, optionally on
/// several threads. Each fit's seed depends only on (opts.seed, c), so results
/// do not depend on the thread count.
std::vector<GaspFit> fit_many(const DesignMatrix& design, const std::vector<std::vector<double>>& responses,
                              const FitOptions& opts, std::size_t threads = 1,
                              const std::vector<std::string>& labels = {});

} // namespace wavecal::emulator
