#include "wavecal/emulator.hpp"

#include "wavecal/errors.hpp"
#include "wavecal/optimize.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <limits>
#include <mutex>
#include <optional>
#include <thread>

namespace wavecal::emulator {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

double variance_floor(std::span<const double> w) {
    double s = 0.0;
    for (double v : w) s += v * v;
    return std::max(1e-300, 1e-24 * s / static_cast<double>(w.size()));
}

bool is_constant(std::span<const double> w) {
    double scale = 0.0;
    for (double v : w) scale = std::max(scale, std::abs(v));
    for (double v : w)
        if (std::abs(v - w.front()) > 1e-14 * scale) return false;
    return true;
}

void check_design(const DesignMatrix& design, std::span<const double> response) {
    if (design.rows == 0 || design.cols == 0) throw ArgumentError("emulator: empty design");
    if (response.size() != design.rows)
        throw ArgumentError("emulator: " + std::to_string(response.size()) + " responses for " +
                            std::to_string(design.rows) + " design rows");
    for (double v : response)
        if (!std::isfinite(v)) throw ArgumentError("emulator: non-finite response");
}

// Precomputed pairwise |dz| for the likelihood search.
struct PairTable {
    std::size_t K = 0;
    std::size_t d = 0;
    std::vector<double> log_abs; // [(pair) * d + p], -inf where dz == 0

    explicit PairTable(const DesignMatrix& design) : K(design.rows), d(design.cols) {
        log_abs.reserve(K * (K - 1) / 2 * d);
        for (std::size_t a = 0; a < K; ++a) {
            for (std::size_t b = a + 1; b < K; ++b) {
                for (std::size_t p = 0; p < d; ++p) {
                    const double v = std::abs(design.at(a, p) - design.at(b, p));
                    log_abs.push_back(v > 0.0 ? std::log(v) : kNegInf);
                }
            }
        }
    }

    void fill(std::span<const double> power, std::span<const double> beta, double nugget, Eigen::MatrixXd& R) const {
        R.resize(static_cast<Eigen::Index>(K), static_cast<Eigen::Index>(K));
        std::size_t idx = 0;
        for (std::size_t a = 0; a < K; ++a) {
            R(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(a)) = 1.0 + nugget;
            for (std::size_t b = a + 1; b < K; ++b) {
                double s = 0.0;
                for (std::size_t p = 0; p < d; ++p, ++idx) {
                    const double la = log_abs[idx];
                    if (la != kNegInf && beta[p] != 0.0) s += beta[p] * std::exp(power[p] * la);
                }
                const double c = std::exp(-s);
                R(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b)) = c;
                R(static_cast<Eigen::Index>(b), static_cast<Eigen::Index>(a)) = c;
            }
        }
    }
};

struct Profile {
    double loglik = kNegInf;
    double mu = 0.0;
    double sigma2 = 0.0;
};

// Concentrated likelihood: mu and sigma^2 at their GLS closed forms.
Profile profile(const Eigen::MatrixXd& R, const Eigen::VectorXd& w, double floor, Eigen::LLT<Eigen::MatrixXd>& llt) {
    Profile out;
    llt.compute(R);
    if (llt.info() != Eigen::Success) return out;
    const Eigen::Index K = w.size();
    const Eigen::VectorXd ones = Eigen::VectorXd::Ones(K);
    const Eigen::VectorXd rinv_one = llt.solve(ones);
    const Eigen::VectorXd rinv_w = llt.solve(w);
    const double denom = ones.dot(rinv_one);
    if (!(denom > 0.0)) return out;
    out.mu = ones.dot(rinv_w) / denom;
    const Eigen::VectorXd resid = w - out.mu * ones;
    const double q = resid.dot(llt.solve(resid));
    out.sigma2 = std::max(q / static_cast<double>(K), floor);
    const auto& L = llt.matrixLLT();
    double logdet = 0.0;
    for (Eigen::Index i = 0; i < K; ++i) logdet += 2.0 * std::log(L(i, i));
    out.loglik = -0.5 * (static_cast<double>(K) * std::log(out.sigma2) + logdet);
    if (!std::isfinite(out.loglik)) out.loglik = kNegInf;
    return out;
}

} // namespace

std::vector<double> LooResult::studentized() const {
    std::vector<double> out(residual.size());
    for (std::size_t k = 0; k < out.size(); ++k) out[k] = sd[k] > 0.0 ? residual[k] / sd[k] : 0.0;
    return out;
}

double LooResult::rmse() const {
    if (residual.empty()) return 0.0;
    double s = 0.0;
    for (double r : residual) s += r * r;
    return std::sqrt(s / static_cast<double>(residual.size()));
}

double correlation(std::span<const double> z, std::span<const double> z2, std::span<const double> alpha,
                   std::span<const double> beta) {
    if (z.size() != z2.size() || z.size() != alpha.size() || z.size() != beta.size())
        throw ArgumentError("correlation: dimension mismatch");
    double s = 0.0;
    for (std::size_t p = 0; p < z.size(); ++p) {
        if (beta[p] < 0.0) throw ArgumentError("correlation: beta must be nonnegative");
        const double dz = std::abs(z[p] - z2[p]);
        if (dz > 0.0 && beta[p] > 0.0) s += beta[p] * std::pow(dz, 2.0 - alpha[p]);
    }
    return std::exp(-s);
}

double GaspFit::corr(std::span<const double> a, std::span<const double> b) const {
    double s = 0.0;
    for (std::size_t p = 0; p < power_.size(); ++p) {
        const double dz = std::abs(a[p] - b[p]);
        if (dz > 0.0 && hyper_.beta[p] > 0.0) s += hyper_.beta[p] * std::exp(power_[p] * std::log(dz));
    }
    return std::exp(-s);
}

void GaspFit::correlations(std::span<const double> z, Eigen::VectorXd& out) const {
    if (z.size() != design_.cols)
        throw ArgumentError("emulator: point has " + std::to_string(z.size()) + " coordinates, expected " +
                            std::to_string(design_.cols));
    out.resize(static_cast<Eigen::Index>(design_.rows));
    for (std::size_t k = 0; k < design_.rows; ++k) out(static_cast<Eigen::Index>(k)) = corr(design_.row(k), z);
}

GaspFit GaspFit::with_hyper(const DesignMatrix& design, std::span<const double> response, GaspHyper hyper,
                            double nugget) {
    check_design(design, response);
    const std::size_t d = design.cols;
    if (hyper.alpha.size() != d || hyper.beta.size() != d)
        throw ArgumentError("emulator: hyperparameter dimension mismatch");
    if (!(hyper.lambda > 0.0)) throw ArgumentError("emulator: lambda must be positive");
    for (std::size_t p = 0; p < d; ++p) {
        if (hyper.alpha[p] < 0.0 || hyper.alpha[p] > 1.0) throw ArgumentError("emulator: alpha must lie in [0, 1]");
        if (hyper.beta[p] < 0.0) throw ArgumentError("emulator: beta must be nonnegative");
    }

    GaspFit fit;
    fit.design_ = design;
    fit.response_.assign(response.begin(), response.end());
    fit.hyper_ = std::move(hyper);
    fit.nugget_ = nugget;
    fit.power_.resize(d);
    for (std::size_t p = 0; p < d; ++p) fit.power_[p] = 2.0 - fit.hyper_.alpha[p];

    const auto K = static_cast<Eigen::Index>(design.rows);
    Eigen::MatrixXd R(K, K);
    for (Eigen::Index a = 0; a < K; ++a) {
        R(a, a) = 1.0 + nugget;
        for (Eigen::Index b = a + 1; b < K; ++b) {
            const double c = fit.corr(design.row(static_cast<std::size_t>(a)), design.row(static_cast<std::size_t>(b)));
            R(a, b) = R(b, a) = c;
        }
    }
    Eigen::LLT<Eigen::MatrixXd> llt(R);
    if (llt.info() != Eigen::Success)
        throw ConditioningError("emulator: correlation matrix is not positive definite after nugget regularisation");
    fit.chol_ = llt.matrixL();
    Eigen::VectorXd resid(K);
    for (Eigen::Index k = 0; k < K; ++k) resid(k) = fit.response_[static_cast<std::size_t>(k)] - fit.hyper_.mu;
    fit.white_resid_ = fit.chol_.triangularView<Eigen::Lower>().solve(resid);
    fit.kinv_resid_ = fit.chol_.transpose().triangularView<Eigen::Upper>().solve(fit.white_resid_);

    double logdet = 0.0;
    for (Eigen::Index i = 0; i < K; ++i) logdet += 2.0 * std::log(fit.chol_(i, i));
    const double sigma2 = 1.0 / fit.hyper_.lambda;
    fit.loglik_ = -0.5 * (static_cast<double>(K) * std::log(sigma2) + logdet +
                          fit.white_resid_.squaredNorm() / sigma2);
    return fit;
}

Prediction GaspFit::predict(std::span<const double> z) const {
    Eigen::VectorXd r;
    correlations(z, r);
    const Eigen::VectorXd v = chol_.triangularView<Eigen::Lower>().solve(r);
    Prediction out;
    out.mean = hyper_.mu + v.dot(white_resid_);
    out.var = std::max(0.0, (1.0 - v.squaredNorm()) / hyper_.lambda);
    return out;
}

double GaspFit::predict_mean(std::span<const double> z) const {
    Eigen::VectorXd r;
    correlations(z, r);
    return hyper_.mu + r.dot(kinv_resid_);
}

Prediction GaspFit::predict_augmented(std::span<const double> z_star, double w_star,
                                      std::span<const double> z_new) const {
    if (z_star.size() != design_.cols || z_new.size() != design_.cols)
        throw ArgumentError("predict_augmented: dimension mismatch");
    for (std::size_t k = 0; k < design_.rows; ++k) {
        const auto row = design_.row(k);
        if (std::equal(row.begin(), row.end(), z_star.begin())) return predict(z_new);
    }
    Eigen::VectorXd c_star;
    correlations(z_star, c_star);
    const Eigen::VectorXd l = chol_.triangularView<Eigen::Lower>().solve(c_star);
    const double s2 = 1.0 + nugget_ - l.squaredNorm();
    if (!(s2 > 0.0))
        throw ConditioningError("predict_augmented: augmented correlation matrix is not positive definite");
    const double s = std::sqrt(s2);
    const double y_last = (w_star - hyper_.mu - l.dot(white_resid_)) / s;

    Eigen::VectorXd r;
    correlations(z_new, r);
    const Eigen::VectorXd v = chol_.triangularView<Eigen::Lower>().solve(r);
    const double v_last = (corr(z_star, z_new) - l.dot(v)) / s;

    Prediction out;
    out.mean = hyper_.mu + v.dot(white_resid_) + v_last * y_last;
    out.var = std::max(0.0, (1.0 - v.squaredNorm() - v_last * v_last) / hyper_.lambda);
    return out;
}

LooResult GaspFit::leave_one_out() const {
    const auto K = static_cast<Eigen::Index>(design_.rows);
    const Eigen::MatrixXd Linv = chol_.triangularView<Eigen::Lower>().solve(Eigen::MatrixXd::Identity(K, K));
    // diag((L L^T)^{-1}) = column sums of squares of L^{-1}
    const Eigen::VectorXd diag = Linv.colwise().squaredNorm().transpose();
    LooResult out;
    out.residual.resize(static_cast<std::size_t>(K));
    out.sd.resize(static_cast<std::size_t>(K));
    const double sigma2 = 1.0 / hyper_.lambda;
    for (Eigen::Index k = 0; k < K; ++k) {
        out.residual[static_cast<std::size_t>(k)] = kinv_resid_(k) / diag(k);
        // Predictive variance of the latent value (nugget excluded).
        out.sd[static_cast<std::size_t>(k)] = std::sqrt(std::max(0.0, sigma2 * (1.0 / diag(k) - nugget_)));
    }
    return out;
}

GaspFit fit_gasp(const DesignMatrix& design, std::span<const double> response, const FitOptions& opts) {
    check_design(design, response);
    const std::size_t d = design.cols;
    const std::size_t K = design.rows;
    const std::string name = opts.label.empty() ? std::string("coefficient") : opts.label;
    const double floor = variance_floor(response);

    if (is_constant(response)) {
        GaspHyper h;
        h.mu = response.front();
        h.lambda = 1.0 / floor;
        h.alpha.assign(d, 0.0);
        h.beta.assign(d, 0.0);
        return GaspFit::with_hyper(design, response, std::move(h), opts.nugget);
    }

    const PairTable pairs(design);
    Eigen::VectorXd w(static_cast<Eigen::Index>(K));
    for (std::size_t k = 0; k < K; ++k) w(static_cast<Eigen::Index>(k)) = response[k];

    // x = (log beta_1..d, alpha_1..d)
    optimize::Box box;
    box.lo.assign(2 * d, 0.0);
    box.hi.assign(2 * d, 1.0);
    for (std::size_t p = 0; p < d; ++p) {
        box.lo[p] = opts.log_beta_min;
        box.hi[p] = opts.log_beta_max;
    }

    Eigen::MatrixXd R;
    Eigen::LLT<Eigen::MatrixXd> llt;
    std::vector<double> power(d);
    std::vector<double> beta(d);
    auto unpack = [&](const std::vector<double>& x) {
        for (std::size_t p = 0; p < d; ++p) {
            beta[p] = x[p] <= opts.log_beta_min ? 0.0 : std::exp(x[p]);
            power[p] = 2.0 - x[d + p];
        }
    };
    auto objective = [&](const std::vector<double>& x) {
        unpack(x);
        pairs.fill(power, beta, opts.nugget, R);
        const Profile pr = profile(R, w, floor, llt);
        return pr.loglik == kNegInf ? std::numeric_limits<double>::infinity() : -pr.loglik;
    };

    const std::size_t n_starts = opts.n_starts ? opts.n_starts : 2 * d + 1;
    const std::size_t max_evals = opts.max_evals ? opts.max_evals : 150 * 2 * d;
    const DesignMatrix starts = generate_lhd(std::max<std::size_t>(n_starts, 2), 2 * d, 1, opts.seed);
    // Starting region: beta in [e^-3, e^3], alpha in [0, 1].
    std::vector<double> step(2 * d);
    for (std::size_t p = 0; p < d; ++p) {
        step[p] = 1.0;
        step[d + p] = 0.25;
    }

    optimize::Result best;
    for (std::size_t s = 0; s < n_starts; ++s) {
        std::vector<double> x0(2 * d);
        for (std::size_t p = 0; p < d; ++p) {
            x0[p] = -3.0 + 6.0 * starts.at(s, p);
            x0[d + p] = starts.at(s, d + p);
        }
        auto res = optimize::nelder_mead(objective, x0, step, box, max_evals);
        if (res.value < best.value) best = std::move(res);
    }
    if (!std::isfinite(best.value))
        throw FitError("emulator fit failed for " + name + ": likelihood is not finite at any start");

    // Coordinates whose beta sits near the lower search limit are snapped to
    // zero when that does not lower the likelihood.
    for (std::size_t p = 0; p < d; ++p) {
        if (best.x[p] > opts.log_beta_min && best.x[p] < -6.0) {
            auto trial = best.x;
            trial[p] = opts.log_beta_min;
            const double v = objective(trial);
            if (v <= best.value + 1e-9 * (1.0 + std::abs(best.value))) {
                best.x = trial;
                best.value = std::min(v, best.value);
            }
        }
    }

    unpack(best.x);
    pairs.fill(power, beta, opts.nugget, R);
    const Profile pr = profile(R, w, floor, llt);
    if (pr.loglik == kNegInf)
        throw ConditioningError("emulator fit for " + name + ": correlation matrix singular beyond nugget tolerance");

    GaspHyper h;
    h.mu = pr.mu;
    h.lambda = 1.0 / pr.sigma2;
    h.beta = beta;
    h.alpha.resize(d);
    for (std::size_t p = 0; p < d; ++p) h.alpha[p] = best.x[d + p];
    if (!std::isfinite(h.mu) || !std::isfinite(h.lambda))
        throw FitError("emulator fit failed for " + name + ": non-finite hyperparameters");
    return GaspFit::with_hyper(design, response, std::move(h), opts.nugget);
}

Prediction predict(const GaspFit& fit, std::span<const double> z) {
    for (double v : z) {
        if (v < -1e-12 || v > 1.0 + 1e-12) {
            spdlog::debug("emulator: prediction outside the unit cube");
            break;
        }
    }
    return fit.predict(z);
}

Prediction predict_augmented(const GaspFit& fit, const AugmentPoint& extra, std::span<const double> z_new) {
    return fit.predict_augmented(extra.z, extra.w, z_new);
}

void predict_all(std::span<const GaspFit> fits, std::span<const double> z, std::span<double> mean,
                 std::span<double> var) {
    if (mean.size() != fits.size() || var.size() != fits.size())
        throw ArgumentError("predict_all: output size mismatch");
    if (fits.empty()) return;
    const DesignMatrix& design = fits.front().design_;
    const std::size_t K = design.rows;
    const std::size_t d = design.cols;
    if (z.size() != d) throw ArgumentError("predict_all: point dimension mismatch");
    std::vector<double> log_abs(K * d);
    for (std::size_t k = 0; k < K; ++k) {
        for (std::size_t p = 0; p < d; ++p) {
            const double v = std::abs(design.at(k, p) - z[p]);
            log_abs[k * d + p] = v > 0.0 ? std::log(v) : kNegInf;
        }
    }
    Eigen::VectorXd r(static_cast<Eigen::Index>(K));
    for (std::size_t i = 0; i < fits.size(); ++i) {
        const GaspFit& f = fits[i];
        if (f.design_.rows != K || f.design_.cols != d)
            throw ArgumentError("predict_all: fits do not share a design");
        const auto& beta = f.hyper_.beta;
        for (std::size_t k = 0; k < K; ++k) {
            double s = 0.0;
            for (std::size_t p = 0; p < d; ++p) {
                const double la = log_abs[k * d + p];
                if (la != kNegInf && beta[p] != 0.0) s += beta[p] * std::exp(f.power_[p] * la);
            }
            r(static_cast<Eigen::Index>(k)) = std::exp(-s);
        }
        const Eigen::VectorXd v = f.chol_.triangularView<Eigen::Lower>().solve(r);
        mean[i] = f.hyper_.mu + v.dot(f.white_resid_);
        var[i] = std::max(0.0, (1.0 - v.squaredNorm()) / f.hyper_.lambda);
    }
}

std::vector<GaspFit> fit_many(const DesignMatrix& design, const std::vector<std::vector<double>>& responses,
                              const FitOptions& opts, std::size_t threads, const std::vector<std::string>& labels) {
    const std::size_t n = responses.size();
    std::vector<std::optional<GaspFit>> slots(n);
    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::mutex failure_mutex;

    auto worker = [&] {
        for (;;) {
            const std::size_t c = next.fetch_add(1);
            if (c >= n) return;
            try {
                FitOptions o = opts;
                o.seed = opts.seed ^ (0x9e3779b97f4a7c15ULL * (c + 1));
                if (c < labels.size()) o.label = labels[c];
                slots[c] = fit_gasp(design, responses[c], o);
            } catch (...) {
                std::lock_guard lock(failure_mutex);
                if (!failure) failure = std::current_exception();
                next = n;
                return;
            }
        }
    };
    threads = std::max<std::size_t>(1, std::min(threads, n));
    if (threads == 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(worker);
        for (auto& t : pool) t.join();
    }
    if (failure) std::rethrow_exception(failure);
    std::vector<GaspFit> out;
    out.reserve(n);
    for (auto& s : slots) out.push_back(std::move(*s));
    return out;
}

} // namespace wavecal::emulator
