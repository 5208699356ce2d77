#pragma once

// Fixed-point iteration on the likelihood stationarity conditions.

#include "ecd/core.hpp"
#include "ecd/fisher.hpp"
#include "ecd/linalg.hpp"
#include "ecd/manifold.hpp"
#include "ecd/mm.hpp"
#include "ecd/models.hpp"
#include "ecd/trace.hpp"

#include <boost/math/tools/roots.hpp>

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace ecd {

struct FpOptions {
    /// Stop once successive iterates are within tol: affine-invariant distance for the
    /// scatter, Mahalanobis length for the location, |log ratio| for the shape.
    double tol = 1e-10;
    std::size_t max_iters = 1000;
    /// Starting point; defaults to the sample mean and covariance. Out-of-scope
    /// parts must then come from the scope's fixed values.
    std::optional<ThetaParams> theta0;
    std::optional<Reference> reference;
    double beta_min = 0.05;
    double beta_max = 50.0;
};

namespace detail {

inline std::vector<double> deltas(const ThetaParams& theta, const Eigen::Ref<const DataMatrix>& data) {
    const auto llt = linalg::spd_llt(theta.sigma);
    std::vector<double> out(static_cast<std::size_t>(data.rows()));
    Vector diff(theta.dim());
    for (Eigen::Index i = 0; i < data.rows(); ++i) {
        diff = data.row(i).transpose() - theta.mu;
        out[static_cast<std::size_t>(i)] = Vector(llt.matrixL().solve(diff)).squaredNorm();
    }
    return out;
}

/// Root of d/dbeta mean l = alpha'(beta) + mean dh/dbeta over [lo, hi]; a rail when
/// the derivative keeps one sign on the bracket.
inline double solve_beta(const std::vector<double>& d, double beta0, int m, ModelKind model, double lo, double hi,
                         bool& railed) {
    auto f = [&](double b) {
        const LogNormalizer a = log_normalizer(b, m, model);
        double g = 0.0;
        double gp = 0.0;
        for (const double delta : d) {
            if (delta == 0.0) continue;
            const HDerivs h = h_derivs(delta, b, model, m);
            g += h.dh_dbeta;
            gp += h.d2h_dbeta2;
        }
        const double n = static_cast<double>(d.size());
        return std::make_pair(a.dalpha_dbeta + g / n, a.d2alpha_dbeta2 + gp / n);
    };
    railed = false;
    if (f(lo).first <= 0.0) {
        railed = true;
        return lo;
    }
    if (f(hi).first >= 0.0) {
        railed = true;
        return hi;
    }
    std::uintmax_t iters = 100;
    return boost::math::tools::newton_raphson_iterate(f, std::clamp(beta0, lo, hi), lo, hi, 45, iters);
}

/// s with s^b = b/(m N) sum delta^b, summed in log space (delta^b overflows for large b).
inline double mggd_scale(const std::vector<double>& d, double b, int m) {
    double top = -std::numeric_limits<double>::infinity();
    for (const double delta : d)
        if (delta > 0.0) top = std::max(top, std::log(delta));
    double s = 0.0;
    for (const double delta : d)
        if (delta > 0.0) s += std::exp(b * (std::log(delta) - top));
    return std::exp(top + std::log(b * s / (static_cast<double>(m) * static_cast<double>(d.size()))) / b);
}

/// MGGD shape with the scatter scale profiled out: for each candidate beta the scale
/// takes its conditional optimum s^beta = beta/(m N) sum delta^beta. Returns (beta, s).
inline std::pair<double, double> solve_beta_profiled(const std::vector<double>& d, int m, double lo, double hi,
                                                     bool& railed) {
    const double n = static_cast<double>(d.size());
    auto scale = [&](double b) { return mggd_scale(d, b, m); };
    auto f = [&](double b) {
        const double s = scale(b);
        const LogNormalizer a = log_normalizer(b, m, ModelKind::MGGD);
        double g = 0.0;
        for (const double delta : d)
            if (delta > 0.0) g += h_derivs(delta / s, b, ModelKind::MGGD, m).dh_dbeta;
        return a.dalpha_dbeta + g / n;
    };
    railed = false;
    const double flo = f(lo);
    if (flo <= 0.0) {
        railed = true;
        return {lo, scale(lo)};
    }
    const double fhi = f(hi);
    if (fhi >= 0.0) {
        railed = true;
        return {hi, scale(hi)};
    }
    std::uintmax_t iters = 200;
    const auto r = boost::math::tools::toms748_solve(f, lo, hi, flo, fhi, boost::math::tools::eps_tolerance<double>(50),
                                                     iters);
    const double b = 0.5 * (r.first + r.second);
    return {b, scale(b)};
}

}  // namespace detail

inline EstimateTrace fp_fit(const Eigen::Ref<const DataMatrix>& data, const EstimationScope& scope, ModelKind model,
                            const FpOptions& opt = {}) {
    const auto m = data.cols();
    const int mi = static_cast<int>(m);
    if (data.rows() <= m) throw Error("fp_fit: need more samples than dimensions");
    if (!(opt.tol > 0.0)) throw Error("fp_fit: tol must be positive");
    detail::Stopwatch clock;

    ThetaParams theta;
    if (opt.theta0) {
        theta = *opt.theta0;
    } else {
        const SampleMoments mom = sample_moments(data);
        theta.mu = mom.mean;
        theta.sigma = mom.cov;
        theta.beta = 1.0;
        if (!scope.mu_free() && !scope.fixed_mu) throw Error("fp_fit: sigma-only scope needs a fixed mu or theta0");
        if (!scope.beta_free() && !scope.fixed_beta) throw Error("fp_fit: fixed-shape scope needs a fixed beta or theta0");
    }
    theta = scope.pin(std::move(theta));
    check_dim(theta.dim(), m, "fp_fit");
    if (!scope.mu_free() && !opt.theta0) {
        const SampleMoments mom = sample_moments(data);
        const Vector off = mom.mean - theta.mu;
        theta.sigma = mom.cov + off * off.transpose();
    }
    theta.validate();

    InfoCache cache(model, mi);
    EstimateTrace trace;

    for (std::size_t iter = 1; iter <= opt.max_iters; ++iter) {
        const ThetaParams prev = theta;
        if (scope.mu_free()) {
            const auto d = detail::deltas(theta, data);
            Vector num = Vector::Zero(m);
            double den = 0.0;
            for (Eigen::Index i = 0; i < data.rows(); ++i) {
                const double w = -h_first(d[static_cast<std::size_t>(i)], theta.beta, model, mi).dh_ddelta;
                num.noalias() += w * data.row(i).transpose();
                den += w;
            }
            theta.mu = num / den;
            if (model == ModelKind::MGGD && theta.beta > 1.0) {
                // The weighted-mean map has slope -2(beta-1)/m about its fixed point.
                const double t = static_cast<double>(m) / (static_cast<double>(m) + 2.0 * (theta.beta - 1.0));
                theta.mu = prev.mu + t * (theta.mu - prev.mu);
            }
        }

        const BatchStats st = batch_stats(theta, data, model);
        const InfoConstants& c = cache.at(theta.beta);
        const double gnorm = std::sqrt(metric_norm_sq(theta, nat_grad_from_stats(theta, st, model, c, scope), c.weights()));
        Matrix sigma_new = linalg::symmetrize(-2.0 * st.mean_hp_scatter);
        if (model == ModelKind::MGGD && theta.beta > 1.0) {
            // The bare map overshoots in shape by a factor about -2(beta-1)/(m+2) once
            // beta > 1; move only the matching fraction of the way along the geodesic.
            const double t = (static_cast<double>(m) + 2.0) / (static_cast<double>(m) + 2.0 * theta.beta);
            const auto e = linalg::spd_eig(theta.sigma);
            const Matrix root = linalg::apply(e, [](double x) { return std::sqrt(x); });
            const Matrix inv_root = linalg::apply(e, [](double x) { return 1.0 / std::sqrt(x); });
            const auto w = linalg::spd_eig(linalg::symmetrize(inv_root * sigma_new * inv_root));
            sigma_new = linalg::symmetrize(root * linalg::apply(w, [t](double x) { return std::pow(x, t); }) * root);
        }
        if (model == ModelKind::MGGD && theta.beta != 1.0) {
            // Nor is it scale-stable; reset the overall scale to its conditional
            // optimum given the new shape.
            ThetaParams probe = theta;
            probe.sigma = sigma_new;
            sigma_new *= detail::mggd_scale(detail::deltas(probe, data), theta.beta, mi);
        }
        theta.sigma = std::move(sigma_new);

        if (scope.beta_free()) {
            bool railed = false;
            if (model == ModelKind::MGGD) {
                const auto [b, s] =
                    detail::solve_beta_profiled(detail::deltas(theta, data), mi, opt.beta_min, opt.beta_max, railed);
                theta.beta = b;
                theta.sigma *= s;
            } else {
                theta.beta = detail::solve_beta(detail::deltas(theta, data), theta.beta, mi, model, opt.beta_min,
                                                opt.beta_max, railed);
            }
            if (railed) trace.warnings.push_back("beta hit guard rail at sweep " + std::to_string(iter));
        }

        const Vector dmu = theta.mu - prev.mu;
        const double step2 = spd_distance_sq(prev.sigma, theta.sigma, MetricWeights::unit()) +
                             dmu.dot(linalg::spd_llt(prev.sigma).solve(dmu)) +
                             std::pow(std::log(theta.beta / prev.beta), 2);
        const double step = std::sqrt(step2);
        trace.records.push_back({iter, detail::distance_to(opt.reference, theta), gnorm, clock.ns(), theta.beta});
        trace.iterations = iter;
        if (!std::isfinite(step)) {
            trace.theta_hat = theta;
            throw EstimationFailure("fp_fit: iterate left the parameter space", trace);
        }
        if (step < opt.tol) {
            trace.theta_hat = theta;
            return trace;
        }
    }
    trace.theta_hat = theta;
    throw EstimationFailure("fp_fit: no convergence within " + std::to_string(opt.max_iters) + " sweeps", trace);
}

}  // namespace ecd
