#pragma once

// Information deterministic gradient: block-wise natural-gradient descent on the
// empirical cost with an Armijo backtracking line search per block.

#include "ecd/core.hpp"
#include "ecd/fisher.hpp"
#include "ecd/linalg.hpp"
#include "ecd/manifold.hpp"
#include "ecd/models.hpp"
#include "ecd/trace.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <string>

namespace ecd {

struct ArmijoParams {
    double c1 = 1e-4;
    double backtrack = 0.5;
    double alpha_init = 1.0;
    int max_backtracks = 60;
};

struct IdgConfig {
    std::size_t max_iters = 100;
    double grad_tol = 1e-8;
    ArmijoParams armijo;
    ThetaParams theta0;
    EstimationScope scope;
    std::optional<Reference> reference;
    double info_refresh = 0.01;
    double trust_radius = 10.0;
    double beta_min = 0.05;
    double beta_max = 50.0;

    void validate() const {
        if (!(armijo.c1 > 0.0 && armijo.c1 < 1.0)) throw Error("idg: armijo c1 must lie in (0, 1)");
        if (!(armijo.backtrack > 0.0 && armijo.backtrack < 1.0)) throw Error("idg: backtrack factor must lie in (0, 1)");
        if (!(armijo.alpha_init > 0.0)) throw Error("idg: initial step must be positive");
        if (armijo.max_backtracks < 1) throw Error("idg: max_backtracks must be >= 1");
        if (!(grad_tol >= 0.0)) throw Error("idg: grad_tol must be non-negative");
        if (!(trust_radius > 0.0)) throw Error("idg: trust radius must be positive");
    }
};

/// Batch fit over the rows of `data`. Throws EstimationFailure (with the last
/// iterate) if a line search exhausts its backtracks, unless the decrease it asked
/// for was already below the resolution of the cost; then the fit stops there.
inline EstimateTrace idg_fit(const Eigen::Ref<const DataMatrix>& data, const IdgConfig& cfg, ModelKind model) {
    cfg.validate();
    detail::Stopwatch clock;
    ThetaParams theta = cfg.scope.pin(cfg.theta0);
    theta.validate();
    check_dim(data.cols(), theta.dim(), "idg_fit");
    const int m = static_cast<int>(theta.dim());
    InfoCache cache(model, m, cfg.info_refresh);
    EstimateTrace trace;
    trace.theta_hat = theta;
    if (cfg.max_iters == 0) return trace;

    BatchStats st = batch_stats(theta, data, model);
    double cost = empirical_cost(theta, st, model);
    const auto& ar = cfg.armijo;

    auto fail = [&](const std::string& block, std::size_t iter) {
        trace.theta_hat = theta;
        trace.iterations = iter;
        throw EstimationFailure("idg: line search on " + block + " failed at iteration " + std::to_string(iter),
                                trace);
    };

    bool stalled = false;

    // Backtracks along `retract(t)` until the Armijo condition holds for slope -norm2.
    auto search = [&](auto&& retract, double norm2, const std::string& block, std::size_t iter) {
        double t = ar.alpha_init;
        for (int k = 0; k <= ar.max_backtracks; ++k, t *= ar.backtrack) {
            ThetaParams trial;
            try {
                trial = retract(t);
            } catch (const NotSpdError&) {
                continue;
            }
            BatchStats trial_st = batch_stats(trial, data, model);
            const double trial_cost = empirical_cost(trial, trial_st, model);
            if (std::isfinite(trial_cost) && trial_cost <= cost - ar.c1 * t * norm2) {
                theta = std::move(trial);
                st = std::move(trial_st);
                cost = trial_cost;
                return;
            }
        }
        if (ar.alpha_init * norm2 <= 64.0 * std::numeric_limits<double>::epsilon() * std::max(1.0, std::abs(cost))) {
            stalled = true;
            trace.warnings.push_back("idg: " + block + " step below cost resolution at iteration " + std::to_string(iter));
            return;
        }
        fail(block, iter);
    };

    for (std::size_t iter = 0;; ++iter) {
        const InfoConstants& c = cache.at(theta.beta);
        const MetricWeights w = c.weights();
        const TangentVector full = nat_grad_from_stats(theta, st, model, c, cfg.scope);
        const double gnorm = std::sqrt(metric_norm_sq(theta, full, w));
        trace.records.push_back({iter, detail::distance_to(cfg.reference, theta), gnorm, clock.ns(), theta.beta});
        trace.iterations = iter;
        if (!std::isfinite(gnorm)) fail("gradient", iter);
        if (gnorm < cfg.grad_tol || iter == cfg.max_iters || stalled) break;

        if (cfg.scope.mu_free()) {
            const Vector u = nat_grad_from_stats(theta, st, model, c, cfg.scope).u_mu;
            const double n2 = c.i_mu * u.dot(linalg::spd_llt(theta.sigma).solve(u));
            if (n2 > 0.0) {
                search(
                    [&](double t) {
                        ThetaParams p = theta;
                        p.mu += t * u;
                        return p;
                    },
                    n2, "mu", iter);
            }
        }
        {
            TangentVector u = nat_grad_from_stats(theta, st, model, c, cfg.scope);
            u.u_mu.setZero();
            u.u_beta = 0.0;
            const double n2 = metric_norm_sq(theta, u, w);
            const double spectral = relative_spectral_norm(theta.sigma, u.u_sigma) * ar.alpha_init;
            const double scale = spectral > cfg.trust_radius ? cfg.trust_radius / spectral : 1.0;
            const Matrix dir = scale * u.u_sigma;
            if (n2 > 0.0) {
                search(
                    [&](double t) {
                        ThetaParams p = theta;
                        p.sigma = spd_exp(theta.sigma, t * dir);
                        return p;
                    },
                    scale * n2, "sigma", iter);
            }
        }
        if (cfg.scope.beta_free()) {
            const double u = nat_grad_from_stats(theta, st, model, c, cfg.scope).u_beta;
            const double n2 = c.i_beta * u * u;
            if (n2 > 0.0) {
                const double b0 = theta.beta;
                search(
                    [&](double t) {
                        ThetaParams p = theta;
                        p.beta = std::clamp(b0 * std::exp(t * u / b0), cfg.beta_min, cfg.beta_max);
                        return p;
                    },
                    n2, "beta", iter);
                if (theta.beta == cfg.beta_min || theta.beta == cfg.beta_max)
                    trace.warnings.push_back("beta hit guard rail at iteration " + std::to_string(iter));
            }
        }
    }
    trace.theta_hat = theta;
    return trace;
}

}  // namespace ecd
