#pragma once

// Information stochastic gradient: one natural-gradient step per sample (or
// mini-batch) with step a/n, updating mu, then Sigma, then beta, each block using
// the freshest values of the blocks before it.

#include "ecd/core.hpp"
#include "ecd/fisher.hpp"
#include "ecd/linalg.hpp"
#include "ecd/manifold.hpp"
#include "ecd/models.hpp"
#include "ecd/trace.hpp"

#include <algorithm>
#include <cmath>
#include <concepts>
#include <optional>
#include <string>
#include <vector>

namespace ecd {

/// Sequential: mu, then Sigma, then beta, each block's gradient taken at the
/// freshest values of the blocks before it. Simultaneous: all three gradients at
/// the current iterate, then all three updates.
enum class BlockOrder { Sequential, Simultaneous };

struct IsgConfig {
    double a_coeff = 1.0;
    /// Step n uses a / (n + step_offset); 0 gives the plain a/n schedule.
    double step_offset = 0.0;
    std::size_t minibatch = 1;
    ThetaParams theta0;
    EstimationScope scope;
    /// Record every this many updates (0: only the final state).
    std::size_t record_every = 0;
    std::optional<Reference> reference;
    BlockOrder order = BlockOrder::Sequential;
    /// Relative beta change that triggers recomputing the information constants.
    double info_refresh = 0.01;
    /// Bound on each block step: spectral norm of Sigma^{-1} (step * U_sigma),
    /// Mahalanobis length of the location step and |log| of the shape ratio.
    double trust_radius = 1.0;
    double beta_min = 0.05;
    double beta_max = 50.0;

    void validate() const {
        if (!(a_coeff > 0.0)) throw Error("isg: a_coeff must be positive");
        if (!(step_offset >= 0.0)) throw Error("isg: step_offset must be non-negative");
        if (minibatch < 1) throw Error("isg: minibatch must be >= 1");
        if (!(trust_radius > 0.0)) throw Error("isg: trust radius must be positive");
        if (!(beta_min > 0.0) || !(beta_max > beta_min)) throw Error("isg: invalid beta rails");
    }
};

namespace detail {

/// In-place rank-one update of a lower Cholesky factor: L L' + v v'.
inline void chol_rank_one_update(Matrix& l, Vector v) {
    const auto m = l.rows();
    for (Eigen::Index k = 0; k < m; ++k) {
        const double lkk = l(k, k);
        const double r = std::hypot(lkk, v[k]);
        const double c = r / lkk;
        const double s = v[k] / lkk;
        l(k, k) = r;
        if (k + 1 < m) {
            const auto tail = m - k - 1;
            l.col(k).tail(tail) = (l.col(k).tail(tail) + s * v.tail(tail)) / c;
            v.tail(tail) = c * v.tail(tail) - s * l.col(k).tail(tail);
        }
    }
}

}  // namespace detail

/// Online estimator state. Feed samples with update(); read theta() at any time.
class IsgEstimator {
public:
    IsgEstimator(ModelKind model, IsgConfig cfg)
        : model_(model), cfg_(std::move(cfg)), cache_(model, static_cast<int>(cfg_.theta0.dim()), cfg_.info_refresh) {
        cfg_.validate();
        theta_ = cfg_.scope.pin(cfg_.theta0);
        theta_.validate();
        m_ = theta_.dim();
        chol_ = linalg::spd_llt(theta_.sigma).matrixL();
        cache_.at(theta_.beta);
        batch_.resize(0, m_);
    }

    /// Consumes one observation. With a mini-batch size b > 1 the step is taken once
    /// b observations have been buffered.
    void update(const Eigen::Ref<const Vector>& x) {
        check_dim(x.size(), m_, "isg update");
        if (cfg_.minibatch == 1) {
            step_single(x);
            return;
        }
        pending_.push_back(x);
        if (pending_.size() == cfg_.minibatch) flush();
    }

    /// Takes a step with a partially filled mini-batch, if any.
    void flush() {
        if (pending_.empty()) return;
        DataMatrix batch(static_cast<Eigen::Index>(pending_.size()), m_);
        for (std::size_t i = 0; i < pending_.size(); ++i) batch.row(static_cast<Eigen::Index>(i)) = pending_[i].transpose();
        pending_.clear();
        step_batch(batch);
    }

    [[nodiscard]] const ThetaParams& theta() const { return theta_; }
    [[nodiscard]] std::size_t steps() const { return steps_; }
    /// Metric norm of the last natural-gradient direction.
    [[nodiscard]] double last_grad_norm() const { return last_grad_norm_; }
    [[nodiscard]] const std::vector<std::string>& warnings() const { return warnings_; }
    [[nodiscard]] int info_refreshes() const { return cache_.refreshes(); }

private:
    double step_size() const { return cfg_.a_coeff / (static_cast<double>(steps_ + 1) + cfg_.step_offset); }

    void step_single(const Eigen::Ref<const Vector>& x) {
        const double step = step_size();
        const int mi = static_cast<int>(m_);
        const double md = static_cast<double>(m_);
        const InfoConstants c = cache_.at(theta_.beta);
        double gnorm2 = 0.0;

        const bool fresh = cfg_.order == BlockOrder::Sequential;
        Vector diff = x - theta_.mu;
        double delta = Vector(chol_.triangularView<Eigen::Lower>().solve(diff)).squaredNorm();
        auto refresh = [&] {
            if (!fresh) return;
            diff = x - theta_.mu;
            delta = Vector(chol_.triangularView<Eigen::Lower>().solve(diff)).squaredNorm();
        };

        if (cfg_.scope.mu_free()) {
            const double hp = h_first(delta, theta_.beta, model_, mi).dh_ddelta;
            // u_mu = -2 h' (x - mu) / I_mu; its metric norm is 4 h'^2 delta / I_mu.
            double coef = step * -2.0 * hp / c.i_mu;
            const double mahal = std::abs(coef) * std::sqrt(delta);
            if (mahal > cfg_.trust_radius) coef *= cfg_.trust_radius / mahal;
            theta_.mu += coef * diff;
            gnorm2 += 4.0 * hp * hp * delta / c.i_mu;
            refresh();
        }

        const double beta_now = theta_.beta;
        {
            const double hp = h_first(delta, theta_.beta, model_, mi).dh_ddelta;
            // Whitened by L: Sigma^{-1/2}-congruent G_Sigma = -I/2 - h' y y', y = L^{-1} diff.
            // The natural direction is then pI + q y y' with
            const double tr = -0.5 * md - hp * delta;
            double q = -hp / c.j_1;
            double p = hp * delta / (md * c.j_1) + tr / (md * c.j_2);
            gnorm2 += c.i_1 * ((md - 1.0) * p * p + (p + q * delta) * (p + q * delta)) +
                      c.i_2 * std::pow(md * p + q * delta, 2);
            p *= step;
            q *= step;
            const double spectral = std::max(std::abs(p), std::abs(p + q * delta));
            if (spectral > cfg_.trust_radius) {
                const double s = cfg_.trust_radius / spectral;
                p *= s;
                q *= s;
            }
            // Sigma exp(Sigma^{-1} U) = L exp(pI + q y y') L' = e^p (Sigma + (e^{q delta} - 1)/delta diff diff').
            const double coef = delta > 0.0 ? std::expm1(q * delta) / delta : q;
            const double ep = std::exp(p);
            if (coef > 0.0) {
                theta_.sigma.selfadjointView<Eigen::Lower>().rankUpdate(diff, coef);
                theta_.sigma.triangularView<Eigen::StrictlyUpper>() =
                    theta_.sigma.triangularView<Eigen::StrictlyLower>().transpose();
                detail::chol_rank_one_update(chol_, std::sqrt(coef) * diff);
            }
            theta_.sigma *= ep;
            chol_ *= std::sqrt(ep);
            if (!theta_.sigma.allFinite()) throw NotSpdError("isg: scatter update overflowed");
            refresh();
        }

        if (cfg_.scope.beta_free()) {
            const double hb = h_first(delta, theta_.beta, model_, mi).dh_dbeta;
            const double da = log_normalizer(beta_now, mi, model_).dalpha_dbeta;
            const double u = (da + hb) / c.i_beta;
            gnorm2 += c.i_beta * u * u;
            set_beta(theta_.beta * std::exp(clamp_log_step(step * u / theta_.beta)));
        }

        last_grad_norm_ = std::sqrt(gnorm2);
        ++steps_;
        if (steps_ % kRefactorEvery == 0) refactor();
    }

    void step_batch(const DataMatrix& batch) {
        const double step = step_size();
        const InfoConstants c = cache_.at(theta_.beta);
        const auto w = c.weights();
        double gnorm2 = 0.0;
        const ThetaParams start = theta_;
        std::optional<BatchStats> st;
        auto stats = [&]() -> const BatchStats& {
            if (!st || cfg_.order == BlockOrder::Sequential) st = batch_stats(theta_, batch, model_);
            return *st;
        };
        // Gradients are evaluated at `at`: the current state when sequential, the start of the step otherwise.
        auto at = [&]() -> const ThetaParams& { return cfg_.order == BlockOrder::Sequential ? theta_ : start; };
        if (cfg_.scope.mu_free()) {
            const TangentVector u = nat_grad_from_stats(at(), stats(), model_, c, cfg_.scope);
            const double n2 = u.u_mu.dot(linalg::spd_llt(at().sigma).solve(u.u_mu));
            const double mahal = step * std::sqrt(n2);
            theta_.mu += (mahal > cfg_.trust_radius ? cfg_.trust_radius / mahal : 1.0) * step * u.u_mu;
            gnorm2 += w.i_mu * n2;
        }
        {
            TangentVector u = nat_grad_from_stats(at(), stats(), model_, c, cfg_.scope);
            u.u_mu.setZero();
            u.u_beta = 0.0;
            gnorm2 += metric_norm_sq(at(), u, w);
            Matrix step_u = step * u.u_sigma;
            const double spectral = relative_spectral_norm(theta_.sigma, step_u);
            if (spectral > cfg_.trust_radius) step_u *= cfg_.trust_radius / spectral;
            theta_.sigma = spd_exp(theta_.sigma, step_u);
            chol_ = linalg::spd_llt(theta_.sigma).matrixL();
        }
        if (cfg_.scope.beta_free()) {
            const TangentVector u = nat_grad_from_stats(at(), stats(), model_, c, cfg_.scope);
            gnorm2 += w.i_beta * u.u_beta * u.u_beta;
            set_beta(theta_.beta * std::exp(clamp_log_step(step * u.u_beta / theta_.beta)));
        }
        last_grad_norm_ = std::sqrt(gnorm2);
        ++steps_;
    }

    double clamp_log_step(double v) const { return std::clamp(v, -cfg_.trust_radius, cfg_.trust_radius); }

    void set_beta(double beta) {
        if (beta < cfg_.beta_min || beta > cfg_.beta_max || !std::isfinite(beta)) {
            beta = std::clamp(std::isfinite(beta) ? beta : cfg_.beta_max, cfg_.beta_min, cfg_.beta_max);
            if (warnings_.size() < kMaxWarnings)
                warnings_.push_back("beta hit guard rail " + std::to_string(beta) + " at step " +
                                    std::to_string(steps_ + 1));
        }
        theta_.beta = beta;
    }

    void refactor() {
        theta_.sigma = linalg::symmetrize(theta_.sigma);
        chol_ = linalg::spd_llt(theta_.sigma).matrixL();
    }

    static constexpr std::size_t kRefactorEvery = 4096;
    static constexpr std::size_t kMaxWarnings = 32;

    ModelKind model_;
    IsgConfig cfg_;
    InfoCache cache_;
    ThetaParams theta_;
    Eigen::Index m_ = 0;
    Matrix chol_;
    DataMatrix batch_;
    std::vector<Vector> pending_;
    std::size_t steps_ = 0;
    double last_grad_norm_ = 0.0;
    std::vector<std::string> warnings_;
};

/// Anything callable as `std::optional<Vector> next()`.
template <class S>
concept SampleSource = requires(S s) {
    { s() } -> std::convertible_to<std::optional<Vector>>;
};

/// One pass of ISG over a stream.
template <SampleSource Source>
EstimateTrace isg_fit(Source&& next, const IsgConfig& cfg, ModelKind model) {
    detail::Stopwatch clock;
    IsgEstimator est(model, cfg);
    EstimateTrace trace;
    auto record = [&] {
        trace.records.push_back({est.steps(), detail::distance_to(cfg.reference, est.theta()), est.last_grad_norm(),
                                 clock.ns(), est.theta().beta});
    };
    std::size_t seen = 0;
    while (auto x = next()) {
        est.update(*x);
        ++seen;
        if (cfg.record_every > 0 && cfg.minibatch == 1 && est.steps() % cfg.record_every == 0) record();
        if (cfg.record_every > 0 && cfg.minibatch > 1 && seen % cfg.minibatch == 0 &&
            est.steps() % cfg.record_every == 0)
            record();
    }
    est.flush();
    if (seen > 0 && (trace.records.empty() || trace.records.back().iter != est.steps())) record();
    trace.theta_hat = est.theta();
    trace.warnings = est.warnings();
    trace.iterations = est.steps();
    return trace;
}

/// ISG over the rows of a data matrix, in order.
inline EstimateTrace isg_fit(const Eigen::Ref<const DataMatrix>& data, const IsgConfig& cfg, ModelKind model) {
    Eigen::Index row = 0;
    return isg_fit(
        [&]() -> std::optional<Vector> {
            if (row >= data.rows()) return std::nullopt;
            return Vector(data.row(row++).transpose());
        },
        cfg, model);
}

}  // namespace ecd
