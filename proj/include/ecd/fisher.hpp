#pragma once

// Information constants and natural (information) gradients of the log-likelihood.
//
// The constants only depend on (beta, m) because delta_x has the same scalar law
// for every (mu, Sigma):
//   MGGD       delta = W^{1/beta},  W ~ Gamma(m/(2 beta), scale 2)
//   Student-t  delta/(beta + delta) ~ Beta(m/2, beta/2)   (delta/m ~ F(m, beta))
// Expectations are integrals against these laws, done by tanh-sinh quadrature in
// the Gamma / Beta variable.

#include "ecd/core.hpp"
#include "ecd/linalg.hpp"
#include "ecd/manifold.hpp"
#include "ecd/models.hpp"

#include <boost/math/quadrature/exp_sinh.hpp>
#include <boost/math/quadrature/tanh_sinh.hpp>
#include <boost/math/special_functions/beta.hpp>
#include <boost/math/special_functions/gamma.hpp>

#include <cmath>
#include <cstdio>
#include <limits>
#include <numbers>
#include <string>

namespace ecd {

struct InfoConstants {
    double i_mu = 1.0;
    double i_1 = 0.5;
    double i_2 = 0.0;
    double i_beta = 1.0;
    double a_const = 0.0;  // E[(h'(delta) delta)^2]
    double j_1 = 0.5;      // I_1
    double j_2 = 0.5;      // I_1 + m I_2
    double beta = 1.0;     // shape at which the constants were evaluated
    int m = 1;

    [[nodiscard]] MetricWeights weights() const { return {i_mu, i_1, i_2, i_beta}; }
};

namespace detail {

inline constexpr double kQuadRelTol = 1e-8;

inline void check_quadrature(double value, double abs_err, double l1) {
    const double rel = abs_err / std::max(l1, 1e-300);
    if (!std::isfinite(value) || rel > kQuadRelTol) {
        char buf[96];
        std::snprintf(buf, sizeof buf, "radial quadrature did not converge (relative error %.3g)", rel);
        throw Error(buf);
    }
}

/// E[W^q f(W)] for W ~ Gamma(k, scale 2), with s = W/2. When k + q < 1 the
/// substitution v = s^{k+q} removes the power-law singularity at the origin. The
/// range is split between tanh-sinh (finite part) and exp-sinh (tail).
template <class F>
double gamma_expectation(F&& f, double k, double q = 0.0) {
    const double c = k + q;
    if (!(c > 0.0)) throw Error("radial expectation diverges (moment of order " + std::to_string(q) + ")");
    const double log_front = q * std::numbers::ln2 - boost::math::lgamma(k);
    const bool substitute = c < 1.0;
    auto dens = [&](double v) {
        if (!(v > 0.0) || !std::isfinite(v)) return 0.0;
        if (substitute) {
            // s^{c-1} ds = dv / c
            const double sv = std::pow(v, 1.0 / c);
            const double p = std::exp(log_front - sv) / c;
            return p == 0.0 ? 0.0 : f(2.0 * sv) * p;
        }
        const double p = std::exp(log_front + (c - 1.0) * std::log(v) - v);
        return p == 0.0 ? 0.0 : f(2.0 * v) * p;
    };
    const double split = std::max(1.0, c);
    boost::math::quadrature::tanh_sinh<double> ts;
    double e1 = 0.0;
    double n1 = 0.0;
    const double v1 = ts.integrate(dens, 0.0, split, 1e-12, &e1, &n1);
    boost::math::quadrature::exp_sinh<double> es;
    double e2 = 0.0;
    double n2 = 0.0;
    const double v2 = es.integrate(dens, split, std::numeric_limits<double>::infinity(), 1e-12, &e2, &n2);
    const double value = v1 + v2;
    check_quadrature(value, e1 + e2, n1 + n2);
    return value;
}

/// E[f(T, 1 - T)] for T ~ Beta(a, b). The complement is taken from the rule's
/// endpoint distance so (1 - t)^{b-1} keeps full precision near t = 1.
template <class F>
double beta_expectation(F&& f, double a, double b) {
    const double lb = boost::math::lgamma(a) + boost::math::lgamma(b) - boost::math::lgamma(a + b);
    auto dens = [&](double t, double tc) {
        const double u = t > 0.5 ? tc : 1.0 - t;  // 1 - t
        if (!(t > 0.0) || !(u > 0.0)) return 0.0;
        const double p = std::exp((a - 1.0) * std::log(t) + (b - 1.0) * std::log(u) - lb);
        if (p == 0.0) return 0.0;
        return f(t, u) * p;
    };
    boost::math::quadrature::tanh_sinh<double> ts;
    double err = 0.0;
    double l1 = 0.0;
    const double value = ts.integrate(dens, 0.0, 1.0, 1e-12, &err, &l1);
    check_quadrature(value, err, l1);
    return value;
}

/// E[f(delta)] under the radial law of the model, for integrands that are regular
/// in delta. MGGD draws go through w = delta^beta.
template <class F>
double radial_expectation(F&& f, double beta, int m, ModelKind model) {
    if (model == ModelKind::MGGD)
        return gamma_expectation([&](double w) { return f(std::exp(std::log(w) / beta)); }, m / (2.0 * beta));
    return beta_expectation([&](double t, double u) { return f(beta * t / u); }, 0.5 * m, 0.5 * beta);
}

}  // namespace detail

/// Information constants at shape beta in dimension m.
inline InfoConstants info_constants(double beta, int m, ModelKind model) {
    detail::check_beta(beta);
    if (m < 1) throw DimensionError("info_constants: m must be >= 1");
    const double md = m;

    InfoConstants c;
    c.beta = beta;
    c.m = m;
    double e_hbb = 0.0;
    if (model == ModelKind::MGGD) {
        // In w = delta^beta: h' delta = -beta w / 2, h' = -beta/2 w^{(beta-1)/beta},
        // h'' delta = -beta (beta-1)/2 w^{(beta-1)/beta}, d2h/dbeta2 = -w (log w / beta)^2 / 2.
        const double k = md / (2.0 * beta);
        if (k + (beta - 1.0) / beta > 0.0) {
            const double e_pow = detail::gamma_expectation([](double) { return 1.0; }, k, (beta - 1.0) / beta);
            c.i_mu = e_pow * (2.0 * beta * (beta - 1.0) / md + beta);
        } else {
            // E[h'] and E[h'' delta] diverge separately here (m <= 2(1 - beta)); use the
            // equivalent outer-product form I_mu = (4/m) E[h'^2 delta] = (beta^2/m) E[w^{2 - 1/beta}].
            c.i_mu = beta * beta / md *
                     detail::gamma_expectation([](double) { return 1.0; }, k, 2.0 - 1.0 / beta);
        }
        c.a_const = 0.25 * beta * beta * detail::gamma_expectation([](double) { return 1.0; }, k, 2.0);
        e_hbb = detail::gamma_expectation(
            [&](double w) {
                const double l = std::log(w) / beta;
                return -0.5 * l * l;
            },
            k, 1.0);
    } else {
        // In t = delta/(beta + delta), u = 1 - t: h' = -(beta+m) u/(2 beta),
        // h'' delta = (beta+m) t u/(2 beta), h' delta = -(beta+m) t/2 and
        // d2h/dbeta2 = t/(2 beta) + t (beta - (beta+m)(1+u))/(2 beta^2).
        const double a = 0.5 * md;
        const double b = 0.5 * beta;
        const double bm = beta + md;
        const double e_h2d = detail::beta_expectation([&](double t, double u) { return bm * t * u / (2.0 * beta); }, a, b);
        const double e_h1 = detail::beta_expectation([&](double, double u) { return -bm * u / (2.0 * beta); }, a, b);
        c.i_mu = -4.0 / md * e_h2d - 2.0 * e_h1;
        c.a_const = detail::beta_expectation([&](double t, double) { return 0.25 * bm * bm * t * t; }, a, b);
        e_hbb = detail::beta_expectation(
            [&](double t, double u) { return t / (2.0 * beta) + t * (beta - bm * (1.0 + u)) / (2.0 * beta * beta); }, a, b);
    }
    c.i_1 = 2.0 * c.a_const / (md * (md + 2.0));
    c.i_2 = c.a_const / (md * (md + 2.0)) - 0.25;
    c.i_beta = -(log_normalizer(beta, m, model).d2alpha_dbeta2 + e_hbb);
    // I_2 vanishes analytically in the Gaussian case; snap quadrature noise to zero.
    if (std::abs(c.i_2) < 1e-12) c.i_2 = 0.0;
    c.j_1 = c.i_1;
    c.j_2 = c.i_1 + md * c.i_2;
    if (!(c.i_mu > 0.0) || !(c.j_1 > 0.0) || !(c.j_2 > 0.0) || !(c.i_beta > 0.0) || !std::isfinite(c.i_mu))
        throw Error("info_constants: non-positive information constant at beta = " + std::to_string(beta));
    return c;
}

inline InfoConstants info_constants(const ThetaParams& theta, ModelKind model) {
    return info_constants(theta.beta, static_cast<int>(theta.dim()), model);
}

/// Keeps the last constants and refreshes them only once beta has moved by more
/// than `rel_tol` relative to the shape they were computed at.
class InfoCache {
public:
    InfoCache(ModelKind model, int m, double rel_tol = 0.01) : model_(model), m_(m), rel_tol_(rel_tol) {}

    const InfoConstants& at(double beta) {
        if (!valid_ || std::abs(beta - c_.beta) > rel_tol_ * c_.beta) {
            c_ = info_constants(beta, m_, model_);
            valid_ = true;
            ++refreshes_;
        }
        return c_;
    }

    [[nodiscard]] int refreshes() const { return refreshes_; }

private:
    ModelKind model_;
    int m_;
    double rel_tol_;
    InfoConstants c_{};
    bool valid_ = false;
    int refreshes_ = 0;
};

/// Combines the Euclidean pieces into the natural gradient.
/// `mean_hp_diff`   = mean of h'(delta_n) (x_n - mu)
/// `mean_hp_scatter`= mean of h'(delta_n) S_n
/// `mean_hp_delta`  = mean of h'(delta_n) delta_n
/// `mean_hbeta`     = mean of dh/dbeta(delta_n)
inline TangentVector assemble_nat_grad(const ThetaParams& theta, ModelKind model, const InfoConstants& c,
                                       const EstimationScope& scope, const Vector& mean_hp_diff,
                                       const Matrix& mean_hp_scatter, double mean_hp_delta, double mean_hbeta) {
    const auto m = theta.dim();
    const double md = static_cast<double>(m);
    TangentVector u;
    // Ascent direction of l: G_mu = -2 h' Sigma^{-1} (x - mu), raised by Sigma / I_mu.
    u.u_mu = scope.mu_free() ? Vector(-2.0 / c.i_mu * mean_hp_diff) : Vector::Zero(m);
    // G_Sigma = -Sigma/2 - h' S; tr(Sigma^{-1} G_Sigma) = -m/2 - h' delta.
    const double tr = -0.5 * md - mean_hp_delta;
    const Matrix parallel = (tr / md) * theta.sigma;
    const Matrix perp = -0.5 * theta.sigma - mean_hp_scatter - parallel;
    u.u_sigma = linalg::symmetrize(perp / c.j_1 + parallel / c.j_2);
    u.u_beta = 0.0;
    if (scope.beta_free()) {
        const double da = log_normalizer(theta.beta, static_cast<int>(m), model).dalpha_dbeta;
        u.u_beta = (da + mean_hbeta) / c.i_beta;
    }
    return u;
}

/// Natural gradient of l(theta; x) for one sample (an ascent direction).
inline TangentVector stochastic_nat_grad(const ThetaParams& theta, const Eigen::Ref<const Vector>& x,
                                         ModelKind model, const InfoConstants& c, const EstimationScope& scope) {
    check_dim(x.size(), theta.dim(), "stochastic_nat_grad");
    const int m = static_cast<int>(theta.dim());
    const auto llt = linalg::spd_llt(theta.sigma);
    const Vector diff = x - theta.mu;
    const double delta = Vector(llt.matrixL().solve(diff)).squaredNorm();
    const HFirst hf = h_first(delta, theta.beta, model, m);
    const Matrix s = diff * diff.transpose();
    return assemble_nat_grad(theta, model, c, scope, hf.dh_ddelta * diff, hf.dh_ddelta * s,
                             hf.dh_ddelta * delta, hf.dh_dbeta);
}

/// Single-pass sufficient statistics of a dataset at theta.
struct BatchStats {
    Vector mean_hp_diff;
    Matrix mean_hp_scatter;
    double mean_hp_delta = 0.0;
    double mean_hbeta = 0.0;
    double mean_h = 0.0;
    double logdet = 0.0;
    Eigen::Index n = 0;
};

inline BatchStats batch_stats(const ThetaParams& theta, const Eigen::Ref<const DataMatrix>& data, ModelKind model) {
    const auto m = theta.dim();
    check_dim(data.cols(), m, "batch_stats");
    if (data.rows() < 1) throw Error("batch statistics need at least one sample");
    const auto llt = linalg::spd_llt(theta.sigma);
    const auto& lmat = llt.matrixL();
    BatchStats st;
    st.n = data.rows();
    Vector sum_d = Vector::Zero(m);
    // Weighted scatter accumulated as W^T W with rows sqrt(-h') (x - mu); h' < 0.
    DataMatrix weighted(data.rows(), m);
    double sum_hd = 0.0;
    double sum_hb = 0.0;
    double sum_h = 0.0;
    double c_hd = 0.0;
    double c_hb = 0.0;
    double c_h = 0.0;
    auto kahan = [](double& sum, double& comp, double v) {
        const double y = v - comp;
        const double t = sum + y;
        comp = (t - sum) - y;
        sum = t;
    };
    Vector diff(m);
    for (Eigen::Index i = 0; i < data.rows(); ++i) {
        diff = data.row(i).transpose() - theta.mu;
        const double delta = Vector(lmat.solve(diff)).squaredNorm();
        const HFirst hf = h_first(delta, theta.beta, model, static_cast<int>(m));
        sum_d.noalias() += hf.dh_ddelta * diff;
        weighted.row(i) = std::sqrt(-hf.dh_ddelta) * diff.transpose();
        kahan(sum_hd, c_hd, hf.dh_ddelta * delta);
        kahan(sum_hb, c_hb, hf.dh_dbeta);
        kahan(sum_h, c_h, hf.h);
    }
    const double inv_n = 1.0 / static_cast<double>(st.n);
    st.mean_hp_diff = sum_d * inv_n;
    Matrix scatter = Matrix::Zero(m, m);
    scatter.selfadjointView<Eigen::Lower>().rankUpdate(weighted.transpose(), -inv_n);
    st.mean_hp_scatter = scatter.selfadjointView<Eigen::Lower>();
    st.mean_hp_delta = sum_hd * inv_n;
    st.mean_hbeta = sum_hb * inv_n;
    st.mean_h = sum_h * inv_n;
    st.logdet = linalg::spd_logdet(llt);
    return st;
}

/// Empirical cost D_hat(theta) = -mean_n l(theta; x_n) from precomputed statistics.
inline double empirical_cost(const ThetaParams& theta, const BatchStats& st, ModelKind model) {
    return -(log_normalizer(theta.beta, static_cast<int>(theta.dim()), model).alpha - 0.5 * st.logdet + st.mean_h);
}

inline TangentVector nat_grad_from_stats(const ThetaParams& theta, const BatchStats& st, ModelKind model,
                                         const InfoConstants& c, const EstimationScope& scope) {
    return assemble_nat_grad(theta, model, c, scope, st.mean_hp_diff, st.mean_hp_scatter, st.mean_hp_delta,
                             st.mean_hbeta);
}

/// Mean over rows of stochastic_nat_grad, i.e. the descent direction of D_hat.
inline TangentVector batch_nat_grad(const ThetaParams& theta, const Eigen::Ref<const DataMatrix>& data,
                                    ModelKind model, const InfoConstants& c, const EstimationScope& scope) {
    return nat_grad_from_stats(theta, batch_stats(theta, data, model), model, c, scope);
}

}  // namespace ecd
