#pragma once

// Elliptical densities p(x) = c(beta) |Sigma|^{-1/2} g(delta_x, beta) for the
// multivariate generalized Gaussian (g = exp(-delta^beta / 2)) and the
// multivariate Student-t (g = (1 + delta/beta)^{-(beta+m)/2}).
//
// Throughout, h = log g and alpha = log c.

#include "ecd/core.hpp"
#include "ecd/linalg.hpp"

#include <boost/math/special_functions/digamma.hpp>
#include <boost/math/special_functions/gamma.hpp>
#include <boost/math/special_functions/trigamma.hpp>

#include <cmath>
#include <numbers>

namespace ecd {

struct HDerivs {
    double h = 0.0;
    double dh_ddelta = 0.0;
    double d2h_ddelta2 = 0.0;
    double dh_dbeta = 0.0;
    double d2h_dbeta2 = 0.0;
};

/// h together with the derivatives the gradients need (no d2h/ddelta2).
struct HFirst {
    double h = 0.0;
    double dh_ddelta = 0.0;
    double dh_dbeta = 0.0;
};

struct LogNormalizer {
    double alpha = 0.0;
    double dalpha_dbeta = 0.0;
    double d2alpha_dbeta2 = 0.0;
};

namespace detail {

// Powers of delta with a possibly negative exponent; delta is floored at 1e-300
// only when the power would otherwise be singular.
inline double safe_pow(double delta, double e) {
    if (delta > 0.0) return std::pow(delta, e);
    if (e > 0.0) return 0.0;
    if (e == 0.0) return 1.0;
    return std::pow(1e-300, e);
}

inline void check_beta(double beta) {
    if (!(beta > 0.0) || !std::isfinite(beta)) throw Error("beta must be positive and finite");
}

inline void check_delta(double delta) {
    if (!(delta >= 0.0)) throw Error("delta must be non-negative");
}

}  // namespace detail

/// Squared Mahalanobis distance (x - mu)^T Sigma^{-1} (x - mu).
inline double mahalanobis_delta(const Eigen::Ref<const Vector>& x, const ThetaParams& theta) {
    check_dim(x.size(), theta.dim(), "mahalanobis_delta");
    const auto llt = linalg::spd_llt(theta.sigma);
    Vector y = llt.matrixL().solve(x - theta.mu);
    return y.squaredNorm();
}

/// h, dh/ddelta and dh/dbeta. Safe at delta = 0 for every valid beta.
inline HFirst h_first(double delta, double beta, ModelKind model, int m) {
    HFirst r;
    if (model == ModelKind::MGGD) {
        const double db = detail::safe_pow(delta, beta);
        r.h = -0.5 * db;
        r.dh_ddelta = -0.5 * beta * detail::safe_pow(delta, beta - 1.0);
        r.dh_dbeta = delta > 0.0 ? -0.5 * db * std::log(delta) : 0.0;
    } else {
        const double l = std::log1p(delta / beta);
        const double t = delta / (beta + delta);
        r.h = -0.5 * (beta + m) * l;
        r.dh_ddelta = -(beta + m) / (2.0 * (beta + delta));
        r.dh_dbeta = -0.5 * l + (beta + m) * t / (2.0 * beta);
    }
    return r;
}

/// Full set of generator derivatives. For the MGGD the second delta-derivative is
/// singular at delta = 0 whenever beta < 2 (except the linear case beta = 1),
/// which is reported as an error.
inline HDerivs h_derivs(double delta, double beta, ModelKind model, int m) {
    detail::check_delta(delta);
    detail::check_beta(beta);
    if (m < 1) throw DimensionError("h_derivs: m must be >= 1");
    const HFirst f = h_first(delta, beta, model, m);
    HDerivs r{f.h, f.dh_ddelta, 0.0, f.dh_dbeta, 0.0};
    if (model == ModelKind::MGGD) {
        if (delta == 0.0 && beta < 2.0 && beta != 1.0)
            throw Error("h_derivs: second derivative of the MGGD generator is singular at delta = 0");
        r.d2h_ddelta2 = beta == 1.0 ? 0.0 : -0.5 * beta * (beta - 1.0) * detail::safe_pow(delta, beta - 2.0);
        if (delta > 0.0) {
            const double ld = std::log(delta);
            r.d2h_dbeta2 = -0.5 * std::pow(delta, beta) * ld * ld;
        }
    } else {
        const double s = beta + delta;
        const double t = delta / s;
        r.d2h_ddelta2 = (beta + m) / (2.0 * s * s);
        r.d2h_dbeta2 = t / (2.0 * beta) + t * (beta - (beta + m) * (2.0 - t)) / (2.0 * beta * beta);
    }
    return r;
}

/// alpha(beta) = log c(beta) and its first two beta-derivatives.
///   MGGD:      c = beta Gamma(m/2) / (pi^{m/2} Gamma(m/(2 beta)) 2^{m/(2 beta)})
///   Student-t: c = Gamma((beta+m)/2) / (Gamma(beta/2) (beta pi)^{m/2})
inline LogNormalizer log_normalizer(double beta, int m, ModelKind model) {
    using boost::math::digamma;
    using boost::math::lgamma;
    using boost::math::trigamma;
    detail::check_beta(beta);
    if (m < 1) throw DimensionError("log_normalizer: m must be >= 1");
    const double md = m;
    const double lnpi = std::log(std::numbers::pi);
    const double ln2 = std::numbers::ln2;
    LogNormalizer r;
    if (model == ModelKind::MGGD) {
        const double k = md / (2.0 * beta);
        r.alpha = std::log(beta) + lgamma(md / 2.0) - 0.5 * md * lnpi - lgamma(k) - k * ln2;
        const double b2 = beta * beta;
        r.dalpha_dbeta = 1.0 / beta + md / (2.0 * b2) * (digamma(k) + ln2);
        r.d2alpha_dbeta2 = -1.0 / b2 - md / (b2 * beta) * (digamma(k) + ln2) -
                           md * md / (4.0 * b2 * b2) * trigamma(k);
    } else {
        const double a = 0.5 * (beta + md);
        const double b = 0.5 * beta;
        r.alpha = lgamma(a) - lgamma(b) - 0.5 * md * (std::log(beta) + lnpi);
        r.dalpha_dbeta = 0.5 * digamma(a) - 0.5 * digamma(b) - md / (2.0 * beta);
        r.d2alpha_dbeta2 = 0.25 * trigamma(a) - 0.25 * trigamma(b) + md / (2.0 * beta * beta);
    }
    return r;
}

/// Log-density alpha(beta) - 1/2 log det Sigma + h(delta_x, beta).
inline double log_density(const Eigen::Ref<const Vector>& x, const ThetaParams& theta, ModelKind model) {
    check_dim(x.size(), theta.dim(), "log_density");
    detail::check_beta(theta.beta);
    const int m = static_cast<int>(theta.dim());
    const auto llt = linalg::spd_llt(theta.sigma);
    const double delta = Vector(llt.matrixL().solve(x - theta.mu)).squaredNorm();
    return log_normalizer(theta.beta, m, model).alpha - 0.5 * linalg::spd_logdet(llt) +
           h_first(delta, theta.beta, model, m).h;
}

}  // namespace ecd
