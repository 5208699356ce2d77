#pragma once

// Geometry of R^m x P_m x R_+ under the block-diagonal information metric
//   <u,v> = I_mu u_mu' Sigma^{-1} v_mu
//         + I_1 tr(Sigma^{-1} U Sigma^{-1} V) + I_2 tr(Sigma^{-1} U) tr(Sigma^{-1} V)
//         + I_beta u_beta v_beta.

#include "ecd/core.hpp"
#include "ecd/linalg.hpp"

#include <Eigen/Eigenvalues>

#include <cmath>
#include <utility>

namespace ecd {

struct MetricWeights {
    double i_mu = 1.0;
    double i_1 = 0.5;
    double i_2 = 0.0;
    double i_beta = 1.0;

    /// Positive-definiteness of the metric in dimension m: I_mu, I_1, I_beta > 0 and
    /// I_1 + m I_2 > 0. I_2 itself may be negative (MGGD with beta < 1).
    void validate(Eigen::Index m) const {
        if (!(i_mu > 0.0) || !(i_1 > 0.0) || !(i_beta > 0.0) || !(i_1 + static_cast<double>(m) * i_2 > 0.0))
            throw Error("metric weights require i_mu, i_1, i_beta > 0 and i_1 + m i_2 > 0");
    }

    /// I_1 = 1, everything else unit or zero: the plain affine-invariant metric.
    static MetricWeights unit() { return {1.0, 1.0, 0.0, 1.0}; }
};

/// Exp_Sigma(U) = Sigma exp(Sigma^{-1} U), evaluated as the congruence
/// Sigma^{1/2} exp(Sigma^{-1/2} U Sigma^{-1/2}) Sigma^{1/2} so the result stays symmetric.
inline Matrix spd_exp(const Matrix& sigma, const Matrix& u) {
    check_dim(u.rows(), sigma.rows(), "spd_exp");
    check_dim(u.cols(), sigma.cols(), "spd_exp");
    const auto e = linalg::spd_eig(sigma);
    const Matrix root = linalg::apply(e, [](double x) { return std::sqrt(x); });
    const Matrix inv_root = linalg::apply(e, [](double x) { return 1.0 / std::sqrt(x); });
    const Matrix inner = linalg::symmetrize(inv_root * u * inv_root);
    Matrix out = linalg::symmetrize(root * linalg::sym_exp(inner) * root);
    if (!out.allFinite()) throw NotSpdError("spd_exp: overflow in the matrix exponential");
    return out;
}

/// Eigenvalues of Sigma1^{-1/2} Sigma2 Sigma1^{-1/2}.
inline Vector relative_eigenvalues(const Matrix& sigma1, const Matrix& sigma2) {
    check_dim(sigma2.rows(), sigma1.rows(), "relative_eigenvalues");
    const Matrix inv_root = linalg::spd_inv_sqrt(sigma1);
    linalg::spd_eig(sigma2);  // rejects a non-SPD second argument
    const Matrix w = inv_root * sigma2 * inv_root;
    return linalg::spd_eig(w).values;
}

/// I_1 sum_i log^2 l_i + I_2 (sum_i log l_i)^2 over the relative eigenvalues l_i.
inline double spd_distance_sq(const Matrix& sigma1, const Matrix& sigma2, const MetricWeights& w) {
    w.validate(sigma1.rows());
    const Vector logs = relative_eigenvalues(sigma1, sigma2).array().log().matrix();
    const double s = logs.sum();
    return w.i_1 * logs.squaredNorm() + w.i_2 * s * s;
}

/// Exponential map of each factor: vector addition, spd_exp and beta exp(u/beta).
inline ThetaParams product_retract(const ThetaParams& theta, const TangentVector& u) {
    check_dim(u.u_mu.size(), theta.dim(), "product_retract");
    ThetaParams out = theta;
    out.mu += u.u_mu;
    if (!u.u_sigma.isZero(0.0)) out.sigma = spd_exp(theta.sigma, u.u_sigma);
    if (u.u_beta != 0.0) out.beta = theta.beta * std::exp(u.u_beta / theta.beta);
    return out;
}

/// Sum of the three factor distances. The location term is the plain Euclidean
/// norm scaled by I_mu (no Sigma^{-1} weighting).
inline double product_distance_sq(const ThetaParams& a, const ThetaParams& b, const MetricWeights& w) {
    check_dim(b.dim(), a.dim(), "product_distance_sq");
    w.validate(a.dim());
    double d2 = w.i_mu * (a.mu - b.mu).squaredNorm();
    d2 += spd_distance_sq(a.sigma, b.sigma, w);
    const double lb = std::log(b.beta / a.beta);
    d2 += w.i_beta * lb * lb;
    return d2;
}

struct ParallelPerp {
    Matrix parallel;
    Matrix perp;
};

/// G = G_par + G_perp with G_par = tr(Sigma^{-1} G)/m * Sigma.
inline ParallelPerp split_parallel_perp(const Matrix& g, const Matrix& sigma) {
    check_dim(g.rows(), sigma.rows(), "split_parallel_perp");
    check_dim(g.cols(), sigma.cols(), "split_parallel_perp");
    const auto llt = linalg::spd_llt(sigma);
    const double t = llt.solve(g).trace();
    ParallelPerp r;
    r.parallel = (t / static_cast<double>(sigma.rows())) * sigma;
    r.perp = g - r.parallel;
    return r;
}

/// Largest |eigenvalue| of Sigma^{-1} U.
inline double relative_spectral_norm(const Matrix& sigma, const Matrix& u) {
    const Matrix l = linalg::spd_llt(sigma).matrixL();
    const Matrix a = l.triangularView<Eigen::Lower>().solve(u);
    const Matrix w = l.triangularView<Eigen::Lower>().solve(a.transpose());
    return linalg::sym_eig(linalg::symmetrize(w)).values.cwiseAbs().maxCoeff();
}

/// Squared norm of u under the metric at theta.
inline double metric_norm_sq(const ThetaParams& theta, const TangentVector& u, const MetricWeights& w) {
    const auto llt = linalg::spd_llt(theta.sigma);
    double n = w.i_mu * u.u_mu.dot(llt.solve(u.u_mu));
    const Matrix a = llt.solve(u.u_sigma);  // Sigma^{-1} U
    const double tr = a.trace();
    n += w.i_1 * (a * a).trace() + w.i_2 * tr * tr;
    n += w.i_beta * u.u_beta * u.u_beta;
    return n;
}

}  // namespace ecd
