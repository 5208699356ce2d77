#pragma once

// Shared helpers for the test suites and the acceptance runner.

#include "ecd/fisher.hpp"
#include "ecd/manifold.hpp"
#include "ecd/models.hpp"
#include "ecd/sampling.hpp"

#include <Eigen/QR>
#include <boost/math/quadrature/exp_sinh.hpp>

#include <algorithm>
#include <cmath>
#include <vector>

namespace ecd::testkit {

inline Matrix random_spd(Eigen::Index m, Rng& rng, double spread = 1.0) {
    Matrix q = Matrix::Zero(m, m);
    for (Eigen::Index i = 0; i < m; ++i)
        for (Eigen::Index j = 0; j < m; ++j) q(i, j) = rng.normal();
    Eigen::HouseholderQR<Matrix> qr(q);
    const Matrix o = qr.householderQ();
    Vector d(m);
    for (Eigen::Index i = 0; i < m; ++i) d[i] = std::exp(spread * rng.uniform(-1.0, 1.0));
    return linalg::symmetrize(o * d.asDiagonal() * o.transpose());
}

inline Matrix random_sym(Eigen::Index m, Rng& rng) {
    Matrix a(m, m);
    for (Eigen::Index i = 0; i < m; ++i)
        for (Eigen::Index j = 0; j < m; ++j) a(i, j) = rng.normal();
    return linalg::symmetrize(a);
}

inline ThetaParams random_theta(Eigen::Index m, ModelKind model, Rng& rng) {
    const double beta = model == ModelKind::MGGD ? rng.uniform(0.3, 5.0) : rng.uniform(1.0, 10.0);
    return ThetaParams::make(rng.normal_vector(m), random_spd(m, rng), beta);
}

/// A point whose whitened radius lies in [r_lo, r_hi].
inline Vector random_point(const ThetaParams& t, Rng& rng, double r_lo = 0.5, double r_hi = 4.0) {
    Vector z = rng.normal_vector(t.dim());
    z *= rng.uniform(r_lo, r_hi) / z.norm();
    return t.mu + linalg::spd_sqrt(t.sigma) * z;
}

/// Five-point central difference.
template <class F>
double derivative(F&& f, double h) {
    return (-f(2 * h) + 8 * f(h) - 8 * f(-h) + f(-2 * h)) / (12 * h);
}

struct GradientCheck {
    double max_rel_error = 0.0;
    int triples = 0;
    int scope_leaks = 0;  // nonzero out-of-scope components
};

/// Lowers the natural gradient with the metric and compares every in-scope component
/// with finite differences of l(theta; x). Errors are norm-wise per block.
inline GradientCheck gradient_oracle(int triples, std::uint64_t seed) {
    Rng rng(seed);
    GradientCheck out;
    const ScopeKind scopes[] = {ScopeKind::SigmaOnly, ScopeKind::MuSigma, ScopeKind::MuSigmaBeta};
    for (int k = 0; k < triples; ++k) {
        const ModelKind model = k % 2 == 0 ? ModelKind::MGGD : ModelKind::StudentT;
        const EstimationScope scope(scopes[(k / 2) % 3]);
        const auto m = static_cast<Eigen::Index>(1 + rng.bits() % 5);
        const ThetaParams th = random_theta(m, model, rng);
        const Vector x = random_point(th, rng);
        const InfoConstants c = info_constants(th.beta, static_cast<int>(m), model);
        const TangentVector u = stochastic_nat_grad(th, x, model, c, scope);
        const auto llt = linalg::spd_llt(th.sigma);
        auto rel = [](const Vector& a, const Vector& f) { return (a - f).norm() / std::max(f.norm(), 1e-12); };

        if (scope.mu_free()) {
            const Vector lowered = c.i_mu * llt.solve(u.u_mu);
            Vector fd(m);
            for (Eigen::Index i = 0; i < m; ++i)
                fd[i] = derivative(
                    [&](double t) {
                        ThetaParams p = th;
                        p.mu[i] += t;
                        return log_density(x, p, model);
                    },
                    1e-4);
            out.max_rel_error = std::max(out.max_rel_error, rel(lowered, fd));
        } else if (!u.u_mu.isZero(0.0)) {
            ++out.scope_leaks;
        }

        const Matrix a = llt.solve(u.u_sigma);
        Vector lowered(m * (m + 1) / 2);
        Vector fd(lowered.size());
        Eigen::Index n = 0;
        for (Eigen::Index i = 0; i < m; ++i)
            for (Eigen::Index j = i; j < m; ++j, ++n) {
                Matrix e = Matrix::Zero(m, m);
                e(i, j) = 1.0;
                e(j, i) = 1.0;
                const Matrix b = llt.solve(e);
                lowered[n] = c.i_1 * (a * b).trace() + c.i_2 * a.trace() * b.trace();
                fd[n] = derivative(
                    [&](double t) {
                        ThetaParams p = th;
                        p.sigma += t * e;
                        return log_density(x, p, model);
                    },
                    1e-4);
            }
        out.max_rel_error = std::max(out.max_rel_error, rel(lowered, fd));

        if (scope.beta_free()) {
            Vector l1(1);
            Vector f1(1);
            l1[0] = c.i_beta * u.u_beta;
            f1[0] = derivative(
                [&](double t) {
                    ThetaParams p = th;
                    p.beta += t;
                    return log_density(x, p, model);
                },
                1e-4 * th.beta);
            out.max_rel_error = std::max(out.max_rel_error, rel(l1, f1));
        } else if (u.u_beta != 0.0) {
            ++out.scope_leaks;
        }
        ++out.triples;
    }
    return out;
}

/// Integral of p(x) over the half-lines (-inf, c] and [c, inf).
template <class F>
double integrate_line(F&& f, double c) {
    boost::math::quadrature::exp_sinh<double> q;
    const double right = q.integrate([&](double t) { return f(c + t); }, 1e-10);
    const double left = q.integrate([&](double t) { return f(c - t); }, 1e-10);
    return left + right;
}

/// Integral of exp(log_density) over R^m for m in {1, 2}, split at the density's
/// center so the quadrature never straddles a cusp.
inline double density_integral(const ThetaParams& t, ModelKind model) {
    if (t.dim() == 1) {
        Vector x(1);
        return integrate_line(
            [&](double v) {
                x[0] = v;
                return std::exp(log_density(x, t, model));
            },
            t.mu[0]);
    }
    if (t.dim() != 2) throw Error("density_integral: m must be 1 or 2");
    return integrate_line(
        [&](double x1) {
            const double center = t.mu[1] + t.sigma(1, 0) / t.sigma(0, 0) * (x1 - t.mu[0]);
            Vector x(2);
            x[0] = x1;
            return integrate_line(
                [&](double x2) {
                    x[1] = x2;
                    return std::exp(log_density(x, t, model));
                },
                center);
        },
        t.mu[0]);
}

struct NormalizationCheck {
    double max_abs_error = 0.0;
    int cases = 0;
};

/// The (m, beta) grid: m in {1, 2}; MGGD beta in {0.5, 1, 2, 4}; Student-t in {1, 3, 10}.
inline NormalizationCheck normalization_grid() {
    NormalizationCheck out;
    for (const int m : {1, 2}) {
        Vector mu(m);
        Matrix sigma(m, m);
        if (m == 1) {
            mu << 0.3;
            sigma << 1.7;
        } else {
            mu << 0.3, -0.2;
            sigma << 2.0, 0.6, 0.6, 0.8;
        }
        for (const double b : {0.5, 1.0, 2.0, 4.0}) {
            const double v = density_integral(ThetaParams::make(mu, sigma, b), ModelKind::MGGD);
            out.max_abs_error = std::max(out.max_abs_error, std::abs(v - 1.0));
            ++out.cases;
        }
        for (const double b : {1.0, 3.0, 10.0}) {
            const double v = density_integral(ThetaParams::make(mu, sigma, b), ModelKind::StudentT);
            out.max_abs_error = std::max(out.max_abs_error, std::abs(v - 1.0));
            ++out.cases;
        }
    }
    return out;
}

/// One-sample KS statistic of `xs` against a continuous CDF.
template <class Cdf>
double ks_statistic(std::vector<double> xs, Cdf&& cdf) {
    std::sort(xs.begin(), xs.end());
    const double n = static_cast<double>(xs.size());
    double d = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        const double f = cdf(xs[i]);
        d = std::max({d, f - static_cast<double>(i) / n, static_cast<double>(i + 1) / n - f});
    }
    return d;
}

/// Two-sample KS statistic.
inline double ks_two_sample(std::vector<double> a, std::vector<double> b) {
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    std::size_t i = 0;
    std::size_t j = 0;
    double d = 0.0;
    while (i < a.size() && j < b.size()) {
        const double v = std::min(a[i], b[j]);
        while (i < a.size() && a[i] <= v) ++i;
        while (j < b.size() && b[j] <= v) ++j;
        d = std::max(d, std::abs(static_cast<double>(i) / static_cast<double>(a.size()) -
                                 static_cast<double>(j) / static_cast<double>(b.size())));
    }
    return d;
}

}  // namespace ecd::testkit
