#pragma once

// Method of moments for the MGGD: kurtosis-type ratio of the Mahalanobis moments.

#include "ecd/core.hpp"
#include "ecd/linalg.hpp"

#include <boost/math/special_functions/gamma.hpp>
#include <boost/math/tools/roots.hpp>

#include <cmath>
#include <cstdint>

namespace ecd {

struct SampleMoments {
    Vector mean;
    Matrix cov;  // divided by N
};

inline SampleMoments sample_moments(const Eigen::Ref<const DataMatrix>& data) {
    if (data.rows() < 1) throw Error("sample moments need at least one row");
    SampleMoments r;
    r.mean = data.colwise().mean().transpose();
    const DataMatrix centered = data.rowwise() - r.mean.transpose();
    r.cov = Matrix::Zero(data.cols(), data.cols());
    r.cov.selfadjointView<Eigen::Lower>().rankUpdate(centered.transpose(), 1.0 / static_cast<double>(data.rows()));
    r.cov = r.cov.selfadjointView<Eigen::Lower>();
    return r;
}

/// E[delta^2] / E[delta]^2 for an MGGD of shape beta in dimension m.
inline double mggd_moment_ratio(double beta, int m) {
    using boost::math::lgamma;
    const double md = m;
    return std::exp(lgamma(md / (2.0 * beta)) + lgamma((md + 4.0) / (2.0 * beta)) -
                    2.0 * lgamma((md + 2.0) / (2.0 * beta)));
}

/// Factor k with Sigma = k C when C is the covariance of an MGGD of shape beta.
inline double mggd_cov_to_scatter(double beta, int m) {
    using boost::math::lgamma;
    const double md = m;
    return std::exp(std::log(md) + lgamma(md / (2.0 * beta)) - std::log(2.0) / beta - lgamma((md + 2.0) / (2.0 * beta)));
}

inline ThetaParams mm_fit(const Eigen::Ref<const DataMatrix>& data, ModelKind model) {
    if (model != ModelKind::MGGD) throw Error("mm_fit: the method of moments is implemented for the MGGD only");
    const auto m = data.cols();
    if (data.rows() <= m) throw Error("mm_fit: need more samples than dimensions");
    const SampleMoments mom = sample_moments(data);
    Eigen::LLT<Matrix> llt(mom.cov);
    if (llt.info() != Eigen::Success || linalg::sym_eig(mom.cov).values.minCoeff() <= 1e-14 * mom.cov.trace())
        throw NotSpdError("mm_fit: sample covariance is singular");
    double s1 = 0.0;
    double s2 = 0.0;
    for (Eigen::Index i = 0; i < data.rows(); ++i) {
        const double d = Vector(llt.matrixL().solve(data.row(i).transpose() - mom.mean)).squaredNorm();
        s1 += d;
        s2 += d * d;
    }
    const double n = static_cast<double>(data.rows());
    const double target = (s2 / n) / ((s1 / n) * (s1 / n));
    const int mi = static_cast<int>(m);
    // The ratio decreases in beta.
    auto f = [&](double b) { return mggd_moment_ratio(b, mi) - target; };
    constexpr double lo = 0.1;
    constexpr double hi = 10.0;
    if (f(lo) < 0.0 || f(hi) > 0.0) throw Error("mm_fit: moment ratio outside the range attainable on [0.1, 10]");
    std::uintmax_t iters = 200;
    const auto r = boost::math::tools::bisect(f, lo, hi, boost::math::tools::eps_tolerance<double>(50), iters);
    const double beta = 0.5 * (r.first + r.second);
    return ThetaParams::make(mom.mean, mggd_cov_to_scatter(beta, mi) * mom.cov, beta);
}

/// Moment-based estimate within a scope: the full MM fit when the MGGD shape is free,
/// otherwise the sample mean (or the fixed mu) and the covariance rescaled for the
/// known shape `fixed.beta`.
inline ThetaParams moment_init(const Eigen::Ref<const DataMatrix>& data, ModelKind model, const EstimationScope& scope,
                               const ThetaParams& fixed) {
    const int m = static_cast<int>(data.cols());
    check_dim(fixed.dim(), data.cols(), "moment_init");
    if (model == ModelKind::MGGD && scope.beta_free()) return mm_fit(data, model);
    SampleMoments mom = sample_moments(data);
    if (!scope.mu_free()) {
        const Vector off = mom.mean - fixed.mu;
        mom.cov += off * off.transpose();
        mom.mean = fixed.mu;
    }
    if (model == ModelKind::StudentT && scope.beta_free())
        throw Error("moment_init: no moment estimate of the Student-t shape");
    const double b = fixed.beta;
    Matrix sigma = mom.cov;
    if (model == ModelKind::MGGD)
        sigma *= mggd_cov_to_scatter(b, m);
    else if (b > 2.0)
        sigma *= (b - 2.0) / b;
    if (linalg::sym_eig(sigma).values.minCoeff() <= 1e-14 * sigma.trace())
        throw NotSpdError("moment_init: sample covariance is singular");
    return ThetaParams::make(mom.mean, std::move(sigma), b);
}

}  // namespace ecd
