#pragma once

// Core value types shared by every module: model family, parameter points on
// the product manifold R^m x P_m x R_+, tangent vectors and estimation scopes.

#include <Eigen/Cholesky>
#include <Eigen/Dense>

#include <cmath>
#include <cstddef>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

namespace ecd {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
/// Sample matrices are stored one observation per row.
using DataMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Raised on violated preconditions and numerical failures.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class DimensionError : public Error {
public:
    using Error::Error;
};

class NotSpdError : public Error {
public:
    using Error::Error;
};

enum class ModelKind { MGGD, StudentT };

inline std::string_view to_string(ModelKind k) {
    return k == ModelKind::MGGD ? "mggd" : "t";
}

inline ModelKind parse_model(std::string_view s) {
    if (s == "mggd") return ModelKind::MGGD;
    if (s == "t" || s == "student" || s == "studentt") return ModelKind::StudentT;
    throw Error("unknown model '" + std::string(s) + "' (expected mggd|t)");
}

/// Which parameter blocks an estimator is allowed to move.
enum class ScopeKind { SigmaOnly, MuSigma, MuSigmaBeta };

inline std::string_view to_string(ScopeKind s) {
    switch (s) {
    case ScopeKind::SigmaOnly: return "sigma";
    case ScopeKind::MuSigma: return "mu-sigma";
    case ScopeKind::MuSigmaBeta: return "full";
    }
    return "?";
}

inline ScopeKind parse_scope(std::string_view s) {
    if (s == "sigma") return ScopeKind::SigmaOnly;
    if (s == "mu-sigma") return ScopeKind::MuSigma;
    if (s == "full") return ScopeKind::MuSigmaBeta;
    throw Error("unknown scope '" + std::string(s) + "' (expected sigma|mu-sigma|full)");
}

/// A point (mu, Sigma, beta) of the parameter manifold.
struct ThetaParams {
    Vector mu;
    Matrix sigma;
    double beta = 1.0;

    ThetaParams() = default;
    ThetaParams(Vector mu_, Matrix sigma_, double beta_)
        : mu(std::move(mu_)), sigma(std::move(sigma_)), beta(beta_) {}

    /// Validating factory; throws on any broken invariant.
    static ThetaParams make(Vector mu, Matrix sigma, double beta) {
        ThetaParams t(std::move(mu), std::move(sigma), beta);
        t.validate();
        return t;
    }

    [[nodiscard]] Eigen::Index dim() const { return mu.size(); }

    void validate() const {
        const auto m = mu.size();
        if (m < 1) throw DimensionError("theta: empty location vector");
        if (sigma.rows() != m || sigma.cols() != m)
            throw DimensionError("theta: scatter is " + std::to_string(sigma.rows()) + "x" +
                                 std::to_string(sigma.cols()) + ", expected " +
                                 std::to_string(m) + "x" + std::to_string(m));
        if (!(beta > 0.0) || !std::isfinite(beta))
            throw Error("theta: beta must be a positive finite number");
        if (!mu.allFinite() || !sigma.allFinite()) throw Error("theta: non-finite entries");
        const double scale = sigma.cwiseAbs().maxCoeff();
        if ((sigma - sigma.transpose()).cwiseAbs().maxCoeff() > 1e-12 * std::max(scale, 1e-300))
            throw NotSpdError("theta: scatter is not symmetric");
        Eigen::LLT<Matrix> llt(sigma);
        if (llt.info() != Eigen::Success) throw NotSpdError("theta: scatter is not positive definite");
    }
};

/// Tangent vector (u_mu, U_sigma, u_beta) at some point of the manifold.
struct TangentVector {
    Vector u_mu;
    Matrix u_sigma;
    double u_beta = 0.0;

    static TangentVector zero(Eigen::Index m) {
        return {Vector::Zero(m), Matrix::Zero(m, m), 0.0};
    }

    TangentVector& operator+=(const TangentVector& o) {
        u_mu += o.u_mu;
        u_sigma += o.u_sigma;
        u_beta += o.u_beta;
        return *this;
    }
    TangentVector& operator*=(double s) {
        u_mu *= s;
        u_sigma *= s;
        u_beta *= s;
        return *this;
    }
    friend TangentVector operator*(double s, TangentVector v) { return v *= s; }
};

/// Free parameters plus the values held fixed for the others.
/// Unset fixed values default to those of the initial point.
struct EstimationScope {
    ScopeKind kind = ScopeKind::MuSigma;
    std::optional<Vector> fixed_mu;
    std::optional<double> fixed_beta;

    EstimationScope() = default;
    EstimationScope(ScopeKind k) : kind(k) {}  // NOLINT(google-explicit-constructor)

    [[nodiscard]] bool mu_free() const { return kind != ScopeKind::SigmaOnly; }
    [[nodiscard]] bool beta_free() const { return kind == ScopeKind::MuSigmaBeta; }

    /// Applies the fixed values to a starting point.
    [[nodiscard]] ThetaParams pin(ThetaParams theta) const {
        if (fixed_mu && !mu_free()) {
            if (fixed_mu->size() != theta.dim()) throw DimensionError("scope: fixed mu has wrong size");
            theta.mu = *fixed_mu;
        }
        if (fixed_beta && !beta_free()) theta.beta = *fixed_beta;
        return theta;
    }

    /// Zeroes the components that are out of scope.
    void mask(TangentVector& u) const {
        if (!mu_free()) u.u_mu.setZero();
        if (!beta_free()) u.u_beta = 0.0;
    }
};

inline void check_dim(Eigen::Index got, Eigen::Index want, const char* what) {
    if (got != want)
        throw DimensionError(std::string(what) + ": dimension " + std::to_string(got) +
                             ", expected " + std::to_string(want));
}

}  // namespace ecd
