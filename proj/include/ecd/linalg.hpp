#pragma once

// Matrix functions of symmetric matrices through eigendecomposition of the
// symmetrized input. SPD-only functions reject spectra whose smallest eigenvalue
// falls below 1e-14 times the largest instead of clipping.

#include "ecd/core.hpp"

#include <Eigen/Eigenvalues>

#include <cmath>
#include <functional>

namespace ecd::linalg {

inline Matrix symmetrize(const Matrix& a) { return 0.5 * (a + a.transpose()); }

struct SymEig {
    Vector values;
    Matrix vectors;
};

inline SymEig sym_eig(const Matrix& a) {
    Eigen::SelfAdjointEigenSolver<Matrix> es(symmetrize(a));
    if (es.info() != Eigen::Success) throw Error("symmetric eigendecomposition failed");
    return {es.eigenvalues(), es.eigenvectors()};
}

/// Eigendecomposition of an SPD matrix; throws NotSpdError on a degenerate spectrum.
inline SymEig spd_eig(const Matrix& a) {
    if (a.rows() != a.cols()) throw DimensionError("spd_eig: matrix is not square");
    if (!a.allFinite()) throw NotSpdError("spd_eig: non-finite entries");
    auto e = sym_eig(a);
    const double hi = e.values.maxCoeff();
    const double lo = e.values.minCoeff();
    if (!(hi > 0.0) || !(lo > 1e-14 * hi))
        throw NotSpdError("matrix is not positive definite (eigenvalue range [" + std::to_string(lo) +
                          ", " + std::to_string(hi) + "])");
    return e;
}

/// V f(D) V^T.
template <class F>
Matrix apply(const SymEig& e, F&& f) {
    Vector d = e.values.unaryExpr(std::forward<F>(f));
    Matrix r = e.vectors * d.asDiagonal() * e.vectors.transpose();
    return symmetrize(r);
}

inline Matrix spd_sqrt(const Matrix& a) {
    return apply(spd_eig(a), [](double x) { return std::sqrt(x); });
}

inline Matrix spd_inv_sqrt(const Matrix& a) {
    return apply(spd_eig(a), [](double x) { return 1.0 / std::sqrt(x); });
}

inline Matrix spd_log(const Matrix& a) {
    return apply(spd_eig(a), [](double x) { return std::log(x); });
}

inline Matrix sym_exp(const Matrix& a) {
    return apply(sym_eig(a), [](double x) { return std::exp(x); });
}

/// Cholesky factor of an SPD matrix, hard error on failure.
inline Eigen::LLT<Matrix> spd_llt(const Matrix& a) {
    Eigen::LLT<Matrix> llt(a);
    if (llt.info() != Eigen::Success || !a.allFinite())
        throw NotSpdError("Cholesky factorization failed: matrix is not positive definite");
    return llt;
}

inline double spd_logdet(const Eigen::LLT<Matrix>& llt) {
    return 2.0 * llt.matrixLLT().diagonal().array().log().sum();
}

}  // namespace ecd::linalg
