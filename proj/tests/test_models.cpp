#include "ecd/models.hpp"
#include "support.hpp"

#include <gtest/gtest.h>

#include <numbers>

using namespace ecd;

TEST(Mahalanobis, Examples) {
    Vector x(2);
    x << 3, 4;
    EXPECT_DOUBLE_EQ(mahalanobis_delta(x, ThetaParams::make(Vector::Zero(2), Matrix::Identity(2, 2), 1.0)), 25.0);
    Matrix s(2, 2);
    s << 4, 0, 0, 1;
    x << 2, 1;
    EXPECT_NEAR(mahalanobis_delta(x, ThetaParams::make(Vector::Zero(2), s, 1.0)), 2.0, 1e-14);
    Rng rng(1);
    const auto t = testkit::random_theta(3, ModelKind::MGGD, rng);
    EXPECT_EQ(mahalanobis_delta(t.mu, t), 0.0);
    EXPECT_THROW(mahalanobis_delta(Vector::Zero(2), t), DimensionError);
}

TEST(HDerivs, Examples) {
    for (const double d : {0.1, 1.0, 7.0}) EXPECT_DOUBLE_EQ(h_derivs(d, 1.0, ModelKind::MGGD, 3).dh_ddelta, -0.5);
    EXPECT_DOUBLE_EQ(h_derivs(2.0, 2.0, ModelKind::StudentT, 2).dh_ddelta, -0.5);
    EXPECT_NEAR(h_derivs(4.0, 0.5, ModelKind::MGGD, 1).dh_ddelta, -0.125, 1e-15);
}

TEST(HDerivs, Errors) {
    EXPECT_THROW(h_derivs(-1.0, 1.0, ModelKind::MGGD, 2), Error);
    EXPECT_THROW(h_derivs(0.0, 0.5, ModelKind::MGGD, 2), Error);
    EXPECT_THROW(h_derivs(1.0, 0.0, ModelKind::StudentT, 2), Error);
    EXPECT_NO_THROW(h_derivs(0.0, 1.0, ModelKind::MGGD, 2));
    EXPECT_NO_THROW(h_derivs(0.0, 3.0, ModelKind::MGGD, 2));
}

TEST(HDerivs, DecreasingInDelta) {
    Rng rng(2);
    for (int k = 0; k < 200; ++k) {
        const double d = std::exp(rng.uniform(-5, 5));
        EXPECT_LT(h_derivs(d, rng.uniform(0.1, 6), ModelKind::MGGD, 3).dh_ddelta, 0.0);
        EXPECT_LT(h_derivs(d, rng.uniform(0.1, 20), ModelKind::StudentT, 3).dh_ddelta, 0.0);
    }
}

// Analytic derivatives against central differences on log-scaled arguments.
TEST(HDerivs, FiniteDifferenceConsistency) {
    Rng rng(5);
    for (int k = 0; k < 400; ++k) {
        const ModelKind model = k % 2 ? ModelKind::MGGD : ModelKind::StudentT;
        const int m = 1 + static_cast<int>(rng.bits() % 6);
        const double d = std::exp(rng.uniform(-3, 3));
        const double b = model == ModelKind::MGGD ? std::exp(rng.uniform(-1.5, 1.6)) : std::exp(rng.uniform(-1, 3));
        const HDerivs h = h_derivs(d, b, model, m);
        const double e = 1e-5;
        auto hd = [&](double s) { return h_derivs(d * std::exp(s), b, model, m); };
        auto hb = [&](double s) { return h_derivs(d, b * std::exp(s), model, m); };
        // d/ds h(d e^s) = d h'(d)
        const double fd1 = (hd(e).h - hd(-e).h) / (2 * e) / d;
        const double fd2 = (hd(e).dh_ddelta - hd(-e).dh_ddelta) / (2 * e) / d;
        const double fdb = (hb(e).h - hb(-e).h) / (2 * e) / b;
        const double fdbb = (hb(e).dh_dbeta - hb(-e).dh_dbeta) / (2 * e) / b;
        auto rel = [](double a, double f) { return std::abs(a - f) / std::max({std::abs(a), std::abs(f), 1e-8}); };
        EXPECT_LT(rel(h.dh_ddelta, fd1), 1e-6) << "model " << to_string(model) << " d " << d << " b " << b;
        EXPECT_LT(rel(h.d2h_ddelta2, fd2), 1e-6) << "model " << to_string(model) << " d " << d << " b " << b;
        EXPECT_LT(rel(h.dh_dbeta, fdb), 1e-6) << "model " << to_string(model) << " d " << d << " b " << b;
        EXPECT_LT(rel(h.d2h_dbeta2, fdbb), 1e-6) << "model " << to_string(model) << " d " << d << " b " << b;
        const HFirst f = h_first(d, b, model, m);
        EXPECT_DOUBLE_EQ(f.h, h.h);
        EXPECT_DOUBLE_EQ(f.dh_ddelta, h.dh_ddelta);
        EXPECT_DOUBLE_EQ(f.dh_dbeta, h.dh_dbeta);
    }
}

TEST(LogNormalizer, Examples) {
    const double pi = std::numbers::pi;
    EXPECT_NEAR(log_normalizer(1.0, 1, ModelKind::MGGD).alpha, -0.5 * std::log(2 * pi), 1e-14);
    EXPECT_NEAR(log_normalizer(1.0, 1, ModelKind::StudentT).alpha, std::log(1 / pi), 1e-14);
    EXPECT_NEAR(log_normalizer(1.0, 3, ModelKind::MGGD).alpha, -1.5 * std::log(2 * pi), 1e-14);
    EXPECT_THROW(log_normalizer(0.0, 2, ModelKind::MGGD), Error);
    EXPECT_THROW(log_normalizer(1.0, 0, ModelKind::MGGD), Error);
}

TEST(LogNormalizer, DerivativesMatchDifferences) {
    for (const auto model : {ModelKind::MGGD, ModelKind::StudentT})
        for (const int m : {1, 3, 10})
            for (const double b : {0.4, 1.0, 2.5, 8.0}) {
                const double e = 1e-5 * b;
                const auto a = log_normalizer(b, m, model);
                const double fd = (log_normalizer(b + e, m, model).alpha - log_normalizer(b - e, m, model).alpha) / (2 * e);
                const double fd2 = (log_normalizer(b + e, m, model).dalpha_dbeta -
                                    log_normalizer(b - e, m, model).dalpha_dbeta) /
                                   (2 * e);
                EXPECT_NEAR(a.dalpha_dbeta, fd, 1e-7 * std::max(1.0, std::abs(fd)));
                EXPECT_NEAR(a.d2alpha_dbeta2, fd2, 1e-6 * std::max(1.0, std::abs(fd2)));
            }
}

TEST(LogDensity, Examples) {
    const Vector zero = Vector::Zero(1);
    const auto t = ThetaParams::make(Vector::Zero(1), Matrix::Identity(1, 1), 1.0);
    EXPECT_NEAR(log_density(zero, t, ModelKind::MGGD), -0.918938533204673, 1e-12);
    EXPECT_NEAR(log_density(zero, t, ModelKind::StudentT), std::log(1 / std::numbers::pi), 1e-14);
}

TEST(LogDensity, GaussianReduction) {
    Rng rng(9);
    for (const int m : {1, 2, 3})
        for (int k = 0; k < 20; ++k) {
            const ThetaParams t = ThetaParams::make(rng.normal_vector(m), testkit::random_spd(m, rng), 1.0);
            const Vector x = testkit::random_point(t, rng, 0.0, 3.0);
            const Vector d = x - t.mu;
            const double ref = -0.5 * m * std::log(2 * std::numbers::pi) - 0.5 * std::log(t.sigma.determinant()) -
                               0.5 * d.dot(t.sigma.inverse() * d);
            EXPECT_NEAR(log_density(x, t, ModelKind::MGGD), ref, 1e-12);
        }
}

TEST(LogDensity, Normalization) {
    const auto r = testkit::normalization_grid();
    EXPECT_EQ(r.cases, 14);
    EXPECT_LT(r.max_abs_error, 1e-4);
}
