#include "ecd/sampling.hpp"
#include "support.hpp"

#include <boost/math/special_functions/gamma.hpp>

#include <gtest/gtest.h>

using namespace ecd;

namespace {
double ks_crit_two_sample_1pct(double n, double m) { return 1.6276 * std::sqrt((n + m) / (n * m)); }
}  // namespace

TEST(Sample, Deterministic) {
    const auto t = make_true_params(4, 0.5, 0.7, 3);
    const DataMatrix a = sample({100, 42, ModelKind::MGGD, t});
    const DataMatrix b = sample({100, 42, ModelKind::MGGD, t});
    EXPECT_EQ(a, b);
    const DataMatrix c = sample({100, 43, ModelKind::MGGD, t});
    EXPECT_NE(a, c);
}

TEST(Sample, StreamingMatchesBatch) {
    const auto t = make_true_params(3, 0.4, 4.0, 1);
    const DataMatrix a = sample({500, 7, ModelKind::StudentT, t});
    Sampler s(ModelKind::StudentT, t, 7);
    for (Eigen::Index i = 0; i < a.rows(); ++i) EXPECT_EQ(Vector(a.row(i).transpose()), s.next());
}

TEST(Sample, Errors) {
    auto bad = make_true_params(2, 0.5, 1.0, 1);
    bad.beta = -1.0;
    EXPECT_THROW(sample({10, 1, ModelKind::MGGD, bad}), Error);
    EXPECT_THROW(sample({0, 1, ModelKind::MGGD, make_true_params(2, 0.5, 1.0, 1)}), Error);
}

TEST(Sample, GaussianCovariance) {
    const auto t = make_true_params(5, 0.6, 1.0, 2);
    const DataMatrix x = sample({1'000'000, 9, ModelKind::MGGD, t});
    const DataMatrix z = x.rowwise() - t.mu.transpose();
    const double n = static_cast<double>(x.rows());
    for (int i = 0; i < 5; ++i)
        for (int j = 0; j <= i; ++j) {
            const Eigen::ArrayXd p = z.col(i).array() * z.col(j).array();
            const double mean = p.mean();
            const double se = std::sqrt((p - mean).square().mean() / n);
            EXPECT_LT(std::abs(mean - t.sigma(i, j)), 3 * se) << i << "," << j;
        }
}

TEST(Sample, RadialMoment) {
    const auto t = ThetaParams::make(Vector::Zero(1), Matrix::Identity(1, 1), 0.5);
    const DataMatrix x = sample({200000, 10, ModelKind::MGGD, t});
    const Eigen::ArrayXd d = x.col(0).array().square();
    const double se = std::sqrt((d - d.mean()).square().mean() / static_cast<double>(d.size()));
    EXPECT_LT(std::abs(d.mean() - 8.0), 3 * se);
}

TEST(Sample, RadialLawMatchesDirectDraws) {
    for (const double b : {0.4, 1.0, 3.0}) {
        const auto t = make_true_params(4, 0.7, b, 5);
        const DataMatrix x = sample({100000, 11, ModelKind::MGGD, t});
        std::vector<double> d(static_cast<std::size_t>(x.rows()));
        for (Eigen::Index i = 0; i < x.rows(); ++i) d[static_cast<std::size_t>(i)] = mahalanobis_delta(x.row(i).transpose(), t);
        Rng rng(99);
        std::vector<double> w(100000);
        for (auto& v : w) v = std::pow(rng.gamma(4 / (2 * b), 2.0), 1 / b);
        EXPECT_LT(testkit::ks_two_sample(d, w), ks_crit_two_sample_1pct(1e5, 1e5)) << "beta " << b;
    }
}

TEST(Sample, StudentRadialLaw) {
    const auto t = make_true_params(3, 0.3, 4.0, 6);
    const DataMatrix x = sample({100000, 12, ModelKind::StudentT, t});
    std::vector<double> f(static_cast<std::size_t>(x.rows()));
    for (Eigen::Index i = 0; i < x.rows(); ++i) f[static_cast<std::size_t>(i)] = mahalanobis_delta(x.row(i).transpose(), t) / 3.0;
    // delta/m ~ F(m, beta): regularized incomplete beta
    const double ks = testkit::ks_statistic(f, [](double v) { return boost::math::ibeta(1.5, 2.0, 3.0 * v / (3.0 * v + 4.0)); });
    EXPECT_LT(ks, 1.6276 / (std::sqrt(1e5) + 0.12 + 0.11 / std::sqrt(1e5)));
}

TEST(Sample, DirectionIsotropy) {
    const auto t = make_true_params(4, 0.5, 0.8, 7);
    const DataMatrix x = sample({100000, 13, ModelKind::MGGD, t});
    const Matrix inv_root = linalg::spd_inv_sqrt(t.sigma);
    Vector mean = Vector::Zero(4);
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
        const Vector y = inv_root * (x.row(i).transpose() - t.mu);
        mean += y / y.norm();
    }
    mean /= static_cast<double>(x.rows());
    EXPECT_LT(mean.norm(), 0.02);
}

TEST(TrueParams, Examples) {
    const auto t = make_true_params(3, 0.5, 1.0, 1);
    Matrix e(3, 3);
    e << 1, .5, .25, .5, 1, .5, .25, .5, 1;
    EXPECT_LT((t.sigma - e).norm(), 1e-15);
    EXPECT_LT((make_true_params(4, 1e-9, 1.0, 1).sigma - Matrix::Identity(4, 4)).norm(), 1e-8);
    for (const double r : {0.2, 0.4, 0.6, 0.8}) EXPECT_NO_THROW(make_true_params(10, r, 2.0, 3).validate());
    EXPECT_THROW(make_true_params(3, 1.0, 1.0, 1), Error);
    EXPECT_THROW(make_true_params(3, 0.0, 1.0, 1), Error);
    EXPECT_EQ(make_true_params(3, 0.5, 1.0, 8).mu, make_true_params(3, 0.5, 1.0, 8).mu);
}
