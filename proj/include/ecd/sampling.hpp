#pragma once

// Exact i.i.d. samplers through the stochastic representations
//   MGGD       x = mu + delta^{1/2} Sigma^{1/2} u,  u ~ U(S^{m-1}), delta = W^{1/beta}, W ~ Gamma(m/(2beta), 2)
//   Student-t  x = mu + Sigma^{1/2} z sqrt(beta / chi),  z ~ N(0, I), chi ~ chi^2(beta)
// Boost.Random distributions keep the streams identical across standard libraries.

#include "ecd/core.hpp"
#include "ecd/linalg.hpp"

#include <boost/random/chi_squared_distribution.hpp>
#include <boost/random/gamma_distribution.hpp>
#include <boost/random/normal_distribution.hpp>
#include <boost/random/uniform_real_distribution.hpp>

#include <cmath>
#include <cstdint>
#include <random>

namespace ecd {

/// 64-bit Mersenne Twister seeded through splitmix64, so that nearby integer seeds
/// (base_seed + trial) give unrelated streams.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(mix(seed)) {}

    static std::uint64_t mix(std::uint64_t z) {
        z += 0x9e3779b97f4a7c15ULL;
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    double normal() { return normal_(engine_); }
    double uniform(double lo, double hi) { return boost::random::uniform_real_distribution<double>(lo, hi)(engine_); }
    double gamma(double shape, double scale) {
        return boost::random::gamma_distribution<double>(shape, scale)(engine_);
    }
    double chi_squared(double dof) { return boost::random::chi_squared_distribution<double>(dof)(engine_); }
    std::uint64_t bits() { return engine_(); }

    Vector normal_vector(Eigen::Index m) {
        Vector z(m);
        for (Eigen::Index i = 0; i < m; ++i) z[i] = normal();
        return z;
    }

    std::mt19937_64& engine() { return engine_; }

private:
    std::mt19937_64 engine_;
    boost::random::normal_distribution<double> normal_{0.0, 1.0};
};

struct SamplerConfig {
    std::size_t n = 1;
    std::uint64_t seed = 0;
    ModelKind model = ModelKind::MGGD;
    ThetaParams theta;
};

/// Streaming sampler; draws are identical whether taken one at a time or in bulk.
class Sampler {
public:
    Sampler(ModelKind model, ThetaParams theta, std::uint64_t seed)
        : model_(model), theta_(std::move(theta)), rng_(seed) {
        theta_.validate();
        root_ = linalg::spd_sqrt(theta_.sigma);
    }

    Vector next() {
        const auto m = theta_.dim();
        if (model_ == ModelKind::MGGD) {
            Vector z = rng_.normal_vector(m);
            const double norm = z.norm();
            const double k = static_cast<double>(m) / (2.0 * theta_.beta);
            const double w = rng_.gamma(k, 2.0);
            const double radius = std::sqrt(std::pow(w, 1.0 / theta_.beta));
            return theta_.mu + (radius / norm) * (root_ * z);
        }
        Vector z = rng_.normal_vector(m);
        const double chi = rng_.chi_squared(theta_.beta);
        return theta_.mu + std::sqrt(theta_.beta / chi) * (root_ * z);
    }

    void fill(Eigen::Ref<DataMatrix> out) {
        check_dim(out.cols(), theta_.dim(), "Sampler::fill");
        for (Eigen::Index i = 0; i < out.rows(); ++i) out.row(i) = next().transpose();
    }

    [[nodiscard]] const ThetaParams& theta() const { return theta_; }

private:
    ModelKind model_;
    ThetaParams theta_;
    Rng rng_;
    Matrix root_;
};

inline DataMatrix sample(const SamplerConfig& cfg) {
    if (cfg.n < 1) throw Error("sample: n must be >= 1");
    Sampler s(cfg.model, cfg.theta, cfg.seed);
    DataMatrix out(static_cast<Eigen::Index>(cfg.n), cfg.theta.dim());
    s.fill(out);
    return out;
}

/// Toeplitz scatter Sigma_ij = rho^{|i-j|} and a standard-normal location.
inline ThetaParams make_true_params(int m, double rho, double beta, std::uint64_t mu_seed) {
    if (m < 1) throw DimensionError("make_true_params: m must be >= 1");
    if (!(rho > 0.0) || !(rho < 1.0)) throw Error("make_true_params: rho must lie in (0, 1)");
    Matrix sigma(m, m);
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < m; ++j) sigma(i, j) = std::pow(rho, std::abs(i - j));
    Rng rng(mu_seed);
    return ThetaParams::make(rng.normal_vector(m), std::move(sigma), beta);
}

}  // namespace ecd
