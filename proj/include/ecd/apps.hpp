#pragma once

// Image applications: MGGD color transfer (RGB, or CIELAB plus the L* gradient)
// and texture descriptors from RGB statistics, with a PCA projection for display.

#include "ecd/bench.hpp"
#include "ecd/color.hpp"
#include "ecd/core.hpp"
#include "ecd/estimators.hpp"
#include "ecd/image.hpp"
#include "ecd/linalg.hpp"
#include "ecd/sampling.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>
#include <vector>

namespace ecd {

enum class FeatureMode { Rgb3d, LabGrad5d };

/// One row per pixel: (r, g, b) in [0, 1], or (L*, a*, b*, dx, dy) with dx, dy the
/// central differences of L* (one-sided on the border, 0 along a single-pixel axis).
inline DataMatrix extract_features(const Image& img, FeatureMode mode) {
    img.validate();
    const auto n = static_cast<Eigen::Index>(img.size());
    if (mode == FeatureMode::Rgb3d) {
        DataMatrix out(n, 3);
        for (Eigen::Index i = 0; i < n; ++i)
            for (int c = 0; c < 3; ++c) out(i, c) = img.pixels[static_cast<std::size_t>(i) * 3 + c];
        return out;
    }
    DataMatrix out(n, 5);
    for (Eigen::Index i = 0; i < n; ++i) {
        const std::size_t k = static_cast<std::size_t>(i) * 3;
        out.row(i).head<3>() =
            color::srgb_to_lab(Eigen::Vector3d(img.pixels[k], img.pixels[k + 1], img.pixels[k + 2])).transpose();
    }
    const int w = img.width;
    const int h = img.height;
    auto l = [&](int x, int y) { return out(static_cast<Eigen::Index>(y) * w + x, 0); };
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            const auto i = static_cast<Eigen::Index>(y) * w + x;
            double dx = 0.0;
            if (w > 1) dx = x == 0 ? l(1, y) - l(0, y) : x == w - 1 ? l(w - 1, y) - l(w - 2, y) : 0.5 * (l(x + 1, y) - l(x - 1, y));
            double dy = 0.0;
            if (h > 1) dy = y == 0 ? l(x, 1) - l(x, 0) : y == h - 1 ? l(x, h - 1) - l(x, h - 2) : 0.5 * (l(x, y + 1) - l(x, y - 1));
            out(i, 3) = dx;
            out(i, 4) = dy;
        }
    return out;
}

struct FitConfig {
    std::uint64_t seed = 0;
    /// Random rows used by the batch methods (0: all).
    std::size_t subsample = 0;
    /// Online fits replay shuffled epochs until this many updates.
    std::size_t isg_min_updates = 100000;
    double isg_a_full = 100.0;
    double isg_step_offset_full = 10000.0;
    double fp_tol = 1e-10;
    std::size_t fp_max_iters = 1000;
};

inline DataMatrix subsample_rows(const Eigen::Ref<const DataMatrix>& data, std::size_t k, std::uint64_t seed) {
    if (k == 0 || k >= static_cast<std::size_t>(data.rows())) return data;
    std::vector<Eigen::Index> idx(static_cast<std::size_t>(data.rows()));
    std::iota(idx.begin(), idx.end(), Eigen::Index{0});
    Rng rng(seed);
    // Partial Fisher-Yates: the first k entries become a uniform sample without replacement.
    for (std::size_t i = 0; i < k; ++i) {
        const auto j = i + static_cast<std::size_t>(rng.bits() % (idx.size() - i));
        std::swap(idx[i], idx[j]);
    }
    DataMatrix out(static_cast<Eigen::Index>(k), data.cols());
    for (std::size_t i = 0; i < k; ++i) out.row(static_cast<Eigen::Index>(i)) = data.row(idx[i]);
    return out;
}

/// MGGD fit of `data` in `scope` (beta fixed at scope.fixed_beta unless free).
inline ThetaParams fit_mggd(const Eigen::Ref<const DataMatrix>& data, Method method, const EstimationScope& scope,
                            const FitConfig& cfg) {
    const auto m = data.cols();
    if (data.rows() <= m) throw Error("fit: need more pixels than feature dimensions");
    ThetaParams fixed = ThetaParams::make(Vector::Zero(m), Matrix::Identity(m, m), scope.fixed_beta.value_or(1.0));
    const DataMatrix batch = subsample_rows(data, method == Method::ISG ? 0 : cfg.subsample, cfg.seed);
    switch (method) {
        case Method::MM: return moment_init(batch, ModelKind::MGGD, scope, fixed);
        case Method::FP: {
            FpOptions o;
            o.tol = cfg.fp_tol;
            o.max_iters = cfg.fp_max_iters;
            return fp_fit(batch, scope, ModelKind::MGGD, o).theta_hat;
        }
        case Method::IDG: {
            IdgConfig c;
            c.theta0 = moment_init(batch, ModelKind::MGGD, scope, fixed);
            c.scope = scope;
            return idg_fit(batch, c, ModelKind::MGGD).theta_hat;
        }
        case Method::ISG: {
            const auto n = static_cast<std::size_t>(data.rows());
            const auto prefix = std::max<Eigen::Index>(static_cast<Eigen::Index>(n / 10), m + 1);
            IsgConfig c;
            c.theta0 = moment_init(data.topRows(std::min(prefix, data.rows())), ModelKind::MGGD, scope, fixed);
            c.scope = scope;
            if (scope.beta_free()) {
                c.a_coeff = cfg.isg_a_full;
                c.step_offset = cfg.isg_step_offset_full;
                c.order = BlockOrder::Simultaneous;
            }
            IsgEstimator est(ModelKind::MGGD, c);
            std::vector<Eigen::Index> order(n);
            std::iota(order.begin(), order.end(), Eigen::Index{0});
            Rng rng(cfg.seed);
            std::size_t done = 0;
            for (bool first = true; first || done < cfg.isg_min_updates; first = false) {
                if (!first) std::shuffle(order.begin(), order.end(), rng.engine());
                for (const auto i : order) {
                    est.update(data.row(i).transpose());
                    ++done;
                }
            }
            return est.theta();
        }
    }
    throw Error("unknown method");
}

/// T = A^{-1/2} (A^{1/2} B A^{1/2})^{1/2} A^{-1/2}, the linear map pushing a centered
/// scatter A onto B.
inline Matrix monge_kantorovich(const Matrix& a, const Matrix& b) {
    const auto e = linalg::spd_eig(a);
    const Matrix root = linalg::apply(e, [](double x) { return std::sqrt(x); });
    const Matrix inv_root = linalg::apply(e, [](double x) { return 1.0 / std::sqrt(x); });
    return linalg::symmetrize(inv_root * linalg::spd_sqrt(linalg::symmetrize(root * b * root)) * inv_root);
}

struct TransferConfig {
    FeatureMode mode = FeatureMode::Rgb3d;
    Method method = Method::FP;
    /// Shape used in the 5-D mode, where beta is held fixed.
    double beta_5d = 1.0;
    FitConfig fit;
};

struct TransferResult {
    Image output;
    ThetaParams theta_input;
    ThetaParams theta_target;
    Matrix transform;
};

inline TransferResult color_transfer(const Image& input, const Image& target, const TransferConfig& cfg) {
    const DataMatrix xi = extract_features(input, cfg.mode);
    const DataMatrix xt = extract_features(target, cfg.mode);
    EstimationScope scope(cfg.mode == FeatureMode::Rgb3d ? ScopeKind::MuSigmaBeta : ScopeKind::MuSigma);
    if (cfg.mode == FeatureMode::LabGrad5d) scope.fixed_beta = cfg.beta_5d;
    TransferResult r;
    try {
        r.theta_input = fit_mggd(xi, cfg.method, scope, cfg.fit);
    } catch (const std::exception& e) {
        throw Error(std::string("color transfer: fitting the input image failed: ") + e.what());
    }
    try {
        r.theta_target = fit_mggd(xt, cfg.method, scope, cfg.fit);
    } catch (const std::exception& e) {
        throw Error(std::string("color transfer: fitting the target image failed: ") + e.what());
    }
    r.transform = monge_kantorovich(r.theta_input.sigma, r.theta_target.sigma);
    r.output = Image(input.width, input.height);
    for (Eigen::Index i = 0; i < xi.rows(); ++i) {
        const Vector y = r.theta_target.mu + r.transform * (xi.row(i).transpose() - r.theta_input.mu);
        Eigen::Vector3d rgb;
        if (cfg.mode == FeatureMode::Rgb3d)
            rgb = y.head<3>();
        else
            rgb = color::lab_to_srgb(y.head<3>());
        for (int c = 0; c < 3; ++c) r.output.pixels[static_cast<std::size_t>(i) * 3 + c] = std::clamp(rgb[c], 0.0, 1.0);
    }
    return r;
}

struct FeatureVector7 {
    Eigen::Vector3d eigenvalues;  // descending, summing to 3
    Eigen::Vector3d mu;
    double beta = 0.0;

    [[nodiscard]] Eigen::Matrix<double, 7, 1> as_vector() const {
        Eigen::Matrix<double, 7, 1> v;
        v << eigenvalues, mu, beta;
        return v;
    }
};

inline FeatureVector7 texture_features(const Image& img, Method method, const FitConfig& cfg = {}) {
    if (method != Method::FP && method != Method::ISG) throw Error("texture features: method must be fp or isg");
    const DataMatrix x = extract_features(img, FeatureMode::Rgb3d);
    const ThetaParams th = fit_mggd(x, method, EstimationScope(ScopeKind::MuSigmaBeta), cfg);
    const Matrix normalized = (3.0 / th.sigma.trace()) * th.sigma;
    Vector ev = linalg::sym_eig(normalized).values;
    std::sort(ev.data(), ev.data() + ev.size(), std::greater<>());
    FeatureVector7 f;
    f.eigenvalues = ev;
    f.mu = th.mu;
    f.beta = th.beta;
    return f;
}

struct PcaResult {
    DataMatrix projection;  // K x 2
    Matrix components;      // d x 2, unit columns
    Vector mean;
};

/// Centers the columns, then projects onto the two leading principal directions.
/// Each direction is signed so that its largest-magnitude loading is positive.
inline PcaResult pca_project(const Eigen::Ref<const DataMatrix>& features) {
    const auto k = features.rows();
    const auto d = features.cols();
    if (k < 2) throw Error("pca: need at least two rows");
    if (d < 2) throw Error("pca: need at least two columns");
    PcaResult r;
    r.mean = features.colwise().mean().transpose();
    const DataMatrix z = features.rowwise() - r.mean.transpose();
    const Matrix cov = (z.transpose() * z) / static_cast<double>(k - 1);
    const auto e = linalg::sym_eig(linalg::symmetrize(cov));  // ascending
    r.components.resize(d, 2);
    for (int c = 0; c < 2; ++c) {
        Vector v = e.vectors.col(d - 1 - c);
        Eigen::Index arg = 0;
        v.cwiseAbs().maxCoeff(&arg);
        if (v[arg] < 0.0) v = -v;
        r.components.col(c) = v;
    }
    r.projection = z * r.components;
    return r;
}

}  // namespace ecd
