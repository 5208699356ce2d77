#pragma once

// Monte Carlo harness: every trial draws its own ground truth and data from
// base_seed + trial, so results do not depend on the number of worker threads.

#include "ecd/core.hpp"
#include "ecd/csv.hpp"
#include "ecd/estimators.hpp"
#include "ecd/fisher.hpp"
#include "ecd/manifold.hpp"
#include "ecd/sampling.hpp"

#include <boost/math/distributions/chi_squared.hpp>
#include <boost/math/tools/roots.hpp>

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <map>
#include <numeric>
#include <optional>
#include <ostream>
#include <string>
#include <thread>
#include <utility>
#include <vector>

namespace ecd {

enum class Method { MM, FP, IDG, ISG };

inline std::string_view to_string(Method m) {
    switch (m) {
        case Method::MM: return "mm";
        case Method::FP: return "fp";
        case Method::IDG: return "idg";
        case Method::ISG: return "isg";
    }
    return "?";
}

inline Method parse_method(std::string_view s) {
    if (s == "mm") return Method::MM;
    if (s == "fp") return Method::FP;
    if (s == "idg") return Method::IDG;
    if (s == "isg") return Method::ISG;
    throw Error("unknown method '" + std::string(s) + "' (expected mm, fp, idg or isg)");
}

/// Near: a random point at d2 in [init_d2_min, init_d2_max) from the truth.
/// MomentPrefix: moment estimate on the first init_fraction of the data.
enum class InitKind { Near, MomentPrefix };

inline std::string_view to_string(InitKind k) { return k == InitKind::Near ? "near" : "moment-prefix"; }

inline InitKind parse_init(std::string_view s) {
    if (s == "near") return InitKind::Near;
    if (s == "moment-prefix" || s == "mm") return InitKind::MomentPrefix;
    throw Error("unknown init '" + std::string(s) + "' (expected near or moment-prefix)");
}

struct TrialPlan {
    std::size_t trials = 100;
    int m = 5;
    std::size_t n_samples = 10000;
    ModelKind model = ModelKind::MGGD;
    ScopeKind scope = ScopeKind::SigmaOnly;
    std::vector<Method> methods{Method::ISG};
    std::uint64_t base_seed = 1;
    std::pair<double, double> rho_range{0.2, 0.8};
    std::pair<double, double> beta_range{0.2, 5.0};
    /// Dataset sizes for the efficiency and timing benches (empty: n_samples only).
    std::vector<std::size_t> n_grid;
    double a_coeff = 1.0;
    double step_offset = 0.0;
    BlockOrder order = BlockOrder::Sequential;
    std::size_t minibatch = 1;
    InitKind init = InitKind::Near;
    double init_d2_min = 0.0;
    double init_d2_max = 0.5;
    double init_fraction = 0.1;
    double fp_tol = 1e-10;
    std::size_t fp_max_iters = 1000;
    double idg_grad_tol = 1e-8;
    std::size_t idg_max_iters = 100;
    std::size_t checkpoints_per_decade = 10;
    /// Worker threads; 0 picks the hardware concurrency.
    unsigned threads = 0;

    void validate() const {
        if (trials < 1) throw Error("plan: trials must be >= 1");
        if (m < 1) throw Error("plan: m must be >= 1");
        if (n_samples < 1) throw Error("plan: n_samples must be >= 1");
        if (methods.empty()) throw Error("plan: no methods");
        if (!(rho_range.first > 0.0 && rho_range.second < 1.0 && rho_range.first <= rho_range.second))
            throw Error("plan: rho range must lie in (0, 1)");
        if (!(beta_range.first > 0.0 && beta_range.first <= beta_range.second))
            throw Error("plan: invalid beta range");
        if (!(init_d2_min >= 0.0 && init_d2_max >= init_d2_min)) throw Error("plan: invalid initial distance range");
        if (!(init_fraction > 0.0 && init_fraction <= 1.0)) throw Error("plan: init fraction must lie in (0, 1]");
        if (!(a_coeff > 0.0)) throw Error("plan: a must be positive");
        if (minibatch < 1) throw Error("plan: minibatch must be >= 1");
        if (checkpoints_per_decade < 1) throw Error("plan: checkpoints per decade must be >= 1");
        for (const auto n : sizes())
            if (n < 1) throw Error("plan: dataset sizes must be >= 1");
    }

    [[nodiscard]] std::vector<std::size_t> sizes() const {
        return n_grid.empty() ? std::vector<std::size_t>{n_samples} : n_grid;
    }

    [[nodiscard]] bool uses(Method m_) const { return std::find(methods.begin(), methods.end(), m_) != methods.end(); }

    /// The Student-t moment estimate needs beta > 2; with MM in the method list the
    /// shape range is cut to [2.5, 5].
    [[nodiscard]] std::pair<double, double> effective_beta_range() const {
        if (model == ModelKind::StudentT && uses(Method::MM))
            return {std::max(beta_range.first, 2.5), std::max(std::min(beta_range.second, 5.0), 2.5)};
        return beta_range;
    }

    [[nodiscard]] csv::Manifest manifest(const std::string& bench) const {
        std::string meth;
        for (const auto mth : methods) meth += (meth.empty() ? "" : "|") + std::string(to_string(mth));
        std::string grid;
        for (const auto n : sizes()) grid += (grid.empty() ? "" : "|") + std::to_string(n);
        const auto br = effective_beta_range();
        return {{"bench", bench},
                {"trials", std::to_string(trials)},
                {"m", std::to_string(m)},
                {"n_samples", std::to_string(n_samples)},
                {"n_grid", grid},
                {"model", std::string(to_string(model))},
                {"scope", std::string(to_string(scope))},
                {"methods", meth},
                {"base_seed", std::to_string(base_seed)},
                {"rho_range", csv::num(rho_range.first) + "|" + csv::num(rho_range.second)},
                {"beta_range", csv::num(br.first) + "|" + csv::num(br.second)},
                {"a", csv::num(a_coeff)},
                {"step_offset", csv::num(step_offset)},
                {"order", order == BlockOrder::Sequential ? "sequential" : "simultaneous"},
                {"minibatch", std::to_string(minibatch)},
                {"init", std::string(to_string(init))},
                {"init_d2", csv::num(init_d2_min) + "|" + csv::num(init_d2_max)},
                {"init_fraction", csv::num(init_fraction)},
                {"fp_tol", csv::num(fp_tol)},
                {"idg_grad_tol", csv::num(idg_grad_tol)}};
    }
};

struct TrialSetup {
    std::size_t index = 0;
    ThetaParams truth;
    MetricWeights weights;
    EstimationScope scope;
    std::uint64_t data_seed = 0;
    std::uint64_t init_seed = 0;
};

inline TrialSetup setup_trial(const TrialPlan& plan, std::size_t trial) {
    const std::uint64_t seed = plan.base_seed + trial;
    Rng rng(seed);
    const auto br = plan.effective_beta_range();
    const double rho = rng.uniform(plan.rho_range.first, plan.rho_range.second);
    const double beta = br.first == br.second ? br.first : rng.uniform(br.first, br.second);
    TrialSetup s;
    s.index = trial;
    s.truth = make_true_params(plan.m, rho, beta, rng.bits());
    s.weights = info_constants(beta, plan.m, plan.model).weights();
    s.scope = EstimationScope(plan.scope);
    s.scope.fixed_mu = s.truth.mu;
    s.scope.fixed_beta = s.truth.beta;
    s.data_seed = rng.bits();
    s.init_seed = rng.bits();
    return s;
}

/// The first n observations of a trial's stream (a prefix of any longer draw).
inline DataMatrix trial_data(const TrialPlan& plan, const TrialSetup& s, std::size_t n) {
    return sample({n, s.data_seed, plan.model, s.truth});
}

/// A point at squared distance d2 from `truth` along a random in-scope tangent direction.
inline ThetaParams perturb_near(const ThetaParams& truth, const MetricWeights& w, const EstimationScope& scope,
                                double d2, Rng& rng) {
    const auto m = truth.dim();
    TangentVector u = TangentVector::zero(m);
    if (scope.mu_free()) u.u_mu = linalg::spd_sqrt(truth.sigma) * rng.normal_vector(m);
    Matrix a(m, m);
    for (Eigen::Index i = 0; i < m; ++i)
        for (Eigen::Index j = 0; j < m; ++j) a(i, j) = rng.normal();
    const Matrix root = linalg::spd_sqrt(truth.sigma);
    u.u_sigma = linalg::symmetrize(root * (0.5 * (a + a.transpose())) * root);
    if (scope.beta_free()) u.u_beta = rng.normal() * truth.beta;
    if (d2 <= 0.0) return truth;
    auto at = [&](double s) {
        TangentVector v = u;
        v *= s;
        return product_retract(truth, v);
    };
    auto f = [&](double s) { return product_distance_sq(truth, at(s), w) - d2; };
    double hi = 1.0;
    while (f(hi) < 0.0) {
        hi *= 2.0;
        if (hi > 1e6) throw Error("perturb_near: cannot reach the requested distance");
    }
    std::uintmax_t iters = 200;
    const auto r = boost::math::tools::bisect(f, 0.0, hi, boost::math::tools::eps_tolerance<double>(40), iters);
    return at(0.5 * (r.first + r.second));
}

/// FNV-1a over the raw bytes of a dataset.
inline std::uint64_t checksum(const Eigen::Ref<const DataMatrix>& data) {
    std::uint64_t h = 1469598103934665603ULL;
    for (Eigen::Index i = 0; i < data.rows(); ++i)
        for (Eigen::Index j = 0; j < data.cols(); ++j) {
            const double v = data(i, j);
            unsigned char bytes[sizeof v];
            std::memcpy(bytes, &v, sizeof v);
            for (const unsigned char b : bytes) h = (h ^ b) * 1099511628211ULL;
        }
    return h;
}

namespace detail {

template <class F>
void parallel_for(std::size_t n, unsigned threads, F&& f) {
    unsigned t = threads ? threads : std::max(1U, std::thread::hardware_concurrency());
    t = static_cast<unsigned>(std::min<std::size_t>(t, n));
    if (t <= 1) {
        for (std::size_t i = 0; i < n; ++i) f(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::vector<std::jthread> pool;
    pool.reserve(t);
    for (unsigned k = 0; k < t; ++k)
        pool.emplace_back([&] {
            for (std::size_t i = next++; i < n; i = next++) f(i);
        });
}

inline double mean_of(const std::vector<double>& v) {
    return v.empty() ? std::nan("") : std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

inline double var_of(const std::vector<double>& v) {
    if (v.size() < 2) return 0.0;
    const double mu = mean_of(v);
    double s = 0.0;
    for (const double x : v) s += (x - mu) * (x - mu);
    return s / static_cast<double>(v.size() - 1);
}

}  // namespace detail

/// Starting point for a trial according to the plan's init protocol.
inline ThetaParams initial_point(const TrialPlan& plan, const TrialSetup& s, const Eigen::Ref<const DataMatrix>& data) {
    if (plan.init == InitKind::Near) {
        Rng rng(s.init_seed);
        const double d2 = plan.init_d2_min == plan.init_d2_max ? plan.init_d2_min
                                                               : rng.uniform(plan.init_d2_min, plan.init_d2_max);
        return perturb_near(s.truth, s.weights, s.scope, d2, rng);
    }
    const auto rows = std::max<Eigen::Index>(static_cast<Eigen::Index>(plan.init_fraction * static_cast<double>(data.rows())),
                                             static_cast<Eigen::Index>(plan.m) + 1);
    return moment_init(data.topRows(std::min(rows, data.rows())), plan.model, s.scope, s.truth);
}

inline IsgConfig isg_config(const TrialPlan& plan, const TrialSetup& s, const ThetaParams& theta0) {
    IsgConfig c;
    c.a_coeff = plan.a_coeff;
    c.step_offset = plan.step_offset;
    c.order = plan.order;
    c.minibatch = plan.minibatch;
    c.theta0 = theta0;
    c.scope = s.scope;
    c.reference = Reference{s.truth, s.weights};
    return c;
}

/// Runs one method on one dataset and returns its estimate.
inline ThetaParams run_method(const TrialPlan& plan, Method method, const TrialSetup& s,
                              const Eigen::Ref<const DataMatrix>& data, const ThetaParams& theta0) {
    switch (method) {
        case Method::MM: return s.scope.pin(moment_init(data, plan.model, s.scope, s.truth));
        case Method::FP: {
            FpOptions o;
            o.tol = plan.fp_tol;
            o.max_iters = plan.fp_max_iters;
            o.theta0 = theta0;
            return fp_fit(data, s.scope, plan.model, o).theta_hat;
        }
        case Method::IDG: {
            IdgConfig c;
            c.max_iters = plan.idg_max_iters;
            c.grad_tol = plan.idg_grad_tol;
            c.theta0 = theta0;
            c.scope = s.scope;
            return idg_fit(data, c, plan.model).theta_hat;
        }
        case Method::ISG: return isg_fit(data, isg_config(plan, s, theta0), plan.model).theta_hat;
    }
    throw Error("unknown method");
}

// ---------------------------------------------------------------------------

struct RateResult {
    std::vector<std::size_t> n;
    std::vector<double> mean_d2;
    double slope = std::nan("");
    std::size_t completed = 0;
    std::vector<std::string> errors;
};

inline std::vector<std::size_t> log_checkpoints(std::size_t n_max, std::size_t per_decade) {
    std::vector<std::size_t> out;
    const double top = std::log10(static_cast<double>(n_max));
    for (std::size_t k = 0;; ++k) {
        const double e = static_cast<double>(k) / static_cast<double>(per_decade);
        if (e > top + 1e-12) break;
        const auto v = static_cast<std::size_t>(std::llround(std::pow(10.0, e)));
        if (out.empty() || v > out.back()) out.push_back(std::min(v, n_max));
    }
    if (out.back() != n_max) out.push_back(n_max);
    return out;
}

/// Least-squares slope of log y on log x over x in [lo, hi].
inline double loglog_slope(const std::vector<std::size_t>& x, const std::vector<double>& y, double lo, double hi) {
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    int k = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double xi = static_cast<double>(x[i]);
        if (xi < lo * (1 - 1e-12) || xi > hi * (1 + 1e-12) || !(y[i] > 0.0)) continue;
        const double lx = std::log(xi);
        const double ly = std::log(y[i]);
        sx += lx;
        sy += ly;
        sxx += lx * lx;
        sxy += lx * ly;
        ++k;
    }
    if (k < 2) return std::nan("");
    return (k * sxy - sx * sy) / (k * sxx - sx * sx);
}

/// Mean d2(theta*, theta_n) of ISG at log-spaced n over the trials.
inline RateResult bench_rate(const TrialPlan& plan) {
    plan.validate();
    const auto cps = log_checkpoints(plan.n_samples, plan.checkpoints_per_decade);
    std::vector<std::optional<std::vector<double>>> per(plan.trials);
    std::vector<std::string> err(plan.trials);
    detail::parallel_for(plan.trials, plan.threads, [&](std::size_t t) {
        try {
            const TrialSetup s = setup_trial(plan, t);
            Sampler src(plan.model, s.truth, s.data_seed);
            ThetaParams theta0 = s.truth;
            if (plan.init == InitKind::Near) {
                theta0 = initial_point(plan, s, DataMatrix(0, plan.m));
            } else {
                theta0 = initial_point(plan, s, trial_data(plan, s, plan.n_samples));
            }
            IsgEstimator est(plan.model, isg_config(plan, s, theta0));
            std::vector<double> d2;
            std::size_t next = 0;
            for (std::size_t n = 1; n <= plan.n_samples; ++n) {
                est.update(src.next());
                if (n == cps[next]) {
                    d2.push_back(product_distance_sq(s.truth, est.theta(), s.weights));
                    ++next;
                }
            }
            per[t] = std::move(d2);
        } catch (const std::exception& e) {
            err[t] = "trial " + std::to_string(t) + ": " + e.what();
        }
    });
    RateResult r;
    r.n = cps;
    r.mean_d2.assign(cps.size(), 0.0);
    for (std::size_t t = 0; t < plan.trials; ++t) {
        if (!per[t]) {
            r.errors.push_back(err[t]);
            continue;
        }
        ++r.completed;
        for (std::size_t i = 0; i < cps.size(); ++i) r.mean_d2[i] += (*per[t])[i];
    }
    for (auto& v : r.mean_d2) v = r.completed ? v / static_cast<double>(r.completed) : std::nan("");
    r.slope = loglog_slope(r.n, r.mean_d2, static_cast<double>(plan.n_samples) / 10.0, static_cast<double>(plan.n_samples));
    return r;
}

inline void write_csv(std::ostream& out, const TrialPlan& plan, const RateResult& r) {
    out << csv::manifest_line(plan.manifest("rate")) << '\n';
    out << "n,mean_d2\n";
    for (std::size_t i = 0; i < r.n.size(); ++i) out << r.n[i] << ',' << csv::num(r.mean_d2[i]) << '\n';
    out << "# slope_last_decade=" << csv::num(r.slope) << "; completed=" << r.completed
        << "; excluded=" << r.errors.size() << '\n';
}

// ---------------------------------------------------------------------------

struct Chi2Result {
    std::vector<std::size_t> trial;
    std::vector<double> statistic;
    double mean = 0.0;
    double variance = 0.0;
    double ks = 0.0;
    double ks_critical = 0.0;
    int dof = 0;
    std::vector<std::string> errors;
};

inline int chi2_dof(int m, ScopeKind scope) { return m * (m + 1) / 2 + (scope == ScopeKind::MuSigma ? m : 0); }

/// Kolmogorov-Smirnov statistic of a sample against a continuous CDF.
template <class Cdf>
double ks_statistic(std::vector<double> x, Cdf&& cdf) {
    std::sort(x.begin(), x.end());
    const double n = static_cast<double>(x.size());
    double d = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double f = cdf(x[i]);
        d = std::max({d, static_cast<double>(i + 1) / n - f, f - static_cast<double>(i) / n});
    }
    return d;
}

/// 1% critical value of the one-sample KS statistic (Kolmogorov limit with
/// Stephens' finite-sample correction).
inline double ks_critical_1pct(std::size_t n) {
    const double r = std::sqrt(static_cast<double>(n));
    return 1.6276 / (r + 0.12 + 0.11 / r);
}

inline Chi2Result bench_chi2(const TrialPlan& plan) {
    plan.validate();
    if (plan.scope == ScopeKind::MuSigmaBeta) throw Error("bench_chi2: scope must be sigma or mu-sigma");
    if (plan.a_coeff != 1.0) throw Error("bench_chi2: the chi-square limit needs a = 1");
    std::vector<double> stat(plan.trials, std::nan(""));
    std::vector<std::string> err(plan.trials);
    const double n = static_cast<double>(plan.n_samples);
    detail::parallel_for(plan.trials, plan.threads, [&](std::size_t t) {
        try {
            const TrialSetup s = setup_trial(plan, t);
            Sampler src(plan.model, s.truth, s.data_seed);
            const ThetaParams theta0 = initial_point(plan, s, DataMatrix(0, plan.m));
            IsgEstimator est(plan.model, isg_config(plan, s, theta0));
            for (std::size_t k = 0; k < plan.n_samples; ++k) est.update(src.next());
            est.flush();
            stat[t] = n * product_distance_sq(s.truth, est.theta(), s.weights);
        } catch (const std::exception& e) {
            err[t] = "trial " + std::to_string(t) + ": " + e.what();
        }
    });
    Chi2Result r;
    r.dof = chi2_dof(plan.m, plan.scope);
    for (std::size_t t = 0; t < plan.trials; ++t) {
        if (std::isnan(stat[t])) {
            r.errors.push_back(err[t]);
            continue;
        }
        r.trial.push_back(t);
        r.statistic.push_back(stat[t]);
    }
    if (!r.statistic.empty()) {
        r.mean = detail::mean_of(r.statistic);
        r.variance = detail::var_of(r.statistic);
        const boost::math::chi_squared_distribution<double> chi(r.dof);
        r.ks = ks_statistic(r.statistic, [&](double v) { return v <= 0.0 ? 0.0 : boost::math::cdf(chi, v); });
        r.ks_critical = ks_critical_1pct(r.statistic.size());
    }
    return r;
}

inline void write_csv(std::ostream& out, const TrialPlan& plan, const Chi2Result& r) {
    out << csv::manifest_line(plan.manifest("chi2")) << '\n';
    out << "trial,statistic\n";
    for (std::size_t i = 0; i < r.trial.size(); ++i) out << r.trial[i] << ',' << csv::num(r.statistic[i]) << '\n';
    out << "# dof=" << r.dof << "; mean=" << csv::num(r.mean) << "; variance=" << csv::num(r.variance)
        << "; ks=" << csv::num(r.ks) << "; ks_critical_1pct=" << csv::num(r.ks_critical)
        << "; completed=" << r.trial.size() << "; excluded=" << r.errors.size() << '\n';
}

// ---------------------------------------------------------------------------

struct EfficiencyRow {
    std::size_t n = 0;
    Method method = Method::ISG;
    double mean_d2 = 0.0;
    double var_d2 = 0.0;
    std::size_t completed = 0;
    std::size_t excluded = 0;
};

struct EfficiencyResult {
    std::vector<EfficiencyRow> rows;
    /// checksums[(n, method)][trial]: the dataset each method consumed (0 if excluded before reading).
    std::map<std::pair<std::size_t, Method>, std::vector<std::uint64_t>> checksums;
    std::vector<std::string> errors;
};

inline EfficiencyResult bench_efficiency(const TrialPlan& plan) {
    plan.validate();
    const auto sizes = plan.sizes();
    const auto& methods = plan.methods;
    // d2[size][method][trial]
    std::vector<std::vector<std::vector<double>>> d2(
        sizes.size(), std::vector<std::vector<double>>(methods.size(), std::vector<double>(plan.trials, std::nan(""))));
    std::vector<std::vector<std::vector<std::uint64_t>>> sums(
        sizes.size(), std::vector<std::vector<std::uint64_t>>(methods.size(), std::vector<std::uint64_t>(plan.trials, 0)));
    std::vector<std::vector<std::string>> err(plan.trials);
    detail::parallel_for(plan.trials, plan.threads, [&](std::size_t t) {
        const TrialSetup s = setup_trial(plan, t);
        for (std::size_t k = 0; k < sizes.size(); ++k) {
            const DataMatrix data = trial_data(plan, s, sizes[k]);
            std::optional<ThetaParams> theta0;
            try {
                theta0 = initial_point(plan, s, data);
            } catch (const std::exception& e) {
                err[t].push_back("trial " + std::to_string(t) + " n=" + std::to_string(sizes[k]) + " init: " + e.what());
                continue;
            }
            for (std::size_t j = 0; j < methods.size(); ++j) {
                try {
                    sums[k][j][t] = checksum(data);
                    const ThetaParams est = run_method(plan, methods[j], s, data, *theta0);
                    d2[k][j][t] = product_distance_sq(s.truth, est, s.weights);
                } catch (const std::exception& e) {
                    err[t].push_back("trial " + std::to_string(t) + " n=" + std::to_string(sizes[k]) + " " +
                                     std::string(to_string(methods[j])) + ": " + e.what());
                }
            }
        }
    });
    EfficiencyResult r;
    for (std::size_t k = 0; k < sizes.size(); ++k)
        for (std::size_t j = 0; j < methods.size(); ++j) {
            std::vector<double> ok;
            for (const double v : d2[k][j])
                if (!std::isnan(v)) ok.push_back(v);
            r.rows.push_back({sizes[k], methods[j], detail::mean_of(ok), detail::var_of(ok), ok.size(),
                              plan.trials - ok.size()});
            r.checksums[{sizes[k], methods[j]}] = sums[k][j];
        }
    for (auto& e : err) r.errors.insert(r.errors.end(), e.begin(), e.end());
    return r;
}

inline void write_csv(std::ostream& out, const TrialPlan& plan, const EfficiencyResult& r) {
    out << csv::manifest_line(plan.manifest("efficiency")) << '\n';
    out << "N,method,mean_d2_final,var_d2_final,completed,excluded\n";
    for (const auto& row : r.rows)
        out << row.n << ',' << to_string(row.method) << ',' << csv::num(row.mean_d2) << ',' << csv::num(row.var_d2)
            << ',' << row.completed << ',' << row.excluded << '\n';
    out << "# excluded_total=" << r.errors.size() << '\n';
}

// ---------------------------------------------------------------------------

struct TimingRow {
    std::size_t n = 0;
    Method method = Method::ISG;
    std::int64_t median_ns = 0;
    std::int64_t min_ns = 0;
    std::int64_t max_ns = 0;
    std::size_t completed = 0;
};

struct TimingResult {
    std::vector<TimingRow> rows;
    std::vector<std::string> errors;

    [[nodiscard]] std::int64_t median(std::size_t n, Method m) const {
        for (const auto& row : rows)
            if (row.n == n && row.method == m) return row.median_ns;
        throw Error("timing: no row for that size and method");
    }
};

/// Wall-clock per fit (data generation excluded). Trials run one after another so
/// that timings do not compete for cores.
inline TimingResult bench_time(const TrialPlan& plan) {
    plan.validate();
    const auto sizes = plan.sizes();
    TimingResult r;
    for (const auto n : sizes) {
        std::vector<std::vector<std::int64_t>> ns(plan.methods.size());
        for (std::size_t t = 0; t < plan.trials; ++t) {
            const TrialSetup s = setup_trial(plan, t);
            const DataMatrix data = trial_data(plan, s, n);
            std::optional<ThetaParams> theta0;
            try {
                theta0 = initial_point(plan, s, data);
            } catch (const std::exception& e) {
                r.errors.push_back("trial " + std::to_string(t) + " init: " + e.what());
                continue;
            }
            for (std::size_t j = 0; j < plan.methods.size(); ++j) {
                try {
                    const auto t0 = std::chrono::steady_clock::now();
                    (void)run_method(plan, plan.methods[j], s, data, *theta0);
                    ns[j].push_back(std::chrono::duration_cast<std::chrono::nanoseconds>(
                                        std::chrono::steady_clock::now() - t0)
                                        .count());
                } catch (const std::exception& e) {
                    r.errors.push_back("trial " + std::to_string(t) + " " + std::string(to_string(plan.methods[j])) +
                                       ": " + e.what());
                }
            }
        }
        for (std::size_t j = 0; j < plan.methods.size(); ++j) {
            auto v = ns[j];
            TimingRow row{n, plan.methods[j], 0, 0, 0, v.size()};
            if (!v.empty()) {
                std::sort(v.begin(), v.end());
                row.median_ns = v.size() % 2 ? v[v.size() / 2] : (v[v.size() / 2 - 1] + v[v.size() / 2]) / 2;
                row.min_ns = v.front();
                row.max_ns = v.back();
            }
            r.rows.push_back(row);
        }
    }
    return r;
}

inline void write_csv(std::ostream& out, const TrialPlan& plan, const TimingResult& r) {
    out << csv::manifest_line(plan.manifest("time")) << '\n';
    out << "N,method,median_ns,min_ns,max_ns,completed\n";
    for (const auto& row : r.rows)
        out << row.n << ',' << to_string(row.method) << ',' << row.median_ns << ',' << row.min_ns << ',' << row.max_ns
            << ',' << row.completed << '\n';
    out << "# excluded_total=" << r.errors.size() << '\n';
}

// ---------------------------------------------------------------------------

struct StationarityRow {
    std::size_t trial = 0;
    Method method = Method::ISG;
    double d2_init = 0.0;
    double d2_final = 0.0;
    double grad_norm = 0.0;
    bool correct = false;
};

struct StationarityResult {
    std::vector<StationarityRow> rows;
    std::vector<std::string> errors;
    static constexpr double kCorrectThreshold = 0.05;

    [[nodiscard]] double fraction_correct(Method m) const {
        std::size_t k = 0;
        std::size_t c = 0;
        for (const auto& row : rows)
            if (row.method == m) {
                ++k;
                c += row.correct ? 1 : 0;
            }
        return k ? static_cast<double>(c) / static_cast<double>(k) : std::nan("");
    }
};

/// Full-scope fits from random starting points: final gradient norm (over the
/// trial's whole dataset) and distance to the truth, classified at d2 < 0.05.
inline StationarityResult bench_stationarity(const TrialPlan& plan) {
    plan.validate();
    if (plan.scope != ScopeKind::MuSigmaBeta) throw Error("bench_stationarity: scope must be full");
    std::vector<std::vector<StationarityRow>> per(plan.trials);
    std::vector<std::vector<std::string>> err(plan.trials);
    detail::parallel_for(plan.trials, plan.threads, [&](std::size_t t) {
        const TrialSetup s = setup_trial(plan, t);
        const DataMatrix data = trial_data(plan, s, plan.n_samples);
        ThetaParams theta0;
        try {
            theta0 = initial_point(plan, s, data);
        } catch (const std::exception& e) {
            err[t].push_back("trial " + std::to_string(t) + " init: " + e.what());
            return;
        }
        const double d2_init = product_distance_sq(s.truth, theta0, s.weights);
        for (const auto method : plan.methods) {
            try {
                const ThetaParams est = run_method(plan, method, s, data, theta0);
                const InfoConstants c = info_constants(est.beta, plan.m, plan.model);
                const TangentVector g = batch_nat_grad(est, data, plan.model, c, s.scope);
                StationarityRow row;
                row.trial = t;
                row.method = method;
                row.d2_init = d2_init;
                row.d2_final = product_distance_sq(s.truth, est, s.weights);
                row.grad_norm = std::sqrt(metric_norm_sq(est, g, c.weights()));
                row.correct = row.d2_final < StationarityResult::kCorrectThreshold;
                per[t].push_back(row);
            } catch (const std::exception& e) {
                err[t].push_back("trial " + std::to_string(t) + " " + std::string(to_string(method)) + ": " + e.what());
            }
        }
    });
    StationarityResult r;
    for (std::size_t t = 0; t < plan.trials; ++t) {
        r.rows.insert(r.rows.end(), per[t].begin(), per[t].end());
        r.errors.insert(r.errors.end(), err[t].begin(), err[t].end());
    }
    return r;
}

inline void write_csv(std::ostream& out, const TrialPlan& plan, const StationarityResult& r) {
    out << csv::manifest_line(plan.manifest("stationarity")) << '\n';
    out << "trial,method,d2_init,d2_final,grad_norm,correct\n";
    for (const auto& row : r.rows)
        out << row.trial << ',' << to_string(row.method) << ',' << csv::num(row.d2_init) << ','
            << csv::num(row.d2_final) << ',' << csv::num(row.grad_norm) << ',' << (row.correct ? 1 : 0) << '\n';
    for (const auto m : plan.methods)
        out << "# fraction_correct_" << to_string(m) << '=' << csv::num(r.fraction_correct(m)) << '\n';
    out << "# excluded_total=" << r.errors.size() << '\n';
}

}  // namespace ecd
