#include "ecd/apps.hpp"
#include "ecd/bench.hpp"
#include "ecd/csv.hpp"
#include "ecd/estimators.hpp"
#include "ecd/sampling.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <fstream>
#include <iostream>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

namespace {

using ecd::csv::num;
using json = nlohmann::json;

std::ofstream open_out(const std::string& path) {
    std::ofstream out(path);
    if (!out) throw ecd::Error("cannot write " + path);
    return out;
}

json theta_to_json(const ecd::ThetaParams& t) {
    json j;
    j["mu"] = std::vector<double>(t.mu.data(), t.mu.data() + t.mu.size());
    std::vector<std::vector<double>> s;
    for (Eigen::Index i = 0; i < t.sigma.rows(); ++i) {
        s.emplace_back();
        for (Eigen::Index k = 0; k < t.sigma.cols(); ++k) s.back().push_back(t.sigma(i, k));
    }
    j["sigma"] = s;
    j["beta"] = t.beta;
    return j;
}

ecd::ThetaParams theta_from_json(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ecd::Error("cannot open " + path);
    json j;
    try {
        in >> j;
        const auto mu = j.at("mu").get<std::vector<double>>();
        const auto s = j.at("sigma").get<std::vector<std::vector<double>>>();
        ecd::Vector v = Eigen::Map<const ecd::Vector>(mu.data(), static_cast<Eigen::Index>(mu.size()));
        ecd::Matrix sig(static_cast<Eigen::Index>(s.size()), static_cast<Eigen::Index>(s.size()));
        for (std::size_t i = 0; i < s.size(); ++i) {
            if (s[i].size() != s.size()) throw ecd::DimensionError(path + ": sigma is not square");
            for (std::size_t k = 0; k < s.size(); ++k)
                sig(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) = s[i][k];
        }
        return ecd::ThetaParams::make(v, sig, j.at("beta").get<double>());
    } catch (const json::exception& e) {
        throw ecd::Error(path + ": " + e.what());
    }
}

void write_theta(std::ostream& out, const ecd::ThetaParams& t) { out << theta_to_json(t).dump(2) << '\n'; }

std::string join(const std::vector<std::string>& v, const char* sep = "|") {
    std::string s;
    for (const auto& x : v) s += (s.empty() ? "" : sep) + x;
    return s;
}

// --- sample ----------------------------------------------------------------

struct SampleArgs {
    std::string model = "mggd";
    int m = 5;
    std::size_t n = 1000;
    std::uint64_t seed = 1;
    double rho = 0.5;
    double beta = 1.0;
    std::optional<std::uint64_t> mu_seed;
    std::string out;
    std::string truth_out;
};

void run_sample(const SampleArgs& a) {
    const auto model = ecd::parse_model(a.model);
    const std::uint64_t mu_seed = a.mu_seed.value_or(a.seed);
    const auto theta = ecd::make_true_params(a.m, a.rho, a.beta, mu_seed);
    const ecd::DataMatrix x = ecd::sample({a.n, a.seed, model, theta});
    auto out = open_out(a.out);
    out << ecd::csv::manifest_line({{"command", "sample"},
                                    {"model", std::string(ecd::to_string(model))},
                                    {"m", std::to_string(a.m)},
                                    {"n", std::to_string(a.n)},
                                    {"seed", std::to_string(a.seed)},
                                    {"rho", num(a.rho, 17)},
                                    {"beta", num(a.beta, 17)},
                                    {"mu_seed", std::to_string(mu_seed)}})
        << '\n';
    std::vector<std::string> header;
    for (int j = 0; j < a.m; ++j) header.push_back("x" + std::to_string(j + 1));
    ecd::csv::write_table(out, header, x, 17);
    if (!a.truth_out.empty()) {
        auto t = open_out(a.truth_out);
        write_theta(t, theta);
    }
}

// --- estimate --------------------------------------------------------------

struct EstimateArgs {
    std::string method = "isg";
    std::string model = "mggd";
    std::string scope = "sigma";
    std::string input;
    double a = 0.0;
    std::uint64_t seed = 1;
    std::string out;
    std::string reference;
    std::string init;
    std::optional<double> fixed_beta;
    std::string order = "sequential";
    double step_offset = 0.0;
    std::size_t minibatch = 1;
    std::size_t record_every = 0;
    bool shuffle = false;
    double init_fraction = 0.1;
    double tol = 0.0;
    std::size_t max_iters = 0;
    std::string theta_out;
};

void run_estimate(const EstimateArgs& a) {
    const auto method = ecd::parse_method(a.method);
    const auto model = ecd::parse_model(a.model);
    const ecd::EstimationScope scope(ecd::parse_scope(a.scope));
    const ecd::csv::Table table = ecd::csv::read_table(a.input);
    ecd::DataMatrix x = table.data;
    const auto m = x.cols();
    if (x.rows() <= m) throw ecd::Error("estimate: need more rows than columns in " + a.input);

    std::optional<ecd::Reference> ref;
    if (!a.reference.empty()) {
        const auto t = theta_from_json(a.reference);
        ecd::check_dim(t.dim(), m, "reference");
        ref = ecd::Reference{t, ecd::info_constants(t.beta, static_cast<int>(m), model).weights()};
    }
    std::optional<ecd::ThetaParams> given;
    if (!a.init.empty()) {
        given = theta_from_json(a.init);
        ecd::check_dim(given->dim(), m, "init");
    }

    // Values held fixed outside the scope: the init point, else the reference, else
    // the sample mean and the moment estimate of beta.
    const ecd::SampleMoments mom = ecd::sample_moments(x);
    ecd::ThetaParams fixed(mom.mean, mom.cov, 1.0);
    if (given)
        fixed = *given;
    else if (ref)
        fixed = ref->theta;
    else if (!scope.beta_free()) {
        if (model == ecd::ModelKind::MGGD)
            fixed.beta = ecd::mm_fit(x, model).beta;
        else if (!a.fixed_beta)
            throw ecd::Error("estimate: Student-t with a fixed shape needs --beta, --init or --reference");
    }
    if (a.fixed_beta) fixed.beta = *a.fixed_beta;

    ecd::ThetaParams theta0;
    if (given) {
        theta0 = *given;
        if (a.fixed_beta) theta0.beta = *a.fixed_beta;
    } else {
        const auto rows = std::max<Eigen::Index>(static_cast<Eigen::Index>(a.init_fraction * static_cast<double>(x.rows())), m + 1);
        theta0 = ecd::moment_init(x.topRows(std::min(rows, x.rows())), model, scope, fixed);
    }
    ecd::EstimationScope sc = scope;
    sc.fixed_mu = fixed.mu;
    sc.fixed_beta = fixed.beta;
    theta0 = sc.pin(theta0);

    ecd::EstimateTrace trace;
    double a_used = a.a;
    try {
        switch (method) {
            case ecd::Method::ISG: {
                ecd::IsgConfig c;
                if (a_used <= 0.0) a_used = scope.beta_free() ? 100.0 : 1.0;
                c.a_coeff = a_used;
                c.step_offset = a.step_offset;
                c.order = a.order == "simultaneous" ? ecd::BlockOrder::Simultaneous
                          : a.order == "sequential" ? ecd::BlockOrder::Sequential
                                                    : throw ecd::Error("unknown order '" + a.order + "'");
                c.minibatch = a.minibatch;
                c.record_every = a.record_every;
                c.theta0 = theta0;
                c.scope = sc;
                c.reference = ref;
                if (a.shuffle) {
                    std::vector<Eigen::Index> p(static_cast<std::size_t>(x.rows()));
                    std::iota(p.begin(), p.end(), Eigen::Index{0});
                    ecd::Rng rng(a.seed);
                    std::shuffle(p.begin(), p.end(), rng.engine());
                    ecd::DataMatrix y(x.rows(), m);
                    for (std::size_t i = 0; i < p.size(); ++i) y.row(static_cast<Eigen::Index>(i)) = x.row(p[i]);
                    x = std::move(y);
                }
                trace = ecd::isg_fit(x, c, model);
                break;
            }
            case ecd::Method::IDG: {
                ecd::IdgConfig c;
                if (a.tol > 0.0) c.grad_tol = a.tol;
                if (a.max_iters > 0) c.max_iters = a.max_iters;
                c.theta0 = theta0;
                c.scope = sc;
                c.reference = ref;
                trace = ecd::idg_fit(x, c, model);
                break;
            }
            case ecd::Method::FP: {
                ecd::FpOptions o;
                if (a.tol > 0.0) o.tol = a.tol;
                if (a.max_iters > 0) o.max_iters = a.max_iters;
                o.theta0 = theta0;
                o.reference = ref;
                trace = ecd::fp_fit(x, sc, model, o);
                break;
            }
            case ecd::Method::MM: {
                ecd::detail::Stopwatch clock;
                const ecd::ThetaParams t = sc.pin(ecd::moment_init(x, model, sc, fixed));
                const auto c = ecd::info_constants(t.beta, static_cast<int>(m), model);
                const auto g = ecd::batch_nat_grad(t, x, model, c, sc);
                trace.theta_hat = t;
                trace.iterations = 1;
                trace.records.push_back({1, ecd::detail::distance_to(ref, t),
                                         std::sqrt(ecd::metric_norm_sq(t, g, c.weights())), clock.ns(), t.beta});
                break;
            }
        }
    } catch (const ecd::EstimationFailure& e) {
        std::cerr << "estimate: " << e.what() << "; partial trace written\n";
        trace = e.trace();
        trace.warnings.emplace_back(e.what());
    }

    auto out = open_out(a.out);
    out << ecd::csv::manifest_line({{"command", "estimate"},
                                    {"method", std::string(ecd::to_string(method))},
                                    {"model", std::string(ecd::to_string(model))},
                                    {"scope", std::string(ecd::to_string(scope.kind))},
                                    {"input", a.input},
                                    {"rows", std::to_string(x.rows())},
                                    {"a", num(a_used)},
                                    {"step_offset", num(a.step_offset)},
                                    {"order", a.order},
                                    {"minibatch", std::to_string(a.minibatch)},
                                    {"seed", std::to_string(a.seed)},
                                    {"shuffle", a.shuffle ? "1" : "0"},
                                    {"reference", a.reference.empty() ? "none" : a.reference},
                                    {"init", a.init.empty() ? "moment-prefix" : a.init}})
        << '\n';
    out << "iter,d2_to_ref,grad_norm,elapsed_ns,beta_hat\n";
    for (const auto& r : trace.records)
        out << r.iter << ',' << (r.d2_to_ref ? num(*r.d2_to_ref, 17) : "") << ',' << num(r.grad_norm, 17) << ','
            << r.elapsed_ns << ',' << num(r.beta_hat, 17) << '\n';
    for (const auto& w : trace.warnings) out << "# warning: " << w << '\n';
    if (!a.theta_out.empty()) {
        auto t = open_out(a.theta_out);
        write_theta(t, trace.theta_hat);
    }
}

// --- benches ---------------------------------------------------------------

struct BenchArgs {
    ecd::TrialPlan plan;
    std::string model = "mggd";
    std::string scope = "sigma";
    std::vector<std::string> methods{"isg"};
    std::vector<std::size_t> n_grid;
    std::string order = "sequential";
    std::string init = "near";
    std::string out;
};

void add_bench_flags(CLI::App* sub, BenchArgs& b) {
    auto& p = b.plan;
    sub->add_option("--trials", p.trials, "Monte Carlo trials")->capture_default_str();
    sub->add_option("--m", p.m, "dimension")->capture_default_str();
    sub->add_option("--n", p.n_samples, "samples per trial")->capture_default_str();
    sub->add_option("--n-grid", b.n_grid, "dataset sizes (eff, time)")->delimiter(',');
    sub->add_option("--model", b.model, "mggd or t")->capture_default_str();
    sub->add_option("--scope", b.scope, "sigma, mu-sigma or full")->capture_default_str();
    sub->add_option("--methods", b.methods, "comma-separated subset of mm,fp,idg,isg")->delimiter(',');
    sub->add_option("--seed", p.base_seed, "base seed; trial t uses seed+t")->capture_default_str();
    sub->add_option("--rho-min", p.rho_range.first)->capture_default_str();
    sub->add_option("--rho-max", p.rho_range.second)->capture_default_str();
    sub->add_option("--beta-min", p.beta_range.first)->capture_default_str();
    sub->add_option("--beta-max", p.beta_range.second)->capture_default_str();
    sub->add_option("--a", p.a_coeff, "ISG step coefficient")->capture_default_str();
    sub->add_option("--step-offset", p.step_offset, "ISG step a/(n+1+offset)")->capture_default_str();
    sub->add_option("--order", b.order, "ISG block order: sequential or simultaneous")->capture_default_str();
    sub->add_option("--minibatch", p.minibatch)->capture_default_str();
    sub->add_option("--init", b.init, "near or moment-prefix")->capture_default_str();
    sub->add_option("--init-d2-min", p.init_d2_min)->capture_default_str();
    sub->add_option("--init-d2-max", p.init_d2_max)->capture_default_str();
    sub->add_option("--init-fraction", p.init_fraction)->capture_default_str();
    sub->add_option("--fp-tol", p.fp_tol)->capture_default_str();
    sub->add_option("--fp-max-iters", p.fp_max_iters)->capture_default_str();
    sub->add_option("--idg-tol", p.idg_grad_tol)->capture_default_str();
    sub->add_option("--idg-max-iters", p.idg_max_iters)->capture_default_str();
    sub->add_option("--checkpoints", p.checkpoints_per_decade, "rate checkpoints per decade")->capture_default_str();
    sub->add_option("--threads", p.threads, "0 = hardware concurrency")->capture_default_str();
    sub->add_option("--out", b.out, "output CSV")->required();
}

ecd::TrialPlan finish_plan(const BenchArgs& b) {
    ecd::TrialPlan p = b.plan;
    p.model = ecd::parse_model(b.model);
    p.scope = ecd::parse_scope(b.scope);
    p.methods.clear();
    for (const auto& s : b.methods) p.methods.push_back(ecd::parse_method(s));
    p.n_grid = b.n_grid;
    if (b.order == "sequential")
        p.order = ecd::BlockOrder::Sequential;
    else if (b.order == "simultaneous")
        p.order = ecd::BlockOrder::Simultaneous;
    else
        throw ecd::Error("unknown order '" + b.order + "'");
    p.init = ecd::parse_init(b.init);
    p.validate();
    return p;
}

template <class Result>
void report_errors(const Result& r) {
    for (const auto& e : r.errors) std::cerr << "excluded: " << e << '\n';
}

// --- applications ----------------------------------------------------------

struct TransferArgs {
    std::string input;
    std::string target;
    std::string mode = "3d";
    std::string method = "fp";
    std::uint64_t seed = 1;
    std::string out;
    std::size_t subsample = 0;
    double beta5d = 1.0;
};

void run_transfer(const TransferArgs& a) {
    ecd::TransferConfig c;
    if (a.mode == "3d")
        c.mode = ecd::FeatureMode::Rgb3d;
    else if (a.mode == "5d")
        c.mode = ecd::FeatureMode::LabGrad5d;
    else
        throw ecd::Error("unknown mode '" + a.mode + "' (expected 3d or 5d)");
    c.method = ecd::parse_method(a.method);
    c.beta_5d = a.beta5d;
    c.fit.seed = a.seed;
    c.fit.subsample = a.subsample;
    const auto r = ecd::color_transfer(ecd::load_image(a.input), ecd::load_image(a.target), c);
    ecd::save_image(r.output, a.out);
    std::cerr << "beta_input=" << num(r.theta_input.beta) << " beta_target=" << num(r.theta_target.beta) << '\n';
}

struct TextureArgs {
    std::vector<std::string> inputs;
    std::string method = "fp";
    std::uint64_t seed = 1;
    std::size_t subsample = 0;
    std::string out;
};

void run_texture(const TextureArgs& a) {
    const auto method = ecd::parse_method(a.method);
    ecd::FitConfig fc;
    fc.seed = a.seed;
    fc.subsample = a.subsample;
    ecd::DataMatrix rows(static_cast<Eigen::Index>(a.inputs.size()), 7);
    for (std::size_t i = 0; i < a.inputs.size(); ++i)
        rows.row(static_cast<Eigen::Index>(i)) = ecd::texture_features(ecd::load_image(a.inputs[i]), method, fc).as_vector().transpose();
    auto out = open_out(a.out);
    out << ecd::csv::manifest_line({{"command", "texture-features"},
                                    {"method", std::string(ecd::to_string(method))},
                                    {"seed", std::to_string(a.seed)},
                                    {"subsample", std::to_string(a.subsample)},
                                    {"inputs", join(a.inputs)}})
        << '\n';
    ecd::csv::write_table(out, {"lambda1", "lambda2", "lambda3", "mu_r", "mu_g", "mu_b", "beta"}, rows, 17);
}

void run_pca(const std::string& input, const std::string& out_path) {
    const auto t = ecd::csv::read_table(input);
    const auto r = ecd::pca_project(t.data);
    auto out = open_out(out_path);
    out << ecd::csv::manifest_line({{"command", "pca"}, {"input", input}, {"rows", std::to_string(t.data.rows())},
                                    {"columns", std::to_string(t.data.cols())}, {"centering", "mean"}})
        << '\n';
    ecd::csv::write_table(out, {"pc1", "pc2"}, r.projection, 17);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Elliptical distribution estimation: ISG, IDG, FP and MM estimators, benches and image tools"};
    app.require_subcommand(1);

    SampleArgs sa;
    auto* s = app.add_subcommand("sample", "draw i.i.d. samples from a synthetic model");
    s->add_option("--model", sa.model, "mggd or t")->capture_default_str();
    s->add_option("--m", sa.m, "dimension")->capture_default_str();
    s->add_option("--n", sa.n, "number of samples")->capture_default_str();
    s->add_option("--seed", sa.seed)->capture_default_str();
    s->add_option("--rho", sa.rho, "scatter is rho^|i-j|")->capture_default_str();
    s->add_option("--beta", sa.beta, "shape (MGGD) or degrees of freedom (t)")->capture_default_str();
    s->add_option("--mu-seed", sa.mu_seed, "seed for the random location (default: --seed)");
    s->add_option("--out", sa.out)->required();
    s->add_option("--truth-out", sa.truth_out, "write the true parameters as JSON");

    EstimateArgs ea;
    auto* e = app.add_subcommand("estimate", "fit one dataset and write the iteration trace");
    e->add_option("--method", ea.method, "isg, idg, fp or mm")->capture_default_str();
    e->add_option("--model", ea.model, "mggd or t")->capture_default_str();
    e->add_option("--scope", ea.scope, "sigma, mu-sigma or full")->capture_default_str();
    e->add_option("--input", ea.input, "CSV of samples")->required();
    e->add_option("--a", ea.a, "ISG step coefficient (default 1, or 100 in the full scope)");
    e->add_option("--seed", ea.seed, "seed for --shuffle")->capture_default_str();
    e->add_option("--out", ea.out, "trace CSV")->required();
    e->add_option("--reference", ea.reference, "JSON parameters to measure d2 against");
    e->add_option("--init", ea.init, "JSON starting point (default: moment estimate on a data prefix)");
    e->add_option("--beta", ea.fixed_beta, "shape held fixed outside the full scope");
    e->add_option("--order", ea.order, "ISG block order: sequential or simultaneous")->capture_default_str();
    e->add_option("--step-offset", ea.step_offset)->capture_default_str();
    e->add_option("--minibatch", ea.minibatch)->capture_default_str();
    e->add_option("--record-every", ea.record_every, "ISG trace stride (0: final only)")->capture_default_str();
    e->add_flag("--shuffle", ea.shuffle, "stream rows in a seeded random order");
    e->add_option("--init-fraction", ea.init_fraction)->capture_default_str();
    e->add_option("--tol", ea.tol, "IDG gradient / FP step tolerance");
    e->add_option("--max-iters", ea.max_iters);
    e->add_option("--theta-out", ea.theta_out, "write the estimate as JSON");

    BenchArgs rate, chi2, eff, tim, stat;
    auto* br = app.add_subcommand("bench-rate", "mean-square distance of ISG iterates vs n");
    add_bench_flags(br, rate);
    auto* bc = app.add_subcommand("bench-chi2", "distribution of N d2 of the final ISG iterate");
    add_bench_flags(bc, chi2);
    auto* be = app.add_subcommand("bench-eff", "mean d2 per method and dataset size");
    add_bench_flags(be, eff);
    auto* bt = app.add_subcommand("bench-time", "wall-clock per method and dataset size");
    add_bench_flags(bt, tim);
    stat.scope = "full";
    stat.plan.a_coeff = 100.0;
    auto* bs = app.add_subcommand("bench-stat", "full-scope fits from random starts");
    add_bench_flags(bs, stat);

    TransferArgs ta;
    auto* ct = app.add_subcommand("color-transfer", "move the color distribution of one image onto another");
    ct->add_option("--input", ta.input)->required();
    ct->add_option("--target", ta.target)->required();
    ct->add_option("--mode", ta.mode, "3d or 5d")->capture_default_str();
    ct->add_option("--method", ta.method, "mm, fp, idg or isg")->capture_default_str();
    ct->add_option("--seed", ta.seed)->capture_default_str();
    ct->add_option("--out", ta.out)->required();
    ct->add_option("--subsample", ta.subsample, "random pixels used by the batch methods (0: all)");
    ct->add_option("--beta5d", ta.beta5d, "shape held fixed in 5d mode")->capture_default_str();

    TextureArgs xa;
    auto* tf = app.add_subcommand("texture-features", "7-d descriptor per image: scatter eigenvalues, mean, shape");
    tf->add_option("--input", xa.inputs, "one or more PPM files")->required();
    tf->add_option("--method", xa.method, "fp or isg")->capture_default_str();
    tf->add_option("--seed", xa.seed)->capture_default_str();
    tf->add_option("--subsample", xa.subsample, "random pixels used by fp (0: all)");
    tf->add_option("--out", xa.out)->required();

    std::string pca_in;
    std::string pca_out;
    auto* pc = app.add_subcommand("pca", "project feature rows onto two principal components");
    pc->add_option("--input", pca_in)->required();
    pc->add_option("--out", pca_out)->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (s->parsed()) run_sample(sa);
        if (e->parsed()) run_estimate(ea);
        if (br->parsed()) {
            const auto p = finish_plan(rate);
            const auto r = ecd::bench_rate(p);
            auto out = open_out(rate.out);
            ecd::write_csv(out, p, r);
            report_errors(r);
            std::cerr << "slope=" << num(r.slope) << '\n';
        }
        if (bc->parsed()) {
            const auto p = finish_plan(chi2);
            const auto r = ecd::bench_chi2(p);
            auto out = open_out(chi2.out);
            ecd::write_csv(out, p, r);
            report_errors(r);
            std::cerr << "dof=" << r.dof << " mean=" << num(r.mean) << " ks=" << num(r.ks)
                      << " critical=" << num(r.ks_critical) << '\n';
        }
        if (be->parsed()) {
            const auto p = finish_plan(eff);
            const auto r = ecd::bench_efficiency(p);
            auto out = open_out(eff.out);
            ecd::write_csv(out, p, r);
            report_errors(r);
        }
        if (bt->parsed()) {
            const auto p = finish_plan(tim);
            const auto r = ecd::bench_time(p);
            auto out = open_out(tim.out);
            ecd::write_csv(out, p, r);
            report_errors(r);
        }
        if (bs->parsed()) {
            const auto p = finish_plan(stat);
            const auto r = ecd::bench_stationarity(p);
            auto out = open_out(stat.out);
            ecd::write_csv(out, p, r);
            report_errors(r);
        }
        if (ct->parsed()) run_transfer(ta);
        if (tf->parsed()) run_texture(xa);
        if (pc->parsed()) run_pca(pca_in, pca_out);
    } catch (const std::exception& ex) {
        std::cerr << "error: " << ex.what() << '\n';
        return 1;
    }
    return 0;
}
