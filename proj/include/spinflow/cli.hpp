#pragma once

#include <cinttypes>
#include <cstdio>
#include <filesystem>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "spinflow/coarsegrain.hpp"
#include "spinflow/config.hpp"
#include "spinflow/errors.hpp"
#include "spinflow/io.hpp"
#include "spinflow/ising.hpp"
#include "spinflow/rbm.hpp"
#include "spinflow/rng.hpp"
#include "spinflow/transport.hpp"
#include "spinflow/wishart.hpp"

namespace spinflow::cli {

inline const char* usage_text() {
    return "usage: spinflow <command> [--config <path>] [--out <dir>] [--seed <u64>]"
           " [--section.key=value ...]\n"
           "commands:\n"
           "  ising-sample     Metropolis ensemble of a 2D Ising lattice\n"
           "  ising-exact      exact enumeration table and partition function\n"
           "  rbm-train        CD-k training of an RBM on an ensemble file\n"
           "  rbm-eval         evaluate a saved RBM checkpoint\n"
           "  coarsegrain      block-spin effective Hamiltonian and pushforward\n"
           "  wishart-verify   Wishart cone sampling and closure checks\n"
           "  transport-check  Monge-Ampere residual and Gaussian OT checks\n"
           "  pipeline         Ising -> RBM -> coarse-grain -> transport end to end\n";
}

namespace detail {

struct CommandContext {
    RunConfig config;
    std::filesystem::path out_dir;
    std::uint64_t seed = 0;
    std::vector<std::pair<std::string, std::uint64_t>> artifacts;  // name -> checksum
    std::vector<std::pair<std::string, std::string>> results;

    void write_artifact(const std::string& name, const std::string& content) {
        const auto path = out_dir / name;
        atomic_write_file(path, content);
        artifacts.emplace_back(name, fnv1a64(content));
    }

    void record(const std::string& key, double value) {
        results.emplace_back(key, format_double(value));
    }
    void record(const std::string& key, const std::string& value) {
        results.emplace_back(key, value);
    }
};

struct IsingSetup {
    int rows = 0, cols = 0;
    Boundary boundary = Boundary::free;
    IsingParams params;
};

inline IsingSetup ising_setup(const RunConfig& cfg, const std::string& section = "ising") {
    IsingSetup s;
    const int side = cfg.get_int(section, "L", 3);
    s.rows = cfg.get_int(section, "rows", side);
    s.cols = cfg.get_int(section, "cols", side);
    s.boundary = boundary_from_string(cfg.get_string(section, "boundary", "free"));
    s.params.coupling = cfg.get_double(section, "J", 1.0);
    s.params.inverse_temperature = cfg.get_double(section, "beta", 0.4);
    s.params.validate();
    if (s.rows < 1 || s.cols < 1)
        throw InvalidArgumentError("ising: lattice dimensions must be positive");
    return s;
}

inline std::string history_to_csv(const TrainResult& result) {
    std::ostringstream out;
    out << "epoch," << (result.history_is_exact_kl ? "kl_exact" : "reconstruction_error")
        << "\n";
    for (std::size_t e = 0; e < result.history.size(); ++e)
        out << e + 1 << "," << format_double(result.history[e]) << "\n";
    return out.str();
}

inline std::string exact_table_to_csv(const ExactTable& table) {
    std::ostringstream out;
    out << "config_index,energy,probability\n";
    for (std::size_t idx = 0; idx < table.energy.size(); ++idx)
        out << idx << "," << format_double(table.energy[idx]) << ","
            << format_double(table.probability[idx]) << "\n";
    return out.str();
}

struct Check {
    std::string name;
    double value;
    double threshold;
    bool pass;  // value within threshold, direction depends on the check
};

inline std::string checks_to_csv(std::span<const Check> checks) {
    std::ostringstream out;
    out << "check,value,threshold,pass\n";
    for (const auto& c : checks)
        out << c.name << "," << format_double(c.value) << "," << format_double(c.threshold)
            << "," << (c.pass ? "true" : "false") << "\n";
    return out.str();
}

inline void throw_on_failed_checks(std::span<const Check> checks) {
    std::string failed;
    for (const auto& c : checks)
        if (!c.pass) failed += (failed.empty() ? "" : ", ") + c.name;
    if (!failed.empty()) throw NumericalError("verification checks failed: " + failed);
}

// ---------------------------------------------------------------------------

inline void run_ising_sample(CommandContext& ctx) {
    const IsingSetup s = ising_setup(ctx.config);
    if (s.rows != s.cols)
        throw InvalidArgumentError("ising-sample: ensemble files require a square lattice");
    const int n_samples = ctx.config.get_int("ising", "n_samples", 1000);
    const int sweeps_between = ctx.config.get_int("ising", "sweeps_between", 1);
    const int burn_in = ctx.config.get_int("ising", "burn_in", 1000);
    const std::uint64_t stream_seed = derive_seed(ctx.seed, "ising");

    const auto samples = sample_ensemble(s.rows, s.cols, s.boundary, s.params, n_samples,
                                         sweeps_between, burn_in, stream_seed);
    ctx.write_artifact("ensemble.txt",
                       ensemble_to_string(samples, s.rows, s.boundary, s.params, stream_seed));

    if (!samples.empty()) {
        const EnsembleStats stats = ensemble_stats(samples, s.params);
        const std::vector<std::pair<std::string, double>> metrics{
            {"mean_energy_per_site", stats.mean_energy_per_site},
            {"mean_abs_magnetization", stats.mean_abs_magnetization}};
        ctx.write_artifact("ensemble_stats.csv", metrics_to_csv(metrics));
        ctx.record("mean_energy_per_site", stats.mean_energy_per_site);
        ctx.record("mean_abs_magnetization", stats.mean_abs_magnetization);
    }
}

inline void run_ising_exact(CommandContext& ctx) {
    const IsingSetup s = ising_setup(ctx.config);
    const ExactTable table = exact_enumerate(s.rows, s.cols, s.boundary, s.params);
    ctx.write_artifact("exact_table.csv", exact_table_to_csv(table));
    ctx.record("z", table.partition_z);
    ctx.record("log_z", table.log_z);
}

inline TrainConfig train_config_from(const RunConfig& cfg, const std::string& section,
                                     std::uint64_t stream_seed) {
    TrainConfig tc;
    tc.cd_steps = cfg.get_int(section, "cd_steps", 5);
    tc.learning_rate = cfg.get_double(section, "learning_rate", 0.05);
    tc.epochs = cfg.get_int(section, "epochs", 100);
    tc.batch_size = cfg.get_int(section, "batch_size", 64);
    tc.seed = stream_seed;
    tc.validate();
    return tc;
}

inline void run_rbm_train(CommandContext& ctx) {
    if (!ctx.config.has("rbm", "data"))
        throw InvalidArgumentError("rbm-train: config key [rbm] data (ensemble file) is required");
    const EnsembleFile ensemble = read_ensemble(ctx.config.get("rbm", "data"));
    if (ensemble.samples.empty()) throw InvalidArgumentError("rbm-train: ensemble file is empty");

    std::vector<Eigen::VectorXd> dataset;
    dataset.reserve(ensemble.samples.size());
    for (const auto& lat : ensemble.samples) dataset.push_back(visible_from_lattice(lat));

    const int n_hidden = ctx.config.get_int("rbm", "n_hidden", 4);
    const double weight_sigma = ctx.config.get_double("rbm", "weight_sigma", 0.01);
    Rng init_rng = Rng::for_stream(ctx.seed, "rbm-init");
    const RbmModel model0 = RbmModel::init(static_cast<int>(dataset.front().size()), n_hidden,
                                           init_rng, weight_sigma);
    const TrainConfig tc = train_config_from(ctx.config, "rbm", derive_seed(ctx.seed, "rbm-train"));

    const TrainResult result = train(dataset, model0, tc);
    ctx.write_artifact("rbm_model.json", checkpoint_to_string(result.model, tc));
    ctx.write_artifact("train_history.csv", history_to_csv(result));
    if (!result.history.empty()) {
        ctx.record("history_first", result.history.front());
        ctx.record("history_final", result.history.back());
        ctx.record("history_metric",
                   std::string(result.history_is_exact_kl ? "kl_exact" : "reconstruction_error"));
    }
}

inline void run_rbm_eval(CommandContext& ctx) {
    if (!ctx.config.has("rbm", "checkpoint"))
        throw InvalidArgumentError("rbm-eval: config key [rbm] checkpoint is required");
    const auto [model, train_cfg] = load_checkpoint(ctx.config.get("rbm", "checkpoint"));
    std::vector<std::pair<std::string, double>> metrics;

    if (model.n_visible() <= 12 && model.n_hidden() <= 12) {
        const IsingSetup s = ising_setup(ctx.config);
        if (s.rows * s.cols == model.n_visible()) {
            const ExactTable table = exact_enumerate(s.rows, s.cols, s.boundary, s.params);
            Eigen::VectorXd data_dist(static_cast<Eigen::Index>(table.probability.size()));
            for (std::size_t i = 0; i < table.probability.size(); ++i)
                data_dist[static_cast<Eigen::Index>(i)] = table.probability[i];
            metrics.emplace_back("exact_kl_vs_ising", kl_exact(data_dist, model));
        }
    }

    if (ctx.config.has("rbm", "data")) {
        const EnsembleFile ensemble = read_ensemble(ctx.config.get("rbm", "data"));
        if (ensemble.samples.empty()) throw InvalidArgumentError("rbm-eval: ensemble file is empty");
        std::vector<Eigen::VectorXd> dataset;
        for (const auto& lat : ensemble.samples) dataset.push_back(visible_from_lattice(lat));
        metrics.emplace_back("reconstruction_error", reconstruction_error(dataset, model));
        double mean_f = 0.0;
        for (const auto& v : dataset) mean_f += free_energy(v, model);
        metrics.emplace_back("mean_free_energy", mean_f / static_cast<double>(dataset.size()));
    }

    if (metrics.empty())
        throw InvalidArgumentError(
            "rbm-eval: nothing to evaluate (model too large for exact KL and no [rbm] data)");
    ctx.write_artifact("rbm_eval.csv", metrics_to_csv(metrics));
    for (const auto& [k, v] : metrics) ctx.record(k, v);
}

inline void run_coarsegrain(CommandContext& ctx) {
    const IsingSetup s = ising_setup(ctx.config);
    if (s.rows != s.cols) throw InvalidArgumentError("coarsegrain: lattice must be square");
    BlockMap map;
    map.micro_side = s.rows;
    map.block_side = ctx.config.get_int("coarsegrain", "block_side", 2);
    map.tie_rule = tie_rule_from_string(
        ctx.config.get_string("coarsegrain", "tie_rule", "plus_one"));
    map.validate();

    const EffectiveTable table = effective_hamiltonian(s.rows, s.boundary, s.params, map);
    const ExactTable exact = exact_enumerate(s.rows, s.cols, s.boundary, s.params);
    const auto nu = pushforward_measure(exact.probability, map);

    double multiplicity_total = 0.0;
    double pushforward_dev = 0.0;
    for (std::size_t y = 0; y < table.entries.size(); ++y) {
        multiplicity_total += static_cast<double>(table.entries[y].multiplicity);
        pushforward_dev = std::max(
            pushforward_dev,
            std::abs(nu[y] - std::exp(-table.entries[y].h_eff) / exact.partition_z));
    }
    const double z_rel_error = std::abs(table.z_eff - exact.partition_z) / exact.partition_z;

    ctx.write_artifact("effective_table.csv", effective_table_to_csv(table));
    const std::vector<std::pair<std::string, double>> metrics{
        {"z_eff", table.z_eff},
        {"z_exact", exact.partition_z},
        {"z_rel_error", z_rel_error},
        {"multiplicity_total", multiplicity_total},
        {"pushforward_max_abs_dev", pushforward_dev},
        {"macro_states", static_cast<double>(table.entries.size())}};
    ctx.write_artifact("coarsegrain_summary.csv", metrics_to_csv(metrics));
    ctx.record("z_rel_error", z_rel_error);
    ctx.record("pushforward_max_abs_dev", pushforward_dev);
}

inline void run_wishart_verify(CommandContext& ctx) {
    const int n = ctx.config.get_int("wishart", "n", 3);
    const int m = ctx.config.get_int("wishart", "m", 5);
    const int count = ctx.config.get_int("wishart", "count", 100000);
    const int pairs = ctx.config.get_int("wishart", "pairs", 10000);
    const int closure_cases = ctx.config.get_int("wishart", "closure_cases", 1000);
    const int export_count = ctx.config.get_int("wishart", "export_count", 50);
    if (n < 1 || m < 1 || count < 1)
        throw InvalidArgumentError("wishart-verify: n, m, count must be positive");

    const std::uint64_t sample_seed = derive_seed(ctx.seed, "wishart-sample");
    const auto samples = sample_wishart(n, m, count, sample_seed);

    Eigen::MatrixXd mean = Eigen::MatrixXd::Zero(n, n);
    int psd_violations = 0, rank_violations = 0;
    for (const auto& s : samples) {
        mean += s.sigma;
        const ConeDiagnostics diag = cone_membership(s.sigma, n, m);
        if (diag.min_eigenvalue < -kPsdTolerance) ++psd_violations;
        if (diag.rank > std::min(n, m)) ++rank_violations;
    }
    mean /= static_cast<double>(count);
    const double mean_dev =
        (mean - static_cast<double>(m) * Eigen::MatrixXd::Identity(n, n)).cwiseAbs().maxCoeff();

    Rng closure_rng = Rng::for_stream(ctx.seed, "wishart-closure");
    int closure_violations = 0;
    for (int rep = 0; rep < closure_cases; ++rep) {
        const CovarianceSample a = covariance(random_generator(n, m, closure_rng));
        const CovarianceSample b = covariance(random_generator(n, m, closure_rng));
        const double lambda = 0.1 + 5.0 * closure_rng.uniform01();
        const CovarianceSample combined = cone_add(cone_scale(a, lambda), b);
        if (!cone_membership(combined.sigma, n, combined.rank_bound).member) ++closure_violations;
    }

    Rng pair_rng = Rng::for_stream(ctx.seed, "wishart-pairs");
    std::vector<std::pair<CovarianceSample, CovarianceSample>> duality_pairs;
    duality_pairs.reserve(static_cast<std::size_t>(pairs));
    for (int rep = 0; rep < pairs; ++rep)
        duality_pairs.emplace_back(covariance(random_generator(n, m, pair_rng)),
                                   covariance(random_generator(n, m, pair_rng)));
    const TraceDualityReport duality = trace_duality_check(duality_pairs);

    const std::vector<Check> checks{
        {"mean_max_abs_dev_from_mI", mean_dev, 0.05, mean_dev <= 0.05},
        {"psd_violations", static_cast<double>(psd_violations), 0.0, psd_violations == 0},
        {"rank_violations", static_cast<double>(rank_violations), 0.0, rank_violations == 0},
        {"closure_violations", static_cast<double>(closure_violations), 0.0,
         closure_violations == 0},
        {"min_trace_inner_product", duality.min_inner_product, -kPsdTolerance, duality.pass}};

    const int exported = std::min<int>(export_count, count);
    ctx.write_artifact("wishart_samples.csv",
                       wishart_samples_to_csv(std::span(samples.data(),
                                                        static_cast<std::size_t>(exported)),
                                              n, m, sample_seed));
    ctx.write_artifact("wishart_checks.csv", checks_to_csv(checks));
    for (const auto& c : checks) ctx.record(c.name, c.value);
    throw_on_failed_checks(checks);
}

inline void run_transport_check(CommandContext& ctx) {
    const double fd_step = ctx.config.get_double("transport", "fd_step", 1e-3);
    std::vector<Check> checks;

    // 1D doubling map N(0,1) -> N(0,4), analytic Jacobian.
    Eigen::MatrixXd cov4(1, 1);
    cov4 << 4.0;
    const Density rho0_1d{GaussianDensity::standard(1)};
    const Density rho1_1d{GaussianDensity(Eigen::VectorXd::Zero(1), cov4)};
    Eigen::MatrixXd two(1, 1);
    two << 2.0;
    std::vector<Eigen::VectorXd> points_1d;
    for (int i = 0; i <= 200; ++i) {
        Eigen::VectorXd p(1);
        p << -4.0 + 8.0 * i / 200.0;
        points_1d.push_back(std::move(p));
    }
    const ResidualReport r1d =
        ma_residual_map(rho0_1d, rho1_1d, MapSpec{LinearMap{two}, 0.0}, points_1d);
    checks.push_back({"residual_1d_doubling_max_abs", r1d.max_abs, 1e-10, r1d.max_abs <= 1e-10});
    ctx.write_artifact("residual_1d.csv", residual_report_to_csv(r1d));

    // 2D Gaussian OT map with numeric Jacobian.
    Rng rng = Rng::for_stream(ctx.seed, "transport");
    Eigen::MatrixXd b(2, 2);
    for (int i = 0; i < 2; ++i)
        for (int j = 0; j < 2; ++j) b(i, j) = rng.normal();
    const Eigen::MatrixXd sigma1 = b * b.transpose() + 0.2 * Eigen::MatrixXd::Identity(2, 2);
    const Eigen::MatrixXd a = gaussian_ot_map(Eigen::MatrixXd::Identity(2, 2), sigma1);
    const Density rho0_2d{GaussianDensity::standard(2)};
    const Density rho1_2d{GaussianDensity(Eigen::VectorXd::Zero(2), sigma1)};
    std::vector<Eigen::VectorXd> points_2d;
    for (double x = -2.0; x <= 2.0; x += 0.25)
        for (double y = -2.0; y <= 2.0; y += 0.25) {
            Eigen::VectorXd p(2);
            p << x, y;
            points_2d.push_back(std::move(p));
        }
    const ResidualReport r2d =
        ma_residual_map(rho0_2d, rho1_2d, MapSpec{LinearMap{a}, fd_step}, points_2d);
    checks.push_back({"residual_2d_ot_max_abs", r2d.max_abs, 1e-5, r2d.max_abs <= 1e-5});
    ctx.write_artifact("residual_2d.csv", residual_report_to_csv(r2d));

    // Quadratic refinement of the sampled-map residual under h -> h/2.
    auto tanh_fixture = [](double h) {
        auto t_map = [](double x) { return x + std::tanh(x); };
        auto t_prime = [](double x) {
            const double c = std::cosh(x);
            return 1.0 + 1.0 / (c * c);
        };
        const int count = 2 * static_cast<int>(std::round(7.0 / h)) + 1;
        const GridAxis axis{-7.0, h, count};
        const DensityGrid rho0 = DensityGrid::from_function(
            axis, [&](double x) { return std::exp(-0.5 * t_map(x) * t_map(x)) /
                                         std::sqrt(2.0 * kPi) * t_prime(x); },
            false);
        std::vector<Eigen::VectorXd> nodes;
        for (int i = 1; i + 1 < count; ++i) {
            Eigen::VectorXd p(1);
            p << axis.node(i);
            nodes.push_back(std::move(p));
        }
        return ma_residual_map(Density{rho0}, Density{GaussianDensity::standard(1)},
                               MapSpec{GridMap::from_function(axis, t_map), 0.0}, nodes)
            .max_abs;
    };
    const double coarse = tanh_fixture(1e-2);
    const double fine = tanh_fixture(5e-3);
    const double ratio = fine / coarse;
    checks.push_back({"refinement_ratio_h_half", ratio, 0.3, ratio <= 0.3});

    // Gaussian OT utilities.
    const double w2_14 = w2_gaussian(Eigen::MatrixXd::Identity(1, 1), cov4);
    checks.push_back({"w2_var1_var4_abs_err", std::abs(w2_14 - 1.0), 1e-10,
                      std::abs(w2_14 - 1.0) <= 1e-10});
    double push_dev = 0.0, sym_dev = 0.0;
    for (int rep = 0; rep < 10; ++rep) {
        const int d = 2 + static_cast<int>(rng.below(3));
        Eigen::MatrixXd c(d, d);
        for (int i = 0; i < d; ++i)
            for (int j = 0; j < d; ++j) c(i, j) = rng.normal();
        const Eigen::MatrixXd s0 = c * c.transpose() + 0.2 * Eigen::MatrixXd::Identity(d, d);
        for (int i = 0; i < d; ++i)
            for (int j = 0; j < d; ++j) c(i, j) = rng.normal();
        const Eigen::MatrixXd s1 = c * c.transpose() + 0.2 * Eigen::MatrixXd::Identity(d, d);
        const Eigen::MatrixXd ot = gaussian_ot_map(s0, s1);
        push_dev = std::max(push_dev, (ot * s0 * ot.transpose() - s1).cwiseAbs().maxCoeff());
        sym_dev = std::max(sym_dev, std::abs(w2_gaussian(s0, s1) - w2_gaussian(s1, s0)));
    }
    checks.push_back({"ot_map_push_max_abs_dev", push_dev, 1e-10, push_dev <= 1e-10});
    checks.push_back({"w2_symmetry_max_abs_dev", sym_dev, 1e-10, sym_dev <= 1e-10});

    ctx.write_artifact("transport_checks.csv", checks_to_csv(checks));
    for (const auto& c : checks) ctx.record(c.name, c.value);
    throw_on_failed_checks(checks);
}

inline void run_pipeline(CommandContext& ctx) {
    const RunConfig& cfg = ctx.config;
    const int side = cfg.get_int("pipeline", "L", 4);
    const Boundary boundary =
        boundary_from_string(cfg.get_string("pipeline", "boundary", "free"));
    IsingParams params;
    params.coupling = cfg.get_double("pipeline", "J", 1.0);
    params.inverse_temperature = cfg.get_double("pipeline", "beta", 0.6);
    params.validate();
    const int n_samples = cfg.get_int("pipeline", "n_samples", 2000);
    const int sweeps_between = cfg.get_int("pipeline", "sweeps_between", 2);
    const int burn_in = cfg.get_int("pipeline", "burn_in", 2000);

    // Stage 1: visible data from the Ising sampler.
    const std::uint64_t ising_seed = derive_seed(ctx.seed, "pipeline-ising");
    const auto samples = sample_ensemble(side, side, boundary, params, n_samples, sweeps_between,
                                         burn_in, ising_seed);
    if (samples.empty()) throw InvalidArgumentError("pipeline: n_samples must be positive");
    ctx.write_artifact("ensemble.txt",
                       ensemble_to_string(samples, side, boundary, params, ising_seed));

    // Stage 2: RBM training on the ensemble.
    std::vector<Eigen::VectorXd> dataset;
    dataset.reserve(samples.size());
    for (const auto& lat : samples) dataset.push_back(visible_from_lattice(lat));
    const int n_hidden = cfg.get_int("pipeline", "n_hidden", 4);
    Rng init_rng = Rng::for_stream(ctx.seed, "pipeline-init");
    const RbmModel model0 = RbmModel::init(side * side, n_hidden, init_rng,
                                           cfg.get_double("pipeline", "weight_sigma", 0.01));
    TrainConfig tc;
    tc.cd_steps = cfg.get_int("pipeline", "cd_steps", 5);
    tc.learning_rate = cfg.get_double("pipeline", "learning_rate", 0.05);
    tc.epochs = cfg.get_int("pipeline", "epochs", 60);
    tc.batch_size = cfg.get_int("pipeline", "batch_size", 50);
    tc.seed = derive_seed(ctx.seed, "pipeline-train");
    tc.validate();
    const TrainResult trained = train(dataset, model0, tc);
    ctx.write_artifact("rbm_model.json", checkpoint_to_string(trained.model, tc));
    ctx.write_artifact("train_history.csv", history_to_csv(trained));

    // Stage 3: coarse-graining metrics against permutation nulls.
    BlockMap map;
    map.micro_side = side;
    map.block_side = cfg.get_int("pipeline", "block_side", 2);
    map.tie_rule = tie_rule_from_string(cfg.get_string("pipeline", "tie_rule", "plus_one"));
    map.validate();
    const int shuffles = cfg.get_int("pipeline", "shuffles", 200);
    const double locality = rbm_weight_locality(trained.model, map);
    const double agreement = hidden_block_agreement(trained.model, map, samples);
    Rng null_rng = Rng::for_stream(ctx.seed, "pipeline-null");
    const double locality_null95 =
        quantile(locality_permutation_null(trained.model, map, shuffles, null_rng), 0.95);
    const double agreement_null95 = quantile(
        agreement_permutation_null(trained.model, map, samples, shuffles, null_rng), 0.95);

    std::vector<std::pair<std::string, double>> coarse_metrics{
        {"weight_locality", locality},
        {"locality_null_95", locality_null95},
        {"locality_exceeds_null", locality > locality_null95 ? 1.0 : 0.0},
        {"hidden_block_agreement", agreement},
        {"agreement_null_95", agreement_null95},
        {"agreement_exceeds_null", agreement > agreement_null95 ? 1.0 : 0.0}};

    if (side * side <= kEnumerationSiteLimit) {
        const EffectiveTable table = effective_hamiltonian(side, boundary, params, map);
        const ExactTable exact = exact_enumerate(side, side, boundary, params);
        ctx.write_artifact("effective_table.csv", effective_table_to_csv(table));
        coarse_metrics.emplace_back(
            "z_rel_error", std::abs(table.z_eff - exact.partition_z) / exact.partition_z);
    }
    ctx.write_artifact("coarse_metrics.csv", metrics_to_csv(coarse_metrics));
    for (const auto& [k, v] : coarse_metrics) ctx.record(k, v);

    // Stage 4: latent -> data transport check on the magnetization statistic.
    std::vector<double> magnetization;
    magnetization.reserve(samples.size());
    for (const auto& lat : samples)
        magnetization.push_back(static_cast<double>(lat.magnetization()) /
                                static_cast<double>(lat.site_count()));
    const double bandwidth = cfg.get_double("pipeline", "bandwidth", 0.0);
    const int resolution = cfg.get_int("pipeline", "resolution", 1024);
    const LatentToDataReport transport_report =
        latent_to_data_check(magnetization, bandwidth, resolution);
    ctx.write_artifact("transport_report.csv",
                       residual_report_to_csv(transport_report.residuals));

    const std::vector<std::pair<std::string, double>> transport_metrics{
        {"w2_latent_to_magnetization", transport_report.w2},
        {"kde_bandwidth", transport_report.bandwidth},
        {"residual_max_abs", transport_report.residuals.max_abs},
        {"residual_mean_abs", transport_report.residuals.mean_abs}};
    ctx.write_artifact("pipeline_summary.csv", metrics_to_csv(transport_metrics));
    for (const auto& [k, v] : transport_metrics) ctx.record(k, v);
}

inline void emit_error(int code, const char* kind, const std::string& msg) {
    std::fprintf(stderr, "error: code=%d kind=%s msg=%s\n", code, kind, msg.c_str());
}

}  // namespace detail

// Runs one command, writing its artifacts and manifest under out_dir.
// Exit codes: 0 success, 2 invalid config/command, 3 size limit, 4 numerical
// failure.
inline int run_command(const std::string& command, RunConfig config,
                       const std::filesystem::path& out_dir) {
    using namespace detail;
    try {
        CommandContext ctx{std::move(config), out_dir, 0, {}, {}};
        ctx.seed = ctx.config.get_u64("run", "seed", 42);
        ctx.config.set("run", "seed", std::to_string(ctx.seed));
        ctx.config.set("", "command", command);

        std::error_code ec;
        std::filesystem::create_directories(out_dir, ec);
        if (ec) throw IoError("cannot create output directory " + out_dir.string());

        if (command == "ising-sample") run_ising_sample(ctx);
        else if (command == "ising-exact") run_ising_exact(ctx);
        else if (command == "rbm-train") run_rbm_train(ctx);
        else if (command == "rbm-eval") run_rbm_eval(ctx);
        else if (command == "coarsegrain") run_coarsegrain(ctx);
        else if (command == "wishart-verify") run_wishart_verify(ctx);
        else if (command == "transport-check") run_transport_check(ctx);
        else if (command == "pipeline") run_pipeline(ctx);
        else {
            emit_error(2, "unknown-command", "unknown command '" + command + "'");
            std::fputs(usage_text(), stderr);
            return 2;
        }

        RunConfig manifest = ctx.config;
        for (const auto& [name, checksum] : ctx.artifacts) {
            char hex[20];
            std::snprintf(hex, sizeof(hex), "%016" PRIx64, checksum);
            manifest.set("artifacts", name, hex);
        }
        for (const auto& [key, value] : ctx.results) manifest.set("results", key, value);
        atomic_write_file(out_dir / "manifest.txt", manifest.serialize());
        return 0;
    } catch (const SizeLimitError& e) {
        emit_error(3, "size-limit", e.what());
        return 3;
    } catch (const NumericalError& e) {
        emit_error(4, "numerical", e.what());
        return 4;
    } catch (const Error& e) {
        emit_error(2, "invalid-config", e.what());
        return 2;
    }
}

}  // namespace spinflow::cli
