// Acceptance suite: one pass/fail line per criterion, all tolerances pinned.
// Exit code is the number of failed criteria.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "spinflow/cli.hpp"
#include "spinflow/coarsegrain.hpp"
#include "spinflow/config.hpp"
#include "spinflow/io.hpp"
#include "spinflow/ising.hpp"
#include "spinflow/rbm.hpp"
#include "spinflow/rng.hpp"
#include "spinflow/transport.hpp"
#include "spinflow/wishart.hpp"

using namespace spinflow;
namespace fs = std::filesystem;

namespace {

struct Outcome {
    bool pass = true;
    std::string detail;

    void require(bool ok, const std::string& what) {
        if (!ok) {
            pass = false;
            detail += (detail.empty() ? "" : "; ") + what;
        }
    }
    void note(const std::string& what) { detail += (detail.empty() ? "" : "; ") + what; }
};

std::vector<Eigen::VectorXd> sample_from_exact_table(const ExactTable& table, int count,
                                                     Rng& rng) {
    std::vector<double> cdf(table.probability.size());
    double acc = 0.0;
    for (std::size_t i = 0; i < cdf.size(); ++i) {
        acc += table.probability[i];
        cdf[i] = acc;
    }
    std::vector<Eigen::VectorXd> out;
    out.reserve(static_cast<std::size_t>(count));
    for (int k = 0; k < count; ++k) {
        const auto it = std::lower_bound(cdf.begin(), cdf.end(), rng.uniform01());
        out.push_back(visible_from_index(static_cast<std::uint32_t>(it - cdf.begin()),
                                         table.site_count()));
    }
    return out;
}

std::string fmt(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.3g", v);
    return buf;
}

// 1. Metropolis sampler vs exact enumeration, 3x3 free, J=1, beta=0.4,
//    1e6 sweeps, fixed seed, total variation <= 0.02.
Outcome criterion_1() {
    Outcome out;
    const IsingParams params{1.0, 0.4};
    const ExactTable table = exact_enumerate(3, Boundary::free, params);
    const auto samples = sample_ensemble(3, Boundary::free, params, 1000000, 1, 10000, 2024u);
    const double tv = total_variation(empirical_distribution(samples), table.probability);
    out.require(tv <= 0.02, "TV " + fmt(tv) + " > 0.02");
    out.note("TV=" + fmt(tv));
    return out;
}

// 2. Free-energy identity against the hidden-sum form over 100 random models.
Outcome criterion_2() {
    Outcome out;
    Rng rng = Rng::for_stream(7, "acceptance-c2");
    double worst = 0.0;
    for (int rep = 0; rep < 100; ++rep) {
        const int n_v = 1 + static_cast<int>(rng.below(6));
        const int n_h = 1 + static_cast<int>(rng.below(6));
        RbmModel m = RbmModel::zeros(n_v, n_h);
        for (int i = 0; i < n_v; ++i)
            for (int j = 0; j < n_h; ++j) m.weights(i, j) = rng.normal();
        for (int i = 0; i < n_v; ++i) m.visible_bias[i] = 0.5 * rng.normal();
        for (int j = 0; j < n_h; ++j) m.hidden_bias[j] = 0.5 * rng.normal();

        for (std::uint32_t idx = 0; idx < (1u << n_v); ++idx) {
            const Eigen::VectorXd v = visible_from_index(idx, n_v);
            double hidden_sum = 0.0;
            for (std::uint32_t mask = 0; mask < (1u << n_h); ++mask) {
                Eigen::VectorXd h(n_h);
                for (int j = 0; j < n_h; ++j) h[j] = (mask >> j) & 1u ? 1.0 : 0.0;
                hidden_sum += std::exp(-energy(v, h, m));
            }
            const double f = free_energy(v, m);
            const double rel = std::abs(f + std::log(hidden_sum)) / (1.0 + std::abs(f));
            worst = std::max(worst, rel);
        }
    }
    out.require(worst <= 1e-10, "relative error " + fmt(worst) + " > 1e-10");
    out.note("max_rel=" + fmt(worst));
    return out;
}

// 3. RBM learning on the exact 3x3 Ising law (beta=0.4), n_h=4, CD-5,
//    200 epochs: final exact KL <= 0.5 x initial exact KL.
Outcome criterion_3() {
    Outcome out;
    const IsingParams params{1.0, 0.4};
    const ExactTable table = exact_enumerate(3, Boundary::free, params);
    Eigen::VectorXd exact_dist(static_cast<Eigen::Index>(table.probability.size()));
    for (std::size_t i = 0; i < table.probability.size(); ++i)
        exact_dist[static_cast<Eigen::Index>(i)] = table.probability[i];

    Rng data_rng = Rng::for_stream(99, "acceptance-c3-data");
    const auto dataset = sample_from_exact_table(table, 8192, data_rng);
    Rng init_rng = Rng::for_stream(99, "acceptance-c3-init");
    const RbmModel model0 = RbmModel::init(9, 4, init_rng);
    const double kl_initial = kl_exact(exact_dist, model0);

    const TrainConfig config{5, 0.05, 200, 50, derive_seed(99, "acceptance-c3-train")};
    const TrainResult trained = train(dataset, model0, config);
    const double kl_final = kl_exact(exact_dist, trained.model);

    out.require(kl_final <= 0.5 * kl_initial,
                "final KL " + fmt(kl_final) + " > 0.5 x " + fmt(kl_initial));
    out.note("KL " + fmt(kl_initial) + " -> " + fmt(kl_final));
    return out;
}

// 4. CD-50 gradient vs exact log-likelihood gradient on 20 random 3x2
//    models: cosine similarity > 0.9 in at least 18 cases.
Outcome criterion_4() {
    Outcome out;
    int passes = 0;
    double worst = 1.0;
    for (int seed = 0; seed < 20; ++seed) {
        Rng rng = Rng::for_stream(1000 + static_cast<std::uint64_t>(seed), "acceptance-c4");
        RbmModel m = RbmModel::zeros(3, 2);
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 2; ++j) m.weights(i, j) = 0.8 * rng.normal();
        for (int i = 0; i < 3; ++i) m.visible_bias[i] = 0.3 * rng.normal();
        for (int j = 0; j < 2; ++j) m.hidden_bias[j] = 0.3 * rng.normal();

        std::vector<Eigen::VectorXd> batch;
        for (int k = 0; k < 256; ++k) {
            Eigen::VectorXd v(3);
            for (int i = 0; i < 3; ++i) v[i] = rng.spin();
            batch.push_back(std::move(v));
        }
        const CdGradient cd = cd_k_gradient(batch, m, 50, rng);
        const CdGradient exact = exact_gradient(batch, m);
        const double cs = cd.dot(exact) / (cd.norm() * exact.norm());
        worst = std::min(worst, cs);
        if (cs > 0.9) ++passes;
    }
    out.require(passes >= 18, std::to_string(passes) + "/20 above 0.9");
    out.note(std::to_string(passes) + "/20, worst cosine " + fmt(worst));
    return out;
}

// 5. Wilson-RG consistency on 4x4 free, beta=0.4, 2x2 blocks.
Outcome criterion_5() {
    Outcome out;
    const IsingParams params{1.0, 0.4};
    const BlockMap map{4, 2, TieRule::plus_one};
    const EffectiveTable table = effective_hamiltonian(4, Boundary::free, params, map);
    const ExactTable exact = exact_enumerate(4, Boundary::free, params);

    const double z_rel = std::abs(table.z_eff - exact.partition_z) / exact.partition_z;
    out.require(z_rel <= 1e-9, "partition mismatch " + fmt(z_rel) + " > 1e-9");

    std::uint64_t total_multiplicity = 0;
    for (const auto& e : table.entries) total_multiplicity += e.multiplicity;
    out.require(total_multiplicity == 65536,
                "multiplicities sum to " + std::to_string(total_multiplicity));

    const auto nu = pushforward_measure(exact.probability, map);
    double nu_dev = 0.0;
    for (std::size_t y = 0; y < nu.size(); ++y)
        nu_dev = std::max(nu_dev,
                          std::abs(nu[y] - std::exp(-table.entries[y].h_eff) / exact.partition_z));
    out.require(nu_dev <= 1e-9, "pushforward deviation " + fmt(nu_dev) + " > 1e-9");
    out.note("z_rel=" + fmt(z_rel) + ", nu_dev=" + fmt(nu_dev));
    return out;
}

// 6. Entropy law S(y) = ln m(y) for all macro states of criterion 5, and the
//    single-block 2x2 multiplicities (11, 5) under tie rule plus_one.
Outcome criterion_6() {
    Outcome out;
    const IsingParams params{1.0, 0.4};
    const BlockMap map{4, 2, TieRule::plus_one};
    const EffectiveTable table = effective_hamiltonian(4, Boundary::free, params, map);
    bool entropy_exact = true;
    for (const auto& e : table.entries)
        entropy_exact = entropy_exact && e.entropy == std::log(static_cast<double>(e.multiplicity));
    out.require(entropy_exact, "S(y) != ln m(y) for some macro state");

    const BlockMap single{2, 2, TieRule::plus_one};
    SpinLattice plus(1, 1, Boundary::free);
    SpinLattice minus(1, 1, Boundary::free);
    minus.set_spin(0, -1);
    const auto [m_plus, s_plus] = multiplicity_entropy(single, plus);
    const auto [m_minus, s_minus] = multiplicity_entropy(single, minus);
    out.require(m_plus == 11 && m_minus == 5,
                "2x2 block multiplicities (" + std::to_string(m_plus) + ", " +
                    std::to_string(m_minus) + ") != (11, 5)");
    out.require(s_plus == std::log(11.0) && s_minus == std::log(5.0), "block entropies off");
    out.note("m=(11,5) verified");
    return out;
}

// 7. Wishart cone suite: n=3, m=5, 1e5 samples.
Outcome criterion_7() {
    Outcome out;
    const int n = 3, m = 5;
    const auto samples = sample_wishart(n, m, 100000, derive_seed(4242, "acceptance-c7"));

    Eigen::MatrixXd mean = Eigen::MatrixXd::Zero(n, n);
    int psd_bad = 0, rank_bad = 0;
    for (const auto& s : samples) {
        mean += s.sigma;
        const ConeDiagnostics diag = cone_membership(s.sigma, n, m);
        if (diag.min_eigenvalue < -1e-10) ++psd_bad;
        if (diag.rank > 3) ++rank_bad;
    }
    mean /= static_cast<double>(samples.size());
    const double mean_dev = (mean - 5.0 * Eigen::MatrixXd::Identity(n, n)).cwiseAbs().maxCoeff();
    out.require(mean_dev <= 0.05, "mean deviation " + fmt(mean_dev) + " > 0.05");
    out.require(psd_bad == 0, std::to_string(psd_bad) + " PSD violations");
    out.require(rank_bad == 0, std::to_string(rank_bad) + " rank violations");

    Rng closure_rng = Rng::for_stream(4242, "acceptance-c7-closure");
    int closure_bad = 0;
    for (int rep = 0; rep < 1000; ++rep) {
        const CovarianceSample a = covariance(random_generator(n, m, closure_rng));
        const CovarianceSample b = covariance(random_generator(n, m, closure_rng));
        const double lambda = 0.1 + 5.0 * closure_rng.uniform01();
        const CovarianceSample combined = cone_add(cone_scale(a, lambda), b);
        if (!cone_membership(combined.sigma, n, combined.rank_bound).member) ++closure_bad;
    }
    out.require(closure_bad == 0, std::to_string(closure_bad) + " closure violations");

    Rng pair_rng = Rng::for_stream(4242, "acceptance-c7-pairs");
    std::vector<std::pair<CovarianceSample, CovarianceSample>> pairs;
    pairs.reserve(10000);
    for (int rep = 0; rep < 10000; ++rep)
        pairs.emplace_back(covariance(random_generator(4, 4, pair_rng)),
                           covariance(random_generator(4, 4, pair_rng)));
    const TraceDualityReport duality = trace_duality_check(pairs);
    out.require(duality.pass, "trace inner product " + fmt(duality.min_inner_product) + " < -1e-10");
    out.note("mean_dev=" + fmt(mean_dev) + ", min_trace=" + fmt(duality.min_inner_product));
    return out;
}

// 8. Monge-Ampere residuals: 1D doubling map <= 1e-10; 2D Gaussian OT map
//    with h=1e-3 numeric Jacobian <= 1e-5; residual quarters when the sampled
//    map's spacing halves.
Outcome criterion_8() {
    Outcome out;

    Eigen::MatrixXd cov4(1, 1);
    cov4 << 4.0;
    Eigen::MatrixXd two(1, 1);
    two << 2.0;
    std::vector<Eigen::VectorXd> pts1;
    for (int i = 0; i <= 200; ++i) {
        Eigen::VectorXd p(1);
        p << -4.0 + 8.0 * i / 200.0;
        pts1.push_back(std::move(p));
    }
    const ResidualReport r1 =
        ma_residual_map(Density{GaussianDensity::standard(1)},
                        Density{GaussianDensity(Eigen::VectorXd::Zero(1), cov4)},
                        MapSpec{LinearMap{two}, 0.0}, pts1);
    out.require(r1.max_abs <= 1e-10, "1D residual " + fmt(r1.max_abs) + " > 1e-10");

    Rng rng = Rng::for_stream(31415, "acceptance-c8");
    Eigen::MatrixXd b(2, 2);
    for (int i = 0; i < 2; ++i)
        for (int j = 0; j < 2; ++j) b(i, j) = rng.normal();
    const Eigen::MatrixXd sigma1 = b * b.transpose() + 0.2 * Eigen::MatrixXd::Identity(2, 2);
    const Eigen::MatrixXd a = gaussian_ot_map(Eigen::MatrixXd::Identity(2, 2), sigma1);
    std::vector<Eigen::VectorXd> pts2;
    for (double x = -2.0; x <= 2.0; x += 0.25)
        for (double y = -2.0; y <= 2.0; y += 0.25) {
            Eigen::VectorXd p(2);
            p << x, y;
            pts2.push_back(std::move(p));
        }
    const ResidualReport r2 =
        ma_residual_map(Density{GaussianDensity::standard(2)},
                        Density{GaussianDensity(Eigen::VectorXd::Zero(2), sigma1)},
                        MapSpec{LinearMap{a}, 1e-3}, pts2);
    out.require(r2.max_abs <= 1e-5, "2D residual " + fmt(r2.max_abs) + " > 1e-5");

    auto sampled_map_residual = [](double h) {
        auto t_map = [](double x) { return x + std::tanh(x); };
        auto t_prime = [](double x) {
            const double c = std::cosh(x);
            return 1.0 + 1.0 / (c * c);
        };
        const int count = 2 * static_cast<int>(std::round(7.0 / h)) + 1;
        const GridAxis axis{-7.0, h, count};
        const DensityGrid rho0 = DensityGrid::from_function(
            axis,
            [&](double x) {
                return std::exp(-0.5 * t_map(x) * t_map(x)) / std::sqrt(2.0 * kPi) * t_prime(x);
            },
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
    const double coarse = sampled_map_residual(1e-2);
    const double fine = sampled_map_residual(5e-3);
    out.require(fine <= 0.3 * coarse,
                "refinement ratio " + fmt(fine / coarse) + " > 0.3 (not quadratic)");
    out.note("1D=" + fmt(r1.max_abs) + ", 2D=" + fmt(r2.max_abs) + ", ratio=" + fmt(fine / coarse));
    return out;
}

// 9. Gaussian OT utilities: pushforward identity on 50 random SPD pairs,
//    the 1D W2 value, and the metric properties.
Outcome criterion_9() {
    Outcome out;
    Rng rng = Rng::for_stream(2718, "acceptance-c9");
    auto random_spd = [&](int d) {
        Eigen::MatrixXd c(d, d);
        for (int i = 0; i < d; ++i)
            for (int j = 0; j < d; ++j) c(i, j) = rng.normal();
        return Eigen::MatrixXd(c * c.transpose() + 0.2 * Eigen::MatrixXd::Identity(d, d));
    };

    double push_dev = 0.0;
    for (int rep = 0; rep < 50; ++rep) {
        const int d = 2 + static_cast<int>(rng.below(3));
        const Eigen::MatrixXd s0 = random_spd(d);
        const Eigen::MatrixXd s1 = random_spd(d);
        const Eigen::MatrixXd a = gaussian_ot_map(s0, s1);
        push_dev = std::max(push_dev, (a * s0 * a.transpose() - s1).cwiseAbs().maxCoeff());
    }
    out.require(push_dev <= 1e-10, "A S0 A^T deviation " + fmt(push_dev) + " > 1e-10");

    Eigen::MatrixXd v1(1, 1), v4(1, 1);
    v1 << 1.0;
    v4 << 4.0;
    const double w2_14 = w2_gaussian(v1, v4);
    out.require(std::abs(w2_14 - 1.0) <= 1e-10, "W2(1,4) = " + fmt(w2_14));

    double metric_violation = 0.0;
    for (int rep = 0; rep < 20; ++rep) {
        const int d = 2 + static_cast<int>(rng.below(2));
        const Eigen::MatrixXd s0 = random_spd(d);
        const Eigen::MatrixXd s1 = random_spd(d);
        const Eigen::MatrixXd s2 = random_spd(d);
        const double d01 = w2_gaussian(s0, s1);
        const double d12 = w2_gaussian(s1, s2);
        const double d02 = w2_gaussian(s0, s2);
        metric_violation = std::max(metric_violation, -d01);
        metric_violation = std::max(metric_violation, std::abs(d01 - w2_gaussian(s1, s0)));
        metric_violation = std::max(metric_violation, d02 - d01 - d12 - 1e-8);
        metric_violation = std::max(metric_violation, w2_gaussian(s0, s0));
    }
    out.require(metric_violation <= 1e-8, "metric violation " + fmt(metric_violation));
    out.note("push_dev=" + fmt(push_dev) + ", W2(1,4)-1=" + fmt(w2_14 - 1.0));
    return out;
}

// 10. Coarse-graining of learned features (statistically soft criterion):
//     RBM with n_h=4 on 4x4 Ising at beta=0.6, 5 seeds; locality and
//     agreement must beat the 95th percentile of a 1000-shuffle permutation
//     null in at least 4 of 5 seeds each.
Outcome criterion_10() {
    Outcome out;
    const IsingParams params{1.0, 0.6};
    const BlockMap map{4, 2, TieRule::plus_one};
    int locality_wins = 0, agreement_wins = 0;
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
        const auto samples = sample_ensemble(4, 4, Boundary::free, params, 4000, 5, 5000,
                                             derive_seed(seed, "c10-ising"));
        std::vector<Eigen::VectorXd> dataset;
        dataset.reserve(samples.size());
        for (const auto& lat : samples) dataset.push_back(visible_from_lattice(lat));

        Rng init_rng = Rng::for_stream(seed, "c10-init");
        const RbmModel model0 = RbmModel::init(16, 4, init_rng);
        const TrainConfig config{5, 0.03, 200, 50, derive_seed(seed, "c10-train")};
        const TrainResult trained = train(dataset, model0, config);

        const double locality = rbm_weight_locality(trained.model, map);
        const double agreement = hidden_block_agreement(trained.model, map, samples);
        Rng null_rng = Rng::for_stream(seed, "c10-null");
        const double locality_null95 =
            quantile(locality_permutation_null(trained.model, map, 1000, null_rng), 0.95);
        const double agreement_null95 = quantile(
            agreement_permutation_null(trained.model, map, samples, 1000, null_rng), 0.95);
        if (locality > locality_null95) ++locality_wins;
        if (agreement > agreement_null95) ++agreement_wins;
    }
    out.require(locality_wins >= 4, "locality beats null in only " +
                                        std::to_string(locality_wins) + "/5 seeds");
    out.require(agreement_wins >= 4, "agreement beats null in only " +
                                         std::to_string(agreement_wins) + "/5 seeds");
    out.note("locality " + std::to_string(locality_wins) + "/5, agreement " +
             std::to_string(agreement_wins) + "/5 [statistically soft]");
    return out;
}

// 11. End-to-end pipeline determinism: identical config reruns produce
//     byte-identical artifacts.
Outcome criterion_11() {
    Outcome out;
    RunConfig cfg;
    cfg.apply_override("run.seed=5150");
    cfg.apply_override("pipeline.L=4");
    cfg.apply_override("pipeline.beta=0.6");
    cfg.apply_override("pipeline.n_samples=1000");
    cfg.apply_override("pipeline.burn_in=1000");
    cfg.apply_override("pipeline.epochs=30");
    cfg.apply_override("pipeline.shuffles=100");
    cfg.apply_override("pipeline.resolution=512");

    const fs::path base = fs::temp_directory_path() / "spinflow_acceptance";
    const fs::path first = base / "pipeline_a";
    const fs::path second = base / "pipeline_b";
    fs::remove_all(first);
    fs::remove_all(second);

    out.require(cli::run_command("pipeline", cfg, first) == 0, "first pipeline run failed");
    out.require(cli::run_command("pipeline", cfg, second) == 0, "second pipeline run failed");
    if (!out.pass) return out;

    int compared = 0;
    for (const auto& entry : fs::directory_iterator(first)) {
        if (!entry.is_regular_file()) continue;
        const std::string name = entry.path().filename().string();
        const fs::path other = second / name;
        out.require(fs::exists(other), name + " missing in rerun");
        if (fs::exists(other)) {
            out.require(read_file(entry.path()) == read_file(other), name + " differs");
            ++compared;
        }
    }
    out.require(compared >= 7, "only " + std::to_string(compared) + " artifacts compared");
    out.note(std::to_string(compared) + " artifacts byte-identical");
    return out;
}

}  // namespace

int main() {
    struct Entry {
        const char* name;
        Outcome (*run)();
    };
    const std::vector<Entry> criteria{
        {"C01 ising sampler total variation vs exact oracle", criterion_1},
        {"C02 free-energy identity over random models", criterion_2},
        {"C03 RBM learning halves the exact KL", criterion_3},
        {"C04 CD gradient fidelity vs exact gradient", criterion_4},
        {"C05 Wilson-RG partition consistency", criterion_5},
        {"C06 entropy law and block multiplicities", criterion_6},
        {"C07 Wishart cone suite", criterion_7},
        {"C08 Monge-Ampere residuals", criterion_8},
        {"C09 Gaussian OT utilities", criterion_9},
        {"C10 locality of learned features vs permutation null", criterion_10},
        {"C11 pipeline determinism", criterion_11},
    };

    int failures = 0;
    for (const auto& entry : criteria) {
        const auto start = std::chrono::steady_clock::now();
        Outcome outcome;
        try {
            outcome = entry.run();
        } catch (const std::exception& e) {
            outcome.pass = false;
            outcome.detail = std::string("exception: ") + e.what();
        }
        const double seconds =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        std::printf("[%s] %s (%s) [%.1fs]\n", outcome.pass ? "PASS" : "FAIL", entry.name,
                    outcome.detail.c_str(), seconds);
        std::fflush(stdout);
        if (!outcome.pass) ++failures;
    }
    if (failures == 0) std::printf("acceptance: all %zu criteria passed\n", criteria.size());
    else std::printf("acceptance: %d criteria FAILED\n", failures);
    return failures;
}
