#pragma once

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "spinflow/coarsegrain.hpp"
#include "spinflow/errors.hpp"
#include "spinflow/ising.hpp"
#include "spinflow/rbm.hpp"
#include "spinflow/rng.hpp"
#include "spinflow/transport.hpp"
#include "spinflow/wishart.hpp"

namespace spinflow {

// Shortest text form that parses back to the identical double.
inline std::string format_double(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

// Atomic file write: temp file in the same directory, then rename.
inline void atomic_write_file(const std::filesystem::path& path, const std::string& content) {
    namespace fs = std::filesystem;
    const fs::path dir = path.parent_path().empty() ? fs::path(".") : path.parent_path();
    const fs::path tmp = dir / (".tmp." + path.filename().string());
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw IoError("cannot open " + tmp.string() + " for writing");
        out << content;
        if (!out) throw IoError("write failed for " + tmp.string());
    }
    std::error_code ec;
    fs::rename(tmp, path, ec);
    if (ec) throw IoError("rename to " + path.string() + " failed: " + ec.message());
}

inline std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

inline std::uint64_t file_checksum(const std::filesystem::path& path) {
    return fnv1a64(read_file(path));
}

// ---------------------------------------------------------------------------
// Ising ensemble files
//
// One configuration per line, L^2 space-separated +-1 integers, after the
// header line `# ising L=<L> boundary=<b> J=<J> beta=<beta> seed=<s>`.

inline std::string ensemble_to_string(std::span<const SpinLattice> samples, int side,
                                      Boundary boundary, const IsingParams& params,
                                      std::uint64_t seed) {
    std::ostringstream out;
    out << "# ising L=" << side << " boundary=" << to_string(boundary)
        << " J=" << format_double(params.coupling)
        << " beta=" << format_double(params.inverse_temperature) << " seed=" << seed << "\n";
    for (const auto& lat : samples) {
        if (lat.rows() != side || lat.cols() != side)
            throw InvalidArgumentError("ensemble_to_string: sample size mismatch");
        for (int i = 0; i < lat.site_count(); ++i)
            out << (i ? " " : "") << static_cast<int>(lat.spin(i));
        out << "\n";
    }
    return out.str();
}

struct EnsembleFile {
    int side = 0;
    Boundary boundary = Boundary::free;
    IsingParams params;
    std::uint64_t seed = 0;
    std::vector<SpinLattice> samples;
};

inline EnsembleFile parse_ensemble(std::istream& in) {
    std::string line;
    if (!std::getline(in, line)) throw IoError("ensemble file is empty");
    std::istringstream header(line);
    std::string hash, tag;
    header >> hash >> tag;
    if (hash != "#" || tag != "ising") throw IoError("ensemble file has no '# ising' header");

    EnsembleFile file;
    std::string kv;
    while (header >> kv) {
        const auto eq = kv.find('=');
        if (eq == std::string::npos) throw IoError("malformed ensemble header field '" + kv + "'");
        const std::string key = kv.substr(0, eq);
        const std::string value = kv.substr(eq + 1);
        if (key == "L") file.side = std::stoi(value);
        else if (key == "boundary") file.boundary = boundary_from_string(value);
        else if (key == "J") file.params.coupling = std::stod(value);
        else if (key == "beta") file.params.inverse_temperature = std::stod(value);
        else if (key == "seed") file.seed = std::stoull(value);
        else throw IoError("unknown ensemble header field '" + key + "'");
    }
    if (file.side < 1) throw IoError("ensemble header is missing L");

    const int n = file.side * file.side;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::istringstream row(line);
        SpinLattice lat(file.side, file.side, file.boundary);
        int value = 0;
        for (int i = 0; i < n; ++i) {
            if (!(row >> value)) throw IoError("ensemble line has fewer than L^2 spins");
            lat.set_spin(i, value);
        }
        if (row >> value) throw IoError("ensemble line has more than L^2 spins");
        file.samples.push_back(std::move(lat));
    }
    return file;
}

inline EnsembleFile read_ensemble(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open ensemble file " + path.string());
    return parse_ensemble(in);
}

// ---------------------------------------------------------------------------
// RBM checkpoints (JSON, bit-exact round trip)

inline std::string checkpoint_to_string(const RbmModel& model, const TrainConfig& config) {
    model.validate();
    nlohmann::ordered_json doc;
    doc["format"] = "spinflow-rbm-checkpoint";
    doc["n_visible"] = model.n_visible();
    doc["n_hidden"] = model.n_hidden();
    std::vector<double> w;
    w.reserve(static_cast<std::size_t>(model.n_visible()) * model.n_hidden());
    for (int i = 0; i < model.n_visible(); ++i)
        for (int j = 0; j < model.n_hidden(); ++j) w.push_back(model.weights(i, j));
    doc["weights_row_major"] = w;
    doc["visible_bias"] = std::vector<double>(model.visible_bias.begin(), model.visible_bias.end());
    doc["hidden_bias"] = std::vector<double>(model.hidden_bias.begin(), model.hidden_bias.end());
    doc["train_config"] = {{"cd_steps", config.cd_steps},
                           {"learning_rate", config.learning_rate},
                           {"epochs", config.epochs},
                           {"batch_size", config.batch_size},
                           {"seed", config.seed}};
    return doc.dump(2) + "\n";
}

inline std::pair<RbmModel, TrainConfig> checkpoint_from_string(const std::string& text) {
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw IoError(std::string("checkpoint is not valid JSON: ") + e.what());
    }
    try {
        if (doc.at("format").get<std::string>() != "spinflow-rbm-checkpoint")
            throw IoError("not a spinflow RBM checkpoint");
        const int n_v = doc.at("n_visible").get<int>();
        const int n_h = doc.at("n_hidden").get<int>();
        const auto w = doc.at("weights_row_major").get<std::vector<double>>();
        const auto a = doc.at("visible_bias").get<std::vector<double>>();
        const auto b = doc.at("hidden_bias").get<std::vector<double>>();
        if (static_cast<int>(w.size()) != n_v * n_h || static_cast<int>(a.size()) != n_v ||
            static_cast<int>(b.size()) != n_h)
            throw IoError("checkpoint arrays have inconsistent sizes");
        RbmModel model = RbmModel::zeros(n_v, n_h);
        for (int i = 0; i < n_v; ++i)
            for (int j = 0; j < n_h; ++j)
                model.weights(i, j) = w[static_cast<std::size_t>(i * n_h + j)];
        for (int i = 0; i < n_v; ++i) model.visible_bias[i] = a[static_cast<std::size_t>(i)];
        for (int j = 0; j < n_h; ++j) model.hidden_bias[j] = b[static_cast<std::size_t>(j)];
        const auto& tc = doc.at("train_config");
        TrainConfig config{tc.at("cd_steps").get<int>(), tc.at("learning_rate").get<double>(),
                           tc.at("epochs").get<int>(), tc.at("batch_size").get<int>(),
                           tc.at("seed").get<std::uint64_t>()};
        model.validate();
        return {std::move(model), config};
    } catch (const nlohmann::json::exception& e) {
        throw IoError(std::string("checkpoint is missing fields: ") + e.what());
    }
}

inline void save_checkpoint(const std::filesystem::path& path, const RbmModel& model,
                            const TrainConfig& config) {
    atomic_write_file(path, checkpoint_to_string(model, config));
}

inline std::pair<RbmModel, TrainConfig> load_checkpoint(const std::filesystem::path& path) {
    return checkpoint_from_string(read_file(path));
}

// ---------------------------------------------------------------------------
// CSV exports

inline std::string effective_table_to_csv(const EffectiveTable& table) {
    std::ostringstream out;
    out << "macro_index,H_eff,multiplicity,entropy\n";
    for (std::size_t y = 0; y < table.entries.size(); ++y) {
        const auto& e = table.entries[y];
        out << y << "," << format_double(e.h_eff) << "," << e.multiplicity << ","
            << format_double(e.entropy) << "\n";
    }
    return out.str();
}

inline std::string wishart_samples_to_csv(std::span<const CovarianceSample> samples, int n,
                                          int m, std::uint64_t seed) {
    std::ostringstream out;
    out << "# wishart n=" << n << " m=" << m << " seed=" << seed << "\n";
    for (int i = 0; i < n; ++i)
        for (int j = i; j < n; ++j) out << (i == 0 && j == 0 ? "" : ",") << "sigma_" << i << "_" << j;
    out << "\n";
    for (const auto& s : samples) {
        bool first = true;
        for (int i = 0; i < n; ++i)
            for (int j = i; j < n; ++j) {
                out << (first ? "" : ",") << format_double(s.sigma(i, j));
                first = false;
            }
        out << "\n";
    }
    return out.str();
}

inline std::string residual_report_to_csv(const ResidualReport& report) {
    std::ostringstream out;
    const int dim = report.entries.empty() ? 1 : static_cast<int>(report.entries.front().x.size());
    if (dim == 1) out << "x,tx,det_dt,rho0,rho1_at_t,residual\n";
    else out << "x,y,tx,ty,det_dt,rho0,rho1_at_t,residual\n";
    for (const auto& e : report.entries) {
        for (int d = 0; d < dim; ++d) out << (d ? "," : "") << format_double(e.x[d]);
        for (int d = 0; d < dim; ++d) out << "," << format_double(e.t_of_x[d]);
        out << "," << format_double(e.det_jacobian) << "," << format_double(e.rho0) << ","
            << format_double(e.rho1_at_t) << "," << format_double(e.residual) << "\n";
    }
    out << "# summary max_abs=" << format_double(report.max_abs)
        << " mean_abs=" << format_double(report.mean_abs) << "\n";
    return out.str();
}

// Generic two-column metric export used by the CLI summaries.
inline std::string metrics_to_csv(std::span<const std::pair<std::string, double>> metrics) {
    std::ostringstream out;
    out << "metric,value\n";
    for (const auto& [name, value] : metrics) out << name << "," << format_double(value) << "\n";
    return out.str();
}

}  // namespace spinflow
