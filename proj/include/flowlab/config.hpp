#ifndef FLOWLAB_CONFIG_HPP
#define FLOWLAB_CONFIG_HPP

#include "flowlab/bench.hpp"
#include "flowlab/io.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace flowlab {

inline constexpr int kConfigVersion = 1;
inline constexpr const char* kLibraryVersion = "0.1.0";

struct TheoryParams {
    Eigen::Index d = 4;
    double rho = 0.5;
    double gap_norm = 1.0;
    std::vector<double> betas{1.0, 0.25, 0.01};
    int k_max = 50;
    double eta = 0.5;                     // vanilla learning rate
    std::vector<double> sigma_pre_diag;   // empty = identity
    // verify-covariance grid
    std::vector<double> rhos{0.0, 0.3, 0.6, 0.9};
    std::vector<double> alphas{0.5, 1.0, 4.0};
    std::vector<Eigen::Index> dims{2, 8};
    Eigen::Index mc_samples = 2'000'000;
    double tolerance = 5e-3;
    // averaging
    int beta_grid = 2000;
};

struct ExperimentConfig {
    int version = kConfigVersion;
    std::uint64_t seed = 0;
    std::string output_dir = "out";
    BenchmarkSpec benchmark;
    ComparisonSetup setup = default_setup();
    std::vector<double> sweep_alphas;          // averaging_sweep, empty = off
    std::vector<double> ablation_percentiles;  // tau_ablation, empty = off
    TheoryParams theory;
};

/// Strict parse: `version` is required, unknown keys and method parameters
/// that do not belong to the method are ConfigError naming the field.
ExperimentConfig parse_config(const io::Json& j);
ExperimentConfig load_config(const io::fs::path& path);

/// FNV-1a of the canonical (sorted-key, compact) serialization.
std::uint64_t config_hash(const io::Json& j);
std::string hex64(std::uint64_t v);

/// Parses one entry of the "methods" array.
TrainConfig parse_method(const io::Json& j, const std::string& where);

struct RunManifest {
    std::string config_hash;
    std::string library_version = kLibraryVersion;
    std::string started;
    std::string finished;
    std::string command;
    std::vector<std::string> outputs;
    io::Json seeds = io::Json::object();

    [[nodiscard]] io::Json to_json() const;
};

/// UTC, ISO-8601 with seconds.
std::string utc_timestamp();

}  // namespace flowlab

#endif  // FLOWLAB_CONFIG_HPP
