#ifndef FOSLS_RUNNER_HPP
#define FOSLS_RUNNER_HPP

#include "fosls/training.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace fosls {

// Raised on malformed configuration files (schema violations, unknown keys,
// inadmissible values); mapped to exit code 2 by the CLI.
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct NetworkConfig {
    int layers = 1;
    int width = 16;
    Activation activation = Activation::ReQU;
    double tanh_slope = 50.0;
    double jitter_amplitude = 0.0;
    std::uint64_t jitter_seed = 0;
};

struct MetricsConfig {
    std::vector<int> fine_nodes_per_axis;  // defaults set per dimension
    double tv_window_lo = 0.4;
    double tv_window_hi = 0.6;
    int tv_nodes = 4001;
};

struct OutputConfig {
    std::string dir = "out";
    int checkpoint_period = 0;
    int solution_nodes = 2001;  // per axis for the sampled-solution dumps
};

struct SweepConfig {
    std::vector<double> kappa0_values{1e-6, 1e-3, 1e3, 1e6};
};

struct StudyConfig {
    std::vector<int> fosls_points{50, 100, 200, 400, 600};
    std::vector<int> dr_points{300, 400, 600, 1000, 2000};
    int iterations = 10000;
    int probe_resamples = 100;
};

struct GibbsConfig {
    int requ_l1_iterations = 2500;
    int requ_l2_iterations = 2500;
    int tanh_iterations = 10000;
};

struct RunConfig {
    std::string problem_id = "interface1d";
    double kappa0 = 3.0;
    NetworkConfig network;
    TrainConfig train;
    int full_iterations = 0;  // used when --full is given
    MetricsConfig metrics;
    OutputConfig outputs;
    SweepConfig sweep;
    StudyConfig study;
    GibbsConfig gibbs;
    std::uint64_t base_seed = 1;
    std::string config_hash;
};

RunConfig load_run_config(const std::string& path);
RunConfig parse_run_config(const std::string& text);

Network build_network(const NetworkConfig& cfg, int dim);
std::vector<int> default_fine_nodes(int dim, const MetricsConfig& metrics);

struct RunSummary {
    ErrorReport report;
    TrainResult result;
    ProblemSpec problem;
};

// Trains per the configuration and writes history.csv, report.json,
// checkpoints and sampled solution fields under the output directory.
RunSummary run_experiment(const RunConfig& config, bool full, const std::string& out_dir);

struct CliOptions {
    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::optional<std::string> out_dir;
    bool full = false;
};

int cmd_run(const CliOptions& opts);
int cmd_sweep_kappa(const CliOptions& opts, const std::vector<double>& kappa0_override);
int cmd_variance_study(const CliOptions& opts);
int cmd_gibbs_study(const CliOptions& opts);
int cmd_run2d(const CliOptions& opts, const std::string& problem_override);
int cmd_poincare_check(const CliOptions& opts);

// Worker-count for parallel sweep sections; reads FOSLS_THREADS, defaulting
// to 1 (sequential) so numeric outputs never depend on scheduling.
int sweep_thread_count();

void write_history_csv(const std::string& path, const std::vector<HistoryRow>& history);

} // namespace fosls

#endif
