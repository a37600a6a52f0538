// Experiment runner for the weighted first-order-system least-squares solver
// with network-generated trial spaces. Every subcommand reads a JSON config
// and writes machine-readable CSV/JSON results under the output directory.

#include "fosls/runner.hpp"

#include <CLI11.hpp>

int main(int argc, char** argv) {
    CLI::App app{"Robust weighted FOSLS trainer for diffusion/transmission problems"};
    app.require_subcommand(1);

    fosls::CliOptions opts;
    std::uint64_t seed = 0;
    std::string out_dir;
    bool has_seed = false, has_out = false;

    auto add_common = [&](CLI::App* cmd) {
        cmd->add_option("--config", opts.config_path, "path to the JSON run configuration")
            ->required();
        cmd->add_option("--seed", seed, "override base_seed")->each([&](const std::string&) {
            has_seed = true;
        });
        cmd->add_option("--out", out_dir, "override the output directory")
            ->each([&](const std::string&) { has_out = true; });
        cmd->add_flag("--full", opts.full, "full-scale iteration counts instead of desk scale");
    };

    auto* run = app.add_subcommand("run", "train one configuration and write reports");
    add_common(run);

    auto* sweep = app.add_subcommand("sweep-kappa", "robustness sweep over kappa0 values");
    add_common(sweep);
    std::vector<double> kappas;
    sweep->add_option("--kappa0", kappas, "override the kappa0 list");

    auto* variance = app.add_subcommand("variance-study",
                                        "integration study: FOSLS vs Deep Ritz stability");
    add_common(variance);

    auto* gibbs = app.add_subcommand("gibbs-study", "quasi-Gibbs TV comparison of activations");
    add_common(gibbs);

    auto* run2d = app.add_subcommand("run2d", "2D interface experiment with field dumps");
    add_common(run2d);
    std::string problem2d;
    run2d->add_option("--problem", problem2d, "circle2d or plane2d");

    auto* pcheck = app.add_subcommand("poincare-check",
                                      "discrete Poincare estimate vs the transcendental root");
    add_common(pcheck);

    CLI11_PARSE(app, argc, argv);

    if (has_seed) opts.seed = seed;
    if (has_out) opts.out_dir = out_dir;

    if (run->parsed()) return fosls::cmd_run(opts);
    if (sweep->parsed()) return fosls::cmd_sweep_kappa(opts, kappas);
    if (variance->parsed()) return fosls::cmd_variance_study(opts);
    if (gibbs->parsed()) return fosls::cmd_gibbs_study(opts);
    if (run2d->parsed()) return fosls::cmd_run2d(opts, problem2d);
    if (pcheck->parsed()) return fosls::cmd_poincare_check(opts);
    return 1;
}
