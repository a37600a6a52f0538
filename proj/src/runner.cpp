#include "fosls/runner.hpp"

#include <nlohmann/json.hpp>

#include <atomic>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <numbers>
#include <sstream>
#include <thread>

namespace fosls {

namespace {

using nlohmann::json;

void check_keys(const json& j, std::initializer_list<const char*> allowed,
                const std::string& context) {
    for (auto it = j.begin(); it != j.end(); ++it) {
        bool ok = false;
        for (const char* key : allowed)
            if (it.key() == key) {
                ok = true;
                break;
            }
        if (!ok)
            throw ConfigError("unknown key '" + it.key() + "' in " + context);
    }
}

std::string format_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

std::string fnv1a_hex(const std::string& text) {
    std::uint64_t h = 1469598103934665603ULL;
    for (unsigned char c : text) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    char buf[20];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

void write_text(const std::string& path, const std::string& text) {
    std::filesystem::create_directories(std::filesystem::path(path).parent_path());
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open '" + path + "' for writing");
    out << text;
}

QuadSpec parse_quad(const json& j, const std::string& context) {
    check_keys(j, {"kind", "points", "cells_per_axis"}, context);
    QuadSpec spec;
    const std::string kind = j.value("kind", "p1");
    if (kind == "p1") {
        spec.kind = QuadKind::StratifiedP1;
        if (!j.contains("cells_per_axis"))
            throw ConfigError(context + ": p1 rule needs 'cells_per_axis'");
        spec.cells_per_axis = j.at("cells_per_axis").get<std::vector<int>>();
        for (int c : spec.cells_per_axis)
            if (c < 1) throw ConfigError(context + ": cells_per_axis entries must be >= 1");
    } else if (kind == "mc") {
        spec.kind = QuadKind::MonteCarlo;
        spec.mc_points = j.value("points", 0);
        if (spec.mc_points < 1) throw ConfigError(context + ": mc rule needs 'points' >= 1");
    } else {
        throw ConfigError(context + ": quad kind must be 'p1' or 'mc'");
    }
    return spec;
}

// Parallel task runner for sweep sections; worker count from FOSLS_THREADS.
void run_parallel(std::vector<std::function<void()>> tasks) {
    const int threads = sweep_thread_count();
    std::vector<std::exception_ptr> errors(tasks.size());
    if (threads <= 1 || tasks.size() <= 1) {
        for (std::size_t i = 0; i < tasks.size(); ++i) {
            try {
                tasks[i]();
            } catch (...) {
                errors[i] = std::current_exception();
            }
        }
    } else {
        std::atomic<std::size_t> next{0};
        std::vector<std::thread> workers;
        const int count = std::min<int>(threads, static_cast<int>(tasks.size()));
        for (int t = 0; t < count; ++t)
            workers.emplace_back([&]() {
                while (true) {
                    const std::size_t i = next.fetch_add(1);
                    if (i >= tasks.size()) break;
                    try {
                        tasks[i]();
                    } catch (...) {
                        errors[i] = std::current_exception();
                    }
                }
            });
        for (auto& w : workers) w.join();
    }
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
}

int guarded(const std::function<void()>& body) {
    try {
        body();
        return 0;
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const std::invalid_argument& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const TrainingAbortError& e) {
        std::cerr << "numerical abort: " << e.what() << "\n";
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "numerical error: " << e.what() << "\n";
        return 3;
    }
}

RunConfig apply_cli(const CliOptions& opts) {
    RunConfig cfg = load_run_config(opts.config_path);
    if (opts.seed) cfg.base_seed = *opts.seed;
    if (opts.out_dir) cfg.outputs.dir = *opts.out_dir;
    return cfg;
}

double gradient_jump_reference(double kappa0) {
    return 2.0 * std::numbers::pi * std::abs(1.0 - 1.0 / kappa0);
}

} // namespace

int sweep_thread_count() {
    const char* env = std::getenv("FOSLS_THREADS");
    if (!env) return 1;
    const int n = std::atoi(env);
    return n > 0 ? n : 1;
}

RunConfig load_run_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot read config file '" + path + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_run_config(ss.str());
}

RunConfig parse_run_config(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw ConfigError(std::string("config is not valid JSON: ") + e.what());
    }

    RunConfig cfg;
    cfg.config_hash = fnv1a_hex(text);
    check_keys(j,
               {"problem", "network", "train", "full_iterations", "metrics", "outputs", "sweep",
                "study", "gibbs", "base_seed"},
               "config root");

    if (j.contains("problem")) {
        const auto& jp = j.at("problem");
        check_keys(jp, {"id", "kappa0"}, "problem");
        cfg.problem_id = jp.value("id", cfg.problem_id);
        cfg.kappa0 = jp.value("kappa0", cfg.kappa0);
        if (!(cfg.kappa0 > 0.0)) throw ConfigError("problem.kappa0 must be positive");
    }

    if (j.contains("network")) {
        const auto& jn = j.at("network");
        check_keys(jn, {"layers", "width", "activation", "tanh_slope", "jitter_amplitude",
                        "jitter_seed"},
                   "network");
        cfg.network.layers = jn.value("layers", cfg.network.layers);
        cfg.network.width = jn.value("width", cfg.network.width);
        if (jn.contains("activation")) {
            try {
                cfg.network.activation = parse_activation(jn.at("activation").get<std::string>());
            } catch (const std::invalid_argument& e) {
                throw ConfigError(e.what());
            }
        }
        cfg.network.tanh_slope = jn.value("tanh_slope", cfg.network.tanh_slope);
        cfg.network.jitter_amplitude = jn.value("jitter_amplitude", cfg.network.jitter_amplitude);
        cfg.network.jitter_seed = jn.value("jitter_seed", cfg.network.jitter_seed);
        if (cfg.network.layers < 1) throw ConfigError("network.layers must be >= 1");
        if (cfg.network.width < 1) throw ConfigError("network.width must be >= 1");
        if (!(cfg.network.tanh_slope > 0.0)) throw ConfigError("network.tanh_slope must be > 0");
    }

    if (j.contains("train")) {
        const auto& jt = j.at("train");
        check_keys(jt,
                   {"iterations", "learning_rate", "decay", "adam", "mu", "epsilon_scale",
                    "alpha1", "alpha2", "poincare_period", "force_poincare_estimate", "quad",
                    "loss", "variance_probe", "val_period", "validation_nodes_per_axis",
                    "snapshot_period"},
                   "train");
        auto& tc = cfg.train;
        tc.iterations = jt.value("iterations", tc.iterations);
        if (tc.iterations < 0) throw ConfigError("train.iterations must be >= 0");
        tc.learning_rate = jt.value("learning_rate", tc.learning_rate);
        if (!(tc.learning_rate > 0.0)) throw ConfigError("train.learning_rate must be > 0");
        if (jt.contains("decay")) {
            const auto& jd = jt.at("decay");
            check_keys(jd, {"kind", "factor", "start"}, "train.decay");
            const std::string kind = jd.value("kind", "none");
            if (kind == "exponential") {
                tc.decay.exponential = true;
                tc.decay.factor = jd.value("factor", tc.decay.factor);
                tc.decay.start_iteration = jd.value("start", tc.decay.start_iteration);
                if (!(tc.decay.factor > 0.0 && tc.decay.factor <= 1.0))
                    throw ConfigError("train.decay.factor must be in (0,1]");
            } else if (kind != "none") {
                throw ConfigError("train.decay.kind must be 'none' or 'exponential'");
            }
        }
        if (jt.contains("adam")) {
            const auto& ja = jt.at("adam");
            check_keys(ja, {"beta1", "beta2", "eps"}, "train.adam");
            tc.beta1 = ja.value("beta1", tc.beta1);
            tc.beta2 = ja.value("beta2", tc.beta2);
            tc.eps_adam = ja.value("eps", tc.eps_adam);
            if (!(tc.beta1 > 0.0 && tc.beta1 < 1.0 && tc.beta2 > 0.0 && tc.beta2 < 1.0))
                throw ConfigError("train.adam betas must lie in (0,1)");
        }
        tc.mu = jt.value("mu", tc.mu);
        tc.epsilon_scale = jt.value("epsilon_scale", tc.epsilon_scale);
        tc.alpha1 = jt.value("alpha1", tc.alpha1);
        tc.alpha2 = jt.value("alpha2", tc.alpha2);
        if (!(tc.mu > 0.0 && tc.epsilon_scale > 0.0 && tc.alpha1 > 0.0 && tc.alpha2 > 0.0))
            throw ConfigError("train.mu/epsilon_scale/alpha1/alpha2 must be positive");
        tc.poincare_period = jt.value("poincare_period", tc.poincare_period);
        if (tc.poincare_period < 1) throw ConfigError("train.poincare_period must be >= 1");
        tc.force_poincare_estimate =
            jt.value("force_poincare_estimate", tc.force_poincare_estimate);
        if (jt.contains("quad")) tc.quad = parse_quad(jt.at("quad"), "train.quad");
        if (jt.contains("loss")) {
            const std::string loss = jt.at("loss").get<std::string>();
            if (loss == "fosls")
                tc.loss_kind = LossKind::FOSLS;
            else if (loss == "deep_ritz")
                tc.loss_kind = LossKind::DeepRitz;
            else
                throw ConfigError("train.loss must be 'fosls' or 'deep_ritz'");
        }
        if (jt.contains("variance_probe")) {
            const auto& jv = jt.at("variance_probe");
            check_keys(jv, {"period", "resamples"}, "train.variance_probe");
            tc.variance_probe.period = jv.value("period", 0);
            tc.variance_probe.resamples = jv.value("resamples", 0);
        }
        tc.val_period = jt.value("val_period", tc.val_period);
        if (tc.val_period < 1) throw ConfigError("train.val_period must be >= 1");
        if (jt.contains("validation_nodes_per_axis"))
            tc.validation_nodes = jt.at("validation_nodes_per_axis").get<std::vector<int>>();
        tc.snapshot_period = jt.value("snapshot_period", tc.snapshot_period);
    }
    cfg.full_iterations = j.value("full_iterations", 0);

    if (j.contains("metrics")) {
        const auto& jm = j.at("metrics");
        check_keys(jm, {"fine_nodes_per_axis", "tv_window", "tv_nodes"}, "metrics");
        if (jm.contains("fine_nodes_per_axis"))
            cfg.metrics.fine_nodes_per_axis =
                jm.at("fine_nodes_per_axis").get<std::vector<int>>();
        if (jm.contains("tv_window")) {
            const auto w = jm.at("tv_window").get<std::vector<double>>();
            if (w.size() != 2 || !(w[0] < w[1]))
                throw ConfigError("metrics.tv_window must be [lo, hi] with lo < hi");
            cfg.metrics.tv_window_lo = w[0];
            cfg.metrics.tv_window_hi = w[1];
        }
        cfg.metrics.tv_nodes = jm.value("tv_nodes", cfg.metrics.tv_nodes);
        if (cfg.metrics.tv_nodes < 3) throw ConfigError("metrics.tv_nodes must be >= 3");
    }

    if (j.contains("outputs")) {
        const auto& jo = j.at("outputs");
        check_keys(jo, {"dir", "checkpoint_period", "solution_nodes"}, "outputs");
        cfg.outputs.dir = jo.value("dir", cfg.outputs.dir);
        cfg.outputs.checkpoint_period = jo.value("checkpoint_period", cfg.outputs.checkpoint_period);
        cfg.outputs.solution_nodes = jo.value("solution_nodes", cfg.outputs.solution_nodes);
    }

    if (j.contains("sweep")) {
        const auto& js = j.at("sweep");
        check_keys(js, {"kappa0_values"}, "sweep");
        if (js.contains("kappa0_values"))
            cfg.sweep.kappa0_values = js.at("kappa0_values").get<std::vector<double>>();
    }

    if (j.contains("study")) {
        const auto& js = j.at("study");
        check_keys(js, {"fosls_points", "dr_points", "iterations", "probe_resamples"}, "study");
        if (js.contains("fosls_points"))
            cfg.study.fosls_points = js.at("fosls_points").get<std::vector<int>>();
        if (js.contains("dr_points"))
            cfg.study.dr_points = js.at("dr_points").get<std::vector<int>>();
        cfg.study.iterations = js.value("iterations", cfg.study.iterations);
        cfg.study.probe_resamples = js.value("probe_resamples", cfg.study.probe_resamples);
    }

    if (j.contains("gibbs")) {
        const auto& jg = j.at("gibbs");
        check_keys(jg, {"requ_l1_iterations", "requ_l2_iterations", "tanh_iterations"}, "gibbs");
        cfg.gibbs.requ_l1_iterations = jg.value("requ_l1_iterations", cfg.gibbs.requ_l1_iterations);
        cfg.gibbs.requ_l2_iterations = jg.value("requ_l2_iterations", cfg.gibbs.requ_l2_iterations);
        cfg.gibbs.tanh_iterations = jg.value("tanh_iterations", cfg.gibbs.tanh_iterations);
    }

    cfg.base_seed = j.value("base_seed", cfg.base_seed);
    return cfg;
}

Network build_network(const NetworkConfig& cfg, int dim) {
    Network net;
    if (dim == 1) {
        net = init_1d(cfg.width, cfg.activation);
    } else {
        if (cfg.width % dim != 0)
            throw ConfigError("network.width must be divisible by the dimension for the "
                              "tensor-product initialization (got width " +
                              std::to_string(cfg.width) + " in " + std::to_string(dim) + "D)");
        net = init_tensor(cfg.width / dim, dim, cfg.activation);
    }
    if (cfg.layers > 1) net = init_identity_tail(std::move(net), cfg.layers);
    net.m = cfg.tanh_slope;
    if (cfg.jitter_amplitude != 0.0) apply_jitter(net, cfg.jitter_amplitude, cfg.jitter_seed);
    return net;
}

std::vector<int> default_fine_nodes(int dim, const MetricsConfig& metrics) {
    if (!metrics.fine_nodes_per_axis.empty()) {
        if (static_cast<int>(metrics.fine_nodes_per_axis.size()) != dim)
            throw ConfigError("metrics.fine_nodes_per_axis does not match the problem dimension");
        return metrics.fine_nodes_per_axis;
    }
    if (dim == 1) return {100001};
    return std::vector<int>(static_cast<std::size_t>(dim), 1001);
}

void write_history_csv(const std::string& path, const std::vector<HistoryRow>& history) {
    std::ostringstream os;
    os << "iteration,train_loss,val_loss,err_u_H1k,err_q_Hdivk,err_total,lr,poincare,"
          "grad_norm,wall_ms\n";
    for (const auto& row : history) {
        os << row.iteration << ',' << format_double(row.train_loss) << ','
           << format_double(row.val_loss) << ',' << format_double(row.err_u) << ','
           << format_double(row.err_q) << ',' << format_double(row.err_total) << ','
           << format_double(row.lr) << ',' << format_double(row.poincare) << ','
           << format_double(row.grad_norm) << ',' << format_double(row.wall_ms) << '\n';
    }
    write_text(path, os.str());
}

namespace {

void write_checkpoints(const RunConfig& cfg, const TrainResult& result,
                       const std::string& out_dir) {
    if (cfg.outputs.checkpoint_period <= 0) return;
    for (const auto& snap : result.snapshots) {
        json j;
        j["iteration"] = snap.iteration;
        j["poincare"] = snap.poincare;
        j["config_hash"] = cfg.config_hash;
        j["network"] = json::parse(network_to_json(snap.net));
        j["c_u"] = std::vector<double>(snap.coefficients.c_u.data(),
                                       snap.coefficients.c_u.data() + snap.coefficients.c_u.size());
        j["c_q"] = std::vector<double>(snap.coefficients.c_q.data(),
                                       snap.coefficients.c_q.data() + snap.coefficients.c_q.size());
        char name[64];
        std::snprintf(name, sizeof(name), "ckpt_%06d.json", snap.iteration);
        write_text(out_dir + "/" + name, j.dump(2));
    }
}

void write_solution_1d(const RunConfig& cfg, const RunSummary& summary,
                       const std::string& out_dir) {
    const auto& sol = summary.result.solution;
    const auto& problem = summary.problem;
    const int nodes = std::max(2, cfg.outputs.solution_nodes);
    std::ostringstream os;
    const bool exact = problem.exact.has_value();
    os << "x,u,du,q,divq";
    if (exact) os << ",u_exact,du_exact,q_exact,divq_exact";
    os << '\n';
    Vector x(1);
    for (int i = 0; i < nodes; ++i) {
        x(0) = problem.box.lower(0) +
               (problem.box.upper(0) - problem.box.lower(0)) * i / (nodes - 1);
        os << format_double(x(0)) << ',' << format_double(sol.u(x)) << ','
           << format_double(sol.grad_u(x)(0)) << ',' << format_double(sol.q(x)(0)) << ','
           << format_double(sol.div_q(x));
        if (exact)
            os << ',' << format_double(problem.exact->u(x)) << ','
               << format_double(problem.exact->grad_u(x)(0)) << ','
               << format_double(problem.exact->q(x)(0)) << ','
               << format_double(problem.exact->div_q(x));
        os << '\n';
    }
    write_text(out_dir + "/solution.csv", os.str());
}

void write_solution_2d(const RunConfig& cfg, const RunSummary& summary,
                       const std::string& out_dir) {
    const auto& sol = summary.result.solution;
    const auto& problem = summary.problem;
    const int nodes = std::min(std::max(2, cfg.outputs.solution_nodes), 401);
    const bool exact = problem.exact.has_value();
    std::ostringstream os;
    os << "x,y,u,grad_norm_weighted,qx,qy,divq";
    if (exact) os << ",err_grad_weighted,err_q_weighted";
    os << '\n';
    Vector x(2);
    for (int iy = 0; iy < nodes; ++iy) {
        for (int ix = 0; ix < nodes; ++ix) {
            x(0) = problem.box.lower(0) +
                   (problem.box.upper(0) - problem.box.lower(0)) * ix / (nodes - 1);
            x(1) = problem.box.lower(1) +
                   (problem.box.upper(1) - problem.box.lower(1)) * iy / (nodes - 1);
            const double kap = problem.kappa(x);
            const Vector gu = sol.grad_u(x);
            const Vector q = sol.q(x);
            os << format_double(x(0)) << ',' << format_double(x(1)) << ','
               << format_double(sol.u(x)) << ',' << format_double(std::sqrt(kap) * gu.norm())
               << ',' << format_double(q(0)) << ',' << format_double(q(1)) << ','
               << format_double(sol.div_q(x));
            if (exact) {
                const Vector egu = gu - problem.exact->grad_u(x);
                const Vector eq = q - problem.exact->q(x);
                os << ',' << format_double(std::sqrt(kap) * egu.norm()) << ','
                   << format_double(eq.norm() / std::sqrt(kap));
            }
            os << '\n';
        }
    }
    write_text(out_dir + "/fields.csv", os.str());
}

json report_json(const RunConfig& cfg, const RunSummary& summary, bool full) {
    json j;
    j["problem"] = cfg.problem_id;
    if (cfg.problem_id == "interface1d") j["kappa0"] = cfg.kappa0;
    j["full"] = full;
    j["config_hash"] = cfg.config_hash;
    j["base_seed"] = cfg.base_seed;
    j["iterations"] = static_cast<int>(summary.result.history.size());
    if (summary.problem.exact) {
        j["rel_u"] = summary.report.rel_u;
        j["rel_q"] = summary.report.rel_q;
        j["rel_total"] = summary.report.rel_total;
        j["loss_fine"] = summary.report.loss_fine;
        j["ratio"] = summary.report.ratio;
    }
    j["poincare"] = {{"used", summary.result.solution.poincare},
                     {"running_max", summary.result.poincare.running_max},
                     {"lambda_min", summary.result.poincare.lambda_min}};
    if (summary.problem.poincare_reference)
        j["poincare"]["reference"] = *summary.problem.poincare_reference;
    return j;
}

} // namespace

RunSummary run_experiment(const RunConfig& config, bool full, const std::string& out_dir) {
    RunSummary summary;
    summary.problem = make_problem(config.problem_id, config.kappa0);
    const int dim = summary.problem.box.dim();

    Network net = build_network(config.network, dim);

    TrainConfig tc = config.train;
    tc.base_seed = config.base_seed;
    if (full && config.full_iterations > 0) tc.iterations = config.full_iterations;
    // Negative decay start counts back from the end of the run.
    if (tc.decay.exponential && tc.decay.start_iteration < 0)
        tc.decay.start_iteration = std::max(0, tc.iterations + tc.decay.start_iteration);
    if (tc.validation_nodes.empty())
        tc.validation_nodes = (dim == 1) ? std::vector<int>{100001}
                                         : std::vector<int>(static_cast<std::size_t>(dim), 501);
    if (static_cast<int>(tc.quad.cells_per_axis.size()) != dim &&
        tc.quad.kind == QuadKind::StratifiedP1)
        throw ConfigError("train.quad.cells_per_axis does not match the problem dimension");
    if (config.outputs.checkpoint_period > 0 && tc.snapshot_period == 0)
        tc.snapshot_period = config.outputs.checkpoint_period;

    summary.result = train(summary.problem, std::move(net), tc);

    if (summary.problem.exact) {
        const QuadratureRule fine =
            trapezoid_rule(summary.problem.box, default_fine_nodes(dim, config.metrics));
        summary.report = energy_errors(summary.result.solution, summary.problem,
                                       summary.result.solution.poincare, fine);
    }

    if (!out_dir.empty()) {
        write_history_csv(out_dir + "/history.csv", summary.result.history);
        write_text(out_dir + "/report.json", report_json(config, summary, full).dump(2) + "\n");
        write_checkpoints(config, summary.result, out_dir);
        if (dim == 1)
            write_solution_1d(config, summary, out_dir);
        else
            write_solution_2d(config, summary, out_dir);
    }
    return summary;
}

int cmd_run(const CliOptions& opts) {
    return guarded([&]() {
        const RunConfig cfg = apply_cli(opts);
        run_experiment(cfg, opts.full, cfg.outputs.dir);
    });
}

int cmd_sweep_kappa(const CliOptions& opts, const std::vector<double>& kappa0_override) {
    return guarded([&]() {
        RunConfig cfg = apply_cli(opts);
        if (cfg.problem_id != "interface1d")
            throw ConfigError("sweep-kappa requires problem.id = interface1d");
        const std::vector<double> kappas =
            kappa0_override.empty() ? cfg.sweep.kappa0_values : kappa0_override;
        if (kappas.empty()) throw ConfigError("sweep-kappa: empty kappa0 list");

        std::vector<RunSummary> summaries(kappas.size());
        std::vector<std::function<void()>> tasks;
        for (std::size_t i = 0; i < kappas.size(); ++i)
            tasks.push_back([&, i]() {
                RunConfig sub = cfg;
                sub.kappa0 = kappas[i];
                const std::string dir = cfg.outputs.dir + "/kappa_" + std::to_string(i);
                summaries[i] = run_experiment(sub, opts.full, dir);
            });
        run_parallel(std::move(tasks));

        std::ostringstream rob;
        rob << "iteration,kappa0,ratio,lower,upper,ratio_std\n";
        for (std::size_t i = 0; i < kappas.size(); ++i)
            for (const auto& row : summaries[i].result.robustness)
                rob << row.iteration << ',' << format_double(kappas[i]) << ','
                    << format_double(row.ratio) << ',' << format_double(robustness_lower_bound())
                    << ',' << format_double(robustness_upper_bound()) << ','
                    << format_double(row.ratio_std) << '\n';
        write_text(cfg.outputs.dir + "/robustness.csv", rob.str());

        std::ostringstream poi;
        poi << "kappa0,estimate,reference,rel_error\n";
        for (std::size_t i = 0; i < kappas.size(); ++i) {
            const double reference =
                1.0 / std::sqrt(oracle_lambda1(kappas[i], 1.0, 0.5));
            const double estimate = summaries[i].result.poincare.running_max;
            poi << format_double(kappas[i]) << ',' << format_double(estimate) << ','
                << format_double(reference) << ','
                << format_double(std::abs(estimate - reference) / reference) << '\n';
        }
        write_text(cfg.outputs.dir + "/poincare.csv", poi.str());
    });
}

int cmd_variance_study(const CliOptions& opts) {
    return guarded([&]() {
        RunConfig cfg = apply_cli(opts);
        cfg.problem_id = "smooth1d";
        json stability = json::array();

        struct StudyRun {
            LossKind loss;
            int n_points;
            std::string dir;
        };
        std::vector<StudyRun> runs;
        for (int n : cfg.study.fosls_points)
            runs.push_back({LossKind::FOSLS, n, cfg.outputs.dir + "/fosls_N" + std::to_string(n)});
        for (int n : cfg.study.dr_points)
            runs.push_back({LossKind::DeepRitz, n, cfg.outputs.dir + "/dr_N" + std::to_string(n)});

        std::vector<json> entries(runs.size());
        std::vector<std::function<void()>> tasks;
        for (std::size_t i = 0; i < runs.size(); ++i)
            tasks.push_back([&, i]() {
                const StudyRun& run = runs[i];
                RunConfig sub = cfg;
                sub.base_seed = derive_seed(cfg.base_seed, 6, static_cast<std::uint64_t>(i));
                sub.train.loss_kind = run.loss;
                sub.train.iterations = cfg.study.iterations;
                sub.train.snapshot_period = std::max(1, cfg.study.iterations / 4);
                if (run.loss == LossKind::FOSLS) {
                    // The weighted loss is discretized with the stratified P1
                    // rule (two points per cell).
                    if (run.n_points % 2 != 0)
                        throw ConfigError("variance-study: FOSLS point counts must be even");
                    sub.train.quad.kind = QuadKind::StratifiedP1;
                    sub.train.quad.cells_per_axis = {run.n_points / 2};
                    sub.train.quad.mc_points = 0;
                } else {
                    // The Deep Ritz baseline samples uniformly at random.
                    sub.train.quad.kind = QuadKind::MonteCarlo;
                    sub.train.quad.mc_points = run.n_points;
                    sub.train.quad.cells_per_axis.clear();
                }

                json entry;
                entry["loss"] = run.loss == LossKind::FOSLS ? "fosls" : "deep_ritz";
                entry["n_points"] = run.n_points;
                try {
                    const RunSummary summary = run_experiment(sub, false, run.dir);
                    entry["aborted"] = false;
                    double final_rel_u = std::numeric_limits<double>::quiet_NaN();
                    for (auto it = summary.result.history.rbegin();
                         it != summary.result.history.rend(); ++it)
                        if (std::isfinite(it->err_u)) {
                            final_rel_u = it->err_u;
                            break;
                        }
                    entry["final_rel_u"] = final_rel_u;
                    entry["instability"] = !(final_rel_u <= 0.10);

                    json probes = json::array();
                    for (const auto& snap : summary.result.snapshots) {
                        const VarianceProbeReport probe = gradient_variance_probe(
                            snap.net, summary.problem, snap.coefficients, snap.poincare,
                            sub.train.quad, cfg.study.probe_resamples,
                            derive_seed(sub.base_seed, 4, static_cast<std::uint64_t>(snap.iteration)),
                            run.loss);
                        json jp;
                        jp["iteration"] = snap.iteration;
                        jp["loss_fine"] = probe.loss_fine;
                        jp["max_variance"] = probe.max_variance;
                        jp["max_ratio"] = probe.max_ratio;
                        probes.push_back(jp);
                    }
                    write_text(run.dir + "/variance.json", probes.dump(2) + "\n");
                } catch (const TrainingAbortError& e) {
                    entry["aborted"] = true;
                    entry["abort_iteration"] = e.iteration;
                    entry["instability"] = true;
                }
                entries[i] = entry;
            });
        run_parallel(std::move(tasks));

        for (auto& e : entries) stability.push_back(e);
        write_text(cfg.outputs.dir + "/stability.json", stability.dump(2) + "\n");
    });
}

int cmd_gibbs_study(const CliOptions& opts) {
    return guarded([&]() {
        RunConfig cfg = apply_cli(opts);
        cfg.problem_id = "interface1d";

        struct Arch {
            std::string name;
            int layers;
            Activation act;
            int iterations;
        };
        const std::vector<Arch> archs{
            {"requ_l1", 1, Activation::ReQU, cfg.gibbs.requ_l1_iterations},
            {"requ_l2", 2, Activation::ReQU, cfg.gibbs.requ_l2_iterations},
            {"tanh_l1", 1, Activation::ScaledTanh, cfg.gibbs.tanh_iterations},
        };

        std::vector<double> tvs(archs.size());
        std::vector<RunSummary> summaries(archs.size());
        std::vector<std::function<void()>> tasks;
        for (std::size_t i = 0; i < archs.size(); ++i)
            tasks.push_back([&, i]() {
                RunConfig sub = cfg;
                sub.network.layers = archs[i].layers;
                sub.network.activation = archs[i].act;
                sub.train.iterations = archs[i].iterations;
                const std::string dir = cfg.outputs.dir + "/" + archs[i].name;
                summaries[i] = run_experiment(sub, false, dir);
                tvs[i] = tv_gradient_error(summaries[i].result.solution, summaries[i].problem,
                                           cfg.metrics.tv_window_lo, cfg.metrics.tv_window_hi,
                                           cfg.metrics.tv_nodes);

                // Gradient-error profile on the TV window.
                std::ostringstream os;
                os << "x,grad_err\n";
                const double h =
                    (cfg.metrics.tv_window_hi - cfg.metrics.tv_window_lo) / cfg.metrics.tv_nodes;
                Vector x(1);
                for (int p = 0; p < cfg.metrics.tv_nodes; ++p) {
                    x(0) = cfg.metrics.tv_window_lo + (p + 0.5) * h;
                    const double ge = summaries[i].problem.exact->grad_u(x)(0) -
                                      summaries[i].result.solution.grad_u(x)(0);
                    os << format_double(x(0)) << ',' << format_double(ge) << '\n';
                }
                write_text(cfg.outputs.dir + "/profile_" + archs[i].name + ".csv", os.str());
            });
        run_parallel(std::move(tasks));

        json j;
        for (std::size_t i = 0; i < archs.size(); ++i) j["tv_" + archs[i].name] = tvs[i];
        j["gradient_jump_reference"] = gradient_jump_reference(cfg.kappa0);
        write_text(cfg.outputs.dir + "/tv.json", j.dump(2) + "\n");
    });
}

int cmd_run2d(const CliOptions& opts, const std::string& problem_override) {
    return guarded([&]() {
        RunConfig cfg = apply_cli(opts);
        if (!problem_override.empty()) cfg.problem_id = problem_override;
        if (cfg.problem_id != "circle2d" && cfg.problem_id != "plane2d")
            throw ConfigError("run2d requires problem circle2d or plane2d");
        run_experiment(cfg, opts.full, cfg.outputs.dir);
    });
}

int cmd_poincare_check(const CliOptions& opts) {
    return guarded([&]() {
        const RunConfig cfg = apply_cli(opts);
        const ProblemSpec problem = make_problem(cfg.problem_id, cfg.kappa0);
        if (problem.box.dim() != 1)
            throw ConfigError("poincare-check supports 1D problems only");
        const Network net = build_network(cfg.network, 1);

        const QuadratureRule fine =
            trapezoid_rule(problem.box, default_fine_nodes(1, cfg.metrics));
        const SpanningBatch batch = make_spanning_batch(net, problem, fine, false);
        const RawSystem raw = assemble_raw(batch);
        const Matrix M = mass_from_batch(batch);
        const PoincareEstimate est = estimate_poincare(raw.Huu, M, cfg.train.epsilon_scale,
                                                       cfg.train.alpha1, cfg.train.alpha2);

        double oracle_lambda;
        if (cfg.problem_id == "interface1d")
            oracle_lambda = oracle_lambda1(cfg.kappa0, 1.0, 0.5);
        else
            oracle_lambda = oracle_lambda1(1.0, 1.0, 0.5);
        const double oracle_value = 1.0 / std::sqrt(oracle_lambda);

        json j;
        j["problem"] = cfg.problem_id;
        if (cfg.problem_id == "interface1d") j["kappa0"] = cfg.kappa0;
        j["estimate_lambda_min"] = est.lambda_min;
        j["estimate_value"] = est.value;
        j["oracle_lambda1"] = oracle_lambda;
        j["oracle_value"] = oracle_value;
        j["rel_error_value"] = std::abs(est.value - oracle_value) / oracle_value;
        write_text(cfg.outputs.dir + "/poincare_check.json", j.dump(2) + "\n");
        std::cout << j.dump(2) << "\n";
    });
}

} // namespace fosls
