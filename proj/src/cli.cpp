#include "flowlab/cli.hpp"

#include "flowlab/config.hpp"
#include "flowlab/io.hpp"
#include "flowlab/rng.hpp"

#include <CLI11.hpp>

#include <chrono>
#include <cstdlib>
#include <iostream>
#include <optional>

namespace flowlab::cli {

namespace {

namespace fs = std::filesystem;
using io::Json;

struct Common {
    std::string config;
    std::string out;
    std::optional<std::uint64_t> seed;
    std::optional<unsigned> threads;
};

void add_common(CLI::App& app, Common& c, bool with_out = true) {
    app.add_option("--config", c.config, "Experiment config (JSON)");
    if (with_out) app.add_option("--out", c.out, "Output directory");
    app.add_option("--seed", c.seed, "Global seed (overrides the config)");
    app.add_option("--threads", c.threads, "Worker threads (fallback: FLOWLAB_THREADS)")->check(CLI::PositiveNumber);
}

unsigned resolve_threads(const Common& c) {
    if (c.threads) return *c.threads;
    if (const char* env = std::getenv("FLOWLAB_THREADS")) {
        char* end = nullptr;
        const unsigned long v = std::strtoul(env, &end, 10);
        require(end != env && *end == '\0' && v >= 1, Errc::ConfigError, "FLOWLAB_THREADS must be a positive integer");
        return static_cast<unsigned>(v);
    }
    return 1;
}

struct Loaded {
    ExperimentConfig cfg;
    Json raw;
    fs::path out;
    unsigned threads = 1;
};

Loaded load(const Common& c) {
    Loaded l;
    if (c.config.empty()) {
        l.raw = Json{{"version", kConfigVersion}};
    } else {
        try {
            l.raw = io::read_json(c.config);
        } catch (const Error& e) {
            fail(Errc::ConfigError, e.what());
        }
    }
    l.cfg = parse_config(l.raw);
    if (c.seed) {
        l.cfg.seed = *c.seed;
        l.cfg.benchmark.seed = *c.seed;
    }
    l.out = c.out.empty() ? fs::path(l.cfg.output_dir) : fs::path(c.out);
    l.threads = resolve_threads(c);
    return l;
}

class Outputs {
  public:
    Outputs(const Loaded& l, std::string command) : dir_(l.out) {
        manifest_.config_hash = hex64(config_hash(l.raw));
        manifest_.command = std::move(command);
        manifest_.started = utc_timestamp();
        const std::uint64_t s = l.cfg.seed;
        manifest_.seeds = Json{{"global", s},
                               {"task", derive_seed(s, "task")},
                               {"init", derive_seed(s, "init")},
                               {"shuffle", derive_seed(s, "shuffle")},
                               {"mc", derive_seed(s, "mc")}};
    }

    void text(const std::string& name, const std::string& body) {
        io::write_text(dir_ / name, body);
        manifest_.outputs.push_back(name);
    }
    void json(const std::string& name, const Json& body) {
        io::write_json(dir_ / name, body);
        manifest_.outputs.push_back(name);
    }
    void finish() {
        manifest_.finished = utc_timestamp();
        io::write_json(dir_ / "manifest.json", manifest_.to_json());
    }

  private:
    fs::path dir_;
    RunManifest manifest_;
};

// ---------------------------------------------------------------------------

int cmd_weights(const std::string& losses_path, const std::string& policy_text, const std::string& out_path,
                std::ostream& out) {
    const LossVector losses = io::read_losses_csv(losses_path);
    const TemperaturePolicy policy = TemperaturePolicy::parse(policy_text);
    const WeightVector weights = compute_weights(losses, select_temperature(losses, policy));
    normalize_weights(weights);  // raises AllZeroWeights
    io::write_text(out_path, io::weights_csv(weights));
    io::write_json(io::sidecar_path(out_path), io::weights_sidecar(weights, policy));
    out << "wrote " << weights.values.size() << " weights (tau " << io::format_double(weights.tau) << ") to "
        << out_path << "\n";
    return kOk;
}

theory::LinearTaskSpec<double> theory_task(const ExperimentConfig& c, Eigen::Index d, double rho) {
    auto spec = theory::make_task<double>(d, rho, c.theory.gap_norm, c.seed);
    if (!c.theory.sigma_pre_diag.empty() && d == c.theory.d) {
        const Eigen::VectorXd diag = Eigen::Map<const Eigen::VectorXd>(c.theory.sigma_pre_diag.data(), d);
        spec = theory::with_sigma_pre<double>(spec, diag.asDiagonal());
    }
    return spec;
}

int cmd_verify_covariance(const Loaded& l, std::ostream& out) {
    const TheoryParams& t = l.cfg.theory;
    Outputs files(l, "theory verify-covariance");
    double worst = 0;
    int points = 0;
    const auto started = std::chrono::steady_clock::now();
    for (const Eigen::Index d : t.dims)
        for (const double rho : t.rhos)
            for (const double alpha : t.alphas) {
                const auto spec = theory_task(l.cfg, d, rho);
                const double tau = alpha * spec.gap_norm() * spec.gap_norm();
                const Eigen::MatrixXd closed = theory::weighted_covariance_closed(spec, tau);
                const Eigen::MatrixXd mc = theory::weighted_covariance_mc(
                    spec.sigma_tilde(), spec.e, tau, t.mc_samples, derive_seed(l.cfg.seed, "mc"), l.threads);
                const double err = (closed - mc).cwiseAbs().maxCoeff();
                worst = std::max(worst, err);
                ++points;
                files.text("covariance_d" + std::to_string(d) + "_rho" + io::format_double(rho) + "_alpha" +
                               io::format_double(alpha) + ".csv",
                           io::covariance_csv(closed, mc));
                out << "d=" << d << " rho=" << rho << " alpha=" << alpha << " max_abs_err=" << io::format_double(err)
                    << (err <= t.tolerance ? " ok" : " FAIL") << "\n";
            }
    files.finish();
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    const bool ok = worst <= t.tolerance;
    out << "max abs error " << io::format_double(worst) << " over " << points << " grid points (tolerance "
        << io::format_double(t.tolerance) << ", " << t.mc_samples << " samples, " << secs << " s): "
        << (ok ? "PASS" : "FAIL") << "\n";
    return ok ? kOk : kVerificationFailed;
}

int cmd_trajectory(const Loaded& l, const std::string& which, std::ostream& out) {
    const TheoryParams& t = l.cfg.theory;
    const auto spec = theory_task(l.cfg, t.d, t.rho);
    Outputs files(l, "theory trajectory");
    if (which != "flow") {
        files.text("trajectory_vanilla.csv", io::trajectory_csv({theory::vanilla_ft_trajectory(spec, t.eta, t.k_max)}));
        out << "vanilla: " << t.k_max + 1 << " rows\n";
    }
    if (which != "vanilla")
        for (const double beta : t.betas) {
            files.text("trajectory_flow_beta" + io::format_double(beta) + ".csv",
                       io::trajectory_csv({theory::flow_trajectory(spec, beta, t.k_max)}));
            out << "flow beta=" << beta << ": " << t.k_max + 1 << " rows\n";
        }
    files.finish();
    return kOk;
}

int cmd_eigen(const Loaded& l, std::ostream& out) {
    const TheoryParams& t = l.cfg.theory;
    std::string csv = "beta,rho,mu,lambda1,lambda2,v1_e,v1_eperp,v2_e,v2_eperp\n";
    for (const double beta : t.betas) {
        const auto sp = theory::q_eigen(beta, t.rho);
        const std::string row = io::format_double(beta) + ',' + io::format_double(t.rho) + ',' +
                                io::format_double(sp.mu) + ',' + io::format_double(sp.lambda1) + ',' +
                                io::format_double(sp.lambda2) + ',' + io::format_double(sp.v1[0]) + ',' +
                                io::format_double(sp.v1[1]) + ',' + io::format_double(sp.v2[0]) + ',' +
                                io::format_double(sp.v2[1]);
        csv += row + '\n';
        out << row << "\n";
    }
    Outputs files(l, "theory eigen");
    files.text("eigen.csv", csv);
    files.finish();
    return kOk;
}

int cmd_averaging(const Loaded& l, std::ostream& out) {
    const TheoryParams& t = l.cfg.theory;
    const auto spec = theory_task(l.cfg, t.d, t.rho);
    const auto cmp = theory::flow_beats_averaging_check(spec, theory::uniform_beta_grid<double>(t.beta_grid), t.k_max);
    const std::string row = io::format_double(t.rho) + ',' + io::format_double(cmp.omega_star) + ',' +
                            io::format_double(cmp.err_star) + ',' + io::format_double(cmp.flow_min) + ',' +
                            io::format_double(cmp.beta_at) + ',' + std::to_string(cmp.k_at) + ',' +
                            io::format_double(cmp.gap_sq) + ',' + (cmp.holds ? "true" : "false");
    Outputs files(l, "theory averaging");
    files.text("averaging.csv", "rho,omega_star,err_star,flow_min,beta_at,k_at,gap_sq,holds\n" + row + "\n");
    files.finish();
    out << "flow min err_tot " << io::format_double(cmp.flow_min) << " at beta=" << cmp.beta_at << " K=" << cmp.k_at
        << "; averaging err* " << io::format_double(cmp.err_star) << " at omega*=" << cmp.omega_star << ": "
        << (cmp.holds ? "PASS" : "FAIL") << "\n";
    return cmp.holds ? kOk : kVerificationFailed;
}

int cmd_train(const Loaded& l, const std::string& method_label, std::ostream& out) {
    const ExperimentConfig& c = l.cfg;
    ComparisonSetup setup = c.setup;
    setup.threads = l.threads;
    if (!method_label.empty()) {
        const auto it = std::find_if(setup.methods.begin(), setup.methods.end(),
                                     [&](const TrainConfig& m) { return m.label() == method_label; });
        require(it != setup.methods.end(), Errc::ConfigError, "no method labelled '" + method_label + "'");
        setup.methods = {*it};
    } else {
        setup.methods.resize(1);
    }
    const ComparisonRun run = run_comparison_full(c.benchmark, setup);
    Outputs files(l, "train");
    files.json("pretrained.json", io::checkpoint_json(run.pretrained));
    files.json("model_task_a.json", io::checkpoint_json(run.models[0].task_a));
    files.json("model_task_b.json", io::checkpoint_json(run.models[0].task_b));
    files.text("metrics.csv", io::report_csv(run.report.rows));
    const TrainConfig& m = setup.methods[0];
    if (std::holds_alternative<method::Flow>(m.method) || std::holds_alternative<method::DroContrast>(m.method)) {
        TrainConfig cfg = m;
        cfg.seed = derive_seed(c.benchmark.seed, "shuffle") ^ m.seed;
        const FlowOutcome flow = flow_multihead(run.pretrained, run.data.task_b.train, cfg);
        files.text("losses.csv", io::losses_csv(flow.losses));
        files.text("weights.csv", io::weights_csv(flow.weights));
    }
    files.finish();
    const ReportRow& r = run.report.rows[0];
    out << r.method << ": pretrain_acc " << r.pretrain_acc << " target_acc " << r.target_acc << "\n";
    return kOk;
}

int cmd_compare(const Loaded& l, std::ostream& out) {
    const ExperimentConfig& c = l.cfg;
    ComparisonSetup setup = c.setup;
    setup.threads = l.threads;
    const ComparisonRun run = run_comparison_full(c.benchmark, setup);
    Outputs files(l, "compare");
    files.text("report.csv", io::report_csv(run.report.rows));
    files.json("report.json", io::report_json(run.report));
    for (const auto& r : run.report.rows)
        out << r.method << ": pretrain " << r.pretrain_acc << " target " << r.target_acc << " average " << r.average
            << " hard " << r.hard_acc << "\n";

    if (!c.sweep_alphas.empty()) {
        std::vector<ReportRow> rows;
        for (std::size_t i = 0; i < setup.methods.size(); ++i) {
            const std::string kind = method_kind(setup.methods[i].method);
            if (kind != "standard" && kind != "flow") continue;
            auto sweep = averaging_sweep(run.pretrained, run.models[i].task_b, c.sweep_alphas, run.data,
                                         run.hard_losses, setup.hard_fraction);
            for (auto& r : sweep) r.method = setup.methods[i].label() + "/" + r.method;
            rows.insert(rows.end(), sweep.begin(), sweep.end());
        }
        files.text("sweep.csv", io::report_csv(rows));
    }
    if (!c.ablation_percentiles.empty()) {
        const auto flow = std::find_if(setup.methods.begin(), setup.methods.end(), [](const TrainConfig& m) {
            return std::holds_alternative<method::Flow>(m.method);
        });
        const TrainConfig base = flow == setup.methods.end() ? default_finetune_config(method::Flow{}) : *flow;
        const EvalReport ablation =
            tau_ablation(c.benchmark, c.ablation_percentiles, base, setup.pretrain, setup.threads);
        files.text("ablation.csv", io::report_csv(ablation.rows));
        files.json("ablation.json", io::report_json(ablation));
    }
    files.finish();
    return kOk;
}

}  // namespace

int exit_code_for(Errc code) noexcept {
    switch (code) {
        case Errc::AllZeroWeights:
            return kDegenerateWeights;
        case Errc::DivergenceDetected:
        case Errc::NonFiniteGradient:
            return kDivergence;
        default:
            return kInputError;
    }
}

int selftest(const SelftestHooks& hooks, unsigned threads, std::ostream& out) {
    const auto started = std::chrono::steady_clock::now();
    const auto results = run_selftest(hooks, threads);
    int failed = 0;
    for (const auto& r : results) {
        out << (r.passed ? "PASS " : "FAIL ") << r.name << ": " << r.detail << "\n";
        if (!r.passed) ++failed;
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    out << results.size() - static_cast<std::size_t>(failed) << "/" << results.size() << " checks passed in " << secs
        << " s\n";
    return failed == 0 ? kOk : kVerificationFailed;
}

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"FLOW sample weighting: weights, linear theory checks and fine-tuning benchmarks", "flowlab"};
    app.require_subcommand(1);
    app.set_version_flag("--version", kLibraryVersion);

    std::string losses_path, policy = "median", weights_out;
    auto* weights = app.add_subcommand("weights", "Compute FLOW weights from a loss CSV");
    weights->add_option("--losses", losses_path, "CSV with header 'loss'")->required();
    weights->add_option("--policy", policy, "median | percentile:<p> | fixed:<tau>");
    weights->add_option("--out", weights_out, "Weights CSV; the sidecar goes next to it as .json")->required();

    Common theory_opts;
    std::string which = "both";
    auto* theory = app.add_subcommand("theory", "Linear-model theory checks");
    theory->require_subcommand(1);
    auto* verify = theory->add_subcommand("verify-covariance", "Closed-form vs Monte-Carlo weighted covariance");
    auto* trajectory = theory->add_subcommand("trajectory", "Vanilla and FLOW GD trajectories");
    auto* eigen = theory->add_subcommand("eigen", "Closed-form spectrum of Q per beta");
    auto* averaging = theory->add_subcommand("averaging", "FLOW sweep vs optimal model averaging");
    for (auto* sub : {verify, trajectory, eigen, averaging}) add_common(*sub, theory_opts);
    trajectory->add_option("--method", which, "vanilla | flow | both")
        ->check(CLI::IsMember({"vanilla", "flow", "both"}));

    Common train_opts;
    std::string method_label;
    auto* train = app.add_subcommand("train", "Pre-train on task A and fine-tune one method on task B");
    add_common(*train, train_opts);
    train->add_option("--method", method_label, "Method label from the config (default: the first)");

    Common compare_opts;
    auto* compare = app.add_subcommand("compare", "Run every configured method and write the report");
    add_common(*compare, compare_opts);

    Common selftest_opts;
    auto* self = app.add_subcommand("selftest", "Fast built-in verification suite");
    self->add_option("--threads", selftest_opts.threads, "Worker threads")->check(CLI::PositiveNumber);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? kOk : kInputError;
    }

    try {
        if (weights->parsed()) return cmd_weights(losses_path, policy, weights_out, out);
        if (verify->parsed()) return cmd_verify_covariance(load(theory_opts), out);
        if (trajectory->parsed()) return cmd_trajectory(load(theory_opts), which, out);
        if (eigen->parsed()) return cmd_eigen(load(theory_opts), out);
        if (averaging->parsed()) return cmd_averaging(load(theory_opts), out);
        if (train->parsed()) return cmd_train(load(train_opts), method_label, out);
        if (compare->parsed()) return cmd_compare(load(compare_opts), out);
        if (self->parsed()) return selftest({}, resolve_threads(selftest_opts), out);
    } catch (const Error& e) {
        err << "error [" << to_string(e.code()) << "]: " << e.what() << "\n";
        return exit_code_for(e.code());
    } catch (const std::filesystem::filesystem_error& e) {
        err << "error: " << e.what() << "\n";
        return kInputError;
    }
    return kInputError;
}

int run(const std::vector<const char*>& args, std::ostream& out, std::ostream& err) {
    return run(static_cast<int>(args.size()), args.data(), out, err);
}

}  // namespace flowlab::cli
