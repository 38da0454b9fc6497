#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "flowlab/cli.hpp"
#include "flowlab/io.hpp"

#include <filesystem>
#include <sstream>

using namespace flowlab;
namespace fs = std::filesystem;

namespace {

struct Result {
    int code;
    std::string out;
    std::string err;
};

Result run_cli(std::vector<const char*> args) {
    args.insert(args.begin(), "flowlab");
    std::ostringstream out, err;
    const int code = cli::run(args, out, err);
    return {code, out.str(), err.str()};
}

fs::path scratch(const std::string& name) {
    const auto dir = fs::temp_directory_path() / "flowlab_cli_test";
    fs::create_directories(dir);
    return dir / name;
}

std::string write(const std::string& name, const std::string& body) {
    io::write_text(scratch(name), body);
    return scratch(name).string();
}

int count_lines(const std::string& text) {
    int n = 0;
    for (char c : text) n += c == '\n';
    return n;
}

const char* kSmallConfig = R"({
  "version": 1,
  "seed": 3,
  "benchmark": {"dim": 4, "classes": 2, "train_per_task": 80, "test_per_task": 60, "hidden": 6},
  "pretrain": {"learning_rate": 0.5, "epochs": 30},
  "methods": [
    {"method": "standard", "epochs": 20, "probe_epochs": 10},
    {"method": "flow", "epochs": 20, "probe_epochs": 10},
    {"method": "linear_probe", "probe_epochs": 10}
  ],
  "sweep_alphas": [0, 1],
  "ablation_percentiles": [50]
})";

}  // namespace

TEST_CASE("exit code mapping") {
    CHECK(cli::exit_code_for(Errc::AllZeroWeights) == 3);
    CHECK(cli::exit_code_for(Errc::DivergenceDetected) == 5);
    CHECK(cli::exit_code_for(Errc::NonFiniteGradient) == 5);
    CHECK(cli::exit_code_for(Errc::ParseError) == 2);
    CHECK(cli::exit_code_for(Errc::ConfigError) == 2);
    CHECK(cli::exit_code_for(Errc::NegativeLoss) == 2);
}

TEST_CASE("argument handling") {
    CHECK(run_cli({}).code == 2);
    CHECK(run_cli({"bogus"}).code == 2);
    CHECK(run_cli({"weights", "--losses", "x.csv"}).code == 2);
    CHECK(run_cli({"theory", "trajectory", "--method", "sideways"}).code == 2);
    const auto help = run_cli({"--help"});
    CHECK(help.code == 0);
    CHECK(help.out.find("weights") != std::string::npos);
    CHECK(run_cli({"--version"}).code == 0);
}

TEST_CASE("weights subcommand") {
    const std::string losses = write("losses.csv", "loss\n0.2\n1.0\n3.0\n0.5\n2.0\n");
    const std::string out = scratch("w/weights.csv").string();

    SUBCASE("percentile policy writes weights and sidecar") {
        const auto r = run_cli({"weights", "--losses", losses.c_str(), "--policy", "percentile:80", "--out",
                                out.c_str()});
        REQUIRE(r.code == 0);
        const std::string csv = io::read_text(out);
        CHECK(csv.rfind("index,weight\n", 0) == 0);
        CHECK(count_lines(csv) == 6);
        const auto side = io::read_json(io::sidecar_path(out));
        CHECK(side["policy"] == "percentile:80");
        // sorted [0.2, 0.5, 1, 2, 3]: position 3.2 -> 2.2
        CHECK(side["tau"].get<double>() == doctest::Approx(2.2).epsilon(1e-14));
    }
    SUBCASE("median default") {
        REQUIRE(run_cli({"weights", "--losses", losses.c_str(), "--out", out.c_str()}).code == 0);
        CHECK(io::read_json(io::sidecar_path(out))["tau"] == 1.0);
        CHECK(io::read_text(out).find("1,0.36787944117144") != std::string::npos);
    }
    SUBCASE("failure codes") {
        CHECK(run_cli({"weights", "--losses", losses.c_str(), "--policy", "fixed:0.0001", "--out", out.c_str()})
                  .code == 3);
        const std::string bad = write("bad.csv", "loss\n1\n2\nabc\n");
        const auto r = run_cli({"weights", "--losses", bad.c_str(), "--out", out.c_str()});
        CHECK(r.code == 2);
        CHECK(r.err.find("line 4") != std::string::npos);
        const std::string negative = write("neg.csv", "loss\n1\n-2\n");
        CHECK(run_cli({"weights", "--losses", negative.c_str(), "--out", out.c_str()}).code == 2);
        CHECK(run_cli({"weights", "--losses", losses.c_str(), "--policy", "mean", "--out", out.c_str()}).code == 2);
        CHECK(run_cli({"weights", "--losses", scratch("nope.csv").c_str(), "--out", out.c_str()}).code == 2);
    }
}

TEST_CASE("theory subcommands") {
    const std::string dir = scratch("theory").string();

    SUBCASE("trajectory") {
        REQUIRE(run_cli({"theory", "trajectory", "--out", dir.c_str()}).code == 0);
        const std::string vanilla = io::read_text(fs::path(dir) / "trajectory_vanilla.csv");
        CHECK(vanilla.rfind("k,method,coef_e,coef_eperp,err1,err2,err_tot,gamma\n", 0) == 0);
        CHECK(count_lines(vanilla) == 52);
        CHECK(vanilla.find("\n0,vanilla,1,0,") != std::string::npos);
        const std::string flow = io::read_text(fs::path(dir) / "trajectory_flow_beta0.01.csv");
        CHECK(count_lines(flow) == 52);
        const auto manifest = io::read_json(fs::path(dir) / "manifest.json");
        CHECK(manifest["command"] == "theory trajectory");
        CHECK(manifest["outputs"].size() == 4);
        CHECK(manifest["config_hash"].get<std::string>().size() == 16);
    }
    SUBCASE("eigen") {
        const auto r = run_cli({"theory", "eigen", "--out", dir.c_str()});
        REQUIRE(r.code == 0);
        const std::string csv = io::read_text(fs::path(dir) / "eigen.csv");
        CHECK(count_lines(csv) == 4);
        CHECK(csv.find("\n1,0.5,0.7071067811865476,0.625,0,") != std::string::npos);
    }
    SUBCASE("averaging") {
        const auto r = run_cli({"theory", "averaging", "--out", dir.c_str()});
        CHECK(r.code == 0);
        CHECK(r.out.find("PASS") != std::string::npos);
    }
    SUBCASE("verify-covariance on a reduced grid") {
        const std::string cfg = write("cov.json", R"({"version": 1, "theory": {"dims": [2], "rhos": [0.5],
            "alphas": [1], "mc_samples": 200000, "tolerance": 0.02}})");
        const auto r = run_cli({"theory", "verify-covariance", "--config", cfg.c_str(), "--out", dir.c_str()});
        CHECK(r.code == 0);
        CHECK(fs::exists(fs::path(dir) / "covariance_d2_rho0.5_alpha1.csv"));
        const std::string tight = write("cov_tight.json", R"({"version": 1, "theory": {"dims": [2], "rhos": [0.5],
            "alphas": [1], "mc_samples": 1000, "tolerance": 1e-9}})");
        CHECK(run_cli({"theory", "verify-covariance", "--config", tight.c_str(), "--out", dir.c_str()}).code == 4);
    }
    SUBCASE("config errors") {
        const std::string unknown = write("unknown.json", R"({"version": 1, "thoery": {}})");
        const auto r = run_cli({"theory", "eigen", "--config", unknown.c_str(), "--out", dir.c_str()});
        CHECK(r.code == 2);
        CHECK(r.err.find("thoery") != std::string::npos);
        CHECK(run_cli({"theory", "eigen", "--config", scratch("absent.json").c_str()}).code == 2);
    }
}

TEST_CASE("selftest") {
    std::ostringstream out;
    CHECK(cli::selftest({}, 1, out) == 0);
    const std::string text = out.str();
    int pass = 0;
    for (std::size_t p = text.find("PASS "); p != std::string::npos; p = text.find("PASS ", p + 1)) ++pass;
    CHECK(pass >= 10);
    CHECK(text.find("FAIL") == std::string::npos);
    CHECK(run_cli({"selftest"}).code == 0);

    SUBCASE("a corrupted eigenvalue is caught") {
        SelftestHooks broken;
        broken.q_eigen = [](double beta, double rho) {
            auto sp = theory::q_eigen<double>(beta, rho);
            sp.lambda2 = -sp.lambda2 - 0.01;
            return sp;
        };
        std::ostringstream bad;
        CHECK(cli::selftest(broken, 1, bad) == 4);
        CHECK(bad.str().find("FAIL") != std::string::npos);
    }
}

TEST_CASE("train and compare") {
    const std::string cfg = write("small.json", kSmallConfig);

    SUBCASE("train writes checkpoints and weights") {
        const std::string dir = scratch("train").string();
        REQUIRE(run_cli({"train", "--config", cfg.c_str(), "--method", "flow", "--out", dir.c_str()}).code == 0);
        for (const char* f : {"pretrained.json", "model_task_a.json", "model_task_b.json", "metrics.csv",
                              "losses.csv", "weights.csv", "manifest.json"})
            CHECK(fs::exists(fs::path(dir) / f));
        const auto b = io::model_from_checkpoint(io::read_json(fs::path(dir) / "model_task_b.json"));
        CHECK(b.has_head("A"));
        CHECK(b.has_head("B"));
        CHECK(count_lines(io::read_text(fs::path(dir) / "weights.csv")) == 81);
        CHECK(run_cli({"train", "--config", cfg.c_str(), "--method", "dro", "--out", dir.c_str()}).code == 2);
    }
    SUBCASE("compare is byte-identical across runs and thread counts") {
        const std::string a = scratch("cmp_a").string();
        const std::string b = scratch("cmp_b").string();
        REQUIRE(run_cli({"compare", "--config", cfg.c_str(), "--out", a.c_str()}).code == 0);
        REQUIRE(run_cli({"compare", "--config", cfg.c_str(), "--out", b.c_str(), "--threads", "3"}).code == 0);
        for (const char* f : {"report.csv", "report.json", "sweep.csv", "ablation.csv"})
            CHECK(io::read_text(fs::path(a) / f) == io::read_text(fs::path(b) / f));
        const auto report = io::read_json(fs::path(a) / "report.json");
        CHECK(report["rows"].size() == 3);
        CHECK(report["rows"][2]["delta_pre"] == 0.0);
        CHECK(count_lines(io::read_text(fs::path(a) / "sweep.csv")) == 5);

        const std::string c = scratch("cmp_c").string();
        REQUIRE(run_cli({"compare", "--config", cfg.c_str(), "--out", c.c_str(), "--seed", "4"}).code == 0);
        CHECK(io::read_text(fs::path(a) / "report.csv") != io::read_text(fs::path(c) / "report.csv"));
    }
    SUBCASE("divergent training exits 5") {
        const std::string hot = write("hot.json", R"({"version": 1,
            "benchmark": {"dim": 4, "classes": 2, "train_per_task": 50, "test_per_task": 50, "hidden": 4},
            "pretrain": {"learning_rate": 1e308, "epochs": 20},
            "methods": [{"method": "standard", "epochs": 2, "probe_epochs": 2}]})");
        CHECK(run_cli({"train", "--config", hot.c_str(), "--out", scratch("hot").c_str()}).code == 5);
    }
}
