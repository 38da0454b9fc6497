#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "flowlab/config.hpp"
#include "flowlab/io.hpp"

#include <cmath>
#include <filesystem>
#include <limits>

using namespace flowlab;
using io::Json;

namespace {

Error error_of(auto&& fn) {
    try {
        fn();
    } catch (const Error& e) {
        return e;
    }
    FAIL("expected an error");
    return Error(Errc::ConfigError, "");
}

std::filesystem::path scratch(const std::string& name) {
    const auto dir = std::filesystem::temp_directory_path() / "flowlab_io_test";
    std::filesystem::create_directories(dir);
    return dir / name;
}

}  // namespace

TEST_CASE("number formatting") {
    CHECK(io::format_double(0.1) == "0.1");
    CHECK(io::format_double(-0.0) == "0");
    CHECK(io::format_double(1e-300) == "1e-300");
    CHECK(io::format_double(std::numeric_limits<double>::quiet_NaN()) == "nan");
    CHECK(io::format_double(-std::numeric_limits<double>::infinity()) == "-inf");
    for (double v : {1.0 / 3, 2.0 / 7, 1e17 + 8, 0.19245008972987526})
        CHECK(std::stod(io::format_double(v)) == v);
}

TEST_CASE("loss CSV") {
    const auto l = io::parse_losses_csv("loss\n0.5\n1\n\n2.25\n");
    REQUIRE(l.size() == 3);
    CHECK(l[2] == 2.25);
    CHECK(io::parse_losses_csv("loss\r\n3\r\n")[0] == 3.0);
    CHECK(io::parse_losses_csv(io::losses_csv(l)).values() == l.values());

    const auto bad = error_of([] { io::parse_losses_csv("loss\n1\n2\nabc\n"); });
    CHECK(bad.code() == Errc::ParseError);
    CHECK(std::string(bad.what()).find("line 4") != std::string::npos);
    CHECK(error_of([] { io::parse_losses_csv("value\n1\n"); }).code() == Errc::ParseError);
    CHECK(error_of([] { io::parse_losses_csv("loss\n"); }).code() == Errc::EmptyInput);
    CHECK(error_of([] { io::parse_losses_csv("loss\n-1\n"); }).code() == Errc::NegativeLoss);
    CHECK(error_of([] { io::parse_losses_csv("loss\nnan\n"); }).code() == Errc::NonFiniteLoss);
    CHECK(error_of([] { io::read_losses_csv(scratch("missing.csv")); }).code() == Errc::ParseError);
}

TEST_CASE("weights output") {
    const WeightVector w{Eigen::Vector2d(1.0, 0.25), 0.5};
    CHECK(io::weights_csv(w) == "index,weight\n0,1\n1,0.25\n");
    CHECK(io::sidecar_path("out/w.csv") == std::filesystem::path("out/w.json"));
    const Json side = io::weights_sidecar(w, TemperaturePolicy::percentile(80));
    CHECK(side["tau"] == 0.5);
    CHECK(side["policy"] == "percentile:80");
}

TEST_CASE("report serialisation") {
    EvalReport r;
    r.spec_hash = 0xabcdef;
    r.seed = 3;
    r.rows = {{"flow", 0.5, 0.75, 0.625, -0.1, std::numeric_limits<double>::quiet_NaN(), 0.2}};
    const std::string csv = io::report_csv(r.rows);
    CHECK(csv.rfind("method,pretrain_acc,target_acc,average,delta_pre,delta_target,hard_acc\n", 0) == 0);
    CHECK(csv.find("flow,0.5,0.75,0.625,-0.1,nan,0.2") != std::string::npos);
    const Json j = io::report_json(r);
    CHECK(j["spec_hash"] == "0000000000abcdef");
    CHECK(j["rows"][0]["delta_target"].is_null());
    CHECK(j["rows"][0]["target_acc"] == 0.75);
}

TEST_CASE("checkpoint round trip") {
    MultiHeadModel m = init_model(3, 4, "A", 2, 9);
    add_zero_head(m, "B", 5);
    m.head("B").bias.setConstant(1.0 / 3);
    const Json j = io::checkpoint_json(m);
    CHECK(j["dims"]["hidden"] == 4);
    CHECK(j["dims"]["heads"]["B"] == 5);
    const MultiHeadModel back = io::model_from_checkpoint(Json::parse(j.dump()));
    CHECK(back == m);

    Json broken = j;
    broken["dims"]["hidden"] = 5;
    CHECK(error_of([&] { io::model_from_checkpoint(broken); }).code() == Errc::ParseError);

    const auto path = scratch("nested/dir/model.json");
    io::write_json(path, j);
    CHECK(io::model_from_checkpoint(io::read_json(path)) == m);
    io::write_text(scratch("plain.txt"), "abc");
    CHECK(io::read_text(scratch("plain.txt")) == "abc");
    io::write_text(scratch("bad.json"), "{");
    CHECK(error_of([] { io::read_json(scratch("bad.json")); }).code() == Errc::ParseError);
}

TEST_CASE("config parsing") {
    SUBCASE("defaults") {
        const auto c = parse_config(Json{{"version", 1}});
        CHECK(c.seed == 0);
        CHECK(c.setup.methods.size() == 6);
        CHECK(c.benchmark == BenchmarkSpec{});
        CHECK(c.theory.mc_samples == 2'000'000);
    }
    SUBCASE("full document") {
        const Json j = Json::parse(R"({
            "version": 1, "seed": 7, "output_dir": "runs/a",
            "benchmark": {"dim": 8, "classes": 3, "shift": 0.5},
            "pretrain": {"learning_rate": 0.2, "epochs": 10},
            "methods": [
                {"method": "flow", "temperature": "percentile:80", "epochs": 5, "batch_size": 32},
                {"method": "wise_ft", "alpha": 0.25, "name": "wise_quarter"},
                {"method": "l2reg", "lambda": 0.1}
            ],
            "hard_fraction": 0.2,
            "sweep_alphas": [0, 0.5, 1],
            "ablation_percentiles": [25, 50],
            "theory": {"d": 6, "betas": [0.5], "mc_samples": 1000}
        })");
        const auto c = parse_config(j);
        CHECK(c.seed == 7);
        CHECK(c.benchmark.seed == 7);
        CHECK(c.benchmark.dim == 8);
        CHECK(c.benchmark.shift == 0.5);
        CHECK(c.output_dir == "runs/a");
        CHECK(c.setup.pretrain.epochs == 10);
        REQUIRE(c.setup.methods.size() == 3);
        CHECK(std::get<method::Flow>(c.setup.methods[0].method).temperature == TemperaturePolicy::percentile(80));
        CHECK(c.setup.methods[0].batch_size == 32);
        CHECK(c.setup.methods[1].label() == "wise_quarter");
        CHECK(std::get<method::WiseFT>(c.setup.methods[1].method).alpha == 0.25);
        CHECK(std::get<method::L2Reg>(c.setup.methods[2].method).lambda == 0.1);
        CHECK(c.setup.hard_fraction == 0.2);
        CHECK(c.sweep_alphas.size() == 3);
        CHECK(c.ablation_percentiles == std::vector<double>{25, 50});
        CHECK(c.theory.d == 6);
        CHECK(c.theory.mc_samples == 1000);
    }
    SUBCASE("errors name the offending field") {
        auto msg = [](const std::string& text) {
            const Error e = error_of([&] { parse_config(Json::parse(text)); });
            CHECK(e.code() == Errc::ConfigError);
            return std::string(e.what());
        };
        CHECK(msg(R"({"seed": 1})").find("version") != std::string::npos);
        CHECK(msg(R"({"version": 2})").find("version") != std::string::npos);
        CHECK(msg(R"({"version": 1, "sede": 1})").find("unknown key 'sede'") != std::string::npos);
        CHECK(msg(R"({"version": 1, "benchmark": {"dimm": 3}})").find("benchmark.dimm") != std::string::npos);
        CHECK(msg(R"({"version": 1, "methods": [{"method": "wise_ft", "alpha": 1.5}]})")
                  .find("methods[0].alpha") != std::string::npos);
        CHECK(msg(R"({"version": 1, "methods": [{"method": "standard", "alpha": 0.5}]})")
                  .find("methods[0].alpha") != std::string::npos);
        CHECK(msg(R"({"version": 1, "methods": [{"method": "flow", "temperature": "percentile:120"}]})")
                  .find("methods[0].temperature") != std::string::npos);
        CHECK(msg(R"({"version": 1, "methods": [{"method": "sgd"}]})").find("sgd") != std::string::npos);
        CHECK(msg(R"({"version": 1, "methods": [{"method": "flow"}, {"method": "flow"}]})")
                  .find("methods[1]") != std::string::npos);
        CHECK(msg(R"({"version": 1, "seed": "x"})").find("seed") != std::string::npos);
        CHECK(msg(R"({"version": 1, "hard_fraction": 0})").find("hard_fraction") != std::string::npos);
        CHECK(msg(R"({"version": 1, "sweep_alphas": [0.5, 2]})").find("sweep_alphas") != std::string::npos);
        CHECK(msg(R"({"version": 1, "ablation_percentiles": [100]})").find("ablation_percentiles") !=
              std::string::npos);
        CHECK(msg(R"({"version": 1, "methods": []})").find("methods") != std::string::npos);
    }
    SUBCASE("loading from disk") {
        io::write_text(scratch("cfg.json"), R"({"version": 1, "seed": 4})");
        CHECK(load_config(scratch("cfg.json")).seed == 4);
        io::write_text(scratch("cfg_bad.json"), "{version");
        CHECK(error_of([] { load_config(scratch("cfg_bad.json")); }).code() == Errc::ConfigError);
    }
}

TEST_CASE("config hash") {
    const Json a = Json::parse(R"({"version": 1, "seed": 3, "benchmark": {"dim": 8, "shift": 0.5}})");
    const Json b = Json::parse(R"({"benchmark": {"shift": 0.5, "dim": 8}, "seed": 3, "version": 1})");
    const Json c = Json::parse(R"({"version": 1, "seed": 4, "benchmark": {"dim": 8, "shift": 0.5}})");
    CHECK(config_hash(a) == config_hash(b));
    CHECK(config_hash(a) != config_hash(c));
    CHECK(hex64(0x1f) == "000000000000001f");
    CHECK(hex64(config_hash(a)).size() == 16);
}

TEST_CASE("run manifest") {
    RunManifest m;
    m.config_hash = "00ff";
    m.command = "compare";
    m.outputs = {"report.csv"};
    m.seeds["global"] = 3;
    const Json j = m.to_json();
    CHECK(j["library_version"] == kLibraryVersion);
    CHECK(j["outputs"][0] == "report.csv");
    CHECK(j["seeds"]["global"] == 3);
    const std::string t = utc_timestamp();
    CHECK(t.size() == 20);
    CHECK(t.back() == 'Z');
    CHECK(t[10] == 'T');
}
