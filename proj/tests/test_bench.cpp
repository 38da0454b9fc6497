#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "flowlab/bench.hpp"

#include <cmath>
#include <random>
#include <set>

using namespace flowlab;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

Errc code_of(auto&& fn) {
    try {
        fn();
    } catch (const Error& e) {
        return e.code();
    }
    FAIL("expected an error");
    return Errc::ConfigError;
}

BenchmarkSpec small_spec(std::uint64_t seed = 1) {
    BenchmarkSpec s;
    s.dim = 6;
    s.classes = 3;
    s.train_per_task = 150;
    s.test_per_task = 120;
    s.hidden = 8;
    s.seed = seed;
    return s;
}

TrainConfig quick(Method m) {
    TrainConfig cfg = default_finetune_config(std::move(m));
    cfg.epochs = 40;
    cfg.probe_epochs = 20;
    return cfg;
}

ComparisonSetup small_setup() {
    ComparisonSetup setup;
    setup.pretrain = default_pretrain_config();
    setup.pretrain.epochs = 60;
    setup.methods = {quick(method::Standard{}), quick(method::Flow{}), quick(method::LinearProbe{}),
                     quick(method::WiseFT{0.5})};
    return setup;
}

// Class means recovered from a large noise-free draw.
MatrixXd empirical_means(const LabeledDataset& d, int classes) {
    MatrixXd m = MatrixXd::Zero(d.features.cols(), classes);
    VectorXd count = VectorXd::Zero(classes);
    for (Eigen::Index i = 0; i < d.size(); ++i) {
        m.col(d.labels[i]) += d.features.row(i).transpose();
        count[d.labels[i]] += 1;
    }
    for (int c = 0; c < classes; ++c) m.col(c) /= count[c];
    return m;
}

}  // namespace

TEST_CASE("benchmark validation") {
    validate(BenchmarkSpec{});
    auto s = small_spec();
    s.dim = 1;
    CHECK(code_of([&] { validate(s); }) == Errc::DimensionTooSmall);
    s = small_spec();
    s.classes = 7;
    CHECK(code_of([&] { validate(s); }) == Errc::OutOfRange);
    s = small_spec();
    s.noise = 0;
    CHECK(code_of([&] { validate(s); }) == Errc::OutOfRange);
    s = small_spec();
    s.rotation = 4;
    CHECK(code_of([&] { validate(s); }) == Errc::OutOfRange);
}

TEST_CASE("benchmark generation") {
    const auto spec = small_spec();
    const auto a = gen_two_task_benchmark(spec);
    const auto b = gen_two_task_benchmark(spec);
    CHECK(a.task_a.train.features == b.task_a.train.features);
    CHECK(a.task_b.test.features == b.task_b.test.features);
    CHECK(a.task_a.train.task == "A");
    CHECK(a.task_b.train.task == "B");
    CHECK(a.task_a.train.size() == 150);
    CHECK(a.task_b.test.size() == 120);
    CHECK(a.task_a.train.labels[4] == 1);
    CHECK(gen_two_task_benchmark(small_spec(2)).task_a.train.features != a.task_a.train.features);
    CHECK(a.task_a.train.features != a.task_a.test.features);

    SUBCASE("class geometry") {
        auto big = small_spec();
        big.train_per_task = 60'000;
        big.noise = 1e-9;
        const auto d = gen_two_task_benchmark(big);
        const MatrixXd ma = empirical_means(d.task_a.train, 3);
        const MatrixXd mb = empirical_means(d.task_b.train, 3);
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < i; ++j) {
                CHECK((ma.col(i) - ma.col(j)).norm() == doctest::Approx(4.0).epsilon(1e-6));
                CHECK(std::abs(ma.col(i).dot(ma.col(j))) <= 1e-6);
                // rotation preserves distances
                CHECK((mb.col(i) - mb.col(j)).norm() == doctest::Approx(4.0).epsilon(1e-6));
            }
    }
    SUBCASE("no rotation and no shift gives identical tasks") {
        auto same = small_spec();
        same.rotation = 0;
        same.shift = 0;
        same.noise = 1e-9;
        same.train_per_task = 3000;
        const auto d = gen_two_task_benchmark(same);
        CHECK((empirical_means(d.task_a.train, 3) - empirical_means(d.task_b.train, 3)).cwiseAbs().maxCoeff() <=
              1e-6);
    }
    SUBCASE("pure shift moves every mean by shift / sqrt(d) per coordinate") {
        auto shifted = small_spec();
        shifted.rotation = 0;
        shifted.shift = 2.0;
        shifted.noise = 1e-9;
        shifted.train_per_task = 3000;
        const auto d = gen_two_task_benchmark(shifted);
        const MatrixXd gap = empirical_means(d.task_b.train, 3) - empirical_means(d.task_a.train, 3);
        CHECK((gap.array() - 2.0 / std::sqrt(6.0)).abs().maxCoeff() <= 1e-6);
    }
    SUBCASE("quarter turn rotates each coordinate plane") {
        auto turned = small_spec();
        turned.rotation = std::numbers::pi / 2;
        turned.shift = 0;
        turned.noise = 1e-9;
        turned.train_per_task = 3000;
        const auto d = gen_two_task_benchmark(turned);
        const MatrixXd ma = empirical_means(d.task_a.train, 3);
        const MatrixXd mb = empirical_means(d.task_b.train, 3);
        for (Eigen::Index r = 0; r < 6; r += 2) {
            CHECK((mb.row(r) + ma.row(r + 1)).cwiseAbs().maxCoeff() <= 1e-6);
            CHECK((mb.row(r + 1) - ma.row(r)).cwiseAbs().maxCoeff() <= 1e-6);
        }
    }
    SUBCASE("spec hash covers every field") {
        std::set<std::uint64_t> hashes{spec_hash(spec)};
        auto s = spec;
        s.dim = 8;
        hashes.insert(spec_hash(s));
        s = spec;
        s.shift = 1.5000001;
        hashes.insert(spec_hash(s));
        s = spec;
        s.hidden = 9;
        hashes.insert(spec_hash(s));
        s = spec;
        s.seed = 2;
        hashes.insert(spec_hash(s));
        CHECK(hashes.size() == 5);
        CHECK(spec_hash(spec) == spec_hash(small_spec()));
    }
}

TEST_CASE("evaluate") {
    LabeledDataset d;
    d.task = "A";
    d.classes = 3;
    d.features = MatrixXd::Identity(4, 2);
    d.features(3, 0) = 0;
    d.labels = {0, 1, 2, 0};
    MultiHeadModel m;
    m.body = Dense{MatrixXd::Identity(2, 2), VectorXd::Zero(2)};
    // class 2 ties class 0 on the first sample; ties go to class 0
    MatrixXd w(3, 2);
    w << 1, 0, 0, 1, 1, 0;
    m.heads["A"] = Dense{w, VectorXd::Zero(3)};

    // loop oracle
    const MatrixXd logits = m.logits(d.features, "A");
    int correct = 0;
    for (Eigen::Index i = 0; i < 4; ++i) {
        int best = 0;
        for (int c = 1; c < 3; ++c)
            if (logits(i, c) > logits(i, best)) best = c;
        correct += best == d.labels[i];
    }
    CHECK(evaluate(m, d) == correct / 4.0);
    CHECK(evaluate(m, d) == 0.75);

    d.classes = 2;
    d.labels = {0, 1, 1, 0};
    CHECK(code_of([&] { evaluate(m, d); }) == Errc::ArchitectureMismatch);
}

TEST_CASE("hardest indices") {
    const LossVector l(std::vector<double>{0.5, 3.0, 1.0, 3.0, 0.1, 2.0, 0.0, 4.0, 1.5, 2.5});
    CHECK(hardest_indices(l, 0.1) == std::vector<Eigen::Index>{7});
    CHECK(hardest_indices(l, 0.3) == std::vector<Eigen::Index>{1, 3, 7});
    CHECK(hardest_indices(l, 0.25) == std::vector<Eigen::Index>{1, 3, 7});
    CHECK(hardest_indices(l, 1.0).size() == 10);
    CHECK(code_of([&] { hardest_indices(l, 0.0); }) == Errc::OutOfRange);

    SUBCASE("ties go to the lower index") {
        const LossVector flat(std::vector<double>{1, 1, 1, 1});
        CHECK(hardest_indices(flat, 0.5) == std::vector<Eigen::Index>{0, 1});
    }
    SUBCASE("brute-force oracle") {
        std::mt19937_64 rng(5);
        std::uniform_int_distribution<int> u(0, 6);
        for (int t = 0; t < 200; ++t) {
            std::vector<double> v(1 + t % 23);
            for (auto& x : v) x = u(rng);
            const double f = 0.05 + 0.95 * (t % 19) / 18.0;
            const auto got = hardest_indices(LossVector(v), f);
            const auto k = static_cast<std::size_t>(std::ceil(f * v.size() - 1e-9));
            REQUIRE(got.size() == k);
            // every chosen loss beats every unchosen one, or ties with a higher index
            std::set<Eigen::Index> chosen(got.begin(), got.end());
            for (std::size_t i = 0; i < v.size(); ++i)
                for (std::size_t j = 0; j < v.size(); ++j)
                    if (chosen.count(i) && !chosen.count(j)) CHECK((v[i] > v[j] || (v[i] == v[j] && i < j)));
            CHECK(std::is_sorted(got.begin(), got.end()));
        }
    }
}

TEST_CASE("report arithmetic") {
    EvalReport r;
    r.pretrained_acc = 0.9;
    r.rows = {{"standard", 0.6, 0.95, 0, 0, 0, 0.4}, {"flow", 0.8, 0.93, 0, 0, 0, 0.3}};
    finalize(r);
    CHECK(r.row("flow").average == doctest::Approx(0.865).epsilon(1e-15));
    CHECK(r.row("flow").delta_pre == doctest::Approx(-0.1).epsilon(1e-12));
    CHECK(r.row("flow").delta_target == doctest::Approx(-0.02).epsilon(1e-12));
    CHECK(r.row("standard").delta_target == 0.0);
    CHECK(code_of([&] { (void)r.row("dro"); }) == Errc::OutOfRange);

    EvalReport lone;
    lone.rows = {{"flow", 0.5, 0.5, 0, 0, 0, 0}};
    finalize(lone);
    CHECK(std::isnan(lone.rows[0].delta_target));
}

TEST_CASE("comparison on a small benchmark") {
    const auto spec = small_spec();
    const auto setup = small_setup();
    const auto run = run_comparison_full(spec, setup);
    const auto& rep = run.report;
    REQUIRE(rep.rows.size() == 4);
    CHECK(rep.spec_hash == spec_hash(spec));
    CHECK(rep.seed == 1);
    CHECK(rep.pretrained_acc == evaluate(run.pretrained, run.data.task_a.test));
    CHECK(rep.pretrained_acc > 0.8);

    const auto& probe = rep.row("linear_probe");
    CHECK(probe.delta_pre == 0.0);
    CHECK(probe.pretrain_acc == rep.pretrained_acc);
    CHECK(run.models[2].task_b.body == run.pretrained.body);

    for (std::size_t i = 0; i < rep.rows.size(); ++i) {
        const auto& r = rep.rows[i];
        CHECK(r.pretrain_acc == evaluate(run.models[i].task_a, run.data.task_a.test));
        CHECK(r.target_acc == evaluate(run.models[i].task_b, run.data.task_b.test));
        CHECK(r.average == (r.pretrain_acc + r.target_acc) / 2);
        CHECK(run.models[i].task_a.head("A") == run.pretrained.head("A"));
    }
    CHECK(run.hard_losses.size() == spec.test_per_task);

    SUBCASE("deterministic and independent of threads") {
        auto threaded = setup;
        threaded.threads = 3;
        const auto again = run_comparison(spec, threaded);
        for (std::size_t i = 0; i < rep.rows.size(); ++i) {
            CHECK(again.rows[i].method == rep.rows[i].method);
            CHECK(again.rows[i].pretrain_acc == rep.rows[i].pretrain_acc);
            CHECK(again.rows[i].target_acc == rep.rows[i].target_acc);
            CHECK(again.rows[i].hard_acc == rep.rows[i].hard_acc);
        }
    }
    SUBCASE("WiSE-FT row is the averaged standard run") {
        const auto wise = wise_ft_average(run.pretrained, run.models[0].task_b, 0.5);
        CHECK(run.models[3].task_b == wise);
    }
    SUBCASE("averaging sweep endpoints") {
        const auto rows = averaging_sweep(run.pretrained, run.models[0].task_b, {0.0, 0.5, 1.0}, run.data,
                                          run.hard_losses);
        REQUIRE(rows.size() == 3);
        CHECK(rows[0].method == "alpha=0");
        CHECK(rows[1].method == "alpha=0.5");
        CHECK(rows[0].pretrain_acc == rep.row("standard").pretrain_acc);
        CHECK(rows[0].target_acc == rep.row("standard").target_acc);
        CHECK(rows[2].pretrain_acc == rep.pretrained_acc);
        CHECK(rows[2].delta_pre == 0.0);
        CHECK(rows[1].target_acc == rep.row("wise_ft").target_acc);
        CHECK(std::isnan(rows[1].delta_target));
        CHECK(code_of([&] {
                  averaging_sweep(run.pretrained, run.models[0].task_b, {1.5}, run.data, run.hard_losses);
              }) == Errc::OutOfRange);
    }
    SUBCASE("median ablation row equals the flow row") {
        const auto abl = tau_ablation(spec, {50, 90}, quick(method::Flow{}), setup.pretrain);
        REQUIRE(abl.rows.size() == 2);
        CHECK(abl.rows[0].method == "flow_p50");
        CHECK(abl.rows[1].method == "flow_p90");
        CHECK(abl.rows[0].pretrain_acc == rep.row("flow").pretrain_acc);
        CHECK(abl.rows[0].target_acc == rep.row("flow").target_acc);
        CHECK(std::isnan(abl.rows[0].delta_target));
        CHECK(code_of([&] { tau_ablation(spec, {100}, quick(method::Flow{}), setup.pretrain); }) ==
              Errc::OutOfRange);
    }
    SUBCASE("setup errors") {
        auto dup = setup;
        dup.methods.push_back(quick(method::Standard{}));
        CHECK(code_of([&] { run_comparison(spec, dup); }) == Errc::ConfigError);
        auto none = setup;
        none.methods.clear();
        CHECK(code_of([&] { run_comparison(spec, none); }) == Errc::ConfigError);
    }
}

TEST_CASE("default setup") {
    const auto setup = default_setup();
    REQUIRE(setup.methods.size() == 6);
    const std::vector<std::string> kinds{"standard", "flow", "l2reg", "linear_probe", "wise_ft", "dro"};
    for (std::size_t i = 0; i < kinds.size(); ++i) CHECK(setup.methods[i].label() == kinds[i]);
    CHECK(std::get<method::WiseFT>(setup.methods[4].method).alpha == 0.5);
    CHECK(setup.hard_fraction == 0.1);
}
