#include "flowlab/bench.hpp"

#include "flowlab/errors.hpp"
#include "flowlab/rng.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>
#include <thread>

namespace flowlab {

namespace {

// Columns are the class means of task A.
Eigen::MatrixXd class_means(const BenchmarkSpec& spec, Rng& rng) {
    const Eigen::MatrixXd g = standard_normal(rng, spec.dim, spec.classes);
    Eigen::HouseholderQR<Eigen::MatrixXd> qr(g);
    const Eigen::MatrixXd q = qr.householderQ() * Eigen::MatrixXd::Identity(spec.dim, spec.classes);
    return q * (spec.separation / std::numbers::sqrt2);
}

Eigen::MatrixXd transform_means(const BenchmarkSpec& spec, const Eigen::MatrixXd& means) {
    Eigen::MatrixXd out = means;
    const double c = std::cos(spec.rotation);
    const double s = std::sin(spec.rotation);
    for (Eigen::Index i = 0; i + 1 < spec.dim; i += 2) {
        out.row(i) = c * means.row(i) - s * means.row(i + 1);
        out.row(i + 1) = s * means.row(i) + c * means.row(i + 1);
    }
    const double step = spec.shift / std::sqrt(static_cast<double>(spec.dim));
    out.array() += step;
    return out;
}

LabeledDataset draw(const BenchmarkSpec& spec, const Eigen::MatrixXd& means, Eigen::Index n, const TaskId& task,
                    std::uint64_t seed) {
    Rng rng(seed);
    LabeledDataset data;
    data.task = task;
    data.classes = spec.classes;
    data.features = spec.noise * standard_normal(rng, n, spec.dim);
    data.labels.resize(static_cast<std::size_t>(n));
    for (Eigen::Index i = 0; i < n; ++i) {
        const int y = static_cast<int>(i % spec.classes);
        data.labels[static_cast<std::size_t>(i)] = y;
        data.features.row(i) += means.col(y).transpose();
    }
    return data;
}

MethodModels fine_tune(const MultiHeadModel& pre, const LabeledDataset& train, const TrainConfig& cfg) {
    return std::visit(
        [&](const auto& m) -> MethodModels {
            using M = std::decay_t<decltype(m)>;
            if constexpr (std::is_same_v<M, method::Flow> || std::is_same_v<M, method::DroContrast>) {
                FlowOutcome out = flow_multihead(pre, train, cfg);
                return {std::move(out.pretrain_task_model), std::move(out.new_task_model)};
            } else if constexpr (std::is_same_v<M, method::LinearProbe>) {
                MultiHeadModel probed = linear_probe(pre, train, cfg);
                return {probed, probed};
            } else if constexpr (std::is_same_v<M, method::WiseFT>) {
                TrainConfig standard = cfg;
                standard.method = method::Standard{};
                const MultiHeadModel averaged = wise_ft_average(pre, standard_fit(pre, train, standard), m.alpha);
                return {averaged, averaged};
            } else {
                MultiHeadModel fine = standard_fit(pre, train, cfg);
                return {fine, fine};
            }
        },
        cfg.method);
}

template <class Fn>
void parallel_for(std::size_t count, unsigned threads, Fn fn) {
    threads = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(count)));
    if (threads == 1) {
        for (std::size_t i = 0; i < count; ++i) fn(i);
        return;
    }
    std::vector<std::exception_ptr> errors(count);
    std::vector<std::thread> pool;
    for (unsigned t = 0; t < threads; ++t)
        pool.emplace_back([&, t] {
            for (std::size_t i = t; i < count; i += threads) {
                try {
                    fn(i);
                } catch (...) {
                    errors[i] = std::current_exception();
                }
            }
        });
    for (auto& th : pool) th.join();
    for (const auto& e : errors)
        if (e) std::rethrow_exception(e);
}

ReportRow score(const std::string& label, const MethodModels& m, const TwoTaskBenchmark& data,
                const LossVector& hard_losses, double hard_fraction) {
    ReportRow row;
    row.method = label;
    row.pretrain_acc = evaluate(m.task_a, data.task_a.test);
    row.target_acc = evaluate(m.task_b, data.task_b.test);
    row.hard_acc = hard_sample_accuracy(m.task_b, data.task_b.test, hard_losses, hard_fraction);
    return row;
}

std::string format_number(double v) {
    std::ostringstream out;
    out << v;
    return out.str();
}

}  // namespace

void validate(const BenchmarkSpec& spec) {
    require(spec.dim >= 2, Errc::DimensionTooSmall, "benchmark dim must be >= 2");
    require(spec.classes >= 2 && spec.classes <= spec.dim, Errc::OutOfRange, "classes must lie in [2, dim]");
    require(spec.train_per_task >= 1 && spec.test_per_task >= 1, Errc::OutOfRange, "sample counts must be >= 1");
    require(spec.rotation >= 0 && spec.rotation <= std::numbers::pi, Errc::OutOfRange, "rotation must lie in [0, pi]");
    require(std::isfinite(spec.shift) && spec.shift >= 0, Errc::OutOfRange, "shift must be >= 0");
    require(std::isfinite(spec.noise) && spec.noise > 0, Errc::OutOfRange, "noise must be > 0");
    require(std::isfinite(spec.separation) && spec.separation > 0, Errc::OutOfRange, "separation must be > 0");
    require(spec.hidden >= 1, Errc::OutOfRange, "hidden width must be >= 1");
}

std::uint64_t spec_hash(const BenchmarkSpec& spec) {
    std::ostringstream out;
    out << std::hexfloat << spec.dim << ',' << spec.classes << ',' << spec.train_per_task << ',' << spec.test_per_task
        << ',' << spec.rotation << ',' << spec.shift << ',' << spec.noise << ',' << spec.separation << ','
        << spec.hidden << ',' << spec.seed;
    return fnv1a(out.str());
}

TwoTaskBenchmark gen_two_task_benchmark(const BenchmarkSpec& spec) {
    validate(spec);
    Rng rng(derive_seed(spec.seed, "bench-means"));
    const Eigen::MatrixXd means_a = class_means(spec, rng);
    const Eigen::MatrixXd means_b = transform_means(spec, means_a);
    TwoTaskBenchmark out;
    out.task_a.train = draw(spec, means_a, spec.train_per_task, "A", derive_seed(spec.seed, "bench-a-train"));
    out.task_a.test = draw(spec, means_a, spec.test_per_task, "A", derive_seed(spec.seed, "bench-a-test"));
    out.task_b.train = draw(spec, means_b, spec.train_per_task, "B", derive_seed(spec.seed, "bench-b-train"));
    out.task_b.test = draw(spec, means_b, spec.test_per_task, "B", derive_seed(spec.seed, "bench-b-test"));
    return out;
}

double evaluate(const MultiHeadModel& model, const LabeledDataset& data) {
    validate(data);
    const Eigen::MatrixXd logits = model.logits(data.features, data.task);
    require(logits.cols() == data.classes, Errc::ArchitectureMismatch, "head width differs from the class count");
    Eigen::Index correct = 0;
    for (Eigen::Index i = 0; i < logits.rows(); ++i) {
        Eigen::Index best = 0;
        for (Eigen::Index c = 1; c < logits.cols(); ++c)
            if (logits(i, c) > logits(i, best)) best = c;
        if (best == data.labels[static_cast<std::size_t>(i)]) ++correct;
    }
    return static_cast<double>(correct) / static_cast<double>(data.size());
}

std::vector<Eigen::Index> hardest_indices(const LossVector& losses, double fraction) {
    require(fraction > 0 && fraction <= 1, Errc::OutOfRange, "hard-sample fraction must lie in (0, 1]");
    const Eigen::Index n = losses.size();
    require(n >= 1, Errc::EmptyInput, "loss vector is empty");
    const auto k = static_cast<std::size_t>(
        std::min<double>(static_cast<double>(n), std::ceil(fraction * static_cast<double>(n) - 1e-9)));
    std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), Eigen::Index{0});
    std::stable_sort(order.begin(), order.end(), [&](Eigen::Index a, Eigen::Index b) { return losses[a] > losses[b]; });
    order.resize(k);
    std::sort(order.begin(), order.end());
    return order;
}

double hard_sample_accuracy(const MultiHeadModel& model, const LabeledDataset& data, const LossVector& losses,
                            double fraction) {
    require(losses.size() == data.size(), Errc::DimensionMismatch, "losses and samples differ in count");
    const std::vector<Eigen::Index> rows = hardest_indices(losses, fraction);
    LabeledDataset subset;
    subset.task = data.task;
    subset.classes = data.classes;
    subset.features = data.features(rows, Eigen::all);
    for (Eigen::Index r : rows) subset.labels.push_back(data.labels[static_cast<std::size_t>(r)]);
    return evaluate(model, subset);
}

const ReportRow& EvalReport::row(const std::string& method) const {
    const auto it = std::find_if(rows.begin(), rows.end(), [&](const ReportRow& r) { return r.method == method; });
    require(it != rows.end(), Errc::OutOfRange, "report has no row '" + method + "'");
    return *it;
}

void finalize(EvalReport& report) {
    const auto standard =
        std::find_if(report.rows.begin(), report.rows.end(), [](const ReportRow& r) { return r.method == "standard"; });
    const double reference =
        standard == report.rows.end() ? std::numeric_limits<double>::quiet_NaN() : standard->target_acc;
    for (ReportRow& r : report.rows) {
        r.average = (r.pretrain_acc + r.target_acc) / 2;
        r.delta_pre = r.pretrain_acc - report.pretrained_acc;
        r.delta_target = r.target_acc - reference;
    }
}

TrainConfig default_pretrain_config() {
    TrainConfig cfg;
    cfg.name = "pretrain";
    cfg.learning_rate = 0.5;
    cfg.epochs = 300;
    cfg.batch_size = 0;
    return cfg;
}

TrainConfig default_finetune_config(Method method) {
    TrainConfig cfg;
    cfg.method = std::move(method);
    cfg.learning_rate = 1.0;
    cfg.epochs = 800;
    cfg.batch_size = 0;
    cfg.probe_learning_rate = 0.5;
    cfg.probe_epochs = 100;
    return cfg;
}

ComparisonSetup default_setup() {
    ComparisonSetup setup;
    setup.pretrain = default_pretrain_config();
    setup.methods = {
        default_finetune_config(method::Standard{}),    default_finetune_config(method::Flow{}),
        default_finetune_config(method::L2Reg{0.01}),   default_finetune_config(method::LinearProbe{}),
        default_finetune_config(method::WiseFT{0.5}),   default_finetune_config(method::DroContrast{}),
    };
    return setup;
}

ComparisonRun run_comparison_full(const BenchmarkSpec& bench, const ComparisonSetup& setup) {
    require(!setup.methods.empty(), Errc::ConfigError, "no methods to compare");
    for (const TrainConfig& cfg : setup.methods) validate(cfg);
    validate(setup.pretrain);
    for (std::size_t i = 0; i < setup.methods.size(); ++i)
        for (std::size_t j = 0; j < i; ++j)
            require(setup.methods[i].label() != setup.methods[j].label(), Errc::ConfigError,
                    "duplicate method label '" + setup.methods[i].label() + "'");

    ComparisonRun run;
    run.data = gen_two_task_benchmark(bench);
    TrainConfig pre_cfg = setup.pretrain;
    pre_cfg.seed = derive_seed(bench.seed, "pretrain-shuffle") ^ setup.pretrain.seed;
    run.pretrained = pretrain(run.data.task_a.train, bench.hidden, pre_cfg, derive_seed(bench.seed, "init"));

    const std::uint64_t shuffle = derive_seed(bench.seed, "shuffle");
    TrainConfig probe_cfg = setup.methods.front();
    probe_cfg.seed = shuffle;
    const MultiHeadModel reference = linear_probe(run.pretrained, run.data.task_b.train, probe_cfg);
    run.hard_losses = per_sample_losses(reference, run.data.task_b.test, "B");

    run.models.resize(setup.methods.size());
    run.report.rows.resize(setup.methods.size());
    parallel_for(setup.methods.size(), setup.threads, [&](std::size_t i) {
        TrainConfig cfg = setup.methods[i];
        cfg.seed = shuffle ^ cfg.seed;
        run.models[i] = fine_tune(run.pretrained, run.data.task_b.train, cfg);
        run.report.rows[i] = score(cfg.label(), run.models[i], run.data, run.hard_losses, setup.hard_fraction);
    });

    run.report.spec_hash = spec_hash(bench);
    run.report.seed = bench.seed;
    run.report.hard_fraction = setup.hard_fraction;
    run.report.pretrained_acc = evaluate(run.pretrained, run.data.task_a.test);
    finalize(run.report);
    return run;
}

EvalReport run_comparison(const BenchmarkSpec& bench, const ComparisonSetup& setup) {
    return run_comparison_full(bench, setup).report;
}

std::vector<ReportRow> averaging_sweep(const MultiHeadModel& pre, const MultiHeadModel& fine,
                                       const std::vector<double>& alphas, const TwoTaskBenchmark& data,
                                       const LossVector& hard_losses, double hard_fraction) {
    std::vector<ReportRow> rows;
    rows.reserve(alphas.size());
    for (double alpha : alphas) {
        require(alpha >= 0 && alpha <= 1, Errc::OutOfRange, "alpha must lie in [0, 1]");
        const MultiHeadModel averaged = wise_ft_average(pre, fine, alpha);
        ReportRow row = score("alpha=" + format_number(alpha), {averaged, averaged}, data, hard_losses, hard_fraction);
        row.average = (row.pretrain_acc + row.target_acc) / 2;
        row.delta_pre = row.pretrain_acc - evaluate(pre, data.task_a.test);
        row.delta_target = std::numeric_limits<double>::quiet_NaN();
        rows.push_back(row);
    }
    return rows;
}

EvalReport tau_ablation(const BenchmarkSpec& bench, const std::vector<double>& percentiles, const TrainConfig& flow,
                        const TrainConfig& pretrain, unsigned threads) {
    require(!percentiles.empty(), Errc::ConfigError, "no percentiles given");
    ComparisonSetup setup;
    setup.pretrain = pretrain;
    setup.threads = threads;
    for (double p : percentiles) {
        require(p > 0 && p < 100, Errc::OutOfRange, "percentile must lie in (0, 100)");
        TrainConfig cfg = flow;
        cfg.method = method::Flow{TemperaturePolicy::percentile(p)};
        cfg.name = "flow_p" + format_number(p);
        setup.methods.push_back(cfg);
    }
    return run_comparison(bench, setup);
}

}  // namespace flowlab
