#ifndef FLOWLAB_BENCH_HPP
#define FLOWLAB_BENCH_HPP

#include "flowlab/trainers.hpp"

#include <cstdint>
#include <numbers>
#include <string>
#include <vector>

namespace flowlab {

/// Two-task Gaussian-blob benchmark. Task A class means are mutually
/// orthogonal with pairwise distance `separation`; task B rotates them by
/// `rotation` radians in every coordinate plane (0,1), (2,3), ... and shifts
/// them by `shift` along the unit all-ones direction.
struct BenchmarkSpec {
    Eigen::Index dim = 16;
    int classes = 4;
    Eigen::Index train_per_task = 2000;
    Eigen::Index test_per_task = 2000;
    double rotation = std::numbers::pi / 4;
    double shift = 1.5;
    double noise = 1.0;
    double separation = 4.0;
    Eigen::Index hidden = 32;
    std::uint64_t seed = 0;

    friend bool operator==(const BenchmarkSpec&, const BenchmarkSpec&) = default;
};

void validate(const BenchmarkSpec& spec);

/// Digest of every field, used to tag reports.
std::uint64_t spec_hash(const BenchmarkSpec& spec);

struct TaskSplit {
    LabeledDataset train;
    LabeledDataset test;
};

struct TwoTaskBenchmark {
    TaskSplit task_a;  // task id "A"
    TaskSplit task_b;  // task id "B"
};

TwoTaskBenchmark gen_two_task_benchmark(const BenchmarkSpec& spec);

/// Top-1 accuracy of the head for data.task; ties go to the lowest class.
double evaluate(const MultiHeadModel& model, const LabeledDataset& data);

/// Indices of the ceil(fraction * n) largest losses, ties broken toward the
/// lower index, returned in ascending index order.
std::vector<Eigen::Index> hardest_indices(const LossVector& losses, double fraction);

double hard_sample_accuracy(const MultiHeadModel& model, const LabeledDataset& data, const LossVector& losses,
                            double fraction);

struct ReportRow {
    std::string method;
    double pretrain_acc = 0.0;
    double target_acc = 0.0;
    double average = 0.0;
    double delta_pre = 0.0;     // vs the pre-trained model on task A
    double delta_target = 0.0;  // vs standard FT on task B; NaN when absent
    double hard_acc = 0.0;
};

struct EvalReport {
    std::vector<ReportRow> rows;
    std::uint64_t spec_hash = 0;
    std::uint64_t seed = 0;
    double pretrained_acc = 0.0;  // task A, before fine-tuning
    double hard_fraction = 0.1;

    [[nodiscard]] const ReportRow& row(const std::string& method) const;
};

/// Fills average and both deltas from the raw accuracies.
void finalize(EvalReport& report);

/// Fine-tuning recipe shared by every method of a comparison.
struct ComparisonSetup {
    TrainConfig pretrain;           // task-A training from scratch
    std::vector<TrainConfig> methods;
    double hard_fraction = 0.1;
    unsigned threads = 1;
};

/// Defaults tuned for the default BenchmarkSpec.
TrainConfig default_pretrain_config();
TrainConfig default_finetune_config(Method method);
/// standard, flow, l2reg, linear_probe, wise_ft, dro.
ComparisonSetup default_setup();

/// Everything a comparison produces besides the report: the shared
/// pre-trained model and each method's fine-tuned models.
struct MethodModels {
    MultiHeadModel task_a;  // updated body + original task-A head
    MultiHeadModel task_b;  // updated body + the method's task-B head
};

struct ComparisonRun {
    EvalReport report;
    MultiHeadModel pretrained;
    TwoTaskBenchmark data;
    LossVector hard_losses;  // reference-probe losses on the task-B test set
    std::vector<MethodModels> models;  // aligned with report.rows
};

/// Pre-trains on task A, fine-tunes each method on task B, evaluates task A
/// with the original task-A head and task B with the method's head.
/// Every fine-tuning run uses shuffle seed derive_seed(bench.seed, "shuffle")
/// xor cfg.seed, so runs differing only in method see the same batches.
ComparisonRun run_comparison_full(const BenchmarkSpec& bench, const ComparisonSetup& setup);
EvalReport run_comparison(const BenchmarkSpec& bench, const ComparisonSetup& setup);

/// One row per alpha ("alpha=<a>") for wise_ft_average(pre, fine, alpha).
/// `fine` must carry heads for both tasks.
std::vector<ReportRow> averaging_sweep(const MultiHeadModel& pre, const MultiHeadModel& fine,
                                       const std::vector<double>& alphas, const TwoTaskBenchmark& data,
                                       const LossVector& hard_losses, double hard_fraction = 0.1);

/// Flow with Percentile(p) for every p, rows labelled "flow_p<p>". `flow`
/// supplies the remaining hyperparameters.
EvalReport tau_ablation(const BenchmarkSpec& bench, const std::vector<double>& percentiles,
                        const TrainConfig& flow, const TrainConfig& pretrain, unsigned threads = 1);

}  // namespace flowlab

#endif  // FLOWLAB_BENCH_HPP
