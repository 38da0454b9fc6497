#ifndef FLOWLAB_TRAINERS_HPP
#define FLOWLAB_TRAINERS_HPP

#include "flowlab/linear_theory.hpp"
#include "flowlab/weighting.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <variant>
#include <vector>

namespace flowlab {

using TaskId = std::string;

/// Affine map y = W x + b with W stored out x in.
struct Dense {
    Eigen::MatrixXd weight;
    Eigen::VectorXd bias;

    [[nodiscard]] Eigen::Index in_dim() const noexcept { return weight.cols(); }
    [[nodiscard]] Eigen::Index out_dim() const noexcept { return weight.rows(); }
    [[nodiscard]] Eigen::Index parameter_count() const noexcept { return weight.size() + bias.size(); }

    friend bool operator==(const Dense& a, const Dense& b) {
        return a.weight.rows() == b.weight.rows() && a.weight.cols() == b.weight.cols() &&
               a.bias.size() == b.bias.size() && a.weight == b.weight && a.bias == b.bias;
    }
};

/// Shared tanh hidden layer (the body U) plus one linear softmax head per
/// task (the task-specific part V_t).
struct MultiHeadModel {
    Dense body;
    std::map<TaskId, Dense> heads;

    [[nodiscard]] Eigen::Index input_dim() const noexcept { return body.in_dim(); }
    [[nodiscard]] Eigen::Index hidden_dim() const noexcept { return body.out_dim(); }
    [[nodiscard]] bool has_head(const TaskId& task) const { return heads.count(task) != 0; }
    [[nodiscard]] const Dense& head(const TaskId& task) const;
    [[nodiscard]] Dense& head(const TaskId& task);

    /// tanh(X W^T + b), one row per sample.
    [[nodiscard]] Eigen::MatrixXd features(const Eigen::MatrixXd& x) const;
    [[nodiscard]] Eigen::MatrixXd logits(const Eigen::MatrixXd& x, const TaskId& task) const;

    friend bool operator==(const MultiHeadModel&, const MultiHeadModel&) = default;
};

/// Body and first head drawn from N(0, 1/fan_in), biases zero.
MultiHeadModel init_model(Eigen::Index input_dim, Eigen::Index hidden_dim, const TaskId& task,
                          Eigen::Index classes, std::uint64_t seed);

/// Adds (or replaces) a zero-initialised head for `task`.
void add_zero_head(MultiHeadModel& model, const TaskId& task, Eigen::Index classes);

/// FNV-1a digest over the raw bytes of a parameter block.
std::uint64_t parameter_hash(const Dense& block);

struct LabeledDataset {
    Eigen::MatrixXd features;  // n x d
    std::vector<int> labels;
    TaskId task;
    int classes = 0;

    [[nodiscard]] Eigen::Index size() const noexcept { return features.rows(); }
};

void validate(const LabeledDataset& data);

// ---------------------------------------------------------------------------
// Training configuration

namespace method {
struct Standard {};
struct Flow {
    TemperaturePolicy temperature = TemperaturePolicy::median();
};
struct L2Reg {
    double lambda = 0.0;
};
struct LinearProbe {};
struct WiseFT {
    double alpha = 0.5;
};
struct DroContrast {
    TemperaturePolicy temperature = TemperaturePolicy::median();
};
}  // namespace method

using Method = std::variant<method::Standard, method::Flow, method::L2Reg, method::LinearProbe, method::WiseFT,
                            method::DroContrast>;

/// "standard", "flow", "l2reg", "linear_probe", "wise_ft" or "dro".
std::string method_kind(const Method& m);

struct TrainConfig {
    std::string name;  // report label; method_kind() when empty
    Method method = method::Standard{};
    double learning_rate = 0.1;
    int epochs = 1;
    int batch_size = 0;  // 0 = full batch
    std::uint64_t seed = 0;
    double probe_learning_rate = 0.5;
    int probe_epochs = 100;

    [[nodiscard]] std::string label() const { return name.empty() ? method_kind(method) : name; }
};

void validate(const TrainConfig& cfg);

struct TrainMask {
    bool body = true;
    bool head = true;
};

// ---------------------------------------------------------------------------
// Objectives with explicit gradients

struct ModelGradient {
    Dense body;
    Dense head;
};

/// Per-sample cross-entropy of the task head, log-sum-exp stabilised.
LossVector per_sample_losses(const MultiHeadModel& model, const LabeledDataset& data, const TaskId& task);

/// Weights rescaled to mean 1; rejects all-zero weights.
Eigen::VectorXd mean_one(const Eigen::VectorXd& weights);

/// (1/m) sum_{i in rows} w_i CE_i for the head of `task`; `w` is indexed by
/// sample, not by position in `rows`.
double weighted_ce_loss(const MultiHeadModel& model, const LabeledDataset& data, const TaskId& task,
                        const Eigen::VectorXd& w, const std::vector<Eigen::Index>& rows);
ModelGradient weighted_ce_gradient(const MultiHeadModel& model, const LabeledDataset& data, const TaskId& task,
                                   const Eigen::VectorXd& w, const std::vector<Eigen::Index>& rows);

/// lambda ||theta - anchor||^2 over the body and the head of `task`.
double l2_penalty(const MultiHeadModel& model, const MultiHeadModel& anchor, const TaskId& task, double lambda);
ModelGradient l2_penalty_gradient(const MultiHeadModel& model, const MultiHeadModel& anchor, const TaskId& task,
                                  double lambda);

/// Softmax (multinomial logistic) regression on raw inputs.
double logistic_loss(const Dense& classifier, const Eigen::MatrixXd& x, const std::vector<int>& labels,
                     const Eigen::VectorXd& w);
Dense logistic_gradient(const Dense& classifier, const Eigen::MatrixXd& x, const std::vector<int>& labels,
                        const Eigen::VectorXd& w);

/// (1/n) sum w_i (y_i - <theta, x_i>)^2.
double linear_regression_loss(const Eigen::VectorXd& theta, const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
                              const Eigen::VectorXd& w);
Eigen::VectorXd linear_regression_gradient(const Eigen::VectorXd& theta, const Eigen::MatrixXd& x,
                                           const Eigen::VectorXd& y, const Eigen::VectorXd& w);

/// Trainable parameters (body, then the task head) as one flat vector;
/// matrices row-major. Used by gradient checks.
Eigen::VectorXd flatten(const MultiHeadModel& model, const TaskId& task);
void unflatten(MultiHeadModel& model, const TaskId& task, const Eigen::VectorXd& flat);
Eigen::VectorXd flatten(const ModelGradient& grad);

// ---------------------------------------------------------------------------
// Fine-tuning engines. All start from the given parameters and are
// deterministic given cfg.seed.

struct L2Anchor {
    MultiHeadModel anchor;
    double lambda = 0.0;
};

/// Mini-batch GD on (1/m) sum w_i f_i with weights rescaled to mean 1.
MultiHeadModel weighted_fit(const MultiHeadModel& model, const LabeledDataset& data, const WeightVector& weights,
                            const TrainConfig& cfg, TrainMask mask = {},
                            const std::optional<L2Anchor>& l2 = std::nullopt);

/// Unweighted GD plus lambda ||theta - theta_init||^2.
MultiHeadModel l2_fit(const MultiHeadModel& model, const LabeledDataset& data, double lambda,
                      const TrainConfig& cfg);

/// Trains only the head of data.task (created zero-initialised if absent)
/// with cfg.probe_learning_rate / cfg.probe_epochs; the body is untouched.
MultiHeadModel linear_probe(const MultiHeadModel& model, const LabeledDataset& data, const TrainConfig& cfg);

/// body <- alpha U_pre + (1 - alpha) U_fine. Heads are not averaged: tasks
/// known to `pre` keep the pre-trained head, other tasks take `fine`'s.
MultiHeadModel wise_ft_average(const MultiHeadModel& pre, const MultiHeadModel& fine, double alpha);

struct FlowOutcome {
    MultiHeadModel pretrain_task_model;  // learned body + original heads
    MultiHeadModel new_task_model;       // learned body + re-probed new head
    MultiHeadModel probed;               // step (i) output
    LossVector losses;                   // step (ii) losses
    WeightVector weights;                // step (ii) weights
};

/// Multi-head FLOW: (i) probe the new head on the frozen pre-trained body,
/// (ii) weights from the probed model's losses, (iii) weighted full
/// fine-tune, (iv) re-probe the new head on the learned body.
/// DroContrast runs the same pipeline with exp(+l/tau) weights.
FlowOutcome flow_multihead(const MultiHeadModel& pre, const LabeledDataset& data, const TrainConfig& cfg);

/// Step (i) + unweighted full fine-tune; the Standard / L2Reg pipeline.
MultiHeadModel standard_fit(const MultiHeadModel& pre, const LabeledDataset& data, const TrainConfig& cfg);

/// Trains a fresh model on `data` (pre-training).
MultiHeadModel pretrain(const LabeledDataset& data, Eigen::Index hidden_dim, const TrainConfig& cfg,
                        std::uint64_t init_seed);

// ---------------------------------------------------------------------------
// Finite-sample linear regression

/// Draws n fine-tuning samples (basis_sampler, noise-free labels), weights
/// them by exp(-(y - <theta_pre, x>)^2 / tau) and runs full-batch GD on
/// (1/n) sum w_i (y_i - <theta, x_i>)^2 from theta_pre. Raw weights are used
/// (no mean-1 rescaling) so the expected Hessian is the population
/// weighted covariance.
theory::Trajectory<double> empirical_flow_linear(const theory::LinearTaskSpec<double>& spec, Eigen::Index n,
                                                 double tau, double eta, int steps, std::uint64_t seed);

/// Same samples and GD, unit weights.
theory::Trajectory<double> empirical_ft_linear(const theory::LinearTaskSpec<double>& spec, Eigen::Index n,
                                               double eta, int steps, std::uint64_t seed);

}  // namespace flowlab

#endif  // FLOWLAB_TRAINERS_HPP
