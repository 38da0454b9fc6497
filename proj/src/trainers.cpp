#include "flowlab/trainers.hpp"

#include "flowlab/errors.hpp"
#include "flowlab/rng.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string_view>

namespace flowlab {

namespace {

// Row-wise softmax minus one-hot, each row scaled by w[row] * scale.
Eigen::MatrixXd ce_logit_gradient(const Eigen::MatrixXd& logits, const std::vector<int>& labels,
                                  const Eigen::VectorXd& w, double scale) {
    Eigen::MatrixXd g = logits;
    for (Eigen::Index i = 0; i < g.rows(); ++i) {
        const double top = g.row(i).maxCoeff();
        g.row(i) = (g.row(i).array() - top).exp().matrix();
        g.row(i) /= g.row(i).sum();
        g(i, labels[static_cast<std::size_t>(i)]) -= 1.0;
        g.row(i) *= w[i] * scale;
    }
    return g;
}

Eigen::VectorXd ce_per_row(const Eigen::MatrixXd& logits, const std::vector<int>& labels) {
    Eigen::VectorXd out(logits.rows());
    for (Eigen::Index i = 0; i < logits.rows(); ++i) {
        const double top = logits.row(i).maxCoeff();
        const double lse = top + std::log((logits.row(i).array() - top).exp().sum());
        out[i] = std::max(0.0, lse - logits(i, labels[static_cast<std::size_t>(i)]));
    }
    return out;
}

Eigen::MatrixXd affine(const Dense& layer, const Eigen::MatrixXd& x) {
    return (x * layer.weight.transpose()).rowwise() + layer.bias.transpose();
}

struct Batch {
    Eigen::MatrixXd x;
    std::vector<int> labels;
    Eigen::VectorXd w;
};

Batch gather(const LabeledDataset& data, const Eigen::VectorXd& w, const std::vector<Eigen::Index>& rows) {
    Batch b;
    b.x = data.features(rows, Eigen::all);
    b.labels.reserve(rows.size());
    b.w.resize(static_cast<Eigen::Index>(rows.size()));
    for (std::size_t i = 0; i < rows.size(); ++i) {
        b.labels.push_back(data.labels[static_cast<std::size_t>(rows[i])]);
        b.w[static_cast<Eigen::Index>(i)] = w[rows[i]];
    }
    return b;
}

std::vector<Eigen::Index> all_rows(Eigen::Index n) {
    std::vector<Eigen::Index> rows(static_cast<std::size_t>(n));
    std::iota(rows.begin(), rows.end(), Eigen::Index{0});
    return rows;
}

void append(Eigen::VectorXd& flat, Eigen::Index& pos, const Dense& block) {
    for (Eigen::Index r = 0; r < block.weight.rows(); ++r)
        for (Eigen::Index c = 0; c < block.weight.cols(); ++c) flat[pos++] = block.weight(r, c);
    for (Eigen::Index i = 0; i < block.bias.size(); ++i) flat[pos++] = block.bias[i];
}

void extract(const Eigen::VectorXd& flat, Eigen::Index& pos, Dense& block) {
    for (Eigen::Index r = 0; r < block.weight.rows(); ++r)
        for (Eigen::Index c = 0; c < block.weight.cols(); ++c) block.weight(r, c) = flat[pos++];
    for (Eigen::Index i = 0; i < block.bias.size(); ++i) block.bias[i] = flat[pos++];
}

bool all_finite(const Dense& d) { return d.weight.allFinite() && d.bias.allFinite(); }

void step(Dense& params, const Dense& grad, double lr) {
    params.weight -= lr * grad.weight;
    params.bias -= lr * grad.bias;
}

const TemperaturePolicy& policy_of(const Method& m) {
    if (const auto* f = std::get_if<method::Flow>(&m)) return f->temperature;
    if (const auto* d = std::get_if<method::DroContrast>(&m)) return d->temperature;
    fail(Errc::ConfigError, "method '" + method_kind(m) + "' has no temperature policy");
}

}  // namespace

// ---------------------------------------------------------------------------

const Dense& MultiHeadModel::head(const TaskId& task) const {
    const auto it = heads.find(task);
    require(it != heads.end(), Errc::MissingHead, "model has no head for task '" + task + "'");
    return it->second;
}

Dense& MultiHeadModel::head(const TaskId& task) {
    const auto it = heads.find(task);
    require(it != heads.end(), Errc::MissingHead, "model has no head for task '" + task + "'");
    return it->second;
}

Eigen::MatrixXd MultiHeadModel::features(const Eigen::MatrixXd& x) const {
    require(x.cols() == input_dim(), Errc::DimensionMismatch, "input width does not match the model");
    return affine(body, x).array().tanh().matrix();
}

Eigen::MatrixXd MultiHeadModel::logits(const Eigen::MatrixXd& x, const TaskId& task) const {
    return affine(head(task), features(x));
}

MultiHeadModel init_model(Eigen::Index input_dim, Eigen::Index hidden_dim, const TaskId& task, Eigen::Index classes,
                          std::uint64_t seed) {
    require(input_dim >= 1 && hidden_dim >= 1 && classes >= 2, Errc::OutOfRange,
            "model needs input >= 1, hidden >= 1 and classes >= 2");
    Rng rng(seed);
    MultiHeadModel m;
    m.body.weight = standard_normal(rng, hidden_dim, input_dim) / std::sqrt(static_cast<double>(input_dim));
    m.body.bias = Eigen::VectorXd::Zero(hidden_dim);
    Dense head;
    head.weight = standard_normal(rng, classes, hidden_dim) / std::sqrt(static_cast<double>(hidden_dim));
    head.bias = Eigen::VectorXd::Zero(classes);
    m.heads.emplace(task, std::move(head));
    return m;
}

void add_zero_head(MultiHeadModel& model, const TaskId& task, Eigen::Index classes) {
    require(classes >= 2, Errc::OutOfRange, "a head needs at least two classes");
    model.heads[task] = Dense{Eigen::MatrixXd::Zero(classes, model.hidden_dim()), Eigen::VectorXd::Zero(classes)};
}

std::uint64_t parameter_hash(const Dense& block) {
    auto bytes = [](const double* p, Eigen::Index n) {
        return std::string_view(reinterpret_cast<const char*>(p), static_cast<std::size_t>(n) * sizeof(double));
    };
    std::uint64_t h = fnv1a(bytes(block.weight.data(), block.weight.size()));
    return fnv1a(bytes(block.bias.data(), block.bias.size()), h);
}

void validate(const LabeledDataset& data) {
    require(data.size() >= 1, Errc::EmptyInput, "dataset is empty");
    require(static_cast<Eigen::Index>(data.labels.size()) == data.size(), Errc::DimensionMismatch,
            "label count differs from sample count");
    require(data.classes >= 2, Errc::OutOfRange, "dataset needs at least two classes");
    for (int y : data.labels)
        require(y >= 0 && y < data.classes, Errc::OutOfRange, "label outside the task's class range");
    require(data.features.allFinite(), Errc::OutOfRange, "features must be finite");
}

std::string method_kind(const Method& m) {
    struct Visitor {
        std::string operator()(const method::Standard&) const { return "standard"; }
        std::string operator()(const method::Flow&) const { return "flow"; }
        std::string operator()(const method::L2Reg&) const { return "l2reg"; }
        std::string operator()(const method::LinearProbe&) const { return "linear_probe"; }
        std::string operator()(const method::WiseFT&) const { return "wise_ft"; }
        std::string operator()(const method::DroContrast&) const { return "dro"; }
    };
    return std::visit(Visitor{}, m);
}

void validate(const TrainConfig& cfg) {
    require(std::isfinite(cfg.learning_rate) && cfg.learning_rate > 0, Errc::ConfigError, "learning_rate must be > 0");
    require(cfg.epochs >= 1, Errc::ConfigError, "epochs must be >= 1");
    require(cfg.batch_size >= 0, Errc::ConfigError, "batch_size must be >= 1 (or 0 for full batch)");
    require(std::isfinite(cfg.probe_learning_rate) && cfg.probe_learning_rate > 0, Errc::ConfigError,
            "probe_learning_rate must be > 0");
    require(cfg.probe_epochs >= 1, Errc::ConfigError, "probe_epochs must be >= 1");
    if (const auto* l2 = std::get_if<method::L2Reg>(&cfg.method))
        require(std::isfinite(l2->lambda) && l2->lambda >= 0, Errc::ConfigError, "lambda must be >= 0");
    if (const auto* w = std::get_if<method::WiseFT>(&cfg.method))
        require(w->alpha >= 0 && w->alpha <= 1, Errc::ConfigError, "alpha must lie in [0, 1]");
}

// ---------------------------------------------------------------------------

LossVector per_sample_losses(const MultiHeadModel& model, const LabeledDataset& data, const TaskId& task) {
    validate(data);
    return LossVector(ce_per_row(model.logits(data.features, task), data.labels));
}

Eigen::VectorXd mean_one(const Eigen::VectorXd& weights) {
    require(weights.size() >= 1, Errc::EmptyInput, "weight vector is empty");
    require(weights.allFinite() && weights.minCoeff() >= 0, Errc::OutOfRange, "weights must be finite and >= 0");
    const double mean = weights.mean();
    require(mean > 0, Errc::AllZeroWeights, "all sample weights are zero");
    return weights / mean;
}

double weighted_ce_loss(const MultiHeadModel& model, const LabeledDataset& data, const TaskId& task,
                        const Eigen::VectorXd& w, const std::vector<Eigen::Index>& rows) {
    const Batch b = gather(data, w, rows);
    return ce_per_row(model.logits(b.x, task), b.labels).dot(b.w) / static_cast<double>(rows.size());
}

ModelGradient weighted_ce_gradient(const MultiHeadModel& model, const LabeledDataset& data, const TaskId& task,
                                   const Eigen::VectorXd& w, const std::vector<Eigen::Index>& rows) {
    const Batch b = gather(data, w, rows);
    const Dense& head = model.head(task);
    const Eigen::MatrixXd h = model.features(b.x);
    const Eigen::MatrixXd g = ce_logit_gradient(affine(head, h), b.labels, b.w, 1.0 / static_cast<double>(rows.size()));

    ModelGradient grad;
    grad.head.weight = g.transpose() * h;
    grad.head.bias = g.colwise().sum().transpose();
    const Eigen::MatrixXd dz = ((g * head.weight).array() * (1.0 - h.array().square())).matrix();
    grad.body.weight = dz.transpose() * b.x;
    grad.body.bias = dz.colwise().sum().transpose();
    return grad;
}

double l2_penalty(const MultiHeadModel& model, const MultiHeadModel& anchor, const TaskId& task, double lambda) {
    return lambda * (flatten(model, task) - flatten(anchor, task)).squaredNorm();
}

ModelGradient l2_penalty_gradient(const MultiHeadModel& model, const MultiHeadModel& anchor, const TaskId& task,
                                  double lambda) {
    ModelGradient g;
    g.body.weight = 2 * lambda * (model.body.weight - anchor.body.weight);
    g.body.bias = 2 * lambda * (model.body.bias - anchor.body.bias);
    const Dense& h = model.head(task);
    const Dense& a = anchor.head(task);
    g.head.weight = 2 * lambda * (h.weight - a.weight);
    g.head.bias = 2 * lambda * (h.bias - a.bias);
    return g;
}

double logistic_loss(const Dense& classifier, const Eigen::MatrixXd& x, const std::vector<int>& labels,
                     const Eigen::VectorXd& w) {
    return ce_per_row(affine(classifier, x), labels).dot(w) / static_cast<double>(x.rows());
}

Dense logistic_gradient(const Dense& classifier, const Eigen::MatrixXd& x, const std::vector<int>& labels,
                        const Eigen::VectorXd& w) {
    const Eigen::MatrixXd g = ce_logit_gradient(affine(classifier, x), labels, w, 1.0 / static_cast<double>(x.rows()));
    return {g.transpose() * x, g.colwise().sum().transpose()};
}

double linear_regression_loss(const Eigen::VectorXd& theta, const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
                              const Eigen::VectorXd& w) {
    const Eigen::VectorXd r = y - x * theta;
    return (w.array() * r.array().square()).sum() / static_cast<double>(x.rows());
}

Eigen::VectorXd linear_regression_gradient(const Eigen::VectorXd& theta, const Eigen::MatrixXd& x,
                                           const Eigen::VectorXd& y, const Eigen::VectorXd& w) {
    const Eigen::VectorXd r = x * theta - y;
    return 2.0 / static_cast<double>(x.rows()) * (x.transpose() * (w.array() * r.array()).matrix());
}

Eigen::VectorXd flatten(const MultiHeadModel& model, const TaskId& task) {
    const Dense& head = model.head(task);
    Eigen::VectorXd flat(model.body.parameter_count() + head.parameter_count());
    Eigen::Index pos = 0;
    append(flat, pos, model.body);
    append(flat, pos, head);
    return flat;
}

void unflatten(MultiHeadModel& model, const TaskId& task, const Eigen::VectorXd& flat) {
    Dense& head = model.head(task);
    require(flat.size() == model.body.parameter_count() + head.parameter_count(), Errc::DimensionMismatch,
            "flat parameter vector has the wrong length");
    Eigen::Index pos = 0;
    extract(flat, pos, model.body);
    extract(flat, pos, head);
}

Eigen::VectorXd flatten(const ModelGradient& grad) {
    Eigen::VectorXd flat(grad.body.parameter_count() + grad.head.parameter_count());
    Eigen::Index pos = 0;
    append(flat, pos, grad.body);
    append(flat, pos, grad.head);
    return flat;
}

// ---------------------------------------------------------------------------

MultiHeadModel weighted_fit(const MultiHeadModel& model, const LabeledDataset& data, const WeightVector& weights,
                            const TrainConfig& cfg, TrainMask mask, const std::optional<L2Anchor>& l2) {
    validate(data);
    validate(cfg);
    require(weights.values.size() == data.size(), Errc::DimensionMismatch, "weights and samples differ in count");
    const TaskId& task = data.task;
    require(model.head(task).out_dim() == data.classes, Errc::ArchitectureMismatch,
            "head width differs from the task's class count");
    const Eigen::VectorXd w = mean_one(weights.values);

    MultiHeadModel out = model;
    const Eigen::Index n = data.size();
    const Eigen::Index batch = (cfg.batch_size <= 0 || cfg.batch_size >= n) ? n : cfg.batch_size;
    std::vector<Eigen::Index> order = all_rows(n);
    Rng rng(cfg.seed);
    std::vector<Eigen::Index> rows;
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        if (batch < n) std::shuffle(order.begin(), order.end(), rng);
        for (Eigen::Index start = 0; start < n; start += batch) {
            const Eigen::Index stop = std::min(n, start + batch);
            rows.assign(order.begin() + start, order.begin() + stop);
            ModelGradient grad = weighted_ce_gradient(out, data, task, w, rows);
            if (l2 && l2->lambda > 0) {
                const ModelGradient pen = l2_penalty_gradient(out, l2->anchor, task, l2->lambda);
                grad.body.weight += pen.body.weight;
                grad.body.bias += pen.body.bias;
                grad.head.weight += pen.head.weight;
                grad.head.bias += pen.head.bias;
            }
            require(all_finite(grad.body) && all_finite(grad.head), Errc::NonFiniteGradient,
                    "non-finite gradient in epoch " + std::to_string(epoch));
            if (mask.body) step(out.body, grad.body, cfg.learning_rate);
            if (mask.head) step(out.head(task), grad.head, cfg.learning_rate);
        }
    }
    return out;
}

MultiHeadModel l2_fit(const MultiHeadModel& model, const LabeledDataset& data, double lambda, const TrainConfig& cfg) {
    require(std::isfinite(lambda) && lambda >= 0, Errc::ConfigError, "lambda must be >= 0");
    const WeightVector ones{Eigen::VectorXd::Ones(data.size()), 0.0};
    return weighted_fit(model, data, ones, cfg, {}, L2Anchor{model, lambda});
}

MultiHeadModel linear_probe(const MultiHeadModel& model, const LabeledDataset& data, const TrainConfig& cfg) {
    MultiHeadModel start = model;
    if (!start.has_head(data.task)) add_zero_head(start, data.task, data.classes);
    TrainConfig probe = cfg;
    probe.learning_rate = cfg.probe_learning_rate;
    probe.epochs = cfg.probe_epochs;
    const WeightVector ones{Eigen::VectorXd::Ones(data.size()), 0.0};
    return weighted_fit(start, data, ones, probe, TrainMask{false, true});
}

MultiHeadModel wise_ft_average(const MultiHeadModel& pre, const MultiHeadModel& fine, double alpha) {
    require(alpha >= 0 && alpha <= 1, Errc::OutOfRange, "alpha must lie in [0, 1]");
    require(pre.body.weight.rows() == fine.body.weight.rows() && pre.body.weight.cols() == fine.body.weight.cols(),
            Errc::ArchitectureMismatch, "bodies differ in shape");
    MultiHeadModel out = fine;
    out.body.weight = alpha * pre.body.weight + (1 - alpha) * fine.body.weight;
    out.body.bias = alpha * pre.body.bias + (1 - alpha) * fine.body.bias;
    for (const auto& [task, head] : pre.heads) {
        if (const auto it = fine.heads.find(task); it != fine.heads.end())
            require(it->second.weight.rows() == head.weight.rows() && it->second.weight.cols() == head.weight.cols(),
                    Errc::ArchitectureMismatch, "head '" + task + "' differs in shape");
        out.heads[task] = head;
    }
    return out;
}

FlowOutcome flow_multihead(const MultiHeadModel& pre, const LabeledDataset& data, const TrainConfig& cfg) {
    validate(cfg);
    const TemperaturePolicy& policy = policy_of(cfg.method);
    FlowOutcome out;
    out.probed = linear_probe(pre, data, cfg);
    out.losses = per_sample_losses(out.probed, data, data.task);
    const Temperature temperature = select_temperature(out.losses, policy);
    if (std::holds_alternative<method::DroContrast>(cfg.method)) {
        if (temperature.uniform)
            out.weights = {Eigen::VectorXd::Ones(out.losses.size()), 0.0};
        else
            out.weights = {dro_weights(out.losses, temperature.tau).values, temperature.tau};
    } else {
        out.weights = compute_weights(out.losses, temperature);
    }
    const MultiHeadModel fine = weighted_fit(out.probed, data, out.weights, cfg);
    out.new_task_model = linear_probe(fine, data, cfg);
    for (const auto& [task, head] : pre.heads) out.new_task_model.heads[task] = head;
    out.pretrain_task_model = out.new_task_model;
    return out;
}

MultiHeadModel standard_fit(const MultiHeadModel& pre, const LabeledDataset& data, const TrainConfig& cfg) {
    const MultiHeadModel probed = linear_probe(pre, data, cfg);
    double lambda = 0.0;
    if (const auto* l2 = std::get_if<method::L2Reg>(&cfg.method)) lambda = l2->lambda;
    return l2_fit(probed, data, lambda, cfg);
}

MultiHeadModel pretrain(const LabeledDataset& data, Eigen::Index hidden_dim, const TrainConfig& cfg,
                        std::uint64_t init_seed) {
    validate(data);
    const MultiHeadModel init = init_model(data.features.cols(), hidden_dim, data.task, data.classes, init_seed);
    const WeightVector ones{Eigen::VectorXd::Ones(data.size()), 0.0};
    return weighted_fit(init, data, ones, cfg);
}

// ---------------------------------------------------------------------------

namespace {

theory::Trajectory<double> linear_gd(const theory::LinearTaskSpec<double>& spec, const Eigen::MatrixXd& x,
                                     const Eigen::VectorXd& y, const Eigen::VectorXd& w, double eta, int steps) {
    require(eta > 0, Errc::OutOfRange, "learning rate must be > 0");
    require(steps >= 0, Errc::OutOfRange, "step count must be >= 0");
    theory::Trajectory<double> traj;
    traj.learning_rate = eta;
    Eigen::VectorXd theta = spec.theta_pre;
    for (int k = 0; k <= steps; ++k) {
        theory::TrajectoryPoint<double> p;
        p.k = k;
        p.theta = theta;
        traj.points.push_back(std::move(p));
        if (k < steps) theta -= eta * linear_regression_gradient(theta, x, y, w);
        require(theta.allFinite(), Errc::NonFiniteGradient, "linear GD produced non-finite parameters");
    }
    theory::annotate(traj, spec);
    return traj;
}

}  // namespace

theory::Trajectory<double> empirical_flow_linear(const theory::LinearTaskSpec<double>& spec, Eigen::Index n,
                                                 double tau, double eta, int steps, std::uint64_t seed) {
    require(n >= spec.d, Errc::OutOfRange, "need at least d samples");
    require(tau > 0, Errc::NonPositiveTemperature, "temperature must be > 0");
    const Eigen::MatrixXd x = theory::basis_sampler(spec, n, seed);
    const Eigen::VectorXd y = x * spec.theta_ft;
    const Eigen::ArrayXd r = (y - x * spec.theta_pre).array();
    const Eigen::VectorXd w = (-(r * r) / tau).unaryExpr([](double v) { return std::exp(v); }).matrix();
    auto traj = linear_gd(spec, x, y, w, eta, steps);
    traj.method = "flow_empirical";
    traj.parameter = tau;
    return traj;
}

theory::Trajectory<double> empirical_ft_linear(const theory::LinearTaskSpec<double>& spec, Eigen::Index n, double eta,
                                               int steps, std::uint64_t seed) {
    require(n >= spec.d, Errc::OutOfRange, "need at least d samples");
    const Eigen::MatrixXd x = theory::basis_sampler(spec, n, seed);
    const Eigen::VectorXd y = x * spec.theta_ft;
    auto traj = linear_gd(spec, x, y, Eigen::VectorXd::Ones(n), eta, steps);
    traj.method = "vanilla_empirical";
    return traj;
}

}  // namespace flowlab
