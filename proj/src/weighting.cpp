#include "flowlab/weighting.hpp"

#include "flowlab/errors.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace flowlab {

namespace {

// Eigen's vectorised exp clamps large negative arguments to a tiny
// subnormal instead of 0, which would hide underflow.
Eigen::VectorXd exact_exp(const Eigen::ArrayXd& x) {
    return x.unaryExpr([](double v) { return std::exp(v); }).matrix();
}

void validate_losses(const Eigen::VectorXd& v) {
    require(v.size() >= 1, Errc::EmptyInput, "loss vector is empty");
    for (Eigen::Index i = 0; i < v.size(); ++i) {
        require(std::isfinite(v[i]), Errc::NonFiniteLoss,
                "loss " + std::to_string(i) + " is not finite");
        require(v[i] >= 0.0, Errc::NegativeLoss,
                "loss " + std::to_string(i) + " is negative");
    }
}

double parse_number(const std::string& text, const std::string& context) {
    std::size_t used = 0;
    double value = 0.0;
    try {
        value = std::stod(text, &used);
    } catch (const std::exception&) {
        fail(Errc::InvalidPolicy, "bad number in temperature policy '" + context + "'");
    }
    require(used == text.size(), Errc::InvalidPolicy,
            "trailing characters in temperature policy '" + context + "'");
    return value;
}

}  // namespace

LossVector::LossVector(Eigen::VectorXd values) : values_(std::move(values)) { validate_losses(values_); }

LossVector::LossVector(const std::vector<double>& values)
    : values_(Eigen::Map<const Eigen::VectorXd>(values.data(), static_cast<Eigen::Index>(values.size()))) {
    validate_losses(values_);
}

TemperaturePolicy TemperaturePolicy::percentile(double p) {
    require(std::isfinite(p) && p > 0.0 && p < 100.0, Errc::InvalidPolicy,
            "percentile must lie strictly between 0 and 100");
    return {Kind::Percentile, p};
}

TemperaturePolicy TemperaturePolicy::fixed(double tau) {
    require(std::isfinite(tau) && tau > 0.0, Errc::InvalidPolicy, "fixed temperature must be > 0");
    return {Kind::Fixed, tau};
}

TemperaturePolicy TemperaturePolicy::parse(const std::string& text) {
    if (text == "median") return median();
    const auto colon = text.find(':');
    if (colon != std::string::npos) {
        const std::string head = text.substr(0, colon);
        const std::string tail = text.substr(colon + 1);
        if (head == "percentile") return percentile(parse_number(tail, text));
        if (head == "fixed") return fixed(parse_number(tail, text));
    }
    fail(Errc::InvalidPolicy, "unknown temperature policy '" + text + "'");
}

std::string TemperaturePolicy::to_string() const {
    if (kind_ == Kind::Median) return "median";
    std::ostringstream out;
    out << (kind_ == Kind::Percentile ? "percentile:" : "fixed:") << value_;
    return out.str();
}

Temperature select_temperature(const LossVector& losses, const TemperaturePolicy& policy) {
    require(losses.size() >= 1, Errc::EmptyInput, "loss vector is empty");
    if (policy.kind() == TemperaturePolicy::Kind::Fixed) return {policy.value(), false};

    std::vector<double> sorted(losses.values().begin(), losses.values().end());
    std::sort(sorted.begin(), sorted.end());
    const double pos = static_cast<double>(sorted.size() - 1) * policy.value() / 100.0;
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
    const double frac = pos - static_cast<double>(lo);
    double tau = sorted[lo] + frac * (sorted[hi] - sorted[lo]);

    if (tau > 0.0) return {tau, false};
    tau = losses.values().mean();
    if (tau > 0.0) return {tau, false};
    return Temperature::degenerate_uniform();
}

WeightVector compute_weights(const LossVector& losses, double tau) {
    require(std::isfinite(tau) && tau > 0.0, Errc::NonPositiveTemperature, "temperature must be > 0");
    return {exact_exp(-losses.values().array() / tau), tau};
}

WeightVector compute_weights(const LossVector& losses, const Temperature& temperature) {
    if (temperature.uniform) return {Eigen::VectorXd::Ones(losses.size()), 0.0};
    return compute_weights(losses, temperature.tau);
}

SimplexWeights normalize_weights(const WeightVector& weights) {
    require(weights.values.size() >= 1, Errc::EmptyInput, "weight vector is empty");
    const double total = weights.values.sum();
    require(total > 0.0, Errc::AllZeroWeights, "all weights are zero; raise the temperature");
    return {weights.values / total};
}

double entropic_objective(const SimplexWeights& pi, const LossVector& losses, double tau) {
    require(pi.values.size() == losses.size(), Errc::DimensionMismatch,
            "simplex weights and losses differ in length");
    double linear = 0.0;
    double entropy = 0.0;
    for (Eigen::Index i = 0; i < pi.values.size(); ++i) {
        const double p = pi.values[i];
        linear += p * losses[i];
        if (p > 0.0) entropy += p * std::log(p);
    }
    return linear + tau * entropy;
}

SimplexWeights dro_weights(const LossVector& losses, double tau) {
    require(std::isfinite(tau) && tau > 0.0, Errc::NonPositiveTemperature, "temperature must be > 0");
    const double top = losses.values().maxCoeff();
    const Eigen::VectorXd w = exact_exp((losses.values().array() - top) / tau);
    return {w / w.sum()};
}

}  // namespace flowlab
