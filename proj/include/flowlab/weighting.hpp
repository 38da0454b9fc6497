#ifndef FLOWLAB_WEIGHTING_HPP
#define FLOWLAB_WEIGHTING_HPP

#include <Eigen/Dense>

#include <string>
#include <vector>

namespace flowlab {

/// Per-sample losses of the fine-tuning data under the frozen pre-trained
/// model. Entries are finite and non-negative; construction validates.
class LossVector {
  public:
    LossVector() = default;
    explicit LossVector(Eigen::VectorXd values);
    explicit LossVector(const std::vector<double>& values);

    [[nodiscard]] const Eigen::VectorXd& values() const noexcept { return values_; }
    [[nodiscard]] Eigen::Index size() const noexcept { return values_.size(); }
    [[nodiscard]] double operator[](Eigen::Index i) const { return values_[i]; }

  private:
    Eigen::VectorXd values_;
};

class TemperaturePolicy {
  public:
    enum class Kind { Median, Percentile, Fixed };

    static TemperaturePolicy median() { return {Kind::Median, 50.0}; }
    static TemperaturePolicy percentile(double p);
    static TemperaturePolicy fixed(double tau);

    /// Accepts "median", "percentile:<p>" and "fixed:<tau>".
    static TemperaturePolicy parse(const std::string& text);

    [[nodiscard]] Kind kind() const noexcept { return kind_; }
    /// Percentile in (0, 100) for Median/Percentile, tau for Fixed.
    [[nodiscard]] double value() const noexcept { return value_; }
    [[nodiscard]] std::string to_string() const;

    friend bool operator==(const TemperaturePolicy&, const TemperaturePolicy&) = default;

  private:
    TemperaturePolicy(Kind kind, double value) : kind_(kind), value_(value) {}
    Kind kind_;
    double value_;
};

/// Result of temperature selection. `uniform` is the degenerate signal
/// raised when every loss is zero: callers then emit all-ones weights.
struct Temperature {
    double tau = 0.0;
    bool uniform = false;

    static Temperature degenerate_uniform() { return {0.0, true}; }
    friend bool operator==(const Temperature&, const Temperature&) = default;
};

struct WeightVector {
    Eigen::VectorXd values;
    double tau = 0.0;  // 0 when produced from the degenerate-uniform signal
};

struct SimplexWeights {
    Eigen::VectorXd values;
};

/// Percentile of the losses by linear interpolation between order
/// statistics (position (n-1)p/100). Median is exactly Percentile(50), so
/// even n yields the mean of the two middle values.
Temperature select_temperature(const LossVector& losses, const TemperaturePolicy& policy);

/// w_i = exp(-l_i / tau). Large l_i/tau underflows to exactly 0; that is
/// kept (normalize_weights then reports AllZeroWeights if nothing survives).
WeightVector compute_weights(const LossVector& losses, double tau);
WeightVector compute_weights(const LossVector& losses, const Temperature& temperature);

SimplexWeights normalize_weights(const WeightVector& weights);

/// g(pi) = sum pi_i l_i + tau sum pi_i log pi_i, with 0 log 0 = 0.
double entropic_objective(const SimplexWeights& pi, const LossVector& losses, double tau);

/// Inner maximiser of the entropic DRO objective, pi_i ∝ exp(+l_i / tau).
/// Only used as a contrast to FLOW; evaluated with the max loss subtracted.
SimplexWeights dro_weights(const LossVector& losses, double tau);

}  // namespace flowlab

#endif  // FLOWLAB_WEIGHTING_HPP
