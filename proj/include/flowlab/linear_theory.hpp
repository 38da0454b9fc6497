#ifndef FLOWLAB_LINEAR_THEORY_HPP
#define FLOWLAB_LINEAR_THEORY_HPP

// Linear pre-train / fine-tune setting: closed-form weighted covariance,
// GD trajectories of vanilla fine-tuning and FLOW, the spectrum of the FLOW
// iteration matrix Q and the model-averaging comparison.
//
// Coordinates: every trajectory point is written as
//     theta_k = theta_ft + coef_e * e + coef_eperp * ||e|| * e_perp,
// which is exact for both closed forms because all dynamics stay in
// span(e_bar, e_perp).

#include "flowlab/errors.hpp"
#include "flowlab/rng.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

namespace flowlab::theory {

template <typename Scalar>
using Vec = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
template <typename Scalar>
using Mat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <typename Scalar>
using Vec2 = Eigen::Matrix<Scalar, 2, 1>;
template <typename Scalar>
using Mat2 = Eigen::Matrix<Scalar, 2, 2>;

template <typename Scalar = double>
struct LinearTaskSpec {
    Eigen::Index d = 0;
    Vec<Scalar> theta_pre;  // pre-trained optimum
    Vec<Scalar> theta_ft;   // fine-tuning optimum
    Vec<Scalar> e;          // theta_pre - theta_ft
    Vec<Scalar> e_bar;
    Vec<Scalar> e_perp;
    Scalar rho = 0;
    Mat<Scalar> sigma_pre;  // pre-training covariance, >= I

    [[nodiscard]] Scalar gap_norm() const { return e.norm(); }

    /// Fine-tuning covariance I + rho (e_bar e_perp^T + e_perp e_bar^T).
    [[nodiscard]] Mat<Scalar> sigma_tilde() const {
        Mat<Scalar> s = Mat<Scalar>::Identity(d, d);
        s += rho * (e_bar * e_perp.transpose() + e_perp * e_bar.transpose());
        return s;
    }
};

/// Unit vector orthogonal to `e_bar`: Gram-Schmidt of the first standard
/// basis vector whose |<., e_bar>| < 0.9.
template <typename Scalar>
Vec<Scalar> perpendicular_unit(const Vec<Scalar>& e_bar) {
    const Eigen::Index d = e_bar.size();
    for (Eigen::Index i = 0; i < d; ++i) {
        if (std::abs(e_bar[i]) < Scalar(0.9)) {
            Vec<Scalar> v = Vec<Scalar>::Unit(d, i);
            v -= e_bar.dot(v) * e_bar;
            v -= e_bar.dot(v) * e_bar;  // second pass for orthogonality at 1e-16
            return v / v.norm();
        }
    }
    fail(Errc::DimensionTooSmall, "no standard basis vector is usable for e_perp");
}

template <typename Scalar>
void validate(const LinearTaskSpec<Scalar>& spec) {
    using std::abs;
    const Eigen::Index d = spec.d;
    require(d >= 2, Errc::DimensionTooSmall, "task dimension must be >= 2");
    require(spec.theta_pre.size() == d && spec.theta_ft.size() == d && spec.e.size() == d &&
                spec.e_bar.size() == d && spec.e_perp.size() == d && spec.sigma_pre.rows() == d &&
                spec.sigma_pre.cols() == d,
            Errc::DimensionMismatch, "task vectors and matrices must all have dimension d");
    require(spec.rho >= 0 && spec.rho < 1, Errc::OutOfRange, "rho must lie in [0, 1)");
    require(abs(spec.e_bar.norm() - 1) <= Scalar(1e-12), Errc::OutOfRange, "e_bar is not unit norm");
    require(abs(spec.e_perp.norm() - 1) <= Scalar(1e-12), Errc::OutOfRange, "e_perp is not unit norm");
    require(abs(spec.e_bar.dot(spec.e_perp)) <= Scalar(1e-12), Errc::OutOfRange,
            "e_bar and e_perp are not orthogonal");
    require((spec.sigma_pre - spec.sigma_pre.transpose()).cwiseAbs().maxCoeff() <= Scalar(1e-12),
            Errc::NotPositiveDefinite, "pre-training covariance is not symmetric");
    Eigen::SelfAdjointEigenSolver<Mat<Scalar>> eig(spec.sigma_pre, Eigen::EigenvaluesOnly);
    require(eig.eigenvalues().minCoeff() >= Scalar(1) - Scalar(1e-9), Errc::NotPositiveDefinite,
            "pre-training covariance must satisfy Sigma >= I");
}

/// Builds a task from two optima. e_bar = e / ||e||; e_perp by
/// perpendicular_unit; sigma_pre defaults to I.
template <typename Scalar>
LinearTaskSpec<Scalar> task_from_optima(const Vec<Scalar>& theta_pre, const Vec<Scalar>& theta_ft, Scalar rho,
                                        Mat<Scalar> sigma_pre = {}) {
    LinearTaskSpec<Scalar> spec;
    spec.d = theta_pre.size();
    require(spec.d >= 2, Errc::DimensionTooSmall, "task dimension must be >= 2");
    require(theta_ft.size() == spec.d, Errc::DimensionMismatch, "optima differ in dimension");
    spec.theta_pre = theta_pre;
    spec.theta_ft = theta_ft;
    spec.e = theta_pre - theta_ft;
    require(spec.e.norm() > 0, Errc::OutOfRange, "optima coincide; the gap e must be non-zero");
    spec.e_bar = spec.e / spec.e.norm();
    spec.e_perp = perpendicular_unit(spec.e_bar);
    spec.rho = rho;
    spec.sigma_pre = sigma_pre.size() == 0 ? Mat<Scalar>::Identity(spec.d, spec.d) : std::move(sigma_pre);
    validate(spec);
    return spec;
}

/// theta_ft ~ N(0, I) from the seed; e_bar is the first standard basis
/// vector, theta_pre = theta_ft + gap_norm * e_bar.
template <typename Scalar = double>
LinearTaskSpec<Scalar> make_task(Eigen::Index d, Scalar rho, Scalar gap_norm, std::uint64_t seed) {
    require(d >= 2, Errc::DimensionTooSmall, "task dimension must be >= 2");
    require(rho >= 0 && rho < 1, Errc::OutOfRange, "rho must lie in [0, 1)");
    require(gap_norm > 0, Errc::OutOfRange, "gap norm must be > 0");
    Rng rng(derive_seed(seed, "task"));
    const Vec<Scalar> theta_ft = standard_normal(rng, d).template cast<Scalar>();
    const Vec<Scalar> theta_pre = theta_ft + gap_norm * Vec<Scalar>::Unit(d, 0);
    auto spec = task_from_optima<Scalar>(theta_pre, theta_ft, rho);
    // e_bar is exactly the unit vector; avoid the rounding of e / ||e||
    spec.e_bar = Vec<Scalar>::Unit(d, 0);
    spec.e_perp = perpendicular_unit(spec.e_bar);
    return spec;
}

template <typename Scalar>
LinearTaskSpec<Scalar> with_sigma_pre(LinearTaskSpec<Scalar> spec, Mat<Scalar> sigma_pre) {
    spec.sigma_pre = std::move(sigma_pre);
    validate(spec);
    return spec;
}

// ---------------------------------------------------------------------------
// Temperature re-parameterisations

template <typename Scalar>
Scalar mu_from_tau(Scalar tau, Scalar gap_norm) {
    require(tau > 0, Errc::NonPositiveTemperature, "temperature must be > 0");
    require(gap_norm > 0, Errc::OutOfRange, "gap norm must be > 0");
    using std::sqrt;
    return sqrt(tau / (tau + 2 * gap_norm * gap_norm));
}

template <typename Scalar>
void check_beta_rho(Scalar beta, Scalar rho) {
    require(beta > 0 && beta <= 1, Errc::OutOfRange, "beta must lie in (0, 1]");
    require(rho >= 0 && rho < 1, Errc::OutOfRange, "rho must lie in [0, 1)");
}

template <typename Scalar>
Scalar beta_to_mu(Scalar beta, Scalar rho) {
    check_beta_rho(beta, rho);
    using std::sqrt;
    const Scalar r2 = rho * rho;
    return sqrt(beta * (1 - r2) / ((1 + beta) * (1 - beta * r2)));
}

template <typename Scalar>
Scalar beta_to_tau(Scalar beta, Scalar rho, Scalar gap_norm) {
    check_beta_rho(beta, rho);
    require(gap_norm > 0, Errc::OutOfRange, "gap norm must be > 0");
    const Scalar r2 = rho * rho;
    return 2 * beta * (1 - r2) * gap_norm * gap_norm / (1 - beta * beta * r2);
}

// ---------------------------------------------------------------------------
// Weighted covariance

/// Q = (1-mu^2) e e^T + rho^2 (1-mu^2) p p^T - rho mu^2 (e p^T + p e^T),
/// with e = e_bar, p = e_perp.
template <typename Scalar>
Mat<Scalar> q_matrix(const LinearTaskSpec<Scalar>& spec, Scalar mu) {
    const Scalar m2 = mu * mu;
    const auto& eb = spec.e_bar;
    const auto& ep = spec.e_perp;
    Mat<Scalar> q = (1 - m2) * eb * eb.transpose();
    q += spec.rho * spec.rho * (1 - m2) * ep * ep.transpose();
    q -= spec.rho * m2 * (eb * ep.transpose() + ep * eb.transpose());
    return q;
}

/// E[exp(-<e, x>^2 / tau) x x^T] for x ~ N(0, sigma_tilde) with the
/// structured fine-tuning covariance: mu (I - Q).
template <typename Scalar>
Mat<Scalar> weighted_covariance_closed(const LinearTaskSpec<Scalar>& spec, Scalar tau) {
    const Scalar mu = mu_from_tau(tau, spec.gap_norm());
    return mu * (Mat<Scalar>::Identity(spec.d, spec.d) - q_matrix(spec, mu));
}

/// Same expectation for an arbitrary SPD covariance:
///     mu (S - (1 - mu^2) S e e^T S / (e^T S e)),  mu = sqrt(a / (a + 2)),
/// where tau = a * e^T S e.
template <typename Scalar>
Mat<Scalar> weighted_covariance_general(const Mat<Scalar>& sigma_tilde, const Vec<Scalar>& e, Scalar tau) {
    require(sigma_tilde.rows() == sigma_tilde.cols() && sigma_tilde.rows() == e.size(), Errc::DimensionMismatch,
            "covariance and gap vector differ in dimension");
    require(tau > 0, Errc::NonPositiveTemperature, "temperature must be > 0");
    require(e.norm() > 0, Errc::OutOfRange, "gap vector must be non-zero");
    require((sigma_tilde - sigma_tilde.transpose()).cwiseAbs().maxCoeff() <= Scalar(1e-12),
            Errc::NotPositiveDefinite, "covariance is not symmetric");
    Eigen::LLT<Mat<Scalar>> llt(sigma_tilde);
    require(llt.info() == Eigen::Success, Errc::NotPositiveDefinite, "covariance is not positive definite");

    const Vec<Scalar> se = sigma_tilde * e;
    const Scalar ese = e.dot(se);
    const Scalar alpha = tau / ese;
    using std::sqrt;
    const Scalar mu = sqrt(alpha / (alpha + 2));
    return mu * (sigma_tilde - (1 - mu * mu) * se * se.transpose() / ese);
}

// ---------------------------------------------------------------------------
// Spectrum of Q under the beta re-parameterisation

/// Eigen-pairs of Q; v1/v2 are coordinates in the (e_bar, e_perp) basis.
template <typename Scalar = double>
struct SpectralPair {
    Scalar lambda1 = 0;
    Scalar lambda2 = 0;
    Vec2<Scalar> v1;
    Vec2<Scalar> v2;
    Scalar beta = 0;
    Scalar mu = 0;
};

/// The 2x2 restriction of Q to span(e_bar, e_perp).
template <typename Scalar>
Mat2<Scalar> reduced_q(Scalar mu, Scalar rho) {
    const Scalar m2 = mu * mu;
    Mat2<Scalar> a;
    a << 1 - m2, -rho * m2, -rho * m2, rho * rho * (1 - m2);
    return a;
}

template <typename Scalar>
SpectralPair<Scalar> q_eigen(Scalar beta, Scalar rho) {
    check_beta_rho(beta, rho);
    using std::sqrt;
    const Scalar r2 = rho * rho;
    const Scalar br = beta * rho;
    const Scalar norm = sqrt(1 + br * br);
    SpectralPair<Scalar> out;
    out.beta = beta;
    out.mu = beta_to_mu(beta, rho);
    out.lambda1 = (1 + beta * r2) / (1 + beta);
    out.lambda2 = r2 * (1 - beta) / (1 - beta * r2);
    out.v1 << 1 / norm, -br / norm;
    out.v2 << -br / norm, -1 / norm;
    return out;
}

/// Embeds a coordinate pair from the (e_bar, e_perp) basis into R^d.
template <typename Scalar>
Vec<Scalar> lift(const Vec2<Scalar>& coords, const LinearTaskSpec<Scalar>& spec) {
    return coords[0] * spec.e_bar + coords[1] * spec.e_perp;
}

/// Unit direction of slowest FLOW convergence, (e - beta rho ||e|| e_perp)
/// normalised: the top eigenvector of Q.
template <typename Scalar>
Vec<Scalar> stalled_direction(const LinearTaskSpec<Scalar>& spec, Scalar beta) {
    check_beta_rho(beta, spec.rho);
    Vec<Scalar> v = spec.e - beta * spec.rho * spec.gap_norm() * spec.e_perp;
    return v / v.norm();
}

// ---------------------------------------------------------------------------
// Errors and trajectories

template <typename Scalar = double>
struct PopulationErrors {
    Scalar err1 = 0;
    Scalar err2 = 0;
    Scalar err_tot = 0;
};

template <typename Scalar>
PopulationErrors<Scalar> population_errors(const Vec<Scalar>& theta, const LinearTaskSpec<Scalar>& spec) {
    require(theta.size() == spec.d, Errc::DimensionMismatch, "parameter vector has wrong dimension");
    const Vec<Scalar> to_pre = theta - spec.theta_pre;
    const Vec<Scalar> to_ft = theta - spec.theta_ft;
    PopulationErrors<Scalar> out;
    out.err1 = to_pre.dot(spec.sigma_pre * to_pre);
    out.err2 = to_ft.dot(spec.sigma_tilde() * to_ft);
    out.err_tot = out.err1 + out.err2;
    return out;
}

template <typename Scalar = double>
struct TrajectoryPoint {
    int k = 0;
    Vec<Scalar> theta;
    Scalar coef_e = 0;
    Scalar coef_eperp = 0;
    Scalar err1 = 0;
    Scalar err2 = 0;
    Scalar err_tot = 0;
    Scalar gamma = std::numeric_limits<Scalar>::quiet_NaN();  // FLOW only
};

template <typename Scalar = double>
struct Trajectory {
    std::string method;
    Scalar learning_rate = 0;
    Scalar parameter = std::numeric_limits<Scalar>::quiet_NaN();  // beta or tau
    std::vector<TrajectoryPoint<Scalar>> points;
};

namespace detail {

template <typename Scalar>
TrajectoryPoint<Scalar> point_from_coefs(int k, Scalar a, Scalar b, const LinearTaskSpec<Scalar>& spec) {
    TrajectoryPoint<Scalar> p;
    p.k = k;
    p.coef_e = a;
    p.coef_eperp = b;
    p.theta = spec.theta_ft + a * spec.e + b * spec.gap_norm() * spec.e_perp;
    const auto errs = population_errors(p.theta, spec);
    p.err1 = errs.err1;
    p.err2 = errs.err2;
    p.err_tot = errs.err_tot;
    return p;
}

}  // namespace detail

/// Fills coefficients and population errors of a trajectory that only
/// carries parameter vectors (e.g. from simulate_gd).
template <typename Scalar>
void annotate(Trajectory<Scalar>& traj, const LinearTaskSpec<Scalar>& spec) {
    const Scalar g = spec.gap_norm();
    for (auto& p : traj.points) {
        const Vec<Scalar> diff = p.theta - spec.theta_ft;
        p.coef_e = diff.dot(spec.e_bar) / g;
        p.coef_eperp = diff.dot(spec.e_perp) / g;
        const auto errs = population_errors(p.theta, spec);
        p.err1 = errs.err1;
        p.err2 = errs.err2;
        p.err_tot = errs.err_tot;
    }
}

/// Vanilla fine-tuning from theta_pre: theta_k = theta_ft + (I - 2 eta S)^k e.
/// At eta = 1/2 the closed form rho^k (1[k even] e - 1[k odd] ||e|| e_perp)
/// is used directly.
template <typename Scalar>
Trajectory<Scalar> vanilla_ft_trajectory(const LinearTaskSpec<Scalar>& spec, Scalar eta, int steps) {
    require(eta > 0, Errc::OutOfRange, "learning rate must be > 0");
    require(steps >= 0, Errc::OutOfRange, "step count must be >= 0");
    Trajectory<Scalar> traj{"vanilla", eta, std::numeric_limits<Scalar>::quiet_NaN(), {}};
    traj.points.reserve(static_cast<std::size_t>(steps) + 1);
    if (eta == Scalar(0.5)) {
        Scalar rk = 1;
        for (int k = 0; k <= steps; ++k) {
            const bool even = (k % 2) == 0;
            traj.points.push_back(detail::point_from_coefs(k, even ? rk : Scalar(0), even ? Scalar(0) : -rk, spec));
            rk *= spec.rho;
        }
        return traj;
    }
    Mat2<Scalar> s;
    s << 1, spec.rho, spec.rho, 1;
    const Mat2<Scalar> p = Mat2<Scalar>::Identity() - 2 * eta * s;
    Vec2<Scalar> c(1, 0);
    for (int k = 0; k <= steps; ++k) {
        traj.points.push_back(detail::point_from_coefs(k, c[0], c[1], spec));
        c = p * c;
    }
    return traj;
}

/// FLOW with eta = 1/(2 mu): theta_K = theta_ft + Q^K e, expanded through
/// the eigen-pairs of Q. Each point also carries gamma(K, beta).
template <typename Scalar>
Trajectory<Scalar> flow_trajectory(const LinearTaskSpec<Scalar>& spec, Scalar beta, int steps) {
    require(steps >= 0, Errc::OutOfRange, "step count must be >= 0");
    const auto sp = q_eigen(beta, spec.rho);
    const Scalar br2 = beta * beta * spec.rho * spec.rho;
    Trajectory<Scalar> traj{"flow", 1 / (2 * sp.mu), beta, {}};
    traj.points.reserve(static_cast<std::size_t>(steps) + 1);
    Scalar l1k = 1;
    Scalar l2k = 1;
    for (int k = 0; k <= steps; ++k) {
        const Scalar a = (l1k + l2k * br2) / (1 + br2);
        const Scalar b = -beta * spec.rho * (l1k - l2k) / (1 + br2);
        auto p = detail::point_from_coefs(k, a, b, spec);
        p.gamma = l1k / (1 + br2);
        traj.points.push_back(std::move(p));
        l1k *= sp.lambda1;
        l2k *= sp.lambda2;
    }
    return traj;
}

/// Approximation theta_ft + gamma(K, beta) (e - beta rho ||e|| e_perp).
template <typename Scalar>
Vec<Scalar> flow_asymptote(const LinearTaskSpec<Scalar>& spec, Scalar beta, int steps) {
    const auto sp = q_eigen(beta, spec.rho);
    using std::pow;
    const Scalar gamma = pow(sp.lambda1, steps) / (1 + beta * beta * spec.rho * spec.rho);
    return spec.theta_ft + gamma * (spec.e - beta * spec.rho * spec.gap_norm() * spec.e_perp);
}

/// Plain GD on (theta - opt)^T S (theta - opt):
///     theta_{k+1} = theta_k - 2 eta S (theta_k - opt).
/// Only parameter vectors are filled; see annotate().
template <typename Scalar>
Trajectory<Scalar> simulate_gd(const Mat<Scalar>& sigma_eff, const Vec<Scalar>& theta0, const Vec<Scalar>& theta_opt,
                               Scalar eta, int steps) {
    require(eta > 0, Errc::OutOfRange, "learning rate must be > 0");
    require(steps >= 0, Errc::OutOfRange, "step count must be >= 0");
    require(sigma_eff.rows() == theta0.size() && sigma_eff.cols() == theta0.size() &&
                theta_opt.size() == theta0.size(),
            Errc::DimensionMismatch, "GD operands differ in dimension");
    Trajectory<Scalar> traj{"gd", eta, std::numeric_limits<Scalar>::quiet_NaN(), {}};
    const Scalar start = (theta0 - theta_opt).norm();
    Vec<Scalar> theta = theta0;
    for (int k = 0; k <= steps; ++k) {
        TrajectoryPoint<Scalar> p;
        p.k = k;
        p.theta = theta;
        traj.points.push_back(std::move(p));
        if (k == steps) break;
        theta -= 2 * eta * (sigma_eff * (theta - theta_opt));
        require((theta - theta_opt).norm() <= Scalar(1e6) * start, Errc::DivergenceDetected,
                "gradient descent diverged at step " + std::to_string(k + 1));
    }
    return traj;
}

// ---------------------------------------------------------------------------
// Model averaging

template <typename Scalar>
Vec<Scalar> model_average(const LinearTaskSpec<Scalar>& spec, Scalar omega) {
    require(omega >= 0 && omega <= 1, Errc::OutOfRange, "averaging weight must lie in [0, 1]");
    return spec.theta_ft + omega * spec.e;
}

template <typename Scalar = double>
struct OptimalAveraging {
    Scalar omega_star = 0;
    Scalar err_star = 0;
};

/// Best convex combination of the two optima:
///     omega* = s / (s + 1),  err* = s / (s + 1) ||e||^2,  s = e_bar^T Sigma e_bar.
template <typename Scalar>
OptimalAveraging<Scalar> optimal_averaging(const LinearTaskSpec<Scalar>& spec) {
    const Scalar s = spec.e_bar.dot(spec.sigma_pre * spec.e_bar);
    const Scalar g2 = spec.e.squaredNorm();
    return {s * g2 / (s * g2 + g2), s / (s + 1) * g2};
}

/// Uniform grid i / n, i = 1..n, over (0, 1].
template <typename Scalar = double>
std::vector<Scalar> uniform_beta_grid(int n) {
    require(n >= 1, Errc::OutOfRange, "grid size must be >= 1");
    std::vector<Scalar> grid;
    grid.reserve(static_cast<std::size_t>(n));
    for (int i = 1; i <= n; ++i) grid.push_back(Scalar(i) / Scalar(n));
    return grid;
}

template <typename Scalar = double>
struct AveragingComparison {
    Scalar flow_min = std::numeric_limits<Scalar>::infinity();
    Scalar beta_at = 0;
    int k_at = 0;
    Scalar omega_star = 0;
    Scalar err_star = 0;
    Scalar gap_sq = 0;  // ||e||^2 = min(err_tot(theta_pre), err_tot(theta_ft)) lower bound
    bool holds = false;
};

/// Sweeps FLOW over (beta, K) and compares its best total error with
/// optimally tuned averaging. `holds` is flow_min <= err* + 1e-6.
template <typename Scalar>
AveragingComparison<Scalar> flow_beats_averaging_check(const LinearTaskSpec<Scalar>& spec,
                                                       const std::vector<Scalar>& beta_grid, int k_max) {
    require(!beta_grid.empty(), Errc::EmptyInput, "beta grid is empty");
    require(k_max >= 1, Errc::OutOfRange, "K_max must be >= 1");
    AveragingComparison<Scalar> out;
    const auto avg = optimal_averaging(spec);
    out.omega_star = avg.omega_star;
    out.err_star = avg.err_star;
    out.gap_sq = spec.e.squaredNorm();
    for (const Scalar beta : beta_grid) {
        const auto traj = flow_trajectory(spec, beta, k_max);
        for (const auto& p : traj.points) {
            if (p.err_tot < out.flow_min) {
                out.flow_min = p.err_tot;
                out.beta_at = beta;
                out.k_at = p.k;
            }
        }
    }
    out.holds = out.flow_min <= out.err_star + Scalar(1e-6);
    return out;
}

// ---------------------------------------------------------------------------
// Monte-Carlo oracles (double precision only)

/// Samples per deterministic chunk of every Monte-Carlo routine.
inline constexpr Eigen::Index kMcChunk = 65536;

/// Orthonormal basis of R^d whose first two columns are e_bar and e_perp.
Mat<double> orthonormal_completion(const Vec<double>& e_bar, const Vec<double>& e_perp);

/// n draws (rows) of x = z1 e_bar + (rho z1 + sqrt(1-rho^2) z2) e_perp + sum_j zj b_j.
Mat<double> basis_sampler(const LinearTaskSpec<double>& spec, Eigen::Index n, std::uint64_t seed);

/// Monte-Carlo estimate of E[exp(-<e, x>^2 / tau) x x^T] with x ~ N(0, S)
/// drawn through the Cholesky factor of S. Chunks of kMcChunk samples use
/// sub-seeds chunk_seed(seed, c) and are reduced in chunk order, so the
/// result is identical for any thread count.
Mat<double> weighted_covariance_mc(const Mat<double>& sigma_tilde, const Vec<double>& e, double tau,
                                   Eigen::Index n_samples, std::uint64_t seed, unsigned threads = 1);

/// The same estimate drawn with basis_sampler's construction.
Mat<double> weighted_covariance_mc(const LinearTaskSpec<double>& spec, double tau, Eigen::Index n_samples,
                                   std::uint64_t seed, unsigned threads = 1);

/// Plain sample second moment (1/n) sum x x^T of the rows.
Mat<double> second_moment(const Mat<double>& samples);

}  // namespace flowlab::theory

#endif  // FLOWLAB_LINEAR_THEORY_HPP
