#include "flowlab/selftest.hpp"

#include "flowlab/errors.hpp"
#include "flowlab/rng.hpp"
#include "flowlab/trainers.hpp"
#include "flowlab/weighting.hpp"

#include <cmath>
#include <sstream>

namespace flowlab {

namespace {

using theory::LinearTaskSpec;

std::string num(double v) {
    std::ostringstream out;
    out.precision(3);
    out << std::scientific << v;
    return out.str();
}

CheckResult within(std::string name, double err, double tol) {
    return {std::move(name), err <= tol, "max error " + num(err) + " (tolerance " + num(tol) + ")"};
}

// Max-norm relative gap between an analytic gradient and central differences.
template <class Loss>
double gradient_gap(const Eigen::VectorXd& x, const Eigen::VectorXd& analytic, Loss loss) {
    const double h = 1e-5;
    Eigen::VectorXd numeric(x.size());
    Eigen::VectorXd probe = x;
    for (Eigen::Index i = 0; i < x.size(); ++i) {
        probe[i] = x[i] + h;
        const double up = loss(probe);
        probe[i] = x[i] - h;
        const double down = loss(probe);
        probe[i] = x[i];
        numeric[i] = (up - down) / (2 * h);
    }
    return (analytic - numeric).lpNorm<Eigen::Infinity>() /
           std::max(1e-12, std::max(analytic.lpNorm<Eigen::Infinity>(), numeric.lpNorm<Eigen::Infinity>()));
}

LabeledDataset random_data(Rng& rng, Eigen::Index n, Eigen::Index d, int classes) {
    LabeledDataset data;
    data.task = "t";
    data.classes = classes;
    data.features = standard_normal(rng, n, d);
    std::uniform_int_distribution<int> label(0, classes - 1);
    for (Eigen::Index i = 0; i < n; ++i) data.labels.push_back(label(rng));
    return data;
}

CheckResult check_temperature() {
    const double odd = select_temperature(LossVector(std::vector<double>{0.2, 1.0, 3.0}), TemperaturePolicy::median()).tau;
    const double even =
        select_temperature(LossVector(std::vector<double>{1.0, 2.0, 3.0, 4.0}), TemperaturePolicy::median()).tau;
    const bool zero =
        select_temperature(LossVector(std::vector<double>{0, 0, 0}), TemperaturePolicy::median()).uniform;
    return {"median_temperature", odd == 1.0 && even == 2.5 && zero, "odd=" + num(odd) + " even=" + num(even)};
}

CheckResult check_weights() {
    const auto w = compute_weights(LossVector(std::vector<double>{0.2, 1.0, 3.0}), 1.0);
    Eigen::Vector3d expected(0.818730753077982, 0.367879441171442, 0.049787068367864);
    return within("exponential_weights", (w.values - expected).lpNorm<Eigen::Infinity>(), 1e-6);
}

CheckResult check_simplex_and_dro() {
    const auto pi = normalize_weights({Eigen::Vector3d(0.8187, 0.3679, 0.0498), 1.0});
    const auto dro = dro_weights(LossVector(std::vector<double>{0.0, std::log(3.0)}), 1.0);
    const double err = std::max(std::abs(pi.values.sum() - 1), (dro.values - Eigen::Vector2d(0.25, 0.75)).cwiseAbs().maxCoeff());
    return within("simplex_and_dro", err, 1e-12);
}

CheckResult check_entropic_optimality() {
    Rng rng(derive_seed(7, "selftest-entropic"));
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    double worst = -1e300;
    for (int inst = 0; inst < 20; ++inst) {
        const int n = 2 + inst % 9;
        Eigen::VectorXd l(n);
        for (int i = 0; i < n; ++i) l[i] = 5 * unit(rng);
        const LossVector losses(l);
        const double tau = 0.1 + 9.9 * unit(rng);
        const double best = entropic_objective(normalize_weights(compute_weights(losses, tau)), losses, tau);
        for (int s = 0; s < 500; ++s) {
            Eigen::VectorXd p(n);
            for (int i = 0; i < n; ++i) p[i] = -std::log(1 - unit(rng));
            worst = std::max(worst, best - entropic_objective({p / p.sum()}, losses, tau));
        }
    }
    return {"entropic_optimality", worst <= 1e-12, "max g(pi*) - g(pi') = " + num(worst)};
}

CheckResult check_round_trip() {
    double err = 0;
    for (double beta : {0.01, 0.25, 0.6, 1.0})
        for (double rho : {0.0, 0.5, 0.9}) {
            const double tau = theory::beta_to_tau(beta, rho, 1.7);
            err = std::max(err, std::abs(theory::mu_from_tau(tau, 1.7) - theory::beta_to_mu(beta, rho)));
        }
    return within("beta_tau_round_trip", err, 1e-12);
}

CheckResult check_q_eigen(const SelftestHooks& hooks) {
    double err = 0;
    bool ordered = true;
    for (int i = 1; i <= 10; ++i)
        for (int j = 0; j < 10; ++j) {
            const double beta = i / 10.0;
            const double rho = j / 10.0;
            const auto sp = hooks.q_eigen(beta, rho);
            const Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> es(theory::reduced_q(theory::beta_to_mu(beta, rho), rho));
            err = std::max({err, std::abs(sp.lambda1 - es.eigenvalues()[1]), std::abs(sp.lambda2 - es.eigenvalues()[0]),
                            1 - std::abs(sp.v1.dot(es.eigenvectors().col(1))),
                            1 - std::abs(sp.v2.dot(es.eigenvectors().col(0)))});
            if (rho > 0 && !(sp.lambda2 < rho * rho * sp.lambda1)) ordered = false;
        }
    CheckResult r = within("q_eigen_vs_solver", err, 1e-10);
    r.passed = r.passed && ordered;
    if (!ordered) r.detail += "; lambda2 < rho^2 lambda1 violated";
    return r;
}

CheckResult check_spectral_reconstruction(const SelftestHooks& hooks) {
    const auto spec = theory::make_task<double>(5, 0.6, 1.3, 11);
    const double beta = 0.35;
    const auto sp = hooks.q_eigen(beta, spec.rho);
    const Eigen::VectorXd v1 = theory::lift(sp.v1, spec);
    const Eigen::VectorXd v2 = theory::lift(sp.v2, spec);
    const Eigen::MatrixXd q = sp.lambda1 * v1 * v1.transpose() + sp.lambda2 * v2 * v2.transpose();
    const Eigen::MatrixXd rebuilt = sp.mu * (Eigen::MatrixXd::Identity(spec.d, spec.d) - q);
    const Eigen::MatrixXd closed =
        theory::weighted_covariance_closed(spec, theory::beta_to_tau(beta, spec.rho, spec.gap_norm()));
    return within("spectral_reconstruction", (rebuilt - closed).cwiseAbs().maxCoeff(), 1e-10);
}

CheckResult check_vanilla_trajectory() {
    const auto spec = theory::make_task<double>(8, 0.7, 2.0, 3);
    const auto closed = theory::vanilla_ft_trajectory(spec, 0.5, 60);
    const auto gd = theory::simulate_gd<double>(spec.sigma_tilde(), spec.theta_pre, spec.theta_ft, 0.5, 60);
    double err = 0;
    for (std::size_t k = 0; k < closed.points.size(); ++k) {
        err = std::max(err, (closed.points[k].theta - gd.points[k].theta).lpNorm<Eigen::Infinity>());
        const double dist = (closed.points[k].theta - spec.theta_ft).norm();
        err = std::max(err, std::abs(dist - std::pow(spec.rho, static_cast<double>(k)) * spec.gap_norm()));
    }
    return within("vanilla_trajectory_vs_gd", err, 1e-12);
}

CheckResult check_flow_trajectory() {
    const auto spec = theory::make_task<double>(6, 0.5, 1.0, 5);
    double err = 0;
    for (double beta : {0.01, 0.25, 1.0}) {
        const auto closed = theory::flow_trajectory(spec, beta, 100);
        const double tau = theory::beta_to_tau(beta, spec.rho, spec.gap_norm());
        const auto gd = theory::simulate_gd<double>(theory::weighted_covariance_closed(spec, tau), spec.theta_pre,
                                                    spec.theta_ft, closed.learning_rate, 100);
        for (std::size_t k = 0; k < closed.points.size(); ++k)
            err = std::max(err, (closed.points[k].theta - gd.points[k].theta).lpNorm<Eigen::Infinity>());
    }
    return within("flow_trajectory_vs_gd", err, 1e-8);
}

CheckResult check_stalling(const SelftestHooks& hooks) {
    const double l1 = hooks.q_eigen(0.01, 0.5).lambda1;
    const auto spec = theory::make_task<double>(4, 0.5, 1.0, 1);
    const double flow = theory::flow_trajectory(spec, 0.01, 50).points.back().err_tot;
    const double vanilla = theory::vanilla_ft_trajectory(spec, 0.5, 50).points.back().err2;
    const double g2 = spec.gap_norm() * spec.gap_norm();
    return {"stalled_direction", l1 >= 0.99 && flow > 0.5 * g2 && vanilla < 1e-3 * g2,
            "lambda1=" + num(l1) + " flow err_tot=" + num(flow) + " vanilla err2=" + num(vanilla)};
}

CheckResult check_averaging() {
    auto spec = theory::make_task<double>(4, 0.5, 1.0, 2);
    const auto opt = theory::optimal_averaging(spec);
    double grid_min = 1e300;
    for (int i = 0; i <= 100000; ++i)
        grid_min = std::min(grid_min, theory::population_errors(theory::model_average(spec, i / 100000.0), spec).err_tot);
    const auto cmp = theory::flow_beats_averaging_check(spec, theory::uniform_beta_grid<double>(200), 100);
    CheckResult r = within("averaging_optimum", std::abs(grid_min - opt.err_star), 1e-6);
    r.passed = r.passed && cmp.holds && cmp.flow_min < cmp.gap_sq;
    r.detail += " flow_min=" + num(cmp.flow_min) + " err*=" + num(opt.err_star);
    return r;
}

CheckResult check_covariance_mc(unsigned threads) {
    double err = 0;
    for (Eigen::Index d : {2, 4}) {
        const auto spec = theory::make_task<double>(d, 0.5, 1.0, 9);
        const double tau = spec.gap_norm() * spec.gap_norm();
        const Eigen::MatrixXd closed = theory::weighted_covariance_closed(spec, tau);
        const Eigen::MatrixXd mc =
            theory::weighted_covariance_mc(spec.sigma_tilde(), spec.e, tau, 100'000, derive_seed(0, "mc"), threads);
        err = std::max(err, (closed - mc).cwiseAbs().maxCoeff());
    }
    return within("covariance_monte_carlo", err, 2e-2);
}

CheckResult check_covariance_general() {
    const auto spec = theory::make_task<double>(3, 0.3, 1.5, 4);
    const double tau = 0.8;
    const Eigen::MatrixXd general = theory::weighted_covariance_general(spec.sigma_tilde(), spec.e, tau);
    return within("covariance_general_vs_structured",
                  (general - theory::weighted_covariance_closed(spec, tau)).cwiseAbs().maxCoeff(), 1e-10);
}

CheckResult check_ce_gradient() {
    Rng rng(derive_seed(3, "selftest-grad"));
    const LabeledDataset data = random_data(rng, 12, 5, 3);
    MultiHeadModel model = init_model(5, 6, "t", 3, derive_seed(3, "init"));
    Eigen::VectorXd w(12);
    for (Eigen::Index i = 0; i < 12; ++i) w[i] = 0.1 + 0.1 * static_cast<double>(i % 7);
    std::vector<Eigen::Index> rows(12);
    for (Eigen::Index i = 0; i < 12; ++i) rows[static_cast<std::size_t>(i)] = i;
    const MultiHeadModel anchor = init_model(5, 6, "t", 3, derive_seed(4, "init"));
    const double lambda = 0.3;
    ModelGradient g = weighted_ce_gradient(model, data, "t", w, rows);
    const ModelGradient p = l2_penalty_gradient(model, anchor, "t", lambda);
    Eigen::VectorXd analytic = flatten(g);
    analytic += flatten(p);
    const double err = gradient_gap(flatten(model, "t"), analytic, [&](const Eigen::VectorXd& x) {
        MultiHeadModel m = model;
        unflatten(m, "t", x);
        return weighted_ce_loss(m, data, "t", w, rows) + l2_penalty(m, anchor, "t", lambda);
    });
    return within("cross_entropy_l2_gradient", err, 1e-5);
}

CheckResult check_linear_gradients() {
    Rng rng(derive_seed(5, "selftest-linear"));
    const LabeledDataset data = random_data(rng, 10, 4, 3);
    const Eigen::VectorXd w = Eigen::VectorXd::LinSpaced(10, 0.2, 1.5);
    Dense clf{standard_normal(rng, 3, 4), standard_normal(rng, 3)};
    const Dense lg = logistic_gradient(clf, data.features, data.labels, w);
    Eigen::VectorXd x(15);
    x << Eigen::Map<const Eigen::VectorXd>(clf.weight.data(), 12), clf.bias;
    Eigen::VectorXd analytic(15);
    analytic << Eigen::Map<const Eigen::VectorXd>(lg.weight.data(), 12), lg.bias;
    double err = gradient_gap(x, analytic, [&](const Eigen::VectorXd& v) {
        Dense c{Eigen::Map<const Eigen::MatrixXd>(v.data(), 3, 4), v.tail(3)};
        return logistic_loss(c, data.features, data.labels, w);
    });
    const Eigen::VectorXd theta = standard_normal(rng, 4);
    const Eigen::VectorXd y = standard_normal(rng, 10);
    err = std::max(err, gradient_gap(theta, linear_regression_gradient(theta, data.features, y, w),
                                     [&](const Eigen::VectorXd& t) {
                                         return linear_regression_loss(t, data.features, y, w);
                                     }));
    return within("logistic_linear_gradient", err, 1e-5);
}

}  // namespace

std::vector<CheckResult> run_selftest(const SelftestHooks& hooks, unsigned threads) {
    std::vector<std::function<CheckResult()>> checks = {
        check_temperature,
        check_weights,
        check_simplex_and_dro,
        check_entropic_optimality,
        check_round_trip,
        [&] { return check_q_eigen(hooks); },
        [&] { return check_spectral_reconstruction(hooks); },
        check_vanilla_trajectory,
        check_flow_trajectory,
        [&] { return check_stalling(hooks); },
        check_averaging,
        [&] { return check_covariance_mc(threads); },
        check_covariance_general,
        check_ce_gradient,
        check_linear_gradients,
    };
    std::vector<CheckResult> out;
    out.reserve(checks.size());
    for (const auto& check : checks) {
        try {
            out.push_back(check());
        } catch (const std::exception& e) {
            out.push_back({"(exception)", false, e.what()});
        }
    }
    return out;
}

}  // namespace flowlab
