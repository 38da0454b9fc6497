#include "flowlab/linear_theory.hpp"

#include <algorithm>
#include <functional>
#include <thread>

namespace flowlab::theory {

namespace {

using ChunkFn = std::function<Mat<double>(Eigen::Index /*count*/, Rng&)>;

// Runs `chunk` over ceil(n / kMcChunk) chunks, partial sums reduced in
// chunk order regardless of the number of worker threads.
Mat<double> chunked_sum(Eigen::Index n, Eigen::Index d, std::uint64_t seed, unsigned threads, const ChunkFn& chunk) {
    const Eigen::Index n_chunks = (n + kMcChunk - 1) / kMcChunk;
    std::vector<Mat<double>> partial(static_cast<std::size_t>(n_chunks));
    auto work = [&](unsigned worker, unsigned stride) {
        for (Eigen::Index c = worker; c < n_chunks; c += stride) {
            const Eigen::Index count = std::min(kMcChunk, n - c * kMcChunk);
            Rng rng(chunk_seed(seed, static_cast<std::uint64_t>(c)));
            partial[static_cast<std::size_t>(c)] = chunk(count, rng);
        }
    };
    threads = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(n_chunks)));
    if (threads == 1) {
        work(0, 1);
    } else {
        std::vector<std::thread> pool;
        for (unsigned t = 0; t < threads; ++t) pool.emplace_back(work, t, threads);
        for (auto& t : pool) t.join();
    }
    Mat<double> total = Mat<double>::Zero(d, d);
    for (const auto& p : partial) total += p;
    return total;
}

Mat<double> weighted_outer_sum(const Mat<double>& x, const Vec<double>& e, double tau) {
    const Eigen::ArrayXd proj = (x * e).array();
    const Eigen::ArrayXd w = (-(proj * proj) / tau).unaryExpr([](double v) { return std::exp(v); });
    return x.transpose() * (x.array().colwise() * w).matrix();
}

void check_mc_inputs(Eigen::Index n_samples, double tau) {
    require(n_samples >= 1, Errc::OutOfRange, "Monte-Carlo sample count must be >= 1");
    require(tau > 0, Errc::NonPositiveTemperature, "temperature must be > 0");
}

// Rows of coordinates in the orthonormal basis (e_bar, e_perp, b3, ...).
Mat<double> basis_coordinates(double rho, Eigen::Index count, Eigen::Index d, Rng& rng) {
    Mat<double> z = standard_normal(rng, count, d);
    const double c = std::sqrt(1.0 - rho * rho);
    z.col(1) = rho * z.col(0) + c * z.col(1);
    return z;
}

}  // namespace

Mat<double> orthonormal_completion(const Vec<double>& e_bar, const Vec<double>& e_perp) {
    const Eigen::Index d = e_bar.size();
    Mat<double> a(d, d + 2);
    a.col(0) = e_bar;
    a.col(1) = e_perp;
    a.rightCols(d) = Mat<double>::Identity(d, d);
    Eigen::HouseholderQR<Mat<double>> qr(a);
    Mat<double> basis = qr.householderQ() * Mat<double>::Identity(d, d);
    basis.col(0) = e_bar;
    basis.col(1) = e_perp;
    return basis;
}

Mat<double> basis_sampler(const LinearTaskSpec<double>& spec, Eigen::Index n, std::uint64_t seed) {
    require(n >= 1, Errc::OutOfRange, "sample count must be >= 1");
    const Mat<double> basis = orthonormal_completion(spec.e_bar, spec.e_perp);
    Mat<double> out(n, spec.d);
    const Eigen::Index n_chunks = (n + kMcChunk - 1) / kMcChunk;
    for (Eigen::Index c = 0; c < n_chunks; ++c) {
        const Eigen::Index count = std::min(kMcChunk, n - c * kMcChunk);
        Rng rng(chunk_seed(seed, static_cast<std::uint64_t>(c)));
        out.middleRows(c * kMcChunk, count) = basis_coordinates(spec.rho, count, spec.d, rng) * basis.transpose();
    }
    return out;
}

Mat<double> weighted_covariance_mc(const Mat<double>& sigma_tilde, const Vec<double>& e, double tau,
                                   Eigen::Index n_samples, std::uint64_t seed, unsigned threads) {
    check_mc_inputs(n_samples, tau);
    require(sigma_tilde.rows() == sigma_tilde.cols() && sigma_tilde.rows() == e.size(), Errc::DimensionMismatch,
            "covariance and gap vector differ in dimension");
    Eigen::LLT<Mat<double>> llt(sigma_tilde);
    require(llt.info() == Eigen::Success, Errc::NotPositiveDefinite, "covariance is not positive definite");
    const Mat<double> lower_t = llt.matrixL().transpose();
    const Eigen::Index d = e.size();
    const Mat<double> sum = chunked_sum(n_samples, d, seed, threads, [&](Eigen::Index count, Rng& rng) {
        const Mat<double> x = standard_normal(rng, count, d) * lower_t;
        return weighted_outer_sum(x, e, tau);
    });
    return sum / static_cast<double>(n_samples);
}

Mat<double> weighted_covariance_mc(const LinearTaskSpec<double>& spec, double tau, Eigen::Index n_samples,
                                   std::uint64_t seed, unsigned threads) {
    check_mc_inputs(n_samples, tau);
    const Mat<double> basis_t = orthonormal_completion(spec.e_bar, spec.e_perp).transpose();
    const Mat<double> sum = chunked_sum(n_samples, spec.d, seed, threads, [&](Eigen::Index count, Rng& rng) {
        const Mat<double> x = basis_coordinates(spec.rho, count, spec.d, rng) * basis_t;
        return weighted_outer_sum(x, spec.e, tau);
    });
    return sum / static_cast<double>(n_samples);
}

Mat<double> second_moment(const Mat<double>& samples) {
    require(samples.rows() >= 1, Errc::EmptyInput, "no samples");
    return samples.transpose() * samples / static_cast<double>(samples.rows());
}

}  // namespace flowlab::theory
