#ifndef FLOWLAB_RNG_HPP
#define FLOWLAB_RNG_HPP

#include <Eigen/Dense>

#include <cstdint>
#include <random>
#include <string_view>

namespace flowlab {

using Rng = std::mt19937_64;

/// FNV-1a over the bytes of a string, seeded with `basis`.
std::uint64_t fnv1a(std::string_view bytes, std::uint64_t basis = 0xcbf29ce484222325ULL) noexcept;

/// Named sub-seed: every random stream in the project is derived from one
/// global seed and a purpose string ("task", "init", "shuffle", "mc", ...).
std::uint64_t derive_seed(std::uint64_t seed, std::string_view purpose) noexcept;

/// Sub-seed for the i-th fixed-size chunk of a chunked Monte-Carlo run.
std::uint64_t chunk_seed(std::uint64_t seed, std::uint64_t chunk_index) noexcept;

/// Fills a vector with i.i.d. standard normals.
Eigen::VectorXd standard_normal(Rng& rng, Eigen::Index n);

/// n×d matrix of i.i.d. standard normals, row by row.
Eigen::MatrixXd standard_normal(Rng& rng, Eigen::Index rows, Eigen::Index cols);

}  // namespace flowlab

#endif  // FLOWLAB_RNG_HPP
