#include "flowlab/rng.hpp"

#include "flowlab/errors.hpp"

namespace flowlab {

std::string_view to_string(Errc code) noexcept {
    switch (code) {
        case Errc::EmptyInput: return "EmptyInput";
        case Errc::NonFiniteLoss: return "NonFiniteLoss";
        case Errc::NegativeLoss: return "NegativeLoss";
        case Errc::InvalidPolicy: return "InvalidPolicy";
        case Errc::NonPositiveTemperature: return "NonPositiveTemperature";
        case Errc::AllZeroWeights: return "AllZeroWeights";
        case Errc::DimensionMismatch: return "DimensionMismatch";
        case Errc::DimensionTooSmall: return "DimensionTooSmall";
        case Errc::OutOfRange: return "OutOfRange";
        case Errc::NotPositiveDefinite: return "NotPositiveDefinite";
        case Errc::DivergenceDetected: return "DivergenceDetected";
        case Errc::NonFiniteGradient: return "NonFiniteGradient";
        case Errc::MissingHead: return "MissingHead";
        case Errc::ArchitectureMismatch: return "ArchitectureMismatch";
        case Errc::ParseError: return "ParseError";
        case Errc::ConfigError: return "ConfigError";
    }
    return "Unknown";
}

std::uint64_t fnv1a(std::string_view bytes, std::uint64_t basis) noexcept {
    std::uint64_t h = basis;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

namespace {

// splitmix64 finalizer
std::uint64_t mix(std::uint64_t z) noexcept {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

}  // namespace

std::uint64_t derive_seed(std::uint64_t seed, std::string_view purpose) noexcept {
    return mix(fnv1a(purpose) ^ mix(seed));
}

std::uint64_t chunk_seed(std::uint64_t seed, std::uint64_t chunk_index) noexcept {
    return mix(mix(seed) ^ mix(chunk_index + 0x632be59bd9b4e019ULL));
}

Eigen::VectorXd standard_normal(Rng& rng, Eigen::Index n) {
    std::normal_distribution<double> normal(0.0, 1.0);
    Eigen::VectorXd v(n);
    for (Eigen::Index i = 0; i < n; ++i) v[i] = normal(rng);
    return v;
}

Eigen::MatrixXd standard_normal(Rng& rng, Eigen::Index rows, Eigen::Index cols) {
    std::normal_distribution<double> normal(0.0, 1.0);
    Eigen::MatrixXd m(rows, cols);
    for (Eigen::Index r = 0; r < rows; ++r)
        for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = normal(rng);
    return m;
}

}  // namespace flowlab
