#ifndef FLOWLAB_ERRORS_HPP
#define FLOWLAB_ERRORS_HPP

#include <stdexcept>
#include <string>
#include <string_view>

namespace flowlab {

enum class Errc {
    EmptyInput,
    NonFiniteLoss,
    NegativeLoss,
    InvalidPolicy,
    NonPositiveTemperature,
    AllZeroWeights,
    DimensionMismatch,
    DimensionTooSmall,
    OutOfRange,
    NotPositiveDefinite,
    DivergenceDetected,
    NonFiniteGradient,
    MissingHead,
    ArchitectureMismatch,
    ParseError,
    ConfigError,
};

std::string_view to_string(Errc code) noexcept;

/// Every recoverable failure in the library is reported through this type;
/// `code()` lets callers (and the CLI exit-code mapping) branch without
/// parsing messages.
class Error : public std::runtime_error {
  public:
    Error(Errc code, const std::string& what) : std::runtime_error(what), code_(code) {}
    [[nodiscard]] Errc code() const noexcept { return code_; }

  private:
    Errc code_;
};

[[noreturn]] inline void fail(Errc code, const std::string& what) { throw Error(code, what); }

inline void require(bool condition, Errc code, const std::string& what) {
    if (!condition) fail(code, what);
}

}  // namespace flowlab

#endif  // FLOWLAB_ERRORS_HPP
