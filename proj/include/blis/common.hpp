#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>

namespace blis {

// Simulation time is kept in integer microseconds so event ordering never
// depends on floating-point rounding.
using SimTime = std::int64_t;

inline constexpr SimTime kMicrosPerSecond = 1'000'000;

constexpr double to_seconds(SimTime t) { return static_cast<double>(t) / 1e6; }

inline SimTime from_seconds(double s) { return static_cast<SimTime>(std::llround(s * 1e6)); }

constexpr double mw_to_w(double mw) { return mw * 1e-3; }
constexpr double uj_to_j(double uj) { return uj * 1e-6; }
constexpr double j_to_uj(double j) { return j * 1e6; }

enum class ErrorCode {
    InvalidArgument,
    NonFiniteInput,
    NegativeRadicand,
    OutOfRange,
    Malformed,
    Oversize,
    TooManyApps,
    IllegalTransition,
    InsufficientEnergy,
    InsufficientData,
    Divergence,
    WrongWindow,
    ConfigError,
    MalformedLog,
    IoError,
};

std::string_view to_string(ErrorCode code);

class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& what)
        : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

    ErrorCode code() const noexcept { return code_; }

private:
    ErrorCode code_;
};

inline void require_finite(double v, const char* what) {
    if (!std::isfinite(v)) throw Error(ErrorCode::NonFiniteInput, what);
}

}  // namespace blis
