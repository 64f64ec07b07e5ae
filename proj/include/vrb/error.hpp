#pragma once

#include <stdexcept>
#include <string>

namespace vrb {

enum class Errc {
    NonConvergence,
    SingularMatrix,
    SingularInnerMatrix,
    ZeroVector,
    NonFinite,
    NonPositiveConcentration,
    NonPositiveState,
    Overflow,
    DegenerateBox,
    DegenerateRho,
    VertexNotStabilizable,
    DareFailure,
    NotSchur,
    SingularV,
    EmptyGrid,
    Config,
};

inline const char* to_string(Errc code) {
    switch (code) {
        case Errc::NonConvergence: return "NonConvergence";
        case Errc::SingularMatrix: return "SingularMatrix";
        case Errc::SingularInnerMatrix: return "SingularInnerMatrix";
        case Errc::ZeroVector: return "ZeroVector";
        case Errc::NonFinite: return "NonFinite";
        case Errc::NonPositiveConcentration: return "NonPositiveConcentration";
        case Errc::NonPositiveState: return "NonPositiveState";
        case Errc::Overflow: return "Overflow";
        case Errc::DegenerateBox: return "DegenerateBox";
        case Errc::DegenerateRho: return "DegenerateRho";
        case Errc::VertexNotStabilizable: return "VertexNotStabilizable";
        case Errc::DareFailure: return "DareFailure";
        case Errc::NotSchur: return "NotSchur";
        case Errc::SingularV: return "SingularV";
        case Errc::EmptyGrid: return "EmptyGrid";
        case Errc::Config: return "Config";
    }
    return "Unknown";
}

/// Base exception for every failure raised by the library.
class Error : public std::runtime_error {
public:
    Error(Errc code, const std::string& what)
        : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

    [[nodiscard]] Errc code() const noexcept { return code_; }

private:
    Errc code_;
};

class NonConvergenceError : public Error {
public:
    NonConvergenceError(int iterations, double residual)
        : Error(Errc::NonConvergence,
                "residual " + std::to_string(residual) + " after " + std::to_string(iterations) + " iterations"),
          iterations_(iterations), residual_(residual) {}

    [[nodiscard]] int iterations() const noexcept { return iterations_; }
    [[nodiscard]] double residual() const noexcept { return residual_; }

private:
    int iterations_;
    double residual_;
};

/// Failure tied to one polytope vertex (1-based index, as printed in gain tables).
class VertexError : public Error {
public:
    VertexError(Errc code, int vertex, const std::string& what)
        : Error(code, "vertex " + std::to_string(vertex) + ": " + what), vertex_(vertex) {}

    [[nodiscard]] int vertex() const noexcept { return vertex_; }

private:
    int vertex_;
};

class ConfigError : public Error {
public:
    explicit ConfigError(const std::string& what) : Error(Errc::Config, what) {}
};

}  // namespace vrb
