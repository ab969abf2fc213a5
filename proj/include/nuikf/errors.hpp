#pragma once

#include <stdexcept>
#include <string>

namespace nuikf {

/// Base class for all errors thrown by this library.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Operand shapes are incompatible with the requested operation.
struct DimensionMismatch : Error {
    using Error::Error;
};

/// A square matrix was required but a rectangular one was supplied.
struct NonSquare : Error {
    using Error::Error;
};

/// A matrix required to be symmetric positive definite is not, even after
/// the diagonal jitter ladder has been exhausted.
struct NotPositiveDefinite : Error {
    using Error::Error;
};

/// A user-supplied callable produced NaN or infinity.
struct NonFiniteEvaluation : Error {
    using Error::Error;
};

/// Sigma spread parameter outside its admissible range (a >= 0).
struct InvalidSpreadParameter : Error {
    using Error::Error;
};

/// Information matrix became singular inside the lower-bound recursion.
struct SingularInformation : Error {
    using Error::Error;
};

/// A denominator in the stability-rate formula is exactly zero.
struct DivisionByZero : Error {
    using Error::Error;
};

/// A metric normalizer vanished: the reference signal carries no variance
/// past the transient cutoff.
struct DegenerateSignal : Error {
    using Error::Error;
};

/// No candidate on the UI-covariance tuning grid reaches the required
/// bound coverage.
struct NoFeasibleE : Error {
    using Error::Error;
};

/// A filter step failed; `step` is the zero-based measurement index.
struct FilterStepError : Error {
    long step;
    FilterStepError(long at, const std::string& reason)
        : Error("filter step " + std::to_string(at) + ": " + reason), step(at) {}
};

/// Configuration file violates the schema. `path` locates the offending key.
struct ConfigInvalid : Error {
    std::string path;
    ConfigInvalid(std::string where, const std::string& reason)
        : Error(where + ": " + reason), path(std::move(where)) {}
};

/// Artifact file could not be read or written.
struct IoError : Error {
    using Error::Error;
};

/// A required input artifact is absent; run the producing stage first.
struct MissingArtifact : Error {
    using Error::Error;
};

}  // namespace nuikf
