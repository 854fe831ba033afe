#pragma once

#include <stdexcept>
#include <string>

namespace sopabn {

// Base class for every error this library raises deliberately.  Callers that
// want a single catch site can catch this; the derived types below exist so
// tests and the CLI can distinguish configuration mistakes from numerical
// failures.
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& what) : std::runtime_error(what) {}
};

// Malformed or inconsistent configuration input (bad JSON, unknown keys,
// dimension mismatches, out-of-range values).
class ConfigError : public Error {
public:
    explicit ConfigError(const std::string& what) : Error(what) {}
};

// A conditioning step hit a residual-covariance submatrix that stayed
// numerically singular even after jitter escalation.
class SingularSubmatrix : public Error {
public:
    explicit SingularSubmatrix(const std::string& what) : Error(what) {}
};

// Two pair-indexed tables (estimate vs. reference) cover different pair sets,
// so an elementwise error metric is undefined.
class PairSetMismatch : public Error {
public:
    explicit PairSetMismatch(const std::string& what) : Error(what) {}
};

// A simulated state vector became NaN or infinite (divergent dynamics or a
// misconfigured model).
class NonFiniteState : public Error {
public:
    explicit NonFiniteState(const std::string& what) : Error(what) {}
};

// A statistic (variance, confidence interval) was requested from fewer
// samples than it is defined for.
class InsufficientSamples : public Error {
public:
    explicit InsufficientSamples(const std::string& what) : Error(what) {}
};

// An exact enumeration was requested beyond its combinatorial size limit.
class SizeLimit : public Error {
public:
    explicit SizeLimit(const std::string& what) : Error(what) {}
};

} // namespace sopabn
