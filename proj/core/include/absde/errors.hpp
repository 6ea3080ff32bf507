#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace absde {

// Base class for every contract violation raised by the library.
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& what) : std::runtime_error(what) {}
};

// Invalid argument or broken precondition (bad grid, bad probe, bad config value).
class InvalidArgument : public Error {
public:
    explicit InvalidArgument(const std::string& what) : Error(what) {}
};

// Model callback produced a non-finite value; message carries (t, x, path) context.
class ModelEvalError : public Error {
public:
    explicit ModelEvalError(const std::string& what) : Error(what) {}
};

// Normal equations unusable (rank deficient / ill conditioned).
class RegressionError : public Error {
public:
    explicit RegressionError(const std::string& what) : Error(what) {}
};

// Exponential argument left the floating range; saturating instead would silently
// corrupt bound comparisons, so the caller gets the context and decides.
class OverflowError : public Error {
public:
    explicit OverflowError(const std::string& what) : Error(what) {}
};

// Fixed-point iteration failed to meet tolerance; carries the distance trace.
class ConvergenceError : public Error {
public:
    ConvergenceError(const std::string& what, std::vector<double> trace_)
        : Error(what), trace(std::move(trace_)) {}
    std::vector<double> trace;
};

// Experiment configuration violates the published schema.
class ConfigError : public Error {
public:
    explicit ConfigError(const std::string& what) : Error(what) {}
};

} // namespace absde
