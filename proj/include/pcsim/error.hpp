#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace pcsim {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Invalid problem data or configuration (bad gains, inconsistent sizes, bad keys).
class ConfigError : public Error {
public:
    using Error::Error;
};

/// An argument outside the domain of a function (non-positive power, SINR outside a utility's domain).
class DomainError : public Error {
public:
    using Error::Error;
};

/// An iterative method ran out of iterations. Carries the last estimate.
class ConvergenceError : public Error {
public:
    ConvergenceError(const std::string& what, double last_estimate)
        : Error(what), last_estimate_(last_estimate) {}

    double last_estimate() const noexcept { return last_estimate_; }

private:
    double last_estimate_;
};

/// NaN or Inf showed up in an iterate.
class NumericalError : public Error {
public:
    NumericalError(const std::string& what, std::size_t iteration)
        : Error(what), iteration_(iteration) {}

    std::size_t iteration() const noexcept { return iteration_; }

private:
    std::size_t iteration_;
};

/// A component broke a structural contract (utility gradient not positive, non-local read).
class ContractViolation : public Error {
public:
    using Error::Error;
};

} // namespace pcsim
