#pragma once

#include <cstddef>
#include <functional>

#include "pcsim/problem.hpp"

namespace pcsim {

using LinearOperator = std::function<Vector(const Vector&)>;

struct DominantEigenpair {
    double rho = 0.0;
    Vector v;                 // positive, unit 2-norm
    double lower_bound = 0.0; // Collatz-Wielandt bracket around rho
    double upper_bound = 0.0;
    std::size_t iterations = 0;
};

/// Power iteration for the Perron root of a strictly positive operator.
/// Starts from the all-ones vector and stops once the Rayleigh quotient
/// changes by at most tol (relative). Throws ConvergenceError otherwise.
DominantEigenpair spectral_radius(const LinearOperator& op, std::size_t n, double tol = 1e-12,
                                  std::size_t max_iter = 10000);

DominantEigenpair spectral_radius(const Matrix& m, double tol = 1e-12, std::size_t max_iter = 10000);

/// S = D(gamma) V as an operator, x -> gamma .* (V x). Never materialized.
LinearOperator sinr_operator(const NormalizedProblem& prob, const Vector& gamma);

/// S^T = V^T D(gamma) as an operator.
LinearOperator sinr_operator_transpose(const NormalizedProblem& prob, const Vector& gamma);

} // namespace pcsim
