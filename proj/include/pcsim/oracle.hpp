#pragma once

// Independent certification of fixed-point solutions: a log-domain projected
// gradient solver, the clamped KKT defect, finite-difference Jacobian checks
// and convexity trials for the interference constraint.

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "pcsim/problem.hpp"
#include "pcsim/solver.hpp"
#include "pcsim/utility.hpp"

namespace pcsim {

/// One named pass/fail measurement.
struct CheckOutcome {
    std::string name;
    bool pass = false;
    double value = 0.0;
    double threshold = 0.0;
};

// Log-domain reformulation --------------------------------------------------------

/// x = log gamma, y = log p, z = log q at a feasible power vector (both constraints tight).
struct LogDomainPoint {
    Vector x;
    Vector y;
    Vector z;
};

LogDomainPoint to_log_domain(const NormalizedProblem& prob, const Vector& p);

/// g(y) = U(exp(y - log(V e^y + zeta))).
double log_domain_objective(const NormalizedProblem& prob, const UtilityModel& u, const Vector& y);

/// Chain-rule gradient of g: p .* (alpha - S^T alpha).
Vector log_domain_gradient(const NormalizedProblem& prob, const UtilityModel& u, const Vector& y);

struct OracleOptions {
    double tol = 1e-9;             // projected-gradient infinity norm
    std::size_t max_iter = 100000;
    std::size_t max_halvings = 60;
    double armijo = 1e-4;
    std::size_t memory = 10;       // nonmonotone window; 1 gives the monotone Armijo rule
    std::optional<Vector> p0;
    SolveMode mode = SolveMode::MinMaxClamped; // selects the box (or the unit-norm gauge)
};

struct OracleDuals {
    Vector lambda;     // D(e^x) grad U
    Vector mu;         // recovered from the y-stationarity system
    Vector beta;       // bound multipliers (zero off the active set)
};

struct OracleResult {
    Vector p;
    double utility = 0.0;
    OracleDuals duals;
    std::size_t iterations = 0;
    double projected_gradient = 0.0;
    bool converged = false;
};

/// Projected gradient ascent on y with (nonmonotone) Armijo backtracking and Barzilai-Borwein trial steps.
/// Throws Error when backtracking fails after max_halvings.
OracleResult oracle_solve(const NormalizedProblem& prob, const UtilityModel& u, const OracleOptions& opts = {});

/// Exhaustive log-spaced grid over the power box (N <= 5).
struct GridResult {
    Vector p;
    double utility = 0.0;
};

GridResult grid_search(const NormalizedProblem& prob, const UtilityModel& u, std::size_t points_per_axis = 11);

// KKT ------------------------------------------------------------------------------

struct KktResidual {
    Vector residual;            // p - clamp(p .* phi(p))
    double norm_inf = 0.0;
    double relative = 0.0;      // norm_inf / ||p||_inf
    std::vector<bool> at_lower;
    std::vector<bool> at_upper;
};

KktResidual kkt_residual(const Vector& p, const NormalizedProblem& prob, const UtilityModel& u,
                         SolveMode mode = SolveMode::MinMaxClamped);

// Jacobian structure -------------------------------------------------------------------

struct JacobianReport {
    Matrix jacobian_theta;      // finite-difference Jacobian of the damped map
    Matrix symmetrized;         // D(r)^1/2 D(alpha) phi' D(r)^1/2
    double asymmetry = 0.0;     // ||A - A^T||_inf / ||A||_inf
    double sym_max_eig = 0.0;
    double sym_min_eig = 0.0;
    double scale_line_error = 0.0;  // ||J p - p|| / ||p||
    double closed_form_error = 0.0; // FD vs closed-form D(alpha) phi'
    double second_term_max_eig = 0.0;
    double second_term_radius = 0.0;
    double second_term_alignment = 0.0; // |cos| between its top eigenvector and sqrt(alpha p)
    double s_tilde_norm = 0.0;
    double B = 1.0;
    std::vector<CheckOutcome> checks;
    bool passed = false;
};

/// Finite-difference eigenstructure checks at a converged zero-noise optimum.
JacobianReport jacobian_check(const Vector& p_star, const NormalizedProblem& prob, const UtilityModel& u,
                              double theta, double B);

// Interference-constraint convexity --------------------------------------------------

/// ln(a^T e^x + a0), evaluated with a max shift.
double log_affine_exp(const Vector& a, double a0, const Vector& x);

/// Closed-form Hessian of log_affine_exp.
Matrix log_affine_exp_hessian(const Vector& a, double a0, const Vector& x);

/// Random convexity trials plus Hessian PSD checks at 1e-12 slack.
bool convexity_spotcheck(const Vector& a, double a0, std::size_t trials, std::uint64_t seed = 7);

} // namespace pcsim
