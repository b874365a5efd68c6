#pragma once

// Damped fixed-point power control: alpha/phi evaluation, the damped,
// normalized and clamped steps, and the synchronous/asynchronous drivers.

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "pcsim/problem.hpp"
#include "pcsim/utility.hpp"

namespace pcsim {

enum class SolveMode {
    UnconstrainedNormalized, // zeta = 0, iterate on the unit sphere
    MaxClamped,              // p <= p_max, floor at kPowerFloor
    MinMaxClamped,           // p_min <= p <= p_max
};

enum class SweepKind { Synchronous, Asynchronous };
enum class AsyncOrder { Ascending, RandomPermutation };
enum class Termination { Converged, MaxIterations, Stalled }; // Stalled: theta too small to move p

std::string to_string(SolveMode m);
std::string to_string(Termination t);

struct SolverConfig {
    double theta0 = 0.5;
    std::size_t halving_period = 20; // theta halves every M iterations; 0 disables
    double tol = 1e-9;
    std::size_t max_iter = 10000;
    SolveMode mode = SolveMode::MinMaxClamped;
    SweepKind sweep = SweepKind::Synchronous;
    AsyncOrder order = AsyncOrder::Ascending;
    std::uint64_t order_seed = 0;
    std::optional<Vector> p0;
    bool record_powers = false;
    bool check_concavity = true;

    /// Throws ConfigError when the config does not fit the problem.
    void validate(const NormalizedProblem& prob) const;
};

/// min(0.9 / (2B - 1), 0.5).
double default_theta(double B);

/// p_max where bounded, all-ones otherwise.
Vector default_initial_power(const NormalizedProblem& prob);

/// theta, halved once k exceeds c*M (then c advances). Mirrors the distributed schedule.
class DampingSchedule {
public:
    DampingSchedule(double theta0, std::size_t period) : theta_(theta0), period_(period) {}

    double theta() const noexcept { return theta_; }

    /// Call once after every completed iteration.
    void advance() noexcept {
        if (period_ > 0 && k_ > c_ * period_) {
            theta_ *= 0.5;
            ++c_;
        }
        ++k_;
    }

private:
    double theta_;
    std::size_t period_;
    std::size_t k_ = 1;
    std::size_t c_ = 1;
};

struct FixedPointState {
    Vector p;
    Vector q;
    Vector gamma;
    Vector alpha;
    Vector phi;
    double theta = 1.0;
};

/// alpha = grad U / q. Throws ContractViolation on a non-positive gradient entry.
Vector eval_alpha(const SinrState& state, const UtilityModel& u);

/// phi = alpha / (V^T (gamma .* alpha)). One V^T product.
Vector eval_phi(const SinrState& state, const Vector& alpha, const NormalizedProblem& prob);

/// Full state at p: one V product and one V^T product.
FixedPointState evaluate_state(const NormalizedProblem& prob, const UtilityModel& u, const Vector& p, double theta);

/// theta * p .* phi + (1 - theta) * p.
Vector step_damped(const Vector& p, const Vector& phi, double theta);

/// Damped step applied to p / ||p||_2. Requires zeta = 0.
Vector step_normalized(const Vector& p, const NormalizedProblem& prob, const UtilityModel& u, double theta);

/// Damped step clamped elementwise into [p_min, p_max].
Vector step_clamped(const Vector& p, const Vector& phi, double theta, const Vector& p_min,
                    const std::optional<Vector>& p_max);

/// Elementwise max(p_min, min(p_max, x)).
Vector clamp_box(const Vector& x, const Vector& p_min, const std::optional<Vector>& p_max);

/// max_i |clamp(p_i + theta p_i (phi_i - 1)) - p_i| / (theta p_i), evaluated without
/// forming the damped iterate so that a tiny theta cannot round the step to zero.
double damped_defect(const Vector& p, const Vector& phi, double theta, const PowerBounds& box, SolveMode mode);

/// One coordinate of damped_defect for a clamped mode.
double coordinate_defect(double p, double phi, double theta, double lo, const std::optional<double>& hi);

/// Smallest theta the drivers keep iterating with.
inline constexpr double kMinTheta = 1e-15;

/// The box the given mode iterates in.
PowerBounds effective_bounds(const NormalizedProblem& prob, SolveMode mode);

struct TraceRecord {
    std::size_t iter = 0;
    double theta = 0.0;
    double utility = 0.0;
    double max_phi_dev = 0.0;
    double max_rel_step = 0.0;
    double defect = 0.0; // damped_defect at the start of the iteration; compared against tol
};

inline constexpr std::array<int, 3> kVicinityPercents{5, 2, 1};

struct SolverTrace {
    std::vector<TraceRecord> records; // one per iteration, evaluated at the iterate the step started from
    std::vector<Vector> powers;       // iterates p_0..p_K when record_powers is set
    Termination termination = Termination::MaxIterations;
    std::size_t iterations = 0;
    bool domain_warning = false;
    std::array<std::optional<std::size_t>, kVicinityPercents.size()> vicinity{}; // filled by mark_vicinity
};

struct SolveResult {
    Vector p;
    double utility = 0.0;
    bool converged = false;
    SolverTrace trace;
};

/// Synchronous damped fixed-point iteration in the configured mode.
/// Non-convergence is reported in the result; NaN/Inf throws NumericalError.
SolveResult solve(const NormalizedProblem& prob, const UtilityModel& u, const SolverConfig& cfg);

/// Gauss-Seidel sweeps: each coordinate update sees the freshest powers of all others.
SolveResult sweep_async(const NormalizedProblem& prob, const UtilityModel& u, const SolverConfig& cfg);

/// Dispatches on cfg.sweep.
SolveResult run_solver(const NormalizedProblem& prob, const UtilityModel& u, const SolverConfig& cfg);

/// First iteration from which the utility stays within pct% of the reference.
std::optional<std::size_t> iterations_to_within(const SolverTrace& trace, double final_utility, double reference,
                                                double pct);

/// Fills trace.vicinity for 5%, 2% and 1%.
void mark_vicinity(SolverTrace& trace, double final_utility, double reference);

/// Network utility at p.
double utility_at(const NormalizedProblem& prob, const UtilityModel& u, const Vector& p);

} // namespace pcsim
