#include "pcsim/solver.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <sstream>

#include "pcsim/error.hpp"

namespace pcsim {

std::string to_string(SolveMode m) {
    switch (m) {
    case SolveMode::UnconstrainedNormalized: return "unconstrained-normalized";
    case SolveMode::MaxClamped: return "max-clamped";
    case SolveMode::MinMaxClamped: return "minmax-clamped";
    }
    return "unknown";
}

std::string to_string(Termination t) {
    switch (t) {
    case Termination::Converged: return "converged";
    case Termination::MaxIterations: return "max_iterations";
    case Termination::Stalled: return "stalled";
    }
    return "unknown";
}

void SolverConfig::validate(const NormalizedProblem& prob) const {
    if (!(theta0 > 0.0 && theta0 <= 1.0)) throw ConfigError("solver: theta0 must lie in (0, 1]");
    if (!(tol > 0.0)) throw ConfigError("solver: tol must be positive");
    if (max_iter < 1) throw ConfigError("solver: max_iter must be at least 1");
    if (mode == SolveMode::UnconstrainedNormalized && !prob.interference_limited())
        throw ConfigError("solver: unconstrained-normalized mode requires zero noise");
    if (mode != SolveMode::UnconstrainedNormalized && !prob.bounds().bounded())
        throw ConfigError("solver: clamped modes require a finite p_max");
    if (p0) {
        if (std::size_t(p0->size()) != prob.size()) throw ConfigError("solver: p0 length mismatch");
        if (!(p0->array() > 0.0).all()) throw ConfigError("solver: p0 must be strictly positive");
    }
}

double default_theta(double B) { return std::min(0.9 * theta_max(B), 0.5); }

Vector default_initial_power(const NormalizedProblem& prob) {
    if (prob.bounds().p_max) return *prob.bounds().p_max;
    return Vector::Ones(Eigen::Index(prob.size()));
}

Vector eval_alpha(const SinrState& state, const UtilityModel& u) {
    const Vector grad = u.gradient(state.gamma);
    for (Eigen::Index i = 0; i < grad.size(); ++i) {
        if (!(grad[i] > 0.0)) {
            std::ostringstream os;
            os << u.name() << ": gradient entry " << i << " is not positive (" << grad[i] << ")";
            throw ContractViolation(os.str());
        }
    }
    return grad.cwiseQuotient(state.q);
}

Vector eval_phi(const SinrState& state, const Vector& alpha, const NormalizedProblem& prob) {
    const Vector denom = prob.V().apply_transpose(state.gamma.cwiseProduct(alpha));
    return alpha.cwiseQuotient(denom);
}

FixedPointState evaluate_state(const NormalizedProblem& prob, const UtilityModel& u, const Vector& p, double theta) {
    SinrState s = interference_and_sinr(prob, p);
    FixedPointState fp;
    fp.alpha = eval_alpha(s, u);
    fp.phi = eval_phi(s, fp.alpha, prob);
    fp.p = std::move(s.p);
    fp.q = std::move(s.q);
    fp.gamma = std::move(s.gamma);
    fp.theta = theta;
    return fp;
}

Vector step_damped(const Vector& p, const Vector& phi, double theta) {
    return (p.array() * (theta * phi.array() + (1.0 - theta))).matrix();
}

Vector step_normalized(const Vector& p, const NormalizedProblem& prob, const UtilityModel& u, double theta) {
    if (!prob.interference_limited()) throw DomainError("step_normalized: requires zero noise");
    const double norm = p.norm();
    if (!(norm > 0.0)) throw DomainError("step_normalized: zero power vector");
    const Vector unit = p / norm;
    const FixedPointState s = evaluate_state(prob, u, unit, theta);
    return step_damped(unit, s.phi, theta);
}

Vector clamp_box(const Vector& x, const Vector& p_min, const std::optional<Vector>& p_max) {
    Vector out = x.cwiseMax(p_min);
    if (p_max) out = out.cwiseMin(*p_max);
    return out;
}

Vector step_clamped(const Vector& p, const Vector& phi, double theta, const Vector& p_min,
                    const std::optional<Vector>& p_max) {
    return clamp_box(step_damped(p, phi, theta), p_min, p_max);
}

PowerBounds effective_bounds(const NormalizedProblem& prob, SolveMode mode) {
    const auto n = prob.size();
    switch (mode) {
    case SolveMode::UnconstrainedNormalized: return PowerBounds::unbounded(n);
    case SolveMode::MaxClamped: return PowerBounds::max_only(*prob.bounds().p_max);
    case SolveMode::MinMaxClamped: {
        PowerBounds b = prob.bounds();
        b.p_min = b.p_min.cwiseMax(kPowerFloor);
        return b;
    }
    }
    return prob.bounds();
}

double coordinate_defect(double p, double phi, double theta, double lo, const std::optional<double>& hi) {
    const double move = theta * p * (phi - 1.0);
    double delta = move;
    if (hi && p + move > *hi) delta = *hi - p;
    else if (p + move < lo) delta = lo - p;
    return std::abs(delta) / (theta * p);
}

double damped_defect(const Vector& p, const Vector& phi, double theta, const PowerBounds& box, SolveMode mode) {
    double worst = 0.0;
    for (Eigen::Index i = 0; i < p.size(); ++i) {
        if (mode == SolveMode::UnconstrainedNormalized) {
            worst = std::max(worst, std::abs(phi[i] - 1.0));
            continue;
        }
        std::optional<double> hi;
        if (box.p_max) hi = (*box.p_max)[i];
        worst = std::max(worst, coordinate_defect(p[i], phi[i], theta, box.p_min[i], hi));
    }
    return worst;
}

double utility_at(const NormalizedProblem& prob, const UtilityModel& u, const Vector& p) {
    return u.value(interference_and_sinr(prob, p).gamma);
}

namespace {

void check_finite(const Vector& p, std::size_t iter) {
    if (!p.allFinite()) {
        std::ostringstream os;
        os << "solver: non-finite power at iteration " << iter;
        throw NumericalError(os.str(), iter);
    }
}

double max_rel_change(const Vector& next, const Vector& prev) {
    return ((next - prev).array().abs() / prev.array()).maxCoeff();
}

Vector initial_power(const NormalizedProblem& prob, const SolverConfig& cfg, const PowerBounds& box) {
    Vector p = cfg.p0 ? *cfg.p0 : default_initial_power(prob);
    if (cfg.mode == SolveMode::UnconstrainedNormalized) return p / p.norm();
    return clamp_box(p, box.p_min, box.p_max);
}

void check_concavity_at_start(const NormalizedProblem& prob, const UtilityModel& u, const Vector& p0) {
    const auto gamma = interference_and_sinr(prob, p0).gamma;
    const auto lc = check_log_concavity(u, gamma);
    if (!lc.ok) {
        std::ostringstream os;
        os << "solver: utility '" << u.name() << "' is not log-concave at the initial point (max eigenvalue "
           << lc.worst_eig << ")";
        throw ConfigError(os.str());
    }
}

SolveResult finish(const NormalizedProblem& prob, const UtilityModel& u, Vector p, SolverTrace trace) {
    SolveResult r;
    const auto s = interference_and_sinr(prob, p);
    r.utility = u.value(s.gamma);
    if (!u.in_domain(s.gamma)) trace.domain_warning = true;
    r.p = std::move(p);
    r.converged = trace.termination == Termination::Converged;
    r.trace = std::move(trace);
    return r;
}

} // namespace

SolveResult solve(const NormalizedProblem& prob, const UtilityModel& u, const SolverConfig& cfg) {
    cfg.validate(prob);
    const PowerBounds box = effective_bounds(prob, cfg.mode);
    Vector p = initial_power(prob, cfg, box);
    if (cfg.check_concavity) check_concavity_at_start(prob, u, p);

    SolverTrace trace;
    DampingSchedule schedule(cfg.theta0, cfg.halving_period);
    if (cfg.record_powers) trace.powers.push_back(p);

    for (std::size_t k = 0; k < cfg.max_iter; ++k) {
        const double theta = schedule.theta();
        const FixedPointState s = evaluate_state(prob, u, p, theta);
        if (!u.in_domain(s.gamma)) trace.domain_warning = true;

        Vector next = cfg.mode == SolveMode::UnconstrainedNormalized ? step_damped(p, s.phi, theta)
                                                                     : step_clamped(p, s.phi, theta, box.p_min, box.p_max);
        check_finite(next, k + 1);

        TraceRecord rec;
        rec.iter = k;
        rec.theta = theta;
        rec.utility = u.value(s.gamma);
        rec.max_phi_dev = (s.phi.array() - 1.0).abs().maxCoeff();
        rec.max_rel_step = max_rel_change(next, p);
        rec.defect = damped_defect(p, s.phi, theta, box, cfg.mode);
        trace.records.push_back(rec);

        if (cfg.mode == SolveMode::UnconstrainedNormalized) next /= next.norm();
        p = std::move(next);
        if (cfg.record_powers) trace.powers.push_back(p);
        trace.iterations = k + 1;

        // the defect is the step divided by theta, so halving cannot fake convergence
        if (rec.defect <= cfg.tol) {
            trace.termination = Termination::Converged;
            break;
        }
        schedule.advance();
        if (schedule.theta() < kMinTheta) {
            trace.termination = Termination::Stalled;
            break;
        }
    }
    return finish(prob, u, std::move(p), std::move(trace));
}

SolveResult sweep_async(const NormalizedProblem& prob, const UtilityModel& u, const SolverConfig& cfg) {
    cfg.validate(prob);
    const PowerBounds box = effective_bounds(prob, cfg.mode);
    Vector p = initial_power(prob, cfg, box);
    if (cfg.check_concavity) check_concavity_at_start(prob, u, p);

    const auto n = Eigen::Index(prob.size());
    const Matrix& v = prob.V().dense();
    std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), Eigen::Index{0});
    std::mt19937_64 rng(cfg.order_seed);

    SolverTrace trace;
    DampingSchedule schedule(cfg.theta0, cfg.halving_period);
    if (cfg.record_powers) trace.powers.push_back(p);

    for (std::size_t k = 0; k < cfg.max_iter; ++k) {
        const double theta = schedule.theta();
        if (cfg.order == AsyncOrder::RandomPermutation) std::shuffle(order.begin(), order.end(), rng);

        Vector q = prob.V().apply(p) + prob.zeta();
        Vector gamma = p.cwiseQuotient(q);
        TraceRecord rec;
        rec.iter = k;
        rec.theta = theta;
        rec.utility = u.value(gamma);
        if (!u.in_domain(gamma)) trace.domain_warning = true;

        const Vector start = p;
        double phi_dev = 0.0;
        double defect = 0.0;
        for (const Eigen::Index i : order) {
            gamma = p.cwiseQuotient(q);
            const Vector grad = u.gradient(gamma);
            if (!(grad.array() > 0.0).all()) throw ContractViolation(u.name() + ": gradient must be positive");
            const Vector alpha = grad.cwiseQuotient(q);
            const double denom = v.col(i).dot(gamma.cwiseProduct(alpha));
            const double phi = alpha[i] / denom;
            phi_dev = std::max(phi_dev, std::abs(phi - 1.0));
            if (cfg.mode == SolveMode::UnconstrainedNormalized) {
                defect = std::max(defect, std::abs(phi - 1.0));
            } else {
                std::optional<double> hi;
                if (box.p_max) hi = (*box.p_max)[i];
                defect = std::max(defect, coordinate_defect(p[i], phi, theta, box.p_min[i], hi));
            }

            double next = p[i] * (theta * phi + (1.0 - theta));
            next = std::max(next, box.p_min[i]);
            if (box.p_max) next = std::min(next, (*box.p_max)[i]);
            const double delta = next - p[i];
            if (delta != 0.0) {
                q += v.col(i) * delta;
                p[i] = next;
            }
        }
        check_finite(p, k + 1);
        rec.max_phi_dev = phi_dev;
        rec.max_rel_step = max_rel_change(p, start);
        rec.defect = defect;
        trace.records.push_back(rec);

        if (cfg.mode == SolveMode::UnconstrainedNormalized) p /= p.norm();
        if (cfg.record_powers) trace.powers.push_back(p);
        trace.iterations = k + 1;

        if (rec.defect <= cfg.tol) {
            trace.termination = Termination::Converged;
            break;
        }
        schedule.advance();
        if (schedule.theta() < kMinTheta) {
            trace.termination = Termination::Stalled;
            break;
        }
    }
    return finish(prob, u, std::move(p), std::move(trace));
}

SolveResult run_solver(const NormalizedProblem& prob, const UtilityModel& u, const SolverConfig& cfg) {
    return cfg.sweep == SweepKind::Asynchronous ? sweep_async(prob, u, cfg) : solve(prob, u, cfg);
}

std::optional<std::size_t> iterations_to_within(const SolverTrace& trace, double final_utility, double reference,
                                                double pct) {
    const double band = std::abs(reference) * pct / 100.0;
    auto inside = [&](double u) { return std::abs(u - reference) <= band; };
    if (!inside(final_utility)) return std::nullopt;
    std::size_t first = trace.records.size();
    for (std::size_t k = trace.records.size(); k-- > 0;) {
        if (!inside(trace.records[k].utility)) break;
        first = k;
    }
    return first;
}

void mark_vicinity(SolverTrace& trace, double final_utility, double reference) {
    for (std::size_t i = 0; i < kVicinityPercents.size(); ++i)
        trace.vicinity[i] = iterations_to_within(trace, final_utility, reference, double(kVicinityPercents[i]));
}

} // namespace pcsim
