#include <doctest.h>

#include <random>

#include "oracles.hpp"
#include "pcsim/error.hpp"
#include "pcsim/oracle.hpp"
#include "pcsim/solver.hpp"

using namespace pcsim;

namespace {

SolverConfig tight(SolveMode mode, double theta = 0.5) {
    SolverConfig c;
    c.mode = mode;
    c.theta0 = theta;
    c.halving_period = 0;
    c.tol = 1e-11;
    c.max_iter = 200000;
    return c;
}

} // namespace

TEST_CASE("phi against its definition on raw gains") {
    std::mt19937_64 rng(1);
    auto inst = oracle::random_instance(rng, 5, true, oracle::Box::MaxOnly);
    const NormalizedProblem prob = normalize(inst.gains, inst.bounds);
    LogRateUtility u(5, 5.0);
    const Vector p = inst.bounds.p_max->array() * 0.4;

    // phi_i = (U_i / q_i) / sum_j V_ji gamma_j U_j / q_j, all from raw quantities
    const Vector g = oracle::raw_sinr(inst.gains, p);
    const Vector grad = u.gradient(g);
    Vector q(5), expected(5);
    for (int i = 0; i < 5; ++i) q[i] = p[i] / g[i];
    for (int i = 0; i < 5; ++i) {
        double denom = 0.0;
        for (int j = 0; j < 5; ++j) denom += inst.gains.H(j, i) / inst.gains.h[j] * g[j] * grad[j] / q[j];
        expected[i] = grad[i] / q[i] / denom;
    }
    reset_op_counts();
    const FixedPointState s = evaluate_state(prob, u, p, 0.5);
    CHECK(oracle::rel_err(s.phi, expected) < 1e-12);
    CHECK(op_counts().forward == 1);
    CHECK(op_counts().transpose == 1);
}

TEST_CASE("damped step edge cases") {
    const Vector p = (Vector(3) << 1.0, 2.0, 3.0).finished();
    const Vector phi = (Vector(3) << 1.5, 0.5, 1.0).finished();
    CHECK(step_damped(p, phi, 0.0) == p);
    CHECK(step_damped(p, phi, 1.0).isApprox(p.cwiseProduct(phi)));
    CHECK(step_damped(p, Vector::Ones(3), 0.3).isApprox(p));
    const Vector lo = Vector::Constant(3, 0.9);
    const Vector hi = Vector::Constant(3, 2.5);
    const Vector c = step_clamped(p, phi, 1.0, lo, hi);
    CHECK(c[0] == doctest::Approx(1.5));
    CHECK(c[1] == doctest::Approx(1.0));
    CHECK(c[2] == doctest::Approx(2.5));
}

TEST_CASE("phi is invariant to power scale under zero noise") {
    std::mt19937_64 rng(2);
    auto inst = oracle::random_instance(rng, 6, false, oracle::Box::None);
    const NormalizedProblem prob = normalize(inst.gains);
    SumLogSinrUtility u(6);
    const Vector p = Vector::LinSpaced(6, 0.2, 1.0);
    const Vector a = evaluate_state(prob, u, p, 0.5).phi;
    const Vector b = evaluate_state(prob, u, 13.0 * p, 0.5).phi;
    CHECK(oracle::rel_err(b, a) < 1e-12);
    const Vector n1 = step_normalized(p, prob, u, 0.5);
    const Vector n2 = step_normalized(13.0 * p, prob, u, 0.5);
    CHECK(oracle::rel_err(n1, n2) < 1e-12);
}

TEST_CASE("single link goes to its power cap") {
    LinkGains g;
    g.h = Vector::Ones(1);
    g.H = Matrix::Constant(1, 1, 1e-4);
    g.eta = Vector::Constant(1, 1e-3);
    const NormalizedProblem prob = normalize(g, PowerBounds::max_only(Vector::Constant(1, 0.2)));
    const SolveResult r = solve(prob, LogRateUtility(1, 5.0), tight(SolveMode::MaxClamped));
    CHECK(r.converged);
    CHECK(r.p[0] == 0.2);
}

TEST_CASE("two symmetric links settle at a symmetric point") {
    LinkGains g;
    g.h = Vector::Ones(2);
    g.H.resize(2, 2);
    g.H << 1e-4, 0.3, 0.3, 1e-4;
    g.eta = Vector::Constant(2, 0.01);
    const NormalizedProblem prob = normalize(g, PowerBounds::max_only(Vector::Ones(2)));
    SolverConfig c = tight(SolveMode::MaxClamped);
    c.p0 = (Vector(2) << 0.9, 0.05).finished();
    const SolveResult r = solve(prob, LogRateUtility(2, 5.0), c);
    CHECK(r.converged);
    CHECK(r.p[0] == doctest::Approx(r.p[1]).epsilon(1e-8));
}

TEST_CASE("synchronous solve is deterministic and matches the oracle") {
    std::mt19937_64 rng(3);
    for (int n : {2, 4, 9}) {
        auto inst = oracle::random_instance(rng, n, true, oracle::Box::MinMax);
        const NormalizedProblem prob = normalize(inst.gains, inst.bounds);
        LogRateUtility u(std::size_t(n), 5.0);
        const SolveResult a = solve(prob, u, tight(SolveMode::MinMaxClamped));
        const SolveResult b = solve(prob, u, tight(SolveMode::MinMaxClamped));
        CHECK(a.converged);
        CHECK(a.p == b.p);
        CHECK(a.trace.iterations == b.trace.iterations);
        const OracleResult o = oracle_solve(prob, u);
        CHECK(std::abs(a.utility - o.utility) / std::abs(o.utility) <= 1e-8);
        CHECK(kkt_residual(a.p, prob, u).relative <= 1e-8);
    }
}

TEST_CASE("asynchronous sweeps reach the same fixed point") {
    std::mt19937_64 rng(4);
    auto inst = oracle::random_instance(rng, 7, true, oracle::Box::MinMax);
    const NormalizedProblem prob = normalize(inst.gains, inst.bounds);
    LogRateUtility u(7, 5.0);
    const SolveResult s = solve(prob, u, tight(SolveMode::MinMaxClamped));
    for (auto order : {AsyncOrder::Ascending, AsyncOrder::RandomPermutation}) {
        SolverConfig c = tight(SolveMode::MinMaxClamped);
        c.sweep = SweepKind::Asynchronous;
        c.order = order;
        c.order_seed = 99;
        const SolveResult a = run_solver(prob, u, c);
        CHECK(a.converged);
        CHECK(std::abs(a.utility - s.utility) / std::abs(s.utility) <= 1e-8);
    }
}

TEST_CASE("normalized mode keeps unit norm and converges under zero noise") {
    std::mt19937_64 rng(5);
    auto inst = oracle::random_instance(rng, 6, false, oracle::Box::None);
    const NormalizedProblem prob = normalize(inst.gains);
    SumLogSinrUtility u(6);
    SolverConfig c = tight(SolveMode::UnconstrainedNormalized, default_theta(1.0));
    c.record_powers = true;
    const SolveResult r = solve(prob, u, c);
    CHECK(r.converged);
    for (const auto& p : r.trace.powers) CHECK(p.norm() == doctest::Approx(1.0).epsilon(1e-12));
    const FixedPointState s = evaluate_state(prob, u, r.p, c.theta0);
    CHECK((s.phi.array() - 1.0).abs().maxCoeff() < 1e-9);
}

TEST_CASE("theta halving schedule") {
    DampingSchedule s(0.8, 3);
    std::vector<double> seen;
    for (int k = 0; k < 10; ++k) {
        seen.push_back(s.theta());
        s.advance();
    }
    // halves after iterations 4 and 7 and 10 (k > c M)
    CHECK(seen[3] == 0.8);
    CHECK(seen[4] == 0.4);
    CHECK(seen[7] == 0.2);
    DampingSchedule off(0.8, 0);
    for (int k = 0; k < 100; ++k) off.advance();
    CHECK(off.theta() == 0.8);
}

TEST_CASE("defect does not vanish as theta shrinks") {
    const Vector p = Vector::Ones(3);
    const Vector phi = Vector::Constant(3, 1.1);
    const PowerBounds box = PowerBounds::box(Vector::Constant(3, 1e-12), Vector::Constant(3, 10.0));
    const double big = damped_defect(p, phi, 0.5, box, SolveMode::MinMaxClamped);
    const double tiny = damped_defect(p, phi, 1e-14, box, SolveMode::MinMaxClamped);
    CHECK(big == doctest::Approx(0.1));
    CHECK(tiny == doctest::Approx(0.1));
    // a coordinate pinned at its cap and pushing outward has no defect
    const PowerBounds capped = PowerBounds::box(Vector::Constant(3, 1e-12), Vector::Ones(3));
    CHECK(damped_defect(p, phi, 0.5, capped, SolveMode::MinMaxClamped) == 0.0);
}

TEST_CASE("aggressive halving stalls rather than faking convergence") {
    std::mt19937_64 rng(6);
    auto inst = oracle::random_instance(rng, 8, true, oracle::Box::MinMax);
    const NormalizedProblem prob = normalize(inst.gains, inst.bounds);
    SolverConfig c = tight(SolveMode::MinMaxClamped);
    c.halving_period = 1;
    c.max_iter = 100000;
    const SolveResult r = solve(prob, LogRateUtility(8, 5.0), c);
    CHECK(r.trace.termination != Termination::Converged);
    CHECK_FALSE(r.converged);
}

TEST_CASE("config validation and contract errors") {
    std::mt19937_64 rng(7);
    auto inst = oracle::random_instance(rng, 3, true, oracle::Box::MaxOnly);
    const NormalizedProblem prob = normalize(inst.gains, inst.bounds);
    LogRateUtility u(3, 5.0);
    SolverConfig c;
    c.theta0 = 0.0;
    CHECK_THROWS_AS(solve(prob, u, c), ConfigError);
    c = SolverConfig{};
    c.mode = SolveMode::UnconstrainedNormalized;
    CHECK_THROWS_AS(solve(prob, u, c), ConfigError);
    c = SolverConfig{};
    c.p0 = Vector::Ones(5);
    CHECK_THROWS_AS(solve(prob, u, c), ConfigError);
    CHECK_THROWS_AS(solve(prob, SumSinrUtility(3), SolverConfig{}), ConfigError);
    CHECK_THROWS_AS(solve(prob, LogRateUtility(4, 5.0), SolverConfig{}), Error);
}

TEST_CASE("vicinity counting") {
    SolverTrace t;
    for (double u : {-200.0, -120.0, -104.0, -101.5, -100.5, -100.0}) {
        TraceRecord r;
        r.utility = u;
        t.records.push_back(r);
    }
    mark_vicinity(t, -100.0, -100.0);
    CHECK(*t.vicinity[0] == 2);
    CHECK(*t.vicinity[1] == 3);
    CHECK(*t.vicinity[2] == 4);
    CHECK_FALSE(iterations_to_within(t, -150.0, -100.0, 5.0).has_value());
}
