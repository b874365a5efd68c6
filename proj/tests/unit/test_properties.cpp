#include <doctest.h>

#include <random>

#include "oracles.hpp"
#include "pcsim/oracle.hpp"
#include "pcsim/solver.hpp"
#include "pcsim/utility.hpp"

using namespace pcsim;

// Randomized property suites. Each draws its own instances from a fixed seed.

TEST_CASE("gradients and hessians of every smooth utility match finite differences") {
    std::mt19937_64 rng(101);
    std::uniform_real_distribution<double> lg(-2.0, 3.0);
    std::uniform_real_distribution<double> w(0.3, 3.0);
    double worst_g = 0.0, worst_h = 0.0;
    for (int trial = 0; trial < 200; ++trial) {
        const int n = 2 + trial % 6;
        Vector g(n), wt(n);
        for (int i = 0; i < n; ++i) {
            g[i] = std::pow(10.0, lg(rng));
            wt[i] = w(rng);
        }
        std::vector<UtilityPtr> us{std::make_shared<SumLogSinrUtility>(std::size_t(n)),
                                   std::make_shared<LogRateUtility>(wt, db_to_linear(7.0))};
        if (n >= 2) {
            std::vector<RelayRoute> routes{{RelayRoute::Kind::Relayed, 0, std::size_t(n - 1), 1.0}};
            us.push_back(std::make_shared<RelayUtility>(std::size_t(n), routes, db_to_linear(7.0), 5.0));
        }
        for (const auto& u : us) {
            const Vector fd = oracle::fd_gradient([&](const Vector& x) { return u->value(x); }, g);
            worst_g = std::max(worst_g, oracle::rel_err(u->gradient(g), fd));
            const Matrix fh = oracle::fd_jacobian([&](const Vector& x) { return u->gradient(x); }, g);
            worst_h = std::max(worst_h, oracle::rel_err(u->hessian(g), fh));
        }
    }
    CHECK(worst_g <= 1e-5);
    CHECK(worst_h <= 1e-4);
}

TEST_CASE("log of an affine sum of exponentials is convex: 1000 random chords") {
    std::mt19937_64 rng(102);
    std::uniform_real_distribution<double> ua(0.01, 2.0), ux(-8.0, 8.0), ut(0.0, 1.0);
    std::size_t violations = 0;
    for (int trial = 0; trial < 1000; ++trial) {
        const int n = 1 + trial % 7;
        Vector a(n), x(n), y(n);
        for (int i = 0; i < n; ++i) {
            a[i] = ua(rng);
            x[i] = ux(rng);
            y[i] = ux(rng);
        }
        const double a0 = trial % 4 == 0 ? 0.0 : ua(rng);
        const double t = ut(rng);
        // direct evaluation, no shift: the ranges are tame enough
        auto f = [&](const Vector& z) { return std::log(a.dot(z.array().exp().matrix()) + a0); };
        const double lhs = f(t * x + (1 - t) * y);
        const double rhs = t * f(x) + (1 - t) * f(y);
        if (lhs > rhs + 1e-12 * std::max(1.0, std::abs(rhs))) ++violations;
        CHECK(log_affine_exp(a, a0, x) == doctest::Approx(f(x)).epsilon(1e-12));
    }
    CHECK(violations == 0);
}

TEST_CASE("smooth min stays within ln2/k below the exact min") {
    std::mt19937_64 rng(103);
    std::uniform_real_distribution<double> x(-100.0, 100.0), lk(-1.0, 2.0);
    double worst = -1.0;
    for (int t = 0; t < 5000; ++t) {
        const double k = std::pow(10.0, lk(rng));
        const double a = x(rng), b = x(rng);
        const double gap = std::min(a, b) - smooth_min(a, b, k);
        CHECK(gap >= -1e-12);
        worst = std::max(worst, gap * k / std::log(2.0));
    }
    CHECK(worst <= 1.0 + 1e-12);
}

TEST_CASE("zero noise: sinr, utility and phi are constant along the scale line") {
    std::mt19937_64 rng(104);
    std::uniform_real_distribution<double> lc(-6.0, 6.0), lp(-2.0, 2.0);
    for (int trial = 0; trial < 50; ++trial) {
        const int n = 2 + trial % 9;
        auto inst = oracle::random_instance(rng, n, false, oracle::Box::None);
        const NormalizedProblem prob = normalize(inst.gains);
        LogRateUtility u(std::size_t(n), db_to_linear(7.0));
        Vector p(n);
        for (int i = 0; i < n; ++i) p[i] = std::pow(10.0, lp(rng));
        const double c = std::pow(10.0, lc(rng));
        const Vector g1 = oracle::raw_sinr(inst.gains, p);
        const Vector g2 = oracle::raw_sinr(inst.gains, c * p);
        CHECK(oracle::rel_err(g2, g1) <= 1e-12);
        const FixedPointState s1 = evaluate_state(prob, u, p, 0.3);
        const FixedPointState s2 = evaluate_state(prob, u, c * p, 0.3);
        CHECK(oracle::rel_err(s2.phi, s1.phi) <= 1e-12);
        CHECK(u.value(s2.gamma) == doctest::Approx(u.value(s1.gamma)).epsilon(1e-12));
    }
}

TEST_CASE("solutions stay in the box and never lose to the starting point") {
    std::mt19937_64 rng(105);
    for (int trial = 0; trial < 30; ++trial) {
        const int n = 2 + trial % 10;
        auto inst = oracle::random_instance(rng, n, true, oracle::Box::MinMax);
        const NormalizedProblem prob = normalize(inst.gains, inst.bounds);
        LogRateUtility u(std::size_t(n), db_to_linear(7.0));
        SolverConfig c;
        c.halving_period = 0;
        c.tol = 1e-10;
        c.max_iter = 100000;
        const SolveResult r = solve(prob, u, c);
        REQUIRE(r.converged);
        for (int i = 0; i < n; ++i) {
            CHECK(r.p[i] >= inst.bounds.p_min[i] * (1 - 1e-15));
            CHECK(r.p[i] <= (*inst.bounds.p_max)[i] * (1 + 1e-15));
        }
        const double start = u.value(oracle::raw_sinr(inst.gains, *inst.bounds.p_max));
        CHECK(r.utility >= start - 1e-12 * std::abs(start));
    }
}
