#include <doctest.h>

#include <random>

#include "oracles.hpp"
#include "pcsim/error.hpp"
#include "pcsim/spectral.hpp"

using namespace pcsim;

TEST_CASE("power iteration agrees with a dense eigensolver") {
    std::mt19937_64 rng(21);
    std::uniform_real_distribution<double> u(0.01, 1.0);
    for (int n : {2, 5, 17}) {
        Matrix m(n, n);
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j) m(i, j) = u(rng);
        const DominantEigenpair e = spectral_radius(m);
        CHECK(e.rho == doctest::Approx(oracle::dense_spectral_radius(m)).epsilon(1e-10));
        CHECK((e.v.array() > 0.0).all());
        CHECK(e.v.norm() == doctest::Approx(1.0));
        CHECK(e.lower_bound <= e.rho * (1 + 1e-12));
        CHECK(e.upper_bound >= e.rho * (1 - 1e-12));
        CHECK(((m * e.v) - e.rho * e.v).norm() < 1e-8);
    }
}

TEST_CASE("rank-one matrix") {
    const Vector a = Vector::LinSpaced(4, 1.0, 4.0);
    const Vector b = Vector::LinSpaced(4, 0.5, 2.0);
    const DominantEigenpair e = spectral_radius(Matrix(a * b.transpose()));
    CHECK(e.rho == doctest::Approx(b.dot(a)).epsilon(1e-12));
    CHECK((e.v - a.normalized()).norm() < 1e-10);
}

TEST_CASE("sinr operator has Perron root one with p as eigenvector under zero noise") {
    std::mt19937_64 rng(4);
    std::uniform_real_distribution<double> lp(-3.0, 3.0);
    for (int trial = 0; trial < 10; ++trial) {
        const int n = 3 + trial;
        auto inst = oracle::random_instance(rng, n, false, oracle::Box::None);
        const NormalizedProblem prob = normalize(inst.gains);
        Vector p(n);
        for (int i = 0; i < n; ++i) p[i] = std::pow(10.0, lp(rng));
        const Vector gamma = oracle::raw_sinr(inst.gains, p);
        const DominantEigenpair e = spectral_radius(sinr_operator(prob, gamma), std::size_t(n));
        CHECK(std::abs(e.rho - 1.0) <= 1e-10);
        CHECK((e.v - p.normalized()).cwiseAbs().maxCoeff() < 1e-8);

        // transpose operator has the same root
        const DominantEigenpair et = spectral_radius(sinr_operator_transpose(prob, gamma), std::size_t(n));
        CHECK(std::abs(et.rho - 1.0) <= 1e-10);
    }
}

TEST_CASE("non-convergence raises with the last estimate") {
    // a rotation-like positive operator converges slowly; one iteration is never enough
    Matrix m(2, 2);
    m << 1.0, 0.999, 0.999, 1.0;
    Matrix skew = m;
    skew(0, 1) = 0.5;
    CHECK_THROWS_AS(spectral_radius(skew, 1e-16, 1), ConvergenceError);
}
