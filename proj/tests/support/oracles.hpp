#pragma once

// Test-side reference computations. These deliberately avoid the library's
// own helpers: SINRs come straight from raw gains with explicit loops,
// utilities from their textbook formulas, derivatives from finite differences.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <random>
#include <vector>

#include <Eigen/Dense>

#include "pcsim/problem.hpp"

namespace oracle {

using pcsim::LinkGains;
using pcsim::Matrix;
using pcsim::PowerBounds;
using pcsim::Vector;

struct RandomInstance {
    LinkGains gains;
    PowerBounds bounds;
};

enum class Box { None, MaxOnly, MinMax };

/// Direct gains around 1, cross gains up to `cross`, diagonal self-interference 1e-4 h.
/// zeta > 0 unless noise is false. MinMax boxes are drawn so that both bounds bind on some draws.
inline RandomInstance random_instance(std::mt19937_64& rng, int n, bool noise, Box box, double cross = 0.2) {
    std::uniform_real_distribution<double> u01(0.0, 1.0);
    RandomInstance r;
    r.gains.h.resize(n);
    r.gains.H.resize(n, n);
    r.gains.eta.resize(n);
    for (int i = 0; i < n; ++i) {
        r.gains.h[i] = 0.5 + u01(rng);
        r.gains.eta[i] = noise ? std::pow(10.0, -3.0 + 2.0 * u01(rng)) : 0.0;
    }
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j)
            r.gains.H(i, j) = i == j ? 1e-4 * r.gains.h[i] : cross * (0.05 + u01(rng)) / double(n);
    Vector lo = Vector::Constant(n, pcsim::kPowerFloor);
    Vector hi(n);
    for (int i = 0; i < n; ++i) hi[i] = 0.2 + u01(rng);
    switch (box) {
    case Box::None: r.bounds = PowerBounds::unbounded(std::size_t(n)); break;
    case Box::MaxOnly: r.bounds = PowerBounds::box(lo, hi); break;
    case Box::MinMax:
        for (int i = 0; i < n; ++i) lo[i] = hi[i] * std::pow(10.0, -2.0 + 1.8 * u01(rng));
        r.bounds = PowerBounds::box(lo, hi);
        break;
    }
    return r;
}

/// gamma_i = h_i p_i / (sum_j H_ij p_j + eta_i), computed with explicit loops on raw gains.
inline Vector raw_sinr(const LinkGains& g, const Vector& p) {
    const auto n = g.h.size();
    Vector gamma(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        double interference = g.eta[i];
        for (Eigen::Index j = 0; j < n; ++j) interference += g.H(i, j) * p[j];
        gamma[i] = g.h[i] * p[i] / interference;
    }
    return gamma;
}

inline double log_rate_value(const Vector& gamma, double gap) {
    double u = 0.0;
    for (Eigen::Index i = 0; i < gamma.size(); ++i) u += std::log(std::log2(1.0 + gamma[i] / gap));
    return u;
}

inline double sum_log_value(const Vector& gamma) { return gamma.array().log().sum(); }

inline Vector fd_gradient(const std::function<double(const Vector&)>& f, const Vector& x, double rel = 1e-6) {
    Vector g(x.size());
    for (Eigen::Index i = 0; i < x.size(); ++i) {
        const double h = rel * std::max(std::abs(x[i]), 1e-8);
        Vector a = x, b = x;
        a[i] += h;
        b[i] -= h;
        g[i] = (f(a) - f(b)) / (2.0 * h);
    }
    return g;
}

inline Matrix fd_jacobian(const std::function<Vector(const Vector&)>& f, const Vector& x, double rel = 1e-6) {
    const Vector f0 = f(x);
    Matrix j(f0.size(), x.size());
    for (Eigen::Index c = 0; c < x.size(); ++c) {
        const double h = rel * std::max(std::abs(x[c]), 1e-8);
        Vector a = x, b = x;
        a[c] += h;
        b[c] -= h;
        j.col(c) = (f(a) - f(b)) / (2.0 * h);
    }
    return j;
}

/// Relative error of an approximation against a reference, guarded for tiny references.
inline double rel_err(const Matrix& approx, const Matrix& ref) {
    return (approx - ref).cwiseAbs().maxCoeff() / std::max(ref.cwiseAbs().maxCoeff(), 1e-300);
}

/// Largest eigenvalue modulus from a dense general eigensolver.
inline double dense_spectral_radius(const Matrix& m) {
    Eigen::EigenSolver<Matrix> es(m, false);
    return es.eigenvalues().cwiseAbs().maxCoeff();
}

/// Nearest-rank percentile on a plain sample.
inline double nearest_rank(std::vector<double> xs, double q) {
    std::sort(xs.begin(), xs.end());
    const auto k = std::size_t(std::ceil(q * double(xs.size())));
    return xs[std::max<std::size_t>(k, 1) - 1];
}

} // namespace oracle
