#include "pcsim/spectral.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "pcsim/error.hpp"

namespace pcsim {

DominantEigenpair spectral_radius(const LinearOperator& op, std::size_t n, double tol, std::size_t max_iter) {
    if (n == 0) throw DomainError("spectral_radius: empty operator");
    if (!(tol > 0.0)) throw DomainError("spectral_radius: tol must be positive");

    Vector v = Vector::Ones(Eigen::Index(n)).normalized();
    double rho = std::numeric_limits<double>::quiet_NaN();

    for (std::size_t it = 1; it <= max_iter; ++it) {
        const Vector av = op(v);
        const double rq = v.dot(av);
        const double norm = av.norm();
        if (!(norm > 0.0) || !std::isfinite(norm))
            throw ConvergenceError("spectral_radius: operator annihilated the iterate", rq);

        const bool done = std::isfinite(rho) && std::abs(rq - rho) <= tol * std::abs(rq);
        rho = rq;
        if (done) {
            DominantEigenpair out;
            out.rho = rho;
            out.v = v;
            out.iterations = it;
            const Vector ratio = av.cwiseQuotient(v);
            out.lower_bound = ratio.minCoeff();
            out.upper_bound = ratio.maxCoeff();
            return out;
        }
        v = av / norm;
    }
    throw ConvergenceError("spectral_radius: power iteration did not converge", rho);
}

DominantEigenpair spectral_radius(const Matrix& m, double tol, std::size_t max_iter) {
    if (m.rows() != m.cols()) throw DomainError("spectral_radius: matrix must be square");
    return spectral_radius([&m](const Vector& x) -> Vector { return m * x; }, std::size_t(m.rows()), tol, max_iter);
}

LinearOperator sinr_operator(const NormalizedProblem& prob, const Vector& gamma) {
    return [&prob, gamma](const Vector& x) -> Vector { return gamma.cwiseProduct(prob.V().apply(x)); };
}

LinearOperator sinr_operator_transpose(const NormalizedProblem& prob, const Vector& gamma) {
    return [&prob, gamma](const Vector& x) -> Vector { return prob.V().apply_transpose(gamma.cwiseProduct(x)); };
}

} // namespace pcsim
