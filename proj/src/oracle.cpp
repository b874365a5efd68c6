#include "pcsim/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>
#include <random>
#include <sstream>

#include "pcsim/error.hpp"

namespace pcsim {

// Log-domain reformulation --------------------------------------------------------

LogDomainPoint to_log_domain(const NormalizedProblem& prob, const Vector& p) {
    const auto s = interference_and_sinr(prob, p);
    return {s.gamma.array().log().matrix(), p.array().log().matrix(), s.q.array().log().matrix()};
}

double log_domain_objective(const NormalizedProblem& prob, const UtilityModel& u, const Vector& y) {
    const Vector p = y.array().exp().matrix();
    return u.value(interference_and_sinr(prob, p).gamma);
}

Vector log_domain_gradient(const NormalizedProblem& prob, const UtilityModel& u, const Vector& y) {
    const Vector p = y.array().exp().matrix();
    const auto s = interference_and_sinr(prob, p);
    const Vector alpha = u.gradient(s.gamma).cwiseQuotient(s.q);
    const Vector st_alpha = prob.V().apply_transpose(s.gamma.cwiseProduct(alpha));
    return p.cwiseProduct(alpha - st_alpha);
}

namespace {

// Feasible set for y: a box, or the unit-norm gauge when the problem is interference-limited.
struct LogBox {
    bool gauge = false;
    Vector lo;
    Vector hi;

    Vector project(const Vector& y) const {
        if (gauge) {
            const double m = y.maxCoeff();
            const double log_norm = m + 0.5 * std::log((2.0 * (y.array() - m)).exp().sum());
            return (y.array() - log_norm).matrix();
        }
        return y.cwiseMax(lo).cwiseMin(hi);
    }
};

LogBox make_box(const NormalizedProblem& prob, SolveMode mode) {
    LogBox box;
    if (mode == SolveMode::UnconstrainedNormalized) {
        if (!prob.interference_limited()) throw ConfigError("oracle: the unit-norm gauge requires zero noise");
        box.gauge = true;
        return box;
    }
    if (!prob.bounds().bounded()) throw ConfigError("oracle: a power box is required when noise is present");
    const PowerBounds b = effective_bounds(prob, mode);
    box.lo = b.p_min.array().log().matrix();
    box.hi = b.p_max->array().log().matrix();
    return box;
}

double projected_gradient_norm(const LogBox& box, const Vector& y, const Vector& grad) {
    if (box.gauge) return grad.cwiseAbs().maxCoeff();
    return (box.project(y + grad) - y).cwiseAbs().maxCoeff();
}

} // namespace

OracleResult oracle_solve(const NormalizedProblem& prob, const UtilityModel& u, const OracleOptions& opts) {
    const LogBox box = make_box(prob, opts.mode);
    Vector p0 = opts.p0 ? *opts.p0 : default_initial_power(prob);
    Vector y = box.project(p0.array().log().matrix());

    double g = log_domain_objective(prob, u, y);
    Vector grad = log_domain_gradient(prob, u, y);
    double step = 1.0;
    // nonmonotone reference: the worst of the last few accepted values
    std::deque<double> recent{g};

    OracleResult out;
    for (std::size_t it = 0; it < opts.max_iter; ++it) {
        out.projected_gradient = projected_gradient_norm(box, y, grad);
        out.iterations = it;
        if (out.projected_gradient <= opts.tol) {
            out.converged = true;
            break;
        }

        const Vector dir = box.project(y + step * grad) - y;
        const double slope = grad.dot(dir);
        const double ref = *std::min_element(recent.begin(), recent.end());
        double t = 1.0;
        bool accepted = false;
        Vector y_new;
        double g_new = 0.0;
        for (std::size_t h = 0; h <= opts.max_halvings; ++h) {
            y_new = box.gauge ? box.project(y + t * dir) : Vector(y + t * dir);
            g_new = log_domain_objective(prob, u, y_new);
            if (std::isfinite(g_new) && g_new >= ref + opts.armijo * t * slope) {
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        if (!accepted) {
            std::ostringstream os;
            os << "oracle: line search failed at iteration " << it << " (projected gradient "
               << out.projected_gradient << ")";
            throw Error(os.str());
        }

        const Vector grad_new = log_domain_gradient(prob, u, y_new);
        const Vector s = y_new - y;
        const Vector dg = grad_new - grad;
        const double curvature = -s.dot(dg);
        step = curvature > 0.0 ? std::clamp(s.squaredNorm() / curvature, 1e-10, 1e10) : 1e10;

        y = std::move(y_new);
        g = g_new;
        grad = grad_new;
        recent.push_back(g);
        if (recent.size() > opts.memory) recent.pop_front();
    }
    if (!out.converged) out.iterations = opts.max_iter;

    out.p = y.array().exp().matrix();
    const auto s = interference_and_sinr(prob, out.p);
    out.utility = u.value(s.gamma);

    // Duals: lambda from x-stationarity, mu from the y-stationarity system with bound forces removed.
    out.duals.lambda = s.gamma.cwiseProduct(u.gradient(s.gamma));
    Vector force = Vector::Zero(grad.size());
    if (!box.gauge) {
        for (Eigen::Index i = 0; i < y.size(); ++i) {
            const bool active = y[i] >= box.hi[i] - 1e-12 || y[i] <= box.lo[i] + 1e-12;
            if (active) force[i] = grad[i];
        }
    }
    out.duals.beta = force.cwiseAbs();
    const Vector rhs = (out.duals.lambda - force).cwiseQuotient(out.p);
    const Vector nu = prob.V().dense().transpose().partialPivLu().solve(rhs);
    out.duals.mu = s.q.cwiseProduct(nu);
    return out;
}

GridResult grid_search(const NormalizedProblem& prob, const UtilityModel& u, std::size_t points_per_axis) {
    const std::size_t n = prob.size();
    if (n > 5) throw DomainError("grid_search: limited to N <= 5");
    if (!prob.bounds().bounded()) throw DomainError("grid_search: needs a bounded power box");
    if (points_per_axis < 2) throw DomainError("grid_search: need at least two points per axis");
    const PowerBounds b = effective_bounds(prob, SolveMode::MinMaxClamped);

    std::vector<Vector> axes(n);
    for (std::size_t i = 0; i < n; ++i) {
        const double lo = std::log(b.p_min[Eigen::Index(i)]);
        const double hi = std::log((*b.p_max)[Eigen::Index(i)]);
        axes[i] = Vector::LinSpaced(Eigen::Index(points_per_axis), lo, hi).array().exp().matrix();
    }

    GridResult best;
    best.utility = -std::numeric_limits<double>::infinity();
    std::vector<std::size_t> idx(n, 0);
    Vector p(static_cast<Eigen::Index>(n));
    while (true) {
        for (std::size_t i = 0; i < n; ++i) p[Eigen::Index(i)] = axes[i][Eigen::Index(idx[i])];
        const double val = utility_at(prob, u, p);
        if (val > best.utility) {
            best.utility = val;
            best.p = p;
        }
        std::size_t d = 0;
        while (d < n && ++idx[d] == points_per_axis) idx[d++] = 0;
        if (d == n) break;
    }
    return best;
}

// KKT ------------------------------------------------------------------------------

KktResidual kkt_residual(const Vector& p, const NormalizedProblem& prob, const UtilityModel& u, SolveMode mode) {
    const PowerBounds b = effective_bounds(prob, mode);
    const FixedPointState s = evaluate_state(prob, u, p, 1.0);
    const Vector target = p.cwiseProduct(s.phi);
    const Vector mapped = mode == SolveMode::UnconstrainedNormalized ? target : clamp_box(target, b.p_min, b.p_max);

    KktResidual r;
    r.residual = p - mapped;
    r.norm_inf = r.residual.cwiseAbs().maxCoeff();
    r.relative = r.norm_inf / p.cwiseAbs().maxCoeff();
    r.at_lower.resize(std::size_t(p.size()));
    r.at_upper.resize(std::size_t(p.size()));
    for (Eigen::Index i = 0; i < p.size(); ++i) {
        r.at_lower[std::size_t(i)] = mode != SolveMode::UnconstrainedNormalized && p[i] <= b.p_min[i] * (1.0 + 1e-12);
        r.at_upper[std::size_t(i)] = b.p_max && p[i] >= (*b.p_max)[i] * (1.0 - 1e-12);
    }
    return r;
}

// Jacobian structure -------------------------------------------------------------------

namespace {

template <class F>
Matrix central_difference(const F& f, const Vector& p, double rel_step) {
    const auto n = p.size();
    Matrix j(n, n);
    for (Eigen::Index c = 0; c < n; ++c) {
        const double h = rel_step * p[c];
        Vector up = p, dn = p;
        up[c] += h;
        dn[c] -= h;
        j.col(c) = (f(up) - f(dn)) / (2.0 * h);
    }
    return j;
}

double inf_norm(const Matrix& m) { return m.cwiseAbs().rowwise().sum().maxCoeff(); }

} // namespace

JacobianReport jacobian_check(const Vector& p_star, const NormalizedProblem& prob, const UtilityModel& u,
                              double theta, double B) {
    if (!prob.interference_limited()) throw DomainError("jacobian_check: needs a zero-noise optimum");
    constexpr double kStep = 1e-6;
    const auto n = p_star.size();

    auto phi = [&](const Vector& p) -> Vector { return evaluate_state(prob, u, p, theta).phi; };
    auto phi_theta = [&](const Vector& p) -> Vector { return step_damped(p, phi(p), theta); };

    JacobianReport rep;
    rep.B = B;
    rep.jacobian_theta = central_difference(phi_theta, p_star, kStep);
    const Matrix jphi = central_difference(phi, p_star, kStep);

    const FixedPointState s = evaluate_state(prob, u, p_star, theta);
    const Vector r = p_star.cwiseQuotient(s.alpha);
    const Vector r_half = r.cwiseSqrt();

    // (a) the optimal direction is an eigenvector with eigenvalue 1
    rep.scale_line_error = (rep.jacobian_theta * p_star - p_star).norm() / p_star.norm();

    // (b) symmetrized Jacobian is NSD with spectrum bounded by 4B - 2
    const Matrix a = r_half.asDiagonal() * (s.alpha.asDiagonal() * jphi) * r_half.asDiagonal();
    rep.symmetrized = a;
    rep.asymmetry = inf_norm(a - a.transpose()) / inf_norm(a);
    Eigen::SelfAdjointEigenSolver<Matrix> es_a(0.5 * (a + a.transpose()), Eigen::EigenvaluesOnly);
    rep.sym_max_eig = es_a.eigenvalues().maxCoeff();
    rep.sym_min_eig = es_a.eigenvalues().minCoeff();

    // closed form of D(alpha) phi' at the optimum
    const Matrix S = s.gamma.asDiagonal() * prob.V().dense();
    const Matrix s_tilde = Matrix::Identity(n, n) - S;
    const Vector inv_q = s.q.cwiseInverse();
    const Matrix inv_r = r.cwiseInverse().asDiagonal();
    const Matrix curvature = inv_q.asDiagonal() * u.hessian(s.gamma) * inv_q.asDiagonal();
    const Matrix closed = s_tilde.transpose() * (curvature + 2.0 * inv_r) * s_tilde -
                          (s_tilde.transpose() * inv_r + inv_r * s_tilde);
    const Matrix fd = s.alpha.asDiagonal() * jphi;
    rep.closed_form_error = (fd - closed).norm() / closed.norm();

    // (c) second term: NSD, zero eigenvalue along sqrt(alpha p), radius <= 2
    const Matrix second = r_half.asDiagonal() *
                          (s_tilde.transpose() * inv_r * s_tilde - s_tilde.transpose() * inv_r - inv_r * s_tilde) *
                          r_half.asDiagonal();
    Eigen::SelfAdjointEigenSolver<Matrix> es_c(0.5 * (second + second.transpose()));
    const Eigen::Index top = n - 1;
    rep.second_term_max_eig = es_c.eigenvalues()[top];
    rep.second_term_radius = es_c.eigenvalues().cwiseAbs().maxCoeff();
    const Vector expected = s.alpha.cwiseProduct(p_star).cwiseSqrt().normalized();
    rep.second_term_alignment = std::abs(es_c.eigenvectors().col(top).dot(expected));

    Eigen::JacobiSVD<Matrix> svd(s_tilde);
    rep.s_tilde_norm = svd.singularValues()[0];

    const double lower = -(4.0 * B - 2.0) - 1e-3;
    rep.checks = {
        {"scale_line_eigenvector", rep.scale_line_error <= 1e-4, rep.scale_line_error, 1e-4},
        {"symmetrized_symmetric", rep.asymmetry <= 1e-6, rep.asymmetry, 1e-6},
        {"symmetrized_nsd", rep.sym_max_eig <= 1e-6, rep.sym_max_eig, 1e-6},
        {"symmetrized_lower_bound", rep.sym_min_eig >= lower, rep.sym_min_eig, lower},
        {"jacobian_closed_form", rep.closed_form_error <= 1e-4, rep.closed_form_error, 1e-4},
        {"second_term_nsd", rep.second_term_max_eig <= 1e-6, rep.second_term_max_eig, 1e-6},
        {"second_term_zero_eigenvector", rep.second_term_alignment >= 1.0 - 1e-6, rep.second_term_alignment,
         1.0 - 1e-6},
        {"second_term_radius", rep.second_term_radius <= 2.0 + 1e-6, rep.second_term_radius, 2.0 + 1e-6},
    };
    rep.passed = std::all_of(rep.checks.begin(), rep.checks.end(), [](const CheckOutcome& c) { return c.pass; });
    return rep;
}

// Interference-constraint convexity --------------------------------------------------

double log_affine_exp(const Vector& a, double a0, const Vector& x) {
    const double m = std::max(x.maxCoeff(), 0.0);
    const double s = (a.array() * (x.array() - m).exp()).sum() + a0 * std::exp(-m);
    return m + std::log(s);
}

Matrix log_affine_exp_hessian(const Vector& a, double a0, const Vector& x) {
    const double m = std::max(x.maxCoeff(), 0.0);
    const Vector w = (a.array() * (x.array() - m).exp()).matrix();
    const double s = w.sum() + a0 * std::exp(-m);
    Matrix h = -(w * w.transpose()) / (s * s);
    h.diagonal() += w / s;
    return h;
}

bool convexity_spotcheck(const Vector& a, double a0, std::size_t trials, std::uint64_t seed) {
    if (!(a.array() > 0.0).all() || !(a0 >= 0.0)) throw DomainError("convexity_spotcheck: needs a > 0 and a0 >= 0");
    constexpr double kSlack = 1e-12;
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> coord(0.0, 2.0);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    const auto n = a.size();

    for (std::size_t k = 0; k < trials; ++k) {
        Vector x1(n), x2(n);
        for (Eigen::Index i = 0; i < n; ++i) {
            x1[i] = coord(rng);
            x2[i] = coord(rng);
        }
        const double t = unit(rng);
        const double lhs = log_affine_exp(a, a0, t * x1 + (1.0 - t) * x2);
        const double rhs = t * log_affine_exp(a, a0, x1) + (1.0 - t) * log_affine_exp(a, a0, x2);
        if (lhs > rhs + kSlack) return false;

        Eigen::SelfAdjointEigenSolver<Matrix> es(log_affine_exp_hessian(a, a0, x1), Eigen::EigenvaluesOnly);
        if (es.eigenvalues().minCoeff() < -kSlack) return false;
    }
    return true;
}

} // namespace pcsim
