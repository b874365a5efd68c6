#include "pcsim/problem.hpp"

#include <cmath>
#include <sstream>
#include <utility>

#include "pcsim/error.hpp"

namespace pcsim {

namespace {

thread_local OpCounts t_counts;

std::string index_msg(const char* what, std::size_t i) {
    std::ostringstream os;
    os << what << " at index " << i;
    return os.str();
}

std::string index_msg(const char* what, std::size_t i, std::size_t j) {
    std::ostringstream os;
    os << what << " at index (" << i << ", " << j << ")";
    return os.str();
}

} // namespace

OpCounts op_counts() noexcept { return t_counts; }

void reset_op_counts() noexcept { t_counts = OpCounts{}; }

void LinkGains::validate() const {
    const auto n = h.size();
    if (n == 0) throw ConfigError("link gains: empty direct gain vector");
    if (H.rows() != n || H.cols() != n) throw ConfigError("link gains: H must be N x N with N = size(h)");
    if (eta.size() != n) throw ConfigError("link gains: eta must have the same length as h");
    for (Eigen::Index i = 0; i < n; ++i) {
        if (!(h[i] > 0.0) || !std::isfinite(h[i]))
            throw ConfigError(index_msg("link gains: direct gain h must be positive", std::size_t(i)));
        if (!(eta[i] >= 0.0) || !std::isfinite(eta[i]))
            throw ConfigError(index_msg("link gains: noise eta must be non-negative", std::size_t(i)));
        for (Eigen::Index j = 0; j < n; ++j) {
            if (!(H(i, j) > 0.0) || !std::isfinite(H(i, j)))
                throw ConfigError(index_msg("link gains: cross gain H must be positive", std::size_t(i), std::size_t(j)));
        }
    }
}

PowerBounds PowerBounds::unbounded(std::size_t n) {
    return PowerBounds{Vector::Constant(Eigen::Index(n), kPowerFloor), std::nullopt};
}

PowerBounds PowerBounds::box(Vector p_min, Vector p_max) {
    return PowerBounds{std::move(p_min), std::move(p_max)};
}

PowerBounds PowerBounds::max_only(Vector p_max) {
    Vector p_min = Vector::Constant(p_max.size(), kPowerFloor);
    return PowerBounds{std::move(p_min), std::move(p_max)};
}

InterferenceMatrix::InterferenceMatrix(Matrix v) : v_(std::move(v)) {}

Vector InterferenceMatrix::apply(const Vector& x) const {
    ++t_counts.forward;
    return v_ * x;
}

Vector InterferenceMatrix::apply_transpose(const Vector& x) const {
    ++t_counts.transpose;
    return v_.transpose() * x;
}

NormalizedProblem::NormalizedProblem(Matrix v, Vector zeta, PowerBounds bounds)
    : v_(std::move(v)), zeta_(std::move(zeta)), bounds_(std::move(bounds)) {
    const auto n = v_.dense().rows();
    if (n == 0 || v_.dense().cols() != n) throw ConfigError("normalized problem: V must be a non-empty square matrix");
    if (zeta_.size() != n) throw ConfigError("normalized problem: zeta length mismatch");
    if (bounds_.p_min.size() != n) throw ConfigError("normalized problem: p_min length mismatch");
    if (bounds_.p_max && bounds_.p_max->size() != n) throw ConfigError("normalized problem: p_max length mismatch");

    const Matrix& vm = v_.dense();
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index j = 0; j < n; ++j) {
            if (!(vm(i, j) > 0.0) || !std::isfinite(vm(i, j)))
                throw ConfigError(index_msg("normalized problem: V must be strictly positive", std::size_t(i), std::size_t(j)));
        }
        if (!(zeta_[i] >= 0.0) || !std::isfinite(zeta_[i]))
            throw ConfigError(index_msg("normalized problem: zeta must be non-negative", std::size_t(i)));
        if (!(bounds_.p_min[i] >= 0.0))
            throw ConfigError(index_msg("normalized problem: p_min must be non-negative", std::size_t(i)));
        if (bounds_.p_max) {
            const double hi = (*bounds_.p_max)[i];
            if (!(hi > 0.0) || !std::isfinite(hi))
                throw ConfigError(index_msg("normalized problem: p_max must be positive and finite", std::size_t(i)));
            if (bounds_.p_min[i] > hi)
                throw ConfigError(index_msg("normalized problem: p_min exceeds p_max", std::size_t(i)));
        }
    }
    interference_limited_ = (zeta_.array() == 0.0).all();
    if (interference_limited_ && bounds_.p_max)
        throw ConfigError("normalized problem: zero noise is only meaningful without a power cap (interference-limited mode)");
}

NormalizedProblem NormalizedProblem::with_bounds(PowerBounds bounds) const {
    return NormalizedProblem(v_.dense(), zeta_, std::move(bounds));
}

NormalizedProblem normalize(const LinkGains& gains, PowerBounds bounds) {
    gains.validate();
    const Vector inv_h = gains.h.cwiseInverse();
    Matrix v = inv_h.asDiagonal() * gains.H;
    Vector zeta = gains.eta.cwiseProduct(inv_h);
    return NormalizedProblem(std::move(v), std::move(zeta), std::move(bounds));
}

NormalizedProblem normalize(const LinkGains& gains) {
    return normalize(gains, PowerBounds::unbounded(gains.size()));
}

SinrState interference_and_sinr(const NormalizedProblem& prob, const Vector& p) {
    if (std::size_t(p.size()) != prob.size()) throw DomainError("interference_and_sinr: power vector length mismatch");
    for (Eigen::Index i = 0; i < p.size(); ++i) {
        if (!(p[i] > 0.0)) throw DomainError(index_msg("interference_and_sinr: power must be positive", std::size_t(i)));
    }
    SinrState s;
    s.p = p;
    s.q = prob.V().apply(p) + prob.zeta();
    s.gamma = p.cwiseQuotient(s.q);
    return s;
}

} // namespace pcsim
