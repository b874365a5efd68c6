#include "pcsim/utility.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <random>
#include <utility>

#include "pcsim/error.hpp"

namespace pcsim {

namespace {

void require_positive(const Vector& gamma, const char* who) {
    for (Eigen::Index i = 0; i < gamma.size(); ++i) {
        if (!(gamma[i] > 0.0) || !std::isfinite(gamma[i]))
            throw DomainError(std::string(who) + ": SINR must be positive and finite");
    }
}

void require_size(const Vector& gamma, std::size_t n, const char* who) {
    if (std::size_t(gamma.size()) != n) throw DomainError(std::string(who) + ": SINR vector length mismatch");
}

// G(m) = log ln(1 + m/Gamma) and its first two derivatives in m. Below the
// ratio floor G continues log-linearly in m (C^1 at the floor), which keeps the
// gradient positive and the utility log-concave where the exact form underflows.
struct LogLogTerm {
    double value;
    double d1;
    double d2;
};

LogLogTerm log_log_term(double m, double gap) {
    const double s = m / gap;
    if (s < LogRateUtility::kMinRatio) {
        const double sc = LogRateUtility::kMinRatio;
        const double lc = std::log1p(sc);
        const double slope = sc / ((1.0 + sc) * lc);
        return {std::log(lc) + slope * std::log(s / sc), slope / m, -slope / (m * m)};
    }
    const double l = std::log1p(s);
    const double one_s = 1.0 + s;
    return {std::log(l), 1.0 / (gap * one_s * l), -(l + 1.0) / (gap * gap * one_s * one_s * l * l)};
}

} // namespace

// UtilityModel defaults ---------------------------------------------------------

double UtilityModel::partial(const Vector& gamma, std::size_t i) const { return gradient(gamma)[Eigen::Index(i)]; }

double UtilityModel::marginal(std::size_t, double) const {
    throw ContractViolation(name() + ": per-link marginal requested from a non-separable utility");
}

bool UtilityModel::in_domain(const Vector& gamma) const { return (gamma.array() > 0.0).all(); }

// SumLogSinr ----------------------------------------------------------------------

SumLogSinrUtility::SumLogSinrUtility(std::size_t n) : w_(Vector::Ones(Eigen::Index(n))) {}

SumLogSinrUtility::SumLogSinrUtility(Vector weights) : w_(std::move(weights)) {
    if ((w_.array() < 0.0).any()) throw ConfigError("sum_log_sinr: weights must be non-negative");
}

double SumLogSinrUtility::value(const Vector& gamma) const {
    require_size(gamma, size(), "sum_log_sinr");
    require_positive(gamma, "sum_log_sinr");
    return w_.dot(gamma.array().log().matrix());
}

Vector SumLogSinrUtility::gradient(const Vector& gamma) const {
    require_size(gamma, size(), "sum_log_sinr");
    require_positive(gamma, "sum_log_sinr");
    return w_.cwiseQuotient(gamma);
}

Matrix SumLogSinrUtility::hessian(const Vector& gamma) const {
    require_size(gamma, size(), "sum_log_sinr");
    require_positive(gamma, "sum_log_sinr");
    return (-w_.array() / gamma.array().square()).matrix().asDiagonal();
}

double SumLogSinrUtility::partial(const Vector& gamma, std::size_t i) const {
    return marginal(i, gamma[Eigen::Index(i)]);
}

double SumLogSinrUtility::marginal(std::size_t i, double gamma_i) const {
    if (!(gamma_i > 0.0)) throw DomainError("sum_log_sinr: SINR must be positive");
    return w_[Eigen::Index(i)] / gamma_i;
}

// LogRate -------------------------------------------------------------------------

LogRateUtility::LogRateUtility(std::size_t n, double gap) : LogRateUtility(Vector::Ones(Eigen::Index(n)), gap) {}

LogRateUtility::LogRateUtility(Vector weights, double gap) : w_(std::move(weights)), gap_(gap) {
    if (!(gap_ >= 1.0) || !std::isfinite(gap_)) throw ConfigError("log_rate: SINR gap must be >= 1 (linear)");
    if ((w_.array() < 0.0).any()) throw ConfigError("log_rate: weights must be non-negative");
}

double LogRateUtility::value(const Vector& gamma) const {
    require_size(gamma, size(), "log_rate");
    require_positive(gamma, "log_rate");
    double u = 0.0;
    for (Eigen::Index i = 0; i < gamma.size(); ++i) {
        u += w_[i] * (log_log_term(gamma[i], gap_).value - std::log(std::numbers::ln2));
    }
    return u;
}

Vector LogRateUtility::gradient(const Vector& gamma) const {
    require_size(gamma, size(), "log_rate");
    require_positive(gamma, "log_rate");
    Vector g(gamma.size());
    for (Eigen::Index i = 0; i < gamma.size(); ++i) g[i] = w_[i] * log_log_term(gamma[i], gap_).d1;
    return g;
}

Matrix LogRateUtility::hessian(const Vector& gamma) const {
    require_size(gamma, size(), "log_rate");
    require_positive(gamma, "log_rate");
    Vector d(gamma.size());
    for (Eigen::Index i = 0; i < gamma.size(); ++i) d[i] = w_[i] * log_log_term(gamma[i], gap_).d2;
    return d.asDiagonal();
}

double LogRateUtility::partial(const Vector& gamma, std::size_t i) const {
    return marginal(i, gamma[Eigen::Index(i)]);
}

double LogRateUtility::marginal(std::size_t i, double gamma_i) const {
    if (!(gamma_i > 0.0)) throw DomainError("log_rate: SINR must be positive");
    return w_[Eigen::Index(i)] * log_log_term(gamma_i, gap_).d1;
}

bool LogRateUtility::in_domain(const Vector& gamma) const {
    return ((gamma.array() / gap_) >= kMinRatio).all();
}

// Relay ---------------------------------------------------------------------------

RelayUtility::RelayUtility(std::size_t n_links, std::vector<RelayRoute> routes, double gap, double sharpness)
    : n_(n_links), routes_(std::move(routes)), gap_(gap), k_(sharpness) {
    if (!(gap_ >= 1.0)) throw ConfigError("relay: decoding loss must be >= 1 (linear)");
    if (!(k_ > 0.0)) throw ConfigError("relay: smooth-min sharpness must be positive");
    if (routes_.empty()) throw ConfigError("relay: no users routed");
    for (const auto& r : routes_) {
        if (r.first >= n_ || r.second >= n_ || r.first == r.second)
            throw ConfigError("relay: route references an invalid link index");
        if (r.weight < 0.0) throw ConfigError("relay: weights must be non-negative");
    }
}

namespace {

// Combined SINR m(a, b) for one route with its gradient and Hessian.
struct Combined {
    double m;
    double da, db;
    double daa, dab, dbb;
};

Combined combine(const RelayRoute& r, double a, double b, double k) {
    if (r.kind == RelayRoute::Kind::Relayed) {
        const double m = smooth_min(a, b, k);
        // softmin weights; the smaller one is floored so the partials stay strictly positive
        const double e = std::exp(-k * std::abs(a - b));
        const double big = 1.0 / (1.0 + e);
        const double small = std::max(e / (1.0 + e), 1e-300);
        const double sa = a <= b ? big : small;
        const double sb = a <= b ? small : big;
        const double c = k * sa * sb;
        return {m, sa, sb, -c, c, -c};
    }
    const double s = a + b;
    const double s2 = s * s;
    const double s3 = s2 * s;
    return {2.0 * a * b / s, 2.0 * b * b / s2, 2.0 * a * a / s2, -4.0 * b * b / s3, 4.0 * a * b / s3, -4.0 * a * a / s3};
}

// The smooth min can fall to or below zero for small SINRs, so the relay term
// continues G linearly in m below the ratio floor (C^1, gradient stays positive).
LogLogTerm relay_term(double m, double gap) {
    const double mc = gap * LogRateUtility::kMinRatio;
    if (m >= mc) return log_log_term(m, gap);
    const LogLogTerm at = log_log_term(mc, gap);
    return {at.value + at.d1 * (m - mc), at.d1, 0.0};
}

} // namespace

double RelayUtility::value(const Vector& gamma) const {
    require_size(gamma, n_, "relay");
    require_positive(gamma, "relay");
    double u = 0.0;
    for (const auto& r : routes_) {
        const Combined c = combine(r, gamma[Eigen::Index(r.first)], gamma[Eigen::Index(r.second)], k_);
        const double scale = r.kind == RelayRoute::Kind::Relayed ? 0.5 : 1.0;
        u += r.weight * (relay_term(c.m, gap_).value + std::log(scale / std::numbers::ln2));
    }
    return u;
}

Vector RelayUtility::gradient(const Vector& gamma) const {
    require_size(gamma, n_, "relay");
    require_positive(gamma, "relay");
    Vector g = Vector::Zero(Eigen::Index(n_));
    for (const auto& r : routes_) {
        const auto a = Eigen::Index(r.first), b = Eigen::Index(r.second);
        const Combined c = combine(r, gamma[a], gamma[b], k_);
        const double d1 = r.weight * relay_term(c.m, gap_).d1;
        g[a] += d1 * c.da;
        g[b] += d1 * c.db;
    }
    return g;
}

Matrix RelayUtility::hessian(const Vector& gamma) const {
    require_size(gamma, n_, "relay");
    require_positive(gamma, "relay");
    Matrix h = Matrix::Zero(Eigen::Index(n_), Eigen::Index(n_));
    for (const auto& r : routes_) {
        const auto a = Eigen::Index(r.first), b = Eigen::Index(r.second);
        const Combined c = combine(r, gamma[a], gamma[b], k_);
        const LogLogTerm t = relay_term(c.m, gap_);
        const double d1 = r.weight * t.d1;
        const double d2 = r.weight * t.d2;
        h(a, a) += d2 * c.da * c.da + d1 * c.daa;
        h(b, b) += d2 * c.db * c.db + d1 * c.dbb;
        const double off = d2 * c.da * c.db + d1 * c.dab;
        h(a, b) += off;
        h(b, a) += off;
    }
    return h;
}

bool RelayUtility::in_domain(const Vector& gamma) const {
    if (std::size_t(gamma.size()) != n_ || !(gamma.array() > 0.0).all()) return false;
    for (const auto& r : routes_) {
        const double a = gamma[Eigen::Index(r.first)], b = gamma[Eigen::Index(r.second)];
        if (r.kind == RelayRoute::Kind::Relayed && (a <= 1.0 / k_ || b <= 1.0 / k_)) return false;
        const Combined c = combine(r, a, b, k_);
        if (c.m / gap_ < LogRateUtility::kMinRatio) return false;
    }
    return true;
}

std::vector<double> RelayUtility::user_rates(const Vector& gamma) const {
    std::vector<double> rates;
    rates.reserve(routes_.size());
    for (const auto& r : routes_) {
        const double a = gamma[Eigen::Index(r.first)], b = gamma[Eigen::Index(r.second)];
        if (r.kind == RelayRoute::Kind::Relayed)
            rates.push_back(relay_rate(a, b, gap_, k_).bits);
        else
            rates.push_back(direct_rate_bound(a, b, gap_));
    }
    return rates;
}

double RelayUtility::realized_value(const Vector& gamma) const {
    require_size(gamma, n_, "relay");
    require_positive(gamma, "relay");
    double u = 0.0;
    for (const auto& r : routes_) {
        const double a = gamma[Eigen::Index(r.first)], b = gamma[Eigen::Index(r.second)];
        const double bits = r.kind == RelayRoute::Kind::Relayed
                                ? relay_rate(a, b, gap_, std::nullopt).bits
                                : 0.5 * (std::log2(1.0 + a / gap_) + std::log2(1.0 + b / gap_));
        u += r.weight * std::log(bits);
    }
    return u;
}

// Diagnostics ---------------------------------------------------------------------

LogConcavityCheck check_log_concavity(const UtilityModel& u, const Vector& gamma) {
    require_positive(gamma, "check_log_concavity");
    const Vector grad = u.gradient(gamma);
    const Matrix hess = u.hessian(gamma);
    Matrix m = gamma.asDiagonal() * hess * gamma.asDiagonal();
    m.diagonal() += gamma.cwiseProduct(grad);
    const Matrix sym = 0.5 * (m + m.transpose());
    Eigen::SelfAdjointEigenSolver<Matrix> es(sym, Eigen::EigenvaluesOnly);
    LogConcavityCheck out;
    out.worst_eig = es.eigenvalues().maxCoeff();
    out.ok = out.worst_eig <= kLogConcavityTol;
    return out;
}

double curvature_ratio(const UtilityModel& u, const Vector& gamma) {
    require_positive(gamma, "curvature_ratio");
    const Vector grad = u.gradient(gamma);
    if (!(grad.array() > 0.0).all()) throw ContractViolation(u.name() + ": gradient must be positive");
    const Vector d = gamma.cwiseQuotient(grad).cwiseSqrt();
    Matrix m = d.asDiagonal() * u.hessian(gamma) * d.asDiagonal();
    m = 0.5 * (m + m.transpose());
    Eigen::SelfAdjointEigenSolver<Matrix> es(m, Eigen::EigenvaluesOnly);
    return es.eigenvalues().cwiseAbs().maxCoeff();
}

double estimate_B(const UtilityModel& u, const std::vector<Vector>& gamma_samples) {
    if (gamma_samples.empty()) throw DomainError("estimate_B: empty sample set");
    double b = u.analytic_bound().value_or(0.0);
    for (const auto& g : gamma_samples) b = std::max(b, curvature_ratio(u, g));
    return b;
}

std::vector<Vector> log_uniform_samples(std::size_t n, std::size_t count, double lo, double hi, std::uint64_t seed) {
    if (!(lo > 0.0) || !(hi >= lo)) throw DomainError("log_uniform_samples: need 0 < lo <= hi");
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> dist(std::log(lo), std::log(hi));
    std::vector<Vector> out(count, Vector(Eigen::Index(n)));
    for (auto& g : out)
        for (Eigen::Index i = 0; i < g.size(); ++i) g[i] = std::exp(dist(rng));
    return out;
}

UtilityDiagnostics diagnose(const UtilityModel& u, std::size_t draws, double lo, double hi, std::uint64_t seed) {
    const auto samples = log_uniform_samples(u.size(), draws, lo, hi, seed);
    UtilityDiagnostics d;
    d.B_estimate = estimate_B(u, samples);
    d.worst_violation = -std::numeric_limits<double>::infinity();
    for (const auto& g : samples) d.worst_violation = std::max(d.worst_violation, check_log_concavity(u, g).worst_eig);
    d.log_concave_ok = d.worst_violation <= kLogConcavityTol;
    return d;
}

double theta_max(double B) {
    if (!(B >= 1.0)) throw DomainError("theta_max: curvature bound must be >= 1 for a log-concave utility");
    return 1.0 / (2.0 * B - 1.0);
}

// Relay helpers ---------------------------------------------------------------------

double smooth_min(double x, double y, double k) {
    const double lo = std::min(x, y);
    return lo - std::log1p(std::exp(-k * std::abs(x - y))) / k;
}

RateResult relay_rate(double gamma_wr, double gamma_rb, double gap, std::optional<double> k) {
    if (!(gamma_wr > 0.0) || !(gamma_rb > 0.0)) throw DomainError("relay_rate: SINR must be positive");
    if (!(gap >= 1.0)) throw DomainError("relay_rate: decoding loss must be >= 1");
    RateResult r;
    double m = std::min(gamma_wr, gamma_rb);
    if (k) {
        if (!(*k > 0.0)) throw DomainError("relay_rate: sharpness must be positive");
        m = smooth_min(gamma_wr, gamma_rb, *k);
        r.domain_warning = gamma_wr <= 1.0 / *k || gamma_rb <= 1.0 / *k;
    }
    r.bits = 0.5 * std::log2(1.0 + m / gap);
    return r;
}

double direct_rate_bound(double gamma_slot1, double gamma_slot2, double gap) {
    if (!(gamma_slot1 > 0.0) || !(gamma_slot2 > 0.0)) throw DomainError("direct_rate_bound: SINR must be positive");
    const double harmonic = 2.0 / (1.0 / gamma_slot1 + 1.0 / gamma_slot2);
    return std::log2(1.0 + harmonic / gap);
}

double db_to_linear(double db) { return std::pow(10.0, db / 10.0); }

double linear_to_db(double lin) { return 10.0 * std::log10(lin); }

} // namespace pcsim
