#pragma once

// Utility models U(gamma) with hand-derived gradients and Hessians, plus the
// diagnostics the convergence theory relies on (log-concavity test and the
// curvature bound B that fixes the admissible damping).

#include <cstddef>
#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "pcsim/problem.hpp"

namespace pcsim {

/// A smooth, increasing utility of the SINR vector.
class UtilityModel {
public:
    virtual ~UtilityModel() = default;

    virtual std::string name() const = 0;
    virtual std::size_t size() const = 0;

    virtual double value(const Vector& gamma) const = 0;
    virtual Vector gradient(const Vector& gamma) const = 0;
    virtual Matrix hessian(const Vector& gamma) const = 0;

    /// Component i of the gradient. Default evaluates the whole gradient.
    virtual double partial(const Vector& gamma, std::size_t i) const;

    /// Analytic upper bound on rho[M_U], when one is known.
    virtual std::optional<double> analytic_bound() const { return std::nullopt; }

    /// Sum of per-link terms U_i(gamma_i)? Enables the one-round signaling mode.
    virtual bool separable() const { return false; }

    /// dU_i/dgamma_i from the link's own SINR. Only for separable models.
    virtual double marginal(std::size_t i, double gamma_i) const;

    /// False when gamma sits where the model clamps or loses log-concavity.
    virtual bool in_domain(const Vector& gamma) const;
};

using UtilityPtr = std::shared_ptr<const UtilityModel>;

/// U = sum_i w_i log gamma_i (weights default to one).
class SumLogSinrUtility final : public UtilityModel {
public:
    explicit SumLogSinrUtility(std::size_t n);
    explicit SumLogSinrUtility(Vector weights);

    std::string name() const override { return "sum_log_sinr"; }
    std::size_t size() const override { return std::size_t(w_.size()); }
    double value(const Vector& gamma) const override;
    Vector gradient(const Vector& gamma) const override;
    Matrix hessian(const Vector& gamma) const override;
    double partial(const Vector& gamma, std::size_t i) const override;
    std::optional<double> analytic_bound() const override { return 1.0; }
    bool separable() const override { return true; }
    double marginal(std::size_t i, double gamma_i) const override;

private:
    Vector w_;
};

/// U = sum_i w_i log(log2(1 + gamma_i / Gamma)), Gamma >= 1 the SINR gap.
/// Below gamma/Gamma = 1e-9 the term continues log-linearly in gamma and in_domain() reports false.
class LogRateUtility final : public UtilityModel {
public:
    static constexpr double kMinRatio = 1e-9;

    LogRateUtility(std::size_t n, double gap);
    LogRateUtility(Vector weights, double gap);

    std::string name() const override { return "log_rate"; }
    std::size_t size() const override { return std::size_t(w_.size()); }
    double gap() const noexcept { return gap_; }
    const Vector& weights() const noexcept { return w_; }

    double value(const Vector& gamma) const override;
    Vector gradient(const Vector& gamma) const override;
    Matrix hessian(const Vector& gamma) const override;
    double partial(const Vector& gamma, std::size_t i) const override;
    std::optional<double> analytic_bound() const override { return 2.0; }
    bool separable() const override { return true; }
    double marginal(std::size_t i, double gamma_i) const override;
    bool in_domain(const Vector& gamma) const override;

private:
    Vector w_;
    double gap_;
};

/// U = sum_i gamma_i. Increasing but not log-concave; used as a negative control.
class SumSinrUtility final : public UtilityModel {
public:
    explicit SumSinrUtility(std::size_t n) : n_(n) {}

    std::string name() const override { return "sum_sinr"; }
    std::size_t size() const override { return n_; }
    double value(const Vector& gamma) const override { return gamma.sum(); }
    Vector gradient(const Vector& gamma) const override { return Vector::Ones(gamma.size()); }
    Matrix hessian(const Vector& gamma) const override { return Matrix::Zero(gamma.size(), gamma.size()); }
    bool separable() const override { return true; }
    double marginal(std::size_t, double) const override { return 1.0; }

private:
    std::size_t n_;
};

/// How one logical user's message reaches the base station in the two-slot relay scheme.
struct RelayRoute {
    enum class Kind { Direct, Relayed };
    Kind kind = Kind::Direct;
    std::size_t first = 0;  // slot-1 link: user -> BS (direct) or user -> relay
    std::size_t second = 0; // slot-2 link: user -> BS (direct) or relay -> BS
    double weight = 1.0;
};

/// Sum over users of log R_u. Relayed users use R = 1/2 log2(1 + smin(g_wr, g_rb)/Gamma);
/// direct users use the bound R = log2(1 + g'/Gamma) with g' the harmonic mean of both slots.
class RelayUtility final : public UtilityModel {
public:
    RelayUtility(std::size_t n_links, std::vector<RelayRoute> routes, double gap, double sharpness);

    std::string name() const override { return "relay"; }
    std::size_t size() const override { return n_; }
    const std::vector<RelayRoute>& routes() const noexcept { return routes_; }
    double gap() const noexcept { return gap_; }
    double sharpness() const noexcept { return k_; }

    double value(const Vector& gamma) const override;
    Vector gradient(const Vector& gamma) const override;
    Matrix hessian(const Vector& gamma) const override;
    bool in_domain(const Vector& gamma) const override;

    /// Per-user rates in bits, same order as routes().
    std::vector<double> user_rates(const Vector& gamma) const;

    /// Sum of w log R with the exact min for relayed users and the two-slot
    /// average rate for direct users (what a run actually delivers).
    double realized_value(const Vector& gamma) const;

private:
    std::size_t n_;
    std::vector<RelayRoute> routes_;
    double gap_;
    double k_;
};

// Diagnostics ---------------------------------------------------------------

struct LogConcavityCheck {
    bool ok = false;
    double worst_eig = 0.0; // largest eigenvalue of D(g) H D(g) + D(g) D(grad)
};

inline constexpr double kLogConcavityTol = 1e-9;

/// Tests D(gamma) Hess D(gamma) + D(gamma) D(grad) <= 0 at one SINR vector.
LogConcavityCheck check_log_concavity(const UtilityModel& u, const Vector& gamma);

/// rho[M_U] with M_U = D(gamma/grad)^1/2 Hess D(gamma/grad)^1/2 at one SINR vector.
double curvature_ratio(const UtilityModel& u, const Vector& gamma);

/// Max of curvature_ratio over the samples, never below the model's analytic bound.
/// Throws DomainError on an empty sample set.
double estimate_B(const UtilityModel& u, const std::vector<Vector>& gamma_samples);

/// Log-uniform SINR draws over [lo, hi]^n.
std::vector<Vector> log_uniform_samples(std::size_t n, std::size_t count, double lo, double hi,
                                        std::uint64_t seed);

struct UtilityDiagnostics {
    double B_estimate = 0.0;
    bool log_concave_ok = false;
    double worst_violation = 0.0;
};

/// Both diagnostics over the default grid (200 draws, [1e-3, 1e3]^n) or a custom range.
UtilityDiagnostics diagnose(const UtilityModel& u, std::size_t draws = 200, double lo = 1e-3, double hi = 1e3,
                            std::uint64_t seed = 1);

/// Damping bound 1 / (2B - 1).
double theta_max(double B);

// Relay helpers ---------------------------------------------------------------

/// -(1/k) log(e^{-kx} + e^{-ky}), evaluated with a max shift.
double smooth_min(double x, double y, double k);

struct RateResult {
    double bits = 0.0;
    bool domain_warning = false; // smooth-min argument at or below 1/k
};

/// Decode-and-forward rate 1/2 log2(1 + min(g_wr, g_rb)/Gamma); exact min when k is empty.
RateResult relay_rate(double gamma_wr, double gamma_rb, double gap, std::optional<double> k);

/// Upper bound log2(1 + g'/Gamma) with g' = 2 / (1/g_1 + 1/g_2).
double direct_rate_bound(double gamma_slot1, double gamma_slot2, double gap);

double db_to_linear(double db);
double linear_to_db(double lin);

} // namespace pcsim
