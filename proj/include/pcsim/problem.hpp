#pragma once

// Interference network model: link gains, the normalized problem the solvers
// work on, and the interference/SINR arithmetic shared by every module.

#include <cstddef>
#include <cstdint>
#include <optional>

#include <Eigen/Dense>

namespace pcsim {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

/// Smallest power any solver-facing code will hand to the model (watts).
inline constexpr double kPowerFloor = 1e-12;

/// Raw physical channel. H(i, j) is the gain from transmitter j to receiver i;
/// the diagonal carries self-interference and must be positive.
struct LinkGains {
    Vector h;
    Matrix H;
    Vector eta;

    std::size_t size() const noexcept { return static_cast<std::size_t>(h.size()); }

    /// Throws ConfigError naming the first offending entry.
    void validate() const;
};

/// Per-link transmit power box. An empty p_max means unbounded.
struct PowerBounds {
    Vector p_min;
    std::optional<Vector> p_max;

    static PowerBounds unbounded(std::size_t n);
    static PowerBounds box(Vector p_min, Vector p_max);
    static PowerBounds max_only(Vector p_max);

    bool bounded() const noexcept { return p_max.has_value(); }
    std::size_t size() const noexcept { return static_cast<std::size_t>(p_min.size()); }
};

/// Number of dense V and V^T products performed on the calling thread.
struct OpCounts {
    std::uint64_t forward = 0;
    std::uint64_t transpose = 0;
};

OpCounts op_counts() noexcept;
void reset_op_counts() noexcept;

/// Normalized interference matrix V = D(h)^-1 H, applied matrix-free.
/// Every product is counted in the thread-local OpCounts.
class InterferenceMatrix {
public:
    InterferenceMatrix() = default;
    explicit InterferenceMatrix(Matrix v);

    Vector apply(const Vector& x) const;
    Vector apply_transpose(const Vector& x) const;

    double operator()(std::size_t i, std::size_t j) const { return v_(Eigen::Index(i), Eigen::Index(j)); }
    const Matrix& dense() const noexcept { return v_; }
    std::size_t size() const noexcept { return static_cast<std::size_t>(v_.rows()); }

private:
    Matrix v_;
};

/// The solver's world: V, the normalized noise zeta = D(h)^-1 eta, and the power box.
class NormalizedProblem {
public:
    NormalizedProblem(Matrix v, Vector zeta, PowerBounds bounds);

    const InterferenceMatrix& V() const noexcept { return v_; }
    const Vector& zeta() const noexcept { return zeta_; }
    const PowerBounds& bounds() const noexcept { return bounds_; }
    std::size_t size() const noexcept { return v_.size(); }

    /// True when zeta is identically zero (optimal powers form a scale line).
    bool interference_limited() const noexcept { return interference_limited_; }

    /// Copy with a different power box.
    NormalizedProblem with_bounds(PowerBounds bounds) const;

private:
    InterferenceMatrix v_;
    Vector zeta_;
    PowerBounds bounds_;
    bool interference_limited_ = false;
};

NormalizedProblem normalize(const LinkGains& gains, PowerBounds bounds);
NormalizedProblem normalize(const LinkGains& gains);

struct SinrState {
    Vector p;
    Vector q;
    Vector gamma;
};

/// q = V p + zeta and gamma = p / q. One V product. Throws DomainError on p_i <= 0.
SinrState interference_and_sinr(const NormalizedProblem& prob, const Vector& p);

} // namespace pcsim
