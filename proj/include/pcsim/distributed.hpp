#pragma once

// Message-level simulation of the two-round broadcast algorithm: every node
// keeps only local state, reads only its own gain column, and the simulator
// counts every broadcast. Also hosts the fading-tracking experiment.

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "pcsim/network.hpp"
#include "pcsim/problem.hpp"
#include "pcsim/solver.hpp"
#include "pcsim/utility.hpp"

namespace pcsim {

enum class SignalingMode {
    General, // gamma round then kappa round: 2N broadcasts
    Num,     // separable utility, kappa round only: N broadcasts
};

SignalingMode parse_signaling(const std::string& name);
std::string to_string(SignalingMode m);

struct NodeState {
    double p = 0.0;
    double q = 0.0;     // normalized interference, measured
    double gamma = 0.0;
    double alpha = 0.0;
    double kappa = 0.0; // gamma * alpha / h
    double phi = 0.0;
    double eps = 0.0;   // damped defect of the last update
    double theta = 0.0;
    std::size_t k = 1;
    std::size_t c = 1;
    double h = 0.0;
    double p_min = 0.0;
    std::optional<double> p_max;
};

/// Counts of non-local accesses caught by LocalGainView.
struct AccessAudit {
    std::size_t local_reads = 0;
    std::size_t violations = 0;
};

/// Node i's window onto the channel: its direct gain and the column H(:, i),
/// i.e. how strongly its own transmission reaches every other receiver.
class LocalGainView {
public:
    LocalGainView(const LinkGains& truth, std::size_t owner, AccessAudit& audit)
        : truth_(&truth), owner_(owner), audit_(&audit) {}

    /// H(j, owner).
    double column(std::size_t j) const;

    /// H(row, col); anything outside the owner's column records a violation and throws ContractViolation.
    double entry(std::size_t row, std::size_t col) const;

    double direct() const;

private:
    const LinkGains* truth_;
    std::size_t owner_;
    AccessAudit* audit_;
};

struct RoundCount {
    std::size_t iter = 0;
    std::size_t gamma_msgs = 0;
    std::size_t kappa_msgs = 0;
};

struct MessageLog {
    std::vector<RoundCount> rounds;
    std::size_t total_gamma = 0;
    std::size_t total_kappa = 0;

    std::size_t total() const noexcept { return total_gamma + total_kappa; }
};

/// Initial node states from the power policy in cfg (clamped into the box).
std::vector<NodeState> init_nodes(const LinkGains& truth, const PowerBounds& bounds, const SolverConfig& cfg);

/// One lockstep iteration: measure q, broadcast rounds, local phi, damped clamped update,
/// then each node advances its own theta schedule. Returns the largest node defect.
double run_round(std::vector<NodeState>& nodes, const LinkGains& truth, const UtilityModel& u, SignalingMode mode,
                 std::size_t halving_period, MessageLog& log, AccessAudit& audit);

struct DistributedResult {
    Vector p;
    std::vector<NodeState> nodes;
    MessageLog log;
    AccessAudit audit;
    std::vector<Vector> powers; // p_0..p_K when cfg.record_powers
    std::size_t iterations = 0;
    Termination termination = Termination::MaxIterations;
    bool converged = false;
};

/// Runs rounds until every node's defect is at most tol. Only clamped modes are supported.
DistributedResult run_until_converged(const LinkGains& truth, const PowerBounds& bounds, const UtilityModel& u,
                                      const SolverConfig& cfg, SignalingMode mode);

// Fading tracking --------------------------------------------------------------------

enum class TrackSchedule {
    Instant,       // powers re-optimized on the channel in force at each update
    HalfCoherence, // powers refreshed every update interval, off the block boundaries
    PathlossOnly,  // powers optimized once on the fading-free channel
};

std::string to_string(TrackSchedule s);
TrackSchedule parse_schedule(const std::string& name);
inline constexpr TrackSchedule kAllSchedules[] = {TrackSchedule::Instant, TrackSchedule::HalfCoherence,
                                                 TrackSchedule::PathlossOnly};

struct TrackSample {
    double t_ms = 0.0;
    TrackSchedule schedule = TrackSchedule::Instant;
    double utility = 0.0; // on the true channel at t
    std::size_t iters_used = 0;
};

struct TrackingConfig {
    std::size_t blocks = 100;
    SolverConfig solver; // p0 is ignored: runs are warm-started
};

/// Utility sampled every half update interval over `blocks` coherence blocks.
std::vector<TrackSample> tracking_experiment(const Deployment& dep, const TopologyConfig& topo, const UtilityModel& u,
                                             TrackSchedule schedule, const TrackingConfig& cfg);

struct BlockRestart {
    std::int64_t block = 0;
    std::size_t warm_iters = 0;
    std::size_t cold_iters = 0;
    std::optional<std::size_t> warm_band_iters; // first iteration within 5% of the block optimum
    std::optional<std::size_t> cold_band_iters;
};

/// Per block: iterations to converge from the previous block's powers versus from p_max.
std::vector<BlockRestart> warm_vs_cold(const Deployment& dep, const TopologyConfig& topo, const UtilityModel& u,
                                       const TrackingConfig& cfg);

} // namespace pcsim
