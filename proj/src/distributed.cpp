#include "pcsim/distributed.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "pcsim/error.hpp"

namespace pcsim {

SignalingMode parse_signaling(const std::string& name) {
    if (name == "general") return SignalingMode::General;
    if (name == "num") return SignalingMode::Num;
    throw ConfigError("signaling: unknown mode '" + name + "' (expected general|num)");
}

std::string to_string(SignalingMode m) { return m == SignalingMode::Num ? "num" : "general"; }

double LocalGainView::column(std::size_t j) const {
    ++audit_->local_reads;
    return truth_->H(Eigen::Index(j), Eigen::Index(owner_));
}

double LocalGainView::entry(std::size_t row, std::size_t col) const {
    if (col != owner_) {
        ++audit_->violations;
        std::ostringstream os;
        os << "node " << owner_ << " read non-local gain H(" << row << ", " << col << ")";
        throw ContractViolation(os.str());
    }
    return column(row);
}

double LocalGainView::direct() const {
    ++audit_->local_reads;
    return truth_->h[Eigen::Index(owner_)];
}

std::vector<NodeState> init_nodes(const LinkGains& truth, const PowerBounds& bounds, const SolverConfig& cfg) {
    const NormalizedProblem prob = normalize(truth, bounds);
    cfg.validate(prob);
    if (cfg.mode == SolveMode::UnconstrainedNormalized)
        throw ConfigError("distributed: the normalized mode needs a global norm and is not supported");
    const PowerBounds box = effective_bounds(prob, cfg.mode);
    const Vector p0 = clamp_box(cfg.p0 ? *cfg.p0 : default_initial_power(prob), box.p_min, box.p_max);

    std::vector<NodeState> nodes(truth.size());
    for (std::size_t i = 0; i < nodes.size(); ++i) {
        const auto ii = Eigen::Index(i);
        NodeState& n = nodes[i];
        n.p = p0[ii];
        n.h = truth.h[ii];
        n.theta = cfg.theta0;
        n.p_min = box.p_min[ii];
        if (box.p_max) n.p_max = (*box.p_max)[ii];
    }
    return nodes;
}

namespace {

// Ideal receiver measurement of the normalized interference at every destination.
void measure(std::vector<NodeState>& nodes, const LinkGains& truth) {
    const auto n = Eigen::Index(nodes.size());
    Vector p(n);
    for (Eigen::Index j = 0; j < n; ++j) p[j] = nodes[std::size_t(j)].p;
    const Vector received = truth.H * p + truth.eta;
    for (Eigen::Index i = 0; i < n; ++i) {
        NodeState& s = nodes[std::size_t(i)];
        s.q = received[i] / truth.h[i];
        s.gamma = s.p / s.q;
    }
}

} // namespace

double run_round(std::vector<NodeState>& nodes, const LinkGains& truth, const UtilityModel& u, SignalingMode mode,
                 std::size_t halving_period, MessageLog& log, AccessAudit& audit) {
    const std::size_t n = nodes.size();
    if (mode == SignalingMode::Num && !u.separable())
        throw ConfigError("distributed: one-round signaling requires a separable utility");
    measure(nodes, truth);

    RoundCount count;
    count.iter = log.rounds.size();

    // round 1: SINR broadcast, needed only when a node's marginal depends on other links
    if (mode == SignalingMode::General) {
        Vector gamma_bcast(static_cast<Eigen::Index>(n));
        for (std::size_t i = 0; i < n; ++i) gamma_bcast[Eigen::Index(i)] = nodes[i].gamma;
        count.gamma_msgs = n;
        for (std::size_t i = 0; i < n; ++i) nodes[i].alpha = u.partial(gamma_bcast, i) / nodes[i].q;
    } else {
        for (std::size_t i = 0; i < n; ++i) nodes[i].alpha = u.marginal(i, nodes[i].gamma) / nodes[i].q;
    }
    for (std::size_t i = 0; i < n; ++i) {
        if (!(nodes[i].alpha > 0.0)) {
            std::ostringstream os;
            os << u.name() << ": node " << i << " computed a non-positive marginal";
            throw ContractViolation(os.str());
        }
    }

    // round 2: kappa broadcast
    std::vector<double> kappa_bcast(n);
    for (std::size_t i = 0; i < n; ++i) {
        LocalGainView view(truth, i, audit);
        nodes[i].kappa = nodes[i].gamma * nodes[i].alpha / view.direct();
        kappa_bcast[i] = nodes[i].kappa;
    }
    count.kappa_msgs = n;

    double worst = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        NodeState& s = nodes[i];
        LocalGainView view(truth, i, audit);
        double denom = 0.0;
        for (std::size_t j = 0; j < n; ++j) denom += view.column(j) * kappa_bcast[j];
        s.phi = s.alpha / denom;

        s.eps = coordinate_defect(s.p, s.phi, s.theta, s.p_min, s.p_max);
        worst = std::max(worst, s.eps);
        double next = s.p * (s.theta * s.phi + (1.0 - s.theta));
        next = std::max(next, s.p_min);
        if (s.p_max) next = std::min(next, *s.p_max);
        s.p = next;

        if (halving_period > 0 && s.k > s.c * halving_period) {
            s.theta *= 0.5;
            ++s.c;
        }
        ++s.k;
    }

    log.total_gamma += count.gamma_msgs;
    log.total_kappa += count.kappa_msgs;
    log.rounds.push_back(count);
    return worst;
}

DistributedResult run_until_converged(const LinkGains& truth, const PowerBounds& bounds, const UtilityModel& u,
                                      const SolverConfig& cfg, SignalingMode mode) {
    DistributedResult r;
    r.nodes = init_nodes(truth, bounds, cfg);
    auto snapshot = [&] {
        Vector p(static_cast<Eigen::Index>(r.nodes.size()));
        for (std::size_t i = 0; i < r.nodes.size(); ++i) p[Eigen::Index(i)] = r.nodes[i].p;
        return p;
    };
    if (cfg.record_powers) r.powers.push_back(snapshot());

    for (std::size_t k = 0; k < cfg.max_iter; ++k) {
        const double worst = run_round(r.nodes, truth, u, mode, cfg.halving_period, r.log, r.audit);
        if (!std::isfinite(worst)) throw NumericalError("distributed: non-finite update", k + 1);
        if (cfg.record_powers) r.powers.push_back(snapshot());
        r.iterations = k + 1;
        if (worst <= cfg.tol) {
            r.termination = Termination::Converged;
            break;
        }
        if (r.nodes.front().theta < kMinTheta) {
            r.termination = Termination::Stalled;
            break;
        }
    }
    r.converged = r.termination == Termination::Converged;
    r.p = snapshot();
    return r;
}

// Fading tracking --------------------------------------------------------------------

std::string to_string(TrackSchedule s) {
    switch (s) {
    case TrackSchedule::Instant: return "instant";
    case TrackSchedule::HalfCoherence: return "half-coherence";
    case TrackSchedule::PathlossOnly: return "pathloss-only";
    }
    return "unknown";
}

TrackSchedule parse_schedule(const std::string& name) {
    for (auto s : kAllSchedules)
        if (to_string(s) == name) return s;
    throw ConfigError("tracking: unknown schedule '" + name + "'");
}

namespace {

struct ChannelAt {
    const Deployment& dep;
    const TopologyConfig& topo;
    FadingProcess proc;

    NormalizedProblem at(double t_ms) const {
        const FadingBlock block = evolve_fading(proc, t_ms);
        return normalize(channel_gains(dep, topo, &block), power_bounds(topo, dep.users.size()));
    }
    NormalizedProblem in_block(std::int64_t b) const {
        const FadingBlock block = proc.block(b);
        return normalize(channel_gains(dep, topo, &block), power_bounds(topo, dep.users.size()));
    }
    NormalizedProblem mean_channel() const {
        return normalize(channel_gains(dep, topo), power_bounds(topo, dep.users.size()));
    }
};

ChannelAt make_channel(const Deployment& dep, const TopologyConfig& topo) {
    return {dep, topo, FadingProcess{dep.seed, topo.coherence_time_ms, dep.n_nodes()}};
}

SolveResult warm_solve(const NormalizedProblem& prob, const UtilityModel& u, SolverConfig cfg,
                       const std::optional<Vector>& p0) {
    cfg.p0 = p0;
    cfg.record_powers = false;
    return run_solver(prob, u, cfg);
}

} // namespace

std::vector<TrackSample> tracking_experiment(const Deployment& dep, const TopologyConfig& topo, const UtilityModel& u,
                                             TrackSchedule schedule, const TrackingConfig& cfg) {
    topo.validate();
    const double dt = topo.power_update_interval_ms;
    if (topo.fading_enabled() && dt > topo.coherence_time_ms)
        throw ConfigError("tracking: the update interval exceeds the coherence time");
    const double horizon = topo.fading_enabled() ? double(cfg.blocks) * topo.coherence_time_ms
                                                 : double(cfg.blocks) * 2.0 * dt;
    // Utility is sampled every half update interval. Half-coherence updates fall on the odd
    // samples, so they are not aligned with block boundaries and powers can lag a channel change.
    const double step = 0.5 * dt;
    const auto samples = std::size_t(std::llround(horizon / step));
    const ChannelAt channel = make_channel(dep, topo);

    std::vector<TrackSample> out;
    out.reserve(samples);
    std::optional<Vector> p;
    for (std::size_t n = 0; n < samples; ++n) {
        const double t = double(n) * step;
        const NormalizedProblem truth = channel.at(t);
        TrackSample sample;
        sample.t_ms = t;
        sample.schedule = schedule;

        bool update = false;
        switch (schedule) {
        case TrackSchedule::Instant: update = true; break;
        case TrackSchedule::HalfCoherence: update = n % 2 == 1 || !p; break;
        case TrackSchedule::PathlossOnly: update = !p; break;
        }
        if (update) {
            const SolveResult r = schedule == TrackSchedule::PathlossOnly
                                      ? warm_solve(channel.mean_channel(), u, cfg.solver, std::nullopt)
                                      : warm_solve(truth, u, cfg.solver, p);
            p = r.p;
            sample.iters_used = r.trace.iterations;
        }
        sample.utility = utility_at(truth, u, *p);
        out.push_back(sample);
    }
    return out;
}

std::vector<BlockRestart> warm_vs_cold(const Deployment& dep, const TopologyConfig& topo, const UtilityModel& u,
                                       const TrackingConfig& cfg) {
    const ChannelAt channel = make_channel(dep, topo);
    std::vector<BlockRestart> out;
    std::optional<Vector> previous;
    for (std::size_t b = 0; b < cfg.blocks; ++b) {
        const NormalizedProblem prob = channel.in_block(std::int64_t(b));
        SolveResult cold = warm_solve(prob, u, cfg.solver, std::nullopt);
        if (previous) {
            SolveResult warm = warm_solve(prob, u, cfg.solver, previous);
            const double reference = std::max(warm.utility, cold.utility);
            BlockRestart row;
            row.block = std::int64_t(b);
            row.warm_iters = warm.trace.iterations;
            row.cold_iters = cold.trace.iterations;
            row.warm_band_iters = iterations_to_within(warm.trace, warm.utility, reference, 5.0);
            row.cold_band_iters = iterations_to_within(cold.trace, cold.utility, reference, 5.0);
            out.push_back(row);
        }
        previous = cold.p;
    }
    return out;
}

} // namespace pcsim
