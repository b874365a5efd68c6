#include "pcsim/network.hpp"

#include <algorithm>
#include <array>
#include <optional>
#include <random>
#include <sstream>

#include "pcsim/error.hpp"

namespace pcsim {

namespace {

// splitmix64 finalizer; derives independent stream seeds from one user seed
std::uint64_t mix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

constexpr std::uint64_t kShadowStream = 0x5348414430ULL;
constexpr std::uint64_t kFadingStream = 0x4641444530ULL;

void require(bool ok, const std::string& what) {
    if (!ok) throw ConfigError("topology: " + what);
}

} // namespace

void TopologyConfig::validate() const {
    require(n_cells >= 1, "n_cells must be at least 1");
    require(users_per_cell >= 1, "users_per_cell must be at least 1");
    require(cell_radius_m > 0.0, "cell_radius_m must be positive");
    require(carrier_hz > 0.0, "carrier_hz must be positive");
    require(pathloss_exponent > 0.0, "pathloss_exponent must be positive");
    require(shadowing_sigma_db >= 0.0, "shadowing_sigma_db must be non-negative");
    require(std::isfinite(antenna_gain_db), "antenna_gain_db must be finite");
    require(coherence_time_ms > 0.0, "coherence_time_ms must be positive");
    require(power_update_interval_ms > 0.0, "power_update_interval_ms must be positive");
    require(std::isfinite(noise_dbm), "noise_dbm must be finite");
    require(std::isfinite(p_max_dbm), "p_max_dbm must be finite");
    require(p_min_dbm < p_max_dbm, "p_min_dbm must be below p_max_dbm");
    require(self_interference > 0.0, "self_interference must be positive");
    require(intra_cell_coupling > 0.0 && intra_cell_coupling <= 1.0, "intra_cell_coupling must lie in (0, 1]");
    require(min_distance_m > 0.0 && min_distance_m < cell_radius_m / 2, "min_distance_m out of range");
    require(relay_distance_frac > 0.0 && relay_distance_frac < 1.0, "relay_distance_frac must lie in (0, 1)");
    require(cross_slot_leakage > 0.0, "cross_slot_leakage must be positive");
}

double distance(const Point& a, const Point& b) { return std::hypot(a.x - b.x, a.y - b.y); }

Point Deployment::node(std::size_t n) const {
    if (n < stations.size()) return stations[n];
    n -= stations.size();
    if (n < users.size()) return users[n];
    n -= users.size();
    if (n < relays.size()) return relays[n];
    throw DomainError("deployment: node index out of range");
}

std::vector<Point> hex_centers(std::size_t n_cells, double radius) {
    static constexpr std::array<std::array<int, 2>, 6> kDirs{{{1, 0}, {1, -1}, {0, -1}, {-1, 0}, {-1, 1}, {0, 1}}};
    std::vector<std::array<int, 2>> axial{{0, 0}};
    for (int ring = 1; axial.size() < n_cells; ++ring) {
        std::array<int, 2> cur{kDirs[4][0] * ring, kDirs[4][1] * ring};
        for (const auto& d : kDirs) {
            for (int s = 0; s < ring; ++s) {
                axial.push_back(cur);
                cur = {cur[0] + d[0], cur[1] + d[1]};
            }
        }
    }
    axial.resize(n_cells);

    std::vector<Point> out;
    out.reserve(n_cells);
    const double sq3 = std::sqrt(3.0);
    for (const auto& a : axial)
        out.push_back({radius * 1.5 * a[0], radius * sq3 * (a[1] + 0.5 * a[0])});
    return out;
}

bool inside_hexagon(const Point& p, const Point& center, double radius) {
    const double sq3 = std::sqrt(3.0);
    const double dx = std::abs(p.x - center.x);
    const double dy = std::abs(p.y - center.y);
    return dy <= 0.5 * sq3 * radius && sq3 * dx + dy <= sq3 * radius;
}

Deployment generate_topology(const TopologyConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    Deployment dep;
    dep.seed = seed;
    dep.stations = hex_centers(cfg.n_cells, cfg.cell_radius_m);

    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    const double r = cfg.cell_radius_m;

    if (cfg.relays) {
        for (const auto& bs : dep.stations) {
            const double ang = 2.0 * M_PI * unit(rng);
            const double d = cfg.relay_distance_frac * r;
            dep.relays.push_back({bs.x + d * std::cos(ang), bs.y + d * std::sin(ang)});
        }
    }

    const double half_h = 0.5 * std::sqrt(3.0) * r;
    for (std::size_t c = 0; c < cfg.n_cells; ++c) {
        const Point& bs = dep.stations[c];
        for (std::size_t k = 0; k < cfg.users_per_cell; ++k) {
            Point u;
            while (true) {
                u = {bs.x + r * (2.0 * unit(rng) - 1.0), bs.y + half_h * (2.0 * unit(rng) - 1.0)};
                if (!inside_hexagon(u, bs, r)) continue;
                if (distance(u, bs) < cfg.min_distance_m) continue;
                if (cfg.relays && distance(u, dep.relays[c]) < cfg.min_distance_m) continue;
                break;
            }
            dep.users.push_back(u);
            dep.serving.push_back(c);
        }
    }

    const auto n = Eigen::Index(dep.n_nodes());
    dep.shadowing_db = Matrix::Zero(n, n);
    if (cfg.shadowing_sigma_db > 0.0) {
        std::mt19937_64 srng(mix64(seed ^ kShadowStream));
        std::normal_distribution<double> x(0.0, cfg.shadowing_sigma_db);
        for (Eigen::Index a = 0; a < n; ++a) {
            for (Eigen::Index b = a + 1; b < n; ++b) {
                const double v = x(srng);
                dep.shadowing_db(a, b) = v;
                dep.shadowing_db(b, a) = v;
            }
        }
    }
    return dep;
}

std::int64_t FadingProcess::block_index(double t_ms) const {
    if (!(t_ms >= 0.0)) throw DomainError("fading: time must be non-negative");
    if (!std::isfinite(coherence_time_ms)) return 0;
    return static_cast<std::int64_t>(std::floor(t_ms / coherence_time_ms));
}

FadingBlock FadingProcess::block(std::int64_t index) const {
    const auto n = Eigen::Index(n_nodes);
    FadingBlock b;
    b.index = index;
    b.factors = Matrix::Ones(n, n);
    if (!std::isfinite(coherence_time_ms)) return b;
    std::mt19937_64 rng(mix64(mix64(seed ^ kFadingStream) ^ static_cast<std::uint64_t>(index)));
    std::exponential_distribution<double> draw(1.0);
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index j = i + 1; j < n; ++j) {
            const double f = draw(rng);
            b.factors(i, j) = f;
            b.factors(j, i) = f;
        }
    }
    return b;
}

FadingBlock evolve_fading(const FadingProcess& proc, double t_ms) { return proc.block(proc.block_index(t_ms)); }

double link_gain(const Deployment& dep, const TopologyConfig& cfg, std::size_t tx, std::size_t rx) {
    const double d = distance(dep.node(tx), dep.node(rx));
    if (!(d > 0.0)) {
        std::ostringstream os;
        os << "channel: nodes " << tx << " and " << rx << " are colocated";
        throw ConfigError(os.str());
    }
    const double shadow = dep.shadowing_db(Eigen::Index(tx), Eigen::Index(rx));
    return db_to_linear(cfg.antenna_gain_db + shadow) * std::pow(d, -cfg.pathloss_exponent);
}

namespace {

double faded(const FadingBlock* f, std::size_t tx, std::size_t rx) {
    return f ? f->factors(Eigen::Index(tx), Eigen::Index(rx)) : 1.0;
}

} // namespace

LinkGains channel_gains(const Deployment& dep, const TopologyConfig& cfg, const FadingBlock* fading) {
    const auto n = Eigen::Index(dep.users.size());
    LinkGains g;
    g.h.resize(n);
    g.H.resize(n, n);
    g.eta = Vector::Constant(n, dbm_to_watt(cfg.noise_dbm));
    for (Eigen::Index i = 0; i < n; ++i) {
        const std::size_t rx = dep.station_node(dep.serving[std::size_t(i)]);
        for (Eigen::Index j = 0; j < n; ++j) {
            const std::size_t tx = dep.user_node(std::size_t(j));
            g.H(i, j) = link_gain(dep, cfg, tx, rx) * faded(fading, tx, rx);
            if (j != i && dep.serving[std::size_t(j)] == dep.serving[std::size_t(i)]) g.H(i, j) *= cfg.intra_cell_coupling;
        }
        g.h[i] = g.H(i, i);
        g.H(i, i) = cfg.self_interference * g.h[i];
    }
    g.validate();
    return g;
}

double dbm_to_watt(double dbm) { return std::isinf(dbm) && dbm < 0 ? 0.0 : std::pow(10.0, (dbm - 30.0) / 10.0); }

PowerBounds power_bounds(const TopologyConfig& cfg, std::size_t n) {
    const auto m = Eigen::Index(n);
    return PowerBounds::box(Vector::Constant(m, dbm_to_watt(cfg.p_min_dbm)), Vector::Constant(m, dbm_to_watt(cfg.p_max_dbm)));
}

// Two-slot relaying ------------------------------------------------------------

RoutingPolicy parse_routing(const std::string& name) {
    if (name == "direct" || name == "none") return RoutingPolicy::AllDirect;
    if (name == "edge") return RoutingPolicy::Edge;
    throw ConfigError("routing: unknown policy '" + name + "' (expected direct|edge)");
}

std::string to_string(RoutingPolicy r) { return r == RoutingPolicy::Edge ? "edge" : "direct"; }

std::vector<bool> choose_routes(const Deployment& dep, const TopologyConfig& cfg, RoutingPolicy policy) {
    std::vector<bool> relayed(dep.users.size(), false);
    if (policy == RoutingPolicy::AllDirect) return relayed;
    if (dep.relays.size() != dep.stations.size()) throw ConfigError("routing: edge routing needs one relay per cell");

    for (std::size_t c = 0; c < dep.stations.size(); ++c) {
        std::vector<std::size_t> members;
        for (std::size_t u = 0; u < dep.users.size(); ++u)
            if (dep.serving[u] == c) members.push_back(u);
        std::vector<double> direct;
        for (auto u : members) direct.push_back(link_gain(dep, cfg, dep.user_node(u), dep.station_node(c)));
        std::vector<double> sorted = direct;
        std::nth_element(sorted.begin(), sorted.begin() + std::ptrdiff_t(sorted.size() / 2), sorted.end());
        const double median = sorted[sorted.size() / 2];

        // the relayed path must beat the direct one by the slot-halving factor
        const double hop2 = link_gain(dep, cfg, dep.relay_node(c), dep.station_node(c));
        double best = 2.0;
        std::optional<std::size_t> pick;
        for (std::size_t k = 0; k < members.size(); ++k) {
            if (direct[k] >= median) continue;
            const double hop1 = link_gain(dep, cfg, dep.user_node(members[k]), dep.relay_node(c));
            const double gain = std::min(hop1, hop2) / direct[k];
            if (gain > best) {
                best = gain;
                pick = members[k];
            }
        }
        if (pick) relayed[*pick] = true;
    }
    return relayed;
}

RelayProblem build_relay_gains(const Deployment& dep, const TopologyConfig& cfg, const std::vector<bool>& relayed,
                               const FadingBlock* fading) {
    const std::size_t users = dep.users.size();
    if (relayed.size() != users) throw ConfigError("relay: routing vector length mismatch");
    RelayProblem rp;
    rp.slot1_links = users;
    rp.tx_node.resize(2 * users);
    rp.rx_node.resize(2 * users);
    for (std::size_t u = 0; u < users; ++u) {
        const std::size_t c = dep.serving[u];
        const std::size_t bs = dep.station_node(c);
        if (relayed[u] && c >= dep.relays.size()) {
            std::ostringstream os;
            os << "relay: user " << u << " is routed through an absent relay in cell " << c;
            throw ConfigError(os.str());
        }
        rp.tx_node[u] = dep.user_node(u);
        rp.rx_node[u] = relayed[u] ? dep.relay_node(c) : bs;
        rp.tx_node[users + u] = relayed[u] ? dep.relay_node(c) : dep.user_node(u);
        rp.rx_node[users + u] = bs;

        RelayRoute route;
        route.kind = relayed[u] ? RelayRoute::Kind::Relayed : RelayRoute::Kind::Direct;
        route.first = u;
        route.second = users + u;
        rp.routes.push_back(route);
    }

    const auto n = Eigen::Index(2 * users);
    LinkGains& g = rp.gains;
    g.h.resize(n);
    g.H.resize(n, n);
    g.eta = Vector::Constant(n, dbm_to_watt(cfg.noise_dbm));
    for (Eigen::Index i = 0; i < n; ++i) {
        const std::size_t rx = rp.rx_node[std::size_t(i)];
        const std::size_t tx_own = rp.tx_node[std::size_t(i)];
        g.h[i] = link_gain(dep, cfg, tx_own, rx) * faded(fading, tx_own, rx);
    }
    for (Eigen::Index i = 0; i < n; ++i) {
        const bool slot1_i = std::size_t(i) < users;
        const std::size_t rx = rp.rx_node[std::size_t(i)];
        for (Eigen::Index j = 0; j < n; ++j) {
            const bool slot1_j = std::size_t(j) < users;
            if (i == j) {
                g.H(i, j) = cfg.self_interference * g.h[i];
            } else if (slot1_i != slot1_j) {
                g.H(i, j) = cfg.cross_slot_leakage * g.h[i];
            } else {
                const std::size_t tx = rp.tx_node[std::size_t(j)];
                g.H(i, j) = link_gain(dep, cfg, tx, rx) * faded(fading, tx, rx);
                if (dep.serving[std::size_t(i) % users] == dep.serving[std::size_t(j) % users])
                    g.H(i, j) *= cfg.intra_cell_coupling;
            }
        }
    }
    g.validate();
    rp.bounds = power_bounds(cfg, std::size_t(n));
    return rp;
}

std::pair<NormalizedProblem, std::shared_ptr<const RelayUtility>> build_relay_problem(
    const Deployment& dep, const TopologyConfig& cfg, const std::vector<bool>& relayed, double gap,
    double sharpness) {
    RelayProblem rp = build_relay_gains(dep, cfg, relayed);
    auto u = std::make_shared<const RelayUtility>(rp.gains.size(), rp.routes, gap, sharpness);
    return {normalize(rp.gains, rp.bounds), std::move(u)};
}

nlohmann::json deployment_to_json(const Deployment& dep) {
    auto points = [](const std::vector<Point>& pts) {
        nlohmann::json a = nlohmann::json::array();
        for (const auto& p : pts) a.push_back({p.x, p.y});
        return a;
    };
    return {
        {"seed", dep.seed},
        {"stations", points(dep.stations)},
        {"users", points(dep.users)},
        {"relays", points(dep.relays)},
        {"serving", dep.serving},
    };
}

} // namespace pcsim
