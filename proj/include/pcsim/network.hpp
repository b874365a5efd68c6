#pragma once

// Cellular world generator: hexagonal layouts, user and relay placement,
// path loss with shadowing and block fading, and the uplink / two-slot relay
// problems built on top of it.

#include <cstddef>
#include <cstdint>
#include <cmath>
#include <limits>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "pcsim/problem.hpp"
#include "pcsim/utility.hpp"

namespace pcsim {

struct TopologyConfig {
    std::size_t n_cells = 7;
    std::size_t users_per_cell = 10;
    double cell_radius_m = 500.0;
    double carrier_hz = 1e9;
    double pathloss_exponent = 3.79;
    double shadowing_sigma_db = 9.0;  // 0 disables shadowing
    double antenna_gain_db = 15.0;
    double coherence_time_ms = 10.0;  // +inf: static channel, no fading
    double power_update_interval_ms = 5.0;
    double noise_dbm = -104.0;
    double p_max_dbm = 23.0;
    double p_min_dbm = -std::numeric_limits<double>::infinity(); // -inf: the solver floor
    double self_interference = 1e-4;  // H_ii = kappa * h_i
    double intra_cell_coupling = 0.01; // residual interference between users of the same cell
    double min_distance_m = 1.0;      // users closer than this to their station are redrawn
    bool relays = false;
    double relay_distance_frac = 0.5; // relay sits this fraction of R from its station
    double cross_slot_leakage = 1e-6; // cross-slot coupling as a fraction of the victim's direct gain

    bool fading_enabled() const noexcept { return std::isfinite(coherence_time_ms); }
    std::size_t n_users() const noexcept { return n_cells * users_per_cell; }

    /// Throws ConfigError on the first non-physical field.
    void validate() const;
};

struct Point {
    double x = 0.0;
    double y = 0.0;
};

double distance(const Point& a, const Point& b);

/// Node layout. Nodes are numbered stations, then users, then relays; the
/// shadowing matrix (dB, symmetric) is indexed by that numbering.
struct Deployment {
    std::vector<Point> stations;
    std::vector<Point> users;
    std::vector<Point> relays;       // empty or one per cell
    std::vector<std::size_t> serving; // user -> station
    Matrix shadowing_db;
    std::uint64_t seed = 0;

    std::size_t n_nodes() const noexcept { return stations.size() + users.size() + relays.size(); }
    std::size_t station_node(std::size_t c) const noexcept { return c; }
    std::size_t user_node(std::size_t u) const noexcept { return stations.size() + u; }
    std::size_t relay_node(std::size_t c) const noexcept { return stations.size() + users.size() + c; }
    Point node(std::size_t n) const;
};

/// Hex centers in spiral order (the center cell first, then ring by ring).
std::vector<Point> hex_centers(std::size_t n_cells, double radius);

/// Flat-top hexagon with circumradius R.
bool inside_hexagon(const Point& p, const Point& center, double radius);

Deployment generate_topology(const TopologyConfig& cfg, std::uint64_t seed);

/// Multiplicative fading factors for one coherence block (unit-mean exponential,
/// one draw per unordered node pair).
struct FadingBlock {
    std::int64_t index = 0;
    Matrix factors;
};

struct FadingProcess {
    std::uint64_t seed = 0;
    double coherence_time_ms = 10.0;
    std::size_t n_nodes = 0;

    std::int64_t block_index(double t_ms) const;
    FadingBlock block(std::int64_t index) const;
};

/// The block in force at time t (all-ones when the coherence time is infinite).
FadingBlock evolve_fading(const FadingProcess& proc, double t_ms);

/// Physical gain between two nodes, before fading.
double link_gain(const Deployment& dep, const TopologyConfig& cfg, std::size_t tx, std::size_t rx);

/// Uplink gains: link i is user i transmitting to its serving station.
LinkGains channel_gains(const Deployment& dep, const TopologyConfig& cfg, const FadingBlock* fading = nullptr);

/// Power box in watts from the config.
PowerBounds power_bounds(const TopologyConfig& cfg, std::size_t n);

double dbm_to_watt(double dbm);

// Two-slot relaying ------------------------------------------------------------

enum class RoutingPolicy {
    AllDirect,   // no relaying
    Edge,        // users with below-median direct gain whose relay path is stronger; at most one per cell
};

RoutingPolicy parse_routing(const std::string& name);
std::string to_string(RoutingPolicy r);

/// Per user: relayed or not.
std::vector<bool> choose_routes(const Deployment& dep, const TopologyConfig& cfg, RoutingPolicy policy);

struct RelayProblem {
    LinkGains gains;
    PowerBounds bounds;
    std::vector<RelayRoute> routes;
    std::vector<std::size_t> tx_node; // transmitting node per stacked link
    std::vector<std::size_t> rx_node; // receiving node per stacked link
    std::size_t slot1_links = 0;      // links [0, slot1_links) transmit in slot 1
};

/// Stacked two-slot problem: every user owns one slot-1 and one slot-2 link.
/// Throws ConfigError when a relayed user has no relay.
RelayProblem build_relay_gains(const Deployment& dep, const TopologyConfig& cfg, const std::vector<bool>& relayed,
                               const FadingBlock* fading = nullptr);

std::pair<NormalizedProblem, std::shared_ptr<const RelayUtility>> build_relay_problem(
    const Deployment& dep, const TopologyConfig& cfg, const std::vector<bool>& relayed, double gap,
    double sharpness);

/// Coordinates and association for plotting.
nlohmann::json deployment_to_json(const Deployment& dep);

} // namespace pcsim
