#pragma once

// Scenario files and problem documents. Everything here is JSON; dB values
// are converted at this boundary and nowhere else.

#include <cstdint>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include <json.hpp>

#include "pcsim/distributed.hpp"
#include "pcsim/network.hpp"
#include "pcsim/oracle.hpp"
#include "pcsim/problem.hpp"
#include "pcsim/solver.hpp"
#include "pcsim/utility.hpp"

namespace pcsim {

// Problem documents ----------------------------------------------------------------

struct ProblemInstance {
    LinkGains gains;
    PowerBounds bounds;
};

/// {"h", "H", "eta", "p_min", "p_max"}; "p_max": null means unbounded.
nlohmann::json problem_to_json(const LinkGains& gains, const PowerBounds& bounds);
ProblemInstance problem_from_json(const nlohmann::json& doc);

// Scenario config --------------------------------------------------------------------

enum class UtilityKind { SumLogSinr, LogRate, Relay, SumSinr };

std::string to_string(UtilityKind k);

enum class InitialPower { Max, Random, Explicit };

struct UtilitySpec {
    UtilityKind kind = UtilityKind::LogRate;
    double gamma_gap_db = 7.0;
    std::optional<std::vector<double>> weights;
    double smooth_min_k = 5.0;
    RoutingPolicy routing = RoutingPolicy::Edge;
    std::optional<std::vector<bool>> explicit_routes;
};

struct Scenario {
    std::string name = "unnamed";
    std::optional<TopologyConfig> topology; // exactly one of topology / instance
    std::optional<ProblemInstance> instance;
    UtilitySpec utility;
    SolverConfig solver;
    bool theta_auto = false;          // theta0 = min(0.9 theta_max(B), 0.5)
    InitialPower p0 = InitialPower::Max;
    double random_p0_decades = 3.0;   // random p0 is log-uniform in [p_max 10^-d, p_max]
    bool distributed = false;         // solve through the message-level simulator
    SignalingMode signaling = SignalingMode::General;
    OracleOptions oracle;
    std::size_t blocks = 100;         // tracking horizon in coherence blocks
};

/// Parses a scenario document. Unknown keys and type mismatches raise ConfigError naming the key.
Scenario scenario_from_json(const nlohmann::json& doc);

/// Reads and parses a scenario file; JSON syntax errors report line and column.
Scenario load_scenario(const std::string& path);

/// Reads a file into a JSON document (ConfigError with line/column on syntax errors).
nlohmann::json read_json_file(const std::string& path);

/// A concrete problem for one seed.
struct Instance {
    LinkGains gains;
    PowerBounds bounds;
    NormalizedProblem prob;
    UtilityPtr utility;
    std::optional<Deployment> deployment;
    std::shared_ptr<const RelayUtility> relay; // set for relay utilities
};

/// Builds the fading-free problem for a seed (inline instances ignore the seed).
Instance build_instance(const Scenario& sc, std::uint64_t seed);

/// Utility model for n links (not relay; relay utilities come with their stacked problem).
UtilityPtr make_utility(const UtilitySpec& spec, std::size_t n);

/// Solver config for a seed: theta0 resolved and p0 drawn according to the policy.
SolverConfig solver_config_for(const Scenario& sc, const Instance& inst, std::uint64_t seed);

/// Labels of the defaults that are not taken from the reference experiments.
nlohmann::json non_reference_defaults(const Scenario& sc);

} // namespace pcsim
