#include "pcsim/io.hpp"

#include <cmath>
#include <fstream>
#include <limits>
#include <random>
#include <set>
#include <sstream>

#include "pcsim/error.hpp"

namespace pcsim {

using nlohmann::json;

namespace {

// Reads one JSON object, remembering which keys were consumed so leftovers can be reported.
class Section {
public:
    Section(const json& obj, std::string path) : obj_(obj), path_(std::move(path)) {
        if (!obj_.is_object()) throw ConfigError("config: '" + label() + "' must be an object");
    }

    bool has(const std::string& key) const { return obj_.contains(key); }

    const json& raw(const std::string& key) {
        seen_.insert(key);
        return obj_.at(key);
    }

    const json& required(const std::string& key) {
        if (!has(key)) throw ConfigError("config: missing required key '" + qualified(key) + "'");
        return raw(key);
    }

    double number(const std::string& key, double fallback) {
        if (!has(key)) return fallback;
        const json& v = raw(key);
        if (!v.is_number()) throw ConfigError("config: key '" + qualified(key) + "' must be a number");
        return v.get<double>();
    }

    // null stands for an infinite value with the given sign
    double number_or_inf(const std::string& key, double fallback, double null_value) {
        if (has(key) && obj_.at(key).is_null()) {
            seen_.insert(key);
            return null_value;
        }
        return number(key, fallback);
    }

    std::size_t count(const std::string& key, std::size_t fallback) {
        if (!has(key)) return fallback;
        const json& v = raw(key);
        if (!v.is_number_integer() || v.get<long long>() < 0)
            throw ConfigError("config: key '" + qualified(key) + "' must be a non-negative integer");
        return v.get<std::size_t>();
    }

    bool flag(const std::string& key, bool fallback) {
        if (!has(key)) return fallback;
        const json& v = raw(key);
        if (!v.is_boolean()) throw ConfigError("config: key '" + qualified(key) + "' must be true or false");
        return v.get<bool>();
    }

    std::string text(const std::string& key, const std::string& fallback) {
        if (!has(key)) return fallback;
        const json& v = raw(key);
        if (!v.is_string()) throw ConfigError("config: key '" + qualified(key) + "' must be a string");
        return v.get<std::string>();
    }

    std::string qualified(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

    void finish() const {
        for (const auto& [key, _] : obj_.items())
            if (!seen_.count(key)) throw ConfigError("config: unknown key '" + qualified(key) + "'");
    }

private:
    std::string label() const { return path_.empty() ? "<root>" : path_; }

    const json& obj_;
    std::string path_;
    std::set<std::string> seen_;
};

std::vector<double> number_list(const json& v, const std::string& key) {
    if (!v.is_array()) throw ConfigError("config: key '" + key + "' must be an array of numbers");
    std::vector<double> out;
    for (const auto& e : v) {
        if (!e.is_number()) throw ConfigError("config: key '" + key + "' must be an array of numbers");
        out.push_back(e.get<double>());
    }
    return out;
}

Vector to_vector(const std::vector<double>& xs) {
    Vector v(static_cast<Eigen::Index>(xs.size()));
    for (std::size_t i = 0; i < xs.size(); ++i) v[Eigen::Index(i)] = xs[i];
    return v;
}

json vector_json(const Vector& v) {
    json a = json::array();
    for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v[i]);
    return a;
}

TopologyConfig parse_topology(const json& doc) {
    Section s(doc, "topology");
    TopologyConfig t;
    const double inf = std::numeric_limits<double>::infinity();
    t.n_cells = s.count("n_cells", t.n_cells);
    t.users_per_cell = s.count("users_per_cell", t.users_per_cell);
    t.cell_radius_m = s.number("cell_radius_m", t.cell_radius_m);
    t.carrier_hz = s.number("carrier_hz", t.carrier_hz);
    t.pathloss_exponent = s.number("pathloss_exponent", t.pathloss_exponent);
    t.shadowing_sigma_db = s.number("shadowing_sigma_db", t.shadowing_sigma_db);
    t.antenna_gain_db = s.number("antenna_gain_db", t.antenna_gain_db);
    t.coherence_time_ms = s.number_or_inf("coherence_time_ms", t.coherence_time_ms, inf);
    t.power_update_interval_ms = s.number("power_update_interval_ms", t.power_update_interval_ms);
    t.noise_dbm = s.number("noise_dbm", t.noise_dbm);
    t.p_max_dbm = s.number("p_max_dbm", t.p_max_dbm);
    t.p_min_dbm = s.number_or_inf("p_min_dbm", t.p_min_dbm, -inf);
    t.self_interference = s.number("self_interference", t.self_interference);
    t.intra_cell_coupling = s.number("intra_cell_coupling", t.intra_cell_coupling);
    t.min_distance_m = s.number("min_distance_m", t.min_distance_m);
    t.relays = s.flag("relays", t.relays);
    t.relay_distance_frac = s.number("relay_distance_frac", t.relay_distance_frac);
    t.cross_slot_leakage = s.number("cross_slot_leakage", t.cross_slot_leakage);
    s.finish();
    try {
        t.validate();
    } catch (const ConfigError& e) {
        throw ConfigError(std::string("config: topology: ") + e.what());
    }
    return t;
}

SolveMode parse_mode(const std::string& name) {
    if (name == "normalized") return SolveMode::UnconstrainedNormalized;
    if (name == "max") return SolveMode::MaxClamped;
    if (name == "minmax") return SolveMode::MinMaxClamped;
    throw ConfigError("config: key 'solver.mode' must be normalized|max|minmax, got '" + name + "'");
}

void parse_solver(const json& doc, Scenario& sc) {
    Section s(doc, "solver");
    SolverConfig& c = sc.solver;
    if (s.has("theta0") && s.raw("theta0").is_string()) {
        if (doc.at("theta0").get<std::string>() != "auto")
            throw ConfigError("config: key 'solver.theta0' must be a number or \"auto\"");
        sc.theta_auto = true;
    } else {
        c.theta0 = s.number("theta0", c.theta0);
    }
    c.halving_period = s.count("halving_period", c.halving_period);
    c.tol = s.number("tol", c.tol);
    c.max_iter = s.count("max_iter", c.max_iter);
    c.mode = parse_mode(s.text("mode", "minmax"));

    const std::string sweep = s.text("sweep", "sync");
    if (sweep == "sync") c.sweep = SweepKind::Synchronous;
    else if (sweep == "async") c.sweep = SweepKind::Asynchronous;
    else throw ConfigError("config: key 'solver.sweep' must be sync|async");

    const std::string order = s.text("order", "ascending");
    if (order == "ascending") c.order = AsyncOrder::Ascending;
    else if (order == "random") c.order = AsyncOrder::RandomPermutation;
    else throw ConfigError("config: key 'solver.order' must be ascending|random");
    c.check_concavity = s.flag("check_concavity", c.check_concavity);

    if (s.has("p0")) {
        const json& v = s.raw("p0");
        if (v.is_string()) {
            const auto name = v.get<std::string>();
            if (name == "max") sc.p0 = InitialPower::Max;
            else if (name == "random") sc.p0 = InitialPower::Random;
            else throw ConfigError("config: key 'solver.p0' must be max|random or an array");
        } else {
            sc.p0 = InitialPower::Explicit;
            c.p0 = to_vector(number_list(v, "solver.p0"));
        }
    }
    sc.random_p0_decades = s.number("random_p0_decades", sc.random_p0_decades);
    if (!(sc.random_p0_decades > 0.0)) throw ConfigError("config: key 'solver.random_p0_decades' must be positive");
    if (!(c.theta0 > 0.0 && c.theta0 <= 1.0)) throw ConfigError("config: key 'solver.theta0' must lie in (0, 1]");
    if (!(c.tol > 0.0)) throw ConfigError("config: key 'solver.tol' must be positive");
    if (c.max_iter == 0) throw ConfigError("config: key 'solver.max_iter' must be positive");
    s.finish();
}

void parse_oracle(const json& doc, OracleOptions& o) {
    Section s(doc, "oracle");
    o.tol = s.number("tol", o.tol);
    o.max_iter = s.count("max_iter", o.max_iter);
    o.memory = s.count("memory", o.memory);
    if (o.memory == 0) throw ConfigError("config: key 'oracle.memory' must be positive");
    s.finish();
}

UtilityKind parse_utility_kind(const std::string& name) {
    if (name == "sum_log_sinr") return UtilityKind::SumLogSinr;
    if (name == "log_rate") return UtilityKind::LogRate;
    if (name == "relay") return UtilityKind::Relay;
    if (name == "sum_sinr") return UtilityKind::SumSinr;
    throw ConfigError("config: key 'utility' must be sum_log_sinr|log_rate|relay|sum_sinr, got '" + name + "'");
}

} // namespace

std::string to_string(UtilityKind k) {
    switch (k) {
    case UtilityKind::SumLogSinr: return "sum_log_sinr";
    case UtilityKind::LogRate: return "log_rate";
    case UtilityKind::Relay: return "relay";
    case UtilityKind::SumSinr: return "sum_sinr";
    }
    return "unknown";
}

json problem_to_json(const LinkGains& gains, const PowerBounds& bounds) {
    json H = json::array();
    for (Eigen::Index i = 0; i < gains.H.rows(); ++i) H.push_back(vector_json(gains.H.row(i).transpose()));
    return {
        {"h", vector_json(gains.h)},
        {"H", H},
        {"eta", vector_json(gains.eta)},
        {"p_min", vector_json(bounds.p_min)},
        {"p_max", bounds.p_max ? vector_json(*bounds.p_max) : json(nullptr)},
    };
}

ProblemInstance problem_from_json(const json& doc) {
    Section s(doc, "problem");
    ProblemInstance inst;
    inst.gains.h = to_vector(number_list(s.required("h"), "problem.h"));
    const auto n = inst.gains.h.size();

    const json& H = s.required("H");
    if (!H.is_array() || Eigen::Index(H.size()) != n)
        throw ConfigError("config: key 'problem.H' must be an N x N array");
    inst.gains.H.resize(n, n);
    for (Eigen::Index i = 0; i < n; ++i) {
        const auto row = number_list(H[std::size_t(i)], "problem.H");
        if (Eigen::Index(row.size()) != n) throw ConfigError("config: key 'problem.H' must be an N x N array");
        for (Eigen::Index j = 0; j < n; ++j) inst.gains.H(i, j) = row[std::size_t(j)];
    }
    inst.gains.eta = to_vector(number_list(s.required("eta"), "problem.eta"));

    Vector p_min = s.has("p_min") ? to_vector(number_list(s.raw("p_min"), "problem.p_min"))
                                  : Vector::Constant(n, kPowerFloor);
    std::optional<Vector> p_max;
    if (s.has("p_max") && !s.raw("p_max").is_null()) p_max = to_vector(number_list(doc.at("p_max"), "problem.p_max"));
    s.finish();

    if (inst.gains.eta.size() != n || p_min.size() != n || (p_max && p_max->size() != n))
        throw ConfigError("config: problem vectors must all have length " + std::to_string(n));
    inst.gains.validate();
    inst.bounds.p_min = std::move(p_min);
    inst.bounds.p_max = std::move(p_max);
    return inst;
}

Scenario scenario_from_json(const json& doc) {
    Section root(doc, "");
    Scenario sc;
    sc.name = root.text("name", sc.name);

    const bool has_topo = root.has("topology");
    const bool has_problem = root.has("problem");
    if (has_topo == has_problem) throw ConfigError("config: exactly one of 'topology' or 'problem' is required");
    if (has_topo) sc.topology = parse_topology(root.raw("topology"));
    else sc.instance = problem_from_json(root.raw("problem"));

    UtilitySpec& u = sc.utility;
    if (!root.has("utility")) throw ConfigError("config: missing required key 'utility'");
    const json& uv = root.raw("utility");
    if (!uv.is_string()) throw ConfigError("config: key 'utility' must be a string");
    u.kind = parse_utility_kind(uv.get<std::string>());
    u.gamma_gap_db = root.number("gamma_gap_db", u.gamma_gap_db);
    if (u.gamma_gap_db < 0.0) throw ConfigError("config: key 'gamma_gap_db' must be non-negative");
    if (root.has("weights")) u.weights = number_list(root.raw("weights"), "weights");
    u.smooth_min_k = root.number("smooth_min_k", u.smooth_min_k);
    if (!(u.smooth_min_k > 0.0)) throw ConfigError("config: key 'smooth_min_k' must be positive");
    if (root.has("routing")) {
        const json& r = root.raw("routing");
        if (r.is_string()) {
            try {
                u.routing = parse_routing(r.get<std::string>());
            } catch (const ConfigError& e) {
                throw ConfigError(std::string("config: key 'routing': ") + e.what());
            }
        } else if (r.is_array()) {
            std::vector<bool> routes;
            for (const auto& e : r) {
                if (!e.is_boolean()) throw ConfigError("config: key 'routing' must be a string or an array of booleans");
                routes.push_back(e.get<bool>());
            }
            u.explicit_routes = std::move(routes);
        } else {
            throw ConfigError("config: key 'routing' must be a string or an array of booleans");
        }
    }
    if (u.kind == UtilityKind::Relay && !sc.topology) throw ConfigError("config: utility 'relay' needs a 'topology'");

    if (root.has("solver")) parse_solver(root.raw("solver"), sc);
    if (root.has("oracle")) parse_oracle(root.raw("oracle"), sc.oracle);
    sc.oracle.mode = sc.solver.mode;

    sc.distributed = root.flag("distributed", sc.distributed);
    if (root.has("signaling")) {
        try {
            sc.signaling = parse_signaling(root.text("signaling", "general"));
        } catch (const ConfigError& e) {
            throw ConfigError(std::string("config: key 'signaling': ") + e.what());
        }
    }
    sc.blocks = root.count("blocks", sc.blocks);
    if (sc.blocks == 0) throw ConfigError("config: key 'blocks' must be positive");
    root.finish();
    return sc;
}

json read_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("config: cannot open '" + path + "'");
    try {
        return json::parse(in);
    } catch (const json::parse_error& e) {
        throw ConfigError("config: " + path + ": " + e.what());
    }
}

Scenario load_scenario(const std::string& path) { return scenario_from_json(read_json_file(path)); }

UtilityPtr make_utility(const UtilitySpec& spec, std::size_t n) {
    auto weights = [&]() -> Vector {
        if (!spec.weights) return Vector::Ones(Eigen::Index(n));
        if (spec.weights->size() != n)
            throw ConfigError("config: key 'weights' has " + std::to_string(spec.weights->size()) +
                              " entries for " + std::to_string(n) + " links");
        Vector w = to_vector(*spec.weights);
        if (!(w.array() > 0.0).all()) throw ConfigError("config: key 'weights' must be positive");
        return w;
    };
    switch (spec.kind) {
    case UtilityKind::SumLogSinr: return std::make_shared<SumLogSinrUtility>(weights());
    case UtilityKind::LogRate: return std::make_shared<LogRateUtility>(weights(), db_to_linear(spec.gamma_gap_db));
    case UtilityKind::SumSinr: return std::make_shared<SumSinrUtility>(n);
    case UtilityKind::Relay: break;
    }
    throw ConfigError("config: the relay utility is built together with its stacked problem");
}

Instance build_instance(const Scenario& sc, std::uint64_t seed) {
    if (sc.instance) {
        const ProblemInstance& pi = *sc.instance;
        auto u = make_utility(sc.utility, pi.gains.size());
        return Instance{pi.gains, pi.bounds, normalize(pi.gains, pi.bounds), std::move(u), std::nullopt, nullptr};
    }
    const TopologyConfig& topo = *sc.topology;
    Deployment dep = generate_topology(topo, seed);
    if (sc.utility.kind != UtilityKind::Relay) {
        LinkGains g = channel_gains(dep, topo);
        PowerBounds b = power_bounds(topo, dep.users.size());
        auto u = make_utility(sc.utility, g.size());
        NormalizedProblem prob = normalize(g, b);
        return Instance{std::move(g), std::move(b), std::move(prob), std::move(u), std::move(dep), nullptr};
    }

    std::vector<bool> relayed;
    if (sc.utility.explicit_routes) {
        relayed = *sc.utility.explicit_routes;
        if (relayed.size() != dep.users.size())
            throw ConfigError("config: key 'routing' needs one entry per user");
    } else {
        relayed = choose_routes(dep, topo, sc.utility.routing);
    }
    RelayProblem rp = build_relay_gains(dep, topo, relayed);
    std::vector<RelayRoute> routes = rp.routes;
    if (sc.utility.weights) {
        if (sc.utility.weights->size() != routes.size())
            throw ConfigError("config: key 'weights' needs one entry per user for the relay utility");
        for (std::size_t i = 0; i < routes.size(); ++i) routes[i].weight = (*sc.utility.weights)[i];
    }
    auto relay = std::make_shared<const RelayUtility>(rp.gains.size(), std::move(routes),
                                                      db_to_linear(sc.utility.gamma_gap_db), sc.utility.smooth_min_k);
    NormalizedProblem prob = normalize(rp.gains, rp.bounds);
    return Instance{std::move(rp.gains), std::move(rp.bounds), std::move(prob), relay, std::move(dep), relay};
}

SolverConfig solver_config_for(const Scenario& sc, const Instance& inst, std::uint64_t seed) {
    SolverConfig c = sc.solver;
    if (sc.theta_auto) {
        const auto bound = inst.utility->analytic_bound();
        const double B = bound ? *bound : diagnose(*inst.utility).B_estimate;
        c.theta0 = default_theta(B);
    }
    if (inst.relay) c.check_concavity = false;
    switch (sc.p0) {
    case InitialPower::Max: c.p0.reset(); break;
    case InitialPower::Explicit:
        if (std::size_t(c.p0->size()) != inst.prob.size())
            throw ConfigError("config: key 'solver.p0' has the wrong length");
        break;
    case InitialPower::Random: {
        const Vector top = default_initial_power(inst.prob);
        std::mt19937_64 rng(seed ^ 0x5eedf00dULL);
        std::uniform_real_distribution<double> decade(-sc.random_p0_decades, 0.0);
        Vector p(top.size());
        for (Eigen::Index i = 0; i < p.size(); ++i) p[i] = top[i] * std::pow(10.0, decade(rng));
        c.p0 = p;
        break;
    }
    }
    return c;
}

json non_reference_defaults(const Scenario& sc) {
    json out = json::object();
    if (!sc.topology) return out;
    const TopologyConfig& t = *sc.topology;
    out["noise_dbm"] = t.noise_dbm;
    out["p_max_dbm"] = t.p_max_dbm;
    out["p_min"] = std::isfinite(t.p_min_dbm) ? json(t.p_min_dbm) : json("solver floor");
    out["self_interference"] = t.self_interference;
    out["intra_cell_coupling"] = t.intra_cell_coupling;
    if (t.relays) out["cross_slot_leakage"] = t.cross_slot_leakage;
    return out;
}

} // namespace pcsim
