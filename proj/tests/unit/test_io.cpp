#include <doctest.h>

#include <cstdio>
#include <fstream>
#include <string>

#include "pcsim/error.hpp"
#include "pcsim/io.hpp"

using namespace pcsim;
using nlohmann::json;

namespace {

std::string error_of(const json& doc) {
    try {
        scenario_from_json(doc);
    } catch (const ConfigError& e) {
        return e.what();
    }
    return "";
}

json small_topology() {
    return json{{"topology", {{"n_cells", 2}, {"users_per_cell", 3}}}, {"utility", "log_rate"}};
}

} // namespace

TEST_CASE("config errors name the offending key") {
    json doc = small_topology();
    doc.erase("utility");
    CHECK(error_of(doc).find("missing required key 'utility'") != std::string::npos);

    doc = small_topology();
    doc["topology"]["cell_radius"] = 3;
    CHECK(error_of(doc).find("unknown key 'topology.cell_radius'") != std::string::npos);

    doc = small_topology();
    doc["solver"] = {{"tol", "tight"}};
    CHECK(error_of(doc).find("'solver.tol'") != std::string::npos);

    doc = small_topology();
    doc["solver"] = {{"mode", "fastest"}};
    CHECK(error_of(doc).find("'solver.mode'") != std::string::npos);

    doc = small_topology();
    doc["utility"] = "sum_rate";
    CHECK(error_of(doc).find("'utility'") != std::string::npos);

    doc = small_topology();
    doc["solver"] = {{"theta0", 1.5}};
    CHECK(error_of(doc).find("'solver.theta0'") != std::string::npos);

    doc = small_topology();
    doc["problem"] = {{"h", {1.0}}, {"H", {{0.1}}}, {"eta", {0.1}}};
    CHECK(error_of(doc).find("exactly one of") != std::string::npos);

    doc = small_topology();
    doc["topology"]["cell_radius_m"] = -5;
    CHECK(error_of(doc).find("topology") != std::string::npos);

    doc = small_topology();
    doc["utility"] = "relay";
    CHECK(error_of(doc).empty());
    doc.erase("topology");
    doc["problem"] = {{"h", {1.0}}, {"H", {{0.1}}}, {"eta", {0.1}}};
    CHECK(error_of(doc).find("needs a 'topology'") != std::string::npos);
}

TEST_CASE("null values mean unbounded or static") {
    json doc = small_topology();
    doc["topology"]["coherence_time_ms"] = nullptr;
    doc["topology"]["p_min_dbm"] = nullptr;
    const Scenario sc = scenario_from_json(doc);
    CHECK(std::isinf(sc.topology->coherence_time_ms));
    CHECK_FALSE(sc.topology->fading_enabled());
    CHECK(std::isinf(sc.topology->p_min_dbm));
}

TEST_CASE("solver section parsing") {
    json doc = small_topology();
    doc["solver"] = {{"theta0", "auto"}, {"halving_period", 0}, {"tol", 1e-7}, {"max_iter", 77}, {"mode", "max"},
                     {"sweep", "async"}, {"order", "random"}, {"p0", "random"}, {"random_p0_decades", 2}};
    doc["distributed"] = true;
    doc["signaling"] = "num";
    doc["blocks"] = 12;
    const Scenario sc = scenario_from_json(doc);
    CHECK(sc.theta_auto);
    CHECK(sc.solver.halving_period == 0);
    CHECK(sc.solver.tol == 1e-7);
    CHECK(sc.solver.max_iter == 77);
    CHECK(sc.solver.mode == SolveMode::MaxClamped);
    CHECK(sc.solver.sweep == SweepKind::Asynchronous);
    CHECK(sc.solver.order == AsyncOrder::RandomPermutation);
    CHECK(sc.p0 == InitialPower::Random);
    CHECK(sc.random_p0_decades == 2.0);
    CHECK(sc.distributed);
    CHECK(sc.signaling == SignalingMode::Num);
    CHECK(sc.blocks == 12);

    const Instance inst = build_instance(sc, 3);
    const SolverConfig a = solver_config_for(sc, inst, 3);
    const SolverConfig b = solver_config_for(sc, inst, 3);
    const SolverConfig c = solver_config_for(sc, inst, 4);
    CHECK(a.theta0 == doctest::Approx(default_theta(2.0)));
    REQUIRE(a.p0.has_value());
    CHECK(*a.p0 == *b.p0);
    CHECK(*a.p0 != *c.p0);
    const Vector top = *inst.bounds.p_max;
    for (Eigen::Index i = 0; i < top.size(); ++i) {
        CHECK((*a.p0)[i] <= top[i]);
        CHECK((*a.p0)[i] >= top[i] * 1e-2 * (1 - 1e-12));
    }
}

TEST_CASE("inline problem round trip") {
    LinkGains g;
    g.h = (Vector(2) << 1.0, 0.5).finished();
    g.H.resize(2, 2);
    g.H << 1e-4, 0.1, 0.2, 5e-5;
    g.eta = (Vector(2) << 1e-3, 2e-3).finished();
    const PowerBounds b = PowerBounds::box(Vector::Constant(2, 1e-6), Vector::Constant(2, 0.3));
    const ProblemInstance back = problem_from_json(problem_to_json(g, b));
    CHECK(back.gains.H == g.H);
    CHECK(back.gains.h == g.h);
    CHECK(*back.bounds.p_max == *b.p_max);
    CHECK(back.bounds.p_min == b.p_min);

    json doc = problem_to_json(g, PowerBounds::unbounded(2));
    CHECK(doc["p_max"].is_null());
    CHECK_FALSE(problem_from_json(doc).bounds.p_max.has_value());

    json bad = doc;
    bad["h"] = {1.0};
    CHECK_THROWS_AS(problem_from_json(bad), ConfigError);
}

TEST_CASE("instances from topologies") {
    json doc = small_topology();
    const Scenario sc = scenario_from_json(doc);
    const Instance inst = build_instance(sc, 9);
    CHECK(inst.prob.size() == 6);
    CHECK(inst.deployment.has_value());
    CHECK(inst.relay == nullptr);
    CHECK(inst.gains.h == build_instance(sc, 9).gains.h);

    doc["utility"] = "relay";
    doc["topology"]["relays"] = true;
    doc["weights"] = {1, 1, 1, 1, 1, 2};
    const Instance ri = build_instance(scenario_from_json(doc), 9);
    CHECK(ri.prob.size() == 12);
    REQUIRE(ri.relay != nullptr);
    CHECK(ri.relay->routes()[5].weight == 2.0);
    CHECK_FALSE(solver_config_for(scenario_from_json(doc), ri, 9).check_concavity);

    doc["weights"] = {1, 2};
    CHECK_THROWS_AS(build_instance(scenario_from_json(doc), 9), ConfigError);
}

TEST_CASE("file reading reports syntax positions") {
    const std::string path = "pcsim_io_test_bad.json";
    {
        std::ofstream f(path);
        f << "{\n  \"utility\": \"log_rate\",\n  oops\n}\n";
    }
    try {
        read_json_file(path);
        FAIL("expected a parse error");
    } catch (const ConfigError& e) {
        CHECK(std::string(e.what()).find("line 3") != std::string::npos);
    }
    std::remove(path.c_str());
    CHECK_THROWS_AS(read_json_file("does/not/exist.json"), ConfigError);
}

TEST_CASE("non-reference defaults are labelled") {
    const Scenario sc = scenario_from_json(small_topology());
    const json d = non_reference_defaults(sc);
    CHECK(d.contains("noise_dbm"));
    CHECK(d.contains("self_interference"));
    CHECK(d["p_min"] == "solver floor");
}
