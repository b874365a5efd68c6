#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "cli.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string config_dir() {
    const char* env = std::getenv("PCSIM_CONFIG_DIR");
    return env ? env : "configs";
}

std::string config(const std::string& name) { return config_dir() + "/" + name; }

fs::path fresh_dir(const std::string& tag) {
    const fs::path d = fs::temp_directory_path() / ("pcsim_cli_" + tag);
    fs::remove_all(d);
    return d;
}

int run_cli(std::vector<std::string> args) {
    args.insert(args.begin(), "pcsim");
    std::vector<const char*> argv;
    for (const auto& a : args) argv.push_back(a.c_str());
    std::ostringstream out, err;
    return pcsim::cli::run(int(argv.size()), argv.data(), out, err);
}

std::string slurp(const fs::path& p) {
    std::ifstream f(p);
    std::ostringstream s;
    s << f.rdbuf();
    return s.str();
}

json read_json(const fs::path& p) { return json::parse(slurp(p)); }

struct Csv {
    std::string manifest;
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;
};

std::vector<std::string> split(const std::string& line) {
    std::vector<std::string> out;
    std::stringstream s(line);
    std::string cell;
    while (std::getline(s, cell, ',')) out.push_back(cell);
    return out;
}

Csv read_csv(const fs::path& p) {
    std::ifstream f(p);
    Csv c;
    std::string line;
    std::getline(f, line);
    c.manifest = line;
    std::getline(f, line);
    c.header = split(line);
    while (std::getline(f, line))
        if (!line.empty()) c.rows.push_back(split(line));
    return c;
}

// A small relay / tracking topology keeps the CLI tests quick.
std::string write_config(const fs::path& dir, const std::string& name, const json& doc) {
    fs::create_directories(dir);
    const fs::path p = dir / name;
    std::ofstream(p) << doc.dump(2);
    return p.string();
}

} // namespace

TEST_CASE("single link goes to its cap") {
    const fs::path d = fresh_dir("toy");
    REQUIRE(run_cli({"solve", "--config", config("toy.json"), "--out", d.string()}) == 0);
    const json r = read_json(d / "result.json");
    CHECK(r["p"][0].get<double>() == doctest::Approx(0.2));
    CHECK(r["converged"].get<bool>());
    CHECK(r.contains("manifest_hash"));
}

TEST_CASE("usage and config errors exit 1") {
    const fs::path d = fresh_dir("usage");
    CHECK(run_cli({}) == 1);
    CHECK(run_cli({"solve", "--out", d.string()}) == 1);
    CHECK(run_cli({"explode", "--config", config("toy.json"), "--out", d.string()}) == 1);
    const std::string bad = write_config(d, "bad.json", {{"problem", {{"h", {1.0}}, {"H", {{1e-4}}}, {"eta", {1e-3}}}}});
    CHECK(run_cli({"solve", "--config", bad, "--out", (d / "o").string()}) == 1);
    CHECK(run_cli({"solve", "--config", config("toy.json"), "--out", d.string(), "--mode", "sideways"}) == 1);
}

TEST_CASE("solve outputs are deterministic and carry the manifest hash") {
    const fs::path a = fresh_dir("det_a");
    const fs::path b = fresh_dir("det_b");
    for (const auto& d : {a, b})
        REQUIRE(run_cli({"solve", "--config", config("default.json"), "--seed", "3", "--out", d.string()}) == 0);
    for (const char* f : {"result.json", "trace.csv", "deployment.json"}) CHECK(slurp(a / f) == slurp(b / f));

    const json m = read_json(a / "manifest.json");
    const json r = read_json(a / "result.json");
    CHECK(m["manifest_hash"] == r["manifest_hash"]);
    CHECK(m.contains("timestamp"));
    CHECK(m.contains("non_reference_defaults"));

    const Csv t = read_csv(a / "trace.csv");
    CHECK(t.manifest == "# manifest " + m["manifest_hash"].get<std::string>());
    CHECK(t.header == std::vector<std::string>{"iter", "theta", "utility", "max_phi_dev", "max_rel_step"});
    REQUIRE(!t.rows.empty());
    CHECK(t.rows.size() == r["iterations"].get<std::size_t>());
    for (const auto& row : t.rows) CHECK(row.size() == 5);
    CHECK(r["residual"].get<double>() <= 1e-8);

    // a different seed or override changes the hash
    const fs::path c = fresh_dir("det_c");
    REQUIRE(run_cli({"solve", "--config", config("default.json"), "--seed", "3", "--tol", "1e-8", "--out",
                     c.string()}) == 0);
    CHECK(read_json(c / "manifest.json")["manifest_hash"] != m["manifest_hash"]);
}

TEST_CASE("distributed solve logs messages") {
    const fs::path d = fresh_dir("dist");
    REQUIRE(run_cli({"solve", "--config", config("distributed.json"), "--out", d.string()}) == 0);
    const json r = read_json(d / "result.json");
    CHECK(r["non_local_reads"] == 0);
    const Csv m = read_csv(d / "messages.csv");
    CHECK(m.header == std::vector<std::string>{"iter", "round", "msg_count"});
    CHECK(m.rows.size() == 2 * r["iterations"].get<std::size_t>());
    for (const auto& row : m.rows) CHECK(row[2] == "70");
}

TEST_CASE("verify: passes on the default and zero-noise configs, fails the negative control") {
    const fs::path a = fresh_dir("verify_default");
    CHECK(run_cli({"verify", "--config", config("default.json"), "--out", a.string()}) == 0);
    CHECK(read_json(a / "verify.json")["passed"].get<bool>());

    const fs::path z = fresh_dir("verify_zero");
    CHECK(run_cli({"verify", "--config", config("zero_noise.json"), "--out", z.string()}) == 0);
    const json v = read_json(z / "verify.json");
    std::vector<std::string> names;
    for (const auto& c : v["checks"]) names.push_back(c["name"]);
    for (const char* want : {"perron_root", "scale_line", "left_eigenvector", "kkt_residual"})
        CHECK(std::find(names.begin(), names.end(), want) != names.end());

    const fs::path n = fresh_dir("verify_neg");
    CHECK(run_cli({"verify", "--config", config("nonconcave.json"), "--out", n.string()}) == 3);
    const json nv = read_json(n / "verify.json");
    CHECK_FALSE(nv["passed"].get<bool>());
    CHECK_FALSE(nv["checks"][0]["pass"].get<bool>());
}

TEST_CASE("cdf over one seed writes one row plus the summary row") {
    const fs::path d = fresh_dir("cdf");
    REQUIRE(run_cli({"cdf", "--config", config("default.json"), "--seeds", "1", "--out", d.string()}) == 0);
    const Csv c = read_csv(d / "cdf.csv");
    CHECK(c.header == std::vector<std::string>{"seed", "iters_5pct", "iters_2pct", "iters_1pct", "certified"});
    REQUIRE(c.rows.size() == 2);
    CHECK(c.rows[0][0] == "1");
    CHECK(c.rows[1][0] == "p90");
    const json s = read_json(d / "cdf_summary.json");
    CHECK(s["seeds"] == 1);
    CHECK(s.contains("iters_5pct"));
}

TEST_CASE("relay and track on a small topology") {
    const fs::path d = fresh_dir("relay");
    json relay = read_json(config("relay.json"));
    relay["topology"]["n_cells"] = 3;
    relay["topology"]["users_per_cell"] = 4;
    const std::string rc = write_config(d, "relay.json", relay);
    REQUIRE(run_cli({"relay", "--config", rc, "--seeds", "2", "--out", (d / "out").string()}) == 0);
    const Csv r = read_csv(d / "out" / "relay.csv");
    CHECK(r.header == std::vector<std::string>{"seed", "arm", "objective", "realized", "iterations", "converged"});
    CHECK(r.rows.size() == 8);
    const json s = read_json(d / "out" / "relay_summary.json");
    CHECK(s["means"].contains("relay_pc"));
    CHECK(s["ascent_violations"] == 0);
    // relay needs a relay utility
    CHECK(run_cli({"relay", "--config", config("default.json"), "--out", (d / "x").string()}) == 1);

    const fs::path t = fresh_dir("track");
    json track = read_json(config("track.json"));
    track["topology"]["n_cells"] = 2;
    track["topology"]["users_per_cell"] = 3;
    track["blocks"] = 10;
    const std::string tc = write_config(t, "track.json", track);
    REQUIRE(run_cli({"track", "--config", tc, "--seed", "5", "--out", (t / "out").string()}) == 0);
    const Csv ts = read_csv(t / "out" / "track_seed5.csv");
    CHECK(ts.header == std::vector<std::string>{"t_ms", "schedule", "utility", "iters_used"});
    CHECK(ts.rows.size() == 3 * 40);
    const Csv rs = read_csv(t / "out" / "restart_seed5.csv");
    CHECK(rs.rows.size() == 9);
    const json ss = read_json(t / "out" / "track_summary.json");
    CHECK(ss["per_seed"][0]["seed"] == 5);
}

TEST_CASE("helpers") {
    using namespace pcsim::cli;
    CHECK(fnv1a("") == 0xcbf29ce484222325ULL);
    CHECK(fnv1a("a") == 0xaf63dc4c8601ec8cULL);
    CHECK(*percentile({1.0, 2.0, 3.0, 4.0}, 0.5) == 2.0);
    CHECK(*percentile({1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0, 9.0, 10.0}, 0.9) == 9.0);
    CHECK_FALSE(percentile({1.0, std::nullopt}, 0.9).has_value());
    Options o;
    o.seed = 7;
    o.seeds = 3;
    CHECK(seed_list(o) == std::vector<std::uint64_t>{7, 8, 9});
}
