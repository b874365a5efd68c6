#include "cli.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <random>
#include <sstream>
#include <thread>

#include <CLI11.hpp>

#include "pcsim/distributed.hpp"
#include "pcsim/error.hpp"
#include "pcsim/io.hpp"
#include "pcsim/oracle.hpp"
#include "pcsim/spectral.hpp"

namespace pcsim::cli {

using nlohmann::json;
namespace fs = std::filesystem;

std::vector<std::uint64_t> seed_list(const Options& opt) {
    std::vector<std::uint64_t> out;
    for (std::size_t i = 0; i < opt.seeds; ++i) out.push_back(opt.seed + i);
    return out;
}

std::uint64_t fnv1a(const std::string& bytes) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

std::string manifest_hash(const Options& opt, const json& config_doc) {
    json key = {
        {"subcommand", opt.command},
        {"config", config_doc},
        {"seeds", seed_list(opt)},
        {"version", kVersion},
        {"mode", opt.mode ? json(*opt.mode) : json(nullptr)},
        {"theta", opt.theta ? json(*opt.theta) : json(nullptr)},
        {"tol", opt.tol ? json(*opt.tol) : json(nullptr)},
    };
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a(key.dump())));
    return buf;
}

std::optional<double> percentile(std::vector<std::optional<double>> xs, double q) {
    if (xs.empty()) return std::nullopt;
    // missing entries never reached the band: they sort above everything
    std::sort(xs.begin(), xs.end(), [](const auto& a, const auto& b) {
        if (!a) return false;
        if (!b) return true;
        return *a < *b;
    });
    const auto rank = std::size_t(std::ceil(q * double(xs.size())));
    return xs[std::max<std::size_t>(rank, 1) - 1];
}

std::size_t thread_cap() {
    std::size_t cap = std::max(1u, std::thread::hardware_concurrency());
    if (const char* env = std::getenv("PCSIM_THREADS")) {
        char* end = nullptr;
        const long v = std::strtol(env, &end, 10);
        if (end == env || *end != '\0' || v < 1) throw ConfigError("PCSIM_THREADS must be a positive integer");
        cap = std::size_t(v);
    }
    return cap;
}

namespace {

std::string num(double x) {
    if (std::isnan(x)) return "nan";
    if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", x);
    return buf;
}

std::string opt_count(const std::optional<std::size_t>& v) { return v ? std::to_string(*v) : "NA"; }

json vec_json(const Vector& v) {
    json a = json::array();
    for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v[i]);
    return a;
}

json maybe(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

// Runs f(i) for i in [0, n) on up to thread_cap() workers; results land by index.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& f) {
    const std::size_t workers = std::min(thread_cap(), n);
    if (workers <= 1) {
        for (std::size_t i = 0; i < n; ++i) f(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::vector<std::exception_ptr> errors(n);
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w) {
        pool.emplace_back([&] {
            for (std::size_t i = next++; i < n; i = next++) {
                try {
                    f(i);
                } catch (...) {
                    errors[i] = std::current_exception();
                }
            }
        });
    }
    for (auto& t : pool) t.join();
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
}

struct Run {
    Options opt;
    json config_doc;
    Scenario scenario;
    std::string hash;
    fs::path out;

    fs::path file(const std::string& name) const { return out / name; }

    void write_json(const std::string& name, json doc) const {
        doc["manifest_hash"] = hash;
        std::ofstream f(file(name));
        f << doc.dump(2) << '\n';
        if (!f) throw Error("cannot write " + file(name).string());
    }

    std::ofstream open_csv(const std::string& name, const std::string& header) const {
        std::ofstream f(file(name));
        if (!f) throw Error("cannot write " + file(name).string());
        f << "# manifest " << hash << '\n' << header << '\n';
        return f;
    }

    SolverConfig solver_for(const Instance& inst, std::uint64_t seed) const {
        SolverConfig c = solver_config_for(scenario, inst, seed);
        if (opt.theta) c.theta0 = *opt.theta;
        if (opt.tol) c.tol = *opt.tol;
        if (opt.mode) c.sweep = *opt.mode == "async" ? SweepKind::Asynchronous : SweepKind::Synchronous;
        return c;
    }
};

void write_manifest(const Run& run, const json& extra) {
    const auto now = std::chrono::system_clock::now();
    const std::time_t t = std::chrono::system_clock::to_time_t(now);
    char stamp[32];
    std::strftime(stamp, sizeof stamp, "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&t));
    json m = {
        {"subcommand", run.opt.command},
        {"config_path", run.opt.config_path},
        {"seeds", seed_list(run.opt)},
        {"output_dir", run.opt.out_dir},
        {"tool_version", kVersion},
        {"timestamp", stamp},
        {"manifest_hash", run.hash},
        {"non_reference_defaults", non_reference_defaults(run.scenario)},
    };
    for (const auto& [k, v] : extra.items()) m[k] = v;
    std::ofstream f(run.file("manifest.json"));
    f << m.dump(2) << '\n';
}

// solve -----------------------------------------------------------------------

void write_trace(const Run& run, const SolverTrace& trace) {
    auto f = run.open_csv("trace.csv", "iter,theta,utility,max_phi_dev,max_rel_step");
    for (const auto& r : trace.records)
        f << r.iter << ',' << num(r.theta) << ',' << num(r.utility) << ',' << num(r.max_phi_dev) << ','
          << num(r.max_rel_step) << '\n';
}

// Rebuilds the per-iteration trace of a distributed run from its recorded powers.
SolverTrace distributed_trace(const Instance& inst, const SolverConfig& cfg, const DistributedResult& d) {
    SolverTrace t;
    DampingSchedule schedule(cfg.theta0, cfg.halving_period);
    for (std::size_t k = 0; k + 1 < d.powers.size(); ++k) {
        const FixedPointState s = evaluate_state(inst.prob, *inst.utility, d.powers[k], schedule.theta());
        TraceRecord r;
        r.iter = k;
        r.theta = schedule.theta();
        r.utility = inst.utility->value(s.gamma);
        r.max_phi_dev = (s.phi.array() - 1.0).abs().maxCoeff();
        r.max_rel_step = ((d.powers[k + 1] - d.powers[k]).array().abs() / d.powers[k].array()).maxCoeff();
        t.records.push_back(r);
        schedule.advance();
    }
    t.iterations = d.iterations;
    t.termination = d.termination;
    return t;
}

int cmd_solve(const Run& run, std::ostream& out) {
    const std::uint64_t seed = run.opt.seed;
    const Instance inst = build_instance(run.scenario, seed);
    SolverConfig cfg = run.solver_for(inst, seed);

    Vector p;
    SolverTrace trace;
    json extra = json::object();
    if (run.scenario.distributed) {
        cfg.record_powers = true;
        const DistributedResult d = run_until_converged(inst.gains, inst.bounds, *inst.utility, cfg,
                                                        run.scenario.signaling);
        p = d.p;
        trace = distributed_trace(inst, cfg, d);
        auto f = run.open_csv("messages.csv", "iter,round,msg_count");
        for (const auto& r : d.log.rounds) {
            if (r.gamma_msgs > 0) f << r.iter << ",gamma," << r.gamma_msgs << '\n';
            f << r.iter << ",kappa," << r.kappa_msgs << '\n';
        }
        extra["signaling"] = to_string(run.scenario.signaling);
        extra["messages_total"] = d.log.total();
        extra["non_local_reads"] = d.audit.violations;
    } else {
        SolveResult r = run_solver(inst.prob, *inst.utility, cfg);
        p = r.p;
        trace = std::move(r.trace);
    }
    write_trace(run, trace);

    const auto gamma = interference_and_sinr(inst.prob, p).gamma;
    const double utility = inst.utility->value(gamma);
    const KktResidual kkt = kkt_residual(p, inst.prob, *inst.utility, cfg.mode);
    const bool converged = trace.termination == Termination::Converged;

    json result = {
        {"p", vec_json(p)},
        {"utility", utility},
        {"iterations", trace.iterations},
        {"converged", converged},
        {"residual", kkt.relative},
        {"termination", to_string(trace.termination)},
        {"theta0", cfg.theta0},
        {"mode", to_string(cfg.mode)},
        {"sweep", cfg.sweep == SweepKind::Asynchronous ? "async" : "sync"},
        {"utility_model", inst.utility->name()},
        {"domain_warning", trace.domain_warning},
        {"seed", seed},
    };
    if (inst.relay) result["realized_utility"] = inst.relay->realized_value(gamma);
    for (const auto& [k, v] : extra.items()) result[k] = v;
    run.write_json("result.json", result);
    if (inst.deployment) run.write_json("deployment.json", deployment_to_json(*inst.deployment));
    write_manifest(run, json::object());

    out << "solve: utility " << num(utility) << ", " << trace.iterations << " iterations, "
        << to_string(trace.termination) << ", KKT residual " << num(kkt.relative) << '\n';
    return converged ? kExitOk : kExitNotConverged;
}

// cdf ---------------------------------------------------------------------------

struct CdfRow {
    std::uint64_t seed = 0;
    std::array<std::optional<std::size_t>, kVicinityPercents.size()> iters{};
    bool certified = false;
    double solver_utility = 0.0;
    double oracle_utility = std::numeric_limits<double>::quiet_NaN();
};

inline constexpr double kCertifyRelTol = 1e-6;

CdfRow cdf_seed(const Run& run, std::uint64_t seed) {
    const Instance inst = build_instance(run.scenario, seed);
    const SolverConfig cfg = run.solver_for(inst, seed);
    SolveResult r = run_solver(inst.prob, *inst.utility, cfg);

    CdfRow row;
    row.seed = seed;
    row.solver_utility = r.utility;
    double reference = r.utility;
    try {
        const OracleResult o = oracle_solve(inst.prob, *inst.utility, run.scenario.oracle);
        row.oracle_utility = o.utility;
        const double rel = std::abs(r.utility - o.utility) / std::abs(o.utility);
        row.certified = r.converged && o.converged && rel <= kCertifyRelTol;
        reference = std::max(o.utility, r.utility);
    } catch (const Error&) {
        row.certified = false;
    }
    mark_vicinity(r.trace, r.utility, reference);
    row.iters = r.trace.vicinity;
    return row;
}

int cmd_cdf(const Run& run, std::ostream& out) {
    const auto seeds = seed_list(run.opt);
    std::vector<CdfRow> rows(seeds.size());
    parallel_for(seeds.size(), [&](std::size_t i) { rows[i] = cdf_seed(run, seeds[i]); });

    std::array<std::vector<std::optional<double>>, kVicinityPercents.size()> cols;
    std::size_t certified = 0;
    auto f = run.open_csv("cdf.csv", "seed,iters_5pct,iters_2pct,iters_1pct,certified");
    for (const auto& r : rows) {
        f << r.seed;
        for (std::size_t j = 0; j < r.iters.size(); ++j) {
            f << ',' << opt_count(r.iters[j]);
            cols[j].push_back(r.iters[j] ? std::optional<double>(double(*r.iters[j])) : std::nullopt);
        }
        f << ',' << (r.certified ? 1 : 0) << '\n';
        certified += r.certified;
    }
    f << "p90";
    json summary = {{"seeds", seeds.size()}, {"certified", certified}};
    for (std::size_t j = 0; j < cols.size(); ++j) {
        const auto p90 = percentile(cols[j], 0.9);
        const auto med = percentile(cols[j], 0.5);
        f << ',' << (p90 ? num(*p90) : "NA");
        const std::string key = "iters_" + std::to_string(kVicinityPercents[j]) + "pct";
        summary[key] = {{"p90", maybe(p90)}, {"median", maybe(med)}};
    }
    f << ',' << certified << '\n';
    run.write_json("cdf_summary.json", summary);
    write_manifest(run, json::object());

    const auto& s5 = summary["iters_5pct"];
    out << "cdf: " << seeds.size() << " seeds, " << certified << " certified, iters_5pct p90 " << s5["p90"].dump()
        << " median " << s5["median"].dump() << '\n';
    return kExitOk;
}

// verify ---------------------------------------------------------------------------

CheckOutcome make_check(std::string name, double value, double threshold, bool pass) {
    return CheckOutcome{std::move(name), pass && std::isfinite(value), value, threshold};
}

// Runs body and records it as a failed check when it throws.
void guarded(std::vector<CheckOutcome>& checks, const std::string& name, const std::function<void()>& body) {
    try {
        body();
    } catch (const std::exception& e) {
        checks.push_back(CheckOutcome{name + ": " + e.what(), false, std::numeric_limits<double>::quiet_NaN(), 0.0});
    }
}

NormalizedProblem zero_noise_companion(const NormalizedProblem& prob) {
    return NormalizedProblem(prob.V().dense(), Vector::Zero(Eigen::Index(prob.size())),
                             PowerBounds::unbounded(prob.size()));
}

double curvature_bound(const UtilityModel& u) {
    const auto b = u.analytic_bound();
    return b ? *b : diagnose(u).B_estimate;
}

int cmd_verify(const Run& run, std::ostream& out) {
    const std::uint64_t seed = run.opt.seed;
    const Instance inst = build_instance(run.scenario, seed);
    const UtilityModel& u = *inst.utility;
    std::vector<CheckOutcome> checks;

    // log-concavity of the utility over the diagnostic grid
    const UtilityDiagnostics diag = diagnose(u);
    checks.push_back(make_check("log_concavity", diag.worst_violation, kLogConcavityTol, diag.log_concave_ok));
    const double B = std::max(diag.B_estimate, curvature_bound(u));

    // fixed point against the oracle, KKT certificate
    guarded(checks, "solve", [&] {
        SolverConfig cfg = run.solver_for(inst, seed);
        cfg.check_concavity = false;
        const SolveResult r = run_solver(inst.prob, u, cfg);
        checks.push_back(make_check("solver_converged", double(r.trace.iterations), double(cfg.max_iter), r.converged));
        const KktResidual kkt = kkt_residual(r.p, inst.prob, u, cfg.mode);
        checks.push_back(make_check("kkt_residual", kkt.relative, 1e-8, kkt.relative <= 1e-8));
        OracleOptions oo = run.scenario.oracle;
        oo.mode = cfg.mode;
        const OracleResult o = oracle_solve(inst.prob, u, oo);
        const double rel = std::abs(r.utility - o.utility) / std::abs(o.utility);
        checks.push_back(make_check("oracle_agreement", rel, kCertifyRelTol, o.converged && rel <= kCertifyRelTol));
    });

    // eigenstructure on the zero-noise problem with the same V
    const NormalizedProblem z = inst.prob.interference_limited() ? inst.prob : zero_noise_companion(inst.prob);
    const auto n = Eigen::Index(z.size());
    guarded(checks, "perron", [&] {
        std::mt19937_64 rng(seed);
        std::uniform_real_distribution<double> logp(-3.0, 3.0);
        Vector p(n);
        for (Eigen::Index i = 0; i < n; ++i) p[i] = std::pow(10.0, logp(rng));
        const Vector gamma = interference_and_sinr(z, p).gamma;
        const DominantEigenpair e = spectral_radius(sinr_operator(z, gamma), z.size());
        checks.push_back(make_check("perron_root", std::abs(e.rho - 1.0), 1e-10, std::abs(e.rho - 1.0) <= 1e-10));
        const double align = (e.v - p / p.norm()).cwiseAbs().maxCoeff();
        checks.push_back(make_check("perron_vector", align, 1e-8, align <= 1e-8));
        const Vector g2 = interference_and_sinr(z, 3.7 * p).gamma;
        const double scale = ((g2 - gamma).array().abs() / gamma.array()).maxCoeff();
        checks.push_back(make_check("scale_line", scale, 1e-12, scale <= 1e-12));
    });

    guarded(checks, "jacobian", [&] {
        SolverConfig cfg;
        cfg.mode = SolveMode::UnconstrainedNormalized;
        cfg.theta0 = default_theta(B);
        cfg.halving_period = 0;
        cfg.tol = 1e-12;
        cfg.max_iter = 200000;
        cfg.check_concavity = false;
        const SolveResult r = solve(z, u, cfg);
        checks.push_back(make_check("zero_noise_converged", double(r.trace.iterations), double(cfg.max_iter), r.converged));

        const SinrState s = interference_and_sinr(z, r.p);
        const Vector alpha = eval_alpha(s, u);
        const Vector st_alpha = z.V().apply_transpose(s.gamma.cwiseProduct(alpha));
        const double left = (st_alpha - alpha).cwiseAbs().maxCoeff() / alpha.cwiseAbs().maxCoeff();
        checks.push_back(make_check("left_eigenvector", left, 1e-6, left <= 1e-6));

        const JacobianReport jr = jacobian_check(r.p, z, u, cfg.theta0, B);
        for (const auto& c : jr.checks) checks.push_back(CheckOutcome{"jacobian." + c.name, c.pass, c.value, c.threshold});
    });

    guarded(checks, "convexity", [&] {
        const Matrix& v = inst.prob.V().dense();
        const Vector a = v.row(0).transpose();
        const double a0 = inst.prob.interference_limited() ? 1.0 : inst.prob.zeta()[0];
        const bool ok = convexity_spotcheck(a, a0, 1000, seed);
        checks.push_back(make_check("convexity", ok ? 0.0 : 1.0, 0.0, ok));
    });

    bool passed = true;
    json list = json::array();
    for (const auto& c : checks) {
        passed = passed && c.pass;
        list.push_back({{"name", c.name},
                        {"pass", c.pass},
                        {"value", std::isfinite(c.value) ? json(c.value) : json(nullptr)},
                        {"threshold", c.threshold}});
    }
    run.write_json("verify.json", {{"seed", seed}, {"utility_model", u.name()}, {"passed", passed}, {"checks", list}});
    write_manifest(run, json::object());

    for (const auto& c : checks)
        if (!c.pass) out << "verify: FAIL " << c.name << " value " << num(c.value) << " threshold " << num(c.threshold) << '\n';
    out << "verify: " << (passed ? "all checks passed" : "checks failed") << " (" << checks.size() << " checks)\n";
    return passed ? kExitOk : kExitVerifyFailed;
}

// relay ------------------------------------------------------------------------------

inline constexpr const char* kArms[] = {"norelay_max", "norelay_pc", "relay_max", "relay_pc"};

struct ArmResult {
    double objective = 0.0;
    double realized = 0.0;
    std::size_t iterations = 0;
    bool converged = true;
};

std::array<ArmResult, 4> relay_seed(const Run& run, std::uint64_t seed) {
    std::array<ArmResult, 4> arms;
    for (int relayed = 0; relayed < 2; ++relayed) {
        Scenario sc = run.scenario;
        if (!relayed) {
            sc.utility.explicit_routes.reset();
            sc.utility.routing = RoutingPolicy::AllDirect;
        }
        const Instance inst = build_instance(sc, seed);
        const Vector p_max = *inst.prob.bounds().p_max;

        ArmResult& mx = arms[std::size_t(2 * relayed)];
        const Vector g_max = interference_and_sinr(inst.prob, p_max).gamma;
        mx.objective = inst.relay->value(g_max);
        mx.realized = inst.relay->realized_value(g_max);

        SolverConfig cfg = run.solver_for(inst, seed);
        cfg.p0.reset(); // power control starts from the max-power arm
        const SolveResult r = run_solver(inst.prob, *inst.relay, cfg);
        ArmResult& pc = arms[std::size_t(2 * relayed + 1)];
        pc.objective = r.utility;
        pc.realized = inst.relay->realized_value(interference_and_sinr(inst.prob, r.p).gamma);
        pc.iterations = r.trace.iterations;
        pc.converged = r.converged;
    }
    return arms;
}

int cmd_relay(const Run& run, std::ostream& out) {
    if (run.scenario.utility.kind != UtilityKind::Relay || !run.scenario.topology || !run.scenario.topology->relays)
        throw ConfigError("relay: needs 'utility': \"relay\" and 'topology.relays': true");
    const auto seeds = seed_list(run.opt);
    std::vector<std::array<ArmResult, 4>> rows(seeds.size());
    parallel_for(seeds.size(), [&](std::size_t i) { rows[i] = relay_seed(run, seeds[i]); });

    std::array<double, 4> mean_obj{}, mean_real{};
    std::size_t ascent_violations = 0;
    auto f = run.open_csv("relay.csv", "seed,arm,objective,realized,iterations,converged");
    for (std::size_t s = 0; s < rows.size(); ++s) {
        for (std::size_t a = 0; a < 4; ++a) {
            const ArmResult& r = rows[s][a];
            f << seeds[s] << ',' << kArms[a] << ',' << num(r.objective) << ',' << num(r.realized) << ','
              << r.iterations << ',' << (r.converged ? 1 : 0) << '\n';
            mean_obj[a] += r.objective / double(rows.size());
            mean_real[a] += r.realized / double(rows.size());
        }
        for (std::size_t a : {0u, 2u})
            if (rows[s][a + 1].objective < rows[s][a].objective - 1e-9) ++ascent_violations;
    }
    json means = json::object();
    for (std::size_t a = 0; a < 4; ++a) means[kArms[a]] = {{"objective", mean_obj[a]}, {"realized", mean_real[a]}};
    json summary = {
        {"seeds", seeds.size()},
        {"means", means},
        {"relay_pc_beats_relay_max", mean_real[3] > mean_real[2]},
        {"relay_pc_beats_norelay_pc", mean_real[3] > mean_real[1]},
        {"ascent_violations", ascent_violations},
    };
    run.write_json("relay_summary.json", summary);
    write_manifest(run, json::object());

    out << "relay: realized means";
    for (std::size_t a = 0; a < 4; ++a) out << ' ' << kArms[a] << '=' << num(mean_real[a]);
    out << ", ascent violations " << ascent_violations << '\n';
    return kExitOk;
}

// track --------------------------------------------------------------------------------

struct TrackSeed {
    std::vector<std::vector<TrackSample>> series; // one per schedule
    std::vector<BlockRestart> restarts;
};

TrackSeed track_seed(const Run& run, std::uint64_t seed) {
    const Scenario& sc = run.scenario;
    if (!sc.topology) throw ConfigError("track: needs a 'topology'");
    if (sc.utility.kind == UtilityKind::Relay) throw ConfigError("track: the relay utility is not supported");
    const Instance inst = build_instance(sc, seed);
    TrackingConfig tc;
    tc.blocks = sc.blocks;
    tc.solver = run.solver_for(inst, seed);
    tc.solver.p0.reset();

    TrackSeed out;
    for (auto s : kAllSchedules) out.series.push_back(tracking_experiment(*inst.deployment, *sc.topology, *inst.utility, s, tc));
    if (sc.topology->fading_enabled()) out.restarts = warm_vs_cold(*inst.deployment, *sc.topology, *inst.utility, tc);
    return out;
}

int cmd_track(const Run& run, std::ostream& out) {
    const auto seeds = seed_list(run.opt);
    std::vector<TrackSeed> rows(seeds.size());
    parallel_for(seeds.size(), [&](std::size_t i) { rows[i] = track_seed(run, seeds[i]); });

    json per_seed = json::array();
    for (std::size_t s = 0; s < rows.size(); ++s) {
        const std::string tag = std::to_string(seeds[s]);
        auto f = run.open_csv("track_seed" + tag + ".csv", "t_ms,schedule,utility,iters_used");
        json means = json::object();
        for (const auto& series : rows[s].series) {
            double mean = 0.0;
            for (const auto& x : series) {
                f << num(x.t_ms) << ',' << to_string(x.schedule) << ',' << num(x.utility) << ',' << x.iters_used << '\n';
                mean += x.utility / double(series.size());
            }
            means[to_string(series.front().schedule)] = mean;
        }
        json entry = {{"seed", seeds[s]}, {"time_average", means}};

        if (!rows[s].restarts.empty()) {
            auto g = run.open_csv("restart_seed" + tag + ".csv", "block,warm_iters,cold_iters,warm_band_iters,cold_band_iters");
            double wb = 0, cb = 0, wi = 0, ci = 0;
            for (const auto& r : rows[s].restarts) {
                g << r.block << ',' << r.warm_iters << ',' << r.cold_iters << ',' << opt_count(r.warm_band_iters) << ','
                  << opt_count(r.cold_band_iters) << '\n';
                const double m = double(rows[s].restarts.size());
                wi += double(r.warm_iters) / m;
                ci += double(r.cold_iters) / m;
                wb += double(r.warm_band_iters.value_or(r.warm_iters)) / m;
                cb += double(r.cold_band_iters.value_or(r.cold_iters)) / m;
            }
            entry["restart"] = {{"warm_band_iters", wb}, {"cold_band_iters", cb}, {"warm_iters", wi}, {"cold_iters", ci}};
        }
        per_seed.push_back(entry);
        out << "track: seed " << seeds[s];
        for (const auto& [k, v] : means.items()) out << ' ' << k << '=' << num(v.get<double>());
        out << '\n';
    }
    run.write_json("track_summary.json", {{"blocks", run.scenario.blocks}, {"per_seed", per_seed}});
    write_manifest(run, json::object());
    return kExitOk;
}

} // namespace

int dispatch(const Options& opt, std::ostream& out) {
    Run run;
    run.opt = opt;
    run.config_doc = read_json_file(opt.config_path);
    run.scenario = scenario_from_json(run.config_doc);
    run.hash = manifest_hash(opt, run.config_doc);
    run.out = opt.out_dir;
    if (opt.theta && !(*opt.theta > 0.0 && *opt.theta <= 1.0)) throw ConfigError("--theta must lie in (0, 1]");
    if (opt.tol && !(*opt.tol > 0.0)) throw ConfigError("--tol must be positive");
    if (opt.seeds == 0) throw ConfigError("--seeds must be positive");
    std::error_code ec;
    fs::create_directories(run.out, ec);
    if (ec) throw ConfigError("cannot create output directory '" + opt.out_dir + "': " + ec.message());

    if (opt.command == "solve") return cmd_solve(run, out);
    if (opt.command == "cdf") return cmd_cdf(run, out);
    if (opt.command == "verify") return cmd_verify(run, out);
    if (opt.command == "relay") return cmd_relay(run, out);
    if (opt.command == "track") return cmd_track(run, out);
    throw ConfigError("unknown subcommand '" + opt.command + "'");
}

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"Damped fixed-point power control simulator"};
    app.set_version_flag("--version", kVersion);
    app.require_subcommand(1, 1);

    Options opt;
    const std::pair<const char*, const char*> commands[] = {
        {"solve", "solve one seed, write result, trace and deployment"},
        {"cdf", "iterations to the 1/2/5% band over many seeds"},
        {"verify", "oracle, KKT, eigenstructure and Jacobian checks"},
        {"relay", "relay vs direct, power control vs max power"},
        {"track", "power tracking under block fading, warm vs cold restarts"},
    };
    for (const auto& [name, help] : commands) {
        CLI::App* sub = app.add_subcommand(name, help);
        sub->add_option("--config", opt.config_path, "scenario JSON file")->required()->check(CLI::ExistingFile);
        sub->add_option("--seed", opt.seed, "first seed");
        sub->add_option("--seeds", opt.seeds, "number of consecutive seeds");
        sub->add_option("--out", opt.out_dir, "output directory")->required();
        sub->add_option("--mode", opt.mode, "sync or async sweep")->check(CLI::IsMember({"sync", "async"}));
        sub->add_option("--theta", opt.theta, "initial damping");
        sub->add_option("--tol", opt.tol, "convergence tolerance");
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::Success& e) {
        return app.exit(e, out, err);
    } catch (const CLI::ParseError& e) {
        app.exit(e, out, err);
        return kExitUsage;
    }
    opt.command = app.get_subcommands().front()->get_name();

    try {
        return dispatch(opt, out);
    } catch (const ConfigError& e) {
        err << "pcsim: " << e.what() << '\n';
        return kExitUsage;
    } catch (const ConvergenceError& e) {
        err << "pcsim: " << e.what() << '\n';
        return kExitNotConverged;
    } catch (const NumericalError& e) {
        err << "pcsim: " << e.what() << '\n';
        return kExitNotConverged;
    } catch (const std::exception& e) {
        err << "pcsim: " << e.what() << '\n';
        return kExitUsage;
    }
}

} // namespace pcsim::cli
