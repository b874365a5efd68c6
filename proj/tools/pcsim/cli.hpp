#pragma once

// The pcsim command line: argument parsing, run manifests, and one function
// per subcommand. Kept in a library so tests can drive it in-process.

#include <cstdint>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include <json.hpp>

namespace pcsim::cli {

inline constexpr const char* kVersion = "0.1.0";

enum ExitCode : int {
    kExitOk = 0,
    kExitUsage = 1,
    kExitNotConverged = 2,
    kExitVerifyFailed = 3,
};

struct Options {
    std::string command;
    std::string config_path;
    std::uint64_t seed = 1;
    std::size_t seeds = 1;
    std::string out_dir;
    std::optional<std::string> mode; // sync | async
    std::optional<double> theta;
    std::optional<double> tol;
};

/// Seeds seed, seed+1, ..., seed+seeds-1.
std::vector<std::uint64_t> seed_list(const Options& opt);

/// 64-bit FNV-1a.
std::uint64_t fnv1a(const std::string& bytes);

/// Hash over everything that determines the outputs (not the timestamp or paths).
std::string manifest_hash(const Options& opt, const nlohmann::json& config_doc);

/// Nearest-rank percentile of a sample (q in (0, 1]); nullopt stays nullopt.
std::optional<double> percentile(std::vector<std::optional<double>> xs, double q);

/// Worker count from PCSIM_THREADS (default: hardware concurrency).
std::size_t thread_cap();

/// Entry point behind main(). Never throws; returns the exit code.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

/// Dispatch on opt.command once options are parsed. Throws on config errors.
int dispatch(const Options& opt, std::ostream& out);

} // namespace pcsim::cli
