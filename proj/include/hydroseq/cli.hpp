#pragma once

/**
 * @file cli.hpp
 * @brief Command-line driver: synth, train, evaluate, forecast, report, gradcheck.
 */

#include <nlohmann/json.hpp>

#include <cstdint>
#include <filesystem>
#include <optional>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

namespace hydroseq::cli {

/// Bad command line or unreadable config; exit code 2.
class UsageError : public std::runtime_error {
public:
    UsageError(const std::string& what, std::string usage) : std::runtime_error(what), usage_(std::move(usage)) {}
    const std::string& usage() const { return usage_; }

private:
    std::string usage_;
};

struct RunConfig {
    std::string command;
    std::filesystem::path data_dir;
    std::filesystem::path out_dir;
    std::filesystem::path checkpoint;
    std::filesystem::path spec_file;
    std::optional<std::uint64_t> seed;
    int verbosity = 0;
    std::size_t threads = 1;
    /// Merged settings: config file values overridden by flags.
    nlohmann::json settings = nlohmann::json::object();
    std::vector<std::string> inputs;  ///< `report` inputs
};

/// Strict parsing. Throws UsageError; `--help` throws UsageError with an empty message.
RunConfig parse_args(int argc, const char* const* argv);

/// Executes a parsed config. Returns 0 on success, 1 on domain errors (error JSON on `err`).
int run(const RunConfig& config, std::ostream& out, std::ostream& err);

/// parse_args + run, mapping usage errors to exit code 2.
int main(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

/// 64-bit FNV-1a of the canonical JSON dump, as 16 hex digits.
std::string config_hash(const nlohmann::json& j);

}  // namespace hydroseq::cli
