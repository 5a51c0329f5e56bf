#pragma once

#include <cstdint>
#include <set>
#include <string>
#include <vector>

#include "cortiplan/anatomy.hpp"
#include "cortiplan/config.hpp"

namespace cortiplan {

// Log verbosity, controlled by the CORTIPLAN_LOG environment variable
// (error, warn, info, debug). Default info.
enum class LogLevel { Error = 0, Warn = 1, Info = 2, Debug = 3 };
LogLevel log_level();
void log_line(LogLevel level, const std::string& msg);

extern const char* kVersion;

// Resolved run configuration: one flat key space shared by config files and
// command-line flags (flags win). to_flat() echoes every key so a run can be
// re-launched from its manifest byte-identically.
struct RunConfig {
    // anatomy source: exactly one of anatomy_dir / synth
    std::string anatomy_dir;
    bool use_synth = false;
    SynthParams synth;
    std::uint64_t synth_seed = 0;

    std::string dataset_path;
    double extent_deg = 5.0;  // half extent attached to loaded targets
    int limit = 0;
    int train_count = 200;
    int test_count = 100;

    std::string method = "percept";  // percept | tiling | coverage | threads
    std::vector<int> n_list{64};
    std::vector<double> rho_list{1000.0};
    std::vector<std::uint64_t> seeds{0, 1, 2};
    int n_insert = 32;
    int threads_m = 8;
    double thread_spacing_mm = 0.2;

    ObjectiveConfig objective;

    std::string out_dir = "out";
    int jobs = 1;
    std::string layout_path;

    std::set<std::string> explicit_keys;

    // Returns false for unknown keys; throws ParseError on bad values.
    bool apply_kv(const std::string& key, const std::string& value);
    void load_config_file(const std::string& path);
    std::string to_flat() const;
    void validate() const;
};

AnatomyModel resolve_anatomy(const RunConfig& config);

int cmd_synth(const RunConfig& config);
int cmd_optimize(const RunConfig& config);
int cmd_evaluate(const RunConfig& config);
int cmd_render(const RunConfig& config);
int cmd_compare(const std::vector<std::string>& report_paths, const std::string& out_path);

// Exit codes by error class.
constexpr int kExitOk = 0;
constexpr int kExitFailure = 1;       // generic
constexpr int kExitInvalidArg = 2;
constexpr int kExitParseFormat = 3;   // ParseError / FormatError
constexpr int kExitIo = 4;
constexpr int kExitNumeric = 5;
constexpr int kExitInfeasible = 6;

int run_cli(int argc, char** argv);

}  // namespace cortiplan
