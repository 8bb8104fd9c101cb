#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "ktraj/core.hpp"
#include "ktraj/optimizer.hpp"

namespace ktraj {

/// Everything `generate` needs, parsed from a flat `key = value` file with
/// `[hardware]`, `[density]`, `[optimizer]`, `[repulsion]`, `[projection]` and `[output]`
/// sections. See README for the key list and units.
struct RunConfig {
    HardwareSpec hardware;
    OptimizerConfig optimizer;
    double feas_tol = kFeasibilityTol;
    std::string density_file; // optional SPKD grid replacing the parametric density
    std::string output;       // trajectory path; the command-line --out wins
    bool write_csv = false;   // also export the trajectory as CSV next to the SPKT file

    /// Checks every module invariant; throws InputError naming the key.
    void validate() const;
};

/// Parses config text. Unknown sections or keys, duplicates and malformed values throw
/// InputError with the source name and line number.
RunConfig parse_config(std::string_view text, std::string_view source = "<config>");

RunConfig load_config(const std::string& path);

/// Canonical text form; parse_config(format_config(c)) reproduces c.
std::string format_config(const RunConfig& cfg);

/// Fully qualified keys accepted by parse_config, as "section.key".
std::vector<std::string> config_keys();

}  // namespace ktraj
