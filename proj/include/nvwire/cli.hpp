#pragma once

#include "nvwire/config.hpp"

#include <ostream>
#include <string>
#include <utility>
#include <vector>

namespace nvwire {

struct RunOptions {
    std::string command;       ///< simulate, vectormap, fit, hysteresis, export-mif, ingest-ovf
    std::string config_path;   ///< empty = defaults
    std::string out_dir = ".";
    std::string input;         ///< measured map CSV (fit) or OVF file (ingest-ovf)
    bool timestamp = true;     ///< false drops the timestamp and timings from the report
};

/// Plain-text run summary. Sections appear in a fixed order; timestamp and
/// timings are the only run-dependent content.
struct RunReport {
    std::string command;
    std::string timestamp;
    std::vector<std::pair<std::string, double>> timings;   ///< stage, seconds
    std::vector<std::pair<std::string, std::string>> summary;
    std::string feature_table;                             ///< CSV text, may be empty
    std::vector<std::pair<std::string, std::size_t>> manifest;  ///< file name, bytes
    std::string config_echo;

    std::string render() const;
};

/// Executes one subcommand and writes its files. Errors propagate as
/// nvwire::Error; `stage` names the step that was running.
RunReport run_command(const RunOptions& opt, std::string& stage);

/// Command-line entry. On failure prints one line
/// "error: stage=<stage> kind=<kind> message=<text>" to `err` and returns nonzero.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace nvwire
