#pragma once
// cli.hpp — single-binary command-line surface (gen-data / pretrain /
// finetune / sample / eval / grad-check / inspect).

#include <string>
#include <utility>
#include <vector>

namespace ppc::cli {

// Written into <out>/run_manifest.txt before any work starts.
struct RunManifest {
    std::string command;
    std::string config_path;  // empty when flags only
    std::string out_dir;
    std::string version;
    uint64_t seed = 0;
    std::vector<std::pair<std::string, std::string>> resolved;  // final settings
};

void write_manifest(const RunManifest& m, const std::string& path);

// PPC_THREADS env cap (>= 1); hardware concurrency when unset
int thread_cap();

// "2..3" -> {2, 3}; "2" -> {2, 2}; error bad-config otherwise
std::pair<int, int> parse_people_range(const std::string& text);

// exit code: 0 success, 1 runtime/config/io failure, 2 usage error
int dispatch(int argc, const char* const* argv);

}  // namespace ppc::cli
