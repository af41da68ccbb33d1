// philbench: scenario-driven front end for the virtual PHIL testbench.
//
//   philbench <analyze|simulate|sweep|cosim> <scenario-file>
//             [--out <dir>] [--seed <u64>] [--epsilon <float>]
//
// The subcommand selects the run mode (overriding any `mode =` line in the
// scenario). Artifacts are written atomically into the output directory; a
// simulate run whose trace diverges still exits 0, because divergence is a
// measured result, not a tool failure. All diagnostics go to stderr as
// single `error: ...` lines so batch drivers can parse them.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include <CLI11.hpp>

#include "phil/errors.hpp"
#include "phil/io.hpp"
#include "phil/runner.hpp"
#include "phil/scenario.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitRunFailed = 1;
constexpr int kExitBadInput = 2;

std::optional<std::string> read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) return std::nullopt;
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

/// One `error:` line per problem; the parser's list arrives '\n'-separated.
void print_errors(const std::string& what) {
    std::istringstream in(what);
    std::string line;
    bool printed = false;
    while (std::getline(in, line)) {
        while (!line.empty() && line.front() == ' ') line.erase(line.begin());
        if (line.empty()) continue;
        std::cerr << "error: " << line << "\n";
        printed = true;
    }
    if (!printed) std::cerr << "error: unknown failure\n";
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"virtual power-hardware-in-the-loop testbench"};
    app.require_subcommand(1);

    std::string scenario_path;
    std::string out_dir;
    std::optional<std::uint64_t> seed;
    std::optional<double> epsilon;

    const std::pair<const char*, phil::RunMode> modes[] = {
        {"analyze", phil::RunMode::analyze},
        {"simulate", phil::RunMode::simulate},
        {"sweep", phil::RunMode::sweep},
        {"cosim", phil::RunMode::cosim},
    };
    const char* descriptions[] = {
        "frequency-domain verdict and response for the scenario's loop",
        "time-domain closed-loop run with accuracy against the direct reference",
        "stability map over a ratio x delay grid (cells run concurrently)",
        "co-simulated split bench under the configured master",
    };
    phil::RunMode mode = phil::RunMode::analyze;
    int i = 0;
    for (const auto& [name, value] : modes) {
        CLI::App* sub = app.add_subcommand(name, descriptions[i++]);
        sub->add_option("file", scenario_path, "scenario file")->required();
        sub->add_option("--out", out_dir, "output directory (overrides the scenario's out_dir)");
        sub->add_option("--seed", seed, "master seed (overrides the scenario's seed)");
        sub->add_option("--epsilon", epsilon, "uncertainty margin (overrides the scenario's epsilon)");
        sub->callback([&mode, value] { mode = value; });
    }

    CLI11_PARSE(app, argc, argv);

    const std::optional<std::string> text = read_file(scenario_path);
    if (!text) {
        std::cerr << "error: cannot read scenario file '" << scenario_path << "'\n";
        return kExitBadInput;
    }

    phil::Scenario scenario;
    try {
        scenario = phil::parse_scenario(*text);
    } catch (const phil::ConfigError& e) {
        print_errors(e.what());
        return kExitBadInput;
    }

    scenario.mode = mode;
    if (seed) scenario.set_seed(*seed);
    if (epsilon) {
        if (*epsilon < 0.0) {
            std::cerr << "error: --epsilon must satisfy epsilon >= 0, got " << *epsilon << "\n";
            return kExitBadInput;
        }
        scenario.epsilon = *epsilon;
    }
    if (!out_dir.empty()) scenario.out_dir = out_dir;

    // The mode override can invalidate a scenario that parsed fine for its
    // declared mode; re-validating the canonical form catches that with the
    // same diagnostics the parser gives. The re-parsed value is the one that
    // runs, so what executes is exactly what the canonical form describes.
    try {
        phil::Scenario check = phil::parse_scenario(phil::serialize_scenario(scenario));
        check.out_dir = scenario.out_dir;
        scenario = std::move(check);
    } catch (const phil::ConfigError& e) {
        print_errors(e.what());
        return kExitBadInput;
    }

    phil::RunArtifacts artifacts;
    try {
        artifacts = phil::run_scenario(scenario);
    } catch (const std::exception& e) {
        print_errors(e.what());
        return kExitRunFailed;
    }

    try {
        std::filesystem::create_directories(scenario.out_dir);
        for (const auto& [name, content] : artifacts.files) {
            const std::filesystem::path path = std::filesystem::path(scenario.out_dir) / name;
            phil::write_file_atomic(path, content);
            std::cout << "wrote " << path.string() << "\n";
        }
    } catch (const std::exception& e) {
        print_errors(e.what());
        return kExitRunFailed;
    }

    if (artifacts.diverged) std::cout << "note: the trace diverged (see the CSV header comment)\n";
    return kExitOk;
}
