#pragma once

// Scenario runner: wires files, load scaling, and the solvers together and
// emits machine-readable results.

#include "opf/hierarchy.hpp"
#include "opf/network.hpp"
#include "opf/problem.hpp"

#include <filesystem>
#include <optional>
#include <string>

namespace opf {

struct ScenarioConfig {
    double v_min_mag = 0.95;
    double v_max_mag = 1.05;
    double sigma_u = 2e-3;
    double sigma_mu = 1e-3;
    double epsilon = 1e-4;
    double delta = 1e-6;
    int max_iterations = 5000;
    int stop_window = 25;
    double curtail_fraction = 0.3;
    double fd_step = 1e-5;
    double solver_tol = 1e-10;
    int solver_max_sweeps = 500;
    std::optional<std::string> mode;   // none | linear | improved | fd
    std::optional<double> load_scale;
};

ScenarioConfig load_config(const std::filesystem::path& path);

struct Scenario {
    std::filesystem::path network_path;
    std::filesystem::path clustering_path;  // empty unless hierarchical
    std::filesystem::path out_dir;
    std::string mode = "improved";
    bool hierarchical = false;
    double load_scale = 1.0;
    ScenarioConfig config;
};

enum ExitCode : int {
    exit_ok = 0,
    exit_nonconvergence = 3,
    exit_validation = 4,
    exit_solver_failure = 5,
};

/// Nominal injections multiplied by factor; topology unchanged.
Network scale_loads(const Network& net, double factor);

/// Feasible boxes per the curtailment rule: load nodes may curtail to
/// fraction * nominal; nodes with nonnegative nominal p or q are pinned.
InjectionBox derive_injection_box(const Network& net, double curtail_fraction = 0.3);

/// Runs one scenario and writes voltages_final.csv, trajectory.csv,
/// summary.json and (for hierarchical runs) messages.csv into out_dir.
int run_scenario(const Scenario& s);

/// Parses and validates the referenced files, printing findings.
int validate_files(const std::filesystem::path& network_path,
                   const std::filesystem::path& clustering_path = {});

}  // namespace opf
