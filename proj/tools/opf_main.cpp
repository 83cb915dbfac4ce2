// Command-line front end: scenario runs and input validation.

#include "opf/scenario.hpp"

#include <CLI11.hpp>

#include <iostream>
#include <string>

int main(int argc, char** argv) {
    CLI::App app{"Voltage-constrained OPF on radial feeders via primal-dual gradient iteration"};
    app.require_subcommand(1);

    // run
    auto* run = app.add_subcommand("run", "Run a scenario and write result files");
    std::string network, clustering, config, out_dir;
    std::string mode;
    bool hierarchical = false;
    double load_scale = 0.0;
    run->add_option("--network", network, "Network file (.json or CSV directory)")->required();
    run->add_option("--clustering", clustering, "Clustering file (hierarchical runs)");
    run->add_option("--mode", mode, "none | linear | improved | fd");
    run->add_flag("--hierarchical", hierarchical, "Use the CC/RC hierarchical algorithm");
    run->add_option("--load-scale", load_scale, "Multiply nominal loads by this factor");
    run->add_option("--config", config, "Problem configuration JSON");
    run->add_option("--out", out_dir, "Output directory")->required();

    // validate
    auto* validate = app.add_subcommand("validate", "Validate network / clustering files");
    std::string v_network, v_clustering;
    validate->add_option("--network", v_network, "Network file")->required();
    validate->add_option("--clustering", v_clustering, "Clustering file");

    CLI11_PARSE(app, argc, argv);

    if (validate->parsed()) {
        return opf::validate_files(v_network, v_clustering);
    }

    opf::Scenario s;
    s.network_path = network;
    s.clustering_path = clustering;
    s.out_dir = out_dir;
    s.hierarchical = hierarchical;
    try {
        if (!config.empty()) s.config = opf::load_config(config);
    } catch (const opf::Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return opf::exit_validation;
    }
    if (!mode.empty()) {
        s.mode = mode;
    } else if (s.config.mode) {
        s.mode = *s.config.mode;
    } else {
        std::cerr << "error: --mode is required (or set \"mode\" in the config file)\n";
        return opf::exit_validation;
    }
    if (run->count("--load-scale") > 0) {
        s.load_scale = load_scale;
    } else if (s.config.load_scale) {
        s.load_scale = *s.config.load_scale;
    } else {
        s.load_scale = 1.0;
    }
    return opf::run_scenario(s);
}
