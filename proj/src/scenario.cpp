#include "opf/scenario.hpp"

#include <nlohmann/json.hpp>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <limits>
#include <sstream>

namespace opf {

namespace {

using nlohmann::json;

std::string fmt(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

void read_if(const json& doc, const char* key, double& field) {
    if (doc.contains(key)) field = doc.at(key).get<double>();
}

void read_if(const json& doc, const char* key, int& field) {
    if (doc.contains(key)) field = doc.at(key).get<int>();
}

}  // namespace

ScenarioConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open " + path.string());
    json doc;
    try {
        doc = json::parse(in);
    } catch (const json::exception& e) {
        throw ParseError(path.string() + ": malformed JSON: " + e.what());
    }
    ScenarioConfig cfg;
    read_if(doc, "v_min_pu", cfg.v_min_mag);
    read_if(doc, "v_max_pu", cfg.v_max_mag);
    read_if(doc, "sigma_u", cfg.sigma_u);
    read_if(doc, "sigma_mu", cfg.sigma_mu);
    read_if(doc, "epsilon", cfg.epsilon);
    read_if(doc, "delta", cfg.delta);
    read_if(doc, "max_iterations", cfg.max_iterations);
    read_if(doc, "stop_window", cfg.stop_window);
    read_if(doc, "curtail_fraction", cfg.curtail_fraction);
    read_if(doc, "fd_step", cfg.fd_step);
    read_if(doc, "solver_tol", cfg.solver_tol);
    read_if(doc, "solver_max_sweeps", cfg.solver_max_sweeps);
    if (doc.contains("mode")) cfg.mode = doc.at("mode").get<std::string>();
    if (doc.contains("load_scale")) cfg.load_scale = doc.at("load_scale").get<double>();
    return cfg;
}

Network scale_loads(const Network& net, double factor) {
    if (!(factor > 0.0)) throw ValidationError("load scale factor must be positive");
    Network scaled = net;
    scaled.p_nom *= factor;
    scaled.q_nom *= factor;
    return scaled;
}

InjectionBox derive_injection_box(const Network& net, double curtail_fraction) {
    const int n = net.node_count;
    InjectionBox box;
    box.p_lo = net.p_nom;
    box.p_hi = net.p_nom;
    box.q_lo = net.q_nom;
    box.q_hi = net.q_nom;
    box.controllable.assign(size_t(n) + 1, 0);
    for (int h = 1; h <= n; ++h) {
        if (!net.controllable[size_t(h)]) continue;
        if (net.p_nom[h] >= 0.0 || net.q_nom[h] >= 0.0) continue;  // not a load: pinned
        box.controllable[size_t(h)] = 1;
        box.p_hi[h] = curtail_fraction * net.p_nom[h];
        box.q_hi[h] = curtail_fraction * net.q_nom[h];
    }
    box.validate();
    return box;
}

namespace {

void write_voltages_csv(const std::filesystem::path& path, const Network& net, const Vec& v) {
    std::ofstream out(path);
    out << "node,v_mag_pu\n";
    for (int j = 0; j <= net.node_count; ++j)
        out << net.names[size_t(j)] << "," << fmt(std::sqrt(v[j])) << "\n";
}

void write_trajectory_csv(const std::filesystem::path& path, const Network& net,
                          const Trajectory& traj) {
    std::ofstream out(path);
    out << "iteration";
    for (int j = 0; j <= net.node_count; ++j) out << ",v_" << net.names[size_t(j)];
    out << ",step_norm,objective\n";
    for (const auto& rec : traj.records) {
        out << rec.iteration;
        for (int j = 0; j <= net.node_count; ++j) out << "," << fmt(rec.v[j]);
        out << "," << fmt(rec.step_norm) << "," << fmt(rec.objective) << "\n";
    }
}

void write_messages_csv(const std::filesystem::path& path, const MessageLog& log) {
    std::ofstream out(path);
    out << "iteration,sender,receiver,payload_scalars,round\n";
    for (const auto& m : log.records) {
        out << m.iteration << "," << m.sender << "," << m.receiver << "," << m.payload_scalars
            << "," << to_string(m.round) << "\n";
    }
}

struct RunOutputs {
    Vec final_v;
    int iterations = 0;
    Termination termination = Termination::converged;
    double objective = 0.0;
    std::string failure_message;
};

void write_summary(const std::filesystem::path& path, const Scenario& s, const Network& net,
                   const RunOutputs& out, double wall_seconds) {
    json doc;
    double vmin = std::numeric_limits<double>::infinity(), vmax = 0.0;
    for (int j = 1; j <= net.node_count; ++j) {
        vmin = std::min(vmin, out.final_v[j]);
        vmax = std::max(vmax, out.final_v[j]);
    }
    doc["network"] = s.network_path.filename().string();
    doc["mode"] = s.mode;
    doc["hierarchical"] = s.hierarchical;
    doc["load_scale"] = s.load_scale;
    doc["num_nodes"] = net.node_count;
    doc["min_voltage_pu"] = std::sqrt(vmin);
    doc["max_voltage_pu"] = std::sqrt(vmax);
    doc["iterations"] = out.iterations;
    doc["termination"] = to_string(out.termination);
    doc["objective"] = out.objective;
    if (!out.failure_message.empty()) doc["failure"] = out.failure_message;
    doc["wall_time_s"] = wall_seconds;
    const auto now = std::chrono::system_clock::now();
    doc["timestamp_unix"] = std::chrono::duration_cast<std::chrono::seconds>(now.time_since_epoch()).count();
    std::ofstream f(path);
    f << doc.dump(1) << "\n";
}

GradientMode mode_from_string(const std::string& s) {
    if (s == "linear") return GradientMode::linear;
    if (s == "improved") return GradientMode::improved;
    if (s == "fd") return GradientMode::finite_difference;
    throw ValidationError("unknown mode '" + s + "'");
}

}  // namespace

int run_scenario(const Scenario& s) {
    const auto t_start = std::chrono::steady_clock::now();
    Network net;
    Clustering clustering;
    OpfProblem prob;
    try {
        net = scale_loads(parse_network(s.network_path), s.load_scale);
        if (s.hierarchical) {
            if (s.mode != "improved")
                throw ValidationError("hierarchical runs require --mode improved");
            if (s.clustering_path.empty())
                throw ValidationError("hierarchical runs require --clustering");
            clustering = parse_clustering(s.clustering_path, net);
            const ClusteringReport rep = validate_clustering(net, clustering);
            if (!rep.ok) throw ValidationError("invalid clustering:\n" + rep.to_string());
        }
        if (s.mode != "none" && s.mode != "linear" && s.mode != "improved" && s.mode != "fd")
            throw ValidationError("unknown mode '" + s.mode + "'");

        const InjectionBox box = derive_injection_box(net, s.config.curtail_fraction);
        prob = make_problem(net, box, s.config.v_min_mag, s.config.v_max_mag);
        prob.sigma_u = s.config.sigma_u;
        prob.sigma_mu = s.config.sigma_mu;
        prob.epsilon = s.config.epsilon;
        prob.delta = s.config.delta;
        prob.max_iterations = s.config.max_iterations;
        prob.stop_window = s.config.stop_window;
        prob.fd_step = s.config.fd_step;
        prob.solver.tol = s.config.solver_tol;
        prob.solver.max_sweeps = s.config.solver_max_sweeps;
        prob.validate();
        std::filesystem::create_directories(s.out_dir);
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return exit_validation;
    }

    RunOutputs out;
    try {
        if (s.mode == "none") {
            const PowerFlowState state = solve_nonlinear(net, nominal_injections(net), prob.solver);
            out.final_v = state.v;
            out.termination = Termination::converged;
            Trajectory traj;
            IterationRecord rec;
            rec.iteration = 0;
            rec.u = nominal_injections(net);
            rec.v = state.v;
            rec.duals = zero_duals(net);
            rec.objective = 0.0;
            rec.step_norm = 0.0;
            traj.records.push_back(std::move(rec));
            write_trajectory_csv(s.out_dir / "trajectory.csv", net, traj);
        } else {
            const InjectionVector u0 = project_box(nominal_injections(net), prob.box);
            Trajectory traj;
            MessageLog log;
            if (s.hierarchical) {
                auto pair = run_hierarchical(prob, clustering, u0);
                traj = std::move(pair.first);
                log = std::move(pair.second);
                write_messages_csv(s.out_dir / "messages.csv", log);
            } else {
                traj = run_centralized(prob, mode_from_string(s.mode), u0);
            }
            if (traj.records.empty() || traj.termination == Termination::solver_failure) {
                const auto wall = std::chrono::duration<double>(std::chrono::steady_clock::now() -
                                                                t_start).count();
                out.termination = Termination::solver_failure;
                out.failure_message = traj.failure_message;
                out.iterations = traj.iterations;
                if (!traj.records.empty()) {
                    out.final_v = traj.final_record().v;
                    write_voltages_csv(s.out_dir / "voltages_final.csv", net, out.final_v);
                    write_trajectory_csv(s.out_dir / "trajectory.csv", net, traj);
                    write_summary(s.out_dir / "summary.json", s, net, out, wall);
                }
                std::cerr << "error: " << traj.failure_message << "\n";
                return exit_solver_failure;
            }
            write_trajectory_csv(s.out_dir / "trajectory.csv", net, traj);
            out.final_v = traj.final_record().v;
            out.iterations = traj.iterations;
            out.termination = traj.termination;
            out.objective = traj.final_record().objective;
        }
    } catch (const SolverError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return exit_solver_failure;
    }

    write_voltages_csv(s.out_dir / "voltages_final.csv", net, out.final_v);
    const double wall =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
    write_summary(s.out_dir / "summary.json", s, net, out, wall);
    return out.termination == Termination::max_iterations ? exit_nonconvergence : exit_ok;
}

int validate_files(const std::filesystem::path& network_path,
                   const std::filesystem::path& clustering_path) {
    try {
        const Network net = parse_network(network_path);
        std::cout << "network " << network_path.filename().string() << ": ok (" << net.node_count
                  << " nodes + root, " << net.node_count << " lines)\n";
        if (!clustering_path.empty()) {
            const Clustering c = parse_clustering(clustering_path, net);
            const ClusteringReport rep = validate_clustering(net, c);
            if (!rep.ok) {
                std::cout << "clustering " << clustering_path.filename().string() << ": INVALID\n"
                          << rep.to_string();
                return exit_validation;
            }
            std::cout << "clustering " << clustering_path.filename().string() << ": ok (K="
                      << c.count() << ", unclustered=" << c.unclustered.size() << ")\n";
        }
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return exit_validation;
    }
    return exit_ok;
}

}  // namespace opf
