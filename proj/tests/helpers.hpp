#pragma once

// Shared fixtures and independent oracles for the test suites. The oracles
// here deliberately avoid the library's sweep implementations: per-line
// scalar root finding, brute-force enumeration, and grid search.

#include "opf/hierarchy.hpp"
#include "opf/network.hpp"
#include "opf/powerflow.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <functional>
#include <random>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

namespace testutil {

using opf::InjectionVector;
using opf::Network;
using opf::Vec;

inline std::filesystem::path data_dir() {
    return std::filesystem::path(OPF_SOURCE_DIR) / "data";
}

/// Build a network from parent/impedance/load arrays (index 0 = root).
inline Network make_net(const std::vector<int>& parent, const std::vector<double>& r,
                        const std::vector<double>& x, const std::vector<double>& p,
                        const std::vector<double>& q, double v0 = 1.1025) {
    std::ostringstream os;
    os << "{\"v0_squared_pu\":" << v0 << ",\"nodes\":[";
    for (size_t i = 0; i < parent.size(); ++i) {
        if (i) os << ",";
        os << "{\"name\":\"n" << i << "\",\"p_nom_pu\":" << p[i] << ",\"q_nom_pu\":" << q[i]
           << ",\"controllable\":" << ((p[i] < 0 && q[i] < 0) ? "true" : "false") << "}";
    }
    os << "],\"lines\":[";
    bool first = true;
    for (size_t i = 1; i < parent.size(); ++i) {
        if (!first) os << ",";
        first = false;
        os << "{\"from\":\"n" << parent[i] << "\",\"to\":\"n" << i << "\",\"r_pu\":" << r[i]
           << ",\"x_pu\":" << x[i] << "}";
    }
    os << "]}";
    std::istringstream in(os.str());
    return opf::parse_network_json(in, "<make_net>");
}

/// The spec's running example: 0-1-2 chain, r = x = 0.01, load at node 2.
inline Network chain3() {
    return make_net({-1, 0, 1}, {0, 0.01, 0.01}, {0, 0.01, 0.01}, {0, 0, -0.1}, {0, 0, -0.05});
}

/// Deterministic random radial network. Node ids are topological by
/// construction; loads are placed on roughly 70% of the nodes.
inline Network random_net(std::mt19937& rng, int n, double load_scale = 0.05) {
    std::uniform_real_distribution<double> uni(0.0, 1.0);
    std::vector<int> parent(size_t(n) + 1, -1);
    std::vector<double> r(size_t(n) + 1, 0.0), x(size_t(n) + 1, 0.0);
    std::vector<double> p(size_t(n) + 1, 0.0), q(size_t(n) + 1, 0.0);
    for (int j = 1; j <= n; ++j) {
        const int lo = std::max(0, j - 5);
        parent[size_t(j)] = lo + int(uni(rng) * double(j - lo));
        r[size_t(j)] = 0.005 + 0.03 * uni(rng);
        x[size_t(j)] = 0.008 + 0.04 * uni(rng);
        if (uni(rng) < 0.7) {
            p[size_t(j)] = -load_scale * (0.4 + uni(rng));
            q[size_t(j)] = 0.5 * p[size_t(j)];
        }
    }
    return make_net(parent, r, x, p, q);
}

/// Scale the loads of `net` so the nonlinear minimum voltage magnitude lands
/// just below `target_mag`. Returns the scaled network.
inline Network scale_to_min_voltage(const Network& net, double target_mag) {
    double lo = 1e-4, hi = 60.0;
    for (int it = 0; it < 60; ++it) {
        const double mid = 0.5 * (lo + hi);
        Network probe = net;
        probe.p_nom *= mid;
        probe.q_nom *= mid;
        double mv = 0.0;
        try {
            mv = opf::min_voltage_magnitude(
                opf::solve_nonlinear(probe, opf::nominal_injections(probe), {1e-10, 500}));
        } catch (const opf::SolverError&) {
            mv = 0.0;
        }
        if (mv > target_mag)
            lo = mid;
        else
            hi = mid;
    }
    Network out = net;
    out.p_nom *= hi;
    out.q_nom *= hi;
    return out;
}

/// Independent nonlinear oracle for chain topologies: solves each line's
/// scalar current equation ell * v_in = P^2 + Q^2 by bisection (with the
/// line's own loss folded into P, Q), composed bottom-up along the chain,
/// inside an outer fixed-point loop on the node voltages.
inline Vec chain_oracle_voltages(const Network& net, const InjectionVector& u, double tol = 1e-13) {
    const int n = net.node_count;
    // demand that the network is a single chain 0-1-2-...-n
    for (int j = 1; j <= n; ++j)
        if (net.parent[size_t(j)] != j - 1) throw std::runtime_error("oracle needs a chain");
    Vec v = Vec::Constant(n + 1, net.v0);
    for (int outer = 0; outer < 20000; ++outer) {
        // accumulate sending-end flows bottom-up for the current voltages
        std::vector<double> P(size_t(n) + 1, 0.0), Q(size_t(n) + 1, 0.0), L(size_t(n) + 1, 0.0);
        for (int j = n; j >= 1; --j) {
            const double base_p = -u.p[j] + (j < n ? P[size_t(j) + 1] : 0.0);
            const double base_q = -u.q[j] + (j < n ? Q[size_t(j) + 1] : 0.0);
            const double vin = v[j - 1];
            const double rr = net.line_r[j], xx = net.line_x[j];
            auto f = [&](double ell) {
                const double pp = base_p + rr * ell;
                const double qq = base_q + xx * ell;
                return ell * vin - (pp * pp + qq * qq);
            };
            double lo = 0.0, hi = 1.0;
            while (f(hi) < 0.0 && hi < 1e6) hi *= 2.0;
            for (int it = 0; it < 200; ++it) {
                const double mid = 0.5 * (lo + hi);
                (f(mid) >= 0.0 ? hi : lo) = mid;
            }
            L[size_t(j)] = 0.5 * (lo + hi);
            P[size_t(j)] = base_p + rr * L[size_t(j)];
            Q[size_t(j)] = base_q + xx * L[size_t(j)];
        }
        double shift = 0.0;
        for (int j = 1; j <= n; ++j) {
            const double vj = v[j - 1] -
                              2.0 * (net.line_r[j] * P[size_t(j)] + net.line_x[j] * Q[size_t(j)]) +
                              net.line_z2[j] * L[size_t(j)];
            shift = std::max(shift, std::abs(vj - v[j]));
            v[j] = vj;
        }
        if (shift < tol) break;
    }
    return v;
}

/// Build a Clustering through the JSON parser from id-based sets.
inline opf::Clustering clustering_from_sets(
    const Network& net, const std::vector<std::pair<int, std::vector<int>>>& subtrees,
    const std::vector<int>& unclustered) {
    std::ostringstream os;
    os << "{\"subtrees\":[";
    for (size_t k = 0; k < subtrees.size(); ++k) {
        if (k) os << ",";
        os << "{\"root\":\"" << net.names[size_t(subtrees[k].first)] << "\",\"nodes\":[";
        for (size_t i = 0; i < subtrees[k].second.size(); ++i) {
            if (i) os << ",";
            os << "\"" << net.names[size_t(subtrees[k].second[i])] << "\"";
        }
        os << "]}";
    }
    os << "],\"unclustered\":[";
    for (size_t i = 0; i < unclustered.size(); ++i) {
        if (i) os << ",";
        os << "\"" << net.names[size_t(unclustered[i])] << "\"";
    }
    os << "]}";
    std::istringstream in(os.str());
    return opf::parse_clustering_json(in, net, "<clustering_from_sets>");
}

/// Random valid clustering: subtrees are full downstream sets of a random
/// antichain of internal nodes (each with at least one child); the rest of
/// the nodes are unclustered.
inline opf::Clustering random_valid_clustering(const Network& net, std::mt19937& rng) {
    std::vector<int> order(size_t(net.node_count));
    for (int j = 1; j <= net.node_count; ++j) order[size_t(j) - 1] = j;
    std::shuffle(order.begin(), order.end(), rng);
    std::vector<char> taken(size_t(net.node_count) + 1, 0);
    std::vector<std::pair<int, std::vector<int>>> subtrees;
    for (int cand : order) {
        if (int(subtrees.size()) >= 4) break;
        const auto lines = opf::downstream_lines(net, cand);
        if (lines.empty()) continue;
        bool clash = taken[size_t(cand)] != 0;
        for (int id : lines) clash = clash || taken[size_t(id)];
        for (int a = net.parent[size_t(cand)]; a > 0 && !clash; a = net.parent[size_t(a)])
            clash = clash || taken[size_t(a)];
        if (clash) continue;
        std::vector<int> members = lines;
        members.push_back(cand);
        std::sort(members.begin(), members.end());
        for (int id : members) taken[size_t(id)] = 1;
        subtrees.emplace_back(cand, std::move(members));
    }
    std::vector<int> unclustered;
    for (int j = 1; j <= net.node_count; ++j)
        if (!taken[size_t(j)]) unclustered.push_back(j);
    return clustering_from_sets(net, subtrees, unclustered);
}

/// Move one node across a boundary of a valid clustering produced by
/// random_valid_clustering. Every such move breaks validity.
inline opf::Clustering move_one_node(const opf::Clustering& c, std::mt19937& rng) {
    opf::Clustering mutated = c;
    const int which = int(rng() % 3);
    if (which == 0 || c.unclustered.empty()) {
        const int k = int(rng() % size_t(c.count()));
        auto& nodes = mutated.subtree_nodes[size_t(k)];
        int victim = nodes[rng() % nodes.size()];
        if (victim == mutated.subtree_root[size_t(k)])
            victim = nodes.back() == victim ? nodes.front() : nodes.back();
        nodes.erase(std::find(nodes.begin(), nodes.end(), victim));
        mutated.unclustered.insert(
            std::lower_bound(mutated.unclustered.begin(), mutated.unclustered.end(), victim),
            victim);
    } else if (which == 1 || c.count() < 2) {
        const int k = int(rng() % size_t(c.count()));
        const int victim = c.unclustered[rng() % c.unclustered.size()];
        auto& nodes = mutated.subtree_nodes[size_t(k)];
        nodes.insert(std::lower_bound(nodes.begin(), nodes.end(), victim), victim);
        mutated.unclustered.erase(
            std::find(mutated.unclustered.begin(), mutated.unclustered.end(), victim));
    } else {
        const int ka = int(rng() % size_t(c.count()));
        int kb = int(rng() % size_t(c.count()));
        if (ka == kb) kb = (kb + 1) % c.count();
        auto& from = mutated.subtree_nodes[size_t(ka)];
        int victim = from[rng() % from.size()];
        if (victim == mutated.subtree_root[size_t(ka)])
            victim = from.back() == victim ? from.front() : from.back();
        auto& to = mutated.subtree_nodes[size_t(kb)];
        from.erase(std::find(from.begin(), from.end(), victim));
        to.insert(std::lower_bound(to.begin(), to.end(), victim), victim);
    }
    return mutated;
}

/// Brute-force grid search with shrinking refinement for the 3-node OPF
/// oracle: minimizes the quadratic curtailment cost over the box subject to
/// nonlinear voltage limits checked point by point.
struct GridOracle {
    double objective = 0.0;
    double p = 0.0, q = 0.0;
};

inline GridOracle grid_opf_oracle(const Network& net, int node, double v_lo, double v_hi,
                                  double curtail = 0.3) {
    const double plo = net.p_nom[node], phi = curtail * net.p_nom[node];
    const double qlo = net.q_nom[node], qhi = curtail * net.q_nom[node];
    double blo_p = plo, bhi_p = phi, blo_q = qlo, bhi_q = qhi;
    GridOracle best;
    best.objective = std::numeric_limits<double>::infinity();
    InjectionVector u = opf::nominal_injections(net);
    for (int round = 0; round < 14; ++round) {
        for (int a = 0; a < 33; ++a) {
            for (int b = 0; b < 33; ++b) {
                const double pp = blo_p + (bhi_p - blo_p) * a / 32.0;
                const double qq = blo_q + (bhi_q - blo_q) * b / 32.0;
                u.p[node] = pp;
                u.q[node] = qq;
                opf::PowerFlowState st;
                try {
                    st = opf::solve_nonlinear(net, u, {1e-11, 500});
                } catch (const opf::SolverError&) {
                    continue;
                }
                bool ok = true;
                for (int j = 1; j <= net.node_count; ++j)
                    ok = ok && st.v[j] >= v_lo && st.v[j] <= v_hi;
                if (!ok) continue;
                const double f = (pp - net.p_nom[node]) * (pp - net.p_nom[node]) +
                                 (qq - net.q_nom[node]) * (qq - net.q_nom[node]);
                if (f < best.objective) best = {f, pp, qq};
            }
        }
        const double span_p = (bhi_p - blo_p) * 0.10, span_q = (bhi_q - blo_q) * 0.10;
        blo_p = std::max(plo, best.p - span_p);
        bhi_p = std::min(phi, best.p + span_p);
        blo_q = std::max(qlo, best.q - span_q);
        bhi_q = std::min(qhi, best.q + span_q);
    }
    return best;
}

}  // namespace testutil
