#include "opf/hierarchy.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

namespace opf {

namespace {

using nlohmann::json;

int resolve(const Network& net, const std::string& name, const std::string& origin) {
    auto it = net.id_of.find(name);
    if (it == net.id_of.end()) throw ParseError(origin + ": unknown node '" + name + "'");
    return it->second;
}

}  // namespace

Clustering parse_clustering_json(std::istream& in, const Network& net, const std::string& origin) {
    json doc;
    try {
        doc = json::parse(in);
    } catch (const json::exception& e) {
        throw ParseError(origin + ": malformed JSON: " + e.what());
    }
    if (!doc.is_object() || !doc.contains("subtrees") || !doc["subtrees"].is_array())
        throw ParseError(origin + ": missing 'subtrees' array");
    Clustering c;
    c.cluster_of.assign(size_t(net.node_count) + 1, -1);
    for (const auto& st : doc["subtrees"]) {
        if (!st.is_object() || !st.contains("root") || !st.contains("nodes"))
            throw ParseError(origin + ": subtree needs 'root' and 'nodes'");
        const int root = resolve(net, st["root"].get<std::string>(), origin);
        std::vector<int> nodes;
        for (const auto& nm : st["nodes"]) nodes.push_back(resolve(net, nm.get<std::string>(), origin));
        std::sort(nodes.begin(), nodes.end());
        nodes.erase(std::unique(nodes.begin(), nodes.end()), nodes.end());
        const int k = int(c.subtree_root.size());
        for (int id : nodes)
            if (c.cluster_of[size_t(id)] == -1) c.cluster_of[size_t(id)] = k;
        c.subtree_root.push_back(root);
        c.subtree_nodes.push_back(std::move(nodes));
    }
    if (doc.contains("unclustered")) {
        if (!doc["unclustered"].is_array()) throw ParseError(origin + ": 'unclustered' must be an array");
        for (const auto& nm : doc["unclustered"])
            c.unclustered.push_back(resolve(net, nm.get<std::string>(), origin));
        std::sort(c.unclustered.begin(), c.unclustered.end());
        c.unclustered.erase(std::unique(c.unclustered.begin(), c.unclustered.end()),
                            c.unclustered.end());
    }
    return c;
}

Clustering parse_clustering(const std::filesystem::path& path, const Network& net) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open " + path.string());
    return parse_clustering_json(in, net, path.string());
}

std::string ClusteringReport::to_string() const {
    if (ok) return "ok";
    std::ostringstream os;
    for (const auto& v : violations) os << v.kind << ": " << v.detail << "\n";
    return os.str();
}

ClusteringReport validate_clustering(const Network& net, const Clustering& c) {
    ClusteringReport rep;
    const int n = net.node_count;
    auto name = [&](int id) { return net.names[size_t(id)]; };

    std::vector<int> owner(size_t(n) + 1, -2);  // -2 unseen, -1 unclustered, k subtree
    auto claim = [&](int id, int who, const std::string& where) {
        if (id == 0) {
            rep.violations.push_back({"structure", "the network root cannot be clustered"});
            return;
        }
        if (owner[size_t(id)] != -2) {
            rep.violations.push_back(
                {"overlap", "node " + name(id) + " appears in " + where + " and elsewhere"});
            return;
        }
        owner[size_t(id)] = who;
    };

    for (int k = 0; k < c.count(); ++k) {
        const auto& nodes = c.subtree_nodes[size_t(k)];
        if (nodes.empty()) {
            rep.violations.push_back({"structure", "subtree " + std::to_string(k) + " is empty"});
            continue;
        }
        for (int id : nodes) claim(id, k, "subtree " + std::to_string(k));
        if (!std::binary_search(nodes.begin(), nodes.end(), c.subtree_root[size_t(k)])) {
            rep.violations.push_back({"structure", "declared root " + name(c.subtree_root[size_t(k)]) +
                                                       " is not in subtree " + std::to_string(k)});
            continue;
        }
        const int root = c.subtree_root[size_t(k)];
        const std::set<int> members(nodes.begin(), nodes.end());
        if (root != 0 && members.count(net.parent[size_t(root)])) {
            rep.violations.push_back({"connectivity", "parent of declared root " + name(root) +
                                                          " lies inside subtree " + std::to_string(k)});
        }
        for (int id : nodes) {
            int a = id;
            while (a != root) {
                a = net.parent[size_t(a)];
                if (a < 0 || (a != root && !members.count(a))) {
                    rep.violations.push_back({"connectivity",
                                              "node " + name(id) + " cannot reach root " +
                                                  name(root) + " inside subtree " +
                                                  std::to_string(k)});
                    break;
                }
            }
        }
    }
    for (int id : c.unclustered) claim(id, -1, "unclustered set");
    for (int id = 1; id <= n; ++id) {
        if (owner[size_t(id)] == -2)
            rep.violations.push_back({"coverage", "node " + name(id) + " is in no subtree and not unclustered"});
    }

    // backbone rule: root paths of subtree roots and unclustered nodes may
    // only visit unclustered nodes
    auto check_backbone_path = [&](int start, const std::string& what) {
        for (int a = net.parent[size_t(start)]; a > 0; a = net.parent[size_t(a)]) {
            if (owner[size_t(a)] >= 0) {
                rep.violations.push_back(
                    {"assumption2", "path of " + what + " " + name(start) +
                                        " passes through node " + name(a) + " in subtree " +
                                        std::to_string(owner[size_t(a)])});
                return;
            }
        }
    };
    for (int k = 0; k < c.count(); ++k) {
        const auto& nodes = c.subtree_nodes[size_t(k)];
        if (!nodes.empty() &&
            std::binary_search(nodes.begin(), nodes.end(), c.subtree_root[size_t(k)])) {
            // only meaningful when membership is sane; skip otherwise
            int root = c.subtree_root[size_t(k)];
            check_backbone_path(root, "subtree root");
        }
    }
    for (int id : c.unclustered) check_backbone_path(id, "unclustered node");

    rep.ok = rep.violations.empty();
    return rep;
}

const char* to_string(MessageRound round) {
    switch (round) {
        case MessageRound::rc_to_cc: return "rc->cc";
        case MessageRound::cc_to_rc: return "cc->rc";
        case MessageRound::cc_to_node: return "cc->node";
        case MessageRound::rc_to_node: return "rc->node";
    }
    return "?";
}

int MessageLog::count(int iteration, MessageRound round) const {
    int c = 0;
    for (const auto& m : records)
        if (m.iteration == iteration && m.round == round) ++c;
    return c;
}

double rc_weighted_dual_sum(const Network& net, const Clustering& c, int k, const DualState& duals,
                            const PowerFlowState& state) {
    double sum = 0.0;
    for (int j : c.subtree_nodes[size_t(k)]) {
        const int i = net.parent[size_t(j)];
        if (state.v[i] <= 0.0)
            throw ValidationError("nonpositive voltage at node " + net.names[size_t(i)]);
        const double w = 1.0 - net.line_z2[j] * state.ell[j] / state.v[i];
        sum += w * (duals.mu_hi[j] - duals.mu_lo[j]);
    }
    return sum;
}

double cc_cross_subtree_term(const PathIndex& idx, const Clustering& c, int k_dest,
                             const std::vector<double>& rc_sums, bool use_reactance) {
    const Mat& W = use_reactance ? idx.X : idx.R;
    const int dest_root = c.subtree_root[size_t(k_dest)];
    double sum = 0.0;
    for (int k = 0; k < c.count(); ++k) {
        if (k == k_dest) continue;
        sum += W(dest_root, c.subtree_root[size_t(k)]) * rc_sums[size_t(k)];
    }
    return sum;
}

BackboneTerm cc_backbone_term(const Network& net, const PathIndex& idx, const Clustering& c,
                              const PowerFlowState& state, const DualState& duals,
                              const BackboneDest& dest) {
    const int h = dest.is_subtree ? c.subtree_root[size_t(dest.index)] : dest.index;
    BackboneTerm term;
    for (int j : c.unclustered) {
        const SensitivityEntry e = improved_entry(net, idx, state, j, h);
        const double dmu = duals.mu_hi[j] - duals.mu_lo[j];
        term.alpha += e.dv_dp * dmu;
        term.beta += e.dv_dq * dmu;
    }
    return term;
}

AlphaBeta assemble_alpha_beta(const Network& net, const PathIndex& idx, const Clustering& c,
                              const PowerFlowState& state, const DualState& duals, MessageLog* log,
                              int iteration) {
    const int n = net.node_count;
    AlphaBeta out{Vec::Zero(n + 1), Vec::Zero(n + 1)};
    const int K = c.count();

    auto send = [&](std::string from, std::string to, int payload, MessageRound round) {
        if (log) log->records.push_back({iteration, std::move(from), std::move(to), payload, round});
    };
    auto rc_name = [](int k) { return "rc" + std::to_string(k + 1); };

    // step 4: every RC reports its weighted dual sum
    std::vector<double> rc_sums(size_t(K), 0.0);
    for (int k = 0; k < K; ++k) {
        rc_sums[size_t(k)] = rc_weighted_dual_sum(net, c, k, duals, state);
        send(rc_name(k), "cc", 1, MessageRound::rc_to_cc);
    }

    // step 5: CC combines cross-subtree and backbone contributions
    std::vector<BackboneTerm> cc_for_subtree(static_cast<size_t>(K));
    for (int k = 0; k < K; ++k) {
        const double cross_r = cc_cross_subtree_term(idx, c, k, rc_sums, false);
        const double cross_x = cc_cross_subtree_term(idx, c, k, rc_sums, true);
        const BackboneTerm bt = cc_backbone_term(net, idx, c, state, duals, BackboneDest::subtree(k));
        cc_for_subtree[size_t(k)] = {cross_r + bt.alpha, cross_x + bt.beta};
        send("cc", rc_name(k), 2, MessageRound::cc_to_rc);
    }
    for (int h : c.unclustered) {
        double cross_r = 0.0, cross_x = 0.0;
        for (int k = 0; k < K; ++k) {
            cross_r += idx.R(h, c.subtree_root[size_t(k)]) * rc_sums[size_t(k)];
            cross_x += idx.X(h, c.subtree_root[size_t(k)]) * rc_sums[size_t(k)];
        }
        const BackboneTerm bt = cc_backbone_term(net, idx, c, state, duals, BackboneDest::node(h));
        out.alpha[h] = cross_r + bt.alpha;
        out.beta[h] = cross_x + bt.beta;
        send("cc", "node:" + net.names[size_t(h)], 2, MessageRound::cc_to_node);
    }

    // step 6: each RC adds its in-subtree terms and forwards per node
    for (int k = 0; k < K; ++k) {
        for (int h : c.subtree_nodes[size_t(k)]) {
            double a = 0.0, b = 0.0;
            for (int j : c.subtree_nodes[size_t(k)]) {
                const SensitivityEntry e = improved_entry(net, idx, state, j, h);
                const double dmu = duals.mu_hi[j] - duals.mu_lo[j];
                a += e.dv_dp * dmu;
                b += e.dv_dq * dmu;
            }
            out.alpha[h] = a + cc_for_subtree[size_t(k)].alpha;
            out.beta[h] = b + cc_for_subtree[size_t(k)].beta;
            send(rc_name(k), "node:" + net.names[size_t(h)], 2, MessageRound::rc_to_node);
        }
    }
    return out;
}

std::pair<Trajectory, MessageLog> run_hierarchical(const OpfProblem& prob, const Clustering& c,
                                                   const InjectionVector& u0) {
    const ClusteringReport rep = validate_clustering(*prob.net, c);
    if (!rep.ok) throw ValidationError("invalid clustering:\n" + rep.to_string());

    MessageLog log;
    const Network& net = *prob.net;
    AlphaBetaFn alpha_beta = [&](int t, const InjectionVector&, const PowerFlowState& state,
                                 const DualState& duals, Vec& alpha, Vec& beta) {
        AlphaBeta ab = assemble_alpha_beta(net, prob.idx, c, state, duals, &log, t);
        alpha = std::move(ab.alpha);
        beta = std::move(ab.beta);
    };
    Trajectory traj = run_primal_dual_loop(prob, /*model_dual_voltages=*/false, u0, alpha_beta);
    return {std::move(traj), std::move(log)};
}

}  // namespace opf
