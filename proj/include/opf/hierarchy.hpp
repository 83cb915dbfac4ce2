#pragma once

// Subtree clustering of a radial feeder and the central-controller /
// regional-controller assembly of the dual-weighted sensitivity products.

#include "opf/network.hpp"
#include "opf/powerflow.hpp"
#include "opf/problem.hpp"

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

namespace opf {

/// Partition of the non-root nodes into K disjoint connected subtrees plus a
/// set of unclustered (backbone) nodes.
struct Clustering {
    std::vector<int> subtree_root;                // n_k^0 per subtree
    std::vector<std::vector<int>> subtree_nodes;  // ascending ids, root included
    std::vector<int> unclustered;                 // ascending ids
    std::vector<int> cluster_of;                  // per node: subtree index or -1

    int count() const { return int(subtree_root.size()); }
};

Clustering parse_clustering(const std::filesystem::path& path, const Network& net);
Clustering parse_clustering_json(std::istream& in, const Network& net,
                                 const std::string& origin = "<stream>");

struct ClusteringViolation {
    std::string kind;    // "overlap" | "coverage" | "connectivity" | "assumption2" | "structure"
    std::string detail;
};

struct ClusteringReport {
    bool ok = false;
    std::vector<ClusteringViolation> violations;

    std::string to_string() const;
};

/// Checks the partition (disjointness and full coverage), per-subtree
/// connectivity under the declared roots, and the backbone-path rule: root
/// paths of subtree roots and unclustered nodes may only visit unclustered
/// nodes. Violations are reported, not thrown.
ClusteringReport validate_clustering(const Network& net, const Clustering& c);

enum class MessageRound { rc_to_cc, cc_to_rc, cc_to_node, rc_to_node };

const char* to_string(MessageRound round);

struct MessageRecord {
    int iteration = 0;
    std::string sender, receiver;
    int payload_scalars = 0;
    MessageRound round = MessageRound::rc_to_cc;
};

struct MessageLog {
    std::vector<MessageRecord> records;

    int count(int iteration, MessageRound round) const;
};

/// Regional sum sum_{j in subtree k} (1 - |z|^2 ell / v_i)(mu_hi - mu_lo)_j,
/// with i the parent of j (possibly outside the subtree at its root).
double rc_weighted_dual_sum(const Network& net, const Clustering& c, int k,
                            const DualState& duals, const PowerFlowState& state);

/// Cross-subtree coupling for destination subtree k_dest: the other regional
/// sums weighted by the common-path sums between subtree roots.
double cc_cross_subtree_term(const PathIndex& idx, const Clustering& c, int k_dest,
                             const std::vector<double>& rc_sums, bool use_reactance);

/// Destination of a backbone contribution: either a single unclustered node
/// or a whole subtree (which shares one evaluation at its root).
struct BackboneDest {
    bool is_subtree = false;
    int index = 0;  // node id, or subtree index

    static BackboneDest node(int id) { return {false, id}; }
    static BackboneDest subtree(int k) { return {true, k}; }
};

struct BackboneTerm {
    double alpha = 0.0, beta = 0.0;
};

/// Contribution of the unclustered nodes j to alpha_h/beta_h for the given
/// destination, evaluated entry by entry at the central controller.
BackboneTerm cc_backbone_term(const Network& net, const PathIndex& idx, const Clustering& c,
                              const PowerFlowState& state, const DualState& duals,
                              const BackboneDest& dest);

struct AlphaBeta {
    Vec alpha, beta;
};

/// Full hierarchical assembly of the dual-weighted sensitivity products for
/// every node, with the message pattern appended to `log` when non-null.
AlphaBeta assemble_alpha_beta(const Network& net, const PathIndex& idx, const Clustering& c,
                              const PowerFlowState& state, const DualState& duals,
                              MessageLog* log = nullptr, int iteration = 0);

/// Hierarchical run: identical iterate sequence to the centralized improved
/// mode up to floating-point summation order. Rejects invalid clusterings.
std::pair<Trajectory, MessageLog> run_hierarchical(const OpfProblem& prob, const Clustering& c,
                                                   const InjectionVector& u0);

}  // namespace opf
