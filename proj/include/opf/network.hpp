#pragma once

// Radial network data model, file ingestion, and tree-path primitives.

#include <Eigen/Dense>

#include <filesystem>
#include <istream>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

namespace opf {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Malformed or inconsistent input files.
struct ParseError : Error {
    using Error::Error;
};

/// Structurally valid input that violates a model precondition.
struct ValidationError : Error {
    using Error::Error;
};

/// Numerical failure inside a solver (non-convergence, voltage collapse).
struct SolverError : Error {
    using Error::Error;
};

/// Immutable radial network. Node ids are dense, root = 0. Line j is the
/// unique line (parent[j], j) feeding node j; per-line arrays are indexed by
/// the child node id (entry 0 unused).
struct Network {
    int node_count = 0;  // N, root excluded
    double v0 = 0.0;     // squared root voltage, p.u.^2

    std::vector<std::string> names;               // id -> external name
    std::unordered_map<std::string, int> id_of;   // external name -> id
    std::vector<int> parent;                      // parent[0] = -1
    std::vector<std::vector<int>> children;       // ascending ids
    std::vector<int> topo_order;                  // root first, parents before children
    Vec line_r, line_x, line_z2;                  // series impedance per line
    Vec p_nom, q_nom;                             // nominal injections (loads < 0)
    std::vector<char> controllable;               // per node

    int size() const { return node_count + 1; }
    bool valid_node(int id) const { return id >= 0 && id <= node_count; }
    void require_node(int id) const {
        if (!valid_node(id)) throw ValidationError("unknown node id " + std::to_string(id));
    }
};

/// Per-node feasible injection rectangles. Non-controllable nodes are pinned
/// (lower == upper == nominal) so a componentwise clamp leaves them fixed.
struct InjectionBox {
    Vec p_lo, p_hi, q_lo, q_hi;
    std::vector<char> controllable;

    void validate() const;
};

/// Common-path resistance/reactance sums and root-path indicators.
/// R(j,h) = sum of 2*r over the shared prefix of the root paths of j and h;
/// rows/columns at index 0 are zero (empty common path with the root).
struct PathIndex {
    Mat R, X;
    std::vector<std::vector<char>> on_path;  // on_path[j][h]: j lies on h's root path
    std::vector<int> depth;

    bool is_on_path(int j, int h) const { return on_path[size_t(j)][size_t(h)] != 0; }
};

Network parse_network(const std::filesystem::path& path);
Network parse_network_json(std::istream& in, const std::string& origin = "<stream>");

/// Line ids (child node ids) of the path from the root down to h, in
/// root-to-h order. Empty for the root itself.
std::vector<int> path_to_root(const Network& net, int h);

/// Line ids of every line in the subtree rooted at xi, including the lines
/// leaving xi. Ascending id order; empty for leaves.
std::vector<int> downstream_lines(const Network& net, int xi);

PathIndex build_path_index(const Network& net);

}  // namespace opf
