#include "opf/network.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cctype>
#include <deque>
#include <fstream>
#include <set>
#include <sstream>

namespace opf {

namespace {

using nlohmann::json;

struct RawNode {
    std::string name;
    double p = 0.0, q = 0.0;
    bool controllable = false;
};

struct RawLine {
    std::string from, to;
    double r = 0.0, x = 0.0;
};

struct RawNetwork {
    double v0 = 0.0;
    std::vector<RawNode> nodes;
    std::vector<RawLine> lines;
};

[[noreturn]] void fail(const std::string& origin, const std::string& what) {
    throw ParseError(origin + ": " + what);
}

Network assemble(const RawNetwork& raw, const std::string& origin) {
    if (raw.v0 <= 0.0) fail(origin, "nonpositive v0");
    if (raw.nodes.empty()) fail(origin, "no nodes");

    std::unordered_map<std::string, int> pos;  // name -> index in raw.nodes
    for (size_t i = 0; i < raw.nodes.size(); ++i) {
        if (!pos.emplace(raw.nodes[i].name, int(i)).second)
            fail(origin, "duplicate node name '" + raw.nodes[i].name + "'");
    }

    std::vector<int> parent_pos(raw.nodes.size(), -1);
    std::set<std::pair<int, int>> seen;
    std::vector<std::pair<int, int>> line_ends;  // (from,to) as raw indices
    line_ends.reserve(raw.lines.size());
    for (const auto& ln : raw.lines) {
        auto itf = pos.find(ln.from);
        auto itt = pos.find(ln.to);
        if (itf == pos.end()) fail(origin, "line references unknown node '" + ln.from + "'");
        if (itt == pos.end()) fail(origin, "line references unknown node '" + ln.to + "'");
        if (itf->second == itt->second)
            fail(origin, "cycle detected: self-loop at '" + ln.from + "'");
        if (!seen.emplace(itf->second, itt->second).second)
            fail(origin, "duplicate line " + ln.from + " -> " + ln.to);
        if (seen.count({itt->second, itf->second}))
            fail(origin, "cycle detected: lines " + ln.from + " <-> " + ln.to);
        if (ln.r < 0.0 || ln.x < 0.0)
            fail(origin, "negative impedance on line " + ln.from + " -> " + ln.to);
        if (ln.r == 0.0 && ln.x == 0.0)
            fail(origin, "zero-impedance line " + ln.from + " -> " + ln.to);
        if (parent_pos[size_t(itt->second)] != -1)
            fail(origin, "cycle detected: node '" + ln.to + "' has two parents");
        parent_pos[size_t(itt->second)] = itf->second;
        line_ends.emplace_back(itf->second, itt->second);
    }

    int root_pos = -1;
    for (size_t i = 0; i < raw.nodes.size(); ++i) {
        if (parent_pos[i] == -1) {
            if (root_pos == -1) {
                root_pos = int(i);
            } else {
                fail(origin, "disconnected node '" + raw.nodes[i].name + "'");
            }
        }
    }
    if (root_pos == -1) fail(origin, "cycle detected: no root node");

    // dense ids: root = 0, others in file order
    const int n = int(raw.nodes.size()) - 1;
    std::vector<int> id_of_pos(raw.nodes.size(), -1);
    id_of_pos[size_t(root_pos)] = 0;
    int next = 1;
    for (size_t i = 0; i < raw.nodes.size(); ++i)
        if (int(i) != root_pos) id_of_pos[i] = next++;

    Network net;
    net.node_count = n;
    net.v0 = raw.v0;
    net.names.assign(size_t(n) + 1, {});
    net.parent.assign(size_t(n) + 1, -1);
    net.children.assign(size_t(n) + 1, {});
    net.line_r = Vec::Zero(n + 1);
    net.line_x = Vec::Zero(n + 1);
    net.line_z2 = Vec::Zero(n + 1);
    net.p_nom = Vec::Zero(n + 1);
    net.q_nom = Vec::Zero(n + 1);
    net.controllable.assign(size_t(n) + 1, 0);

    for (size_t i = 0; i < raw.nodes.size(); ++i) {
        const int id = id_of_pos[i];
        net.names[size_t(id)] = raw.nodes[i].name;
        net.id_of[raw.nodes[i].name] = id;
        net.p_nom[id] = raw.nodes[i].p;
        net.q_nom[id] = raw.nodes[i].q;
        net.controllable[size_t(id)] = raw.nodes[i].controllable ? 1 : 0;
    }
    for (size_t li = 0; li < line_ends.size(); ++li) {
        const int from = id_of_pos[size_t(line_ends[li].first)];
        const int to = id_of_pos[size_t(line_ends[li].second)];
        net.parent[size_t(to)] = from;
        net.line_r[to] = raw.lines[li].r;
        net.line_x[to] = raw.lines[li].x;
        net.line_z2[to] = raw.lines[li].r * raw.lines[li].r + raw.lines[li].x * raw.lines[li].x;
    }
    for (int j = 1; j <= n; ++j) net.children[size_t(net.parent[size_t(j)])].push_back(j);
    for (auto& ch : net.children) std::sort(ch.begin(), ch.end());

    // breadth-first order from the root; unreachable nodes are disconnected
    net.topo_order.reserve(size_t(n) + 1);
    std::deque<int> queue{0};
    std::vector<char> reached(size_t(n) + 1, 0);
    reached[0] = 1;
    while (!queue.empty()) {
        const int a = queue.front();
        queue.pop_front();
        net.topo_order.push_back(a);
        for (int c : net.children[size_t(a)]) {
            reached[size_t(c)] = 1;
            queue.push_back(c);
        }
    }
    for (int j = 0; j <= n; ++j)
        if (!reached[size_t(j)]) fail(origin, "disconnected node '" + net.names[size_t(j)] + "'");
    if (int(raw.lines.size()) != n) fail(origin, "line count does not match node count");
    return net;
}

double json_number(const json& obj, const char* key, const std::string& origin) {
    auto it = obj.find(key);
    if (it == obj.end() || !it->is_number()) fail(origin, std::string("missing number '") + key + "'");
    return it->get<double>();
}

std::string json_string(const json& obj, const char* key, const std::string& origin) {
    auto it = obj.find(key);
    if (it == obj.end() || !it->is_string()) fail(origin, std::string("missing string '") + key + "'");
    return it->get<std::string>();
}

RawNetwork raw_from_json(std::istream& in, const std::string& origin) {
    json doc;
    try {
        doc = json::parse(in);
    } catch (const json::exception& e) {
        fail(origin, std::string("malformed JSON: ") + e.what());
    }
    if (!doc.is_object()) fail(origin, "top-level JSON object expected");
    RawNetwork raw;
    raw.v0 = json_number(doc, "v0_squared_pu", origin);
    if (!doc.contains("nodes") || !doc["nodes"].is_array()) fail(origin, "missing 'nodes' array");
    if (!doc.contains("lines") || !doc["lines"].is_array()) fail(origin, "missing 'lines' array");
    for (const auto& nd : doc["nodes"]) {
        RawNode rn;
        rn.name = json_string(nd, "name", origin);
        rn.p = json_number(nd, "p_nom_pu", origin);
        rn.q = json_number(nd, "q_nom_pu", origin);
        if (nd.contains("controllable")) {
            if (!nd["controllable"].is_boolean()) fail(origin, "'controllable' must be boolean");
            rn.controllable = nd["controllable"].get<bool>();
        }
        raw.nodes.push_back(std::move(rn));
    }
    for (const auto& ln : doc["lines"]) {
        RawLine rl;
        rl.from = json_string(ln, "from", origin);
        rl.to = json_string(ln, "to", origin);
        rl.r = json_number(ln, "r_pu", origin);
        rl.x = json_number(ln, "x_pu", origin);
        raw.lines.push_back(std::move(rl));
    }
    return raw;
}

std::vector<std::string> split_csv_row(const std::string& line) {
    std::vector<std::string> out;
    std::string cell;
    std::stringstream ss(line);
    while (std::getline(ss, cell, ',')) {
        size_t a = cell.find_first_not_of(" \t\r");
        size_t b = cell.find_last_not_of(" \t\r");
        out.push_back(a == std::string::npos ? std::string{} : cell.substr(a, b - a + 1));
    }
    return out;
}

std::vector<std::vector<std::string>> read_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open " + path.string());
    std::vector<std::vector<std::string>> rows;
    std::string line;
    while (std::getline(in, line)) {
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        rows.push_back(split_csv_row(line));
    }
    if (rows.empty()) throw ParseError(path.string() + ": empty file");
    return rows;
}

int csv_column(const std::vector<std::string>& header, const std::string& name,
               const std::filesystem::path& path) {
    auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) throw ParseError(path.string() + ": missing column '" + name + "'");
    return int(it - header.begin());
}

double csv_number(const std::vector<std::string>& row, int col, const std::filesystem::path& path) {
    if (col >= int(row.size())) throw ParseError(path.string() + ": short row");
    try {
        size_t used = 0;
        double v = std::stod(row[size_t(col)], &used);
        if (used != row[size_t(col)].size()) throw std::invalid_argument("trailing");
        return v;
    } catch (const std::exception&) {
        throw ParseError(path.string() + ": bad number '" + row[size_t(col)] + "'");
    }
}

bool csv_bool(const std::vector<std::string>& row, int col, const std::filesystem::path& path) {
    if (col >= int(row.size())) throw ParseError(path.string() + ": short row");
    std::string s = row[size_t(col)];
    std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
    if (s == "true" || s == "1" || s == "yes") return true;
    if (s == "false" || s == "0" || s == "no") return false;
    throw ParseError(path.string() + ": bad boolean '" + row[size_t(col)] + "'");
}

RawNetwork raw_from_csv_dir(const std::filesystem::path& dir) {
    RawNetwork raw;
    {
        const auto path = dir / "network.csv";
        auto rows = read_csv(path);
        if (rows.size() < 2) throw ParseError(path.string() + ": expected a data row");
        raw.v0 = csv_number(rows[1], csv_column(rows[0], "v0_squared_pu", path), path);
    }
    {
        const auto path = dir / "nodes.csv";
        auto rows = read_csv(path);
        const int c_name = csv_column(rows[0], "name", path);
        const int c_p = csv_column(rows[0], "p_nom_pu", path);
        const int c_q = csv_column(rows[0], "q_nom_pu", path);
        const int c_ctrl = csv_column(rows[0], "controllable", path);
        for (size_t i = 1; i < rows.size(); ++i) {
            RawNode rn;
            if (c_name >= int(rows[i].size())) throw ParseError(path.string() + ": short row");
            rn.name = rows[i][size_t(c_name)];
            rn.p = csv_number(rows[i], c_p, path);
            rn.q = csv_number(rows[i], c_q, path);
            rn.controllable = csv_bool(rows[i], c_ctrl, path);
            raw.nodes.push_back(std::move(rn));
        }
    }
    {
        const auto path = dir / "lines.csv";
        auto rows = read_csv(path);
        const int c_from = csv_column(rows[0], "from", path);
        const int c_to = csv_column(rows[0], "to", path);
        const int c_r = csv_column(rows[0], "r_pu", path);
        const int c_x = csv_column(rows[0], "x_pu", path);
        for (size_t i = 1; i < rows.size(); ++i) {
            RawLine rl;
            if (c_from >= int(rows[i].size()) || c_to >= int(rows[i].size()))
                throw ParseError(path.string() + ": short row");
            rl.from = rows[i][size_t(c_from)];
            rl.to = rows[i][size_t(c_to)];
            rl.r = csv_number(rows[i], c_r, path);
            rl.x = csv_number(rows[i], c_x, path);
            raw.lines.push_back(std::move(rl));
        }
    }
    return raw;
}

}  // namespace

void InjectionBox::validate() const {
    for (int i = 0; i < p_lo.size(); ++i) {
        if (p_lo[i] > p_hi[i] || q_lo[i] > q_hi[i])
            throw ValidationError("injection box: lower bound exceeds upper bound at index " +
                                  std::to_string(i));
    }
}

Network parse_network(const std::filesystem::path& path) {
    if (std::filesystem::is_directory(path)) {
        return assemble(raw_from_csv_dir(path), path.string());
    }
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open " + path.string());
    return assemble(raw_from_json(in, path.string()), path.string());
}

Network parse_network_json(std::istream& in, const std::string& origin) {
    return assemble(raw_from_json(in, origin), origin);
}

std::vector<int> path_to_root(const Network& net, int h) {
    net.require_node(h);
    std::vector<int> lines;
    for (int a = h; a != 0; a = net.parent[size_t(a)]) lines.push_back(a);
    std::reverse(lines.begin(), lines.end());
    return lines;
}

std::vector<int> downstream_lines(const Network& net, int xi) {
    net.require_node(xi);
    std::vector<int> lines;
    std::vector<int> stack{xi};
    while (!stack.empty()) {
        const int a = stack.back();
        stack.pop_back();
        for (int c : net.children[size_t(a)]) {
            lines.push_back(c);
            stack.push_back(c);
        }
    }
    std::sort(lines.begin(), lines.end());
    return lines;
}

PathIndex build_path_index(const Network& net) {
    const int n = net.node_count;
    PathIndex idx;
    idx.depth.assign(size_t(n) + 1, 0);
    Vec dist_r = Vec::Zero(n + 1), dist_x = Vec::Zero(n + 1);
    for (int a : net.topo_order) {
        if (a == 0) continue;
        const int i = net.parent[size_t(a)];
        idx.depth[size_t(a)] = idx.depth[size_t(i)] + 1;
        dist_r[a] = dist_r[i] + 2.0 * net.line_r[a];
        dist_x[a] = dist_x[i] + 2.0 * net.line_x[a];
    }
    idx.R = Mat::Zero(n + 1, n + 1);
    idx.X = Mat::Zero(n + 1, n + 1);
    idx.on_path.assign(size_t(n) + 1, std::vector<char>(size_t(n) + 1, 0));
    for (int j = 0; j <= n; ++j) {
        for (int h = j; h <= n; ++h) {
            int a = j, b = h;
            while (a != b) {
                if (idx.depth[size_t(a)] >= idx.depth[size_t(b)])
                    a = net.parent[size_t(a)];
                else
                    b = net.parent[size_t(b)];
            }
            idx.R(j, h) = idx.R(h, j) = dist_r[a];
            idx.X(j, h) = idx.X(h, j) = dist_x[a];
            if (a == j) idx.on_path[size_t(j)][size_t(h)] = 1;  // j is the LCA => ancestor of h
            if (a == h) idx.on_path[size_t(h)][size_t(j)] = 1;
        }
    }
    return idx;
}

}  // namespace opf
