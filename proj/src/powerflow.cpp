#include "opf/powerflow.hpp"

#include <algorithm>
#include <cmath>

namespace opf {

InjectionVector nominal_injections(const Network& net) {
    return {net.p_nom, net.q_nom};
}

InjectionVector zero_injections(const Network& net) {
    return {Vec::Zero(net.size()), Vec::Zero(net.size())};
}

double Residuals::max() const {
    return std::max(std::max(flow_p, flow_q), std::max(voltage, current));
}

Residuals power_flow_residuals(const Network& net, const InjectionVector& u,
                               const PowerFlowState& state) {
    const int n = net.node_count;
    Residuals res;
    for (int j = 1; j <= n; ++j) {
        const int i = net.parent[size_t(j)];
        double sum_p = 0.0, sum_q = 0.0;
        for (int k : net.children[size_t(j)]) {
            sum_p += state.flow_p[k];
            sum_q += state.flow_q[k];
        }
        res.flow_p = std::max(res.flow_p,
                              std::abs(state.flow_p[j] -
                                       (-u.p[j] + sum_p + net.line_r[j] * state.ell[j])));
        res.flow_q = std::max(res.flow_q,
                              std::abs(state.flow_q[j] -
                                       (-u.q[j] + sum_q + net.line_x[j] * state.ell[j])));
        res.voltage = std::max(
            res.voltage,
            std::abs(state.v[j] -
                     (state.v[i] -
                      2.0 * (net.line_r[j] * state.flow_p[j] + net.line_x[j] * state.flow_q[j]) +
                      net.line_z2[j] * state.ell[j])));
        res.current = std::max(res.current,
                               std::abs(state.ell[j] * state.v[i] -
                                        (state.flow_p[j] * state.flow_p[j] +
                                         state.flow_q[j] * state.flow_q[j])));
    }
    return res;
}

namespace {

void backward_flows(const Network& net, const InjectionVector& u, const Vec& ell, Vec& flow_p,
                    Vec& flow_q) {
    const int n = net.node_count;
    for (int j = 1; j <= n; ++j) {
        flow_p[j] = -u.p[j] + net.line_r[j] * ell[j];
        flow_q[j] = -u.q[j] + net.line_x[j] * ell[j];
    }
    for (auto it = net.topo_order.rbegin(); it != net.topo_order.rend(); ++it) {
        const int j = *it;
        if (j == 0) continue;
        const int i = net.parent[size_t(j)];
        if (i != 0) {
            flow_p[i] += flow_p[j];
            flow_q[i] += flow_q[j];
        }
    }
}

void forward_voltages(const Network& net, const Vec& flow_p, const Vec& flow_q, const Vec& ell,
                      Vec& v) {
    v[0] = net.v0;
    for (int j : net.topo_order) {
        if (j == 0) continue;
        const int i = net.parent[size_t(j)];
        v[j] = v[i] - 2.0 * (net.line_r[j] * flow_p[j] + net.line_x[j] * flow_q[j]) +
               net.line_z2[j] * ell[j];
    }
}

}  // namespace

PowerFlowState solve_nonlinear(const Network& net, const InjectionVector& u,
                               const SolveOptions& opts) {
    if (opts.tol <= 0.0) throw ValidationError("solver tolerance must be positive");
    const int n = net.node_count;
    PowerFlowState st;
    st.v = Vec::Constant(n + 1, net.v0);
    st.flow_p = Vec::Zero(n + 1);
    st.flow_q = Vec::Zero(n + 1);
    st.ell = Vec::Zero(n + 1);

    const double collapse_floor = 0.25 * net.v0;
    for (int sweep = 1; sweep <= opts.max_sweeps; ++sweep) {
        backward_flows(net, u, st.ell, st.flow_p, st.flow_q);
        forward_voltages(net, st.flow_p, st.flow_q, st.ell, st.v);
        for (int j = 1; j <= n; ++j) {
            if (st.v[j] <= collapse_floor)
                throw SolverError("voltage collapse at node " + net.names[size_t(j)] +
                                  " (v = " + std::to_string(st.v[j]) + ")");
        }
        for (int j = 1; j <= n; ++j) {
            const int i = net.parent[size_t(j)];
            st.ell[j] = (st.flow_p[j] * st.flow_p[j] + st.flow_q[j] * st.flow_q[j]) / st.v[i];
        }
        st.sweeps = sweep;
        st.residual = power_flow_residuals(net, u, st).max();
        if (st.residual <= opts.tol) return st;
    }
    throw SolverError("power flow did not converge in " + std::to_string(opts.max_sweeps) +
                      " sweeps (residual " + std::to_string(st.residual) + ")");
}

PowerFlowState solve_linear(const Network& net, const InjectionVector& u) {
    const int n = net.node_count;
    PowerFlowState st;
    st.v = Vec::Constant(n + 1, net.v0);
    st.flow_p = Vec::Zero(n + 1);
    st.flow_q = Vec::Zero(n + 1);
    st.ell = Vec::Zero(n + 1);
    backward_flows(net, u, st.ell, st.flow_p, st.flow_q);
    forward_voltages(net, st.flow_p, st.flow_q, st.ell, st.v);
    st.sweeps = 1;
    st.residual = 0.0;
    return st;
}

LossAggregates loss_aggregates(const Network& net, const PowerFlowState& state) {
    const int n = net.node_count;
    LossAggregates agg{Vec::Zero(n + 1), Vec::Zero(n + 1)};
    for (auto it = net.topo_order.rbegin(); it != net.topo_order.rend(); ++it) {
        const int j = *it;
        for (int k : net.children[size_t(j)]) {
            agg.g[j] += net.line_r[k] * state.ell[k] + agg.g[k];
            agg.eta[j] += net.line_x[k] * state.ell[k] + agg.eta[k];
        }
    }
    return agg;
}

Vec lemma1_voltage_error(const Network& net, const PowerFlowState& state) {
    const int n = net.node_count;
    const LossAggregates agg = loss_aggregates(net, state);
    Vec err = Vec::Zero(n + 1);
    for (int j : net.topo_order) {
        if (j == 0) continue;
        const int i = net.parent[size_t(j)];
        err[j] = err[i] +
                 2.0 * (net.line_r[j] * agg.g[j] + net.line_x[j] * agg.eta[j]) +
                 net.line_z2[j] * state.ell[j];
    }
    return err;
}

double min_voltage_magnitude(const PowerFlowState& state) {
    double vmin = state.v[0];
    for (int j = 1; j < state.v.size(); ++j) vmin = std::min(vmin, state.v[j]);
    return std::sqrt(vmin);
}

}  // namespace opf
