#include "opf/gradients.hpp"

namespace opf {

const char* to_string(GradientMode mode) {
    switch (mode) {
        case GradientMode::linear: return "linear";
        case GradientMode::improved: return "improved";
        case GradientMode::finite_difference: return "fd";
    }
    return "?";
}

SensitivityMatrices linear_sensitivity(const PathIndex& idx) {
    SensitivityMatrices s;
    s.dv_dp = idx.R;
    s.dv_dq = idx.X;
    s.mode = GradientMode::linear;
    return s;
}

namespace {

void require_positive_parent_voltages(const Network& net, const PowerFlowState& state) {
    for (int j = 1; j <= net.node_count; ++j) {
        const int i = net.parent[size_t(j)];
        if (state.v[i] <= 0.0)
            throw ValidationError("nonpositive voltage at node " + net.names[size_t(i)]);
    }
}

}  // namespace

CurrentSensitivities current_sensitivity(const Network& net, const PathIndex& idx,
                                         const PowerFlowState& state) {
    require_positive_parent_voltages(net, state);
    const int n = net.node_count;
    CurrentSensitivities cs{Mat::Zero(n + 1, n + 1), Mat::Zero(n + 1, n + 1)};
    for (int j = 1; j <= n; ++j) {
        const int i = net.parent[size_t(j)];
        const double inv_vi = 1.0 / state.v[i];
        for (int h = 1; h <= n; ++h) {
            const double ind = idx.is_on_path(j, h) ? 1.0 : 0.0;
            cs.dl_dp(j, h) = -inv_vi * (2.0 * state.flow_p[j] * ind + state.ell[j] * idx.R(i, h));
            cs.dl_dq(j, h) = -inv_vi * (2.0 * state.flow_q[j] * ind + state.ell[j] * idx.X(i, h));
        }
    }
    return cs;
}

SensitivityMatrices improved_sensitivity(const Network& net, const PathIndex& idx,
                                         const PowerFlowState& state) {
    require_positive_parent_voltages(net, state);
    const int n = net.node_count;
    SensitivityMatrices s;
    s.dv_dp = Mat::Zero(n + 1, n + 1);
    s.dv_dq = Mat::Zero(n + 1, n + 1);
    s.mode = GradientMode::improved;
    s.at = state;
    for (int j = 1; j <= n; ++j) {
        for (int h = 1; h <= n; ++h) {
            const SensitivityEntry e = improved_entry(net, idx, state, j, h);
            s.dv_dp(j, h) = e.dv_dp;
            s.dv_dq(j, h) = e.dv_dq;
        }
    }
    return s;
}

namespace {

template <typename Solver>
SensitivityMatrices central_differences(const Network& net, const InjectionVector& u, double step,
                                        GradientMode mode, Solver&& solve) {
    if (step <= 0.0) throw ValidationError("finite-difference step must be positive");
    const int n = net.node_count;
    SensitivityMatrices s;
    s.dv_dp = Mat::Zero(n + 1, n + 1);
    s.dv_dq = Mat::Zero(n + 1, n + 1);
    s.mode = mode;
    InjectionVector probe = u;
    for (int h = 1; h <= n; ++h) {
        probe.p[h] = u.p[h] + step;
        const Vec v_up = solve(probe).v;
        probe.p[h] = u.p[h] - step;
        const Vec v_dn = solve(probe).v;
        probe.p[h] = u.p[h];
        for (int j = 1; j <= n; ++j) s.dv_dp(j, h) = (v_up[j] - v_dn[j]) / (2.0 * step);

        probe.q[h] = u.q[h] + step;
        const Vec w_up = solve(probe).v;
        probe.q[h] = u.q[h] - step;
        const Vec w_dn = solve(probe).v;
        probe.q[h] = u.q[h];
        for (int j = 1; j <= n; ++j) s.dv_dq(j, h) = (w_up[j] - w_dn[j]) / (2.0 * step);
    }
    return s;
}

}  // namespace

SensitivityMatrices finite_difference_sensitivity(const Network& net, const InjectionVector& u,
                                                  double step, const SolveOptions& opts) {
    auto s = central_differences(net, u, step, GradientMode::finite_difference,
                                 [&](const InjectionVector& probe) {
                                     return solve_nonlinear(net, probe, opts);
                                 });
    s.at = solve_nonlinear(net, u, opts);
    return s;
}

SensitivityMatrices finite_difference_of_linear(const Network& net, const InjectionVector& u,
                                                double step) {
    return central_differences(net, u, step, GradientMode::finite_difference,
                               [&](const InjectionVector& probe) { return solve_linear(net, probe); });
}

}  // namespace opf
