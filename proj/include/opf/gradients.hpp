#pragma once

// Voltage sensitivity matrices dv/dp, dv/dq evaluated three ways: from the
// linearized model (constant), from the measurement-corrected closed form,
// and by central finite differences on the nonlinear solver.

#include "opf/network.hpp"
#include "opf/powerflow.hpp"

#include <optional>

namespace opf {

enum class GradientMode { linear, improved, finite_difference };

const char* to_string(GradientMode mode);

struct SensitivityMatrices {
    Mat dv_dp, dv_dq;  // entry (j,h) = dv_j / dp_h resp. dv_j / dq_h
    GradientMode mode = GradientMode::linear;
    std::optional<PowerFlowState> at;  // evaluation state; absent for linear
};

/// Sensitivities of the approximate squared line currents; rows are indexed
/// by line child id, columns by injection node.
struct CurrentSensitivities {
    Mat dl_dp, dl_dq;
};

SensitivityMatrices linear_sensitivity(const PathIndex& idx);

CurrentSensitivities current_sensitivity(const Network& net, const PathIndex& idx,
                                         const PowerFlowState& state);

/// One entry of the measurement-corrected sensitivity. i is j's parent:
///   dv_j/dp_h = R(j,h) - (|z|^2 ell_j / v_i) R(i,h) - (2 |z|^2 P_j / v_i) 1(j on path of h)
/// and the same shape with X and Q for dv_j/dq_h. Shared by the dense
/// builder and the hierarchical per-destination evaluations so that both
/// produce identical floating-point terms.
struct SensitivityEntry {
    double dv_dp, dv_dq;
};

inline SensitivityEntry improved_entry(const Network& net, const PathIndex& idx,
                                       const PowerFlowState& state, int j, int h) {
    const int i = net.parent[size_t(j)];
    const double vi = state.v[i];
    const double z2 = net.line_z2[j];
    const double shunt = z2 * state.ell[j] / vi;
    const double ind = idx.is_on_path(j, h) ? 1.0 : 0.0;
    return {idx.R(j, h) - shunt * idx.R(i, h) - 2.0 * z2 * state.flow_p[j] / vi * ind,
            idx.X(j, h) - shunt * idx.X(i, h) - 2.0 * z2 * state.flow_q[j] / vi * ind};
}

SensitivityMatrices improved_sensitivity(const Network& net, const PathIndex& idx,
                                         const PowerFlowState& state);

/// Central differences of solve_nonlinear, one coordinate at a time.
SensitivityMatrices finite_difference_sensitivity(const Network& net, const InjectionVector& u,
                                                  double step = 1e-5,
                                                  const SolveOptions& opts = {});

/// Test hook: central differences of solve_linear instead; recovers the
/// linear matrices exactly up to rounding for any step.
SensitivityMatrices finite_difference_of_linear(const Network& net, const InjectionVector& u,
                                                double step = 1e-5);

}  // namespace opf
