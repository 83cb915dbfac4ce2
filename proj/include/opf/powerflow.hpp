#pragma once

// DistFlow (nonlinear) and LinDistFlow (linearized) solvers for radial
// feeders, plus the downstream loss aggregates and the voltage-error
// identity relating the two models.

#include "opf/network.hpp"

namespace opf {

/// Controllable/net injections, indexed over all nodes; entry 0 (root) is 0.
struct InjectionVector {
    Vec p, q;

    int size() const { return int(p.size()); }
};

InjectionVector nominal_injections(const Network& net);
InjectionVector zero_injections(const Network& net);

/// Solved feeder state. Flow and current vectors are indexed by the child
/// node of each line (entry 0 unused); v covers all nodes.
struct PowerFlowState {
    Vec v;               // squared voltage magnitudes, p.u.^2
    Vec flow_p, flow_q;  // sending-end line flows, p.u.
    Vec ell;             // squared current magnitudes, p.u.^2
    double residual = 0.0;
    int sweeps = 0;
};

struct SolveOptions {
    double tol = 1e-10;
    int max_sweeps = 500;
};

/// Worst-case violations of the four branch-flow equations by a state.
struct Residuals {
    double flow_p = 0.0;
    double flow_q = 0.0;
    double voltage = 0.0;
    double current = 0.0;

    double max() const;
};

Residuals power_flow_residuals(const Network& net, const InjectionVector& u,
                               const PowerFlowState& state);

/// Backward-forward sweep to a fixed point of the branch-flow equations.
/// Throws SolverError on non-convergence or voltage collapse
/// (any v <= 0.25 * v0 during the sweeps).
PowerFlowState solve_nonlinear(const Network& net, const InjectionVector& u,
                               const SolveOptions& opts = {});

/// Exact solve of the linearized model (quadratic current terms dropped):
/// one backward flow sweep, one forward voltage sweep. ell is zero.
PowerFlowState solve_linear(const Network& net, const InjectionVector& u);

/// Active/reactive line losses downstream of each node; zero at leaves.
struct LossAggregates {
    Vec g, eta;
};

LossAggregates loss_aggregates(const Network& net, const PowerFlowState& state);

/// Per-node error v_linear - v_nonlinear predicted from the nonlinear state
/// alone: accumulated 2(r g + x eta) + |z|^2 ell terms along each root path.
Vec lemma1_voltage_error(const Network& net, const PowerFlowState& state);

double min_voltage_magnitude(const PowerFlowState& state);

}  // namespace opf
