#pragma once

// OPF problem definition, projections, and the centralized primal-dual
// iteration with measurement feedback.

#include "opf/gradients.hpp"
#include "opf/network.hpp"
#include "opf/powerflow.hpp"

#include <functional>
#include <string>
#include <vector>

namespace opf {

struct OpfProblem {
    const Network* net = nullptr;
    PathIndex idx;
    InjectionBox box;
    Vec v_lo, v_hi;           // squared voltage limits per node (entry 0 unused)
    Vec target_p, target_q;   // objective targets (nominal injections)
    Vec weight_p, weight_q;   // per-node quadratic weights, default 1
    double epsilon = 1e-4;    // dual regularization
    double sigma_u = 2e-3;    // primal step size
    double sigma_mu = 1e-3;   // dual step size
    double delta = 1e-6;      // stop threshold on the primal step norm
    int stop_window = 25;     // consecutive iterations below delta required
    int max_iterations = 5000;
    double fd_step = 1e-5;
    SolveOptions solver;

    void validate() const;
};

/// Voltage limits given in magnitude p.u.; stored squared internally.
OpfProblem make_problem(const Network& net, const InjectionBox& box,
                        double v_min_mag = 0.95, double v_max_mag = 1.05);

struct DualState {
    Vec mu_lo, mu_hi;  // nonnegative multipliers per node; entry 0 stays 0
};

DualState zero_duals(const Network& net);

struct ObjectiveEval {
    double value = 0.0;
    Vec grad_p, grad_q;  // zero at non-controllable nodes
};

ObjectiveEval objective_and_gradient(const OpfProblem& prob, const InjectionVector& u);

InjectionVector project_box(const InjectionVector& u, const InjectionBox& box);

/// One projected primal step u - sigma_u * (df/du + (dv/du)^T (mu_hi - mu_lo)).
InjectionVector primal_step(const OpfProblem& prob, const InjectionVector& u,
                            const DualState& duals, const SensitivityMatrices& sens);

/// One regularized dual ascent step driven by the supplied voltages.
DualState dual_step(const OpfProblem& prob, const DualState& duals, const Vec& v);

double regularized_lagrangian(const OpfProblem& prob, const InjectionVector& u,
                              const DualState& duals, const Vec& v);

struct IterationRecord {
    int iteration = 0;
    InjectionVector u;
    Vec v;  // measured (nonlinear) squared voltages at u
    DualState duals;
    double objective = 0.0;
    double max_violation = 0.0;
    double step_norm = 0.0;  // ||u(t+1) - u(t)||_2; 0 in the final record
};

enum class Termination { converged, max_iterations, solver_failure };

const char* to_string(Termination t);

struct Trajectory {
    std::vector<IterationRecord> records;  // one per iterate, plus the final point
    Termination termination = Termination::max_iterations;
    int iterations = 0;  // primal updates performed
    std::string failure_message;

    const IterationRecord& final_record() const { return records.back(); }
};

/// Primal-dual iteration from u0 (projected into the box). Voltages in the
/// trajectory always come from the nonlinear solver. The dual updates use
/// measured voltages in improved / finite-difference modes; in linear mode
/// they use the linearized model's voltages, which is what the baseline
/// linear controller believes. Stops once the primal step norm has stayed
/// below delta for stop_window consecutive iterations (armed only after the
/// step norm first reaches delta, or at once if the duals are quiet too).
Trajectory run_centralized(const OpfProblem& prob, GradientMode mode, const InjectionVector& u0);

/// Shared iteration loop; alpha/beta supplier abstracts how the dual-weighted
/// sensitivity products are computed (dense product or hierarchical assembly).
using AlphaBetaFn =
    std::function<void(int iteration, const InjectionVector& u, const PowerFlowState& state,
                       const DualState& duals, Vec& alpha, Vec& beta)>;

Trajectory run_primal_dual_loop(const OpfProblem& prob, bool model_dual_voltages,
                                const InjectionVector& u0, const AlphaBetaFn& alpha_beta);

/// First iteration whose recorded step norm drops below threshold after
/// having reached it at least once; -1 when that never happens.
int first_step_norm_below(const Trajectory& traj, double threshold);

}  // namespace opf
