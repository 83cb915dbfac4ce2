#include "opf/problem.hpp"

#include <algorithm>
#include <cmath>

namespace opf {

const char* to_string(Termination t) {
    switch (t) {
        case Termination::converged: return "converged";
        case Termination::max_iterations: return "max_iterations";
        case Termination::solver_failure: return "solver_failure";
    }
    return "?";
}

void OpfProblem::validate() const {
    if (net == nullptr) throw ValidationError("problem has no network");
    for (int j = 1; j <= net->node_count; ++j) {
        if (!(v_lo[j] < v_hi[j]))
            throw ValidationError("voltage limits not ordered at node " + net->names[size_t(j)]);
    }
    if (epsilon <= 0.0) throw ValidationError("epsilon must be positive");
    if (sigma_u <= 0.0 || sigma_mu <= 0.0) throw ValidationError("step sizes must be positive");
    if (delta <= 0.0) throw ValidationError("delta must be positive");
    if (max_iterations <= 0) throw ValidationError("max_iterations must be positive");
    if (stop_window <= 0) throw ValidationError("stop_window must be positive");
    box.validate();
}

OpfProblem make_problem(const Network& net, const InjectionBox& box, double v_min_mag,
                        double v_max_mag) {
    OpfProblem prob;
    prob.net = &net;
    prob.idx = build_path_index(net);
    prob.box = box;
    prob.v_lo = Vec::Constant(net.size(), v_min_mag * v_min_mag);
    prob.v_hi = Vec::Constant(net.size(), v_max_mag * v_max_mag);
    prob.target_p = net.p_nom;
    prob.target_q = net.q_nom;
    prob.weight_p = Vec::Ones(net.size());
    prob.weight_q = Vec::Ones(net.size());
    prob.validate();
    return prob;
}

DualState zero_duals(const Network& net) {
    return {Vec::Zero(net.size()), Vec::Zero(net.size())};
}

ObjectiveEval objective_and_gradient(const OpfProblem& prob, const InjectionVector& u) {
    const int n = prob.net->node_count;
    ObjectiveEval out;
    out.grad_p = Vec::Zero(n + 1);
    out.grad_q = Vec::Zero(n + 1);
    for (int h = 1; h <= n; ++h) {
        if (!prob.box.controllable[size_t(h)]) continue;
        const double dp = u.p[h] - prob.target_p[h];
        const double dq = u.q[h] - prob.target_q[h];
        out.value += prob.weight_p[h] * dp * dp + prob.weight_q[h] * dq * dq;
        out.grad_p[h] = 2.0 * prob.weight_p[h] * dp;
        out.grad_q[h] = 2.0 * prob.weight_q[h] * dq;
    }
    return out;
}

InjectionVector project_box(const InjectionVector& u, const InjectionBox& box) {
    InjectionVector out = u;
    for (int h = 0; h < out.p.size(); ++h) {
        out.p[h] = std::clamp(out.p[h], box.p_lo[h], box.p_hi[h]);
        out.q[h] = std::clamp(out.q[h], box.q_lo[h], box.q_hi[h]);
    }
    return out;
}

namespace {

// alpha_h = sum_j dv_dp(j,h) * (mu_hi - mu_lo)_j, ascending j; likewise beta.
void dense_alpha_beta(const SensitivityMatrices& sens, const DualState& duals, Vec& alpha,
                      Vec& beta) {
    const int n = int(alpha.size()) - 1;
    for (int h = 1; h <= n; ++h) {
        double a = 0.0, b = 0.0;
        for (int j = 1; j <= n; ++j) {
            const double dmu = duals.mu_hi[j] - duals.mu_lo[j];
            a += sens.dv_dp(j, h) * dmu;
            b += sens.dv_dq(j, h) * dmu;
        }
        alpha[h] = a;
        beta[h] = b;
    }
}

}  // namespace

namespace {

InjectionVector apply_primal_update(const OpfProblem& prob, const InjectionVector& u,
                                    const Vec& alpha, const Vec& beta) {
    const ObjectiveEval obj = objective_and_gradient(prob, u);
    InjectionVector next = u;
    for (int h = 1; h <= prob.net->node_count; ++h) {
        next.p[h] = u.p[h] - prob.sigma_u * (obj.grad_p[h] + alpha[h]);
        next.q[h] = u.q[h] - prob.sigma_u * (obj.grad_q[h] + beta[h]);
    }
    return project_box(next, prob.box);
}

}  // namespace

InjectionVector primal_step(const OpfProblem& prob, const InjectionVector& u,
                            const DualState& duals, const SensitivityMatrices& sens) {
    const int n = prob.net->node_count;
    Vec alpha = Vec::Zero(n + 1), beta = Vec::Zero(n + 1);
    dense_alpha_beta(sens, duals, alpha, beta);
    return apply_primal_update(prob, u, alpha, beta);
}

DualState dual_step(const OpfProblem& prob, const DualState& duals, const Vec& v) {
    const int n = prob.net->node_count;
    DualState next = duals;
    for (int h = 1; h <= n; ++h) {
        next.mu_lo[h] = std::max(
            0.0, duals.mu_lo[h] +
                     prob.sigma_mu * (prob.v_lo[h] - v[h] - prob.epsilon * duals.mu_lo[h]));
        next.mu_hi[h] = std::max(
            0.0, duals.mu_hi[h] +
                     prob.sigma_mu * (v[h] - prob.v_hi[h] - prob.epsilon * duals.mu_hi[h]));
    }
    return next;
}

double regularized_lagrangian(const OpfProblem& prob, const InjectionVector& u,
                              const DualState& duals, const Vec& v) {
    const int n = prob.net->node_count;
    double value = objective_and_gradient(prob, u).value;
    double mu_sq = 0.0;
    for (int h = 1; h <= n; ++h) {
        value += duals.mu_lo[h] * (prob.v_lo[h] - v[h]);
        value += duals.mu_hi[h] * (v[h] - prob.v_hi[h]);
        mu_sq += duals.mu_lo[h] * duals.mu_lo[h] + duals.mu_hi[h] * duals.mu_hi[h];
    }
    return value - 0.5 * prob.epsilon * mu_sq;
}

namespace {

double max_violation(const OpfProblem& prob, const Vec& v) {
    double worst = 0.0;
    for (int h = 1; h <= prob.net->node_count; ++h) {
        worst = std::max(worst, prob.v_lo[h] - v[h]);
        worst = std::max(worst, v[h] - prob.v_hi[h]);
    }
    return std::max(worst, 0.0);
}

double step_norm_of(const InjectionVector& a, const InjectionVector& b) {
    return std::sqrt((a.p - b.p).squaredNorm() + (a.q - b.q).squaredNorm());
}

double dual_step_norm(const DualState& a, const DualState& b) {
    return std::sqrt((a.mu_lo - b.mu_lo).squaredNorm() + (a.mu_hi - b.mu_hi).squaredNorm());
}

}  // namespace

Trajectory run_primal_dual_loop(const OpfProblem& prob, bool model_dual_voltages,
                                const InjectionVector& u0, const AlphaBetaFn& alpha_beta) {
    prob.validate();
    const Network& net = *prob.net;
    const int n = net.node_count;

    Trajectory traj;
    InjectionVector u = project_box(u0, prob.box);
    DualState duals = zero_duals(net);
    Vec alpha = Vec::Zero(n + 1), beta = Vec::Zero(n + 1);

    bool armed = false;
    int below = 0;
    for (int t = 0; t < prob.max_iterations; ++t) {
        PowerFlowState state;
        try {
            state = solve_nonlinear(net, u, prob.solver);
        } catch (const SolverError& e) {
            traj.termination = Termination::solver_failure;
            traj.failure_message = e.what();
            traj.iterations = t;
            return traj;
        }
        alpha_beta(t, u, state, duals, alpha, beta);
        const ObjectiveEval obj = objective_and_gradient(prob, u);
        const InjectionVector next = apply_primal_update(prob, u, alpha, beta);

        const Vec& v_for_duals = model_dual_voltages ? solve_linear(net, u).v : state.v;
        DualState duals_next = dual_step(prob, duals, v_for_duals);

        const double sn = step_norm_of(next, u);
        const double mu_sn = dual_step_norm(duals_next, duals);

        IterationRecord rec;
        rec.iteration = t;
        rec.u = u;
        rec.v = state.v;
        rec.duals = duals;
        rec.objective = obj.value;
        rec.max_violation = max_violation(prob, state.v);
        rec.step_norm = sn;
        traj.records.push_back(std::move(rec));

        u = next;
        duals = duals_next;

        if (sn >= prob.delta) {
            armed = true;
            below = 0;
        } else if (armed || mu_sn < prob.delta) {
            if (++below >= prob.stop_window) {
                traj.termination = Termination::converged;
                traj.iterations = t + 1;
                break;
            }
        } else {
            below = 0;
        }
        if (t == prob.max_iterations - 1) {
            traj.termination = Termination::max_iterations;
            traj.iterations = prob.max_iterations;
        }
    }

    // final point with a fresh feedback solve
    try {
        PowerFlowState state = solve_nonlinear(net, u, prob.solver);
        IterationRecord rec;
        rec.iteration = int(traj.records.size());
        rec.u = u;
        rec.v = state.v;
        rec.duals = duals;
        rec.objective = objective_and_gradient(prob, u).value;
        rec.max_violation = max_violation(prob, state.v);
        rec.step_norm = 0.0;
        traj.records.push_back(std::move(rec));
    } catch (const SolverError& e) {
        traj.termination = Termination::solver_failure;
        traj.failure_message = e.what();
    }
    return traj;
}

Trajectory run_centralized(const OpfProblem& prob, GradientMode mode, const InjectionVector& u0) {
    const Network& net = *prob.net;
    const SensitivityMatrices lin = linear_sensitivity(prob.idx);

    AlphaBetaFn alpha_beta;
    switch (mode) {
        case GradientMode::linear:
            alpha_beta = [&lin](int, const InjectionVector&, const PowerFlowState&,
                                const DualState& duals, Vec& alpha, Vec& beta) {
                dense_alpha_beta(lin, duals, alpha, beta);
            };
            break;
        case GradientMode::improved:
            alpha_beta = [&net, &prob](int, const InjectionVector&, const PowerFlowState& state,
                                       const DualState& duals, Vec& alpha, Vec& beta) {
                dense_alpha_beta(improved_sensitivity(net, prob.idx, state), duals, alpha, beta);
            };
            break;
        case GradientMode::finite_difference:
            alpha_beta = [&net, &prob](int, const InjectionVector& u, const PowerFlowState&,
                                       const DualState& duals, Vec& alpha, Vec& beta) {
                const SensitivityMatrices s =
                    finite_difference_sensitivity(net, u, prob.fd_step, prob.solver);
                dense_alpha_beta(s, duals, alpha, beta);
            };
            break;
    }
    return run_primal_dual_loop(prob, mode == GradientMode::linear, u0, alpha_beta);
}

int first_step_norm_below(const Trajectory& traj, double threshold) {
    bool armed = false;
    for (const auto& rec : traj.records) {
        if (rec.step_norm >= threshold) armed = true;
        if (armed && rec.step_norm < threshold && &rec != &traj.records.back())
            return rec.iteration;
    }
    return -1;
}

}  // namespace opf
