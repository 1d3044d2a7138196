#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "tsddp/types.hpp"

namespace tsddp {

/// Deterministic optimal control problem in flat-vector form. For the tube
/// transcription the state is the stacked sigma matrix flattened column-major
/// and the control is the stacked sigma-control matrix flattened the same way;
/// the solver itself is agnostic and also runs plain problems.
struct TranscribedOCP {
    int state_dim = 0;
    int control_dim = 0;
    int horizon = 0;
    Vector initial_state;
    std::function<Vector(const Vector&, const Vector&, int)> dynamics;
    std::function<double(const Vector&, const Vector&, int)> stage_cost;
    std::function<double(const Vector&)> terminal_cost;
    /// Per-stage inequality constraints on the control, values <= 0 feasible.
    /// May be empty (unconstrained).
    std::function<Vector(const Vector&, int)> constraint;
    int constraint_dim = 0;
    /// Set when the stage cost (not the constraint) ignores the state; lets the
    /// backward pass skip the state-block cost derivatives.
    bool stage_cost_control_only = false;
    /// Magnitude of a typical control coordinate; finite-difference steps use
    /// h = step*max(scale, |z|) per coordinate. States are assumed O(1).
    double control_scale = 1.0;
};

struct SolverOptions {
    int max_iters = 600;              // backward/forward cycles, all phases
    int max_inner_iters = 60;         // per AL phase, forces multiplier updates
    int max_al_phases = 25;
    double cost_tolerance = 1e-9;     // relative decrease declaring a phase done
    double constraint_tolerance = 1e-8;  // on the bound-normalized constraint

    double reg_init = 1e-6;
    double reg_min = 1e-10;
    double reg_max = 1e10;
    double reg_increase = 10.0;
    double reg_decrease = 2.5;

    double line_search_factor = 0.5;
    double line_search_min_step = 1.0 / 1024.0;  // 2^-10
    double armijo_ratio = 1e-4;

    double penalty_init = 1e3;
    double penalty_growth = 10.0;
    double penalty_max = 1e12;
    double multiplier_max = 1e12;
    double violation_shrink = 0.25;   // required per-phase violation reduction

    double fd_step_jacobian = 1e-6;   // central differences, h = step*max(1,|z|)
    double fd_step_hessian = 1e-4;
    int stall_phases = 3;             // no-progress phases tolerated before exit
};

struct IterationRecord {
    int iteration = 0;
    int al_phase = 0;
    double cost = 0.0;        // augmented objective after the iterate
    double true_cost = 0.0;   // unaugmented objective
    double violation = 0.0;   // max over stages of max(0, C)
    double reg = 0.0;
    double step = 0.0;        // accepted line-search step, 0 if rejected
    bool accepted = false;
};

/// Multiplier/penalty state of the augmented Lagrangian.
struct AlState {
    std::vector<Vector> multipliers;  // one per stage, size constraint_dim
    double penalty = 0.0;
};

/// Nominal trajectory with its cached costs and constraint values.
struct Trajectory {
    std::vector<Vector> states;             // horizon+1
    std::vector<Vector> controls;           // horizon
    std::vector<Vector> constraint_values;  // horizon (empty if unconstrained)
    double augmented_cost = 0.0;
    double true_cost = 0.0;
    double violation = 0.0;
};

struct BackwardPass {
    std::vector<Vector> feedforward;  // horizon
    std::vector<Matrix> gains;        // horizon, control_dim x state_dim
    double d1 = 0.0;                  // sum k^T Q_u      (expected decrease, linear)
    double d2 = 0.0;                  // sum k^T Q_uu k   (expected decrease, quadratic)
    double reg = 0.0;                 // regularization that produced the pass

    double expected_decrease(double step) const {
        return -(step * d1 + 0.5 * step * step * d2);
    }
};

struct SolverSolution {
    std::vector<Vector> states;        // horizon+1
    std::vector<Vector> controls;      // horizon
    std::vector<Matrix> gains;         // horizon, control_dim x state_dim
    std::vector<Vector> feedforward;   // horizon
    double cost = 0.0;                 // converged unaugmented objective
    double max_violation = 0.0;
    bool converged = false;
    std::vector<IterationRecord> log;
    AlState al;                        // final multipliers/penalty
};

/// Warm start for receding-horizon reuse.
struct WarmStart {
    std::vector<Vector> controls;
    AlState al;  // empty multipliers -> fresh start
};

/// Constrained DDP: iLQR (Gauss-Newton) backward pass on the augmented
/// Lagrangian, backtracking line search, Levenberg regularization on the
/// control Hessian, multiplier updates between phases. All derivatives are
/// central finite differences in a fixed evaluation order, so identical inputs
/// produce bit-identical iteration logs.
class DdpSolver {
public:
    explicit DdpSolver(TranscribedOCP ocp, SolverOptions opts = {});

    SolverSolution solve(const std::vector<Vector>& init_controls) const;
    SolverSolution solve(const WarmStart& warm) const;

    Trajectory rollout(const std::vector<Vector>& controls, const AlState& al) const;

    /// Value-recursion sweep N -> 0. Raises the regularization (in-out) until
    /// every control Hessian is positive definite; throws RegularizationExhausted
    /// past opts.reg_max.
    BackwardPass backward_pass(const Trajectory& traj, const AlState& al, double& reg) const;

    /// Rolls the dynamics with u = u_bar + step*feedforward + K (x - x_bar).
    /// step 0 reproduces the nominal exactly. Acceptance is the caller's call.
    Trajectory forward_pass(const Trajectory& traj, const BackwardPass& bp, double step,
                            const AlState& al) const;

    /// Adjoint gradient of the unaugmented objective with respect to each stage
    /// control along a nominal trajectory (first derivatives only).
    std::vector<Vector> objective_gradient(const std::vector<Vector>& states,
                                           const std::vector<Vector>& controls) const;

    AlState initial_al_state() const;

    const TranscribedOCP& ocp() const { return ocp_; }
    const SolverOptions& options() const { return opts_; }

private:
    double augmented_stage_cost(const Vector& x, const Vector& u, int k,
                                const AlState& al) const;

    TranscribedOCP ocp_;
    SolverOptions opts_;
};

/// lambda <- clamp(max(0, lambda + rho*c)); rho grows geometrically when the
/// worst violation failed to shrink by opts.violation_shrink since last update.
void augmented_lagrangian_update(AlState& al, const std::vector<Vector>& constraint_values,
                                 double prev_violation, const SolverOptions& opts);

/// Central-difference Jacobian, per-coordinate step h = step_scale*max(1,|z_i|).
/// The `scales` overloads replace the 1 with a per-coordinate magnitude floor.
Matrix fd_jacobian(const std::function<Vector(const Vector&)>& f, const Vector& at,
                   double step_scale = 1e-6);
Matrix fd_jacobian(const std::function<Vector(const Vector&)>& f, const Vector& at,
                   double step_scale, const Vector& scales);

/// Central-difference gradient of a scalar function.
Vector fd_gradient(const std::function<double(const Vector&)>& f, const Vector& at,
                   double step_scale = 1e-6);
Vector fd_gradient(const std::function<double(const Vector&)>& f, const Vector& at,
                   double step_scale, const Vector& scales);

/// Central-difference symmetric Hessian of a scalar function.
Matrix fd_hessian(const std::function<double(const Vector&)>& f, const Vector& at,
                  double step_scale = 1e-4);
Matrix fd_hessian(const std::function<double(const Vector&)>& f, const Vector& at,
                  double step_scale, const Vector& scales);

}  // namespace tsddp
