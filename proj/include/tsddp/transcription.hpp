#pragma once

#include <functional>
#include <vector>

#include "tsddp/ddp.hpp"
#include "tsddp/gaussian.hpp"

namespace tsddp {

using DynamicsFn = std::function<Vector(const Vector& x, const Vector& u, const Vector& w, int k)>;
using StageCostFn = std::function<double(const Vector& x, const Vector& u, const Vector& w, int k)>;
using TerminalCostFn = std::function<double(const Vector& x)>;
using ControlConstraintFn = std::function<double(const Vector& u)>;

/// Nonlinear control-constrained stochastic OCP over a finite horizon with
/// additive-noise-free structure left to the dynamics callback: x' = f_k(x,u,w).
struct StochasticProblem {
    int nx = 0;
    int nu = 0;
    int nw = 0;
    int horizon = 0;  // N

    DynamicsFn dynamics;
    StageCostFn stage_cost;
    TerminalCostFn terminal_cost;

    /// Scalar constraint c(u) <= 0; empty means unconstrained.
    ControlConstraintFn control_constraint;
    /// When > 0, the constraint is the norm bound ||u|| <= control_norm_bound and
    /// the closed-form chance constraint is used instead of the generic one.
    double control_norm_bound = 0.0;

    std::function<Matrix(int)> noise_cov;  // R_k, nw x nw
    GaussianState init;                    // x0 belief

    double kappa_x = 2.0;
    double kappa_w = 2.0;
    double quantile_multiplier = 3.0;   // 3 -> p ~= 0.997
    double epsilon_singularity = 1e-4;
    /// Stage cost ignores state and noise arguments (both benchmarks do); the
    /// transcribed cost then ignores the stacked state, which the solver exploits.
    bool stage_cost_control_only = false;

    int sigma_count() const { return 2 * nx + 1; }
    int noise_sigma_count() const { return 2 * nw + 1; }
};

/// State sigma set of one stage, kept at fixed width nx x (2nx+1) by the
/// per-stage Gaussian resampling.
struct StackedState {
    SigmaSet sigma;

    int dim() const { return sigma.dim(); }
    int count() const { return sigma.count(); }
    const Vector mean() const { return sigma.points.col(0); }
};

/// Control vectors attached to the state sigma points, one column each.
struct StackedControl {
    Matrix controls;  // nu x (2nx+1)
};

StackedState initial_stacked_state(const StochasticProblem& prob);

/// One stage of the deterministic sigma dynamics: evaluate the dynamics on all
/// (2nx+1)(2nw+1) state/noise sigma pairs, take the double-weighted moments,
/// and resample 2nx+1 fresh points from the fitted Gaussian. sqrt_jitter, when
/// positive, is added as jitter*I to the covariance before the square root
/// (used while finite-differencing through the pipeline).
StackedState propagate(const StackedState& x, const StackedControl& u, int k,
                       const StochasticProblem& prob, double sqrt_jitter = 0.0);

/// L_k: double-weighted sum of the stage cost over the state/noise sigma pairs.
double expected_stage_cost(const StackedState& x, const StackedControl& u, int k,
                           const StochasticProblem& prob);

/// Phi: weighted sum of the terminal cost over the state sigma points.
double expected_terminal_cost(const StackedState& x, const StochasticProblem& prob);

/// J_D = sum_k L_k + Phi. Expects horizon+1 states and horizon controls.
double total_objective(const std::vector<StackedState>& states,
                       const std::vector<StackedControl>& controls,
                       const StochasticProblem& prob);

/// Closed-form chance constraint for ||u|| <= u_ub:
///   E + m*sqrt(V + eps) - m*sqrt(eps) - u_ub^2 <= 0
/// with E, V the weighted sigma mean/variance of ||u||^2 and m the quantile
/// multiplier. The eps terms cancel exactly when V = 0.
double chance_constraint_norm2(const StackedControl& u, double u_ub,
                               const StochasticProblem& prob);

/// Generic scalar constraint c(u) <= 0 mapped through the sigma controls:
///   E[c] + m*sqrt(V[c] + eps) - m*sqrt(eps).
double chance_constraint_general(const ControlConstraintFn& c, const StackedControl& u,
                                 const StochasticProblem& prob);

/// Flatten/unflatten between sigma matrices and the solver's flat vectors
/// (column-major, matching Eigen storage).
Vector flatten_state(const StackedState& x);
StackedState unflatten_state(const Vector& z, const StochasticProblem& prob);
Vector flatten_control(const StackedControl& u);
StackedControl unflatten_control(const Vector& z, const StochasticProblem& prob);

/// Deterministic transcription of the whole problem for the DDP solver.
/// duty scales the norm bound used in the chance constraint; sqrt_jitter is
/// passed through to propagate so solver-side rollouts and derivatives see a
/// consistently smoothed map.
TranscribedOCP transcribe(const StochasticProblem& prob, double duty = 1.0,
                          double sqrt_jitter = 1e-12);

}  // namespace tsddp
