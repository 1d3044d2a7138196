#include "tsddp/ddp.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace tsddp {

namespace {

// Powell-Hestenes-Rockafellar penalty for an inequality c <= 0.
double phr_penalty(double c, double lambda, double rho) {
    const double t = std::max(0.0, lambda + rho * c);
    return (t * t - lambda * lambda) / (2.0 * rho);
}

double positive_part_max(const Vector& v) {
    double m = 0.0;
    for (int i = 0; i < v.size(); ++i) m = std::max(m, v(i));
    return m;
}

struct StageDerivs {
    std::vector<Matrix> fx, fu;
    std::vector<Vector> lx, lu;
    std::vector<Matrix> lxx, luu, lux;
    Vector phi_x;
    Matrix phi_xx;
};

}  // namespace

Matrix fd_jacobian(const std::function<Vector(const Vector&)>& f, const Vector& at,
                   double step_scale) {
    return fd_jacobian(f, at, step_scale, Vector::Ones(at.size()));
}

Matrix fd_jacobian(const std::function<Vector(const Vector&)>& f, const Vector& at,
                   double step_scale, const Vector& scales) {
    Vector z = at;
    Matrix jac;
    for (int i = 0; i < at.size(); ++i) {
        const double h = step_scale * std::max(scales(i), std::abs(at(i)));
        z(i) = at(i) + h;
        Vector fp = f(z);
        z(i) = at(i) - h;
        Vector fm = f(z);
        z(i) = at(i);
        if (!fp.allFinite() || !fm.allFinite()) {
            throw NonFiniteDerivative("fd_jacobian: non-finite function value");
        }
        if (jac.size() == 0) jac.resize(fp.size(), at.size());
        jac.col(i) = (fp - fm) / (2.0 * h);
    }
    return jac;
}

Vector fd_gradient(const std::function<double(const Vector&)>& f, const Vector& at,
                   double step_scale) {
    return fd_gradient(f, at, step_scale, Vector::Ones(at.size()));
}

Vector fd_gradient(const std::function<double(const Vector&)>& f, const Vector& at,
                   double step_scale, const Vector& scales) {
    Vector z = at;
    Vector grad(at.size());
    for (int i = 0; i < at.size(); ++i) {
        const double h = step_scale * std::max(scales(i), std::abs(at(i)));
        z(i) = at(i) + h;
        const double fp = f(z);
        z(i) = at(i) - h;
        const double fm = f(z);
        z(i) = at(i);
        if (!std::isfinite(fp) || !std::isfinite(fm)) {
            throw NonFiniteDerivative("fd_gradient: non-finite function value");
        }
        grad(i) = (fp - fm) / (2.0 * h);
    }
    return grad;
}

Matrix fd_hessian(const std::function<double(const Vector&)>& f, const Vector& at,
                  double step_scale) {
    return fd_hessian(f, at, step_scale, Vector::Ones(at.size()));
}

Matrix fd_hessian(const std::function<double(const Vector&)>& f, const Vector& at,
                  double step_scale, const Vector& scales) {
    const int n = static_cast<int>(at.size());
    Vector h(n);
    for (int i = 0; i < n; ++i) h(i) = step_scale * std::max(scales(i), std::abs(at(i)));

    const double f0 = f(at);
    if (!std::isfinite(f0)) throw NonFiniteDerivative("fd_hessian: non-finite center");
    Matrix hess(n, n);
    Vector z = at;
    for (int i = 0; i < n; ++i) {
        z(i) = at(i) + h(i);
        const double fp = f(z);
        z(i) = at(i) - h(i);
        const double fm = f(z);
        z(i) = at(i);
        if (!std::isfinite(fp) || !std::isfinite(fm)) {
            throw NonFiniteDerivative("fd_hessian: non-finite function value");
        }
        hess(i, i) = (fp - 2.0 * f0 + fm) / (h(i) * h(i));
    }
    for (int i = 0; i < n; ++i) {
        for (int j = i + 1; j < n; ++j) {
            z(i) = at(i) + h(i);
            z(j) = at(j) + h(j);
            const double fpp = f(z);
            z(j) = at(j) - h(j);
            const double fpm = f(z);
            z(i) = at(i) - h(i);
            const double fmm = f(z);
            z(j) = at(j) + h(j);
            const double fmp = f(z);
            z(i) = at(i);
            z(j) = at(j);
            if (!std::isfinite(fpp) || !std::isfinite(fpm) || !std::isfinite(fmp) ||
                !std::isfinite(fmm)) {
                throw NonFiniteDerivative("fd_hessian: non-finite function value");
            }
            hess(i, j) = hess(j, i) = (fpp - fpm - fmp + fmm) / (4.0 * h(i) * h(j));
        }
    }
    return hess;
}

DdpSolver::DdpSolver(TranscribedOCP ocp, SolverOptions opts)
    : ocp_(std::move(ocp)), opts_(opts) {}

AlState DdpSolver::initial_al_state() const {
    AlState al;
    al.penalty = opts_.penalty_init;
    if (ocp_.constraint_dim > 0) {
        al.multipliers.assign(ocp_.horizon, Vector::Zero(ocp_.constraint_dim));
    }
    return al;
}

double DdpSolver::augmented_stage_cost(const Vector& x, const Vector& u, int k,
                                       const AlState& al) const {
    double cost = ocp_.stage_cost(x, u, k);
    if (ocp_.constraint_dim > 0) {
        const Vector c = ocp_.constraint(u, k);
        for (int j = 0; j < c.size(); ++j) {
            cost += phr_penalty(c(j), al.multipliers[k](j), al.penalty);
        }
    }
    return cost;
}

Trajectory DdpSolver::rollout(const std::vector<Vector>& controls, const AlState& al) const {
    Trajectory traj;
    traj.states.resize(ocp_.horizon + 1);
    traj.controls = controls;
    traj.states[0] = ocp_.initial_state;
    if (ocp_.constraint_dim > 0) traj.constraint_values.resize(ocp_.horizon);

    double aug = 0.0;
    double cost = 0.0;
    double violation = 0.0;
    for (int k = 0; k < ocp_.horizon; ++k) {
        const double l = ocp_.stage_cost(traj.states[k], controls[k], k);
        cost += l;
        aug += l;
        if (ocp_.constraint_dim > 0) {
            const Vector c = ocp_.constraint(controls[k], k);
            traj.constraint_values[k] = c;
            violation = std::max(violation, positive_part_max(c));
            for (int j = 0; j < c.size(); ++j) {
                aug += phr_penalty(c(j), al.multipliers[k](j), al.penalty);
            }
        }
        traj.states[k + 1] = ocp_.dynamics(traj.states[k], controls[k], k);
        if (!traj.states[k + 1].allFinite()) {
            traj.augmented_cost = std::numeric_limits<double>::infinity();
            traj.true_cost = traj.augmented_cost;
            traj.violation = violation;
            return traj;
        }
    }
    const double phi = ocp_.terminal_cost(traj.states[ocp_.horizon]);
    traj.true_cost = cost + phi;
    traj.augmented_cost = aug + phi;
    traj.violation = violation;
    return traj;
}

namespace {

StageDerivs compute_derivs(const TranscribedOCP& ocp, const SolverOptions& opts,
                           const Trajectory& traj,
                           const std::function<double(const Vector&, const Vector&, int)>& aug_cost) {
    const int N = ocp.horizon;
    const int nx = ocp.state_dim;
    const int nu = ocp.control_dim;
    StageDerivs d;
    d.fx.resize(N);
    d.fu.resize(N);
    d.lx.resize(N);
    d.lu.resize(N);
    d.lxx.resize(N);
    d.luu.resize(N);
    d.lux.resize(N);
    for (int k = 0; k < N; ++k) {
        const Vector& x = traj.states[k];
        const Vector& u = traj.controls[k];
        const Vector at = (Vector(nx + nu) << x, u).finished();
        Matrix joint = fd_jacobian(
            [&](const Vector& z) -> Vector {
                return ocp.dynamics(z.head(nx), z.tail(nu), k);
            },
            at, opts.fd_step_jacobian);
        d.fx[k] = joint.leftCols(nx);
        d.fu[k] = joint.rightCols(nu);

        if (ocp.stage_cost_control_only) {
            auto cost_u = [&](const Vector& v) { return aug_cost(x, v, k); };
            d.lu[k] = fd_gradient(cost_u, u, opts.fd_step_jacobian);
            d.luu[k] = fd_hessian(cost_u, u, opts.fd_step_hessian);
            d.lx[k] = Vector::Zero(nx);
            d.lxx[k] = Matrix::Zero(nx, nx);
            d.lux[k] = Matrix::Zero(nu, nx);
        } else {
            auto cost_xu = [&](const Vector& z) {
                return aug_cost(z.head(nx), z.tail(nu), k);
            };
            Vector g = fd_gradient(cost_xu, at, opts.fd_step_jacobian);
            Matrix h = fd_hessian(cost_xu, at, opts.fd_step_hessian);
            d.lx[k] = g.head(nx);
            d.lu[k] = g.tail(nu);
            d.lxx[k] = h.topLeftCorner(nx, nx);
            d.luu[k] = h.bottomRightCorner(nu, nu);
            d.lux[k] = h.bottomLeftCorner(nu, nx);
        }
    }
    d.phi_x = fd_gradient(ocp.terminal_cost, traj.states[N], opts.fd_step_jacobian);
    d.phi_xx = fd_hessian(ocp.terminal_cost, traj.states[N], opts.fd_step_hessian);
    return d;
}

// Value recursion at a fixed regularization; empty result means a control
// Hessian failed its Cholesky factorization.
bool recurse(const StageDerivs& d, int horizon, double reg, BackwardPass& bp) {
    bp.feedforward.resize(horizon);
    bp.gains.resize(horizon);
    bp.d1 = 0.0;
    bp.d2 = 0.0;
    bp.reg = reg;
    Vector vx = d.phi_x;
    Matrix vxx = d.phi_xx;
    for (int k = horizon - 1; k >= 0; --k) {
        Vector qx = d.lx[k] + d.fx[k].transpose() * vx;
        Vector qu = d.lu[k] + d.fu[k].transpose() * vx;
        Matrix qxx = d.lxx[k] + d.fx[k].transpose() * vxx * d.fx[k];
        Matrix quu = d.luu[k] + d.fu[k].transpose() * vxx * d.fu[k];
        Matrix qux = d.lux[k] + d.fu[k].transpose() * vxx * d.fx[k];
        quu = 0.5 * (quu + quu.transpose());
        Matrix quu_reg = quu;
        quu_reg.diagonal().array() += reg;

        Eigen::LLT<Matrix> llt(quu_reg);
        if (llt.info() != Eigen::Success) return false;
        bp.feedforward[k] = -llt.solve(qu);
        bp.gains[k] = -llt.solve(qux);
        bp.d1 += bp.feedforward[k].dot(qu);
        bp.d2 += bp.feedforward[k].dot(quu_reg * bp.feedforward[k]);

        vx = qx + bp.gains[k].transpose() * quu_reg * bp.feedforward[k] +
             bp.gains[k].transpose() * qu + qux.transpose() * bp.feedforward[k];
        vxx = qxx + bp.gains[k].transpose() * quu_reg * bp.gains[k] +
              bp.gains[k].transpose() * qux + qux.transpose() * bp.gains[k];
        vxx = 0.5 * (vxx + vxx.transpose());
    }
    return true;
}

}  // namespace

BackwardPass DdpSolver::backward_pass(const Trajectory& traj, const AlState& al,
                                      double& reg) const {
    auto aug = [this, &al](const Vector& x, const Vector& u, int k) {
        return augmented_stage_cost(x, u, k, al);
    };
    StageDerivs d = compute_derivs(ocp_, opts_, traj, aug);
    while (true) {
        BackwardPass bp;
        if (recurse(d, ocp_.horizon, reg, bp)) return bp;
        if (reg >= opts_.reg_max) {
            throw RegularizationExhausted("backward_pass: control Hessian not PD at reg_max");
        }
        reg = std::min(opts_.reg_max, std::max(reg, opts_.reg_min) * opts_.reg_increase);
    }
}

Trajectory DdpSolver::forward_pass(const Trajectory& traj, const BackwardPass& bp,
                                   double step, const AlState& al) const {
    Trajectory out;
    out.states.resize(ocp_.horizon + 1);
    out.controls.resize(ocp_.horizon);
    if (ocp_.constraint_dim > 0) out.constraint_values.resize(ocp_.horizon);
    out.states[0] = ocp_.initial_state;

    double aug = 0.0;
    double cost = 0.0;
    double violation = 0.0;
    for (int k = 0; k < ocp_.horizon; ++k) {
        const Vector& x = out.states[k];
        out.controls[k] = traj.controls[k] + step * bp.feedforward[k] +
                          bp.gains[k] * (x - traj.states[k]);
        if (!out.controls[k].allFinite()) {
            out.augmented_cost = std::numeric_limits<double>::infinity();
            out.true_cost = out.augmented_cost;
            return out;
        }
        const double l = ocp_.stage_cost(x, out.controls[k], k);
        cost += l;
        aug += l;
        if (ocp_.constraint_dim > 0) {
            const Vector c = ocp_.constraint(out.controls[k], k);
            out.constraint_values[k] = c;
            violation = std::max(violation, positive_part_max(c));
            for (int j = 0; j < c.size(); ++j) {
                aug += phr_penalty(c(j), al.multipliers[k](j), al.penalty);
            }
        }
        out.states[k + 1] = ocp_.dynamics(x, out.controls[k], k);
        if (!out.states[k + 1].allFinite() || !std::isfinite(aug)) {
            out.augmented_cost = std::numeric_limits<double>::infinity();
            out.true_cost = out.augmented_cost;
            return out;
        }
    }
    const double phi = ocp_.terminal_cost(out.states[ocp_.horizon]);
    out.true_cost = cost + phi;
    out.augmented_cost = aug + phi;
    out.violation = violation;
    return out;
}

SolverSolution DdpSolver::solve(const std::vector<Vector>& init_controls) const {
    WarmStart warm;
    warm.controls = init_controls;
    warm.al = initial_al_state();
    return solve(warm);
}

SolverSolution DdpSolver::solve(const WarmStart& warm) const {
    AlState al = warm.al;
    if (al.penalty <= 0.0) al.penalty = opts_.penalty_init;
    if (ocp_.constraint_dim > 0 &&
        static_cast<int>(al.multipliers.size()) != ocp_.horizon) {
        al.multipliers.assign(ocp_.horizon, Vector::Zero(ocp_.constraint_dim));
    }

    SolverSolution sol;
    Trajectory traj = rollout(warm.controls, al);
    if (!std::isfinite(traj.augmented_cost)) {
        throw Diverged("solve: initial rollout is non-finite");
    }

    auto aug = [this, &al](const Vector& x, const Vector& u, int k) {
        return augmented_stage_cost(x, u, k, al);
    };

    double reg = opts_.reg_init;
    int iter = 0;
    double prev_phase_violation = std::numeric_limits<double>::infinity();
    int stalled_phases = 0;
    bool inner_converged = false;
    BackwardPass last_bp;
    bool have_bp = false;

    const int phases = (ocp_.constraint_dim > 0) ? opts_.max_al_phases : 1;
    for (int phase = 0; phase < phases; ++phase) {
        inner_converged = false;
        StageDerivs derivs;
        bool derivs_fresh = false;
        int inner_iter = 0;
        while (iter < opts_.max_iters &&
               (ocp_.constraint_dim == 0 || inner_iter < opts_.max_inner_iters)) {
            ++inner_iter;
            if (!derivs_fresh) {
                derivs = compute_derivs(ocp_, opts_, traj, aug);
                derivs_fresh = true;
            }
            BackwardPass bp;
            bool pd = false;
            while (!(pd = recurse(derivs, ocp_.horizon, reg, bp))) {
                if (reg >= opts_.reg_max) break;
                reg = std::min(opts_.reg_max,
                               std::max(reg, opts_.reg_min) * opts_.reg_increase);
            }
            if (!pd) {
                inner_converged = true;  // cannot shape a descent direction
                break;
            }
            last_bp = bp;
            have_bp = true;

            if (reg <= 1.0 &&
                bp.expected_decrease(1.0) <=
                    opts_.cost_tolerance * std::max(1.0, std::abs(traj.augmented_cost))) {
                inner_converged = true;
                break;
            }

            bool accepted = false;
            double step = 1.0;
            while (step >= opts_.line_search_min_step) {
                Trajectory cand = forward_pass(traj, bp, step, al);
                const double expected = bp.expected_decrease(step);
                const double actual = traj.augmented_cost - cand.augmented_cost;
                if (std::isfinite(cand.augmented_cost) && expected > 0.0 &&
                    actual > opts_.armijo_ratio * expected) {
                    const double prev_cost = traj.augmented_cost;
                    traj = std::move(cand);
                    reg = std::max(opts_.reg_min, reg / opts_.reg_decrease);
                    ++iter;
                    sol.log.push_back({iter, phase, traj.augmented_cost, traj.true_cost,
                                       traj.violation, reg, step, true});
                    accepted = true;
                    derivs_fresh = false;
                    const double rel = (prev_cost - traj.augmented_cost) /
                                       std::max(1.0, std::abs(prev_cost));
                    if (rel < opts_.cost_tolerance) inner_converged = true;
                    break;
                }
                step *= opts_.line_search_factor;
            }
            if (!accepted) {
                ++iter;
                sol.log.push_back({iter, phase, traj.augmented_cost, traj.true_cost,
                                   traj.violation, reg, 0.0, false});
                if (reg >= opts_.reg_max) {
                    if (!std::isfinite(traj.augmented_cost)) {
                        throw Diverged("solve: non-finite cost with regularization exhausted");
                    }
                    inner_converged = true;
                    break;
                }
                reg = std::min(opts_.reg_max, std::max(reg, opts_.reg_min) * opts_.reg_increase);
                continue;
            }
            if (inner_converged) break;
        }

        if (ocp_.constraint_dim == 0) break;
        if (inner_converged && traj.violation <= opts_.constraint_tolerance) break;
        if (iter >= opts_.max_iters) break;

        if (traj.violation > 0.99 * prev_phase_violation &&
            al.penalty >= opts_.penalty_max) {
            ++stalled_phases;
            if (stalled_phases >= opts_.stall_phases) break;
        } else {
            stalled_phases = 0;
        }
        augmented_lagrangian_update(al, traj.constraint_values, prev_phase_violation, opts_);
        prev_phase_violation = traj.violation;
        traj = rollout(traj.controls, al);  // re-price under the new multipliers
    }

    sol.states = traj.states;
    sol.controls = traj.controls;
    sol.cost = traj.true_cost;
    sol.max_violation = traj.violation;
    sol.converged = inner_converged &&
                    (ocp_.constraint_dim == 0 ||
                     traj.violation <= opts_.constraint_tolerance);
    sol.al = al;
    if (!have_bp) {
        sol.gains.assign(ocp_.horizon, Matrix::Zero(ocp_.control_dim, ocp_.state_dim));
        sol.feedforward.assign(ocp_.horizon, Vector::Zero(ocp_.control_dim));
    } else {
        double final_reg = std::max(reg, opts_.reg_min);
        try {
            BackwardPass bp = backward_pass(traj, al, final_reg);
            sol.gains = bp.gains;
            sol.feedforward = bp.feedforward;
        } catch (const RegularizationExhausted&) {
            sol.gains = last_bp.gains;
            sol.feedforward = last_bp.feedforward;
        }
    }
    return sol;
}

std::vector<Vector> DdpSolver::objective_gradient(const std::vector<Vector>& states,
                                                  const std::vector<Vector>& controls) const {
    const int N = ocp_.horizon;
    const int nx = ocp_.state_dim;
    const int nu = ocp_.control_dim;
    std::vector<Vector> grad(N);
    Vector adj = fd_gradient(ocp_.terminal_cost, states[N], opts_.fd_step_jacobian);
    for (int k = N - 1; k >= 0; --k) {
        const Vector at = (Vector(nx + nu) << states[k], controls[k]).finished();
        Matrix joint = fd_jacobian(
            [&](const Vector& z) -> Vector {
                return ocp_.dynamics(z.head(nx), z.tail(nu), k);
            },
            at, opts_.fd_step_jacobian);
        Vector g = fd_gradient(
            [&](const Vector& z) { return ocp_.stage_cost(z.head(nx), z.tail(nu), k); }, at,
            opts_.fd_step_jacobian);
        grad[k] = g.tail(nu) + joint.rightCols(nu).transpose() * adj;
        adj = g.head(nx) + joint.leftCols(nx).transpose() * adj;
    }
    return grad;
}

void augmented_lagrangian_update(AlState& al, const std::vector<Vector>& constraint_values,
                                 double prev_violation, const SolverOptions& opts) {
    double violation = 0.0;
    for (std::size_t k = 0; k < constraint_values.size(); ++k) {
        const Vector& c = constraint_values[k];
        for (int j = 0; j < c.size(); ++j) {
            const double next = al.multipliers[k](j) + al.penalty * c(j);
            al.multipliers[k](j) = std::clamp(next, 0.0, opts.multiplier_max);
            violation = std::max(violation, std::max(0.0, c(j)));
        }
    }
    if (violation > opts.violation_shrink * prev_violation) {
        al.penalty = std::min(al.penalty * opts.penalty_growth, opts.penalty_max);
    }
}

}  // namespace tsddp
