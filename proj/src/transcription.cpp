#include "tsddp/transcription.hpp"

#include <cmath>

namespace tsddp {

StackedState initial_stacked_state(const StochasticProblem& prob) {
    return {make_sigma_set(prob.init, prob.kappa_x)};
}

namespace {

SigmaSet noise_sigma_set(const StochasticProblem& prob, int k) {
    GaussianState noise{Vector::Zero(prob.nw), prob.noise_cov(k)};
    return make_sigma_set(noise, prob.kappa_w);
}

}  // namespace

StackedState propagate(const StackedState& x, const StackedControl& u, int k,
                       const StochasticProblem& prob, double sqrt_jitter) {
    const SigmaSet w = noise_sigma_set(prob, k);
    const int ns = x.count();
    const int nw = w.count();

    // First pass: propagated mean over all sigma pairs.
    Matrix mapped(prob.nx, ns * nw);
    Vector mean = Vector::Zero(prob.nx);
    for (int i = 0; i < ns; ++i) {
        for (int j = 0; j < nw; ++j) {
            Vector next = prob.dynamics(x.sigma.points.col(i), u.controls.col(i),
                                        w.points.col(j), k);
            if (!next.allFinite()) {
                throw DynamicsFailure("propagate: dynamics returned non-finite state");
            }
            mapped.col(i * nw + j) = next;
            mean.noalias() += x.sigma.weights(i) * w.weights(j) * next;
        }
    }

    Matrix cov = Matrix::Zero(prob.nx, prob.nx);
    for (int i = 0; i < ns; ++i) {
        for (int j = 0; j < nw; ++j) {
            Vector d = mapped.col(i * nw + j) - mean;
            cov.noalias() += (x.sigma.weights(i) * w.weights(j)) * d * d.transpose();
        }
    }
    cov = 0.5 * (cov + cov.transpose());
    if (sqrt_jitter > 0.0) {
        cov.diagonal().array() += sqrt_jitter;
    }

    return {make_sigma_set({mean, cov}, prob.kappa_x)};
}

double expected_stage_cost(const StackedState& x, const StackedControl& u, int k,
                           const StochasticProblem& prob) {
    const SigmaSet w = noise_sigma_set(prob, k);
    double cost = 0.0;
    for (int i = 0; i < x.count(); ++i) {
        for (int j = 0; j < w.count(); ++j) {
            cost += x.sigma.weights(i) * w.weights(j) *
                    prob.stage_cost(x.sigma.points.col(i), u.controls.col(i),
                                    w.points.col(j), k);
        }
    }
    if (!std::isfinite(cost)) {
        throw CostFailure("expected_stage_cost: non-finite cost");
    }
    return cost;
}

double expected_terminal_cost(const StackedState& x, const StochasticProblem& prob) {
    double cost = 0.0;
    for (int i = 0; i < x.count(); ++i) {
        cost += x.sigma.weights(i) * prob.terminal_cost(x.sigma.points.col(i));
    }
    if (!std::isfinite(cost)) {
        throw CostFailure("expected_terminal_cost: non-finite cost");
    }
    return cost;
}

double total_objective(const std::vector<StackedState>& states,
                       const std::vector<StackedControl>& controls,
                       const StochasticProblem& prob) {
    double total = 0.0;
    for (int k = 0; k < prob.horizon; ++k) {
        total += expected_stage_cost(states[k], controls[k], k, prob);
    }
    return total + expected_terminal_cost(states[prob.horizon], prob);
}

double chance_constraint_norm2(const StackedControl& u, double u_ub,
                               const StochasticProblem& prob) {
    const Vector weights = sigma_weights(prob.nx, prob.kappa_x);
    const int ns = static_cast<int>(weights.size());
    Vector sq(ns);
    for (int i = 0; i < ns; ++i) sq(i) = u.controls.col(i).squaredNorm();
    const double mean = weights.dot(sq);
    double var = 0.0;
    for (int i = 0; i < ns; ++i) {
        const double d = sq(i) - mean;
        var += weights(i) * d * d;
    }
    const double m = prob.quantile_multiplier;
    const double eps = prob.epsilon_singularity;
    return mean + m * std::sqrt(var + eps) - m * std::sqrt(eps) - u_ub * u_ub;
}

double chance_constraint_general(const ControlConstraintFn& c, const StackedControl& u,
                                 const StochasticProblem& prob) {
    const Vector weights = sigma_weights(prob.nx, prob.kappa_x);
    const int ns = static_cast<int>(weights.size());
    Vector values(ns);
    for (int i = 0; i < ns; ++i) {
        values(i) = c(u.controls.col(i));
        if (!std::isfinite(values(i))) {
            throw ConstraintFailure("chance_constraint_general: non-finite constraint");
        }
    }
    const double mean = weights.dot(values);
    double var = 0.0;
    for (int i = 0; i < ns; ++i) {
        const double d = values(i) - mean;
        var += weights(i) * d * d;
    }
    const double m = prob.quantile_multiplier;
    const double eps = prob.epsilon_singularity;
    return mean + m * std::sqrt(var + eps) - m * std::sqrt(eps);
}

Vector flatten_state(const StackedState& x) {
    return Eigen::Map<const Vector>(x.sigma.points.data(), x.sigma.points.size());
}

StackedState unflatten_state(const Vector& z, const StochasticProblem& prob) {
    StackedState x;
    x.sigma.points = Eigen::Map<const Matrix>(z.data(), prob.nx, prob.sigma_count());
    x.sigma.weights = sigma_weights(prob.nx, prob.kappa_x);
    x.sigma.kappa = prob.kappa_x;
    return x;
}

Vector flatten_control(const StackedControl& u) {
    return Eigen::Map<const Vector>(u.controls.data(), u.controls.size());
}

StackedControl unflatten_control(const Vector& z, const StochasticProblem& prob) {
    StackedControl u;
    u.controls = Eigen::Map<const Matrix>(z.data(), prob.nu, prob.sigma_count());
    return u;
}

TranscribedOCP transcribe(const StochasticProblem& prob, double duty, double sqrt_jitter) {
    TranscribedOCP ocp;
    ocp.state_dim = prob.nx * prob.sigma_count();
    ocp.control_dim = prob.nu * prob.sigma_count();
    ocp.horizon = prob.horizon;
    ocp.initial_state = flatten_state(initial_stacked_state(prob));

    ocp.dynamics = [prob, sqrt_jitter](const Vector& z, const Vector& v, int k) {
        return flatten_state(propagate(unflatten_state(z, prob),
                                       unflatten_control(v, prob), k, prob, sqrt_jitter));
    };
    ocp.stage_cost = [prob](const Vector& z, const Vector& v, int k) {
        return expected_stage_cost(unflatten_state(z, prob), unflatten_control(v, prob),
                                   k, prob);
    };
    ocp.terminal_cost = [prob](const Vector& z) {
        return expected_terminal_cost(unflatten_state(z, prob), prob);
    };
    ocp.stage_cost_control_only = prob.stage_cost_control_only;

    if (prob.control_norm_bound > 0.0) {
        // Normalized by bound^2 so multipliers and tolerances are O(1)
        // regardless of the problem's control units.
        const double bound = duty * prob.control_norm_bound;
        ocp.constraint = [prob, bound](const Vector& v, int) {
            Vector c(1);
            c(0) = chance_constraint_norm2(unflatten_control(v, prob), bound, prob) /
                   (bound * bound);
            return c;
        };
        ocp.constraint_dim = 1;
    } else if (prob.control_constraint) {
        ocp.constraint = [prob](const Vector& v, int) {
            Vector c(1);
            c(0) = chance_constraint_general(prob.control_constraint,
                                             unflatten_control(v, prob), prob);
            return c;
        };
        ocp.constraint_dim = 1;
    }
    return ocp;
}

}  // namespace tsddp
