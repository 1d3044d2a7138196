#include "tsddp/problems.hpp"

#include <cmath>

namespace tsddp {

Vector double_integrator_step(const Vector& x, double u, const Vector& w,
                              const DoubleIntegratorConfig& cfg) {
    Vector next(2);
    next(0) = x(0) + cfg.dt * x(1) + w(0);
    next(1) = x(1) + cfg.accel * u + w(1);
    return next;
}

double stage_cost_di(const Vector& u) { return u.norm(); }

double terminal_cost_di(const Vector& x, const DoubleIntegratorConfig& cfg) {
    return cfg.terminal_weight * (x - cfg.target).squaredNorm();
}

Vector two_body_derivative(const Vector& x, const Vector& u, const LowThrustConfig& cfg) {
    const double r = x.head(2).norm();
    if (r < 1.0 / cfg.length_scale) {  // 1 km in scaled units
        throw SingularRadius("two_body_derivative: radius below 1 km");
    }
    Vector d(4);
    d.head(2) = x.tail(2);
    d.tail(2) = -cfg.gm_scaled() / (r * r * r) * x.head(2) + u;
    return d;
}

Vector rk4(const std::function<Vector(const Vector&)>& f, const Vector& x, double dt,
           int substeps) {
    Vector state = x;
    const int n = std::max(1, substeps);
    const double h = dt / n;
    for (int s = 0; s < n; ++s) {
        const Vector k1 = f(state);
        const Vector k2 = f(state + 0.5 * h * k1);
        const Vector k3 = f(state + 0.5 * h * k2);
        const Vector k4 = f(state + h * k3);
        state += (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    }
    return state;
}

Vector rk4_step(const Vector& x, const Vector& u, double dt, const LowThrustConfig& cfg) {
    return rk4([&](const Vector& s) { return two_body_derivative(s, u, cfg); }, x, dt,
               cfg.substeps);
}

Vector low_thrust_step(const Vector& x, const Vector& u, const Vector& w, int /*k*/,
                       const LowThrustConfig& cfg) {
    return rk4_step(x, u, cfg.dt_scaled(), cfg) + w;
}

double stage_cost_lt(const Vector& u, const LowThrustConfig& cfg) {
    return std::sqrt(u.squaredNorm() + cfg.mass_leak);
}

double terminal_cost_lt(const Vector& x, const LowThrustConfig& cfg) {
    Vector target(4);
    target.head(2) = cfg.mars_pos / cfg.length_scale;
    target.tail(2) = cfg.mars_vel / cfg.velocity_scale();
    return cfg.terminal_weight * (x - target).squaredNorm();
}

Vector scale_state(const Vector& x_physical, const LowThrustConfig& cfg) {
    Vector s(4);
    s.head(2) = x_physical.head(2) / cfg.length_scale;
    s.tail(2) = x_physical.tail(2) / cfg.velocity_scale();
    return s;
}

Vector unscale_state(const Vector& x_scaled, const LowThrustConfig& cfg) {
    Vector p(4);
    p.head(2) = x_scaled.head(2) * cfg.length_scale;
    p.tail(2) = x_scaled.tail(2) * cfg.velocity_scale();
    return p;
}

Vector scale_control(const Vector& u_physical, const LowThrustConfig& cfg) {
    return u_physical / cfg.accel_scale();
}

Vector unscale_control(const Vector& u_scaled, const LowThrustConfig& cfg) {
    return u_scaled * cfg.accel_scale();
}

namespace {

TranscribedOCP deterministic_ocp_di(const DoubleIntegratorConfig& cfg, const Vector& x0,
                                    int start, double duty, bool first_full,
                                    double smoothing) {
    TranscribedOCP ocp;
    ocp.state_dim = 2;
    ocp.control_dim = 1;
    ocp.horizon = cfg.stages - start;
    ocp.initial_state = x0;
    ocp.stage_cost_control_only = true;
    const Vector zero_w = Vector::Zero(2);
    ocp.dynamics = [cfg, zero_w](const Vector& x, const Vector& u, int) {
        return double_integrator_step(x, u(0), zero_w, cfg);
    };
    if (smoothing > 0.0) {
        ocp.stage_cost = [smoothing](const Vector&, const Vector& u, int) {
            return std::sqrt(u.squaredNorm() + smoothing);
        };
    } else {
        ocp.stage_cost = [](const Vector&, const Vector& u, int) { return stage_cost_di(u); };
    }
    ocp.terminal_cost = [cfg](const Vector& x) { return terminal_cost_di(x, cfg); };
    ocp.constraint = [cfg, duty, first_full](const Vector& u, int k) {
        const double bound =
            (k == 0 && first_full) ? cfg.control_bound : duty * cfg.control_bound;
        Vector c(1);
        c(0) = u.squaredNorm() / (bound * bound) - 1.0;
        return c;
    };
    ocp.constraint_dim = 1;
    return ocp;
}

TranscribedOCP deterministic_ocp_lt(const LowThrustConfig& cfg, const Vector& x0, int start,
                                    double duty, bool first_full, double smoothing) {
    TranscribedOCP ocp;
    ocp.state_dim = 4;
    ocp.control_dim = 2;
    ocp.horizon = cfg.stages - start;
    ocp.initial_state = x0;
    ocp.stage_cost_control_only = true;
    ocp.dynamics = [cfg](const Vector& x, const Vector& u, int) {
        return rk4_step(x, u, cfg.dt_scaled(), cfg);
    };
    const double leak = cfg.mass_leak + smoothing;
    ocp.stage_cost = [leak](const Vector&, const Vector& u, int) {
        return std::sqrt(u.squaredNorm() + leak);
    };
    ocp.terminal_cost = [cfg](const Vector& x) { return terminal_cost_lt(x, cfg); };
    const double u_ub = cfg.u_max_scaled();
    ocp.constraint = [u_ub, duty, first_full](const Vector& u, int k) {
        const double bound = (k == 0 && first_full) ? u_ub : duty * u_ub;
        Vector c(1);
        c(0) = u.squaredNorm() / (bound * bound) - 1.0;
        return c;
    };
    ocp.constraint_dim = 1;
    return ocp;
}

StochasticProblem stochastic_di(const DoubleIntegratorConfig& cfg, double smoothing) {
    StochasticProblem prob;
    prob.nx = 2;
    prob.nu = 1;
    prob.nw = 2;
    prob.horizon = cfg.stages;
    prob.dynamics = [cfg](const Vector& x, const Vector& u, const Vector& w, int) {
        return double_integrator_step(x, u(0), w, cfg);
    };
    if (smoothing > 0.0) {
        prob.stage_cost = [smoothing](const Vector&, const Vector& u, const Vector&, int) {
            return std::sqrt(u.squaredNorm() + smoothing);
        };
    } else {
        prob.stage_cost = [](const Vector&, const Vector& u, const Vector&, int) {
            return stage_cost_di(u);
        };
    }
    prob.terminal_cost = [cfg](const Vector& x) { return terminal_cost_di(x, cfg); };
    prob.control_norm_bound = cfg.control_bound;
    Matrix noise = Matrix::Zero(2, 2);
    noise(0, 0) = cfg.pos_noise_var;
    noise(1, 1) = cfg.vel_noise_var;
    prob.noise_cov = [noise](int) { return noise; };
    prob.init = GaussianState::dirac(cfg.init_state);
    prob.kappa_x = cfg.kappa;
    prob.kappa_w = cfg.kappa;
    prob.stage_cost_control_only = true;
    return prob;
}

StochasticProblem stochastic_lt(const LowThrustConfig& cfg, double smoothing) {
    StochasticProblem prob;
    prob.nx = 4;
    prob.nu = 2;
    prob.nw = 4;
    prob.horizon = cfg.stages;
    prob.dynamics = [cfg](const Vector& x, const Vector& u, const Vector& w, int k) {
        return low_thrust_step(x, u, w, k, cfg);
    };
    const double leak = cfg.mass_leak + smoothing;
    prob.stage_cost = [leak](const Vector&, const Vector& u, const Vector&, int) {
        return std::sqrt(u.squaredNorm() + leak);
    };
    prob.terminal_cost = [cfg](const Vector& x) { return terminal_cost_lt(x, cfg); };
    prob.control_norm_bound = cfg.u_max_scaled();
    Matrix noise = Matrix::Zero(4, 4);
    const double pos_var = cfg.pos_noise_var / (cfg.length_scale * cfg.length_scale);
    const double vel_var = cfg.vel_noise_var / (cfg.velocity_scale() * cfg.velocity_scale());
    noise(0, 0) = pos_var;
    noise(1, 1) = pos_var;
    noise(2, 2) = vel_var;
    noise(3, 3) = vel_var;
    prob.noise_cov = [noise](int) { return noise; };
    Vector init(4);
    init.head(2) = cfg.earth_pos;
    init.tail(2) = cfg.earth_vel;
    prob.init = GaussianState::dirac(scale_state(init, cfg));
    prob.kappa_x = cfg.kappa;
    prob.kappa_w = cfg.kappa;
    prob.stage_cost_control_only = true;
    return prob;
}

}  // namespace

BenchmarkProblem make_double_integrator(const DoubleIntegratorConfig& cfg) {
    BenchmarkProblem bench;
    bench.name = "double_integrator";
    bench.stochastic = stochastic_di(cfg, 0.0);
    bench.stochastic_smoothed = [cfg](double eps) { return stochastic_di(cfg, eps); };
    bench.deterministic_ocp = [cfg](const Vector& x0, int start, double duty,
                                    bool first_full, double smoothing) {
        return deterministic_ocp_di(cfg, x0, start, duty, first_full, smoothing);
    };
    StochasticProblem prob = bench.stochastic;
    bench.remaining_stochastic = [prob](const Vector& x0, int start) {
        StochasticProblem rest = prob;
        rest.horizon = prob.horizon - start;
        rest.init = GaussianState::dirac(x0);
        auto cov = prob.noise_cov;
        rest.noise_cov = [cov, start](int k) { return cov(start + k); };
        return rest;
    };
    // The exact kernel is an L1 norm; anneal from a wide pseudo-Huber valley.
    bench.smoothing_schedule = {1e-2, 1e-4, 1e-6, 0.0};
    bench.delta_v = [](const Vector& u) { return stage_cost_di(u); };
    bench.terminal_penalty = [cfg](const Vector& x) { return terminal_cost_di(x, cfg); };
    bench.terminal_difference = [cfg](const Vector& x) { return (x - cfg.target).norm(); };
    bench.report_state = [](const Vector& x) { return x; };
    bench.report_control = [](const Vector& u) { return u; };
    return bench;
}

BenchmarkProblem make_low_thrust(const LowThrustConfig& cfg) {
    BenchmarkProblem bench;
    bench.name = "low_thrust";
    bench.stochastic = stochastic_lt(cfg, 0.0);
    bench.stochastic_smoothed = [cfg](double eps) { return stochastic_lt(cfg, eps); };
    bench.deterministic_ocp = [cfg](const Vector& x0, int start, double duty,
                                    bool first_full, double smoothing) {
        return deterministic_ocp_lt(cfg, x0, start, duty, first_full, smoothing);
    };
    StochasticProblem prob = bench.stochastic;
    bench.remaining_stochastic = [prob](const Vector& x0, int start) {
        StochasticProblem rest = prob;
        rest.horizon = prob.horizon - start;
        rest.init = GaussianState::dirac(x0);
        auto cov = prob.noise_cov;
        rest.noise_cov = [cov, start](int k) { return cov(start + k); };
        return rest;
    };
    // The mass-leak term already smooths the kernel at ~10% of the bound; a
    // short anneal still helps the cold-started nominal solve.
    bench.smoothing_schedule = {1e-2 * cfg.u_max_scaled() * cfg.u_max_scaled(), 0.0};
    bench.delta_v = [cfg](const Vector& u) { return stage_cost_lt(u, cfg); };
    bench.terminal_penalty = [cfg](const Vector& x) { return terminal_cost_lt(x, cfg); };
    Vector target(4);
    target.head(2) = cfg.mars_pos / cfg.length_scale;
    target.tail(2) = cfg.mars_vel / cfg.velocity_scale();
    bench.terminal_difference = [target](const Vector& x) { return (x - target).norm(); };
    bench.report_state = [cfg](const Vector& x) { return unscale_state(x, cfg); };
    bench.report_control = [cfg](const Vector& u) { return unscale_control(u, cfg); };
    return bench;
}

}  // namespace tsddp
