#pragma once

#include <string>

#include "tsddp/transcription.hpp"

namespace tsddp {

// Spacecraft radius fell below the physical singularity guard.
class SingularRadius : public Error {
public:
    using Error::Error;
};

/// 1-D double integrator transfer, parameters per the benchmark setup.
struct DoubleIntegratorConfig {
    int stages = 39;  // N
    double dt = 0.15;
    double accel = 0.25;  // b
    double pos_noise_var = 1e-20;
    double vel_noise_var = 2.5e-4;
    Vector init_state = (Vector(2) << -10.0, 0.0).finished();
    Vector target = (Vector(2) << 0.0, 0.0).finished();
    double terminal_weight = 1e4;  // c_f
    double control_bound = 1.0;
    double kappa = 2.0;
};

/// Planar Earth-Mars low-thrust transfer. Physical inputs in km/s units;
/// everything the solver touches is nondimensionalized by the scale factors.
struct LowThrustConfig {
    int stages = 40;  // N
    double transfer_days = 348.79;
    double gm_sun = 1.32712442099e11;  // km^3/s^2
    double u_max = 1e-6;               // km/s^2
    double pos_noise_var = 1e-12;      // km^2
    double vel_noise_var = 2.522627e-5;  // km^2/s^2
    Vector earth_pos = (Vector(2) << -140699693.0, -51614428.0).finished();
    Vector earth_vel = (Vector(2) << 9.774596, -28.07828).finished();
    Vector mars_pos = (Vector(2) << -172682023.0, 176959469.0).finished();
    Vector mars_vel = (Vector(2) << -16.427384, -14.860506).finished();
    double terminal_weight = 1e6;  // c_f
    double length_scale = 1e8;     // L_sf
    double time_scale = 1e6;       // T_sf
    double kappa = 2.0;
    double mass_leak = 1e-6;  // eps inside sqrt(||u||^2 + eps)
    int substeps = 10;        // RK4 substeps per ZOH stage

    double velocity_scale() const { return length_scale / time_scale; }
    double accel_scale() const { return length_scale / (time_scale * time_scale); }
    double gm_scaled() const { return gm_sun / (accel_scale() * length_scale * length_scale); }
    double transfer_time_scaled() const { return transfer_days * 86400.0 / time_scale; }
    double dt_scaled() const { return transfer_time_scaled() / stages; }
    double u_max_scaled() const { return u_max / accel_scale(); }
};

// --- double integrator -------------------------------------------------------

/// r' = r + dt v + w1, v' = v + b u + w2.
Vector double_integrator_step(const Vector& x, double u, const Vector& w,
                              const DoubleIntegratorConfig& cfg);

double stage_cost_di(const Vector& u);
double terminal_cost_di(const Vector& x, const DoubleIntegratorConfig& cfg);

// --- low thrust (scaled units throughout) ------------------------------------

/// d/dt [r, v] = [v, -GM r/||r||^3 + u].
Vector two_body_derivative(const Vector& x, const Vector& u, const LowThrustConfig& cfg);

/// Classical RK4 with fixed substeps; f is the time-invariant derivative.
Vector rk4(const std::function<Vector(const Vector&)>& f, const Vector& x, double dt,
           int substeps);

/// One ZOH stage of the two-body dynamics.
Vector rk4_step(const Vector& x, const Vector& u, double dt, const LowThrustConfig& cfg);

/// rk4_step plus additive process noise.
Vector low_thrust_step(const Vector& x, const Vector& u, const Vector& w, int k,
                       const LowThrustConfig& cfg);

double stage_cost_lt(const Vector& u, const LowThrustConfig& cfg);
double terminal_cost_lt(const Vector& x, const LowThrustConfig& cfg);

Vector scale_state(const Vector& x_physical, const LowThrustConfig& cfg);
Vector unscale_state(const Vector& x_scaled, const LowThrustConfig& cfg);
Vector scale_control(const Vector& u_physical, const LowThrustConfig& cfg);
Vector unscale_control(const Vector& u_scaled, const LowThrustConfig& cfg);

// --- solver-facing bundles ----------------------------------------------------

/// One benchmark wired for every consumer: the stochastic statement for the
/// tube transcription, remaining-horizon factories for receding-horizon modes,
/// and the objective kernels the Monte Carlo bookkeeping decomposes with.
struct BenchmarkProblem {
    std::string name;
    StochasticProblem stochastic;

    /// Plain deterministic OCP from state x0 at stage `start`; `duty` scales the
    /// control bound, the first segment keeps the full bound when requested.
    /// `smoothing` is added under the control-norm square root to condition the
    /// solver when the exact kernel has a kink; 0 gives the exact cost.
    std::function<TranscribedOCP(const Vector& x0, int start, double duty, bool first_full,
                                 double smoothing)>
        deterministic_ocp;
    /// Stochastic statement with the smoothed stage-cost kernel (0 = exact).
    std::function<StochasticProblem(double smoothing)> stochastic_smoothed;
    /// Stochastic problem restarted from a known state (zero covariance).
    std::function<StochasticProblem(const Vector& x0, int start)> remaining_stochastic;

    /// Homotopy schedule for the nominal solves, coarse to exact; the last
    /// entry should be 0. Empty means a single exact solve.
    std::vector<double> smoothing_schedule;

    std::function<double(const Vector& u)> delta_v;               // stage kernel
    std::function<double(const Vector& x)> terminal_penalty;      // phi
    std::function<double(const Vector& x)> terminal_difference;   // ||x_N - target||

    /// Unit transforms applied when writing artifacts (solver units -> report
    /// units). Identity for the double integrator, unscaling for low thrust.
    std::function<Vector(const Vector& x)> report_state;
    std::function<Vector(const Vector& u)> report_control;

    int horizon() const { return stochastic.horizon; }
    double control_bound() const { return stochastic.control_norm_bound; }
};

BenchmarkProblem make_double_integrator(const DoubleIntegratorConfig& cfg = {});
BenchmarkProblem make_low_thrust(const LowThrustConfig& cfg = {});

}  // namespace tsddp
