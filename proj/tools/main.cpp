#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "tsddp/montecarlo.hpp"
#include "tsddp/policy.hpp"
#include "tsddp/problems.hpp"

using nlohmann::json;
using namespace tsddp;

namespace {

struct RunConfig {
    std::string problem = "double_integrator";
    std::string mode;  // ddp | tsddp (solve); ddp_reopt | tsddp_reopt | tsddp_policy (mc)
    double duty = 1.0;
    std::uint64_t seed = 0;
    int samples = 500;
    bool saturate = false;
    int threads = 1;
    std::string out_dir = "out";
    SolverOptions solver;
    DoubleIntegratorConfig di;
    LowThrustConfig lt;
};

template <typename T>
T get_typed(const json& j, const std::string& key) {
    try {
        return j.get<T>();
    } catch (const json::exception&) {
        throw ConfigError("config key '" + key + "' has the wrong type");
    }
}

Vector get_vec(const json& j, const std::string& key, int n) {
    auto v = get_typed<std::vector<double>>(j, key);
    if (static_cast<int>(v.size()) != n) {
        throw ConfigError("config key '" + key + "' must have " + std::to_string(n) +
                          " entries");
    }
    return Eigen::Map<const Vector>(v.data(), n);
}

void check_keys(const json& obj, const std::vector<std::string>& known,
                const std::string& scope) {
    for (auto it = obj.begin(); it != obj.end(); ++it) {
        if (std::find(known.begin(), known.end(), it.key()) == known.end()) {
            throw ConfigError("unknown config key '" + scope + it.key() + "'");
        }
    }
}

void parse_solver(const json& j, SolverOptions& s) {
    check_keys(j, {"max_iters", "max_al_phases", "cost_tolerance", "constraint_tolerance",
                   "reg_init", "reg_min", "reg_max", "reg_increase", "reg_decrease",
                   "line_search_factor", "line_search_min_step", "armijo_ratio",
                   "penalty_init", "penalty_growth", "penalty_max", "multiplier_max",
                   "violation_shrink", "fd_step_jacobian", "fd_step_hessian",
                   "stall_phases"},
               "solver.");
    if (j.contains("max_iters")) s.max_iters = get_typed<int>(j["max_iters"], "max_iters");
    if (j.contains("max_al_phases"))
        s.max_al_phases = get_typed<int>(j["max_al_phases"], "max_al_phases");
    if (j.contains("cost_tolerance"))
        s.cost_tolerance = get_typed<double>(j["cost_tolerance"], "cost_tolerance");
    if (j.contains("constraint_tolerance"))
        s.constraint_tolerance =
            get_typed<double>(j["constraint_tolerance"], "constraint_tolerance");
    if (j.contains("reg_init")) s.reg_init = get_typed<double>(j["reg_init"], "reg_init");
    if (j.contains("reg_min")) s.reg_min = get_typed<double>(j["reg_min"], "reg_min");
    if (j.contains("reg_max")) s.reg_max = get_typed<double>(j["reg_max"], "reg_max");
    if (j.contains("reg_increase"))
        s.reg_increase = get_typed<double>(j["reg_increase"], "reg_increase");
    if (j.contains("reg_decrease"))
        s.reg_decrease = get_typed<double>(j["reg_decrease"], "reg_decrease");
    if (j.contains("line_search_factor"))
        s.line_search_factor = get_typed<double>(j["line_search_factor"], "line_search_factor");
    if (j.contains("line_search_min_step"))
        s.line_search_min_step =
            get_typed<double>(j["line_search_min_step"], "line_search_min_step");
    if (j.contains("armijo_ratio"))
        s.armijo_ratio = get_typed<double>(j["armijo_ratio"], "armijo_ratio");
    if (j.contains("penalty_init"))
        s.penalty_init = get_typed<double>(j["penalty_init"], "penalty_init");
    if (j.contains("penalty_growth"))
        s.penalty_growth = get_typed<double>(j["penalty_growth"], "penalty_growth");
    if (j.contains("penalty_max"))
        s.penalty_max = get_typed<double>(j["penalty_max"], "penalty_max");
    if (j.contains("multiplier_max"))
        s.multiplier_max = get_typed<double>(j["multiplier_max"], "multiplier_max");
    if (j.contains("violation_shrink"))
        s.violation_shrink = get_typed<double>(j["violation_shrink"], "violation_shrink");
    if (j.contains("fd_step_jacobian"))
        s.fd_step_jacobian = get_typed<double>(j["fd_step_jacobian"], "fd_step_jacobian");
    if (j.contains("fd_step_hessian"))
        s.fd_step_hessian = get_typed<double>(j["fd_step_hessian"], "fd_step_hessian");
    if (j.contains("stall_phases"))
        s.stall_phases = get_typed<int>(j["stall_phases"], "stall_phases");
}

void parse_di(const json& j, DoubleIntegratorConfig& c) {
    check_keys(j, {"stages", "dt", "accel", "pos_noise_var", "vel_noise_var", "init_state",
                   "target", "terminal_weight", "control_bound", "kappa"},
               "double_integrator.");
    if (j.contains("stages")) c.stages = get_typed<int>(j["stages"], "stages");
    if (j.contains("dt")) c.dt = get_typed<double>(j["dt"], "dt");
    if (j.contains("accel")) c.accel = get_typed<double>(j["accel"], "accel");
    if (j.contains("pos_noise_var"))
        c.pos_noise_var = get_typed<double>(j["pos_noise_var"], "pos_noise_var");
    if (j.contains("vel_noise_var"))
        c.vel_noise_var = get_typed<double>(j["vel_noise_var"], "vel_noise_var");
    if (j.contains("init_state")) c.init_state = get_vec(j["init_state"], "init_state", 2);
    if (j.contains("target")) c.target = get_vec(j["target"], "target", 2);
    if (j.contains("terminal_weight"))
        c.terminal_weight = get_typed<double>(j["terminal_weight"], "terminal_weight");
    if (j.contains("control_bound"))
        c.control_bound = get_typed<double>(j["control_bound"], "control_bound");
    if (j.contains("kappa")) c.kappa = get_typed<double>(j["kappa"], "kappa");
}

void parse_lt(const json& j, LowThrustConfig& c) {
    check_keys(j, {"stages", "transfer_days", "gm_sun", "u_max", "pos_noise_var",
                   "vel_noise_var", "earth_pos", "earth_vel", "mars_pos", "mars_vel",
                   "terminal_weight", "length_scale", "time_scale", "kappa", "mass_leak",
                   "substeps"},
               "low_thrust.");
    if (j.contains("stages")) c.stages = get_typed<int>(j["stages"], "stages");
    if (j.contains("transfer_days"))
        c.transfer_days = get_typed<double>(j["transfer_days"], "transfer_days");
    if (j.contains("gm_sun")) c.gm_sun = get_typed<double>(j["gm_sun"], "gm_sun");
    if (j.contains("u_max")) c.u_max = get_typed<double>(j["u_max"], "u_max");
    if (j.contains("pos_noise_var"))
        c.pos_noise_var = get_typed<double>(j["pos_noise_var"], "pos_noise_var");
    if (j.contains("vel_noise_var"))
        c.vel_noise_var = get_typed<double>(j["vel_noise_var"], "vel_noise_var");
    if (j.contains("earth_pos")) c.earth_pos = get_vec(j["earth_pos"], "earth_pos", 2);
    if (j.contains("earth_vel")) c.earth_vel = get_vec(j["earth_vel"], "earth_vel", 2);
    if (j.contains("mars_pos")) c.mars_pos = get_vec(j["mars_pos"], "mars_pos", 2);
    if (j.contains("mars_vel")) c.mars_vel = get_vec(j["mars_vel"], "mars_vel", 2);
    if (j.contains("terminal_weight"))
        c.terminal_weight = get_typed<double>(j["terminal_weight"], "terminal_weight");
    if (j.contains("length_scale"))
        c.length_scale = get_typed<double>(j["length_scale"], "length_scale");
    if (j.contains("time_scale"))
        c.time_scale = get_typed<double>(j["time_scale"], "time_scale");
    if (j.contains("kappa")) c.kappa = get_typed<double>(j["kappa"], "kappa");
    if (j.contains("mass_leak")) c.mass_leak = get_typed<double>(j["mass_leak"], "mass_leak");
    if (j.contains("substeps")) c.substeps = get_typed<int>(j["substeps"], "substeps");
}

void parse_config_file(const std::string& path, RunConfig& cfg) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file: " + path);
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw ConfigError(std::string("config parse error: ") + e.what());
    }
    check_keys(j, {"problem", "mode", "duty", "seed", "samples", "saturate", "threads",
                   "out_dir", "solver", "double_integrator", "low_thrust"},
               "");
    if (j.contains("problem")) cfg.problem = get_typed<std::string>(j["problem"], "problem");
    if (j.contains("mode")) cfg.mode = get_typed<std::string>(j["mode"], "mode");
    if (j.contains("duty")) cfg.duty = get_typed<double>(j["duty"], "duty");
    if (j.contains("seed")) cfg.seed = get_typed<std::uint64_t>(j["seed"], "seed");
    if (j.contains("samples")) cfg.samples = get_typed<int>(j["samples"], "samples");
    if (j.contains("saturate")) cfg.saturate = get_typed<bool>(j["saturate"], "saturate");
    if (j.contains("threads")) cfg.threads = get_typed<int>(j["threads"], "threads");
    if (j.contains("out_dir")) cfg.out_dir = get_typed<std::string>(j["out_dir"], "out_dir");
    if (j.contains("solver")) parse_solver(j["solver"], cfg.solver);
    if (j.contains("double_integrator")) parse_di(j["double_integrator"], cfg.di);
    if (j.contains("low_thrust")) parse_lt(j["low_thrust"], cfg.lt);
}

json solver_echo(const SolverOptions& s) {
    return json{{"max_iters", s.max_iters},
                {"max_al_phases", s.max_al_phases},
                {"cost_tolerance", s.cost_tolerance},
                {"constraint_tolerance", s.constraint_tolerance},
                {"reg_init", s.reg_init},
                {"reg_min", s.reg_min},
                {"reg_max", s.reg_max},
                {"reg_increase", s.reg_increase},
                {"reg_decrease", s.reg_decrease},
                {"line_search_factor", s.line_search_factor},
                {"line_search_min_step", s.line_search_min_step},
                {"armijo_ratio", s.armijo_ratio},
                {"penalty_init", s.penalty_init},
                {"penalty_growth", s.penalty_growth},
                {"penalty_max", s.penalty_max},
                {"multiplier_max", s.multiplier_max},
                {"violation_shrink", s.violation_shrink},
                {"fd_step_jacobian", s.fd_step_jacobian},
                {"fd_step_hessian", s.fd_step_hessian},
                {"stall_phases", s.stall_phases}};
}

json config_echo(const RunConfig& cfg, const std::string& command) {
    json j;
    j["command"] = command;
    j["problem"] = cfg.problem;
    j["mode"] = cfg.mode;
    j["duty"] = cfg.duty;
    j["seed"] = cfg.seed;
    j["samples"] = cfg.samples;
    j["saturate"] = cfg.saturate;
    j["threads"] = cfg.threads;
    j["out_dir"] = cfg.out_dir;
    j["solver"] = solver_echo(cfg.solver);
    if (cfg.problem == "double_integrator") {
        const auto& c = cfg.di;
        j["double_integrator"] = {
            {"stages", c.stages},
            {"dt", c.dt},
            {"accel", c.accel},
            {"pos_noise_var", c.pos_noise_var},
            {"vel_noise_var", c.vel_noise_var},
            {"init_state", {c.init_state(0), c.init_state(1)}},
            {"target", {c.target(0), c.target(1)}},
            {"terminal_weight", c.terminal_weight},
            {"control_bound", c.control_bound},
            {"kappa", c.kappa}};
    } else {
        const auto& c = cfg.lt;
        j["low_thrust"] = {{"stages", c.stages},
                           {"transfer_days", c.transfer_days},
                           {"gm_sun", c.gm_sun},
                           {"u_max", c.u_max},
                           {"pos_noise_var", c.pos_noise_var},
                           {"vel_noise_var", c.vel_noise_var},
                           {"earth_pos", {c.earth_pos(0), c.earth_pos(1)}},
                           {"earth_vel", {c.earth_vel(0), c.earth_vel(1)}},
                           {"mars_pos", {c.mars_pos(0), c.mars_pos(1)}},
                           {"mars_vel", {c.mars_vel(0), c.mars_vel(1)}},
                           {"terminal_weight", c.terminal_weight},
                           {"length_scale", c.length_scale},
                           {"time_scale", c.time_scale},
                           {"kappa", c.kappa},
                           {"mass_leak", c.mass_leak},
                           {"substeps", c.substeps}};
    }
    return j;
}

BenchmarkProblem build_problem(const RunConfig& cfg) {
    if (cfg.problem == "double_integrator") return make_double_integrator(cfg.di);
    if (cfg.problem == "low_thrust") return make_low_thrust(cfg.lt);
    throw ConfigError("unknown problem '" + cfg.problem + "'");
}

void write_iteration_log(const SolverSolution& sol, const std::string& path,
                         const std::string& echo) {
    std::ofstream out(path);
    out << "# " << echo << "\n";
    out << "iteration,al_phase,cost,true_cost,violation,reg,step,accepted\n";
    for (const auto& r : sol.log) {
        out << r.iteration << "," << r.al_phase << "," << format_double(r.cost) << ","
            << format_double(r.true_cost) << "," << format_double(r.violation) << ","
            << format_double(r.reg) << "," << format_double(r.step) << ","
            << (r.accepted ? 1 : 0) << "\n";
    }
}

json policy_json(const std::vector<AffineStagePolicy>& policies) {
    json arr = json::array();
    for (std::size_t k = 0; k < policies.size(); ++k) {
        const auto& p = policies[k];
        json entry;
        entry["stage"] = k;
        entry["u0"] = std::vector<double>(p.u0.data(), p.u0.data() + p.u0.size());
        entry["x_ref"] = std::vector<double>(p.x_ref.data(), p.x_ref.data() + p.x_ref.size());
        json rows = json::array();
        for (int i = 0; i < p.gain.rows(); ++i) {
            rows.push_back(std::vector<double>(p.gain.row(i).begin(), p.gain.row(i).end()));
        }
        entry["gain"] = rows;
        entry["degenerate"] = p.degenerate;
        arr.push_back(entry);
    }
    return arr;
}

int cmd_solve(const RunConfig& cfg) {
    BenchmarkProblem bench = build_problem(cfg);
    const std::string mode = cfg.mode.empty() ? "tsddp" : cfg.mode;
    if (mode != "ddp" && mode != "tsddp") {
        throw ConfigError("solve mode must be 'ddp' or 'tsddp', got '" + mode + "'");
    }
    RunConfig resolved = cfg;
    resolved.mode = mode;
    const std::string echo = config_echo(resolved, "solve").dump();
    std::filesystem::create_directories(cfg.out_dir);

    SolverSolution sol;
    std::vector<AffineStagePolicy> policies;
    const StochasticProblem& prob = bench.stochastic;
    if (mode == "ddp") {
        sol = solve_nominal_ddp(bench, cfg.duty, cfg.solver);
    } else {
        sol = solve_nominal_tsddp(bench, cfg.solver);
        policies = fit_policies(bench, sol);
    }

    // Nominal trajectory: stage, sigma-mean state, per-sigma controls, C_k.
    {
        std::ofstream out(cfg.out_dir + "/nominal_trajectory.csv");
        out << "# " << echo << "\n";
        const int ns = (mode == "tsddp") ? prob.sigma_count() : 1;
        out << "stage";
        for (int i = 0; i < prob.nx; ++i) out << ",x" << i;
        for (int s = 0; s < ns; ++s) {
            for (int i = 0; i < prob.nu; ++i) {
                out << ",u" << i;
                if (ns > 1) out << "_s" << s;
            }
        }
        out << ",constraint\n";
        const double bound = cfg.duty * prob.control_norm_bound;
        for (int k = 0; k <= prob.horizon; ++k) {
            out << k;
            Vector x_mean;
            if (mode == "tsddp") {
                x_mean = bench.report_state(unflatten_state(sol.states[k], prob).mean());
            } else {
                x_mean = bench.report_state(sol.states[k]);
            }
            for (int i = 0; i < prob.nx; ++i) out << "," << format_double(x_mean(i));
            if (k < prob.horizon) {
                double ck = 0.0;
                if (mode == "tsddp") {
                    StackedControl u = unflatten_control(sol.controls[k], prob);
                    for (int s = 0; s < ns; ++s) {
                        const Vector us = bench.report_control(u.controls.col(s));
                        for (int i = 0; i < prob.nu; ++i) out << "," << format_double(us(i));
                    }
                    ck = chance_constraint_norm2(u, bound, prob);
                } else {
                    const Vector us = bench.report_control(sol.controls[k]);
                    for (int i = 0; i < prob.nu; ++i) out << "," << format_double(us(i));
                    ck = sol.controls[k].squaredNorm() - bound * bound;
                }
                out << "," << format_double(ck);
            } else {
                for (int s = 0; s < ns * prob.nu; ++s) out << ",";
                out << ",";
            }
            out << "\n";
        }
    }

    write_iteration_log(sol, cfg.out_dir + "/iterations.csv", echo);

    if (mode == "tsddp") {
        std::ofstream out(cfg.out_dir + "/policy.json");
        json j;
        j["config"] = json::parse(echo);
        j["policies"] = policy_json(policies);
        out << j.dump(2) << "\n";
    }

    double delta_v = 0.0;
    for (int k = 0; k < prob.horizon; ++k) {
        if (mode == "tsddp") {
            delta_v += expected_stage_cost(unflatten_state(sol.states[k], prob),
                                           unflatten_control(sol.controls[k], prob), k, prob);
        } else {
            delta_v += bench.delta_v(sol.controls[k]);
        }
    }
    {
        std::ofstream out(cfg.out_dir + "/summary.json");
        json j;
        j["config"] = json::parse(echo);
        j["objective"] = sol.cost;
        j["delta_v"] = delta_v;
        j["terminal_penalty"] = sol.cost - delta_v;
        j["max_violation"] = sol.max_violation;
        j["converged"] = sol.converged;
        j["iterations"] = sol.log.size();
        if (!sol.converged) j["warning"] = "iteration limit reached before convergence";
        out << j.dump(2) << "\n";
    }
    std::cout << (sol.converged ? "converged" : "NOT converged") << "  J=" << sol.cost
              << "  violation=" << sol.max_violation << "  artifacts in " << cfg.out_dir
              << "\n";
    return 0;
}

int cmd_montecarlo(const RunConfig& cfg) {
    BenchmarkProblem bench = build_problem(cfg);
    const std::string mode_name = cfg.mode.empty() ? "tsddp_policy" : cfg.mode;
    MCConfig mc;
    mc.mode = mc_mode_from_string(mode_name);
    mc.samples = cfg.samples;
    mc.master_seed = cfg.seed;
    mc.duty = cfg.duty;
    mc.saturate = cfg.saturate;
    mc.threads = cfg.threads;
    mc.solver = cfg.solver;

    RunConfig resolved = cfg;
    resolved.mode = mode_name;
    const std::string echo = config_echo(resolved, "montecarlo").dump();
    std::filesystem::create_directories(cfg.out_dir);

    CampaignInputs inputs;
    switch (mc.mode) {
        case McMode::DdpReopt: {
            SolverSolution nominal = solve_nominal_ddp(bench, cfg.duty, cfg.solver);
            inputs.nominal_controls = nominal.controls;
            break;
        }
        case McMode::TsddpReopt: {
            SolverSolution nominal = solve_nominal_tsddp(bench, cfg.solver);
            inputs.nominal_stacked_controls = nominal.controls;
            break;
        }
        case McMode::TsddpPolicy: {
            SolverSolution nominal = solve_nominal_tsddp(bench, cfg.solver);
            inputs.policies = fit_policies(bench, nominal);
            break;
        }
    }

    MCResult result = run_campaign(bench, mc, inputs);
    write_campaign_artifacts(result, bench, cfg.out_dir, echo);
    std::cout << "campaign done: " << result.samples.size() << " samples, "
              << result.failed_samples << " failed; median total "
              << result.total_stats.median << "; artifacts in " << cfg.out_dir << "\n";
    return result.ok() ? 0 : 3;
}

// --- validate: built-in oracle suite -----------------------------------------

struct CheckResult {
    std::string name;
    bool pass;
    std::string detail;
};

CheckResult check_ut_affine(double weight_perturbation) {
    SampleStream rng(424242, 0);
    double worst = 0.0;
    for (int trial = 0; trial < 25; ++trial) {
        const int n = 1 + static_cast<int>(rng.next_u64() % 6);
        Matrix a0(n, n);
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j) a0(i, j) = rng.normal();
        GaussianState g{rng.normals(n), a0 * a0.transpose()};
        Matrix a(n, n);
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j) a(i, j) = rng.normal();
        Vector b = rng.normals(n);

        SigmaSet s = make_sigma_set(g, 2.0);
        Vector w = s.weights;
        w(0) += weight_perturbation;  // test hook: corrupt the weights
        Matrix mapped(n, s.count());
        for (int i = 0; i < s.count(); ++i) mapped.col(i) = a * s.points.col(i) + b;
        GaussianState got = moments_from_points(mapped, w);

        Vector mean_ref = a * g.mean + b;
        Matrix cov_ref = a * g.cov * a.transpose();
        const double scale = std::max(1.0, cov_ref.cwiseAbs().maxCoeff());
        worst = std::max(worst, (got.mean - mean_ref).cwiseAbs().maxCoeff() /
                                    std::max(1.0, mean_ref.cwiseAbs().maxCoeff()));
        worst = std::max(worst, (got.cov - cov_ref).cwiseAbs().maxCoeff() / scale);
    }
    return {"ut_affine_exactness", worst <= 1e-10,
            "max relative error " + format_double(worst)};
}

CheckResult check_riccati() {
    SampleStream rng(7, 1);
    const int n = 6, m = 2, N = 20;
    Matrix a(n, n), b(n, m);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) a(i, j) = 0.3 * rng.normal();
    a.diagonal().array() += 0.5;
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < m; ++j) b(i, j) = rng.normal();
    Matrix q = Matrix::Identity(n, n) * 0.5;
    Matrix r = Matrix::Identity(m, m) * 2.0;
    Vector x0 = rng.normals(n);

    // Riccati recursion oracle.
    Matrix p = q;
    std::vector<Matrix> gains(N);
    for (int k = N - 1; k >= 0; --k) {
        Matrix s = r + b.transpose() * p * b;
        gains[k] = s.ldlt().solve(b.transpose() * p * a);
        p = q + a.transpose() * p * (a - b * gains[k]);
    }
    double cost_ref = 0.0;
    {
        Vector x = x0;
        for (int k = 0; k < N; ++k) {
            Vector u = -gains[k] * x;
            cost_ref += 0.5 * (x.dot(q * x) + u.dot(r * u));
            x = a * x + b * u;
        }
        cost_ref += 0.5 * x.dot(q * x);
    }

    TranscribedOCP ocp;
    ocp.state_dim = n;
    ocp.control_dim = m;
    ocp.horizon = N;
    ocp.initial_state = x0;
    ocp.dynamics = [a, b](const Vector& x, const Vector& u, int) -> Vector {
        return a * x + b * u;
    };
    ocp.stage_cost = [q, r](const Vector& x, const Vector& u, int) {
        return 0.5 * (x.dot(q * x) + u.dot(r * u));
    };
    ocp.terminal_cost = [q](const Vector& x) { return 0.5 * x.dot(q * x); };
    DdpSolver solver(std::move(ocp), SolverOptions{});
    SolverSolution sol = solver.solve(std::vector<Vector>(N, Vector::Zero(m)));

    const double rel = std::abs(sol.cost - cost_ref) / std::max(1.0, std::abs(cost_ref));
    return {"ddp_riccati_equivalence", rel <= 1e-6, "relative cost error " + format_double(rel)};
}

CheckResult check_energy() {
    LowThrustConfig cfg;
    Vector x(4);
    x.head(2) = cfg.earth_pos;
    x.tail(2) = cfg.earth_vel;
    Vector s = scale_state(x, cfg);
    auto energy = [&](const Vector& z) {
        return 0.5 * z.tail(2).squaredNorm() - cfg.gm_scaled() / z.head(2).norm();
    };
    const double e0 = energy(s);
    const Vector u = Vector::Zero(2);
    for (int k = 0; k < cfg.stages; ++k) s = rk4_step(s, u, cfg.dt_scaled(), cfg);
    const double drift = std::abs(energy(s) - e0) / std::abs(e0);
    return {"two_body_energy_conservation", drift <= 1e-8,
            "cumulative relative drift " + format_double(drift)};
}

CheckResult check_duty_arithmetic() {
    const double value = 1.0 - 3.0 * std::sqrt(2.5e-4) / 0.25;
    const bool pass = std::abs(value - 0.8103) <= 5e-5 &&
                      static_cast<int>(std::round(value * 100.0)) == 81;
    return {"duty_cycle_arithmetic", pass, "computed " + format_double(value)};
}

int cmd_validate(bool perturb_weights) {
    std::vector<CheckResult> checks;
    checks.push_back(check_ut_affine(perturb_weights ? 1e-3 : 0.0));
    checks.push_back(check_riccati());
    checks.push_back(check_energy());
    checks.push_back(check_duty_arithmetic());

    bool all = true;
    for (const auto& c : checks) {
        std::printf("%-32s %s  (%s)\n", c.name.c_str(), c.pass ? "PASS" : "FAIL",
                    c.detail.c_str());
        all = all && c.pass;
    }
    return all ? 0 : 4;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Tube stochastic DDP: nominal solves, Monte Carlo campaigns, validation"};
    app.require_subcommand(1);

    RunConfig cfg;
    std::string config_path;
    std::string mode_flag;
    double duty_flag = -1.0;
    std::int64_t seed_flag = -1;
    int samples_flag = -1;
    int threads_flag = -1;
    std::string problem_flag, out_dir_flag;
    bool saturate_flag = false;
    bool perturb_weights = false;

    auto add_common = [&](CLI::App* sub) {
        sub->add_option("--config", config_path, "JSON config file");
        sub->add_option("--problem", problem_flag, "double_integrator | low_thrust");
        sub->add_option("--mode", mode_flag, "solve: ddp|tsddp; mc: ddp_reopt|tsddp_reopt|tsddp_policy");
        sub->add_option("--duty", duty_flag, "duty-cycle factor scaling the control bound");
        sub->add_option("--seed", seed_flag, "master seed");
        sub->add_option("--samples", samples_flag, "Monte Carlo sample count");
        sub->add_option("--threads", threads_flag, "worker threads for campaigns");
        sub->add_option("--out-dir", out_dir_flag, "artifact directory");
        sub->add_flag("--saturate", saturate_flag, "clamp policy controls to the bound");
    };

    CLI::App* solve = app.add_subcommand("solve", "solve a nominal problem");
    add_common(solve);
    CLI::App* mc = app.add_subcommand("montecarlo", "run a dispersion campaign");
    add_common(mc);
    CLI::App* validate = app.add_subcommand("validate", "run the built-in oracle suite");
    validate->add_flag("--perturb-ut-weights", perturb_weights,
                       "test hook: corrupt sigma weights (suite must fail)");

    CLI11_PARSE(app, argc, argv);

    try {
        if (!config_path.empty()) parse_config_file(config_path, cfg);
        if (!problem_flag.empty()) cfg.problem = problem_flag;
        if (!mode_flag.empty()) cfg.mode = mode_flag;
        if (duty_flag >= 0.0) cfg.duty = duty_flag;
        if (seed_flag >= 0) cfg.seed = static_cast<std::uint64_t>(seed_flag);
        if (samples_flag >= 0) cfg.samples = samples_flag;
        if (threads_flag >= 0) cfg.threads = threads_flag;
        if (!out_dir_flag.empty()) cfg.out_dir = out_dir_flag;
        if (saturate_flag) cfg.saturate = true;
        if (cfg.problem != "double_integrator" && cfg.problem != "low_thrust") {
            throw ConfigError("unknown problem '" + cfg.problem + "'");
        }
        if (cfg.duty <= 0.0 || cfg.duty > 1.0) {
            throw ConfigError("duty must be in (0, 1]");
        }

        if (solve->parsed()) return cmd_solve(cfg);
        if (mc->parsed()) return cmd_montecarlo(cfg);
        if (validate->parsed()) return cmd_validate(perturb_weights);
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 1;
    } catch (const Diverged& e) {
        std::cerr << "solver diverged: " << e.what() << "\n";
        return 2;
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 0;
}
