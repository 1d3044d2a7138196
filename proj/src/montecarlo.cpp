#include "tsddp/montecarlo.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <future>
#include <numeric>

#include <json.hpp>

namespace tsddp {

namespace {

std::uint64_t splitmix_mix(std::uint64_t z) {
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

constexpr std::uint64_t kGamma = 0x9E3779B97F4A7C15ULL;

}  // namespace

SampleStream::SampleStream(std::uint64_t master_seed, std::uint64_t sample_index)
    : state_(splitmix_mix(master_seed + kGamma * (sample_index + 1))) {}

std::uint64_t SampleStream::next_u64() {
    state_ += kGamma;
    return splitmix_mix(state_);
}

double SampleStream::uniform() {
    return (static_cast<double>(next_u64() >> 11) + 1.0) * 0x1.0p-53;
}

double SampleStream::normal() {
    const double u1 = uniform();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
}

Vector SampleStream::normals(int n) {
    Vector z(n);
    for (int i = 0; i < n; ++i) z(i) = normal();
    return z;
}

std::string to_string(McMode mode) {
    switch (mode) {
        case McMode::DdpReopt: return "ddp_reopt";
        case McMode::TsddpReopt: return "tsddp_reopt";
        case McMode::TsddpPolicy: return "tsddp_policy";
    }
    return "unknown";
}

McMode mc_mode_from_string(const std::string& name) {
    if (name == "ddp_reopt") return McMode::DdpReopt;
    if (name == "tsddp_reopt") return McMode::TsddpReopt;
    if (name == "tsddp_policy") return McMode::TsddpPolicy;
    throw ConfigError("unknown Monte Carlo mode: " + name);
}

namespace {

// Trims the leading control/multipliers off the previous remaining-horizon
// solution so it warm-starts the next one.
WarmStart shifted_warm_start(const SolverSolution& prev) {
    WarmStart ws;
    ws.controls.assign(prev.controls.begin() + 1, prev.controls.end());
    if (!prev.al.multipliers.empty()) {
        ws.al.multipliers.assign(prev.al.multipliers.begin() + 1, prev.al.multipliers.end());
    }
    ws.al.penalty = prev.al.penalty;
    return ws;
}

SampleRecord run_sample(const BenchmarkProblem& bench, const MCConfig& cfg,
                        const CampaignInputs& inputs, int sample_index, bool zero_noise) {
    const StochasticProblem& prob = bench.stochastic;
    const int N = prob.horizon;
    SampleStream rng(cfg.master_seed, static_cast<std::uint64_t>(sample_index));

    SampleRecord rec;
    rec.states.resize(prob.nx, N + 1);
    rec.controls.resize(prob.nu, N);

    const Matrix sqrt_p0 = psd_sqrt(prob.init.cov);
    Vector x = prob.init.mean;
    if (!zero_noise) x += sqrt_p0 * rng.normals(prob.nx);
    rec.states.col(0) = x;

    std::vector<AffineStagePolicy> policies;
    if (cfg.mode == McMode::TsddpPolicy) {
        policies = inputs.policies;
        for (auto& p : policies) {
            p.saturation = cfg.saturate ? bench.control_bound() : 0.0;
        }
    }

    SolverSolution prev_solution;
    bool have_prev = false;
    const double bound = bench.control_bound();

    try {
        for (int k = 0; k < N; ++k) {
            Vector u;
            switch (cfg.mode) {
                case McMode::TsddpPolicy:
                    u = eval_policy(policies[k], x);
                    break;
                case McMode::DdpReopt: {
                    TranscribedOCP ocp = bench.deterministic_ocp(x, k, cfg.duty, true, 0.0);
                    DdpSolver solver(std::move(ocp), cfg.solver);
                    WarmStart ws;
                    if (have_prev) {
                        ws = shifted_warm_start(prev_solution);
                    } else {
                        ws.controls = inputs.nominal_controls;
                        ws.al = AlState{};
                    }
                    prev_solution = solver.solve(ws);
                    have_prev = true;
                    u = prev_solution.controls[0];
                    break;
                }
                case McMode::TsddpReopt: {
                    StochasticProblem rest = bench.remaining_stochastic(x, k);
                    TranscribedOCP ocp = transcribe(rest, cfg.duty);
                    DdpSolver solver(std::move(ocp), cfg.solver);
                    WarmStart ws;
                    if (have_prev) {
                        ws = shifted_warm_start(prev_solution);
                    } else {
                        ws.controls = inputs.nominal_stacked_controls;
                        ws.al = AlState{};
                    }
                    prev_solution = solver.solve(ws);
                    have_prev = true;
                    u = unflatten_control(prev_solution.controls[0], rest).controls.col(0);
                    break;
                }
            }
            rec.controls.col(k) = u;
            rec.delta_v += bench.delta_v(u);
            if (u.norm() > bound) rec.violations.push_back(k);

            Vector w = Vector::Zero(prob.nw);
            if (!zero_noise) {
                w = psd_sqrt(prob.noise_cov(k)) * rng.normals(prob.nw);
            }
            x = prob.dynamics(x, u, w, k);
            rec.states.col(k + 1) = x;
        }
        rec.terminal_penalty = bench.terminal_penalty(x);
        rec.total = rec.delta_v + rec.terminal_penalty;
        rec.terminal_difference = bench.terminal_difference(x);
    } catch (const Error&) {
        rec.failed = true;
    }
    return rec;
}

SummaryStats stats_of(const std::vector<double>& values) {
    SummaryStats s;
    if (values.empty()) return s;
    s.median = quantile(values, 0.5);
    s.p5 = quantile(values, 0.05);
    s.p95 = quantile(values, 0.95);
    return s;
}

}  // namespace

double quantile(std::vector<double> values, double q) {
    if (values.empty()) throw EmptyInput("quantile: empty sample");
    std::sort(values.begin(), values.end());
    const double pos = q * (values.size() - 1);
    const std::size_t lo = static_cast<std::size_t>(std::floor(pos));
    const std::size_t hi = static_cast<std::size_t>(std::ceil(pos));
    const double frac = pos - lo;
    return (1.0 - frac) * values[lo] + frac * values[hi];
}

CdfTable empirical_cdf(const std::vector<double>& values) {
    if (values.empty()) throw EmptyInput("empirical_cdf: empty sample");
    CdfTable cdf;
    cdf.values = values;
    std::sort(cdf.values.begin(), cdf.values.end());
    cdf.probabilities.resize(values.size());
    for (std::size_t i = 0; i < values.size(); ++i) {
        cdf.probabilities[i] = static_cast<double>(i + 1) / values.size();
    }
    return cdf;
}

ViolationStats violation_stats(const MCResult& result, double bound) {
    ViolationStats vs;
    int stages = 0;
    for (const auto& rec : result.samples) {
        if (!rec.failed) {
            stages = static_cast<int>(rec.controls.cols());
            break;
        }
    }
    vs.per_stage.assign(stages, 0.0);
    long total = 0, hits = 0;
    for (const auto& rec : result.samples) {
        if (rec.failed) continue;
        for (int k = 0; k < stages; ++k) {
            ++total;
            if (rec.controls.col(k).norm() > bound) {
                ++hits;
                vs.per_stage[k] += 1.0;
            }
        }
    }
    long completed = total / std::max(stages, 1);
    for (auto& f : vs.per_stage) f /= std::max<long>(completed, 1);
    vs.aggregate = total > 0 ? static_cast<double>(hits) / total : 0.0;
    return vs;
}

MCResult run_campaign(const BenchmarkProblem& bench, const MCConfig& cfg,
                      const CampaignInputs& inputs) {
    MCResult result;
    result.samples.resize(cfg.samples);

    const int threads = std::max(1, cfg.threads);
    if (threads == 1) {
        for (int s = 0; s < cfg.samples; ++s) {
            result.samples[s] = run_sample(bench, cfg, inputs, s, false);
        }
    } else {
        std::vector<std::future<void>> workers;
        workers.reserve(threads);
        for (int t = 0; t < threads; ++t) {
            workers.push_back(std::async(std::launch::async, [&, t]() {
                for (int s = t; s < cfg.samples; s += threads) {
                    result.samples[s] = run_sample(bench, cfg, inputs, s, false);
                }
            }));
        }
        for (auto& w : workers) w.get();
    }
    result.nominal = run_sample(bench, cfg, inputs, 0, true);

    std::vector<double> totals, terminals, dvs;
    for (const auto& rec : result.samples) {
        if (rec.failed) {
            ++result.failed_samples;
            continue;
        }
        totals.push_back(rec.total);
        terminals.push_back(rec.terminal_difference);
        dvs.push_back(rec.delta_v);
    }
    if (!totals.empty()) {
        result.cdf_total = empirical_cdf(totals);
        result.cdf_terminal = empirical_cdf(terminals);
        result.cdf_delta_v = empirical_cdf(dvs);
        result.total_stats = stats_of(totals);
        result.terminal_stats = stats_of(terminals);
        result.delta_v_stats = stats_of(dvs);
    }
    result.violations = violation_stats(result, bench.control_bound());
    return result;
}

namespace {

std::vector<double> schedule_of(const BenchmarkProblem& bench) {
    if (bench.smoothing_schedule.empty()) return {0.0};
    return bench.smoothing_schedule;
}

}  // namespace

SolverSolution solve_nominal_ddp(const BenchmarkProblem& bench, double duty,
                                 const SolverOptions& opts) {
    WarmStart warm;
    warm.controls.assign(bench.horizon(), Vector::Zero(bench.stochastic.nu));
    SolverSolution sol;
    for (double eps : schedule_of(bench)) {
        TranscribedOCP ocp =
            bench.deterministic_ocp(bench.stochastic.init.mean, 0, duty, false, eps);
        DdpSolver solver(std::move(ocp), opts);
        sol = solver.solve(warm);
        warm.controls = sol.controls;
        warm.al = sol.al;
    }
    return sol;
}

SolverSolution solve_nominal_tsddp(const BenchmarkProblem& bench, const SolverOptions& opts,
                                   const SolverSolution* ddp_warm) {
    SolverSolution ddp;
    if (ddp_warm == nullptr) {
        ddp = solve_nominal_ddp(bench, 1.0, opts);
        ddp_warm = &ddp;
    }
    const StochasticProblem& prob = bench.stochastic;

    // Deterministic nominal replicated across all sigma-control columns.
    WarmStart warm;
    warm.controls.resize(prob.horizon);
    for (int k = 0; k < prob.horizon; ++k) {
        StackedControl u;
        u.controls = ddp_warm->controls[k].replicate(1, prob.sigma_count());
        warm.controls[k] = flatten_control(u);
    }

    SolverSolution sol;
    for (double eps : schedule_of(bench)) {
        TranscribedOCP ocp = transcribe(bench.stochastic_smoothed(eps), 1.0);
        DdpSolver solver(std::move(ocp), opts);
        sol = solver.solve(warm);
        warm.controls = sol.controls;
        warm.al = sol.al;
    }
    return sol;
}

std::vector<AffineStagePolicy> fit_policies(const BenchmarkProblem& bench,
                                            const SolverSolution& tsddp_sol) {
    const StochasticProblem& prob = bench.stochastic;
    std::vector<AffineStagePolicy> policies(prob.horizon);
    for (int k = 0; k < prob.horizon; ++k) {
        policies[k] = fit_policy(unflatten_state(tsddp_sol.states[k], prob),
                                 unflatten_control(tsddp_sol.controls[k], prob));
    }
    return policies;
}

std::string format_double(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

void write_trajectories_csv(const MCResult& result, const BenchmarkProblem& bench,
                            const std::string& path, const std::string& config_echo) {
    std::ofstream out(path);
    out << "# " << config_echo << "\n";
    const int nx = static_cast<int>(result.nominal.states.rows());
    const int nu = static_cast<int>(result.nominal.controls.rows());
    out << "sample,stage";
    for (int i = 0; i < nx; ++i) out << ",x" << i;
    for (int i = 0; i < nu; ++i) out << ",u" << i;
    out << ",violation\n";
    for (std::size_t s = 0; s < result.samples.size(); ++s) {
        const SampleRecord& rec = result.samples[s];
        if (rec.failed) continue;
        const int stages = static_cast<int>(rec.controls.cols());
        for (int k = 0; k <= stages; ++k) {
            out << s << "," << k;
            const Vector x = bench.report_state(rec.states.col(k));
            for (int i = 0; i < nx; ++i) out << "," << format_double(x(i));
            if (k < stages) {
                const Vector u = bench.report_control(rec.controls.col(k));
                for (int i = 0; i < nu; ++i) out << "," << format_double(u(i));
                const bool hit =
                    std::find(rec.violations.begin(), rec.violations.end(), k) !=
                    rec.violations.end();
                out << "," << (hit ? 1 : 0);
            } else {
                for (int i = 0; i < nu; ++i) out << ",";
                out << ",";
            }
            out << "\n";
        }
    }
}

void write_cdf_csv(const CdfTable& cdf, const std::string& path,
                   const std::string& config_echo) {
    std::ofstream out(path);
    out << "# " << config_echo << "\n";
    out << "value,probability\n";
    for (std::size_t i = 0; i < cdf.values.size(); ++i) {
        out << format_double(cdf.values[i]) << "," << format_double(cdf.probabilities[i])
            << "\n";
    }
}

std::string campaign_summary_json(const MCResult& result, const std::string& config_echo) {
    nlohmann::json j;
    j["config"] = nlohmann::json::parse(config_echo);
    j["samples"] = result.samples.size();
    j["failed_samples"] = result.failed_samples;
    auto stats = [](const SummaryStats& s) {
        return nlohmann::json{{"median", s.median}, {"p5", s.p5}, {"p95", s.p95}};
    };
    j["total"] = stats(result.total_stats);
    j["terminal_difference"] = stats(result.terminal_stats);
    j["delta_v"] = stats(result.delta_v_stats);
    j["violation_fraction"] = result.violations.aggregate;
    j["violation_per_stage"] = result.violations.per_stage;
    j["nominal"] = {{"delta_v", result.nominal.delta_v},
                    {"terminal_penalty", result.nominal.terminal_penalty},
                    {"total", result.nominal.total},
                    {"terminal_difference", result.nominal.terminal_difference}};
    return j.dump(2);
}

void write_campaign_artifacts(const MCResult& result, const BenchmarkProblem& bench,
                              const std::string& out_dir, const std::string& config_echo) {
    write_trajectories_csv(result, bench, out_dir + "/trajectories.csv", config_echo);
    write_cdf_csv(result.cdf_total, out_dir + "/cdf_total.csv", config_echo);
    write_cdf_csv(result.cdf_terminal, out_dir + "/cdf_terminal.csv", config_echo);
    write_cdf_csv(result.cdf_delta_v, out_dir + "/cdf_deltav.csv", config_echo);
    std::ofstream summary(out_dir + "/summary.json");
    summary << campaign_summary_json(result, config_echo) << "\n";
}

}  // namespace tsddp
