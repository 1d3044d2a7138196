#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "tsddp/policy.hpp"
#include "tsddp/problems.hpp"

namespace tsddp {

/// Counter-based child stream keyed by (master seed, sample index): a SplitMix64
/// walk whose draws depend only on the key, so parallel and serial campaigns
/// produce identical results. Normal draws are Box-Muller from two uniforms.
class SampleStream {
public:
    SampleStream(std::uint64_t master_seed, std::uint64_t sample_index);

    std::uint64_t next_u64();
    double uniform();  // (0, 1]
    double normal();
    Vector normals(int n);

private:
    std::uint64_t state_;
};

enum class McMode { DdpReopt, TsddpReopt, TsddpPolicy };

std::string to_string(McMode mode);
McMode mc_mode_from_string(const std::string& name);

struct MCConfig {
    int samples = 500;
    std::uint64_t master_seed = 0;
    McMode mode = McMode::TsddpPolicy;
    double duty = 1.0;
    bool saturate = false;
    int threads = 1;
    SolverOptions solver;  // used by the re-optimizing modes
};

struct SampleRecord {
    Matrix states;    // nx x (N+1)
    Matrix controls;  // nu x N
    double delta_v = 0.0;
    double terminal_penalty = 0.0;
    double total = 0.0;
    double terminal_difference = 0.0;
    bool failed = false;
    std::vector<int> violations;  // stages where ||u|| exceeded the bound
};

struct CdfTable {
    std::vector<double> values;         // ascending
    std::vector<double> probabilities;  // i/n, right-continuous steps
};

struct SummaryStats {
    double median = 0.0;
    double p5 = 0.0;
    double p95 = 0.0;
};

struct ViolationStats {
    double aggregate = 0.0;          // fraction over all (sample, stage) pairs
    std::vector<double> per_stage;   // fraction per stage
};

struct MCResult {
    std::vector<SampleRecord> samples;
    SampleRecord nominal;  // zero-noise rollout of the same control law
    CdfTable cdf_total, cdf_terminal, cdf_delta_v;
    SummaryStats total_stats, terminal_stats, delta_v_stats;
    ViolationStats violations;
    int failed_samples = 0;

    bool ok() const {
        return failed_samples <= static_cast<int>(0.01 * samples.size());
    }
};

/// Precomputed nominal artifacts a campaign starts from; only the member the
/// mode uses needs to be filled.
struct CampaignInputs {
    std::vector<Vector> nominal_controls;          // DdpReopt warm start
    std::vector<Vector> nominal_stacked_controls;  // TsddpReopt warm start
    std::vector<AffineStagePolicy> policies;       // TsddpPolicy law
};

/// Seeded dispersion campaign. Per-sample streams are keyed by (master_seed,
/// sample index) and samples are reduced by index, so the thread count never
/// changes the result.
MCResult run_campaign(const BenchmarkProblem& bench, const MCConfig& cfg,
                      const CampaignInputs& inputs);

/// Right-continuous empirical CDF: probability (i+1)/n at the i-th sorted value.
CdfTable empirical_cdf(const std::vector<double>& values);

/// Fractions of completed (sample, stage) control realizations with ||u|| > bound.
ViolationStats violation_stats(const MCResult& result, double bound);

/// Linear-interpolation quantile of a sample (q in [0,1]).
double quantile(std::vector<double> values, double q);

// Nominal solves shared by campaigns, the CLI, and the acceptance suite.
SolverSolution solve_nominal_ddp(const BenchmarkProblem& bench, double duty,
                                 const SolverOptions& opts);
SolverSolution solve_nominal_tsddp(const BenchmarkProblem& bench, const SolverOptions& opts,
                                   const SolverSolution* ddp_warm = nullptr);
std::vector<AffineStagePolicy> fit_policies(const BenchmarkProblem& bench,
                                            const SolverSolution& tsddp_sol);

// Campaign artifacts. Every file opens with a '# {json}' line echoing the
// resolved configuration, then a CSV header row. States and controls are
// written in report units (bench.report_state / report_control).
void write_trajectories_csv(const MCResult& result, const BenchmarkProblem& bench,
                            const std::string& path, const std::string& config_echo);
void write_cdf_csv(const CdfTable& cdf, const std::string& path,
                   const std::string& config_echo);
std::string campaign_summary_json(const MCResult& result, const std::string& config_echo);

/// trajectories.csv, cdf_total.csv, cdf_terminal.csv, cdf_deltav.csv,
/// summary.json under out_dir.
void write_campaign_artifacts(const MCResult& result, const BenchmarkProblem& bench,
                              const std::string& out_dir, const std::string& config_echo);

std::string format_double(double v);  // round-trip exact, deterministic

}  // namespace tsddp
