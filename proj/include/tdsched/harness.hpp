#pragma once

#include "tdsched/analysis.hpp"
#include "tdsched/learners.hpp"
#include "tdsched/mdp.hpp"
#include "tdsched/schedule.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace tdsched {

/// Flat key = value experiment description. `schedule`, `alpha` and `beta`
/// reuse the schedule/step-size spec grammars; `eta` derives beta from alpha
/// when beta is absent.
struct ExperimentConfig {
    std::string env = "random_chain";
    std::uint64_t env_seed = 0;
    std::string learner = "td_schedule";
    std::string schedule = "[0]";
    std::string alpha = "const(0.01)";
    std::string beta;
    double eta = 0.0;
    long steps = 0;
    int runs = 1;
    std::uint64_t seed = 0;
    long eval_every = 50;
    std::vector<std::string> metrics = {"rmse"};
    std::string out;
    long episode_cap = 0;
    std::string init;  // empty = environment default

    static ExperimentConfig load(const std::string& path);
    void validate() const;
};

struct RunResult {
    std::vector<std::string> metric_names;
    std::vector<long> eval_steps;  // full grid: 0, eval_every, ...
    // per_run[r][i][m]; a diverged run's series is truncated.
    std::vector<std::vector<std::vector<double>>> per_run;
    std::vector<bool> diverged;
    std::vector<Eigen::VectorXd> final_thetas;

    /// Mean and standard error over the runs that still have data at each
    /// eval point.
    void aggregate(std::vector<std::vector<double>>& mean,
                   std::vector<std::vector<double>>& se) const;
};

/// Executes `runs` independent learner runs with seeds seed+0..seed+runs-1,
/// evaluating the configured metrics against the exact analysis quantities.
/// Run-level parallelism is capped by the TDSCHEDULE_THREADS environment
/// variable (unset or 0 = serial); results are identical either way.
RunResult run_experiment(const ExperimentConfig& config);

/// Writes <path>.runs.csv (step,run,<metrics>) and <path>.agg.csv
/// (step,mean_<m>,se_<m>) in full double precision.
void emit_csv(const RunResult& result, const std::string& path);

/// The tdsched command line: run, solve, check, gen. Returns the process
/// exit status.
int cli_main(int argc, const char* const* argv);

}  // namespace tdsched
