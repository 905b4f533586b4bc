#pragma once

#include "tdsched/mdp.hpp"
#include "tdsched/schedule.hpp"

#include <Eigen/Dense>

#include <functional>
#include <string>
#include <vector>

namespace tdsched {

enum class TraceMode { OnPolicy, OffPolicy };

/// Ring of the last L+1 feature vectors (and importance ratios) from which
/// the eligibility trace is rebuilt each step. The trace has no recursion in
/// terms of its previous value, so the raw window is the state.
class TraceBuffer {
public:
    TraceBuffer(int truncation, int dim);

    void push(const Eigen::VectorXd& phi, double rho = 1.0);
    void clear();

    int size() const { return size_; }
    int capacity() const { return static_cast<int>(ring_.size()); }
    int dim() const { return dim_; }

    /// Entry `lag` steps back; lag 0 is the newest.
    const Eigen::VectorXd& phi(int lag) const;
    double rho(int lag) const;

private:
    std::vector<Eigen::VectorXd> ring_;
    std::vector<double> rhos_;
    int dim_;
    int head_ = -1;
    int size_ = 0;
};

/// z_t rebuilt from the buffer:
///   on-policy   z = sum_k (prod_{j<=k} gamma l_j) phi_{t-k}
///   off-policy  z = sum_k rho_t (prod_{j<=k} rho_{t-j} gamma l_j) phi_{t-k}
/// Lags past the fill count contribute nothing.
Eigen::VectorXd compute_trace(const TraceBuffer& buffer, const LambdaSchedule& schedule,
                              double gamma, TraceMode mode);

struct StepSize {
    enum class Kind { Constant, Harmonic };
    Kind kind = Kind::Constant;
    double a = 0.0;
    double b = 0.0;

    double at(long t) const {
        return kind == Kind::Constant ? a : a / (static_cast<double>(t) + b);
    }

    static StepSize constant(double value);
    static StepSize harmonic(double a, double b);
    /// Accepts "const(x)" or "harmonic(a,b)".
    static StepSize parse(const std::string& spec);
    std::string format() const;
};

struct LearnerState {
    Eigen::VectorXd theta;
    Eigen::VectorXd w;  // auxiliary vector of the gradient learners
    long t = 0;
    StepSize alpha;
    StepSize beta;
};

struct Transition {
    const Eigen::VectorXd& phi_t;
    const Eigen::VectorXd& phi_next;
    double reward;
};

/// theta += alpha_t delta_t z_t with the on-policy trace.
void td_schedule_step(LearnerState& state, const TraceBuffer& buffer, const Transition& tr,
                      const LambdaSchedule& schedule, double gamma);

/// Same update with the rho-weighted trace; rho_t must equal the ratio pushed
/// with the newest buffer entry.
void off_policy_td_step(LearnerState& state, const TraceBuffer& buffer, const Transition& tr,
                        double rho_t, const LambdaSchedule& schedule, double gamma);

/// Two-timescale gradient update, both vectors advanced from the pre-update
/// snapshot:
///   theta += alpha (phi_t - gamma phi_{t+1}) (z^T w)
///   w     += beta  (delta z - (phi_t^T w) phi_t)
void gtd_step(LearnerState& state, const TraceBuffer& buffer, const Transition& tr, double rho_t,
              const LambdaSchedule& schedule, double gamma);

/// TDC variant:
///   theta += alpha delta z - alpha ((gamma phi_{t+1} - phi_t)(z^T w) + (phi_t^T w) phi_t)
///   w     += beta  (delta z - (phi_t^T w) phi_t)
void tdc_step(LearnerState& state, const TraceBuffer& buffer, const Transition& tr, double rho_t,
              const LambdaSchedule& schedule, double gamma);

enum class LearnerKind { TdSchedule, OffPolicyTdSchedule, GtdSchedule, TdcSchedule };

LearnerKind parse_learner(const std::string& name);
std::string learner_name(LearnerKind kind);
bool is_off_policy(LearnerKind kind);

struct RunOptions {
    LearnerKind kind = LearnerKind::TdSchedule;
    LambdaSchedule schedule;
    StepSize alpha;
    StepSize beta;
    long steps = 0;
    std::uint64_t seed = 0;
    long eval_every = 50;
    long episode_cap = 0;  // 0 = only absorption ends an episode
    double divergence_norm = 1e8;
    Eigen::VectorXd theta0;  // empty: use the bundle default
    Eigen::VectorXd w0;      // empty: zeros
};

struct RunSeries {
    std::vector<long> eval_steps;
    std::vector<std::vector<double>> values;  // one metric vector per eval point
    Eigen::VectorXd final_theta;
    bool diverged = false;
};

using EvalFn = std::function<std::vector<double>(const Eigen::VectorXd& theta)>;

/// Drives the sample loop: sample_step -> buffer push -> learner step, with
/// the trace buffer cleared at episode boundaries (absorption or the episode
/// cap) and restarts drawn from the bundle's start distribution. Metrics are
/// recorded at step 0 and every eval_every steps; a non-finite or oversized
/// parameter vector stops the run with the diverged flag instead of aborting.
RunSeries run(const EnvBundle& env, const RunOptions& opt, const EvalFn& eval);

}  // namespace tdsched
