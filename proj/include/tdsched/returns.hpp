#pragma once

#include "tdsched/schedule.hpp"

#include <Eigen/Dense>

#include <vector>

namespace tdsched {

/// A recorded trajectory in feature space: T transitions give T+1 feature
/// vectors, T rewards and (off-policy) T importance ratios. When `terminated`
/// is set, the final state is terminal and its value is taken as 0.
struct Trajectory {
    std::vector<Eigen::VectorXd> feats;
    std::vector<double> rewards;
    std::vector<double> rhos;  // empty on-policy
    bool terminated = false;

    int transitions() const { return static_cast<int>(rewards.size()); }
    bool has_rhos() const { return !rhos.empty(); }
    void validate() const;
};

/// delta = R + gamma theta.phi_next - theta.phi_t. Pass a zero phi_next for
/// an absorbing successor.
double td_error(const Eigen::VectorXd& theta, const Eigen::VectorXd& phi_t,
                const Eigen::VectorXd& phi_next, double reward, double gamma);

/// The lambda-schedule return at time t, by the recursion
///   G_t = R_{t+1} + gamma [ (1-l_a) V(s_{t+1}) + l_a G_{t+1} ]
/// where l_a walks down the schedule and the empty tail gives the one-step
/// bootstrapped return. Termination inside the window truncates the
/// recursion with terminal value 0.
double lambda_schedule_return(const Trajectory& traj, int t, const Eigen::VectorXd& theta,
                              const LambdaSchedule& schedule, double gamma);

/// sum_k (prod_{j<=k} gamma l_j) delta_{t+k}. Equals
/// lambda_schedule_return(t) - V(s_t) for every trajectory and schedule.
double telescoped_return_gap(const Trajectory& traj, int t, const Eigen::VectorXd& theta,
                             const LambdaSchedule& schedule, double gamma);

/// Per-decision importance-sampled gap:
///   rho_t delta_t + gamma l_1 rho_t rho_{t+1} delta_{t+1} + ...
double off_policy_return_gap(const Trajectory& traj, int t, const Eigen::VectorXd& theta,
                             const LambdaSchedule& schedule, double gamma);

/// The rho-scaled return G^rho_t = rho_t (R + gamma[(1-l_1)V(s_{t+1}) +
/// l_1 G^rho_{t+1}]), whose expected gap against V(s_t) matches the
/// importance-sampled gap and the trace form E[delta_t z_t].
double rho_scaled_return(const Trajectory& traj, int t, const Eigen::VectorXd& theta,
                         const LambdaSchedule& schedule, double gamma);

}  // namespace tdsched
