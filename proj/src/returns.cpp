#include "tdsched/returns.hpp"

#include <cmath>
#include <stdexcept>

namespace tdsched {

namespace {

// Value of the i-th trajectory state; a terminal final state has value 0.
double state_value(const Trajectory& traj, int i, const Eigen::VectorXd& theta) {
    if (traj.terminated && i == static_cast<int>(traj.feats.size()) - 1) return 0.0;
    return theta.dot(traj.feats[static_cast<std::size_t>(i)]);
}

double step_td_error(const Trajectory& traj, int u, const Eigen::VectorXd& theta, double gamma) {
    return traj.rewards[static_cast<std::size_t>(u)] + gamma * state_value(traj, u + 1, theta) -
           state_value(traj, u, theta);
}

double schedule_return_rec(const Trajectory& traj, int t, int offset,
                           const Eigen::VectorXd& theta, const LambdaSchedule& schedule,
                           double gamma) {
    const double reward = traj.rewards[static_cast<std::size_t>(t)];
    const bool last = t == traj.transitions() - 1;
    if (last && traj.terminated) return reward;
    const double v_next = state_value(traj, t + 1, theta);
    const double lam = schedule.value(offset);
    if (lam == 0.0 || last) return reward + gamma * v_next;
    return reward + gamma * ((1.0 - lam) * v_next +
                             lam * schedule_return_rec(traj, t + 1, offset + 1, theta, schedule, gamma));
}

void check_time(const Trajectory& traj, int t) {
    if (t < 0 || t >= traj.transitions()) throw std::out_of_range("trajectory time index");
}

}  // namespace

void Trajectory::validate() const {
    if (feats.size() != rewards.size() + 1)
        throw std::invalid_argument("trajectory needs one more state than transitions");
    if (!rhos.empty() && rhos.size() != rewards.size())
        throw std::invalid_argument("trajectory rho count does not match transitions");
    for (double rho : rhos)
        if (!(rho >= 0.0) || !std::isfinite(rho))
            throw std::invalid_argument("importance ratios must be finite and nonnegative");
}

double td_error(const Eigen::VectorXd& theta, const Eigen::VectorXd& phi_t,
                const Eigen::VectorXd& phi_next, double reward, double gamma) {
    return reward + gamma * theta.dot(phi_next) - theta.dot(phi_t);
}

double lambda_schedule_return(const Trajectory& traj, int t, const Eigen::VectorXd& theta,
                              const LambdaSchedule& schedule, double gamma) {
    check_time(traj, t);
    return schedule_return_rec(traj, t, 1, theta, schedule, gamma);
}

double telescoped_return_gap(const Trajectory& traj, int t, const Eigen::VectorXd& theta,
                             const LambdaSchedule& schedule, double gamma) {
    check_time(traj, t);
    double coef = 1.0;
    double sum = 0.0;
    for (int k = 0; t + k < traj.transitions(); ++k) {
        sum += coef * step_td_error(traj, t + k, theta, gamma);
        coef *= gamma * schedule.value(k + 1);
        if (coef == 0.0) break;
    }
    return sum;
}

double off_policy_return_gap(const Trajectory& traj, int t, const Eigen::VectorXd& theta,
                             const LambdaSchedule& schedule, double gamma) {
    check_time(traj, t);
    if (!traj.has_rhos()) throw std::invalid_argument("off-policy gap needs importance ratios");
    double coef = traj.rhos[static_cast<std::size_t>(t)];
    double sum = 0.0;
    for (int k = 0; t + k < traj.transitions(); ++k) {
        sum += coef * step_td_error(traj, t + k, theta, gamma);
        if (t + k + 1 >= traj.transitions()) break;
        coef *= gamma * schedule.value(k + 1) * traj.rhos[static_cast<std::size_t>(t + k + 1)];
        if (coef == 0.0) break;
    }
    return sum;
}

namespace {

double rho_return_rec(const Trajectory& traj, int t, int offset, const Eigen::VectorXd& theta,
                      const LambdaSchedule& schedule, double gamma) {
    const double rho = traj.rhos[static_cast<std::size_t>(t)];
    const double reward = traj.rewards[static_cast<std::size_t>(t)];
    const bool last = t == traj.transitions() - 1;
    if (last && traj.terminated) return rho * reward;
    const double v_next = state_value(traj, t + 1, theta);
    const double lam = schedule.value(offset);
    if (lam == 0.0 || last) return rho * (reward + gamma * v_next);
    return rho * (reward + gamma * ((1.0 - lam) * v_next +
                                    lam * rho_return_rec(traj, t + 1, offset + 1, theta, schedule, gamma)));
}

}  // namespace

double rho_scaled_return(const Trajectory& traj, int t, const Eigen::VectorXd& theta,
                         const LambdaSchedule& schedule, double gamma) {
    check_time(traj, t);
    if (!traj.has_rhos()) throw std::invalid_argument("rho-scaled return needs importance ratios");
    return rho_return_rec(traj, t, 1, theta, schedule, gamma);
}

}  // namespace tdsched
