#pragma once

#include "tdsched/mdp.hpp"
#include "tdsched/schedule.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <optional>
#include <string>

namespace tdsched {

enum class PolicyMode { OnPolicy, OffPolicy };

/// The expected-update matrices of the schedule learners:
///   A = Phi^T D (M - I) Phi,  b = Phi^T D [sum_k c_k P^k] rbar,  C = Phi^T D Phi
/// with c_k the gamma-lambda prefix products. The expected update of every
/// learner is E[delta_t z_t] = A theta + b.
struct Abc {
    Eigen::MatrixXd A;
    Eigen::VectorXd b;
    Eigen::MatrixXd C;
};

/// M = gamma(1-l1)P + gamma^2 l1(1-l2)P^2 + ... + gamma^{L+1} l1...lL P^{L+1}.
/// Satisfies ||MV||_D <= gamma ||V||_D in the stationary-weighted norm.
Eigen::MatrixXd compute_M(const Eigen::MatrixXd& P, double gamma, const LambdaSchedule& schedule);

/// Core closed form over explicit chain pieces: `d` weights the trace origin
/// (stationary distribution of the sampling process), `P`/`rbar` describe the
/// evaluated policy's transitions. For episodic environments pass the
/// restart-chain d together with the plain absorbing-transition P: that pair
/// is exactly the expectation of the episodic sampling protocol.
Abc compute_abc(const Eigen::VectorXd& d, const Eigen::MatrixXd& P, const Eigen::VectorXd& rbar,
                const FeatureMap& features, double gamma, const LambdaSchedule& schedule);

/// Bundle-level assembly. On-policy mode samples and evaluates the behavior
/// policy; off-policy mode samples the behavior policy and evaluates the
/// target (the importance ratios telescope the expectations onto the target's
/// transition matrix).
Abc compute_abc(const EnvBundle& env, const LambdaSchedule& schedule, PolicyMode mode);

struct McAbc {
    Abc mean;
    Abc se;  // entrywise standard errors (batch means)
    long steps = 0;
};

/// Monte-Carlo estimate of A, b, C from one long run of the sampling
/// protocol (episodic clearing included), with entrywise standard errors
/// computed from batch means. The independent oracle for compute_abc.
McAbc compute_abc_mc(const EnvBundle& env, const LambdaSchedule& schedule, PolicyMode mode,
                     long steps, std::uint64_t seed, int batches = 200);

/// Solves A theta = -b by a rank-revealing decomposition. Throws when the
/// condition estimate exceeds 1e12; otherwise the residual satisfies
/// ||A theta + b|| <= 1e-8 ||b||.
Eigen::VectorXd solve_fixed_point(const Eigen::MatrixXd& A, const Eigen::VectorXd& b);

struct DefinitenessCert {
    bool negative_definite = false;
    double extreme_eigenvalue = 0.0;  // largest eigenvalue of the symmetric part
};

/// True iff the largest eigenvalue of (M + M^T)/2 lies below -tol * ||M||_2.
DefinitenessCert check_negative_definite(const Eigen::MatrixXd& m, double tol = 1e-10);

struct HurwitzCert {
    bool stable = false;
    double max_real_part = 0.0;
};

/// True iff every eigenvalue of M has real part below -tol * ||M||_2.
HurwitzCert check_hurwitz(const Eigen::MatrixXd& m, double tol = 1e-10);

/// The GTD block matrix G = [[-sqrt(eta) C, A], [-A^T, 0]] together with its
/// stability certificate and the fixed point (w*, theta*) = (0, -A^-1 b)
/// obtained from the block solve (left empty when G is singular). The
/// symmetric part of G always has a zero eigenvalue on the theta block, so
/// the negative-definiteness certificate is the real-part (Hurwitz) one; the
/// raw symmetric-part extreme eigenvalue is reported alongside.
struct GtdBlockReport {
    Eigen::MatrixXd G;
    double max_sym_eig = 0.0;
    double max_real_eig = 0.0;
    bool negative_definite = false;
    Eigen::VectorXd w_star;
    Eigen::VectorXd theta_star;
};

GtdBlockReport gtd_block_matrix(const Abc& abc, double eta);

/// sqrt( sum_s d(s) (v_true(s) - theta.phi(s))^2 ).
double rmse(const Eigen::VectorXd& theta, const FeatureMap& features,
            const Eigen::VectorXd& v_true, const Eigen::VectorXd& d);

/// sqrt( (A theta + b)^T C^+ (A theta + b) ), solved rank-revealing so that
/// feature sets with d > n (rank-deficient C) still evaluate; throws when the
/// residual leaves the range of C.
double rmspbe(const Eigen::VectorXd& theta, const Abc& abc);

/// Assembled certificates for one environment/schedule/mode instance.
struct FixedPointReport {
    Abc abc;
    std::optional<Eigen::VectorXd> theta_star;  // empty when A is singular
    double max_sym_eig_A = 0.0;
    bool A_negative_definite = false;
    double min_eig_C = 0.0;
    bool C_positive_definite = false;
    double rmse_at_zero = 0.0;
    double rmspbe_at_zero = 0.0;
};

FixedPointReport fixed_point_report(const EnvBundle& env, const LambdaSchedule& schedule,
                                    PolicyMode mode);

/// Stationary weights of the sampling policy (restart-augmented chain when
/// the environment has absorbing states). Also the weighting used by the
/// RMSE metric: it coincides with d^pi on-policy and stays well defined for
/// target policies whose own chain is not ergodic.
Eigen::VectorXd sampling_weights(const EnvBundle& env);

/// True values of the evaluated policy for a mode (plain induced structure).
Eigen::VectorXd evaluated_values(const EnvBundle& env, PolicyMode mode);

}  // namespace tdsched
