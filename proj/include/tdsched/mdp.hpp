#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <string>
#include <vector>

namespace tdsched {

/// Deterministic, platform-independent random stream (splitmix64 core).
/// Every sampling routine takes one of these explicitly, so replaying a seed
/// reproduces a trajectory bit for bit.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : state_(seed) {}

    std::uint64_t next_u64() {
        std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    /// Uniform double in [0,1) with 53 random bits.
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    /// Uniform double in [a,b).
    double uniform(double a, double b) { return a + (b - a) * uniform(); }

    /// Index drawn from a probability vector by CDF inversion.
    int categorical(const Eigen::VectorXd& probs);

private:
    std::uint64_t state_;
};

/// Finite MDP: transition tensor P[a](s,s'), reward table r(s,s'), discount,
/// and an optional set of absorbing states (self-loops with zero reward).
struct FiniteMdp {
    int n = 0;
    int actions = 0;
    std::vector<Eigen::MatrixXd> P;  // one n x n row-stochastic matrix per action
    Eigen::MatrixXd r;               // r(s, s')
    double gamma = 0.0;
    std::vector<int> absorbing;

    bool is_absorbing(int s) const;
    void validate() const;
};

struct Policy {
    Eigen::MatrixXd probs;  // n x actions, rows sum to 1

    void validate(int n, int actions) const;
};

/// Feature matrix Phi (n x d), row s = phi(s)^T. Must have full rank
/// (rank == min(n, d)), checked with an SVD at tolerance 1e-10 * sigma_max.
struct FeatureMap {
    Eigen::MatrixXd phi;

    int dim() const { return static_cast<int>(phi.cols()); }
    Eigen::VectorXd row(int s) const { return phi.row(s).transpose(); }
    int rank() const;
    void validate() const;
};

/// Policy-induced chain quantities: transition matrix, expected one-step
/// reward, and the unique stationary distribution.
struct InducedChain {
    Eigen::MatrixXd Ppi;
    Eigen::VectorXd rbar;
    Eigen::VectorXd d;

    Eigen::MatrixXd D() const { return d.asDiagonal(); }
};

/// Everything a learner or the analysis needs about one benchmark problem.
/// `target` equals `behavior` for single-policy environments (has_target is
/// false there, and off-policy learners refuse to run).
struct EnvBundle {
    std::string name;
    FiniteMdp mdp;
    Policy behavior;
    Policy target;
    bool has_target = false;
    FeatureMap features;
    Eigen::VectorXd start;   // start-state distribution
    Eigen::VectorXd theta0;  // default parameter initialisation

    void validate() const;
};

Eigen::MatrixXd policy_matrix(const FiniteMdp& mdp, const Policy& policy);
Eigen::VectorXd expected_reward(const FiniteMdp& mdp, const Policy& policy);

/// Stationary distribution of a row-stochastic matrix. Solves d^T P = d^T by
/// a direct linear solve with the normalisation row substituted in; falls
/// back to power iteration for large matrices. Throws when the chain has no
/// unique stationary distribution with full support (reducible or periodic).
Eigen::VectorXd stationary_distribution(const Eigen::MatrixXd& P);

InducedChain induced_chain(const FiniteMdp& mdp, const Policy& policy);

/// Restart-augmented chain: absorbing rows are replaced by the start
/// distribution (reward-free restart), making episodic environments ergodic.
InducedChain restart_chain(const FiniteMdp& mdp, const Policy& policy,
                           const Eigen::VectorXd& start);

/// V = (I - gamma P)^-1 rbar on the plain induced structure. For episodic
/// environments the absorbing self-loops make this the episodic value
/// function, with value 0 at absorbing states.
Eigen::VectorXd true_values(const InducedChain& chain, double gamma);
Eigen::VectorXd true_values(const FiniteMdp& mdp, const Policy& policy);

struct Step {
    int action;
    int next;
    double reward;
};

/// One environment transition from a non-absorbing state: action from
/// policy(.|s), next state from P[a](s,.), reward r(s, s').
Step sample_step(const FiniteMdp& mdp, const Policy& policy, int s, Rng& rng);

/// 100 states, 5 actions; transition rows and the policy drawn uniform[0,1]
/// plus a small additive constant and normalised; rewards uniform[0,1];
/// gamma = 0.95; identity features.
EnvBundle gen_random_walk_100(std::uint64_t seed);

/// 15-state chain with two absorbing ends; actions L/R move left/right with
/// probability 0.9/0.1; reward 1 on every transition entering interior state
/// 5 or 10 (from either side); gamma = 0.9; behavior 0.5/0.5, target 0.6/0.4;
/// tabular features on the interior states.
EnvBundle gen_random_chain();

/// The 7-state star counterexample: action "dash" moves uniformly to states
/// 1..6, "solid" to state 7; behavior picks dash w.p. 6/7, target always
/// solid; zero rewards; gamma = 0.99; the standard 8-dimensional features and
/// nonzero initial parameters.
EnvBundle gen_baird();

/// Small random instance used by the certificate and oracle test suites:
/// dense random transitions (uniform + 0.01, normalised), uniform rewards,
/// independent random behavior/target policies, random full-rank features.
EnvBundle gen_random_mdp(int n, int actions, int d, double gamma, std::uint64_t seed);

EnvBundle load_env(const std::string& path);
void save_env(const EnvBundle& env, const std::string& path);

/// Dispatch by generator name (random_walk_100, random_chain, baird) or file
/// path. The seed is only used by seeded generators.
EnvBundle make_env(const std::string& name_or_path, std::uint64_t seed);

}  // namespace tdsched
