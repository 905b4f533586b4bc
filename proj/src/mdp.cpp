#include "tdsched/mdp.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace tdsched {

namespace {

constexpr double kStochasticTol = 1e-12;
constexpr double kStationaryTol = 1e-10;

void check_distribution(const Eigen::VectorXd& p, const std::string& what) {
    if (p.minCoeff() < -kStochasticTol)
        throw std::invalid_argument(what + " has a negative entry");
    if (std::abs(p.sum() - 1.0) > 1e-9)
        throw std::invalid_argument(what + " does not sum to 1");
}

}  // namespace

int Rng::categorical(const Eigen::VectorXd& probs) {
    double u = uniform();
    double c = 0.0;
    int last_positive = -1;
    for (int i = 0; i < probs.size(); ++i) {
        if (probs(i) <= 0.0) continue;
        last_positive = i;
        c += probs(i);
        if (u < c) return i;
    }
    if (last_positive < 0) throw std::invalid_argument("categorical draw from a zero vector");
    return last_positive;  // guards against round-off in the CDF
}

bool FiniteMdp::is_absorbing(int s) const {
    return std::find(absorbing.begin(), absorbing.end(), s) != absorbing.end();
}

void FiniteMdp::validate() const {
    if (n < 1 || actions < 1) throw std::invalid_argument("MDP needs states and actions");
    if (static_cast<int>(P.size()) != actions)
        throw std::invalid_argument("transition tensor has wrong action count");
    if (!(gamma > 0.0 && gamma < 1.0)) throw std::invalid_argument("gamma must lie in (0,1)");
    if (r.rows() != n || r.cols() != n) throw std::invalid_argument("reward table has wrong shape");
    if (!r.allFinite()) throw std::invalid_argument("reward table has non-finite entries");
    for (const Eigen::MatrixXd& Pa : P) {
        if (Pa.rows() != n || Pa.cols() != n)
            throw std::invalid_argument("transition matrix has wrong shape");
        if (Pa.minCoeff() < -kStochasticTol)
            throw std::invalid_argument("negative transition probability");
        for (int s = 0; s < n; ++s)
            if (std::abs(Pa.row(s).sum() - 1.0) > kStochasticTol * 10)
                throw std::invalid_argument("transition row does not sum to 1");
    }
    for (int s : absorbing) {
        if (s < 0 || s >= n) throw std::invalid_argument("absorbing state out of range");
        for (int a = 0; a < actions; ++a)
            if (std::abs(P[static_cast<std::size_t>(a)](s, s) - 1.0) > kStochasticTol * 10)
                throw std::invalid_argument("absorbing state must self-loop");
        if (std::abs(r(s, s)) > 0.0)
            throw std::invalid_argument("absorbing self-loop must carry zero reward");
    }
}

void Policy::validate(int n, int actions) const {
    if (probs.rows() != n || probs.cols() != actions)
        throw std::invalid_argument("policy has wrong shape");
    if (probs.minCoeff() < -kStochasticTol) throw std::invalid_argument("negative action probability");
    for (int s = 0; s < n; ++s)
        if (std::abs(probs.row(s).sum() - 1.0) > kStochasticTol * 10)
            throw std::invalid_argument("policy row does not sum to 1");
}

int FeatureMap::rank() const {
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(phi);
    const auto& sv = svd.singularValues();
    if (sv.size() == 0) return 0;
    double tol = 1e-10 * sv(0);
    int r = 0;
    for (int i = 0; i < sv.size(); ++i)
        if (sv(i) > tol) ++r;
    return r;
}

void FeatureMap::validate() const {
    if (phi.rows() < 1 || phi.cols() < 1) throw std::invalid_argument("empty feature matrix");
    int expect = static_cast<int>(std::min(phi.rows(), phi.cols()));
    if (rank() < expect) throw std::invalid_argument("feature matrix is rank deficient");
}

void EnvBundle::validate() const {
    mdp.validate();
    behavior.validate(mdp.n, mdp.actions);
    target.validate(mdp.n, mdp.actions);
    features.validate();
    if (features.phi.rows() != mdp.n) throw std::invalid_argument("feature matrix has wrong row count");
    check_distribution(start, "start distribution");
    // Absorbing states must carry zero features so that the closed-form
    // fixed-point matrices describe the same process the learner samples.
    for (int s : mdp.absorbing)
        if (features.phi.row(s).cwiseAbs().maxCoeff() > 0.0)
            throw std::invalid_argument("absorbing states must have zero features");
    if (theta0.size() != features.dim())
        throw std::invalid_argument("theta0 dimension does not match the feature map");
}

Eigen::MatrixXd policy_matrix(const FiniteMdp& mdp, const Policy& policy) {
    Eigen::MatrixXd Ppi = Eigen::MatrixXd::Zero(mdp.n, mdp.n);
    for (int a = 0; a < mdp.actions; ++a)
        Ppi += policy.probs.col(a).asDiagonal() * mdp.P[static_cast<std::size_t>(a)];
    return Ppi;
}

Eigen::VectorXd expected_reward(const FiniteMdp& mdp, const Policy& policy) {
    Eigen::MatrixXd Ppi = policy_matrix(mdp, policy);
    return (Ppi.cwiseProduct(mdp.r)).rowwise().sum();
}

Eigen::VectorXd stationary_distribution(const Eigen::MatrixXd& P) {
    const int n = static_cast<int>(P.rows());
    if (P.cols() != n) throw std::invalid_argument("transition matrix must be square");

    Eigen::VectorXd d;
    if (n <= 1000) {
        // Direct solve on (P^T - I) with the last row replaced by the
        // normalisation constraint.
        Eigen::MatrixXd A = P.transpose() - Eigen::MatrixXd::Identity(n, n);
        A.row(n - 1).setOnes();
        Eigen::VectorXd rhs = Eigen::VectorXd::Zero(n);
        rhs(n - 1) = 1.0;
        d = A.fullPivLu().solve(rhs);

        // Uniqueness and aperiodicity: exactly one eigenvalue on the unit
        // circle. A second one flags a reducible or periodic chain.
        Eigen::EigenSolver<Eigen::MatrixXd> eig(P, /*computeEigenvectors=*/false);
        int on_circle = 0;
        for (int i = 0; i < n; ++i)
            if (std::abs(eig.eigenvalues()(i)) > 1.0 - 1e-8) ++on_circle;
        if (on_circle != 1)
            throw std::runtime_error("chain has no unique stationary distribution (reducible or periodic)");
    } else {
        d = Eigen::VectorXd::Constant(n, 1.0 / n);
        for (int it = 0; it < 100000; ++it) {
            Eigen::VectorXd next = P.transpose() * d;
            next /= next.sum();
            if ((next - d).lpNorm<Eigen::Infinity>() < 1e-14) {
                d = next;
                break;
            }
            d = next;
        }
    }

    if ((P.transpose() * d - d).lpNorm<Eigen::Infinity>() > kStationaryTol)
        throw std::runtime_error("stationary distribution residual too large");
    if (d.minCoeff() <= 1e-12)
        throw std::runtime_error("stationary distribution not strictly positive");
    d /= d.sum();
    return d;
}

InducedChain induced_chain(const FiniteMdp& mdp, const Policy& policy) {
    InducedChain chain;
    chain.Ppi = policy_matrix(mdp, policy);
    chain.rbar = expected_reward(mdp, policy);
    chain.d = stationary_distribution(chain.Ppi);
    return chain;
}

InducedChain restart_chain(const FiniteMdp& mdp, const Policy& policy,
                           const Eigen::VectorXd& start) {
    check_distribution(start, "start distribution");
    InducedChain chain;
    chain.Ppi = policy_matrix(mdp, policy);
    chain.rbar = expected_reward(mdp, policy);
    for (int s : mdp.absorbing) {
        chain.Ppi.row(s) = start.transpose();
        chain.rbar(s) = 0.0;
    }
    chain.d = stationary_distribution(chain.Ppi);
    return chain;
}

Eigen::VectorXd true_values(const InducedChain& chain, double gamma) {
    const int n = static_cast<int>(chain.Ppi.rows());
    Eigen::MatrixXd A = Eigen::MatrixXd::Identity(n, n) - gamma * chain.Ppi;
    return A.fullPivLu().solve(chain.rbar);
}

Eigen::VectorXd true_values(const FiniteMdp& mdp, const Policy& policy) {
    const int n = mdp.n;
    Eigen::MatrixXd Ppi = policy_matrix(mdp, policy);
    Eigen::VectorXd rbar = expected_reward(mdp, policy);
    Eigen::MatrixXd A = Eigen::MatrixXd::Identity(n, n) - mdp.gamma * Ppi;
    return A.fullPivLu().solve(rbar);
}

Step sample_step(const FiniteMdp& mdp, const Policy& policy, int s, Rng& rng) {
    if (s < 0 || s >= mdp.n) throw std::invalid_argument("state out of range");
    if (mdp.is_absorbing(s)) throw std::invalid_argument("cannot step from an absorbing state");
    int a = rng.categorical(policy.probs.row(s).transpose());
    int next = rng.categorical(mdp.P[static_cast<std::size_t>(a)].row(s).transpose());
    return Step{a, next, mdp.r(s, next)};
}

namespace {

Eigen::VectorXd random_distribution(int n, Rng& rng, double eps) {
    Eigen::VectorXd v(n);
    for (int i = 0; i < n; ++i) v(i) = rng.uniform() + eps;
    return v / v.sum();
}

}  // namespace

EnvBundle gen_random_walk_100(std::uint64_t seed) {
    // Additive constant 0.01 before normalisation keeps the chain irreducible
    // and aperiodic.
    constexpr int n = 100;
    constexpr int actions = 5;
    constexpr double eps = 0.01;
    Rng rng(seed);

    EnvBundle env;
    env.name = "random_walk_100";
    env.mdp.n = n;
    env.mdp.actions = actions;
    env.mdp.gamma = 0.95;
    env.mdp.P.resize(actions);
    for (int a = 0; a < actions; ++a) {
        env.mdp.P[static_cast<std::size_t>(a)].resize(n, n);
        for (int s = 0; s < n; ++s)
            env.mdp.P[static_cast<std::size_t>(a)].row(s) = random_distribution(n, rng, eps).transpose();
    }
    env.mdp.r.resize(n, n);
    for (int s = 0; s < n; ++s)
        for (int s2 = 0; s2 < n; ++s2) env.mdp.r(s, s2) = rng.uniform();

    env.behavior.probs.resize(n, actions);
    for (int s = 0; s < n; ++s)
        env.behavior.probs.row(s) = random_distribution(actions, rng, eps).transpose();
    env.target = env.behavior;
    env.has_target = false;

    env.features.phi = Eigen::MatrixXd::Identity(n, n);
    env.start = random_distribution(n, rng, eps);
    env.theta0 = Eigen::VectorXd::Zero(n);
    env.validate();
    return env;
}

EnvBundle gen_random_chain() {
    // States: 0 = left absorbing, 1..15 interior, 16 = right absorbing.
    constexpr int n = 17;
    constexpr int interior = 15;

    EnvBundle env;
    env.name = "random_chain";
    env.mdp.n = n;
    env.mdp.actions = 2;
    env.mdp.gamma = 0.9;
    env.mdp.absorbing = {0, 16};

    Eigen::MatrixXd left = Eigen::MatrixXd::Zero(n, n);
    Eigen::MatrixXd right = Eigen::MatrixXd::Zero(n, n);
    for (int s = 1; s <= interior; ++s) {
        left(s, s - 1) = 0.9;
        left(s, s + 1) = 0.1;
        right(s, s - 1) = 0.1;
        right(s, s + 1) = 0.9;
    }
    for (int s : env.mdp.absorbing) {
        left(s, s) = 1.0;
        right(s, s) = 1.0;
    }
    env.mdp.P = {left, right};

    // Reward 1 on every transition entering interior state 5 or 10.
    env.mdp.r = Eigen::MatrixXd::Zero(n, n);
    for (int goal : {5, 10}) {
        env.mdp.r(goal - 1, goal) = 1.0;
        env.mdp.r(goal + 1, goal) = 1.0;
    }

    env.behavior.probs = Eigen::MatrixXd::Constant(n, 2, 0.5);
    env.target.probs.resize(n, 2);
    env.target.probs.col(0).setConstant(0.6);
    env.target.probs.col(1).setConstant(0.4);
    for (int s : env.mdp.absorbing) env.target.probs.row(s) << 0.5, 0.5;
    env.has_target = true;

    env.features.phi = Eigen::MatrixXd::Zero(n, interior);
    for (int s = 1; s <= interior; ++s) env.features.phi(s, s - 1) = 1.0;

    env.start = Eigen::VectorXd::Zero(n);
    for (int s = 1; s <= interior; ++s) env.start(s) = 1.0 / interior;
    env.theta0 = Eigen::VectorXd::Zero(interior);
    env.validate();
    return env;
}

EnvBundle gen_baird() {
    constexpr int n = 7;

    EnvBundle env;
    env.name = "baird";
    env.mdp.n = n;
    env.mdp.actions = 2;
    env.mdp.gamma = 0.99;

    Eigen::MatrixXd dash = Eigen::MatrixXd::Zero(n, n);
    Eigen::MatrixXd solid = Eigen::MatrixXd::Zero(n, n);
    for (int s = 0; s < n; ++s) {
        for (int s2 = 0; s2 < 6; ++s2) dash(s, s2) = 1.0 / 6.0;
        solid(s, 6) = 1.0;
    }
    env.mdp.P = {dash, solid};
    env.mdp.r = Eigen::MatrixXd::Zero(n, n);

    env.behavior.probs.resize(n, 2);
    env.behavior.probs.col(0).setConstant(6.0 / 7.0);
    env.behavior.probs.col(1).setConstant(1.0 / 7.0);
    env.target.probs.resize(n, 2);
    env.target.probs.col(0).setConstant(0.0);
    env.target.probs.col(1).setConstant(1.0);
    env.has_target = true;

    // phi(i) = 2 e_i + e_8 for the six upper states, phi(7) = e_7 + 2 e_8.
    env.features.phi = Eigen::MatrixXd::Zero(n, 8);
    for (int s = 0; s < 6; ++s) {
        env.features.phi(s, s) = 2.0;
        env.features.phi(s, 7) = 1.0;
    }
    env.features.phi(6, 6) = 1.0;
    env.features.phi(6, 7) = 2.0;

    env.start = Eigen::VectorXd::Constant(n, 1.0 / n);
    env.theta0 = Eigen::VectorXd::Ones(8);
    env.theta0(6) = 10.0;
    env.validate();
    return env;
}

EnvBundle gen_random_mdp(int n, int actions, int d, double gamma, std::uint64_t seed) {
    if (d > n) throw std::invalid_argument("random MDP features need d <= n");
    Rng rng(seed);

    EnvBundle env;
    env.name = "random_mdp";
    env.mdp.n = n;
    env.mdp.actions = actions;
    env.mdp.gamma = gamma;
    env.mdp.P.resize(static_cast<std::size_t>(actions));
    for (int a = 0; a < actions; ++a) {
        env.mdp.P[static_cast<std::size_t>(a)].resize(n, n);
        for (int s = 0; s < n; ++s)
            env.mdp.P[static_cast<std::size_t>(a)].row(s) = random_distribution(n, rng, 0.01).transpose();
    }
    env.mdp.r.resize(n, n);
    for (int s = 0; s < n; ++s)
        for (int s2 = 0; s2 < n; ++s2) env.mdp.r(s, s2) = rng.uniform();

    env.behavior.probs.resize(n, actions);
    env.target.probs.resize(n, actions);
    for (int s = 0; s < n; ++s) {
        env.behavior.probs.row(s) = random_distribution(actions, rng, 0.01).transpose();
        env.target.probs.row(s) = random_distribution(actions, rng, 0.01).transpose();
    }
    env.has_target = true;

    if (d == n) {
        env.features.phi = Eigen::MatrixXd::Identity(n, n);
    } else {
        env.features.phi.resize(n, d);
        do {
            for (int s = 0; s < n; ++s)
                for (int j = 0; j < d; ++j) env.features.phi(s, j) = rng.uniform(-1.0, 1.0);
        } while (env.features.rank() < d);
    }

    env.start = random_distribution(n, rng, 0.01);
    env.theta0 = Eigen::VectorXd::Zero(d);
    env.validate();
    return env;
}

namespace {

void write_matrix(std::ostream& out, const Eigen::MatrixXd& m) {
    char buf[40];
    for (int i = 0; i < m.rows(); ++i) {
        for (int j = 0; j < m.cols(); ++j) {
            std::snprintf(buf, sizeof(buf), "%.17g", m(i, j));
            out << (j ? " " : "") << buf;
        }
        out << '\n';
    }
}

Eigen::MatrixXd read_matrix(std::istream& in, int rows, int cols) {
    Eigen::MatrixXd m(rows, cols);
    for (int i = 0; i < rows; ++i)
        for (int j = 0; j < cols; ++j)
            if (!(in >> m(i, j))) throw std::runtime_error("environment file: truncated matrix block");
    return m;
}

}  // namespace

void save_env(const EnvBundle& env, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open " + path + " for writing");
    out << "name " << env.name << '\n';
    out << "states " << env.mdp.n << '\n';
    out << "actions " << env.mdp.actions << '\n';
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", env.mdp.gamma);
    out << "gamma " << buf << '\n';
    if (!env.mdp.absorbing.empty()) {
        out << "absorbing";
        for (int s : env.mdp.absorbing) out << ' ' << s;
        out << '\n';
    }
    for (int a = 0; a < env.mdp.actions; ++a) {
        out << "transitions " << a << '\n';
        write_matrix(out, env.mdp.P[static_cast<std::size_t>(a)]);
    }
    out << "rewards\n";
    write_matrix(out, env.mdp.r);
    out << "behavior\n";
    write_matrix(out, env.behavior.probs);
    if (env.has_target) {
        out << "target\n";
        write_matrix(out, env.target.probs);
    }
    bool tabular = env.features.phi.rows() == env.features.phi.cols() &&
                   env.features.phi.isIdentity(0.0);
    if (tabular) {
        out << "features tabular\n";
    } else {
        out << "features matrix " << env.features.dim() << '\n';
        write_matrix(out, env.features.phi);
    }
    out << "start\n";
    write_matrix(out, env.start.transpose());
    out << "theta0\n";
    write_matrix(out, env.theta0.transpose());
    if (!out) throw std::runtime_error("failed writing " + path);
}

EnvBundle load_env(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open environment file " + path);

    EnvBundle env;
    env.name = path;
    int n = -1, actions = -1;
    bool have_behavior = false, have_features = false, have_start = false, have_theta0 = false;

    std::string key;
    while (in >> key) {
        if (key == "name") {
            in >> env.name;
        } else if (key == "states") {
            in >> n;
            env.mdp.n = n;
        } else if (key == "actions") {
            in >> actions;
            env.mdp.actions = actions;
            env.mdp.P.resize(static_cast<std::size_t>(actions));
        } else if (key == "gamma") {
            in >> env.mdp.gamma;
        } else if (key == "absorbing") {
            std::string rest;
            std::getline(in, rest);
            std::stringstream ss(rest);
            int s;
            while (ss >> s) env.mdp.absorbing.push_back(s);
        } else if (key == "transitions") {
            int a;
            in >> a;
            if (n < 1 || a < 0 || a >= actions)
                throw std::runtime_error("environment file: transitions block out of order");
            env.mdp.P[static_cast<std::size_t>(a)] = read_matrix(in, n, n);
        } else if (key == "rewards") {
            env.mdp.r = read_matrix(in, n, n);
        } else if (key == "behavior") {
            env.behavior.probs = read_matrix(in, n, actions);
            have_behavior = true;
        } else if (key == "target") {
            env.target.probs = read_matrix(in, n, actions);
            env.has_target = true;
        } else if (key == "features") {
            std::string kind;
            in >> kind;
            if (kind == "tabular") {
                env.features.phi = Eigen::MatrixXd::Identity(n, n);
            } else if (kind == "matrix") {
                int d;
                in >> d;
                env.features.phi = read_matrix(in, n, d);
            } else {
                throw std::runtime_error("environment file: unknown features kind " + kind);
            }
            have_features = true;
        } else if (key == "start") {
            env.start = read_matrix(in, 1, n).transpose();
            have_start = true;
        } else if (key == "theta0") {
            if (!have_features) throw std::runtime_error("environment file: theta0 before features");
            env.theta0 = read_matrix(in, 1, env.features.dim()).transpose();
            have_theta0 = true;
        } else {
            throw std::runtime_error("environment file: unknown section " + key);
        }
    }

    if (n < 1 || actions < 1 || !have_behavior || !have_features)
        throw std::runtime_error("environment file " + path + " is missing required sections");
    if (!env.has_target) env.target = env.behavior;
    if (!have_start) env.start = Eigen::VectorXd::Constant(n, 1.0 / n);
    if (!have_theta0) env.theta0 = Eigen::VectorXd::Zero(env.features.dim());
    env.validate();
    return env;
}

EnvBundle make_env(const std::string& name_or_path, std::uint64_t seed) {
    if (name_or_path == "random_walk_100") return gen_random_walk_100(seed);
    if (name_or_path == "random_chain") return gen_random_chain();
    if (name_or_path == "baird") return gen_baird();
    return load_env(name_or_path);
}

}  // namespace tdsched
