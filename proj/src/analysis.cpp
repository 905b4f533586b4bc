#include "tdsched/analysis.hpp"

#include "tdsched/learners.hpp"

#include <Eigen/Eigenvalues>

#include <cmath>
#include <stdexcept>

namespace tdsched {

namespace {

double spectral_norm(const Eigen::MatrixXd& m) {
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(m);
    return svd.singularValues().size() ? svd.singularValues()(0) : 0.0;
}

const Policy& evaluated_policy(const EnvBundle& env, PolicyMode mode) {
    return mode == PolicyMode::OffPolicy ? env.target : env.behavior;
}

}  // namespace

Eigen::MatrixXd compute_M(const Eigen::MatrixXd& P, double gamma, const LambdaSchedule& schedule) {
    const int n = static_cast<int>(P.rows());
    const int L = schedule.truncation();
    Eigen::MatrixXd M = Eigen::MatrixXd::Zero(n, n);
    Eigen::MatrixXd Pk = Eigen::MatrixXd::Identity(n, n);
    double prefix = 1.0;  // lambda_1 ... lambda_{k-1}
    double gk = 1.0;      // gamma^k
    for (int k = 1; k <= L; ++k) {
        Pk = Pk * P;
        gk *= gamma;
        M += gk * prefix * (1.0 - schedule.value(k)) * Pk;
        prefix *= schedule.value(k);
        if (prefix == 0.0) return M;  // remaining terms vanish
    }
    Pk = Pk * P;
    gk *= gamma;
    M += gk * prefix * Pk;
    return M;
}

Abc compute_abc(const Eigen::VectorXd& d, const Eigen::MatrixXd& P, const Eigen::VectorXd& rbar,
                const FeatureMap& features, double gamma, const LambdaSchedule& schedule) {
    const int n = static_cast<int>(P.rows());
    if (d.size() != n || rbar.size() != n || features.phi.rows() != n)
        throw std::invalid_argument("compute_abc dimension mismatch");

    const Eigen::MatrixXd M = compute_M(P, gamma, schedule);
    const Eigen::MatrixXd DPhi = d.asDiagonal() * features.phi;

    Abc abc;
    abc.A = features.phi.transpose() *
            (d.asDiagonal() * ((M - Eigen::MatrixXd::Identity(n, n)) * features.phi));
    abc.C = features.phi.transpose() * DPhi;

    // b pairs the k-step-back feature with the expected reward k steps ahead:
    // b = Phi^T D [sum_k c_k P^k] rbar.
    Eigen::VectorXd acc = rbar;
    Eigen::VectorXd weighted = acc;  // k = 0 term, c_0 = 1
    double coef = 1.0;
    for (int k = 1; k <= schedule.truncation(); ++k) {
        coef = schedule.prefix_product(k, gamma);
        if (coef == 0.0) break;
        acc = P * acc;
        weighted += coef * acc;
    }
    abc.b = features.phi.transpose() * (d.asDiagonal() * weighted);
    return abc;
}

Eigen::VectorXd sampling_weights(const EnvBundle& env) {
    if (env.mdp.absorbing.empty()) return induced_chain(env.mdp, env.behavior).d;
    return restart_chain(env.mdp, env.behavior, env.start).d;
}

Eigen::VectorXd evaluated_values(const EnvBundle& env, PolicyMode mode) {
    return true_values(env.mdp, evaluated_policy(env, mode));
}

Abc compute_abc(const EnvBundle& env, const LambdaSchedule& schedule, PolicyMode mode) {
    if (mode == PolicyMode::OffPolicy && !env.has_target)
        throw std::invalid_argument("off-policy analysis requires a target policy");
    const Policy& pi = evaluated_policy(env, mode);
    const Eigen::VectorXd d = sampling_weights(env);
    const Eigen::MatrixXd P = policy_matrix(env.mdp, pi);
    const Eigen::VectorXd rbar = expected_reward(env.mdp, pi);
    return compute_abc(d, P, rbar, env.features, env.mdp.gamma, schedule);
}

McAbc compute_abc_mc(const EnvBundle& env, const LambdaSchedule& schedule, PolicyMode mode,
                     long steps, std::uint64_t seed, int batches) {
    if (steps < batches || batches < 2)
        throw std::invalid_argument("compute_abc_mc needs steps >= batches >= 2");
    if (mode == PolicyMode::OffPolicy && !env.has_target)
        throw std::invalid_argument("off-policy estimation requires a target policy");

    const int d = env.features.dim();
    const TraceMode trace_mode =
        mode == PolicyMode::OffPolicy ? TraceMode::OffPolicy : TraceMode::OnPolicy;
    Rng rng(seed);
    TraceBuffer buffer(schedule.truncation(), d);
    const Eigen::VectorXd zero_phi = Eigen::VectorXd::Zero(d);

    // Per-batch running sums; SE is taken across batch means, which absorbs
    // the serial correlation of the chain.
    const long batch_len = steps / batches;
    std::vector<Eigen::MatrixXd> batch_A(static_cast<std::size_t>(batches));
    std::vector<Eigen::VectorXd> batch_b(static_cast<std::size_t>(batches));
    std::vector<Eigen::MatrixXd> batch_C(static_cast<std::size_t>(batches));

    int s = rng.categorical(env.start);
    auto advance = [&](bool accumulate, Eigen::MatrixXd* As, Eigen::VectorXd* bs,
                       Eigen::MatrixXd* Cs) {
        if (env.mdp.is_absorbing(s)) {
            // One tick of the restart chain: a zero sample, then a reward-free
            // restart with the window cleared.
            buffer.clear();
            s = rng.categorical(env.start);
            return;
        }
        Step step = sample_step(env.mdp, env.behavior, s, rng);
        double rho = 1.0;
        if (mode == PolicyMode::OffPolicy)
            rho = env.target.probs(s, step.action) / env.behavior.probs(s, step.action);
        const Eigen::VectorXd phi_t = env.features.row(s);
        buffer.push(phi_t, rho);
        if (accumulate) {
            const Eigen::VectorXd z = compute_trace(buffer, schedule, env.mdp.gamma, trace_mode);
            const Eigen::VectorXd phi_next =
                env.mdp.is_absorbing(step.next) ? zero_phi : env.features.row(step.next);
            As->noalias() += z * (env.mdp.gamma * phi_next - phi_t).transpose();
            *bs += step.reward * z;
            Cs->noalias() += phi_t * phi_t.transpose();
        }
        s = step.next;
    };

    const long warmup = 10L * (schedule.truncation() + 1) + 100;
    for (long t = 0; t < warmup; ++t) advance(false, nullptr, nullptr, nullptr);

    for (int bi = 0; bi < batches; ++bi) {
        Eigen::MatrixXd As = Eigen::MatrixXd::Zero(d, d);
        Eigen::VectorXd bs = Eigen::VectorXd::Zero(d);
        Eigen::MatrixXd Cs = Eigen::MatrixXd::Zero(d, d);
        for (long t = 0; t < batch_len; ++t) advance(true, &As, &bs, &Cs);
        batch_A[static_cast<std::size_t>(bi)] = As / static_cast<double>(batch_len);
        batch_b[static_cast<std::size_t>(bi)] = bs / static_cast<double>(batch_len);
        batch_C[static_cast<std::size_t>(bi)] = Cs / static_cast<double>(batch_len);
    }

    McAbc out;
    out.steps = batch_len * batches;
    out.mean.A = Eigen::MatrixXd::Zero(d, d);
    out.mean.b = Eigen::VectorXd::Zero(d);
    out.mean.C = Eigen::MatrixXd::Zero(d, d);
    for (int bi = 0; bi < batches; ++bi) {
        out.mean.A += batch_A[static_cast<std::size_t>(bi)];
        out.mean.b += batch_b[static_cast<std::size_t>(bi)];
        out.mean.C += batch_C[static_cast<std::size_t>(bi)];
    }
    out.mean.A /= batches;
    out.mean.b /= batches;
    out.mean.C /= batches;

    Eigen::MatrixXd varA = Eigen::MatrixXd::Zero(d, d);
    Eigen::VectorXd varb = Eigen::VectorXd::Zero(d);
    Eigen::MatrixXd varC = Eigen::MatrixXd::Zero(d, d);
    for (int bi = 0; bi < batches; ++bi) {
        varA += (batch_A[static_cast<std::size_t>(bi)] - out.mean.A).array().square().matrix();
        varb += (batch_b[static_cast<std::size_t>(bi)] - out.mean.b).array().square().matrix();
        varC += (batch_C[static_cast<std::size_t>(bi)] - out.mean.C).array().square().matrix();
    }
    const double norm = static_cast<double>(batches - 1) * static_cast<double>(batches);
    out.se.A = (varA / norm).cwiseSqrt();
    out.se.b = (varb / norm).cwiseSqrt();
    out.se.C = (varC / norm).cwiseSqrt();
    return out;
}

Eigen::VectorXd solve_fixed_point(const Eigen::MatrixXd& A, const Eigen::VectorXd& b) {
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(A, Eigen::ComputeThinU | Eigen::ComputeThinV);
    const auto& sv = svd.singularValues();
    if (sv.size() == 0 || sv(sv.size() - 1) <= 0.0 || sv(0) / sv(sv.size() - 1) > 1e12)
        throw std::runtime_error("fixed-point matrix is singular or ill-conditioned");
    Eigen::VectorXd theta = svd.solve(-b);
    const double scale = b.norm();
    if (scale > 0.0 && (A * theta + b).norm() > 1e-8 * scale)
        throw std::runtime_error("fixed-point solve residual too large");
    return theta;
}

DefinitenessCert check_negative_definite(const Eigen::MatrixXd& m, double tol) {
    if (m.rows() != m.cols()) throw std::invalid_argument("definiteness check needs a square matrix");
    Eigen::MatrixXd sym = 0.5 * (m + m.transpose());
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(sym, Eigen::EigenvaluesOnly);
    DefinitenessCert cert;
    cert.extreme_eigenvalue = eig.eigenvalues().maxCoeff();
    cert.negative_definite = cert.extreme_eigenvalue < -tol * spectral_norm(m);
    return cert;
}

HurwitzCert check_hurwitz(const Eigen::MatrixXd& m, double tol) {
    if (m.rows() != m.cols()) throw std::invalid_argument("stability check needs a square matrix");
    Eigen::EigenSolver<Eigen::MatrixXd> eig(m, /*computeEigenvectors=*/false);
    HurwitzCert cert;
    cert.max_real_part = eig.eigenvalues().real().maxCoeff();
    cert.stable = cert.max_real_part < -tol * spectral_norm(m);
    return cert;
}

GtdBlockReport gtd_block_matrix(const Abc& abc, double eta) {
    if (!(eta > 0.0)) throw std::invalid_argument("gtd block matrix needs eta > 0");
    const int d = static_cast<int>(abc.A.rows());
    GtdBlockReport report;
    report.G.setZero(2 * d, 2 * d);
    report.G.topLeftCorner(d, d) = -std::sqrt(eta) * abc.C;
    report.G.topRightCorner(d, d) = abc.A;
    report.G.bottomLeftCorner(d, d) = -abc.A.transpose();

    Eigen::MatrixXd sym = 0.5 * (report.G + report.G.transpose());
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> sym_eig(sym, Eigen::EigenvaluesOnly);
    report.max_sym_eig = sym_eig.eigenvalues().maxCoeff();

    HurwitzCert hurwitz = check_hurwitz(report.G);
    report.max_real_eig = hurwitz.max_real_part;
    report.negative_definite = hurwitz.stable;

    Eigen::FullPivLU<Eigen::MatrixXd> lu(report.G);
    if (lu.isInvertible()) {
        Eigen::VectorXd g(2 * d);
        g.head(d) = abc.b;
        g.tail(d).setZero();
        Eigen::VectorXd xi = lu.solve(-g);
        report.w_star = std::sqrt(eta) * xi.head(d);
        report.theta_star = xi.tail(d);
    }
    return report;
}

double rmse(const Eigen::VectorXd& theta, const FeatureMap& features,
            const Eigen::VectorXd& v_true, const Eigen::VectorXd& d) {
    if (features.phi.rows() != v_true.size() || v_true.size() != d.size())
        throw std::invalid_argument("rmse dimension mismatch");
    Eigen::VectorXd err = v_true - features.phi * theta;
    return std::sqrt(err.array().square().matrix().dot(d));
}

double rmspbe(const Eigen::VectorXd& theta, const Abc& abc) {
    Eigen::VectorXd r = abc.A * theta + abc.b;
    Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod(abc.C);
    Eigen::VectorXd y = cod.solve(r);
    const double scale = r.norm();
    if (scale > 0.0 && (abc.C * y - r).norm() > 1e-8 * scale)
        throw std::runtime_error("projected error leaves the range of C (singular C)");
    return std::sqrt(std::max(0.0, r.dot(y)));
}

FixedPointReport fixed_point_report(const EnvBundle& env, const LambdaSchedule& schedule,
                                    PolicyMode mode) {
    FixedPointReport report;
    report.abc = compute_abc(env, schedule, mode);
    try {
        report.theta_star = solve_fixed_point(report.abc.A, report.abc.b);
    } catch (const std::runtime_error&) {
        report.theta_star.reset();
    }
    DefinitenessCert a_cert = check_negative_definite(report.abc.A);
    report.max_sym_eig_A = a_cert.extreme_eigenvalue;
    report.A_negative_definite = a_cert.negative_definite;

    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> c_eig(report.abc.C, Eigen::EigenvaluesOnly);
    report.min_eig_C = c_eig.eigenvalues().minCoeff();
    report.C_positive_definite = report.min_eig_C > 1e-10 * spectral_norm(report.abc.C);

    Eigen::VectorXd zero = Eigen::VectorXd::Zero(env.features.dim());
    report.rmse_at_zero = rmse(zero, env.features, evaluated_values(env, mode),
                               sampling_weights(env));
    report.rmspbe_at_zero = rmspbe(zero, report.abc);
    return report;
}

}  // namespace tdsched
