#include "tdsched/learners.hpp"

#include "tdsched/returns.hpp"
#include "test_util.hpp"

#include <doctest.h>

#include <cmath>

using namespace tdsched;
using tdsched::testutil::random_trajectory;
using tdsched::testutil::random_vector;

namespace {

Eigen::VectorXd unit(int dim, int i) {
    Eigen::VectorXd v = Eigen::VectorXd::Zero(dim);
    v(i) = 1.0;
    return v;
}

}  // namespace

TEST_CASE("trace buffer is a bounded ring") {
    TraceBuffer buf(2, 3);
    CHECK(buf.capacity() == 3);
    CHECK(buf.size() == 0);
    CHECK_THROWS_AS(compute_trace(buf, equal_weights(2, 2), 0.9, TraceMode::OnPolicy),
                    std::invalid_argument);

    for (int i = 0; i < 5; ++i) buf.push(unit(3, i % 3), 1.0 + i);
    CHECK(buf.size() == 3);
    CHECK(buf.phi(0) == unit(3, 1));  // newest is push #4
    CHECK(buf.rho(0) == 5.0);
    CHECK(buf.phi(2) == unit(3, 2));
    CHECK_THROWS_AS(buf.phi(3), std::out_of_range);

    buf.clear();
    CHECK(buf.size() == 0);
}

TEST_CASE("trace reductions") {
    const double gamma = 0.9;

    SUBCASE("all-zero schedule gives the TD(0) trace") {
        LambdaSchedule zero = make_schedule(std::vector<double>{0.0}, 1);
        TraceBuffer buf(1, 2);
        buf.push(unit(2, 0));
        buf.push(unit(2, 1));
        Eigen::VectorXd z = compute_trace(buf, zero, gamma, TraceMode::OnPolicy);
        CHECK(z == unit(2, 1));
    }
    SUBCASE("L=1, lambda=0.5 mixes two features") {
        LambdaSchedule half = make_schedule(std::vector<double>{0.5}, 1);
        TraceBuffer buf(1, 2);
        buf.push(unit(2, 1));  // phi_{t-1} = e2
        buf.push(unit(2, 0));  // phi_t = e1
        Eigen::VectorXd z = compute_trace(buf, half, gamma, TraceMode::OnPolicy);
        CHECK(z(0) == doctest::Approx(1.0));
        CHECK(z(1) == doctest::Approx(0.45));
    }
    SUBCASE("equal_weights(n,n) matches the n-step trace") {
        Rng rng(9);
        const int n = 4, d = 3;
        LambdaSchedule sched = equal_weights(n, n);
        TraceBuffer buf(sched.truncation(), d);
        std::vector<Eigen::VectorXd> feats;
        for (int t = 0; t < 10; ++t) {
            Eigen::VectorXd phi = random_vector(rng, d);
            feats.push_back(phi);
            buf.push(phi);
            Eigen::VectorXd expect = Eigen::VectorXd::Zero(d);
            for (int k = 0; k < std::min<int>(n, t + 1); ++k)
                expect += std::pow(gamma, k) * feats[static_cast<std::size_t>(t - k)];
            Eigen::VectorXd z = compute_trace(buf, sched, gamma, TraceMode::OnPolicy);
            CHECK((z - expect).lpNorm<Eigen::Infinity>() <= 1e-12);
        }
    }
    SUBCASE("constant lambda reproduces the recursive TD(lambda) trace while t < L") {
        Rng rng(10);
        const double lam = 0.6;
        const int L = 12, d = 2;
        LambdaSchedule sched = make_schedule(std::vector<double>(L, lam), L);
        TraceBuffer buf(L, d);
        Eigen::VectorXd recursive = Eigen::VectorXd::Zero(d);
        for (int t = 0; t < L; ++t) {  // strictly inside the window
            Eigen::VectorXd phi = random_vector(rng, d);
            buf.push(phi);
            recursive = gamma * lam * recursive + phi;
            Eigen::VectorXd z = compute_trace(buf, sched, gamma, TraceMode::OnPolicy);
            CHECK((z - recursive).lpNorm<Eigen::Infinity>() <= 1e-12);
        }
    }
    SUBCASE("unit ratios make the off-policy trace equal the on-policy one") {
        Rng rng(11);
        LambdaSchedule sched = equal_weights(2, 4);
        TraceBuffer buf(sched.truncation(), 3);
        for (int t = 0; t < 8; ++t) {
            buf.push(random_vector(rng, 3), 1.0);
            Eigen::VectorXd on = compute_trace(buf, sched, gamma, TraceMode::OnPolicy);
            Eigen::VectorXd off = compute_trace(buf, sched, gamma, TraceMode::OffPolicy);
            CHECK(on == off);
        }
    }
    SUBCASE("rho_t = 0 zeroes the whole trace") {
        LambdaSchedule sched = equal_weights(2, 4);
        TraceBuffer buf(sched.truncation(), 2);
        buf.push(unit(2, 0), 2.0);
        buf.push(unit(2, 1), 0.0);
        Eigen::VectorXd z = compute_trace(buf, sched, gamma, TraceMode::OffPolicy);
        CHECK(z.cwiseAbs().maxCoeff() == 0.0);
    }
}

TEST_CASE("step-size schedules") {
    StepSize c = StepSize::parse("const(0.01)");
    CHECK(c.at(0) == 0.01);
    CHECK(c.at(1000) == 0.01);
    StepSize h = StepSize::parse("harmonic(2,100)");
    CHECK(h.at(0) == doctest::Approx(0.02));
    CHECK(h.at(100) == doctest::Approx(0.01));
    CHECK_THROWS_AS(StepSize::parse("geometric(0.5)"), std::invalid_argument);
    CHECK_THROWS_AS(StepSize::constant(-1.0), std::invalid_argument);
    CHECK(StepSize::parse(h.format()).at(300) == h.at(300));
}

TEST_CASE("learner step algebra") {
    const double gamma = 0.9;
    LambdaSchedule zero = make_schedule(std::vector<double>{0.0}, 1);

    SUBCASE("zero TD error leaves theta unchanged") {
        LearnerState state;
        state.theta = Eigen::VectorXd::Constant(1, 3.0);
        state.alpha = StepSize::constant(0.1);
        TraceBuffer buf(1, 1);
        Eigen::VectorXd phi = Eigen::VectorXd::Ones(1);
        buf.push(phi);
        Transition tr{phi, phi, (1 - gamma) * 3.0};
        td_schedule_step(state, buf, tr, zero, gamma);
        CHECK(state.theta(0) == doctest::Approx(3.0));
        CHECK(state.t == 1);
    }
    SUBCASE("one-step arithmetic") {
        LearnerState state;
        state.theta = Eigen::VectorXd::Zero(1);
        state.alpha = StepSize::constant(0.1);
        TraceBuffer buf(1, 1);
        Eigen::VectorXd phi = Eigen::VectorXd::Ones(1);
        Eigen::VectorXd phi_next = Eigen::VectorXd::Zero(1);
        buf.push(phi);
        Transition tr{phi, phi_next, 1.0};
        td_schedule_step(state, buf, tr, zero, gamma);
        CHECK(state.theta(0) == doctest::Approx(0.1));
    }
    SUBCASE("unit ratios make the off-policy step equal the on-policy step") {
        Rng rng(5);
        LambdaSchedule sched = equal_weights(2, 3);
        LearnerState a, b;
        a.theta = b.theta = random_vector(rng, 3);
        a.alpha = b.alpha = StepSize::constant(0.05);
        TraceBuffer buf(sched.truncation(), 3);
        for (int t = 0; t < 6; ++t) {
            Eigen::VectorXd phi = random_vector(rng, 3);
            Eigen::VectorXd next = random_vector(rng, 3);
            buf.push(phi, 1.0);
            Transition tr{phi, next, rng.uniform()};
            td_schedule_step(a, buf, tr, sched, gamma);
            off_policy_td_step(b, buf, tr, 1.0, sched, gamma);
            CHECK((a.theta - b.theta).lpNorm<Eigen::Infinity>() <= 1e-15);
        }
    }
    SUBCASE("gtd with w = 0 only moves w") {
        Rng rng(6);
        LambdaSchedule sched = equal_weights(1, 2);
        LearnerState state;
        state.theta = random_vector(rng, 2);
        state.w = Eigen::VectorXd::Zero(2);
        state.alpha = StepSize::constant(0.1);
        state.beta = StepSize::constant(0.5);
        Eigen::VectorXd theta_before = state.theta;

        TraceBuffer buf(sched.truncation(), 2);
        Eigen::VectorXd phi = random_vector(rng, 2);
        Eigen::VectorXd next = random_vector(rng, 2);
        buf.push(phi, 1.5);
        Transition tr{phi, next, 0.7};
        double delta = td_error(state.theta, phi, next, 0.7, gamma);
        Eigen::VectorXd z = compute_trace(buf, sched, gamma, TraceMode::OffPolicy);

        gtd_step(state, buf, tr, 1.5, sched, gamma);
        CHECK(state.theta == theta_before);
        CHECK((state.w - 0.5 * delta * z).lpNorm<Eigen::Infinity>() <= 1e-15);
    }
    SUBCASE("tdc with w = 0 reduces to the TD step") {
        Rng rng(7);
        LambdaSchedule sched = equal_weights(1, 2);
        LearnerState tdc, td;
        tdc.theta = td.theta = random_vector(rng, 2);
        tdc.w = Eigen::VectorXd::Zero(2);
        tdc.alpha = td.alpha = StepSize::constant(0.1);
        tdc.beta = StepSize::constant(0.2);

        TraceBuffer buf(sched.truncation(), 2);
        Eigen::VectorXd phi = random_vector(rng, 2);
        Eigen::VectorXd next = random_vector(rng, 2);
        buf.push(phi, 1.0);
        Transition tr{phi, next, -0.3};
        tdc_step(tdc, buf, tr, 1.0, sched, gamma);
        off_policy_td_step(td, buf, tr, 1.0, sched, gamma);
        CHECK((tdc.theta - td.theta).lpNorm<Eigen::Infinity>() <= 1e-15);
    }
    SUBCASE("delta = 0 and w = 0 leave both vectors unchanged") {
        LambdaSchedule sched = equal_weights(1, 2);
        LearnerState state;
        state.theta = Eigen::VectorXd::Constant(1, 2.0);
        state.w = Eigen::VectorXd::Zero(1);
        state.alpha = StepSize::constant(0.1);
        state.beta = StepSize::constant(0.2);
        TraceBuffer buf(sched.truncation(), 1);
        Eigen::VectorXd phi = Eigen::VectorXd::Ones(1);
        buf.push(phi);
        Transition tr{phi, phi, (1 - gamma) * 2.0};  // delta = 0
        gtd_step(state, buf, tr, 1.0, sched, gamma);
        CHECK(state.theta(0) == 2.0);
        CHECK(state.w(0) == 0.0);
        tdc_step(state, buf, tr, 1.0, sched, gamma);
        CHECK(state.theta(0) == 2.0);
        CHECK(state.w(0) == 0.0);
    }
    SUBCASE("gradient steps use the pre-update snapshot of both vectors") {
        Rng rng(8);
        LambdaSchedule sched = equal_weights(1, 2);
        const double alpha = 0.1, beta = 0.4;
        LearnerState state;
        state.theta = random_vector(rng, 2);
        state.w = random_vector(rng, 2);
        state.alpha = StepSize::constant(alpha);
        state.beta = StepSize::constant(beta);

        TraceBuffer buf(sched.truncation(), 2);
        Eigen::VectorXd phi = random_vector(rng, 2);
        Eigen::VectorXd next = random_vector(rng, 2);
        buf.push(phi, 1.0);
        Transition tr{phi, next, 0.9};

        // Two-phase reference computed from the frozen snapshot.
        double delta = td_error(state.theta, phi, next, 0.9, gamma);
        Eigen::VectorXd z = compute_trace(buf, sched, gamma, TraceMode::OffPolicy);
        Eigen::VectorXd theta_ref = state.theta + alpha * (phi - gamma * next) * z.dot(state.w);
        Eigen::VectorXd w_ref = state.w + beta * (delta * z - phi.dot(state.w) * phi);

        gtd_step(state, buf, tr, 1.0, sched, gamma);
        CHECK((state.theta - theta_ref).lpNorm<Eigen::Infinity>() <= 1e-15);
        CHECK((state.w - w_ref).lpNorm<Eigen::Infinity>() <= 1e-15);
    }
}

// Over one full episode shorter than L with theta frozen, the summed
// backward-view updates equal the summed forward-view gaps.
TEST_CASE("offline forward/backward equivalence") {
    Rng rng(2024);
    const double gamma = 0.9;
    for (int rep = 0; rep < 40; ++rep) {
        int L = 6 + static_cast<int>(rng.next_u64() % 3);
        std::vector<double> lams(static_cast<std::size_t>(L));
        for (double& l : lams) l = rng.uniform();
        LambdaSchedule sched = make_schedule(std::move(lams), L);

        int m = 1 + static_cast<int>(rng.next_u64() % static_cast<std::uint64_t>(L - 1));
        int d = 2;
        Trajectory traj = random_trajectory(rng, m, d, false, /*terminated=*/true);
        Eigen::VectorXd theta = random_vector(rng, d);

        TraceBuffer buf(L, d);
        Eigen::VectorXd backward = Eigen::VectorXd::Zero(d);
        Eigen::VectorXd forward = Eigen::VectorXd::Zero(d);
        for (int t = 0; t < m; ++t) {
            const Eigen::VectorXd& phi = traj.feats[static_cast<std::size_t>(t)];
            bool terminal_next = t + 1 == m;
            Eigen::VectorXd phi_next =
                terminal_next ? Eigen::VectorXd::Zero(d) : traj.feats[static_cast<std::size_t>(t + 1)];
            buf.push(phi);
            double delta = td_error(theta, phi, phi_next, traj.rewards[static_cast<std::size_t>(t)], gamma);
            backward += delta * compute_trace(buf, sched, gamma, TraceMode::OnPolicy);
            forward += (lambda_schedule_return(traj, t, theta, sched, gamma) - theta.dot(phi)) * phi;
        }
        CHECK((backward - forward).lpNorm<Eigen::Infinity>() <= 1e-10);
    }
}

TEST_CASE("tabular TD converges on a single-state chain") {
    FiniteMdp mdp;
    mdp.n = 1;
    mdp.actions = 1;
    mdp.P = {Eigen::MatrixXd::Ones(1, 1)};
    mdp.r = Eigen::MatrixXd::Ones(1, 1);
    mdp.gamma = 0.5;

    EnvBundle env;
    env.name = "loop";
    env.mdp = mdp;
    env.behavior.probs = Eigen::MatrixXd::Ones(1, 1);
    env.target = env.behavior;
    env.features.phi = Eigen::MatrixXd::Identity(1, 1);
    env.start = Eigen::VectorXd::Ones(1);
    env.theta0 = Eigen::VectorXd::Zero(1);
    env.validate();

    RunOptions opt;
    opt.kind = LearnerKind::TdSchedule;
    opt.schedule = make_schedule(std::vector<double>{0.0}, 1);
    opt.alpha = StepSize::constant(0.1);
    opt.steps = 1000;
    opt.seed = 3;
    opt.eval_every = 1000;
    RunSeries series = run(env, opt, [](const Eigen::VectorXd&) { return std::vector<double>{}; });
    CHECK(std::abs(series.final_theta(0) - 2.0) < 1e-2);
}

TEST_CASE("run is deterministic and honours the step budget") {
    EnvBundle env = gen_random_chain();
    RunOptions opt;
    opt.kind = LearnerKind::TdSchedule;
    opt.schedule = equal_weights(2, 4);
    opt.alpha = StepSize::constant(0.05);
    opt.steps = 500;
    opt.seed = 17;
    opt.eval_every = 100;
    auto eval = [](const Eigen::VectorXd& theta) { return std::vector<double>{theta.norm()}; };

    RunSeries a = run(env, opt, eval);
    RunSeries b = run(env, opt, eval);
    CHECK(a.eval_steps == b.eval_steps);
    CHECK(a.values == b.values);
    CHECK(a.final_theta == b.final_theta);
    CHECK(a.eval_steps.size() == 6);  // step 0 plus 5 evaluation points

    opt.steps = 0;
    RunSeries none = run(env, opt, eval);
    CHECK(none.eval_steps == std::vector<long>{0});
    CHECK_FALSE(none.diverged);
}

TEST_CASE("off-policy TD diverges on the star counterexample") {
    EnvBundle env = gen_baird();
    RunOptions opt;
    opt.kind = LearnerKind::OffPolicyTdSchedule;
    opt.schedule = equal_weights(4, 6);
    opt.alpha = StepSize::constant(0.005);
    opt.steps = 5000;
    opt.seed = 1;
    opt.eval_every = 5000;
    RunSeries series = run(env, opt, [](const Eigen::VectorXd&) { return std::vector<double>{}; });
    double init_norm = env.theta0.norm();
    CHECK((series.diverged || series.final_theta.norm() > 10.0 * init_norm));
}

TEST_CASE("run rejects invalid setups") {
    EnvBundle walk = gen_random_walk_100(1);
    RunOptions opt;
    opt.kind = LearnerKind::GtdSchedule;
    opt.schedule = equal_weights(1, 2);
    opt.alpha = StepSize::constant(0.01);
    opt.beta = StepSize::constant(0.1);
    opt.steps = 10;
    CHECK_THROWS_AS(run(walk, opt, [](const Eigen::VectorXd&) { return std::vector<double>{}; }),
                    std::invalid_argument);

    // Target not covered by behavior: rho would be infinite.
    EnvBundle env = gen_random_chain();
    env.behavior.probs.col(0).setZero();
    env.behavior.probs.col(1).setOnes();
    for (int s : env.mdp.absorbing) env.behavior.probs.row(s) << 0.0, 1.0;
    opt.kind = LearnerKind::OffPolicyTdSchedule;
    CHECK_THROWS_AS(run(env, opt, [](const Eigen::VectorXd&) { return std::vector<double>{}; }),
                    std::invalid_argument);
}
