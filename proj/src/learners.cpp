#include "tdsched/learners.hpp"

#include "tdsched/returns.hpp"

#include <cstdio>
#include <stdexcept>

namespace tdsched {

TraceBuffer::TraceBuffer(int truncation, int dim) : dim_(dim) {
    if (truncation < 1 || dim < 1) throw std::invalid_argument("trace buffer needs L >= 1, d >= 1");
    ring_.assign(static_cast<std::size_t>(truncation) + 1, Eigen::VectorXd::Zero(dim));
    rhos_.assign(static_cast<std::size_t>(truncation) + 1, 1.0);
}

void TraceBuffer::push(const Eigen::VectorXd& phi, double rho) {
    if (phi.size() != dim_) throw std::invalid_argument("feature dimension mismatch");
    head_ = (head_ + 1) % capacity();
    ring_[static_cast<std::size_t>(head_)] = phi;
    rhos_[static_cast<std::size_t>(head_)] = rho;
    if (size_ < capacity()) ++size_;
}

void TraceBuffer::clear() {
    head_ = -1;
    size_ = 0;
}

const Eigen::VectorXd& TraceBuffer::phi(int lag) const {
    if (lag < 0 || lag >= size_) throw std::out_of_range("trace buffer lag");
    int idx = (head_ - lag + capacity()) % capacity();
    return ring_[static_cast<std::size_t>(idx)];
}

double TraceBuffer::rho(int lag) const {
    if (lag < 0 || lag >= size_) throw std::out_of_range("trace buffer lag");
    int idx = (head_ - lag + capacity()) % capacity();
    return rhos_[static_cast<std::size_t>(idx)];
}

Eigen::VectorXd compute_trace(const TraceBuffer& buffer, const LambdaSchedule& schedule,
                              double gamma, TraceMode mode) {
    if (buffer.size() == 0) throw std::invalid_argument("trace of an empty buffer");
    Eigen::VectorXd z = Eigen::VectorXd::Zero(buffer.dim());
    double coef = mode == TraceMode::OffPolicy ? buffer.rho(0) : 1.0;
    for (int k = 0; k < buffer.size(); ++k) {
        if (coef == 0.0) break;
        z += coef * buffer.phi(k);
        if (k + 1 < buffer.size()) {
            coef *= gamma * schedule.value(k + 1);
            if (mode == TraceMode::OffPolicy) coef *= buffer.rho(k + 1);
        }
    }
    return z;
}

StepSize StepSize::constant(double value) {
    if (!(value > 0.0)) throw std::invalid_argument("step size must be positive");
    return StepSize{Kind::Constant, value, 0.0};
}

StepSize StepSize::harmonic(double a, double b) {
    if (!(a > 0.0) || !(b > 0.0)) throw std::invalid_argument("harmonic step size needs a, b > 0");
    return StepSize{Kind::Harmonic, a, b};
}

StepSize StepSize::parse(const std::string& spec) {
    auto args_of = [&](std::size_t prefix_len) {
        if (spec.back() != ')') throw std::invalid_argument("malformed step-size spec: " + spec);
        return spec.substr(prefix_len, spec.size() - prefix_len - 1);
    };
    if (spec.rfind("const(", 0) == 0) return constant(std::stod(args_of(6)));
    if (spec.rfind("harmonic(", 0) == 0) {
        std::string args = args_of(9);
        std::size_t comma = args.find(',');
        if (comma == std::string::npos)
            throw std::invalid_argument("harmonic step size needs two arguments: " + spec);
        return harmonic(std::stod(args.substr(0, comma)), std::stod(args.substr(comma + 1)));
    }
    throw std::invalid_argument("unknown step-size spec: " + spec);
}

std::string StepSize::format() const {
    char buf[64];
    if (kind == Kind::Constant)
        std::snprintf(buf, sizeof(buf), "const(%.17g)", a);
    else
        std::snprintf(buf, sizeof(buf), "harmonic(%.17g,%.17g)", a, b);
    return buf;
}

void td_schedule_step(LearnerState& state, const TraceBuffer& buffer, const Transition& tr,
                      const LambdaSchedule& schedule, double gamma) {
    double delta = td_error(state.theta, tr.phi_t, tr.phi_next, tr.reward, gamma);
    Eigen::VectorXd z = compute_trace(buffer, schedule, gamma, TraceMode::OnPolicy);
    state.theta += state.alpha.at(state.t) * delta * z;
    ++state.t;
}

void off_policy_td_step(LearnerState& state, const TraceBuffer& buffer, const Transition& tr,
                        double rho_t, const LambdaSchedule& schedule, double gamma) {
    (void)rho_t;  // already carried by the newest buffer entry
    double delta = td_error(state.theta, tr.phi_t, tr.phi_next, tr.reward, gamma);
    Eigen::VectorXd z = compute_trace(buffer, schedule, gamma, TraceMode::OffPolicy);
    state.theta += state.alpha.at(state.t) * delta * z;
    ++state.t;
}

void gtd_step(LearnerState& state, const TraceBuffer& buffer, const Transition& tr, double rho_t,
              const LambdaSchedule& schedule, double gamma) {
    (void)rho_t;
    double delta = td_error(state.theta, tr.phi_t, tr.phi_next, tr.reward, gamma);
    Eigen::VectorXd z = compute_trace(buffer, schedule, gamma, TraceMode::OffPolicy);
    const double zw = z.dot(state.w);
    const double pw = tr.phi_t.dot(state.w);
    Eigen::VectorXd theta_next =
        state.theta + state.alpha.at(state.t) * (tr.phi_t - gamma * tr.phi_next) * zw;
    Eigen::VectorXd w_next = state.w + state.beta.at(state.t) * (delta * z - pw * tr.phi_t);
    state.theta = std::move(theta_next);
    state.w = std::move(w_next);
    ++state.t;
}

void tdc_step(LearnerState& state, const TraceBuffer& buffer, const Transition& tr, double rho_t,
              const LambdaSchedule& schedule, double gamma) {
    (void)rho_t;
    double delta = td_error(state.theta, tr.phi_t, tr.phi_next, tr.reward, gamma);
    Eigen::VectorXd z = compute_trace(buffer, schedule, gamma, TraceMode::OffPolicy);
    const double zw = z.dot(state.w);
    const double pw = tr.phi_t.dot(state.w);
    Eigen::VectorXd theta_next =
        state.theta + state.alpha.at(state.t) * (delta * z - (gamma * tr.phi_next - tr.phi_t) * zw -
                                                 pw * tr.phi_t);
    Eigen::VectorXd w_next = state.w + state.beta.at(state.t) * (delta * z - pw * tr.phi_t);
    state.theta = std::move(theta_next);
    state.w = std::move(w_next);
    ++state.t;
}

LearnerKind parse_learner(const std::string& name) {
    if (name == "td_schedule") return LearnerKind::TdSchedule;
    if (name == "offpolicy_td_schedule") return LearnerKind::OffPolicyTdSchedule;
    if (name == "gtd_schedule") return LearnerKind::GtdSchedule;
    if (name == "tdc_schedule") return LearnerKind::TdcSchedule;
    throw std::invalid_argument("unknown learner kind: " + name);
}

std::string learner_name(LearnerKind kind) {
    switch (kind) {
        case LearnerKind::TdSchedule: return "td_schedule";
        case LearnerKind::OffPolicyTdSchedule: return "offpolicy_td_schedule";
        case LearnerKind::GtdSchedule: return "gtd_schedule";
        case LearnerKind::TdcSchedule: return "tdc_schedule";
    }
    throw std::logic_error("unreachable");
}

bool is_off_policy(LearnerKind kind) { return kind != LearnerKind::TdSchedule; }

namespace {

void check_coverage(const EnvBundle& env) {
    for (int s = 0; s < env.mdp.n; ++s)
        for (int a = 0; a < env.mdp.actions; ++a)
            if (env.target.probs(s, a) > 0.0 && env.behavior.probs(s, a) <= 0.0)
                throw std::invalid_argument(
                    "target policy not covered by the behavior policy (rho would be infinite)");
}

}  // namespace

RunSeries run(const EnvBundle& env, const RunOptions& opt, const EvalFn& eval) {
    if (opt.steps < 0) throw std::invalid_argument("negative step budget");
    if (opt.eval_every < 1) throw std::invalid_argument("eval_every must be positive");
    const bool off = is_off_policy(opt.kind);
    if (off && !env.has_target)
        throw std::invalid_argument(learner_name(opt.kind) + " requires a target policy");
    if (off) check_coverage(env);

    const int d = env.features.dim();
    LearnerState state;
    state.theta = opt.theta0.size() ? opt.theta0 : env.theta0;
    state.w = opt.w0.size() ? opt.w0 : Eigen::VectorXd::Zero(d);
    if (state.theta.size() != d || state.w.size() != d)
        throw std::invalid_argument("initial parameter dimension mismatch");
    state.alpha = opt.alpha;
    state.beta = opt.beta;

    Rng rng(opt.seed);
    TraceBuffer buffer(opt.schedule.truncation(), d);
    const Eigen::VectorXd zero_phi = Eigen::VectorXd::Zero(d);

    RunSeries series;
    series.eval_steps.push_back(0);
    series.values.push_back(eval(state.theta));

    int s = rng.categorical(env.start);
    long episode_steps = 0;
    for (long t = 1; t <= opt.steps; ++t) {
        Step step = sample_step(env.mdp, env.behavior, s, rng);
        double rho = 1.0;
        if (off) {
            double mu = env.behavior.probs(s, step.action);
            rho = env.target.probs(s, step.action) / mu;
        }
        const Eigen::VectorXd phi_t = env.features.row(s);
        const bool next_absorbing = env.mdp.is_absorbing(step.next);
        const Eigen::VectorXd phi_next = next_absorbing ? zero_phi : env.features.row(step.next);
        buffer.push(phi_t, rho);
        Transition tr{phi_t, phi_next, step.reward};
        switch (opt.kind) {
            case LearnerKind::TdSchedule:
                td_schedule_step(state, buffer, tr, opt.schedule, env.mdp.gamma);
                break;
            case LearnerKind::OffPolicyTdSchedule:
                off_policy_td_step(state, buffer, tr, rho, opt.schedule, env.mdp.gamma);
                break;
            case LearnerKind::GtdSchedule:
                gtd_step(state, buffer, tr, rho, opt.schedule, env.mdp.gamma);
                break;
            case LearnerKind::TdcSchedule:
                tdc_step(state, buffer, tr, rho, opt.schedule, env.mdp.gamma);
                break;
        }

        if (!state.theta.allFinite() || state.theta.norm() > opt.divergence_norm) {
            series.diverged = true;
            break;
        }

        ++episode_steps;
        if (next_absorbing || (opt.episode_cap > 0 && episode_steps >= opt.episode_cap)) {
            buffer.clear();
            s = rng.categorical(env.start);
            episode_steps = 0;
        } else {
            s = step.next;
        }

        if (t % opt.eval_every == 0) {
            series.eval_steps.push_back(t);
            series.values.push_back(eval(state.theta));
        }
    }

    series.final_theta = state.theta;
    return series;
}

}  // namespace tdsched
