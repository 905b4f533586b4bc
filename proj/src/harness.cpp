#include "tdsched/harness.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>
#include <stdexcept>
#include <thread>

#include <CLI11.hpp>

namespace tdsched {

namespace {

std::string strip(const std::string& s) {
    std::size_t a = s.find_first_not_of(" \t\r\n");
    if (a == std::string::npos) return "";
    std::size_t b = s.find_last_not_of(" \t\r\n");
    return s.substr(a, b - a + 1);
}

std::vector<std::string> split_list(const std::string& s) {
    std::vector<std::string> items;
    std::stringstream ss(s);
    std::string token;
    while (std::getline(ss, token, ',')) {
        token = strip(token);
        if (!token.empty()) items.push_back(token);
    }
    return items;
}

std::string fmt(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

}  // namespace

ExperimentConfig ExperimentConfig::load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open config file " + path);

    ExperimentConfig cfg;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        std::size_t hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = strip(line);
        if (line.empty()) continue;
        std::size_t eq = line.find('=');
        if (eq == std::string::npos)
            throw std::runtime_error(path + ":" + std::to_string(line_no) + ": expected key = value");
        std::string key = strip(line.substr(0, eq));
        std::string value = strip(line.substr(eq + 1));
        try {
            if (key == "env") cfg.env = value;
            else if (key == "env_seed") cfg.env_seed = std::stoull(value);
            else if (key == "learner") cfg.learner = value;
            else if (key == "schedule") cfg.schedule = value;
            else if (key == "alpha") cfg.alpha = value;
            else if (key == "beta") cfg.beta = value;
            else if (key == "eta") cfg.eta = std::stod(value);
            else if (key == "steps") cfg.steps = std::stol(value);
            else if (key == "runs") cfg.runs = std::stoi(value);
            else if (key == "seed") cfg.seed = std::stoull(value);
            else if (key == "eval_every") cfg.eval_every = std::stol(value);
            else if (key == "metrics") cfg.metrics = split_list(value);
            else if (key == "out") cfg.out = value;
            else if (key == "episode_cap") cfg.episode_cap = std::stol(value);
            else if (key == "init") cfg.init = value;
            else throw std::runtime_error("unknown key '" + key + "'");
        } catch (const std::exception& e) {
            throw std::runtime_error(path + ":" + std::to_string(line_no) + ": " + e.what());
        }
    }
    try {
        cfg.validate();
    } catch (const std::exception& e) {
        throw std::runtime_error(path + ": " + e.what());
    }
    return cfg;
}

void ExperimentConfig::validate() const {
    if (steps < 0) throw std::invalid_argument("steps must be nonnegative");
    if (runs < 1) throw std::invalid_argument("runs must be positive");
    if (eval_every < 1) throw std::invalid_argument("eval_every must be positive");
    if (metrics.empty()) throw std::invalid_argument("at least one metric is required");
    for (const std::string& m : metrics)
        if (m != "rmse" && m != "rmspbe" && m != "theta_norm")
            throw std::invalid_argument("unknown metric '" + m + "'");
}

void RunResult::aggregate(std::vector<std::vector<double>>& mean,
                          std::vector<std::vector<double>>& se) const {
    const std::size_t points = eval_steps.size();
    const std::size_t nm = metric_names.size();
    mean.assign(points, std::vector<double>(nm, 0.0));
    se.assign(points, std::vector<double>(nm, 0.0));
    std::vector<double> column;
    for (std::size_t i = 0; i < points; ++i) {
        for (std::size_t m = 0; m < nm; ++m) {
            column.clear();
            for (const auto& series : per_run)
                if (i < series.size()) column.push_back(series[i][m]);
            if (column.empty()) continue;
            // Summing in sorted order makes the reduction a function of the
            // value multiset, so permuting run indices cannot change it.
            std::sort(column.begin(), column.end());
            double sum = 0.0;
            for (double v : column) sum += v;
            double mu = sum / static_cast<double>(column.size());
            mean[i][m] = mu;
            if (column.size() > 1) {
                double q = 0.0;
                for (double v : column) q += (v - mu) * (v - mu);
                se[i][m] = std::sqrt(q / static_cast<double>(column.size() - 1) /
                                     static_cast<double>(column.size()));
            }
        }
    }
}

namespace {

struct MetricContext {
    std::vector<std::string> names;
    FeatureMap features;
    Eigen::VectorXd v_true;
    Eigen::VectorXd d_eval;
    Abc abc;
};

EvalFn make_eval(const MetricContext& ctx) {
    return [&ctx](const Eigen::VectorXd& theta) {
        std::vector<double> out;
        out.reserve(ctx.names.size());
        for (const std::string& name : ctx.names) {
            if (name == "rmse")
                out.push_back(rmse(theta, ctx.features, ctx.v_true, ctx.d_eval));
            else if (name == "rmspbe")
                out.push_back(rmspbe(theta, ctx.abc));
            else
                out.push_back(theta.norm());
        }
        return out;
    };
}

Eigen::VectorXd initial_theta(const ExperimentConfig& cfg, const EnvBundle& env) {
    if (cfg.init.empty() || cfg.init == "env") return env.theta0;
    if (cfg.init == "zeros") return Eigen::VectorXd::Zero(env.features.dim());
    if (cfg.init.rfind("uniform(", 0) == 0 && cfg.init.back() == ')') {
        double scale = std::stod(cfg.init.substr(8, cfg.init.size() - 9));
        Rng rng(cfg.seed ^ 0x5eedf00dULL);
        Eigen::VectorXd theta(env.features.dim());
        for (int i = 0; i < theta.size(); ++i) theta(i) = rng.uniform(-scale, scale);
        return theta;
    }
    throw std::invalid_argument("unknown init spec '" + cfg.init + "'");
}

int thread_cap() {
    const char* env = std::getenv("TDSCHEDULE_THREADS");
    if (!env) return 0;
    int v = std::atoi(env);
    return v > 0 ? v : 0;
}

}  // namespace

RunResult run_experiment(const ExperimentConfig& cfg) {
    cfg.validate();
    EnvBundle env = make_env(cfg.env, cfg.env_seed);
    LambdaSchedule schedule = parse_schedule(cfg.schedule);
    LearnerKind kind = parse_learner(cfg.learner);
    if (is_off_policy(kind) && !env.has_target)
        throw std::invalid_argument(cfg.learner + " requires a target policy; environment '" +
                                    cfg.env + "' defines none");
    PolicyMode mode = is_off_policy(kind) ? PolicyMode::OffPolicy : PolicyMode::OnPolicy;

    RunOptions opt;
    opt.kind = kind;
    opt.schedule = schedule;
    opt.alpha = StepSize::parse(cfg.alpha);
    if (!cfg.beta.empty())
        opt.beta = StepSize::parse(cfg.beta);
    else if (cfg.eta > 0.0)
        opt.beta = StepSize{opt.alpha.kind, cfg.eta * opt.alpha.a, opt.alpha.b};
    else
        opt.beta = opt.alpha;
    opt.steps = cfg.steps;
    opt.eval_every = cfg.eval_every;
    opt.episode_cap = cfg.episode_cap;
    opt.theta0 = initial_theta(cfg, env);

    MetricContext ctx;
    ctx.names = cfg.metrics;
    ctx.features = env.features;
    bool needs_values = false, needs_abc = false;
    for (const std::string& m : cfg.metrics) {
        if (m == "rmse") needs_values = true;
        if (m == "rmspbe") needs_abc = true;
    }
    try {
        if (needs_values) {
            ctx.v_true = evaluated_values(env, mode);
            ctx.d_eval = sampling_weights(env);
        }
        if (needs_abc) ctx.abc = compute_abc(env, schedule, mode);
    } catch (const std::exception& e) {
        throw std::runtime_error("metric setup failed for env '" + cfg.env + "': " + e.what());
    }
    EvalFn eval = make_eval(ctx);

    RunResult result;
    result.metric_names = cfg.metrics;
    for (long t = 0; t <= cfg.steps; t += cfg.eval_every) result.eval_steps.push_back(t);
    if (!result.eval_steps.empty() && result.eval_steps[0] != 0)
        result.eval_steps.insert(result.eval_steps.begin(), 0);
    result.per_run.resize(static_cast<std::size_t>(cfg.runs));
    result.diverged.assign(static_cast<std::size_t>(cfg.runs), false);
    result.final_thetas.resize(static_cast<std::size_t>(cfg.runs));

    auto execute = [&](int r) {
        RunOptions run_opt = opt;
        run_opt.seed = cfg.seed + static_cast<std::uint64_t>(r);
        RunSeries series = run(env, run_opt, eval);
        result.per_run[static_cast<std::size_t>(r)] = series.values;
        result.diverged[static_cast<std::size_t>(r)] = series.diverged;
        result.final_thetas[static_cast<std::size_t>(r)] = series.final_theta;
    };

    const int threads = std::min<int>(thread_cap(), cfg.runs);
    if (threads > 1) {
        std::vector<std::thread> pool;
        pool.reserve(static_cast<std::size_t>(threads));
        for (int w = 0; w < threads; ++w)
            pool.emplace_back([&, w] {
                for (int r = w; r < cfg.runs; r += threads) execute(r);
            });
        for (std::thread& th : pool) th.join();
    } else {
        for (int r = 0; r < cfg.runs; ++r) execute(r);
    }
    return result;
}

void emit_csv(const RunResult& result, const std::string& path) {
    {
        std::ofstream out(path + ".runs.csv");
        if (!out) throw std::runtime_error("cannot open " + path + ".runs.csv for writing");
        out << "step,run";
        for (const std::string& m : result.metric_names) out << ',' << m;
        out << '\n';
        for (std::size_t r = 0; r < result.per_run.size(); ++r) {
            const auto& series = result.per_run[r];
            for (std::size_t i = 0; i < series.size(); ++i) {
                out << result.eval_steps[i] << ',' << r;
                for (double v : series[i]) out << ',' << fmt(v);
                out << '\n';
            }
        }
        if (!out) throw std::runtime_error("failed writing " + path + ".runs.csv");
    }
    {
        std::vector<std::vector<double>> mean, se;
        result.aggregate(mean, se);
        std::ofstream out(path + ".agg.csv");
        if (!out) throw std::runtime_error("cannot open " + path + ".agg.csv for writing");
        out << "step";
        for (const std::string& m : result.metric_names) out << ",mean_" << m << ",se_" << m;
        out << '\n';
        for (std::size_t i = 0; i < result.eval_steps.size(); ++i) {
            bool any = false;
            for (const auto& series : result.per_run)
                if (i < series.size()) any = true;
            if (!any) continue;
            out << result.eval_steps[i];
            for (std::size_t m = 0; m < result.metric_names.size(); ++m)
                out << ',' << fmt(mean[i][m]) << ',' << fmt(se[i][m]);
            out << '\n';
        }
        if (!out) throw std::runtime_error("failed writing " + path + ".agg.csv");
    }
}

namespace {

void print_matrix(std::ostream& out, const std::string& label, const Eigen::MatrixXd& m) {
    out << label << " (" << m.rows() << "x" << m.cols() << "):\n";
    for (int i = 0; i < m.rows(); ++i) {
        out << " ";
        for (int j = 0; j < m.cols(); ++j) out << ' ' << fmt(m(i, j));
        out << '\n';
    }
}

void print_vector(std::ostream& out, const std::string& label, const Eigen::VectorXd& v) {
    out << label << ":";
    for (int i = 0; i < v.size(); ++i) out << ' ' << fmt(v(i));
    out << '\n';
}

int cmd_gen(const std::string& env_name, std::uint64_t seed, const std::string& out_path) {
    EnvBundle env = make_env(env_name, seed);
    save_env(env, out_path);
    std::cout << "wrote " << env.name << " (" << env.mdp.n << " states, " << env.mdp.actions
              << " actions) to " << out_path << "\n";
    return 0;
}

int cmd_solve(const std::string& env_name, std::uint64_t seed, const std::string& schedule_spec,
              const std::string& mode_name, double eta, const std::string& out_path) {
    EnvBundle env = make_env(env_name, seed);
    LambdaSchedule schedule = parse_schedule(schedule_spec);
    PolicyMode mode;
    if (mode_name == "on") mode = PolicyMode::OnPolicy;
    else if (mode_name == "off") mode = PolicyMode::OffPolicy;
    else throw std::invalid_argument("mode must be 'on' or 'off'");

    FixedPointReport report = fixed_point_report(env, schedule, mode);
    std::ostream& out = std::cout;
    out << "env: " << env.name << "  schedule: " << format_schedule(schedule) << "  mode: "
        << mode_name << "\n";
    print_matrix(out, "A", report.abc.A);
    print_vector(out, "b", report.abc.b);
    print_matrix(out, "C", report.abc.C);
    if (report.theta_star)
        print_vector(out, "theta*", *report.theta_star);
    else
        out << "theta*: unavailable (A singular or ill-conditioned)\n";
    out << "A negative definite: " << (report.A_negative_definite ? "yes" : "no")
        << "  (max eig of sym part = " << fmt(report.max_sym_eig_A) << ")\n";
    out << "C positive definite: " << (report.C_positive_definite ? "yes" : "no")
        << "  (min eig = " << fmt(report.min_eig_C) << ")\n";
    out << "rmse(theta=0): " << fmt(report.rmse_at_zero) << "\n";
    out << "rmspbe(theta=0): " << fmt(report.rmspbe_at_zero) << "\n";
    if (eta > 0.0) {
        GtdBlockReport g = gtd_block_matrix(report.abc, eta);
        out << "G (eta=" << fmt(eta) << ") negative definite: "
            << (g.negative_definite ? "yes" : "no") << "  (max Re eig = " << fmt(g.max_real_eig)
            << ", max eig of sym part = " << fmt(g.max_sym_eig) << ")\n";
        if (g.w_star.size()) {
            print_vector(out, "w*", g.w_star);
            print_vector(out, "theta* (block solve)", g.theta_star);
        } else {
            out << "block fixed point: unavailable (G singular)\n";
        }
    }
    if (!out_path.empty()) {
        std::ofstream file(out_path);
        if (!file) throw std::runtime_error("cannot open " + out_path + " for writing");
        print_matrix(file, "A", report.abc.A);
        print_vector(file, "b", report.abc.b);
        print_matrix(file, "C", report.abc.C);
        if (report.theta_star) print_vector(file, "theta_star", *report.theta_star);
        file << "max_sym_eig_A " << fmt(report.max_sym_eig_A) << '\n';
        file << "min_eig_C " << fmt(report.min_eig_C) << '\n';
    }
    return 0;
}

int cmd_check(const std::string& env_name, std::uint64_t seed, const std::string& schedule_spec) {
    EnvBundle env = make_env(env_name, seed);
    LambdaSchedule schedule = parse_schedule(schedule_spec);
    std::ostream& out = std::cout;
    out << "env: " << env.name << "  schedule: " << format_schedule(schedule) << "\n";

    for (int a = 0; a < env.mdp.actions; ++a) {
        double worst = 0.0;
        for (int s = 0; s < env.mdp.n; ++s)
            worst = std::max(worst,
                             std::abs(env.mdp.P[static_cast<std::size_t>(a)].row(s).sum() - 1.0));
        out << "transitions[" << a << "] row-stochastic: max |row sum - 1| = " << fmt(worst)
            << "\n";
    }

    Eigen::VectorXd d = sampling_weights(env);
    Eigen::MatrixXd P_sample = policy_matrix(env.mdp, env.behavior);
    for (int s : env.mdp.absorbing) P_sample.row(s) = env.start.transpose();
    out << "stationary residual ||d^T P - d^T||_inf = "
        << fmt((P_sample.transpose() * d - d).lpNorm<Eigen::Infinity>()) << "\n";

    Eigen::VectorXd v = evaluated_values(env, PolicyMode::OnPolicy);
    Eigen::MatrixXd Ppi = policy_matrix(env.mdp, env.behavior);
    Eigen::VectorXd bellman =
        v - (expected_reward(env.mdp, env.behavior) + env.mdp.gamma * Ppi * v);
    out << "Bellman residual ||V - (r + gamma P V)||_inf = "
        << fmt(bellman.lpNorm<Eigen::Infinity>()) << "\n";

    auto report_mode = [&](PolicyMode mode, const std::string& label) {
        FixedPointReport report = fixed_point_report(env, schedule, mode);
        out << label << ": A negative definite: " << (report.A_negative_definite ? "yes" : "no")
            << " (max sym eig " << fmt(report.max_sym_eig_A) << "); C positive definite: "
            << (report.C_positive_definite ? "yes" : "no") << " (min eig "
            << fmt(report.min_eig_C) << ")";
        GtdBlockReport g = gtd_block_matrix(report.abc, 1.0);
        out << "; G(eta=1) negative definite: " << (g.negative_definite ? "yes" : "no")
            << " (max Re eig " << fmt(g.max_real_eig) << ")\n";
    };
    report_mode(PolicyMode::OnPolicy, "on-policy");
    if (env.has_target) report_mode(PolicyMode::OffPolicy, "off-policy");
    return 0;
}

int cmd_run(const std::string& config_path) {
    ExperimentConfig cfg = ExperimentConfig::load(config_path);
    RunResult result = run_experiment(cfg);
    int diverged = 0;
    for (bool flag : result.diverged)
        if (flag) ++diverged;
    std::vector<std::vector<double>> mean, se;
    result.aggregate(mean, se);
    std::cout << "runs: " << result.per_run.size() << "  diverged: " << diverged << "\n";
    if (!mean.empty()) {
        std::cout << "final aggregates (step " << result.eval_steps[mean.size() - 1] << "):";
        for (std::size_t m = 0; m < result.metric_names.size(); ++m)
            std::cout << "  " << result.metric_names[m] << " = "
                      << fmt(mean[mean.size() - 1][m]) << " +/- " << fmt(se[mean.size() - 1][m]);
        std::cout << "\n";
    }
    if (!cfg.out.empty()) {
        emit_csv(result, cfg.out);
        std::cout << "wrote " << cfg.out << ".runs.csv and " << cfg.out << ".agg.csv\n";
    }
    return 0;
}

}  // namespace

int cli_main(int argc, const char* const* argv) {
    CLI::App app{"lambda-schedule temporal-difference learners, exact fixed-point solver, and "
                 "experiment harness"};
    app.require_subcommand(1);

    std::string run_config;
    CLI::App* run_cmd = app.add_subcommand("run", "execute an experiment from a config file");
    run_cmd->add_option("--config", run_config, "experiment config path")->required();

    std::string solve_env = "random_chain", solve_schedule = "[0]", solve_mode = "on",
                solve_out;
    std::uint64_t solve_seed = 0;
    double solve_eta = 0.0;
    CLI::App* solve_cmd =
        app.add_subcommand("solve", "print A, b, C, theta*, and eigenvalue certificates");
    solve_cmd->add_option("--env", solve_env, "environment name or file");
    solve_cmd->add_option("--seed", solve_seed, "generator seed");
    solve_cmd->add_option("--schedule", solve_schedule, "lambda-schedule spec");
    solve_cmd->add_option("--mode", solve_mode, "on or off");
    solve_cmd->add_option("--eta", solve_eta, "also report the GTD block matrix for this eta");
    solve_cmd->add_option("--out", solve_out, "optional machine-readable output file");

    std::string check_env = "random_chain", check_schedule = "equal_weights(2,4)";
    std::uint64_t check_seed = 0;
    CLI::App* check_cmd =
        app.add_subcommand("check", "run the invariant and certificate suite on an environment");
    check_cmd->add_option("--env", check_env, "environment name or file");
    check_cmd->add_option("--seed", check_seed, "generator seed");
    check_cmd->add_option("--schedule", check_schedule, "lambda-schedule spec");

    std::string gen_env, gen_out;
    std::uint64_t gen_seed = 0;
    CLI::App* gen_cmd = app.add_subcommand("gen", "write a generated environment to a file");
    gen_cmd->add_option("--env", gen_env, "generator name")->required();
    gen_cmd->add_option("--seed", gen_seed, "generator seed");
    gen_cmd->add_option("--out", gen_out, "output path")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    }

    try {
        if (*run_cmd) return cmd_run(run_config);
        if (*solve_cmd)
            return cmd_solve(solve_env, solve_seed, solve_schedule, solve_mode, solve_eta,
                             solve_out);
        if (*check_cmd) return cmd_check(check_env, check_seed, check_schedule);
        if (*gen_cmd) return cmd_gen(gen_env, gen_seed, gen_out);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 1;
}

}  // namespace tdsched
