// Acceptance report: one PASS/FAIL line per criterion; exits nonzero if any criterion fails.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <iostream>
#include <string>
#include <vector>

#include "gradlab/desk.hpp"
#include "recurrence_oracle.hpp"
#include "test_support.hpp"

using namespace gradlab;
using namespace gradlab::testing;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t) { return std::chrono::duration<double>(Clock::now() - t).count(); }

std::string fixed(double v, int digits = 2) { return detail::fixed(v, digits); }

CriterionResult reduction_lattice()
{
    const Network net = random_mlp({64, 32, 16, 4}, 8);
    int identities = 0, holding = 0;
    double slowest = 0.0;
    for (int example = 0; example < 5; ++example) {
        const Tensor x = random_input(64, 100 + example);
        const int y = example % 4;
        auto run = [&](Method m, auto tweak) {
            NetworkObjective obj(net, y);
            AttackConfig cfg = default_config(m);
            cfg.eps = 0.1;
            cfg.seed = 77 + example;
            tweak(cfg);
            return run_attack(obj, x, cfg).x_adv;
        };
        auto none = [](AttackConfig&) {};
        auto mu0 = [](AttackConfig& c) { c.decay1 = 0.0; };
        auto beta0 = [](AttackConfig& c) { c.beta = 0.0; };
        auto beta0_mu2 = [](AttackConfig& c) {
            c.beta = 0.0;
            c.decay2 = default_config(Method::Vdta).decay2;
        };
        auto k1 = [](AttackConfig& c) {
            c.inner_steps = 1;
            c.decay2 = 0.0;
        };
        auto check = [&](bool same) {
            ++identities;
            holding += same;
        };
        auto timed = [&](auto&& body) {
            const auto t0 = Clock::now();
            body();
            slowest = std::max(slowest, seconds_since(t0));
        };
        timed([&] { check(run(Method::MiFgsm, mu0) == run(Method::IFgsm, none)); });
        timed([&] { check(run(Method::NiFgsm, mu0) == run(Method::IFgsm, none)); });
        timed([&] { check(run(Method::VmiFgsm, beta0) == run(Method::MiFgsm, none)); });
        timed([&] { check(run(Method::VniFgsm, beta0) == run(Method::NiFgsm, none)); });
        timed([&] { check(run(Method::Dta, k1) == run(Method::NiFgsm, none)); });
        timed([&] { check(run(Method::Vdta, k1) == run(Method::VniFgsm, none)); });
        timed([&] { check(run(Method::Vdta, beta0) == run(Method::Dta, beta0_mu2)); });
    }
    return {1, "reduction lattice", holding == identities && slowest < 1.0,
            std::to_string(holding) + "/" + std::to_string(identities) + " bit-exact; slowest " + fixed(slowest, 3) +
                "s"};
}

CriterionResult gradient_correctness()
{
    const auto t0 = Clock::now();
    const GradCheck a = gradient_check({16, 12, 8, 4}, 50, 21);
    const GradCheck b = gradient_check({64, 32, 16, 10}, 50, 22);
    const double worst = std::max(a.worst(), b.worst());
    const double t = seconds_since(t0);
    return {2, "gradient correctness", worst <= 1e-4 && t < 30.0,
            std::to_string(a.probes + b.probes) + " probes; max relative error " + fixed(worst * 1e6, 4) +
                "e-6 (input " + fixed(std::max(a.input_ce, b.input_ce) * 1e6, 4) + "e-6, fia " +
                fixed(std::max(a.input_fia, b.input_fia) * 1e6, 4) + "e-6, feature " +
                fixed(std::max(a.feature, b.feature) * 1e6, 4) + "e-6); " + fixed(t, 2) + "s"};
}

double oracle_error(const Quadratic2& q, const oracle::Params& p, Method m)
{
    const oracle::V2 start{0.45, 0.55};
    AttackConfig cfg;
    cfg.method = m;
    cfg.eps = p.eps;
    cfg.step_len = p.alpha;
    cfg.steps = p.steps;
    cfg.decay1 = p.mu1;
    cfg.decay2 = p.mu2;
    cfg.inner_steps = p.inner;
    cfg.beta = p.beta;
    cfg.variance_samples = p.samples;
    cfg.seed = p.seed;
    QuadraticObjective obj{q};
    const auto res = run_attack(obj, Tensor::vector({start[0], start[1]}), cfg);
    oracle::Replay replay(q, p);
    const auto path = replay.direction_tuning(start, m == Method::Vdta);
    if (path.size() != res.trace.steps.size()) return INFINITY;
    double worst = 0.0;
    for (std::size_t t = 0; t < path.size(); ++t)
        for (std::size_t j = 0; j < 2; ++j) {
            worst = std::max(worst, std::abs(res.trace.steps[t].x_adv[j] - path[t].x[j]));
            worst = std::max(worst, std::abs(res.trace.steps[t].g[j] - path[t].g[j]));
        }
    return worst;
}

CriterionResult recurrence_oracles()
{
    const auto t0 = Clock::now();
    double worst = 0.0;
    for (const Quadratic2& q : {saddle_quadratic(), Quadratic2{{2.0, 0.3, 0.3, 1.0}, {-1.0, 0.5}}}) {
        oracle::Params p;
        p.steps = 5;
        p.inner = 3;
        p.mu2 = 0.8;
        worst = std::max(worst, oracle_error(q, p, Method::Dta));
        p.seed = 3;
        p.samples = 4;
        p.beta = 1.5;
        worst = std::max(worst, oracle_error(q, p, Method::Vdta));
    }
    const double t = seconds_since(t0);
    return {3, "recurrence oracles", worst <= 1e-12 && t < 1.0,
            "max componentwise deviation " + fixed(worst * 1e15, 3) + "e-15; " + fixed(t, 3) + "s"};
}

CriterionResult call_accounting()
{
    const auto t0 = Clock::now();
    const Network net = random_mlp({64, 32, 16, 4}, 9);
    const Tensor x = random_input(64, 10);
    auto calls = [&](Method m) {
        NetworkObjective obj(net, 1);
        AttackConfig cfg = default_config(m);
        cfg.eps = 0.05;
        return run_attack(obj, x, cfg).trace.grad_calls();
    };
    const AttackConfig d = default_config(Method::Vdta);
    const long T = d.steps, K = d.inner_steps, N = d.variance_samples;
    bool ok = calls(Method::Dta) == K * T;
    for (Method m : {Method::IFgsm, Method::MiFgsm, Method::NiFgsm}) ok = ok && calls(m) == T;
    for (Method m : {Method::VmiFgsm, Method::VniFgsm}) ok = ok && calls(m) == T * (N + 1);
    const long vdta = calls(Method::Vdta);
    ok = ok && vdta == K * T * (N + 1);
    const double t = seconds_since(t0);
    return {4, "gradient-call accounting", ok && t < 10.0,
            "dta=" + std::to_string(calls(Method::Dta)) + " i/mi/ni=" + std::to_string(T) +
                " vmi/vni=" + std::to_string(calls(Method::VmiFgsm)) + " vdta=" + std::to_string(vdta) +
                " = K*T*(N+1); the published counts 2000 and 2200 both differ"};
}

CriterionResult monotone_speed(const PoolContext& pool)
{
    const auto t0 = Clock::now();
    const Network& net = pool.members.front().net;
    Rng rng(derive_seed(pool.seed, "steepest"));
    const std::vector<double> alphas{0.01, 0.02, 0.05, 0.1, 0.2};
    int monotone = 0;
    const int points = 50;
    for (int i = 0; i < points; ++i) {
        const Tensor x = pool.eval.image(static_cast<std::size_t>(i));
        const int y = pool.eval.labels[static_cast<std::size_t>(i)];
        const auto v = steepest_speed_sweep([&](const Tensor& p) { return loss_value(net, p, y); }, x, alphas, 20, rng);
        monotone += std::is_sorted(v.begin(), v.end());
    }
    const double t = seconds_since(t0);
    return {8, "steepest-speed monotonicity", monotone == points && t < 30.0,
            std::to_string(monotone) + "/" + std::to_string(points) + " points non-decreasing; " + fixed(t, 2) + "s"};
}

} // namespace

int main()
{
    std::vector<CriterionResult> results;
    try {
        results.push_back(reduction_lattice());
        results.push_back(gradient_correctness());
        results.push_back(recurrence_oracles());
        results.push_back(call_accounting());

        const DeskPreset preset;
        ContainmentAudit audit;
        const auto t0 = Clock::now();
        const auto pools = build_desk_pools(preset);
        const double training = seconds_since(t0);
        TransferSuite suite = run_transfer_suite(pools, desk_attacks(preset), audit, preset.threads);
        suite.seconds += training;

        const auto alpha = run_alpha_sweep(pools, preset, audit);
        const auto sensitivity = run_sensitivity(pools, preset, audit);

        results.push_back(transfer_ordering(suite, pools.size(), 900.0));
        results.push_back(pruning_effect(suite));
        results.push_back(alignment_ordering(suite));
        results.push_back(monotone_speed(pools.front()));
        results.push_back(step_length_trend(alpha, preset.eps));
        results.push_back(oscillation_inequality(suite.direction));
        results.push_back(containment(audit));
        results.push_back(sensitivity_anchors(sensitivity, suite));

        std::sort(results.begin(), results.end(), [](const auto& a, const auto& b) { return a.id < b.id; });
        write_criteria(results, std::cout);
        std::cout << '\n';
        write_suite_summary(suite, std::cout);
        std::cout << '\n';
        write_sweep_csv(alpha, std::cout);
        write_sweep_csv(sensitivity, std::cout);
    } catch (const std::exception& e) {
        write_criteria(results, std::cout);
        std::cout << "FAIL acceptance run aborted: " << e.what() << '\n';
        return 1;
    }
    for (const auto& r : results)
        if (!r.pass) return 1;
    return 0;
}
