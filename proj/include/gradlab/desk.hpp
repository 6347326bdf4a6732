#ifndef GRADLAB_DESK_HPP
#define GRADLAB_DESK_HPP

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <iomanip>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "gradlab/evalkit.hpp"

namespace gradlab {

// Frozen desk-scale reproduction settings. Every suite derives its randomness from seed.
struct DeskPreset {
    std::uint64_t seed = 2024;
    int pools = 5;
    std::size_t train_size = 6000;
    std::size_t eval_size = 200;
    std::size_t side = 16;
    int classes = 4;
    BlobOptions blobs{3, 3, 0.12, 1.5, 0.08, 0.6};
    TrainConfig train{{64, 32}, 15, 32, 0.02, 0.9, 1};
    int member_seeds = 2;
    std::vector<std::vector<std::size_t>> widths{{64, 32}, {128, 64}};
    double eps = 0.03;
    int variance_samples = 20;
    double prune_rate = 0.9;
    std::vector<double> alpha_divisors{100, 40, 20, 10};
    std::vector<double> k_grid{1, 2, 4, 6, 8, 10};
    std::vector<double> mu2_grid{0.0, 0.2, 0.4, 0.6, 0.8, 1.0};
    std::vector<double> gamma_grid{0.0, 0.3, 0.6, 0.9};
    unsigned threads = 0;

    void validate() const
    {
        if (pools < 1) throw Error("desk preset needs at least one pool");
        if (eval_size == 0 || train_size == 0) throw Error("desk preset needs train and eval examples");
        if (member_seeds * static_cast<int>(widths.size()) < 2) throw Error("desk pools need at least two members");
        if (!(eps > 0.0)) throw Error("eps must be positive");
        train.validate();
    }
};

inline PoolContext build_desk_pool(const DeskPreset& p, int index)
{
    const std::uint64_t pool_seed = derive_seed(p.seed, "pool/" + std::to_string(index));
    Rng rng(derive_seed(pool_seed, "data"));
    const Dataset all = synth_blobs(rng, p.train_size + p.eval_size, p.classes, p.side, p.side, p.blobs);
    std::vector<std::uint64_t> seeds;
    for (int s = 0; s < p.member_seeds; ++s) seeds.push_back(static_cast<std::uint64_t>(index * 100 + s + 1));
    PoolContext ctx;
    ctx.eval = all.slice(p.train_size, p.train_size + p.eval_size);
    ctx.members = train_pool(p.train, seeds, p.widths, all.slice(0, p.train_size), ctx.eval, kPoolAccuracyFloor,
                             p.threads);
    ctx.seed = pool_seed;
    return ctx;
}

inline std::vector<PoolContext> build_desk_pools(const DeskPreset& p)
{
    p.validate();
    std::vector<PoolContext> pools;
    for (int i = 1; i <= p.pools; ++i) pools.push_back(build_desk_pool(p, i));
    return pools;
}

inline AttackSpec desk_spec(const DeskPreset& p, Method m)
{
    AttackSpec s;
    s.attack = default_config(m);
    s.attack.eps = p.eps;
    s.attack.variance_samples = p.variance_samples;
    return s;
}

inline AttackSpec desk_pruned_spec(const DeskPreset& p)
{
    AttackSpec s = desk_spec(p, Method::Dta);
    s.name = "dta_np";
    s.prune_rate = p.prune_rate;
    return s;
}

inline std::vector<AttackSpec> desk_attacks(const DeskPreset& p)
{
    std::vector<AttackSpec> out;
    for (Method m : {Method::IFgsm, Method::MiFgsm, Method::NiFgsm, Method::VmiFgsm, Method::VniFgsm, Method::Dta,
                     Method::Vdta})
        out.push_back(desk_spec(p, m));
    out.push_back(desk_pruned_spec(p));
    return out;
}

inline std::vector<AttackSpec> alignment_attacks(const DeskPreset& p)
{
    std::vector<AttackSpec> out;
    for (Method m : {Method::IFgsm, Method::MiFgsm, Method::NiFgsm, Method::Dta}) out.push_back(desk_spec(p, m));
    return out;
}

// Checks every crafted example against its clean input.
struct ContainmentAudit {
    long examples = 0;
    long violations = 0;
    double worst_excess = 0.0;

    void check(const AttackSpec& spec, const Dataset& data, const CraftedBatch& batch)
    {
        for (std::size_t i = 0; i < batch.adv.size(); ++i) {
            const Tensor x = data.image(i);
            const Tensor& a = batch.adv[i];
            double excess = linf_distance(a, x) - spec.attack.eps;
            for (double v : a) excess = std::max({excess, -v, v - 1.0});
            worst_excess = std::max(worst_excess, excess);
            if (excess > 1e-12) ++violations;
            ++examples;
        }
    }

    BatchHook hook()
    {
        return [this](const AttackSpec& s, const Dataset& d, const CraftedBatch& b) { check(s, d, b); };
    }
};

struct AttackSummary {
    std::string attack;
    std::vector<double> asr;  // mean transfer ASR per pool
    std::vector<double> nu;   // mean alignment per pool
    long grad_calls = 0;      // summed over pools and examples
    long prune_calls = 0;

    static double average(const std::vector<double>& v)
    {
        double s = 0.0;
        for (double x : v) s += x;
        return v.empty() ? 0.0 : s / static_cast<double>(v.size());
    }
    double mean_asr() const { return average(asr); }
    double mean_nu() const { return average(nu); }
};

struct TransferSuite {
    std::vector<std::vector<TransferReport>> reports; // per pool
    std::vector<AttackSummary> attacks;
    DirectionReport direction; // over every direction-tuning run
    double seconds = 0.0;

    const AttackSummary& find(const std::string& name) const
    {
        for (const auto& a : attacks)
            if (a.attack == name) return a;
        throw Error("no attack named " + name + " in the suite");
    }
};

// Crafts with the same seeds as transfer_matrix, keeping traces for alignment and direction checks.
inline TransferSuite run_transfer_suite(const std::vector<PoolContext>& pools, const std::vector<AttackSpec>& attacks,
                                        ContainmentAudit& audit, unsigned threads = 0)
{
    const auto start = std::chrono::steady_clock::now();
    TransferSuite suite;
    for (const auto& spec : attacks) suite.attacks.push_back({spec.label(), {}, {}, 0, 0});
    for (const auto& pool : pools) {
        auto& reports = suite.reports.emplace_back();
        for (std::size_t a = 0; a < attacks.size(); ++a) {
            const AttackSpec& spec = attacks[a];
            AttackSummary& summary = suite.attacks[a];
            std::vector<TransferReport> per_surrogate;
            double nu = 0.0;
            int nu_terms = 0;
            for (std::size_t s : pool.surrogates) {
                const std::uint64_t run_seed = derive_seed(pool.seed, "craft/" + pool.members[s].name);
                const auto batch = craft(pool.members[s].net, pool.eval, spec, run_seed, true, threads);
                audit.check(spec, pool.eval, batch);
                summary.grad_calls += batch.grad_calls;
                summary.prune_calls += batch.prune_calls;
                for (const auto& trace : batch.traces)
                    if (!trace.steps.empty() && !trace.steps.front().inner_g.empty())
                        suite.direction += direction_diagnostics(trace);
                for (std::size_t v = 0; v < pool.members.size(); ++v) {
                    if (v == s) continue;
                    nu += alignment_nu(batch.traces, pool.members[v].net, pool.eval.labels);
                    ++nu_terms;
                }
                per_surrogate.push_back(evaluate_transfer(pool.members, s, spec, pool.eval, batch, pool.seed));
            }
            summary.asr.push_back(mean_transfer(per_surrogate));
            summary.nu.push_back(nu_terms ? nu / nu_terms : 0.0);
            reports.insert(reports.end(), per_surrogate.begin(), per_surrogate.end());
        }
    }
    suite.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return suite;
}

inline std::vector<SweepCurve> run_alpha_sweep(const std::vector<PoolContext>& pools, const DeskPreset& p,
                                               ContainmentAudit& audit)
{
    std::vector<double> alphas;
    for (double d : p.alpha_divisors) alphas.push_back(p.eps / d);
    std::sort(alphas.begin(), alphas.end());
    return step_length_sweep(pools, {desk_spec(p, Method::MiFgsm), desk_spec(p, Method::NiFgsm)}, alphas, p.threads,
                             audit.hook());
}

inline std::vector<SweepCurve> run_sensitivity(const std::vector<PoolContext>& pools, const DeskPreset& p,
                                               ContainmentAudit& audit)
{
    const AttackSpec base = desk_spec(p, Method::Dta);
    return {sensitivity_sweep(SensitivityParam::InnerSteps, p.k_grid, pools, base, p.threads, audit.hook()),
            sensitivity_sweep(SensitivityParam::InnerDecay, p.mu2_grid, pools, base, p.threads, audit.hook()),
            sensitivity_sweep(SensitivityParam::PruneRate, p.gamma_grid, pools, base, p.threads, audit.hook())};
}

struct CriterionResult {
    int id = 0;
    std::string title;
    bool pass = false;
    std::string detail;
};

inline void write_criteria(const std::vector<CriterionResult>& results, std::ostream& out)
{
    for (const auto& r : results)
        out << (r.pass ? "PASS" : "FAIL") << ' ' << std::setw(2) << r.id << ' ' << r.title << ": " << r.detail
            << '\n';
}

namespace detail {

inline std::string fixed(double v, int digits = 2)
{
    std::ostringstream o;
    o << std::fixed << std::setprecision(digits) << v;
    return o.str();
}

// True when values are strictly decreasing; appends "a=.. > b=.." to text.
inline bool strictly_ordered(const std::vector<std::pair<std::string, double>>& chain, std::string& text, int digits)
{
    bool ok = true;
    for (std::size_t i = 0; i < chain.size(); ++i) {
        if (i) {
            const bool step = chain[i - 1].second > chain[i].second;
            ok = ok && step;
            text += step ? " > " : " !> ";
        }
        text += chain[i].first + "=" + fixed(chain[i].second, digits);
    }
    return ok;
}

inline const SweepCurve& curve_named(const std::vector<SweepCurve>& curves, const std::string& parameter,
                                     const std::string& attack)
{
    for (const auto& c : curves)
        if (c.parameter == parameter && c.attack == attack) return c;
    throw Error("no " + parameter + " sweep for " + attack);
}

inline std::size_t grid_index(const SweepCurve& c, double value)
{
    for (std::size_t i = 0; i < c.grid.size(); ++i)
        if (std::abs(c.grid[i] - value) <= 1e-12 * std::max(1.0, std::abs(value))) return i;
    throw Error("sweep grid lacks the value " + fixed(value, 6));
}

} // namespace detail

inline CriterionResult transfer_ordering(const TransferSuite& s, std::size_t pools, double budget_seconds)
{
    auto m = [&](const char* n) { return std::pair<std::string, double>{n, s.find(n).mean_asr()}; };
    std::string text;
    const bool dta = detail::strictly_ordered({m("dta"), m("ni_fgsm"), m("mi_fgsm"), m("i_fgsm")}, text, 2);
    text += "; ";
    const bool vdta = detail::strictly_ordered({m("vdta"), m("vni_fgsm"), m("vmi_fgsm")}, text, 2);
    const bool fast = s.seconds <= budget_seconds;
    text += "; pools=" + std::to_string(pools) + " runtime=" + detail::fixed(s.seconds, 0) + "s";
    return {5, "transfer ordering", dta && vdta && pools >= 5 && fast, text};
}

inline CriterionResult pruning_effect(const TransferSuite& s)
{
    const double gap = s.find("dta_np").mean_asr() - s.find("dta").mean_asr();
    return {6, "network pruning effect", gap >= -2.0,
            "dta_np - dta = " + detail::fixed(gap) + " points (dta_np=" + detail::fixed(s.find("dta_np").mean_asr()) +
                ", dta=" + detail::fixed(s.find("dta").mean_asr()) + ")"};
}

inline CriterionResult alignment_ordering(const TransferSuite& s)
{
    auto m = [&](const char* n) { return std::pair<std::string, double>{n, s.find(n).mean_nu()}; };
    std::string text;
    const bool ok = detail::strictly_ordered({m("dta"), m("ni_fgsm"), m("mi_fgsm"), m("i_fgsm")}, text, 4);
    return {7, "alignment ordering", ok, "nu " + text};
}

inline CriterionResult step_length_trend(const std::vector<SweepCurve>& curves, double eps)
{
    bool ok = true;
    std::string text;
    for (const char* attack : {"mi_fgsm", "ni_fgsm"}) {
        const auto& c = detail::curve_named(curves, "alpha", attack);
        const double small = c.mean[detail::grid_index(c, eps / 100.0)];
        const double large = c.mean[detail::grid_index(c, eps / 10.0)];
        ok = ok && small < large && c.seeds.size() >= 5;
        text += std::string(text.empty() ? "" : "; ") + attack + " eps/100=" + detail::fixed(small) +
                " eps/10=" + detail::fixed(large);
    }
    return {9, "step-length sweep", ok, text};
}

inline CriterionResult oscillation_inequality(const DirectionReport& d)
{
    const bool ok = d.oscillation_applicable > 0 && d.oscillation_satisfied == d.oscillation_applicable;
    return {10, "oscillation inequality", ok,
            std::to_string(d.oscillation_satisfied) + "/" + std::to_string(d.oscillation_applicable) +
                " applicable steps; accurate-direction majority rate " + detail::fixed(100.0 * d.direction_rate()) +
                "% of " + std::to_string(d.steps)};
}

inline CriterionResult containment(const ContainmentAudit& a)
{
    return {11, "eps-ball containment", a.examples > 0 && a.violations == 0,
            std::to_string(a.violations) + " violations in " + std::to_string(a.examples) +
                " examples; worst excess " + detail::fixed(a.worst_excess, 17)};
}

inline CriterionResult sensitivity_anchors(const std::vector<SweepCurve>& curves, const TransferSuite& s)
{
    const auto& k = detail::curve_named(curves, "K", "dta");
    const auto& g = detail::curve_named(curves, "gamma", "dta");
    const auto& k1 = k.per_seed[detail::grid_index(k, 1.0)];
    const auto& k10 = k.per_seed[detail::grid_index(k, 10.0)];
    const bool k_anchor = k1 == s.find("ni_fgsm").asr;
    const bool g_anchor = g.per_seed[detail::grid_index(g, 0.0)] == s.find("dta").asr;
    const double m1 = AttackSummary::average(k1), m10 = AttackSummary::average(k10);
    const bool ok = k_anchor && g_anchor && m10 > m1 && k.seeds.size() >= 5;
    return {12, "sensitivity anchors", ok,
            std::string("K=1 vs ni_fgsm ") + (k_anchor ? "exact" : "differs") + "; gamma=0 vs dta " +
                (g_anchor ? "exact" : "differs") + "; K=10 " + detail::fixed(m10) + " vs K=1 " + detail::fixed(m1)};
}

inline void write_suite_summary(const TransferSuite& s, std::ostream& out)
{
    out << "attack,mean_asr,mean_nu,grad_calls,prune_calls";
    for (std::size_t p = 0; p < s.reports.size(); ++p) out << ",pool_" << p + 1;
    out << '\n';
    for (const auto& a : s.attacks) {
        out << a.attack << ',' << detail::fixed(a.mean_asr(), 4) << ',' << detail::fixed(a.mean_nu(), 6) << ','
            << a.grad_calls << ',' << a.prune_calls;
        for (double v : a.asr) out << ',' << detail::fixed(v, 4);
        out << '\n';
    }
}

} // namespace gradlab

#endif // GRADLAB_DESK_HPP
