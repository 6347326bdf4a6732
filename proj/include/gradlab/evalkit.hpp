#ifndef GRADLAB_EVALKIT_HPP
#define GRADLAB_EVALKIT_HPP

#include <cmath>
#include <cstdint>
#include <functional>
#include <iomanip>
#include <map>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "gradlab/attacks.hpp"
#include "gradlab/dataio.hpp"
#include "gradlab/objective.hpp"
#include "gradlab/parallel.hpp"
#include "gradlab/surgery.hpp"
#include "gradlab/trainer.hpp"

namespace gradlab {

// One attack recipe: the iterative method plus optional enhancers.
struct AttackSpec {
    std::string name;
    AttackConfig attack;
    TransformConfig transform;
    LossKind loss = LossKind::CrossEntropy;
    FiaConfig fia;
    double prune_rate = 0.0;

    std::string label() const { return name.empty() ? std::string(method_name(attack.method)) : name; }
};

// Stable fingerprint of everything that affects the crafted examples.
inline std::string config_hash(const AttackSpec& s)
{
    std::ostringstream o;
    o.precision(17);
    o << method_name(s.attack.method) << '|' << s.attack.eps << '|' << s.attack.steps << '|' << s.attack.alpha() << '|'
      << s.attack.decay1 << '|' << s.attack.decay2 << '|' << s.attack.inner_steps << '|' << s.attack.beta << '|'
      << s.attack.variance_samples << '|' << transform_name(s.transform.kind) << '|' << s.transform.dim_probability
      << '|' << s.transform.sim_copies << '|' << s.transform.tim_kernel_size << '|' << s.transform.sigma() << '|'
      << (s.loss == LossKind::Fia ? "fia" : "ce") << '|' << s.fia.drop_probability << '|' << s.fia.ensemble_size
      << '|' << s.prune_rate;
    const std::uint64_t h = derive_seed(0, o.str());
    std::ostringstream hex;
    hex << std::hex << std::setw(16) << std::setfill('0') << h;
    return hex.str();
}

struct CraftedBatch {
    std::vector<Tensor> adv;
    std::vector<AttackTrace> traces; // empty unless traces were kept
    long grad_calls = 0;
    long prune_calls = 0;
};

// Seed of example i within a run; independent of the parallel schedule.
inline std::uint64_t example_seed(std::uint64_t run_seed, std::size_t index) { return mix_seed(run_seed, index); }

inline NetworkObjective make_objective(const Network& surrogate, const Tensor& x, int y, const AttackSpec& spec,
                                       std::uint64_t seed)
{
    Loss loss;
    if (spec.loss == LossKind::Fia) {
        FiaConfig fc = spec.fia;
        fc.seed = derive_seed(seed, "fia");
        loss = Loss::fia(fia_aggregate_delta(surrogate, x, y, fc));
    }
    return NetworkObjective(surrogate, y, std::move(loss), spec.transform, spec.prune_rate,
                            derive_seed(seed, "transform"));
}

inline CraftedBatch craft(const Network& surrogate, const Dataset& data, const AttackSpec& spec,
                          std::uint64_t run_seed, bool keep_traces = true, unsigned threads = 0)
{
    CraftedBatch out;
    const std::size_t n = data.size();
    out.adv.resize(n);
    std::vector<AttackTrace> traces(n);
    std::vector<long> prune(n, 0);
    const ImageGeometry geo{data.height(), data.width()};
    parallel_for(
        n,
        [&](std::size_t i) {
            const std::uint64_t seed = example_seed(run_seed, i);
            const Tensor x = data.image(i);
            NetworkObjective obj = make_objective(surrogate, x, data.labels[i], spec, seed);
            obj.set_geometry(geo);
            AttackConfig cfg = spec.attack;
            cfg.seed = derive_seed(seed, "attack");
            cfg.record_inner = cfg.record_inner && keep_traces;
            cfg.trace_loss = cfg.trace_loss && keep_traces;
            auto res = run_attack(obj, x, cfg);
            out.adv[i] = std::move(res.x_adv);
            traces[i] = std::move(res.trace);
            prune[i] = obj.prune_calls().backward;
        },
        threads);
    for (std::size_t i = 0; i < n; ++i) {
        out.grad_calls += traces[i].grad_calls();
        out.prune_calls += prune[i];
    }
    if (keep_traces) out.traces = std::move(traces);
    return out;
}

class EvalError : public Error {
public:
    using Error::Error;
};

// Percentage of adversarial inputs misclassified, over the examples the victim gets right when clean.
inline double asr(const Network& victim, const Dataset& clean, const std::vector<Tensor>& adv)
{
    if (adv.size() != clean.size()) throw EvalError("adversarial batch does not align with the clean set");
    std::size_t eligible = 0, fooled = 0;
    for (std::size_t i = 0; i < clean.size(); ++i) {
        if (predict(victim, clean.image(i)) != clean.labels[i]) continue;
        ++eligible;
        if (predict(victim, adv[i]) != clean.labels[i]) ++fooled;
    }
    if (eligible == 0) throw EvalError("no example is classified correctly by the victim");
    return 100.0 * static_cast<double>(fooled) / static_cast<double>(eligible);
}

struct TransferReport {
    std::string surrogate;
    std::string attack;
    std::vector<std::string> victims; // pool order, surrogate included
    std::vector<double> asr;          // per victim, percent
    double white_box_asr = 0.0;
    long grad_calls = 0;
    std::uint64_t seed = 0;
    std::string config_hash;

    // Mean over victims other than the surrogate.
    double mean_transfer() const
    {
        double s = 0.0;
        int n = 0;
        for (std::size_t i = 0; i < victims.size(); ++i)
            if (victims[i] != surrogate) {
                s += asr[i];
                ++n;
            }
        return n ? s / n : 0.0;
    }
};

inline TransferReport evaluate_transfer(const std::vector<PoolMember>& pool, std::size_t surrogate,
                                        const AttackSpec& spec, const Dataset& data, const CraftedBatch& batch,
                                        std::uint64_t seed)
{
    TransferReport r;
    r.surrogate = pool[surrogate].name;
    r.attack = spec.label();
    r.grad_calls = batch.grad_calls;
    r.seed = seed;
    r.config_hash = config_hash(spec);
    r.asr.resize(pool.size());
    for (std::size_t v = 0; v < pool.size(); ++v) {
        r.victims.push_back(pool[v].name);
        r.asr[v] = asr(pool[v].net, data, batch.adv);
    }
    r.white_box_asr = r.asr[surrogate];
    return r;
}

// Sees every crafted batch before it is scored.
using BatchHook = std::function<void(const AttackSpec&, const Dataset&, const CraftedBatch&)>;

// Attack once per (surrogate, attack) and score against every pool member; the diagonal is white-box.
// An empty surrogate list uses every member.
inline std::vector<TransferReport> transfer_matrix(const std::vector<PoolMember>& pool,
                                                   const std::vector<AttackSpec>& attacks, const Dataset& data,
                                                   std::uint64_t seed, std::vector<std::size_t> surrogates = {},
                                                   unsigned threads = 0, const BatchHook& hook = {})
{
    if (pool.size() < 2) throw EvalError("transfer evaluation needs at least two pool members");
    if (surrogates.empty())
        for (std::size_t i = 0; i < pool.size(); ++i) surrogates.push_back(i);
    std::vector<TransferReport> out;
    for (const auto& spec : attacks)
        for (std::size_t s : surrogates) {
            const std::uint64_t run_seed = derive_seed(seed, "craft/" + pool[s].name);
            const auto batch = craft(pool[s].net, data, spec, run_seed, false, threads);
            if (hook) hook(spec, data, batch);
            out.push_back(evaluate_transfer(pool, s, spec, data, batch, seed));
        }
    return out;
}

inline double mean_transfer(const std::vector<TransferReport>& reports)
{
    if (reports.empty()) return 0.0;
    double s = 0.0;
    for (const auto& r : reports) s += r.mean_transfer();
    return s / static_cast<double>(reports.size());
}

// Rows = surrogate, columns = victim, cells = ASR; one block per attack.
inline void write_transfer_csv(const std::vector<TransferReport>& reports, std::ostream& out)
{
    if (reports.empty()) return;
    out << "attack,surrogate";
    for (const auto& v : reports.front().victims) out << ',' << v;
    out << '\n';
    out << std::fixed << std::setprecision(4);
    for (const auto& r : reports) {
        out << r.attack << ',' << r.surrogate;
        for (double a : r.asr) out << ',' << a;
        out << '\n';
    }
    out.unsetf(std::ios::floatfield);
}

// Fixed summary columns: attack, surrogate, white_box, mean_transfer, grad_calls, config.
inline void write_summary_table(const std::vector<TransferReport>& reports, std::ostream& out)
{
    out << std::left << std::setw(14) << "attack" << std::setw(18) << "surrogate" << std::right << std::setw(10)
        << "white_box" << std::setw(15) << "mean_transfer" << std::setw(12) << "grad_calls" << "  config\n";
    for (const auto& r : reports)
        out << std::left << std::setw(14) << r.attack << std::setw(18) << r.surrogate << std::right << std::fixed
            << std::setprecision(2) << std::setw(10) << r.white_box_asr << std::setw(15) << r.mean_transfer()
            << std::setw(12) << r.grad_calls << "  " << r.config_hash << '\n';
    out.unsetf(std::ios::floatfield);
}

// Mean cosine between the surrogate's update gradient g_{i,t} and the victim's plain
// cross-entropy gradient at the same iterate; zero-norm pairs count as 0.
inline double alignment_nu(const std::vector<AttackTrace>& traces, const Network& victim,
                           const std::vector<int>& labels)
{
    if (traces.size() != labels.size()) throw EvalError("traces and labels do not align");
    double sum = 0.0;
    std::size_t pairs = 0;
    for (std::size_t i = 0; i < traces.size(); ++i)
        for (const auto& step : traces[i].steps) {
            sum += cosine(step.g, grad_input(victim, step.x_from, labels[i]));
            ++pairs;
        }
    if (pairs == 0) throw EvalError("alignment needs at least one traced step");
    return sum / static_cast<double>(pairs);
}

// max |L(x) - L(x + o)| / ||o||_2 over the candidate offsets o.
template <class LossFn>
double steepest_speed_over(LossFn&& loss, const Tensor& x, const std::vector<Tensor>& offsets)
{
    const double base = loss(x);
    double best = 0.0;
    for (const auto& o : offsets) {
        const double n = l2_norm(o);
        if (n == 0.0) continue;
        best = std::max(best, std::abs(base - loss(x + o)) / n);
    }
    return best;
}

// Nested sampling over increasing radii: the candidates for a radius include every candidate
// drawn for the smaller radii (all of which lie in the larger box) plus `samples` fresh draws,
// so the estimates are non-decreasing in alpha.
template <class LossFn>
std::vector<double> steepest_speed_sweep(LossFn&& loss, const Tensor& x, const std::vector<double>& alphas,
                                         int samples, Rng& rng)
{
    if (samples < 1) throw Error("steepest speed needs at least one sample");
    for (std::size_t i = 0; i < alphas.size(); ++i) {
        if (!(alphas[i] > 0.0)) throw Error("alpha must be positive");
        if (i && !(alphas[i] > alphas[i - 1])) throw Error("alphas must be strictly increasing");
    }
    const double base = loss(x);
    std::vector<double> out;
    double best = 0.0;
    for (double a : alphas) {
        for (int s = 0; s < samples; ++s) {
            const Tensor o = uniform_ball_sample(rng, x.shape(), a);
            const double n = l2_norm(o);
            if (n == 0.0) continue;
            best = std::max(best, std::abs(base - loss(x + o)) / n);
        }
        out.push_back(best);
    }
    return out;
}

template <class LossFn>
double steepest_speed(LossFn&& loss, const Tensor& x, double alpha, int samples, Rng& rng)
{
    return steepest_speed_sweep(loss, x, {alpha}, samples, rng).front();
}

inline double steepest_speed(const Network& net, const Tensor& x, int y, double alpha, int samples, Rng& rng)
{
    return steepest_speed([&](const Tensor& p) { return loss_value(net, p, y); }, x, alpha, samples, rng);
}

// Per-step checks of the direction-tuning geometry on the inner gradients g_{t,1..K}:
//   accurate direction: cos(sign(mean g), S) >= cos(sign(g_1), S) with S = sum_k sign(g_k)
//   oscillation: ||sign(mean g)|| = ||sign(g_1)|| >= ||S|| / K
// The norm comparison is done on integer squared norms, so it is exact.
struct DirectionReport {
    long steps = 0;
    long direction_satisfied = 0;
    long oscillation_applicable = 0; // steps whose inner gradients have no zero component
    long oscillation_equal = 0;
    long oscillation_satisfied = 0;  // equality and inequality both hold

    double direction_rate() const { return steps ? static_cast<double>(direction_satisfied) / steps : 0.0; }
    double oscillation_rate() const
    {
        return oscillation_applicable ? static_cast<double>(oscillation_satisfied) / oscillation_applicable : 1.0;
    }

    DirectionReport& operator+=(const DirectionReport& o)
    {
        steps += o.steps;
        direction_satisfied += o.direction_satisfied;
        oscillation_applicable += o.oscillation_applicable;
        oscillation_equal += o.oscillation_equal;
        oscillation_satisfied += o.oscillation_satisfied;
        return *this;
    }
};

inline DirectionReport direction_diagnostics(const AttackTrace& trace)
{
    DirectionReport r;
    bool any_inner = false;
    for (const auto& step : trace.steps) {
        const auto& inner = step.inner_g;
        if (inner.empty()) continue;
        any_inner = true;
        const std::size_t d = inner.front().size();
        const long k = static_cast<long>(inner.size());
        std::vector<long> s_sum(d, 0);
        Tensor mean = Tensor::zeros_like(inner.front());
        bool nonzero = true;
        for (const auto& g : inner) {
            for (std::size_t j = 0; j < d; ++j) {
                s_sum[j] += static_cast<long>(sign(g[j]));
                mean[j] += g[j];
            }
            nonzero = nonzero && all_nonzero(g);
        }
        const Tensor s_mean = sign(mean);
        const Tensor s_first = sign(inner.front());
        Tensor s_total({d});
        long total_sq = 0, nnz_mean = 0, nnz_first = 0;
        for (std::size_t j = 0; j < d; ++j) {
            s_total[j] = static_cast<double>(s_sum[j]);
            total_sq += s_sum[j] * s_sum[j];
            nnz_mean += s_mean[j] != 0.0;
            nnz_first += s_first[j] != 0.0;
        }
        ++r.steps;
        // Exact ties (always the case for K = 1) count as satisfied.
        if (cosine(s_mean, s_total) >= cosine(s_first, s_total) - 1e-12) ++r.direction_satisfied;
        if (nonzero) {
            ++r.oscillation_applicable;
            const bool equal = nnz_mean == nnz_first;
            if (equal) ++r.oscillation_equal;
            if (equal && k * k * nnz_first >= total_sq) ++r.oscillation_satisfied;
        }
    }
    if (!any_inner) throw EvalError("trace has no inner-loop gradients");
    return r;
}

// Everything a pool-level experiment needs: members, evaluation examples and a seed.
struct PoolContext {
    std::vector<PoolMember> members;
    Dataset eval;
    std::uint64_t seed = 0;
    std::vector<std::size_t> surrogates{0};
};

struct SweepCurve {
    std::string parameter;
    std::string attack;
    std::vector<double> grid;
    std::vector<double> mean;                 // per grid value, averaged over pools
    std::vector<std::vector<double>> per_seed; // [grid][pool]
    std::vector<std::uint64_t> seeds;
};

inline double pool_transfer(const PoolContext& pool, const AttackSpec& spec, unsigned threads = 0,
                            const BatchHook& hook = {})
{
    return mean_transfer(transfer_matrix(pool.members, {spec}, pool.eval, pool.seed, pool.surrogates, threads, hook));
}

template <class Configure>
SweepCurve sweep(const std::string& parameter, const std::vector<double>& grid, const std::vector<PoolContext>& pools,
                 const AttackSpec& base, Configure&& configure, unsigned threads = 0, const BatchHook& hook = {})
{
    for (std::size_t i = 1; i < grid.size(); ++i)
        if (!(grid[i] > grid[i - 1])) throw Error("sweep grid must be strictly increasing");
    SweepCurve c;
    c.parameter = parameter;
    c.attack = base.label();
    c.grid = grid;
    for (const auto& p : pools) c.seeds.push_back(p.seed);
    for (double value : grid) {
        AttackSpec spec = base;
        configure(spec, value);
        std::vector<double> row;
        for (const auto& p : pools) row.push_back(pool_transfer(p, spec, threads, hook));
        double m = 0.0;
        for (double v : row) m += v;
        c.mean.push_back(row.empty() ? 0.0 : m / static_cast<double>(row.size()));
        c.per_seed.push_back(std::move(row));
    }
    return c;
}

// Transfer ASR as the step length shrinks at fixed eps; each alpha runs T = round(eps / alpha) steps.
inline std::vector<SweepCurve> step_length_sweep(const std::vector<PoolContext>& pools,
                                                 const std::vector<AttackSpec>& attacks,
                                                 const std::vector<double>& alphas, unsigned threads = 0,
                                                 const BatchHook& hook = {})
{
    std::vector<SweepCurve> out;
    for (const auto& base : attacks)
        out.push_back(sweep("alpha", alphas, pools, base,
                            [](AttackSpec& s, double alpha) {
                                s.attack.steps = std::max(1, static_cast<int>(std::lround(s.attack.eps / alpha)));
                                s.attack.step_len = alpha;
                            },
                            threads, hook));
    return out;
}

enum class SensitivityParam { InnerSteps, InnerDecay, PruneRate };

inline std::string_view sensitivity_name(SensitivityParam p)
{
    switch (p) {
    case SensitivityParam::InnerSteps: return "K";
    case SensitivityParam::InnerDecay: return "mu2";
    case SensitivityParam::PruneRate: return "gamma";
    }
    return "?";
}

inline SweepCurve sensitivity_sweep(SensitivityParam param, const std::vector<double>& grid,
                                    const std::vector<PoolContext>& pools, const AttackSpec& base,
                                    unsigned threads = 0, const BatchHook& hook = {})
{
    for (double v : grid) {
        if (param == SensitivityParam::InnerSteps && (v < 1.0 || v != std::floor(v)))
            throw Error("K grid values must be positive integers");
        if (param == SensitivityParam::InnerDecay && v < 0.0) throw Error("mu2 grid values must be non-negative");
        if (param == SensitivityParam::PruneRate && !(v >= 0.0 && v < 1.0))
            throw Error("gamma grid values must lie in [0, 1)");
    }
    return sweep(std::string(sensitivity_name(param)), grid, pools, base,
                 [param](AttackSpec& s, double v) {
                     switch (param) {
                     case SensitivityParam::InnerSteps: s.attack.inner_steps = static_cast<int>(v); break;
                     case SensitivityParam::InnerDecay: s.attack.decay2 = v; break;
                     case SensitivityParam::PruneRate: s.prune_rate = v; break;
                     }
                 },
                 threads, hook);
}

// Columns: parameter, attack, value, mean, then one column per pool seed.
inline void write_sweep_csv(const std::vector<SweepCurve>& curves, std::ostream& out)
{
    if (curves.empty()) return;
    out << "parameter,attack,value,mean";
    for (auto s : curves.front().seeds) out << ",seed_" << s;
    out << '\n';
    out.precision(10);
    for (const auto& c : curves)
        for (std::size_t i = 0; i < c.grid.size(); ++i) {
            out << c.parameter << ',' << c.attack << ',' << c.grid[i] << ',' << c.mean[i];
            for (double v : c.per_seed[i]) out << ',' << v;
            out << '\n';
        }
}

} // namespace gradlab

#endif // GRADLAB_EVALKIT_HPP
