#ifndef GRADLAB_ATTACKS_HPP
#define GRADLAB_ATTACKS_HPP

#include <concepts>
#include <optional>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

#include "gradlab/tensor.hpp"

namespace gradlab {

enum class Method { Fgsm, IFgsm, MiFgsm, NiFgsm, VmiFgsm, VniFgsm, Dta, Vdta };

inline constexpr Method kAllMethods[] = {Method::Fgsm,    Method::IFgsm,   Method::MiFgsm, Method::NiFgsm,
                                         Method::VmiFgsm, Method::VniFgsm, Method::Dta,    Method::Vdta};

inline std::string_view method_name(Method m)
{
    switch (m) {
    case Method::Fgsm: return "fgsm";
    case Method::IFgsm: return "i_fgsm";
    case Method::MiFgsm: return "mi_fgsm";
    case Method::NiFgsm: return "ni_fgsm";
    case Method::VmiFgsm: return "vmi_fgsm";
    case Method::VniFgsm: return "vni_fgsm";
    case Method::Dta: return "dta";
    case Method::Vdta: return "vdta";
    }
    return "?";
}

inline Method parse_method(std::string_view name)
{
    for (Method m : kAllMethods)
        if (method_name(m) == name) return m;
    throw Error("unknown attack method '" + std::string(name) + "'");
}

struct AttackConfig {
    Method method = Method::IFgsm;
    double eps = 16.0 / 255.0;
    int steps = 10;                   // T
    std::optional<double> step_len;   // alpha; eps / T when unset
    double decay1 = 1.0;              // momentum decay of the outer accumulated gradient
    double decay2 = 0.0;              // decay of the inner-loop gradient
    int inner_steps = 10;             // K
    double beta = 1.5;                // neighborhood radius factor for variance tuning
    int variance_samples = 20;        // N
    std::uint64_t seed = 0;
    bool record_inner = true;
    bool trace_loss = true;

    double alpha() const { return step_len ? *step_len : eps / static_cast<double>(steps); }

    void validate() const
    {
        if (!(eps >= 0.0)) throw Error("eps must be non-negative");
        if (steps < 1) throw Error("steps must be at least 1");
        if (inner_steps < 1) throw Error("inner_steps must be at least 1");
        if (variance_samples < 1) throw Error("variance_samples must be at least 1");
        if (!(beta >= 0.0)) throw Error("beta must be non-negative");
        if (!(decay1 >= 0.0) || !(decay2 >= 0.0)) throw Error("decay factors must be non-negative");
        if (eps > 0.0 && !(alpha() > 0.0)) throw Error("step length must be positive");
    }
};

// Per-method defaults; K = 10 with decay2 = 0 for DTA and 0.8 for VDTA.
inline AttackConfig default_config(Method m)
{
    AttackConfig cfg;
    cfg.method = m;
    cfg.decay2 = m == Method::Vdta ? 0.8 : 0.0;
    return cfg;
}

// A differentiable attack target. gradient() returns the ascent direction of the attack
// objective (the loss gradient for losses that are maximized).
template <class T>
concept AttackObjective = requires(T& obj, const Tensor& x) {
    { obj.gradient(x) } -> std::convertible_to<Tensor>;
    { obj.loss(x) } -> std::convertible_to<double>;
};

// Optional hooks an objective may provide.
template <class T>
concept HasIterationHook = requires(T& obj, const Tensor& x) { obj.begin_iteration(x); };

template <class T>
concept HasGradientCost = requires(const T& obj) { { obj.gradient_cost() } -> std::convertible_to<long>; };

template <class T>
concept HasMaskRecord = requires(const T& obj) { { obj.current_mask() } -> std::convertible_to<std::vector<double>>; };

struct IterationRecord {
    int t = 0;
    Tensor x_from;  // x_adv_t
    Tensor x_adv;   // x_adv_{t+1}
    Tensor g;       // g_{t+1}, the accumulated gradient whose sign drives the update
    Tensor v;       // v_{t+1}; empty for methods without variance tuning
    std::vector<Tensor> inner_g; // g_{t,1..K} for direction-tuning methods
    long grad_calls = 0;         // cumulative
    double loss = 0.0;           // objective loss at x_adv_{t+1}
    double linf = 0.0;           // ||x_adv_{t+1} - x||_inf
    std::vector<double> mask;    // prune mask in force during this iteration, if any
};

struct AttackTrace {
    Method method = Method::IFgsm;
    std::vector<IterationRecord> steps;

    long grad_calls() const { return steps.empty() ? 0 : steps.back().grad_calls; }
};

struct AttackResult {
    Tensor x_adv;
    AttackTrace trace;
};

inline void write_trace_csv(const AttackTrace& trace, std::ostream& out)
{
    out << "t,linf,loss,grad_calls\n";
    out.precision(17);
    for (const auto& r : trace.steps) out << r.t << ',' << r.linf << ',' << r.loss << ',' << r.grad_calls << '\n';
}

namespace detail {

template <AttackObjective Obj>
class Engine {
public:
    Engine(Obj& obj, const Tensor& x, const AttackConfig& cfg)
        : obj_(obj), x_(x), cfg_(cfg), rng_(cfg.seed), alpha_(cfg.alpha())
    {
        cfg_.validate();
    }

    AttackResult run()
    {
        switch (cfg_.method) {
        case Method::Fgsm: return fgsm();
        case Method::IFgsm: return momentum_family(false, false, false);
        case Method::MiFgsm: return momentum_family(true, false, false);
        case Method::NiFgsm: return momentum_family(true, true, false);
        case Method::VmiFgsm: return momentum_family(true, false, true);
        case Method::VniFgsm: return momentum_family(true, true, true);
        case Method::Dta: return direction_tuning(false);
        case Method::Vdta: return direction_tuning(true);
        }
        throw Error("unhandled method");
    }

private:
    Tensor grad(const Tensor& at)
    {
        Tensor g = obj_.gradient(at);
        if constexpr (HasGradientCost<Obj>)
            calls_ += obj_.gradient_cost();
        else
            ++calls_;
        return g;
    }

    // v = mean_i grad(center + r_i) - grad_center, r_i uniform in [-beta*eps, beta*eps]^d.
    // The running mean is exact when all samples coincide, so beta = 0 gives v = 0.
    Tensor variance(const Tensor& center, const Tensor& grad_center)
    {
        const double radius = cfg_.beta * cfg_.eps;
        Tensor mean = Tensor::zeros_like(center);
        for (int i = 1; i <= cfg_.variance_samples; ++i) {
            const Tensor noise = uniform_ball_sample(rng_, center.shape(), radius);
            const Tensor gi = grad(center + noise);
            for (std::size_t j = 0; j < mean.size(); ++j) mean[j] += (gi[j] - mean[j]) / i;
        }
        return mean - grad_center;
    }

    void begin_iteration(const Tensor& x_t)
    {
        if constexpr (HasIterationHook<Obj>) obj_.begin_iteration(x_t);
    }

    IterationRecord record(int t, const Tensor& from, const Tensor& to, const Tensor& g, const Tensor* v)
    {
        IterationRecord r;
        r.t = t;
        r.x_from = from;
        r.x_adv = to;
        r.g = g;
        if (v) r.v = *v;
        r.grad_calls = calls_;
        r.linf = linf_distance(to, x_);
        if (cfg_.trace_loss) r.loss = obj_.loss(to);
        if constexpr (HasMaskRecord<Obj>) r.mask = obj_.current_mask();
        return r;
    }

    AttackResult fgsm()
    {
        AttackResult res;
        res.trace.method = Method::Fgsm;
        begin_iteration(x_);
        const Tensor g = grad(x_);
        res.x_adv = clip_ball(x_, cfg_.eps, axpy(x_, cfg_.eps, sign(g)));
        res.trace.steps.push_back(record(0, x_, res.x_adv, g, nullptr));
        return res;
    }

    // I-FGSM, MI-FGSM, NI-FGSM and their variance-tuned forms.
    AttackResult momentum_family(bool momentum, bool nesterov, bool tuned)
    {
        AttackResult res;
        res.trace.method = cfg_.method;
        Tensor x_t = x_;
        Tensor g = Tensor::zeros_like(x_);
        Tensor v = Tensor::zeros_like(x_);
        const double look = alpha_ * cfg_.decay1;
        for (int t = 0; t < cfg_.steps; ++t) {
            begin_iteration(x_t);
            const Tensor probe = nesterov ? axpy(x_t, look, g) : x_t;
            const Tensor gr = grad(probe);
            if (!momentum) {
                g = gr;
            } else if (!tuned) {
                g = scale_add(cfg_.decay1, g, l1_normalize(gr));
            } else {
                g = scale_add(cfg_.decay1, g, l1_normalize(gr + v));
                v = variance(probe, gr);
            }
            Tensor next = clip_ball(x_, cfg_.eps, axpy(x_t, alpha_, sign(g)));
            res.trace.steps.push_back(record(t, x_t, next, g, tuned ? &v : nullptr));
            x_t = std::move(next);
        }
        res.x_adv = std::move(x_t);
        return res;
    }

    // DTA / VDTA: K small look-ahead samples per outer step; their mean gradient drives
    // a full-length step taken from x_adv_t.
    AttackResult direction_tuning(bool tuned)
    {
        AttackResult res;
        res.trace.method = cfg_.method;
        const int k_steps = cfg_.inner_steps;
        const double inner_alpha = alpha_ / static_cast<double>(k_steps);
        const double look = alpha_ * cfg_.decay1;
        Tensor x_t = x_;
        Tensor g = Tensor::zeros_like(x_);
        Tensor v = Tensor::zeros_like(x_);
        for (int t = 0; t < cfg_.steps; ++t) {
            begin_iteration(x_t);
            Tensor g_k = g;
            Tensor v_k = v;
            Tensor x_k = x_t;
            Tensor sum = Tensor::zeros_like(x_);
            Tensor v_next;
            std::vector<Tensor> inner;
            for (int k = 0; k < k_steps; ++k) {
                const Tensor probe = axpy(x_k, look, g_k);
                const Tensor gr = grad(probe);
                if (tuned) {
                    g_k = scale_add(cfg_.decay2, g_k, l1_normalize(gr + v_k));
                    v_k = variance(probe, gr);
                    if (k == 0) v_next = v_k;
                } else {
                    g_k = scale_add(cfg_.decay2, g_k, l1_normalize(gr));
                }
                x_k = clip_ball(x_, cfg_.eps, axpy(x_k, inner_alpha, sign(g_k)));
                for (std::size_t j = 0; j < sum.size(); ++j) sum[j] += g_k[j];
                if (cfg_.record_inner) inner.push_back(g_k);
            }
            for (double& s : sum) s /= static_cast<double>(k_steps);
            g = scale_add(cfg_.decay1, g, sum);
            if (tuned) v = std::move(v_next);
            Tensor next = clip_ball(x_, cfg_.eps, axpy(x_t, alpha_, sign(g)));
            auto rec = record(t, x_t, next, g, tuned ? &v : nullptr);
            rec.inner_g = std::move(inner);
            res.trace.steps.push_back(std::move(rec));
            x_t = std::move(next);
        }
        res.x_adv = std::move(x_t);
        return res;
    }

    Obj& obj_;
    const Tensor& x_;
    AttackConfig cfg_;
    Rng rng_;
    double alpha_;
    long calls_ = 0;
};

} // namespace detail

template <AttackObjective Obj>
AttackResult run_attack(Obj& obj, const Tensor& x, const AttackConfig& cfg)
{
    return detail::Engine<Obj>(obj, x, cfg).run();
}

template <AttackObjective Obj>
AttackResult fgsm(Obj& obj, const Tensor& x, AttackConfig cfg)
{
    cfg.method = Method::Fgsm;
    return run_attack(obj, x, cfg);
}

template <AttackObjective Obj>
AttackResult i_fgsm(Obj& obj, const Tensor& x, AttackConfig cfg)
{
    cfg.method = Method::IFgsm;
    return run_attack(obj, x, cfg);
}

template <AttackObjective Obj>
AttackResult mi_fgsm(Obj& obj, const Tensor& x, AttackConfig cfg)
{
    cfg.method = Method::MiFgsm;
    return run_attack(obj, x, cfg);
}

template <AttackObjective Obj>
AttackResult ni_fgsm(Obj& obj, const Tensor& x, AttackConfig cfg)
{
    cfg.method = Method::NiFgsm;
    return run_attack(obj, x, cfg);
}

// nesterov = true gives VNI-FGSM.
template <AttackObjective Obj>
AttackResult vmi_fgsm(Obj& obj, const Tensor& x, AttackConfig cfg, bool nesterov = false)
{
    cfg.method = nesterov ? Method::VniFgsm : Method::VmiFgsm;
    return run_attack(obj, x, cfg);
}

template <AttackObjective Obj>
AttackResult dta(Obj& obj, const Tensor& x, AttackConfig cfg)
{
    cfg.method = Method::Dta;
    return run_attack(obj, x, cfg);
}

template <AttackObjective Obj>
AttackResult vdta(Obj& obj, const Tensor& x, AttackConfig cfg)
{
    cfg.method = Method::Vdta;
    return run_attack(obj, x, cfg);
}

} // namespace gradlab

#endif // GRADLAB_ATTACKS_HPP
