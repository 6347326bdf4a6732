#ifndef GRADLAB_CLI_HPP
#define GRADLAB_CLI_HPP

#include <charconv>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "gradlab/desk.hpp"

namespace gradlab::cli {

namespace fs = std::filesystem;

// Reported with exit code 2.
class ConfigError : public Error {
public:
    using Error::Error;
};

// Failure inside a pipeline stage; the message names the stage.
class StageError : public Error {
public:
    StageError(const std::string& stage, const std::string& what) : Error("stage " + stage + " failed: " + what) {}
};

inline std::string format_number(double v)
{
    char buf[32];
    const auto r = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, r.ptr);
}

// Sectioned key = value settings ("[section]" headers, ';' or '#' comments, lists separated by
// commas or spaces). Every lookup records its resolved value so the run can be replayed.
class RunConfig {
public:
    static RunConfig parse(std::istream& in)
    {
        RunConfig cfg;
        std::vector<CLI::ConfigItem> items;
        try {
            items = CLI::ConfigINI().from_config(in);
        } catch (const std::exception& e) {
            throw ConfigError(std::string("config parse error: ") + e.what());
        }
        for (const auto& item : items) {
            if (item.name == "++" || item.name == "--") continue;
            if (item.parents.empty() || item.parents.front() == "default")
                throw ConfigError("config key '" + item.name + "' is outside a [section]");
            cfg.given_[item.fullname()] = item.inputs;
        }
        return cfg;
    }

    static RunConfig load(const fs::path& path)
    {
        std::ifstream in(path);
        if (!in) throw ConfigError("cannot open config file " + path.string());
        return parse(in);
    }

    void set(const std::string& key, const std::string& value) { given_[key] = {value}; }

    bool has(const std::string& key) const { return given_.count(key) != 0; }

    std::string text(const std::string& key, const std::string& fallback)
    {
        std::string v = fallback;
        if (auto it = given_.find(key); it != given_.end()) {
            if (it->second.size() != 1) throw ConfigError("config key " + key + " expects a single value");
            v = it->second.front();
        }
        used_[key] = v;
        return v;
    }

    double number(const std::string& key, double fallback)
    {
        const std::string s = text(key, format_number(fallback));
        double v = 0.0;
        const auto r = std::from_chars(s.data(), s.data() + s.size(), v);
        if (r.ec != std::errc{} || r.ptr != s.data() + s.size() || !std::isfinite(v))
            throw ConfigError("config key " + key + " is not a number: '" + s + "'");
        return v;
    }

    long long integer(const std::string& key, long long fallback)
    {
        const std::string s = text(key, std::to_string(fallback));
        long long v = 0;
        const auto r = std::from_chars(s.data(), s.data() + s.size(), v);
        if (r.ec != std::errc{} || r.ptr != s.data() + s.size())
            throw ConfigError("config key " + key + " is not an integer: '" + s + "'");
        return v;
    }

    std::vector<std::string> list(const std::string& key, const std::vector<std::string>& fallback)
    {
        std::vector<std::string> v = fallback;
        if (auto it = given_.find(key); it != given_.end()) v = it->second;
        std::string joined;
        for (const auto& s : v) joined += (joined.empty() ? "" : ",") + s;
        used_[key] = joined;
        return v;
    }

    // Keys present in the file that no stage consumed are rejected.
    void reject_unused() const
    {
        std::string unknown;
        for (const auto& [k, v] : given_)
            if (!used_.count(k)) unknown += " " + k;
        if (!unknown.empty()) throw ConfigError("unknown config keys:" + unknown);
    }

    void write_resolved(std::ostream& out) const
    {
        std::string section;
        for (const auto& [key, value] : used_) {
            const auto dot = key.find('.');
            const std::string s = key.substr(0, dot);
            if (s != section) {
                out << (section.empty() ? "" : "\n") << '[' << s << "]\n";
                section = s;
            }
            out << key.substr(dot + 1) << " = " << value << '\n';
        }
    }

private:
    std::map<std::string, std::vector<std::string>> given_;
    std::map<std::string, std::string> used_;
};

inline void write_text(const fs::path& path, const std::string& content)
{
    std::ofstream out(path, std::ios::binary);
    if (!out || !(out << content)) throw Error("cannot write " + path.string());
}

inline fs::path prepare_output(RunConfig& cfg)
{
    const fs::path dir = cfg.text("run.output", "gradlab_out");
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw Error("cannot create output directory " + dir.string() + ": " + ec.message());
    return dir;
}

inline void write_resolved(const RunConfig& cfg, const fs::path& dir)
{
    std::ostringstream s;
    cfg.write_resolved(s);
    write_text(dir / "resolved.ini", s.str());
}

inline std::uint64_t global_seed(RunConfig& cfg, std::uint64_t fallback = 1)
{
    const long long s = cfg.integer("run.seed", static_cast<long long>(fallback));
    if (s < 0) throw ConfigError("run.seed must be non-negative");
    return static_cast<std::uint64_t>(s);
}

inline unsigned threads(RunConfig& cfg)
{
    const long long t = cfg.integer("run.threads", 0);
    if (t < 0) throw ConfigError("run.threads must be non-negative");
    return static_cast<unsigned>(t);
}

inline std::vector<std::size_t> parse_widths(const std::string& s)
{
    std::vector<std::size_t> out;
    std::stringstream in(s);
    std::string part;
    while (std::getline(in, part, 'x')) {
        std::size_t v = 0;
        const auto r = std::from_chars(part.data(), part.data() + part.size(), v);
        if (r.ec != std::errc{} || r.ptr != part.data() + part.size() || v == 0)
            throw ConfigError("bad hidden widths '" + s + "' (expected e.g. 64x32)");
        out.push_back(v);
    }
    if (out.empty()) throw ConfigError("empty hidden widths");
    return out;
}

struct DataSplit {
    Dataset train;
    Dataset eval;
};

// The eval split is the last eval_size examples; blobs are drawn from the global seed.
inline DataSplit load_data(RunConfig& cfg, std::uint64_t seed)
{
    const std::string source = cfg.text("data.source", "blobs");
    const auto eval_size = static_cast<std::size_t>(cfg.integer("data.eval_size", 200));
    Dataset all;
    if (source == "blobs") {
        BlobOptions o;
        const auto train_size = cfg.integer("data.train_size", 6000);
        const auto side = cfg.integer("data.side", 16);
        const auto classes = cfg.integer("data.classes", 4);
        o.bumps_per_template = static_cast<int>(cfg.integer("data.bumps", 3));
        o.modes_per_class = static_cast<int>(cfg.integer("data.modes", 3));
        o.bump_sigma = cfg.number("data.bump_sigma", 0.12);
        o.jitter = cfg.number("data.jitter", 1.5);
        o.noise_sigma = cfg.number("data.noise", 0.08);
        o.template_contrast = cfg.number("data.contrast", 0.6);
        if (train_size < 1 || side < 1 || classes < 2) throw ConfigError("data sizes must be positive");
        Rng rng(derive_seed(seed, "data"));
        all = synth_blobs(rng, static_cast<std::size_t>(train_size) + eval_size, static_cast<int>(classes),
                          static_cast<std::size_t>(side), static_cast<std::size_t>(side), o);
    } else if (source == "idx") {
        const fs::path images = cfg.text("data.images", "");
        const fs::path labels = cfg.text("data.labels", "");
        if (images.empty() || labels.empty()) throw ConfigError("data.images and data.labels are required for idx");
        all = load_idx(images, labels);
        const auto limit = cfg.integer("data.limit", 0);
        if (limit > 0) all = all.slice(0, static_cast<std::size_t>(limit));
    } else {
        throw ConfigError("data.source must be blobs or idx");
    }
    if (eval_size == 0 || eval_size >= all.size()) throw ConfigError("data.eval_size must leave training examples");
    return {all.slice(0, all.size() - eval_size), all.slice(all.size() - eval_size, all.size())};
}

// Member seeds default to six-digit values derived from the global seed.
inline std::vector<std::uint64_t> member_seeds(RunConfig& cfg, std::uint64_t seed)
{
    const auto count = cfg.integer("train.members", 3);
    if (count < 1) throw ConfigError("train.members must be positive");
    std::vector<std::string> fallback;
    for (long long i = 0; i < count; ++i)
        fallback.push_back(std::to_string(derive_seed(seed, "member/" + std::to_string(i)) % 1000000));
    std::vector<std::uint64_t> out;
    for (const auto& s : cfg.list("train.seeds", fallback)) {
        std::uint64_t v = 0;
        const auto r = std::from_chars(s.data(), s.data() + s.size(), v);
        if (r.ec != std::errc{} || r.ptr != s.data() + s.size()) throw ConfigError("bad member seed '" + s + "'");
        out.push_back(v);
    }
    return out;
}

inline TrainConfig train_config(RunConfig& cfg)
{
    TrainConfig t;
    t.epochs = static_cast<int>(cfg.integer("train.epochs", 15));
    t.batch_size = static_cast<std::size_t>(cfg.integer("train.batch_size", 32));
    t.learning_rate = cfg.number("train.learning_rate", t.learning_rate);
    t.momentum = cfg.number("train.momentum", t.momentum);
    try {
        t.validate();
    } catch (const Error& e) {
        throw ConfigError(e.what());
    }
    return t;
}

inline AttackSpec attack_spec(RunConfig& cfg)
{
    AttackSpec s;
    Method method;
    try {
        method = parse_method(cfg.text("attack.method", "dta"));
        s.transform.kind = parse_transform(cfg.text("attack.transform", "none"));
    } catch (const Error& e) {
        throw ConfigError(e.what());
    }
    s.attack = default_config(method);
    s.name = cfg.text("attack.name", "");
    s.attack.eps = cfg.number("attack.eps", 0.03);
    if (!(s.attack.eps > 0.0)) throw ConfigError("attack.eps must be positive");
    s.attack.steps = static_cast<int>(cfg.integer("attack.steps", s.attack.steps));
    if (cfg.has("attack.alpha")) s.attack.step_len = cfg.number("attack.alpha", 0.0);
    s.attack.decay1 = cfg.number("attack.mu1", s.attack.decay1);
    s.attack.decay2 = cfg.number("attack.mu2", s.attack.decay2);
    s.attack.inner_steps = static_cast<int>(cfg.integer("attack.inner_steps", s.attack.inner_steps));
    s.attack.beta = cfg.number("attack.beta", s.attack.beta);
    s.attack.variance_samples = static_cast<int>(cfg.integer("attack.variance_samples", s.attack.variance_samples));
    s.transform.dim_probability = cfg.number("attack.dim_probability", s.transform.dim_probability);
    s.transform.sim_copies = static_cast<int>(cfg.integer("attack.sim_copies", s.transform.sim_copies));
    s.transform.tim_kernel_size = static_cast<int>(cfg.integer("attack.tim_kernel", s.transform.tim_kernel_size));
    const std::string loss = cfg.text("attack.loss", "ce");
    if (loss == "fia")
        s.loss = LossKind::Fia;
    else if (loss != "ce")
        throw ConfigError("attack.loss must be ce or fia");
    s.fia.drop_probability = cfg.number("attack.fia_drop", s.fia.drop_probability);
    s.fia.ensemble_size = static_cast<int>(cfg.integer("attack.fia_ensemble", s.fia.ensemble_size));
    s.prune_rate = cfg.number("attack.prune_rate", 0.0);
    try {
        s.attack.validate();
        s.transform.validate();
        s.fia.validate();
    } catch (const Error& e) {
        throw ConfigError(e.what());
    }
    if (!(s.prune_rate >= 0.0 && s.prune_rate < 1.0)) throw ConfigError("attack.prune_rate must lie in [0, 1)");
    return s;
}

// Adversarial batch file: "GLAB", u32 LE version, u32 LE header length, JSON header, then
// little-endian f64 clean images followed by the adversarial images.
inline constexpr char kBatchMagic[4] = {'G', 'L', 'A', 'B'};

struct AdversarialBatch {
    Dataset clean;
    std::vector<Tensor> adv;
    std::string attack;
    std::string surrogate;
    std::string config_hash;
    double eps = 0.0;
    long grad_calls = 0;
    std::uint64_t seed = 0;
};

inline void save_batch(const AdversarialBatch& b, const fs::path& path)
{
    const nlohmann::json header = {{"attack", b.attack},       {"surrogate", b.surrogate}, {"config_hash", b.config_hash},
                                   {"eps", b.eps},             {"grad_calls", b.grad_calls}, {"seed", b.seed},
                                   {"count", b.clean.size()},  {"height", b.clean.height()}, {"width", b.clean.width()},
                                   {"class_count", b.clean.class_count}, {"labels", b.clean.labels}};
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write adversarial batch " + path.string());
    checkpoint::write_header(out, kBatchMagic, header);
    checkpoint::put_f64s(out, b.clean.images.values());
    for (const auto& a : b.adv) checkpoint::put_f64s(out, a.values());
    if (!out) throw Error("failed writing adversarial batch " + path.string());
}

// Rejects files whose adversarial images leave the eps-ball or [0, 1].
inline AdversarialBatch load_batch(const fs::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open adversarial batch " + path.string());
    const auto h = checkpoint::read_header(in, kBatchMagic);
    AdversarialBatch b;
    b.attack = h.at("attack");
    b.surrogate = h.at("surrogate");
    b.config_hash = h.at("config_hash");
    b.eps = h.at("eps");
    b.grad_calls = h.at("grad_calls");
    b.seed = h.at("seed");
    const std::size_t n = h.at("count"), height = h.at("height"), width = h.at("width");
    b.clean.class_count = h.at("class_count");
    b.clean.labels = h.at("labels").get<std::vector<int>>();
    if (b.clean.labels.size() != n) throw Error("adversarial batch label count mismatch");
    b.clean.images = Tensor({n, height, width});
    checkpoint::get_f64s(in, b.clean.images.values());
    for (std::size_t i = 0; i < n; ++i) {
        Tensor a({height * width});
        checkpoint::get_f64s(in, a.values());
        const Tensor x = b.clean.image(i);
        for (std::size_t j = 0; j < a.size(); ++j)
            if (!(std::abs(a[j] - x[j]) <= b.eps + 1e-12) || a[j] < 0.0 || a[j] > 1.0)
                throw Error("adversarial example " + std::to_string(i) + " in " + path.string() +
                            " leaves the eps-ball");
        b.adv.push_back(std::move(a));
    }
    return b;
}

inline std::string member_name(const fs::path& checkpoint) { return checkpoint.stem().string(); }

// Manifest paths are relative to the manifest's directory.
inline std::vector<fs::path> manifest_checkpoints(const fs::path& manifest)
{
    std::vector<fs::path> out;
    for (const auto& [p, acc] : read_manifest(manifest)) out.push_back(p.is_absolute() ? p : manifest.parent_path() / p);
    return out;
}

inline int cmd_train(RunConfig& cfg, std::ostream& log)
{
    const fs::path dir = prepare_output(cfg);
    const std::uint64_t seed = global_seed(cfg);
    const unsigned nthreads = threads(cfg);
    const DataSplit data = load_data(cfg, seed);
    const TrainConfig base = train_config(cfg);
    const auto seeds = member_seeds(cfg, seed);
    std::vector<std::vector<std::size_t>> widths;
    for (const auto& w : cfg.list("train.widths", {"64x32", "128x64"})) widths.push_back(parse_widths(w));
    const double floor = cfg.number("train.accuracy_floor", kPoolAccuracyFloor);
    cfg.reject_unused();
    write_resolved(cfg, dir);

    const auto pool = train_pool(base, seeds, widths, data.train, data.eval, floor, nthreads);
    fs::create_directories(dir / "checkpoints");
    std::vector<std::pair<fs::path, double>> entries;
    for (const auto& m : pool) {
        const fs::path rel = fs::path("checkpoints") / (m.name + ".glnw");
        save_network(m.net, dir / rel);
        entries.emplace_back(rel, m.accuracy);
        log << m.name << " accuracy " << m.accuracy << '\n';
    }
    write_manifest(dir / "manifest.txt", entries);
    std::ostringstream csv;
    write_pool_accuracy_csv(pool, csv);
    write_text(dir / "pool_accuracy.csv", csv.str());
    return 0;
}

inline int cmd_attack(RunConfig& cfg, std::ostream& log)
{
    const fs::path dir = prepare_output(cfg);
    const std::uint64_t seed = global_seed(cfg);
    const unsigned nthreads = threads(cfg);
    const AttackSpec spec = attack_spec(cfg);
    const fs::path surrogate_path = cfg.text("attack.surrogate", "");
    if (surrogate_path.empty()) throw ConfigError("attack.surrogate checkpoint is required");
    const auto limit = cfg.integer("attack.examples", 0);
    const std::string out_name = cfg.text("attack.output", "adv.glab");
    DataSplit data = load_data(cfg, seed);
    cfg.reject_unused();
    write_resolved(cfg, dir);

    const Network net = load_network(surrogate_path);
    if (net.input_dim() != data.eval.pixels()) throw Error("surrogate input width does not match the data");
    if (limit > 0) data.eval = data.eval.slice(0, static_cast<std::size_t>(limit));
    const std::string name = member_name(surrogate_path);
    const auto batch = craft(net, data.eval, spec, derive_seed(seed, "craft/" + name), true, nthreads);

    AdversarialBatch out{data.eval, batch.adv, spec.label(), name, config_hash(spec), spec.attack.eps,
                         batch.grad_calls, seed};
    save_batch(out, dir / out_name);
    std::ostringstream traces;
    traces << "example,t,linf,loss,grad_calls\n";
    traces.precision(17);
    for (std::size_t i = 0; i < batch.traces.size(); ++i)
        for (const auto& r : batch.traces[i].steps)
            traces << i << ',' << r.t << ',' << r.linf << ',' << r.loss << ',' << r.grad_calls << '\n';
    write_text(dir / (fs::path(out_name).stem().string() + "_traces.csv"), traces.str());
    const long per_example = batch.traces.empty() ? 0 : batch.traces.front().grad_calls();
    log << spec.label() << " on " << name << ": " << data.eval.size() << " examples, grad_calls " << per_example
        << " per example, " << batch.grad_calls << " total\n";
    return 0;
}

inline int cmd_eval(RunConfig& cfg, std::ostream& log)
{
    const fs::path dir = prepare_output(cfg);
    global_seed(cfg);
    std::vector<fs::path> victims;
    if (cfg.has("eval.manifest")) victims = manifest_checkpoints(cfg.text("eval.manifest", ""));
    for (const auto& v : cfg.list("eval.victims", {})) victims.emplace_back(v);
    const auto batches = cfg.list("eval.batches", {});
    cfg.reject_unused();
    if (victims.empty()) throw ConfigError("eval needs at least one victim");
    if (batches.empty()) throw ConfigError("eval needs at least one adversarial batch");
    write_resolved(cfg, dir);

    std::vector<std::string> names;
    std::vector<Network> nets;
    for (const auto& v : victims) {
        nets.push_back(load_network(v));
        names.push_back(member_name(v));
    }
    std::vector<TransferReport> reports;
    for (const auto& path : batches) {
        const AdversarialBatch b = load_batch(path);
        TransferReport r;
        r.surrogate = b.surrogate;
        r.attack = b.attack;
        r.grad_calls = b.grad_calls;
        r.seed = b.seed;
        r.config_hash = b.config_hash;
        r.victims = names;
        r.white_box_asr = std::nan("");
        for (std::size_t v = 0; v < nets.size(); ++v) {
            r.asr.push_back(asr(nets[v], b.clean, b.adv));
            if (names[v] == b.surrogate) r.white_box_asr = r.asr.back();
        }
        reports.push_back(std::move(r));
    }
    std::ostringstream csv, table;
    write_transfer_csv(reports, csv);
    write_summary_table(reports, table);
    write_text(dir / "transfer.csv", csv.str());
    write_text(dir / "summary.txt", table.str());
    log << table.str();
    return 0;
}

inline const std::vector<std::string>& repro_suites()
{
    static const std::vector<std::string> s{"transfer", "alpha-sweep", "sensitivity", "alignment"};
    return s;
}

inline DeskPreset desk_preset(RunConfig& cfg)
{
    DeskPreset p;
    p.seed = global_seed(cfg, p.seed);
    p.threads = threads(cfg);
    p.pools = static_cast<int>(cfg.integer("desk.pools", p.pools));
    p.eval_size = static_cast<std::size_t>(cfg.integer("desk.eval_size", static_cast<long long>(p.eval_size)));
    p.train_size = static_cast<std::size_t>(cfg.integer("desk.train_size", static_cast<long long>(p.train_size)));
    p.train.epochs = static_cast<int>(cfg.integer("desk.epochs", p.train.epochs));
    p.eps = cfg.number("desk.eps", p.eps);
    p.variance_samples = static_cast<int>(cfg.integer("desk.variance_samples", p.variance_samples));
    try {
        p.validate();
    } catch (const Error& e) {
        throw ConfigError(e.what());
    }
    return p;
}

template <class F>
auto stage(const std::string& name, F&& body)
{
    try {
        return body();
    } catch (const ConfigError&) {
        throw;
    } catch (const std::exception& e) {
        throw StageError(name, e.what());
    }
}

inline int cmd_repro(const std::string& suite, RunConfig& cfg, std::ostream& log)
{
    const fs::path dir = prepare_output(cfg);
    const DeskPreset preset = desk_preset(cfg);
    cfg.reject_unused();
    write_resolved(cfg, dir);

    const auto pools = stage("train", [&] { return build_desk_pools(preset); });
    std::ostringstream accuracy;
    for (const auto& p : pools) write_pool_accuracy_csv(p.members, accuracy);
    write_text(dir / "pool_accuracy.csv", accuracy.str());

    ContainmentAudit audit;
    std::vector<CriterionResult> results;
    std::ostringstream summary, sweeps;
    if (suite == "transfer" || suite == "alignment") {
        const auto attacks = suite == "transfer" ? desk_attacks(preset) : alignment_attacks(preset);
        const auto s = stage("attack", [&] { return run_transfer_suite(pools, attacks, audit, preset.threads); });
        write_suite_summary(s, summary);
        std::ostringstream matrix;
        for (const auto& reports : s.reports) write_transfer_csv(reports, matrix);
        write_text(dir / "transfer.csv", matrix.str());
        if (suite == "transfer") {
            results.push_back(transfer_ordering(s, pools.size(), 900.0));
            results.push_back(pruning_effect(s));
            results.push_back(oscillation_inequality(s.direction));
        } else {
            results.push_back(alignment_ordering(s));
        }
    } else if (suite == "alpha-sweep") {
        const auto curves = stage("sweep", [&] { return run_alpha_sweep(pools, preset, audit); });
        write_sweep_csv(curves, sweeps);
        results.push_back(step_length_trend(curves, preset.eps));
    } else {
        const std::vector<AttackSpec> baselines{desk_spec(preset, Method::NiFgsm), desk_spec(preset, Method::Dta)};
        const auto s = stage("attack", [&] { return run_transfer_suite(pools, baselines, audit, preset.threads); });
        const auto curves = stage("sweep", [&] { return run_sensitivity(pools, preset, audit); });
        write_suite_summary(s, summary);
        write_sweep_csv(curves, sweeps);
        results.push_back(sensitivity_anchors(curves, s));
    }
    results.push_back(containment(audit));
    std::sort(results.begin(), results.end(), [](const auto& a, const auto& b) { return a.id < b.id; });

    if (!summary.str().empty()) write_text(dir / "summary.csv", summary.str());
    if (!sweeps.str().empty()) write_text(dir / "sweep.csv", sweeps.str());
    std::ostringstream report;
    write_criteria(results, report);
    write_text(dir / "report.txt", report.str());
    log << report.str();
    return 0;
}

// Exit codes: 0 success, 1 runtime failure, 2 configuration or usage error.
inline int run(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr)
{
    CLI::App app{"gradlab: transfer-attack experiments on small networks"};
    app.require_subcommand(1);
    std::string config_path, suite, output;

    auto* train = app.add_subcommand("train", "train a model pool and write checkpoints plus a manifest");
    train->add_option("config", config_path, "config file")->required();
    auto* attack = app.add_subcommand("attack", "craft adversarial examples on a surrogate checkpoint");
    attack->add_option("config", config_path, "config file")->required();
    auto* eval = app.add_subcommand("eval", "score adversarial batches against victim checkpoints");
    eval->add_option("config", config_path, "config file")->required();
    auto* repro = app.add_subcommand("repro", "run a desk-scale reproduction suite");
    repro->add_option("suite", suite, "transfer, alpha-sweep, sensitivity or alignment")
        ->required()
        ->check(CLI::IsMember(repro_suites()));
    repro->add_option("--config", config_path, "optional config overriding the desk preset");
    repro->add_option("-o,--output", output, "output directory");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? 0 : 2;
    }

    try {
        RunConfig cfg = config_path.empty() ? RunConfig{} : RunConfig::load(config_path);
        if (!output.empty()) cfg.set("run.output", output);
        if (*train) return cmd_train(cfg, out);
        if (*attack) return cmd_attack(cfg, out);
        if (*eval) return cmd_eval(cfg, out);
        return cmd_repro(suite, cfg, out);
    } catch (const ConfigError& e) {
        err << "config error: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return 1;
    }
}

} // namespace gradlab::cli

#endif // GRADLAB_CLI_HPP
