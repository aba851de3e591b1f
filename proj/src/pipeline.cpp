// SPDX-License-Identifier: Apache-2.0
#include "mmreg/pipeline.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <set>
#include <sstream>

#include "mmreg/error.hpp"
#include "mmreg/metrics.hpp"
#include "mmreg/rng.hpp"

namespace mmreg {

namespace {

using nlohmann::json;

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

// Shortest text that parses back to the same double.
std::string fmt_double(double v) {
    char buf[64];
    const auto r = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, r.ptr);
}

double parse_double(const std::string& key, const std::string& s) {
    double v = 0.0;
    const auto r = std::from_chars(s.data(), s.data() + s.size(), v);
    if (r.ec != std::errc() || r.ptr != s.data() + s.size() || !std::isfinite(v))
        fail("config: '" + key + "' expects a finite number, got '" + s + "'");
    return v;
}

std::uint64_t parse_u64(const std::string& key, const std::string& s) {
    std::uint64_t v = 0;
    const auto r = std::from_chars(s.data(), s.data() + s.size(), v);
    if (r.ec != std::errc() || r.ptr != s.data() + s.size() || s.empty())
        fail("config: '" + key + "' expects a non-negative integer, got '" + s + "'");
    return v;
}

std::size_t parse_size(const std::string& key, const std::string& s) {
    return static_cast<std::size_t>(parse_u64(key, s));
}

bool parse_bool(const std::string& key, const std::string& s) {
    if (s == "true") return true;
    if (s == "false") return false;
    fail("config: '" + key + "' expects true or false, got '" + s + "'");
}

std::vector<std::string> split_list(const std::string& s) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) out.push_back(trim(item));
    return out;
}

std::vector<std::size_t> parse_size_list(const std::string& key, const std::string& s) {
    std::vector<std::size_t> out;
    for (const auto& item : split_list(s)) out.push_back(parse_size(key, item));
    return out;
}

std::vector<double> parse_double_list(const std::string& key, const std::string& s) {
    std::vector<double> out;
    for (const auto& item : split_list(s)) out.push_back(parse_double(key, item));
    return out;
}

template <class T, class F>
std::string join(const std::vector<T>& v, F fmt) {
    std::string out;
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (i > 0) out += ", ";
        out += fmt(v[i]);
    }
    return out;
}

std::string fmt_size(std::size_t v) { return std::to_string(v); }

struct KeySpec {
    const char* section;
    const char* name;
    const char* doc;
    std::function<std::string(const RunConfig&)> get;
    std::function<void(RunConfig&, const std::string&)> set;
};

#define MMREG_DOUBLE(sec, key, field, doc)                                                                         \
    KeySpec {                                                                                                      \
        sec, key, doc, [](const RunConfig& c) { return fmt_double(c.field); },                                    \
            [](RunConfig& c, const std::string& v) { c.field = parse_double(key, v); }                             \
    }
#define MMREG_SIZE(sec, key, field, doc)                                                                           \
    KeySpec {                                                                                                      \
        sec, key, doc, [](const RunConfig& c) { return fmt_size(c.field); },                                      \
            [](RunConfig& c, const std::string& v) { c.field = parse_size(key, v); }                               \
    }

const std::vector<KeySpec>& key_table() {
    static const std::vector<KeySpec> table = {
        {"run", "seed", "run seed; drives data, initialization and minibatch order",
         [](const RunConfig& c) { return std::to_string(c.seed); },
         [](RunConfig& c, const std::string& v) { c.seed = parse_u64("seed", v); }},
        {"run", "output_dir", "directory owned by this run (path)", [](const RunConfig& c) { return c.output_dir; },
         [](RunConfig& c, const std::string& v) {
             require(!v.empty(), "config: 'output_dir' must not be empty");
             c.output_dir = v;
         }},

        MMREG_SIZE("data", "data.n_samples", data.n_samples, "total samples [desk-scale]"),
        MMREG_DOUBLE("data", "data.target_lo", data.target_lo, "lowest target value (index units) [desk-scale]"),
        MMREG_DOUBLE("data", "data.target_hi", data.target_hi, "highest target value (index units) [desk-scale]"),
        MMREG_DOUBLE("data", "data.tail_exponent", data.tail_exponent,
                     "Beta(1, k) shape; larger k means a longer tail toward target_lo"),
        {"data", "data.modality_dims", "feature width per modality (comma list)",
         [](const RunConfig& c) { return join(c.data.modality_dims, fmt_size); },
         [](RunConfig& c, const std::string& v) {
             c.data.modality_dims = parse_size_list("data.modality_dims", v);
             c.arch.modality_dims = c.data.modality_dims;
         }},
        {"data", "data.noise_scales", "feature noise std per modality (comma list)",
         [](const RunConfig& c) { return join(c.data.noise_scales, fmt_double); },
         [](RunConfig& c, const std::string& v) { c.data.noise_scales = parse_double_list("data.noise_scales", v); }},
        MMREG_DOUBLE("data", "data.train_fraction", train_fraction, "train share of the stratified split"),

        MMREG_DOUBLE("groups", "groups.bin_width", groups.bin_width, "histogram bin width (index units)"),
        MMREG_SIZE("groups", "groups.many_min", groups.many_min, "bins with at least this many samples are Many"),
        MMREG_SIZE("groups", "groups.few_max", groups.few_max, "bins with at most this many samples are Few"),

        {"arch", "arch.encoder_hidden", "encoder layer widths (comma list) [desk-scale]",
         [](const RunConfig& c) { return join(c.arch.encoder_hidden, fmt_size); },
         [](RunConfig& c, const std::string& v) { c.arch.encoder_hidden = parse_size_list("arch.encoder_hidden", v); }},
        MMREG_SIZE("arch", "arch.embed_dim", arch.embed_dim, "contrastive embedding width"),
        {"arch", "arch.fusion_hidden", "fusion head hidden widths (comma list, may be empty)",
         [](const RunConfig& c) { return join(c.arch.fusion_hidden, fmt_size); },
         [](RunConfig& c, const std::string& v) {
             c.arch.fusion_hidden = trim(v).empty() ? std::vector<std::size_t>{}
                                                    : parse_size_list("arch.fusion_hidden", v);
         }},

        MMREG_SIZE("stage1", "stage1.epochs", stage1_epochs, "pretraining epochs per modality [desk-scale]"),
        MMREG_DOUBLE("stage1", "stage1.lr", stage1_lr, "Adam step size [reference default]"),
        MMREG_DOUBLE("stage1", "stage1.margin0", margin.m0, "initial margin (index units) [reference default]"),
        MMREG_DOUBLE("stage1", "stage1.margin_decay", margin.beta, "margin decay per iteration [reference default]"),
        MMREG_SIZE("stage1", "stage1.warmup_iters", margin.t_n, "iterations before the margin starts to decay"),
        MMREG_DOUBLE("stage1", "stage1.lambda", loss.lambda_supcon, "contrastive term weight"),
        MMREG_DOUBLE("stage1", "stage1.tau", loss.tau, "contrastive temperature"),

        MMREG_DOUBLE("loss", "loss.w_smape", loss.w_smape, "SMAPE weight in the regression loss"),
        MMREG_DOUBLE("loss", "loss.w_r2", loss.w_r2, "(1 - R^2) weight in the regression loss"),

        MMREG_SIZE("stage2", "stage2.epochs", stage2_epochs, "joint training epochs [desk-scale]"),
        MMREG_DOUBLE("sgm", "sgm.gamma_base", sgm.gamma_base, "base modulation factor"),
        MMREG_DOUBLE("sgm", "sgm.gamma_min", sgm.gamma_min, "lower gamma clip [reference default]"),
        MMREG_DOUBLE("sgm", "sgm.gamma_max", sgm.gamma_max, "upper gamma clip [reference default]"),
        MMREG_DOUBLE("sgm", "sgm.eps_probe", sgm.eps_probe, "sharpness probe radius (parameter units)"),
        MMREG_SIZE("sgm", "sgm.probe_steps", sgm.probe_steps, "normalized steps per probe direction"),
        MMREG_SIZE("sgm", "sgm.window_len", sgm.window_len, "sharpness window length (steps)"),
        MMREG_DOUBLE("sgm", "sgm.lr", sgm.eta, "Adam step size for joint and baseline training [reference default]"),
        MMREG_DOUBLE("sgm", "sgm.beta1", sgm.beta1, "Adam first-moment decay"),
        MMREG_DOUBLE("sgm", "sgm.beta2", sgm.beta2, "Adam second-moment decay"),
        MMREG_DOUBLE("sgm", "sgm.adam_eps", sgm.adam_eps, "Adam denominator guard"),
        {"sgm", "sgm.force_uniform", "always use (0.5, 0.5) weights (true/false)",
         [](const RunConfig& c) { return std::string(c.sgm.force_uniform ? "true" : "false"); },
         [](RunConfig& c, const std::string& v) { c.sgm.force_uniform = parse_bool("sgm.force_uniform", v); }},

        MMREG_SIZE("baseline", "baseline.epochs", baseline_epochs,
                   "naive joint epochs; equals stage1 + stage2 epochs for a matched budget"),
        MMREG_SIZE("train", "train.batch_size", batch_size, "minibatch size [reference default]"),

        MMREG_SIZE("probe", "probe.steps", probe_steps, "double-well optimizer steps"),
        MMREG_DOUBLE("probe", "probe.start", probe_start, "double-well start point"),
        MMREG_DOUBLE("probe", "probe.eta", probe_eta, "double-well step size"),
        MMREG_DOUBLE("probe", "probe.noise_std", probe_noise_std, "gradient noise std on the probe"),
        MMREG_DOUBLE("probe", "probe.eps", probe_eps, "sharpness probe radius on the probe"),
        MMREG_SIZE("theory", "theory.containment_trials", containment_trials, "adversarial containment trials"),
    };
    return table;
}

#undef MMREG_DOUBLE
#undef MMREG_SIZE

const KeySpec& find_key(const std::string& key) {
    for (const auto& k : key_table())
        if (key == k.name) return k;
    fail("config: unknown key '" + key + "'");
}

void ensure_dir(const std::string& dir) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) fail_io("cannot create output directory '" + dir + "': " + ec.message());
}

void write_text(const std::string& path, const std::string& text) {
    std::ofstream f(path, std::ios::binary);
    if (!f) fail_io("cannot open '" + path + "' for writing");
    f << text;
    if (!f) fail_io("write failed for '" + path + "'");
}

void write_json(const std::string& path, const json& j) { write_text(path, j.dump(2) + "\n"); }

void require_file(const std::string& path, const std::string& what) {
    if (!std::filesystem::exists(path)) fail_io("missing " + what + " '" + path + "'");
}

json counts_json(const std::array<std::size_t, 3>& c) {
    return json{{"Many", c[0]}, {"Middle", c[1]}, {"Few", c[2]}};
}

// Minibatch row lists for one epoch; the final partial batch is kept.
std::vector<std::vector<std::size_t>> epoch_batches(std::size_t n, std::size_t batch_size, Rng& rng) {
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    rng.shuffle(order);
    std::vector<std::vector<std::size_t>> out;
    for (std::size_t b = 0; b < n; b += batch_size)
        out.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(b),
                         order.begin() + static_cast<std::ptrdiff_t>(std::min(n, b + batch_size)));
    return out;
}

class JsonlWriter {
  public:
    explicit JsonlWriter(const std::string& path) : path_(path), f_(path, std::ios::binary) {
        if (!f_) fail_io("cannot open '" + path + "' for writing");
    }
    void write(const json& j) {
        f_ << j.dump() << "\n";
        if (!f_) fail_io("write failed for '" + path_ + "'");
    }

  private:
    std::string path_;
    std::ofstream f_;
};

TwoBranchNet load_matching(const std::string& path, const ArchSpec& arch) {
    require_file(path, "checkpoint");
    TwoBranchNet net = load_checkpoint(path);
    if (!(net.arch() == arch)) fail("checkpoint '" + path + "' does not match the configured architecture");
    return net;
}

double mean_of(const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x;
    return v.empty() ? 0.0 : s / static_cast<double>(v.size());
}

} // namespace

void RunConfig::validate() const {
    data_spec().validate();
    groups.validate();
    arch_spec().validate();
    margin.validate();
    loss.validate();
    sgm.validate();
    require(train_fraction > 0.0 && train_fraction < 1.0, "config: data.train_fraction must be in (0, 1)");
    require(stage1_epochs >= 1 && stage2_epochs >= 1 && baseline_epochs >= 1, "config: epochs must be >= 1");
    require(batch_size >= 2, "config: train.batch_size must be >= 2 so contrastive batches contain pairs");
    require(stage1_lr > 0.0, "config: stage1.lr must be > 0");
    require(probe_steps >= 2, "config: probe.steps must be >= 2");
    require(probe_eta > 0.0 && probe_eps > 0.0 && probe_noise_std >= 0.0, "config: invalid probe settings");
    require(containment_trials >= 1, "config: theory.containment_trials must be >= 1");
}

LongTailSpec RunConfig::data_spec() const {
    LongTailSpec s = data;
    s.seed = seed;
    return s;
}

ArchSpec RunConfig::arch_spec() const {
    ArchSpec a = arch;
    a.modality_dims = data.modality_dims;
    a.seed = seed;
    return a;
}

theory::SuiteOptions RunConfig::suite_options() const {
    theory::SuiteOptions o;
    o.seed = seed;
    o.containment_trials = containment_trials;
    o.probe_steps = probe_steps;
    o.probe.eta = probe_eta;
    o.probe.noise_std = probe_noise_std;
    o.probe.sgm = sgm;
    o.probe.sgm.eps_probe = probe_eps;
    return o;
}

void set_config_value(RunConfig& c, const std::string& key, const std::string& value) {
    find_key(trim(key)).set(c, trim(value));
}

RunConfig parse_config(const std::string& text) {
    RunConfig c;
    std::set<std::string> seen;
    std::istringstream in(text);
    std::string raw;
    std::size_t lineno = 0;
    while (std::getline(in, raw)) {
        ++lineno;
        std::string line = raw;
        if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) fail("config line " + std::to_string(lineno) + ": expected 'key = value'");
        const std::string key = trim(line.substr(0, eq));
        if (!seen.insert(key).second) fail("config line " + std::to_string(lineno) + ": duplicate key '" + key + "'");
        try {
            set_config_value(c, key, line.substr(eq + 1));
        } catch (const Error& e) {
            throw Error(e.kind(), "config line " + std::to_string(lineno) + ": " + e.what());
        }
    }
    c.validate();
    return c;
}

RunConfig load_config(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) fail_io("cannot open config '" + path + "'");
    std::ostringstream ss;
    ss << f.rdbuf();
    return parse_config(ss.str());
}

std::string render_config(const RunConfig& c) {
    std::ostringstream os;
    os << "# mmreg run configuration. Format: key = value, '#' starts a comment.\n";
    os << "# [reference default] marks published settings, [desk-scale] marks values\n";
    os << "# reduced so the full pipeline runs in minutes on one core.\n";
    std::string section;
    for (const auto& k : key_table()) {
        if (section != k.section) {
            section = k.section;
            os << "\n# --- " << section << " ---\n";
        }
        os << "# " << k.doc << "\n" << k.name << " = " << k.get(c) << "\n";
    }
    return os.str();
}

void write_config_files(const RunConfig& c, const std::string& source_text) {
    RunPaths p{c.output_dir};
    ensure_dir(p.dir);
    write_text(p.config_snapshot(), source_text.empty() ? render_config(c) : source_text);
    write_text(p.config_resolved(), render_config(c));
}

json cmd_gen_data(const RunConfig& c) {
    c.validate();
    RunPaths p{c.output_dir};
    ensure_dir(p.dir);
    const Dataset all = generate(c.data_spec(), c.groups);
    const Split s = split(all, c.train_fraction, c.seed);
    write_csv(s.train, p.train_csv());
    write_csv(s.test, p.test_csv());

    const auto ys = all.targets();
    json levels = json::object();
    for (int code : kLevelCodes) levels[std::to_string(code)] = 0;
    for (double y : ys) levels[std::to_string(level_for(y))] = levels[std::to_string(level_for(y))].get<int>() + 1;

    json j{{"schema_version", kSchemaVersion},
           {"n_total", all.size()},
           {"n_train", s.train.size()},
           {"n_test", s.test.size()},
           {"modality_dims", all.modality_dims},
           {"target_min", *std::min_element(ys.begin(), ys.end())},
           {"target_max", *std::max_element(ys.begin(), ys.end())},
           {"group_thresholds",
            {{"bin_width", c.groups.bin_width}, {"many_min", c.groups.many_min}, {"few_max", c.groups.few_max}}},
           {"group_counts",
            {{"all", counts_json(all.group_counts())},
             {"train", counts_json(s.train.group_counts())},
             {"test", counts_json(s.test.group_counts())}}},
           {"level_codes", kLevelCodes},
           {"level_counts", levels},
           {"files", {{"train", p.train_csv()}, {"test", p.test_csv()}}}};
    write_json(p.data_summary(), j);
    return j;
}

json cmd_pretrain(const RunConfig& c) {
    c.validate();
    RunPaths p{c.output_dir};
    require_file(p.train_csv(), "training data");
    const Dataset train = read_csv(p.train_csv());
    require(train.modality_dims == c.data.modality_dims, "pretrain: training data modality dims differ from config");
    require(train.size() >= 1, "pretrain: empty training set");

    TwoBranchNet net(c.arch_spec());
    JsonlWriter log(p.pretrain_log());
    json per_modality = json::array();
    for (std::size_t k = 0; k < net.modalities(); ++k) {
        const auto idx = net.modality_indices(static_cast<int>(k));
        AdamState adam(net.values());
        Rng rng(mix_seed(c.seed, 0x5100 + k));
        std::size_t t = 0;
        std::vector<double> first_epoch, last_epoch;
        for (std::size_t epoch = 0; epoch < c.stage1_epochs; ++epoch) {
            std::vector<double> epoch_losses;
            for (const auto& rows : epoch_batches(train.size(), c.batch_size, rng)) {
                const Batch batch = make_batch(train, rows);
                Tape tape;
                const auto params = bind_params(tape, net.values());
                const auto out = forward_branch(net, params, tape, batch, static_cast<int>(k));
                const auto terms = stage1_loss(out, batch, t, c.margin, c.loss);
                const auto all_grads = tape.param_grads(terms.total, params.size());
                std::vector<Tensor> grads(params.size());
                for (std::size_t i : idx) grads[i] = all_grads[i];
                auto values = net.values();
                adam.update(values, grads, c.stage1_lr, c.sgm.beta1, c.sgm.beta2, c.sgm.adam_eps);
                net.set_values(values);

                const double loss = terms.total.item();
                epoch_losses.push_back(loss);
                log.write(json{{"modality", k},
                               {"epoch", epoch},
                               {"step", t},
                               {"margin", terms.margin},
                               {"loss", loss},
                               {"regression", terms.regression.item()},
                               {"supcon", terms.supcon.item()},
                               {"batch", batch.size()}});
                ++t;
            }
            if (epoch == 0) first_epoch = epoch_losses;
            last_epoch = epoch_losses;
        }
        save_checkpoint(net, p.pretrain_ckpt(k));
        per_modality.push_back(json{{"modality", k},
                                    {"steps", t},
                                    {"first_epoch_mean_loss", mean_of(first_epoch)},
                                    {"last_epoch_mean_loss", mean_of(last_epoch)},
                                    {"final_margin", margin_at(t == 0 ? 0 : t - 1, c.margin)},
                                    {"checkpoint", p.pretrain_ckpt(k)}});
    }
    json j{{"schema_version", kSchemaVersion}, {"modalities", per_modality}, {"log", p.pretrain_log()}};
    write_json(p.pretrain_summary(), j);
    return j;
}

// Both joint modes share one minibatch order so their comparison sees the same data stream.
constexpr std::uint64_t kJointStream = 0x5200;

json cmd_train_joint(const RunConfig& c, bool baseline) {
    c.validate();
    RunPaths p{c.output_dir};
    require_file(p.train_csv(), "training data");
    const Dataset train = read_csv(p.train_csv());
    require(train.modality_dims == c.data.modality_dims, "train-joint: training data modality dims differ from config");

    const ArchSpec arch = c.arch_spec();
    TwoBranchNet net(arch);

    double gamma_lo = std::numeric_limits<double>::infinity();
    double gamma_hi = -std::numeric_limits<double>::infinity();
    std::size_t steps = 0, minnorm_steps = 0;
    std::vector<double> first_epoch, last_epoch;

    const auto run_epochs = [&](std::size_t epochs, std::uint64_t stream, const std::string& log_path,
                                const std::function<StepReport(const Batch&)>& step) {
        JsonlWriter log(log_path);
        Rng rng(mix_seed(c.seed, stream));
        for (std::size_t epoch = 0; epoch < epochs; ++epoch) {
            std::vector<double> losses;
            for (const auto& rows : epoch_batches(train.size(), c.batch_size, rng)) {
                const Batch batch = make_batch(train, rows);
                const StepReport r = step(batch);
                json line = json::parse(r.to_json());
                line["epoch"] = epoch;
                log.write(line);
                losses.push_back(r.loss_total);
                gamma_lo = std::min(gamma_lo, r.gamma);
                gamma_hi = std::max(gamma_hi, r.gamma);
                if (r.minnorm) ++minnorm_steps;
                ++steps;
            }
            if (epoch == 0) first_epoch = losses;
            last_epoch = losses;
        }
    };

    json j{{"schema_version", kSchemaVersion}, {"mode", baseline ? "baseline" : "sgm"}};
    if (baseline) {
        AdamState adam(net.values());
        run_epochs(c.baseline_epochs, kJointStream, p.baseline_log(),
                   [&](const Batch& b) { return joint_adam_step(net, b, adam, c.sgm, c.loss); });
        save_checkpoint(net, p.baseline_ckpt());
        j["checkpoint"] = p.baseline_ckpt();
        j["log"] = p.baseline_log();
    } else {
        // Encoders, projections and unimodal heads come from stage 1; the fusion head starts fresh.
        for (std::size_t k = 0; k < net.modalities(); ++k) {
            const TwoBranchNet pre = load_matching(p.pretrain_ckpt(k), arch);
            for (std::size_t i : net.modality_indices(static_cast<int>(k)))
                net.params()[i].value = pre.params()[i].value;
        }
        SgmState state(net, c.sgm);
        run_epochs(c.stage2_epochs, kJointStream, p.joint_log(),
                   [&](const Batch& b) { return sgm_step(net, b, state, c.sgm, c.loss); });
        save_checkpoint(net, p.joint_ckpt());
        j["checkpoint"] = p.joint_ckpt();
        j["log"] = p.joint_log();
        j["minnorm_steps"] = minnorm_steps;
        j["gamma_min_seen"] = gamma_lo;
        j["gamma_max_seen"] = gamma_hi;
    }
    j["steps"] = steps;
    j["first_epoch_mean_loss"] = mean_of(first_epoch);
    j["last_epoch_mean_loss"] = mean_of(last_epoch);
    write_json(baseline ? p.baseline_summary() : p.joint_summary(), j);
    return j;
}

json cmd_eval(const RunConfig& c) {
    c.validate();
    RunPaths p{c.output_dir};
    require_file(p.test_csv(), "test data");
    const Dataset test = read_csv(p.test_csv());
    const Batch batch = make_batch(test);
    const ArchSpec arch = c.arch_spec();

    json models = json::object();
    std::map<std::string, GroupedReport> reports;
    for (const auto& [name, path] : {std::pair<std::string, std::string>{"sgm", p.joint_ckpt()},
                                     std::pair<std::string, std::string>{"baseline", p.baseline_ckpt()}}) {
        if (!std::filesystem::exists(path)) continue;
        const TwoBranchNet net = load_matching(path, arch);
        const auto norm = predict_mm(net, batch);
        std::vector<double> pred(norm.size());
        for (std::size_t i = 0; i < norm.size(); ++i) pred[i] = postprocess(norm[i], batch.levels[i]);
        reports[name] = grouped_eval(test, pred);
        models[name] = to_json(reports[name]);
        models[name]["checkpoint"] = path;
    }
    if (reports.empty()) fail_io("eval: no trained checkpoint in '" + p.dir + "'");

    json j{{"schema_version", kSchemaVersion}, {"n_test", test.size()}, {"models", models}};
    if (reports.count("sgm") && reports.count("baseline")) {
        const auto& a = reports.at("sgm");
        const auto& b = reports.at("baseline");
        json cmp{{"mse_sgm", a.overall.mse}, {"mse_baseline", b.overall.mse},
                 {"sgm_mse_le_baseline", a.overall.mse <= b.overall.mse}};
        if (a.per_group.count(Group::Few) && b.per_group.count(Group::Few)) {
            cmp["few_mse_sgm"] = a.per_group.at(Group::Few).mse;
            cmp["few_mse_baseline"] = b.per_group.at(Group::Few).mse;
            cmp["sgm_few_mse_le_baseline"] = a.per_group.at(Group::Few).mse <= b.per_group.at(Group::Few).mse;
        }
        j["comparison"] = cmp;
    }
    write_json(p.metrics(), j);
    return j;
}

json cmd_theory(const RunConfig& c, bool* passed) {
    c.validate();
    const auto checks = theory::run_suite(c.suite_options());
    json j = theory::suite_json(checks);
    json failing = json::array();
    for (const auto& chk : checks)
        if (!chk.passed) failing.push_back(chk.name);
    j["failing"] = failing;
    if (passed != nullptr) *passed = failing.empty();
    RunPaths p{c.output_dir};
    ensure_dir(p.dir);
    write_json(p.theory(), j);
    return j;
}

json cmd_probe(const RunConfig& c) {
    c.validate();
    const auto opt = c.suite_options();
    const auto wells = theory::default_wells();
    const auto sgm = theory::double_well_probe(wells, theory::ProbeOptimizer::Sgm, 0.0, c.probe_start, c.probe_steps,
                                               c.seed, opt.probe);
    const auto fixed = theory::double_well_probe(wells, theory::ProbeOptimizer::FixedGamma, c.sgm.gamma_min,
                                                 c.probe_start, c.probe_steps, c.seed, opt.probe);
    const double rho = theory::pearson(sgm.sharpness_trace, sgm.gamma_trace);

    RunPaths p{c.output_dir};
    ensure_dir(p.dir);
    std::ostringstream csv;
    csv << "step,u_sgm,sharpness,gamma,u_fixed\n";
    for (std::size_t t = 0; t < sgm.sharpness_trace.size(); ++t)
        csv << t << "," << fmt_double(sgm.u_trace[t]) << "," << fmt_double(sgm.sharpness_trace[t]) << ","
            << fmt_double(sgm.gamma_trace[t]) << "," << fmt_double(fixed.u_trace[t]) << "\n";
    write_text(p.probe_trace(), csv.str());

    json j{{"schema_version", kSchemaVersion},
           {"wells", {{"centers", wells.centers}, {"depths", wells.depths}, {"widths", wells.widths}}},
           {"start", c.probe_start},
           {"steps", c.probe_steps},
           {"sgm", {{"final_u", sgm.final_u}, {"final_sharpness", sgm.final_sharpness}, {"pearson_s_gamma", rho}}},
           {"fixed_gamma",
            {{"gamma", c.sgm.gamma_min}, {"final_u", fixed.final_u}, {"final_sharpness", fixed.final_sharpness}}},
           {"trace", p.probe_trace()}};
    write_json(p.probe(), j);
    return j;
}

} // namespace mmreg
