#include "flowlab/config.hpp"

#include "flowlab/errors.hpp"
#include "flowlab/rng.hpp"

#include <chrono>
#include <cmath>
#include <ctime>
#include <set>

namespace flowlab {

namespace {

using io::Json;

// Object reader that remembers which keys were consumed so leftovers can be
// reported as unknown.
class Section {
  public:
    Section(const Json& j, std::string path) : j_(j), path_(std::move(path)) {
        require(j_.is_object(), Errc::ConfigError, where() + " must be an object");
    }

    [[nodiscard]] bool has(const std::string& key) const { return j_.contains(key); }

    template <typename T>
    void get(const std::string& key, T& out) {
        if (!j_.contains(key)) return;
        seen_.insert(key);
        try {
            out = j_.at(key).get<T>();
        } catch (const nlohmann::json::exception&) {
            fail(Errc::ConfigError, field(key) + " has the wrong type");
        }
    }

    const Json& child(const std::string& key) {
        seen_.insert(key);
        return j_.at(key);
    }

    [[nodiscard]] std::string field(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }
    [[nodiscard]] std::string where() const { return path_.empty() ? "config" : path_; }

    void finish() const {
        for (const auto& [key, value] : j_.items())
            require(seen_.count(key) != 0, Errc::ConfigError, "unknown key '" + field(key) + "'");
    }

  private:
    const Json& j_;
    std::string path_;
    std::set<std::string> seen_;
};

void check(bool ok, const std::string& field, const std::string& rule) {
    require(ok, Errc::ConfigError, field + " " + rule);
}

BenchmarkSpec parse_benchmark(const Json& j) {
    Section s(j, "benchmark");
    BenchmarkSpec b;
    s.get("dim", b.dim);
    s.get("classes", b.classes);
    s.get("train_per_task", b.train_per_task);
    s.get("test_per_task", b.test_per_task);
    s.get("rotation", b.rotation);
    s.get("shift", b.shift);
    s.get("noise", b.noise);
    s.get("separation", b.separation);
    s.get("hidden", b.hidden);
    s.finish();
    try {
        validate(b);
    } catch (const Error& e) {
        fail(Errc::ConfigError, std::string("benchmark: ") + e.what());
    }
    return b;
}

void parse_schedule(Section& s, TrainConfig& cfg) {
    s.get("learning_rate", cfg.learning_rate);
    s.get("epochs", cfg.epochs);
    s.get("batch_size", cfg.batch_size);
    s.get("seed", cfg.seed);
    s.get("probe_learning_rate", cfg.probe_learning_rate);
    s.get("probe_epochs", cfg.probe_epochs);
    check(std::isfinite(cfg.learning_rate) && cfg.learning_rate > 0, s.field("learning_rate"), "must be > 0");
    check(cfg.epochs >= 1, s.field("epochs"), "must be >= 1");
    check(cfg.batch_size >= 0, s.field("batch_size"), "must be >= 1 (or 0 for full batch)");
    check(std::isfinite(cfg.probe_learning_rate) && cfg.probe_learning_rate > 0, s.field("probe_learning_rate"),
          "must be > 0");
    check(cfg.probe_epochs >= 1, s.field("probe_epochs"), "must be >= 1");
}

TemperaturePolicy parse_policy(Section& s) {
    std::string text = "median";
    s.get("temperature", text);
    try {
        return TemperaturePolicy::parse(text);
    } catch (const Error& e) {
        fail(Errc::ConfigError, s.field("temperature") + ": " + e.what());
    }
}

std::vector<double> parse_grid(Section& s, const std::string& key, double lo, double hi, bool open) {
    std::vector<double> out;
    s.get(key, out);
    for (double v : out)
        check(open ? (v > lo && v < hi) : (v >= lo && v <= hi), s.field(key),
              open ? "entries must lie in (" + io::format_double(lo) + ", " + io::format_double(hi) + ")"
                   : "entries must lie in [" + io::format_double(lo) + ", " + io::format_double(hi) + "]");
    return out;
}

TheoryParams parse_theory(const Json& j) {
    Section s(j, "theory");
    TheoryParams t;
    s.get("d", t.d);
    s.get("rho", t.rho);
    s.get("gap_norm", t.gap_norm);
    s.get("k_max", t.k_max);
    s.get("eta", t.eta);
    s.get("sigma_pre_diag", t.sigma_pre_diag);
    s.get("dims", t.dims);
    s.get("mc_samples", t.mc_samples);
    s.get("tolerance", t.tolerance);
    s.get("beta_grid", t.beta_grid);
    if (s.has("betas")) t.betas = parse_grid(s, "betas", 0.0, 1.0, false);
    if (s.has("rhos")) t.rhos = parse_grid(s, "rhos", 0.0, 1.0, false);
    s.get("alphas", t.alphas);
    s.finish();
    check(t.d >= 2, "theory.d", "must be >= 2");
    check(t.rho >= 0 && t.rho < 1, "theory.rho", "must lie in [0, 1)");
    check(t.gap_norm > 0, "theory.gap_norm", "must be > 0");
    check(t.k_max >= 1, "theory.k_max", "must be >= 1");
    check(t.eta > 0, "theory.eta", "must be > 0");
    check(t.mc_samples >= 1, "theory.mc_samples", "must be >= 1");
    check(t.tolerance > 0, "theory.tolerance", "must be > 0");
    check(t.beta_grid >= 1, "theory.beta_grid", "must be >= 1");
    check(!t.betas.empty(), "theory.betas", "must not be empty");
    for (double b : t.betas) check(b > 0, "theory.betas", "entries must lie in (0, 1]");
    for (double r : t.rhos) check(r < 1, "theory.rhos", "entries must lie in [0, 1)");
    for (double a : t.alphas) check(a > 0, "theory.alphas", "entries must be > 0");
    for (auto d : t.dims) check(d >= 2, "theory.dims", "entries must be >= 2");
    check(t.sigma_pre_diag.empty() || static_cast<Eigen::Index>(t.sigma_pre_diag.size()) == t.d,
          "theory.sigma_pre_diag", "must have d entries");
    for (double v : t.sigma_pre_diag) check(v >= 1 - 1e-9, "theory.sigma_pre_diag", "entries must be >= 1");
    return t;
}

}  // namespace

TrainConfig parse_method(const Json& j, const std::string& where) {
    Section s(j, where);
    std::string kind;
    s.get("method", kind);
    check(!kind.empty(), s.field("method"), "is required");
    TrainConfig cfg;
    auto forbid = [&](const char* key) {
        check(!s.has(key), s.field(key), "does not apply to method '" + kind + "'");
    };
    if (kind != "flow" && kind != "dro") forbid("temperature");
    if (kind != "l2reg") forbid("lambda");
    if (kind != "wise_ft") forbid("alpha");

    if (kind == "standard") {
        cfg = default_finetune_config(method::Standard{});
    } else if (kind == "flow") {
        cfg = default_finetune_config(method::Flow{parse_policy(s)});
    } else if (kind == "dro") {
        cfg = default_finetune_config(method::DroContrast{parse_policy(s)});
    } else if (kind == "linear_probe") {
        cfg = default_finetune_config(method::LinearProbe{});
    } else if (kind == "l2reg") {
        double lambda = 0.0;
        s.get("lambda", lambda);
        check(std::isfinite(lambda) && lambda >= 0, s.field("lambda"), "must be >= 0");
        cfg = default_finetune_config(method::L2Reg{lambda});
    } else if (kind == "wise_ft") {
        double alpha = 0.5;
        s.get("alpha", alpha);
        check(alpha >= 0 && alpha <= 1, s.field("alpha"), "must lie in [0, 1]");
        cfg = default_finetune_config(method::WiseFT{alpha});
    } else {
        fail(Errc::ConfigError, s.field("method") + ": unknown method '" + kind + "'");
    }
    s.get("name", cfg.name);
    parse_schedule(s, cfg);
    s.finish();
    return cfg;
}

ExperimentConfig parse_config(const Json& j) {
    Section s(j, "");
    check(s.has("version"), "version", "is required");
    ExperimentConfig c;
    s.get("version", c.version);
    check(c.version == kConfigVersion, "version", "must be " + std::to_string(kConfigVersion));
    s.get("seed", c.seed);
    s.get("output_dir", c.output_dir);
    if (s.has("benchmark")) c.benchmark = parse_benchmark(s.child("benchmark"));
    c.benchmark.seed = c.seed;
    if (s.has("pretrain")) {
        Section p(s.child("pretrain"), "pretrain");
        parse_schedule(p, c.setup.pretrain);
        p.finish();
    }
    if (s.has("methods")) {
        const Json& methods = s.child("methods");
        check(methods.is_array() && !methods.empty(), "methods", "must be a non-empty array");
        c.setup.methods.clear();
        for (std::size_t i = 0; i < methods.size(); ++i)
            c.setup.methods.push_back(parse_method(methods[i], "methods[" + std::to_string(i) + "]"));
        for (std::size_t i = 0; i < c.setup.methods.size(); ++i)
            for (std::size_t k = 0; k < i; ++k)
                check(c.setup.methods[i].label() != c.setup.methods[k].label(),
                      "methods[" + std::to_string(i) + "]", "duplicates the label '" + c.setup.methods[i].label() + "'");
    }
    s.get("hard_fraction", c.setup.hard_fraction);
    check(c.setup.hard_fraction > 0 && c.setup.hard_fraction <= 1, "hard_fraction", "must lie in (0, 1]");
    if (s.has("sweep_alphas")) c.sweep_alphas = parse_grid(s, "sweep_alphas", 0.0, 1.0, false);
    if (s.has("ablation_percentiles"))
        c.ablation_percentiles = parse_grid(s, "ablation_percentiles", 0.0, 100.0, true);
    if (s.has("theory")) c.theory = parse_theory(s.child("theory"));
    s.finish();
    return c;
}

ExperimentConfig load_config(const io::fs::path& path) {
    io::Json j;
    try {
        j = io::read_json(path);
    } catch (const Error& e) {
        fail(Errc::ConfigError, e.what());
    }
    return parse_config(j);
}

std::uint64_t config_hash(const io::Json& j) { return fnv1a(j.dump()); }

std::string hex64(std::uint64_t v) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

io::Json RunManifest::to_json() const {
    return io::Json{{"config_hash", config_hash}, {"library_version", library_version},
                    {"started", started},         {"finished", finished},
                    {"command", command},         {"outputs", outputs},
                    {"seeds", seeds}};
}

std::string utc_timestamp() {
    const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&now, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

}  // namespace flowlab
