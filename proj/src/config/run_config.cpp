#include "yoeo/config/run_config.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>
#include <string_view>

#include "yoeo/envs/registry.hpp"
#include "yoeo/errors.hpp"
#include "yoeo/nn/binary_io.hpp"

namespace yoeo::config {

namespace {

struct Field {
    std::string section;
    std::string key;
    std::function<std::string(const RunConfig&)> get;
    std::function<void(RunConfig&, const std::string&)> set;

    std::string name() const { return section + "." + key; }
};

std::string trim(std::string_view s) {
    const auto first = s.find_first_not_of(" \t\r");
    if (first == std::string_view::npos) return {};
    const auto last = s.find_last_not_of(" \t\r");
    return std::string(s.substr(first, last - first + 1));
}

std::string format_double(double v) {
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

double parse_double(const std::string& key, const std::string& text) {
    double v = 0.0;
    const auto res = std::from_chars(text.data(), text.data() + text.size(), v);
    if (res.ec != std::errc{} || res.ptr != text.data() + text.size() || text.empty()) {
        throw ConfigError(key + ": '" + text + "' is not a number");
    }
    return v;
}

std::uint64_t parse_unsigned(const std::string& key, const std::string& text) {
    std::uint64_t v = 0;
    const auto res = std::from_chars(text.data(), text.data() + text.size(), v);
    if (res.ec != std::errc{} || res.ptr != text.data() + text.size() || text.empty()) {
        throw ConfigError(key + ": '" + text + "' is not a non-negative integer");
    }
    return v;
}

template <typename T>
Field size_field(std::string section, std::string key, T RunConfig::*member) {
    const std::string name = section + "." + key;
    return {std::move(section), std::move(key), [member](const RunConfig& c) { return std::to_string(c.*member); },
            [member, name](RunConfig& c, const std::string& v) { c.*member = static_cast<T>(parse_unsigned(name, v)); }};
}

Field double_field(std::string section, std::string key, double RunConfig::*member) {
    const std::string name = section + "." + key;
    return {std::move(section), std::move(key), [member](const RunConfig& c) { return format_double(c.*member); },
            [member, name](RunConfig& c, const std::string& v) { c.*member = parse_double(name, v); }};
}

Field string_field(std::string section, std::string key, std::string RunConfig::*member) {
    return {std::move(section), std::move(key), [member](const RunConfig& c) { return c.*member; },
            [member](RunConfig& c, const std::string& v) { c.*member = v; }};
}

const std::vector<Field>& fields() {
    static const std::vector<Field> table = [] {
        std::vector<Field> f;
        f.push_back(string_field("run", "env", &RunConfig::env));
        f.push_back(string_field("run", "dataset", &RunConfig::dataset));
        f.push_back(string_field("run", "out_dir", &RunConfig::out_dir));
        f.push_back(size_field("run", "seed", &RunConfig::seed));
        f.push_back({"run", "variant", [](const RunConfig& c) { return critic::to_string(c.variant); },
                     [](RunConfig& c, const std::string& v) { c.variant = critic::variant_from_string(v); }});

        f.push_back(double_field("common", "gamma", &RunConfig::gamma));
        f.push_back(size_field("common", "n_step", &RunConfig::n_step));
        f.push_back(size_field("common", "batch", &RunConfig::batch));

        f.push_back(size_field("value", "members", &RunConfig::value_members));
        f.push_back(size_field("value", "steps", &RunConfig::value_steps));
        f.push_back(double_field("value", "lr", &RunConfig::value_lr));
        f.push_back(double_field("value", "weight_decay", &RunConfig::value_weight_decay));
        f.push_back(size_field("value", "feature_dim", &RunConfig::feature_dim));
        f.push_back(size_field("value", "hidden", &RunConfig::value_hidden));
        f.push_back(size_field("value", "depth", &RunConfig::value_depth));
        f.push_back(size_field("value", "n_tau", &RunConfig::n_tau));
        f.push_back(size_field("value", "n_tau_target", &RunConfig::n_tau_target));
        f.push_back(double_field("value", "kappa", &RunConfig::kappa));
        f.push_back(double_field("value", "ema_decay", &RunConfig::ema_decay));
        f.push_back({"value", "bootstrap", [](const RunConfig& c) { return value::to_string(c.bootstrap); },
                     [](RunConfig& c, const std::string& v) {
                         try {
                             c.bootstrap = value::bootstrap_mode_from_string(v);
                         } catch (const std::exception& e) {
                             throw ConfigError(std::string("value.bootstrap: ") + e.what());
                         }
                     }});

        f.push_back(size_field("critic", "members", &RunConfig::critic_members));
        f.push_back(size_field("critic", "steps", &RunConfig::critic_steps));
        f.push_back(double_field("critic", "lr", &RunConfig::critic_lr));
        f.push_back(double_field("critic", "weight_decay", &RunConfig::critic_weight_decay));
        f.push_back(size_field("critic", "hidden", &RunConfig::critic_hidden));
        f.push_back(size_field("critic", "depth", &RunConfig::critic_depth));
        f.push_back(double_field("critic", "lambda", &RunConfig::lambda));
        f.push_back(size_field("critic", "samples", &RunConfig::samples));
        f.push_back(double_field("critic", "tau1", &RunConfig::tau1));
        f.push_back(double_field("critic", "tau2", &RunConfig::tau2));
        f.push_back({"critic", "temperature",
                     [](const RunConfig& c) { return c.temperature ? format_double(*c.temperature) : std::string("auto"); },
                     [](RunConfig& c, const std::string& v) {
                         if (v == "auto") {
                             c.temperature.reset();
                         } else {
                             c.temperature = parse_double("critic.temperature", v);
                         }
                     }});
        f.push_back(double_field("critic", "target_decay", &RunConfig::target_decay));

        f.push_back(double_field("actor", "lr", &RunConfig::actor_lr));
        f.push_back(double_field("actor", "weight_decay", &RunConfig::actor_weight_decay));
        f.push_back(size_field("actor", "hidden", &RunConfig::actor_hidden));
        f.push_back(size_field("actor", "depth", &RunConfig::actor_depth));
        f.push_back(double_field("actor", "noise", &RunConfig::noise));
        f.push_back(double_field("actor", "noise_clip", &RunConfig::noise_clip));

        f.push_back(size_field("policy", "knn_k", &RunConfig::knn_k));

        f.push_back(size_field("eval", "trajectories", &RunConfig::trajectories));
        f.push_back(string_field("eval", "policy", &RunConfig::policy));

        f.push_back(size_field("log", "log_every", &RunConfig::log_every));
        return f;
    }();
    return table;
}

const Field& find_field(const std::string& name) {
    for (const auto& f : fields()) {
        if (f.name() == name) return f;
    }
    throw ConfigError("unknown config key '" + name + "'");
}

void require(bool ok, const std::string& key, const std::string& rule) {
    if (!ok) throw ConfigError(key + " " + rule);
}

bool probability(double x) { return x > 0.0 && x < 1.0; }

}  // namespace

void RunConfig::validate() const {
    const auto names = envs::env_names();
    require(std::find(names.begin(), names.end(), env) != names.end(), "run.env", "must name a known environment");
    require(gamma > 0.0 && gamma <= 1.0, "common.gamma", "must lie in (0, 1]");
    require(n_step >= 1, "common.n_step", "must be at least 1");
    require(batch >= 1, "common.batch", "must be at least 1");

    require(value_members >= 1, "value.members", "must be at least 1");
    require(value_lr > 0.0, "value.lr", "must be positive");
    require(value_weight_decay >= 0.0, "value.weight_decay", "must be non-negative");
    require(feature_dim >= 1 && value_hidden >= 1 && value_depth >= 1, "value.feature_dim/hidden/depth", "must be positive");
    require(n_tau >= 1 && n_tau_target >= 1, "value.n_tau/n_tau_target", "must be at least 1");
    require(kappa > 0.0, "value.kappa", "must be positive");
    require(ema_decay >= 0.0 && ema_decay < 1.0, "value.ema_decay", "must lie in [0, 1)");

    require(critic_members >= 1, "critic.members", "must be at least 1");
    require(critic_lr > 0.0, "critic.lr", "must be positive");
    require(critic_weight_decay >= 0.0, "critic.weight_decay", "must be non-negative");
    require(critic_hidden >= 1 && critic_depth >= 1, "critic.hidden/depth", "must be positive");
    require(lambda >= 0.0, "critic.lambda", "must be non-negative");
    require(samples >= 1, "critic.samples", "must be at least 1");
    require(probability(tau1), "critic.tau1", "must lie in (0, 1)");
    require(probability(tau2), "critic.tau2", "must lie in (0, 1)");
    require(tau1 > tau2, "critic.tau1", "must exceed critic.tau2");
    require(!temperature || *temperature > 0.0, "critic.temperature", "must be positive or auto");
    require(target_decay >= 0.0 && target_decay < 1.0, "critic.target_decay", "must lie in [0, 1)");

    require(actor_lr > 0.0, "actor.lr", "must be positive");
    require(actor_weight_decay >= 0.0, "actor.weight_decay", "must be non-negative");
    require(actor_hidden >= 1 && actor_depth >= 1, "actor.hidden/depth", "must be positive");
    require(noise >= 0.0, "actor.noise", "must be non-negative");
    require(noise_clip >= 0.0, "actor.noise_clip", "must be non-negative");

    require(knn_k >= 1, "policy.knn_k", "must be at least 1");
    require(trajectories >= 1, "eval.trajectories", "must be at least 1");
    require(policy == "actor" || policy == "knn", "eval.policy", "must be actor or knn");
    require(log_every >= 1, "log.log_every", "must be at least 1");
}

value::IqnConfig RunConfig::iqn() const { return {feature_dim, value_hidden, value_depth}; }

value::ValueTrainConfig RunConfig::value_train() const {
    value::ValueTrainConfig c;
    c.kappa = kappa;
    c.n_tau = n_tau;
    c.n_tau_target = n_tau_target;
    c.batch = batch;
    c.n_step = n_step;
    c.gamma = gamma;
    c.ema_decay = ema_decay;
    return c;
}

nn::AdamwConfig RunConfig::value_optimizer() const { return {value_lr, 0.9, 0.999, 1e-8, value_weight_decay}; }

critic::CriticConfig RunConfig::critic_config() const {
    critic::CriticConfig c;
    c.members = critic_members;
    c.hidden = critic_hidden;
    c.depth = critic_depth;
    c.variant = variant;
    c.lambda = lambda;
    c.tau1 = tau1;
    c.tau2 = tau2;
    c.samples = samples;
    c.temperature = temperature;
    c.batch = batch;
    c.n_step = n_step;
    c.gamma = gamma;
    c.target_decay = target_decay;
    c.optimizer = {critic_lr, 0.9, 0.999, 1e-8, critic_weight_decay};
    return c;
}

policy::ActorConfig RunConfig::actor_config() const { return {actor_hidden, actor_depth, noise, noise_clip}; }

nn::AdamwConfig RunConfig::actor_optimizer() const { return {actor_lr, 0.9, 0.999, 1e-8, actor_weight_decay}; }

std::vector<std::string> config_keys() {
    std::vector<std::string> keys;
    for (const auto& f : fields()) keys.push_back(f.name());
    return keys;
}

std::string get_option(const RunConfig& config, const std::string& key) { return find_field(key).get(config); }

void set_option(RunConfig& config, const std::string& key, const std::string& value) {
    find_field(key).set(config, value);
}

RunConfig parse_config(const std::string& text, std::set<std::string>* present) {
    RunConfig config;
    std::set<std::string> seen;
    std::string section;
    std::istringstream in(text);
    std::string raw;
    std::size_t line_no = 0;
    while (std::getline(in, raw)) {
        ++line_no;
        const auto hash = raw.find('#');
        const std::string line = trim(std::string_view(raw).substr(0, hash));
        if (line.empty()) continue;
        const std::string where = "line " + std::to_string(line_no) + ": ";
        if (line.front() == '[') {
            if (line.back() != ']') throw ConfigError(where + "unterminated section header");
            section = trim(std::string_view(line).substr(1, line.size() - 2));
            const bool known = std::any_of(fields().begin(), fields().end(), [&](const Field& f) { return f.section == section; });
            if (!known) throw ConfigError(where + "unknown section [" + section + "]");
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos) throw ConfigError(where + "expected key = value");
        if (section.empty()) throw ConfigError(where + "key outside any section");
        const std::string name = section + "." + trim(std::string_view(line).substr(0, eq));
        if (!seen.insert(name).second) throw ConfigError(where + "duplicate key '" + name + "'");
        try {
            set_option(config, name, trim(std::string_view(line).substr(eq + 1)));
        } catch (const ConfigError& e) {
            throw ConfigError(where + e.what());
        }
    }
    config.validate();
    if (present != nullptr) *present = std::move(seen);
    return config;
}

std::string serialize_config(const RunConfig& config) {
    std::ostringstream out;
    std::string section;
    for (const auto& f : fields()) {
        if (f.section != section) {
            if (!section.empty()) out << '\n';
            section = f.section;
            out << '[' << section << "]\n";
        }
        out << f.key << " = " << f.get(config) << '\n';
    }
    return out.str();
}

RunConfig load_config(const std::string& path, std::set<std::string>* present) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config " + path);
    std::ostringstream buffer;
    buffer << in.rdbuf();
    return parse_config(buffer.str(), present);
}

void save_config(const RunConfig& config, const std::string& path) {
    nn::io::atomic_write(path, serialize_config(config));
}

}  // namespace yoeo::config
