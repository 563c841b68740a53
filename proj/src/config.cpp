#include "sdce/config.hpp"

#include <cctype>
#include <cerrno>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>

namespace sdce::cfg {

namespace {

std::string trim(const std::string& s) {
    std::size_t b = 0, e = s.size();
    while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
    while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
    return s.substr(b, e - b);
}

[[noreturn]] void fail(int line, const std::string& msg) {
    if (line > 0) {
        std::ostringstream os;
        os << "line " << line << ": " << msg;
        throw ConfigError(os.str());
    }
    throw ConfigError(msg);
}

double parse_double(const std::string& v, int line) {
    errno = 0;
    char* end = nullptr;
    const double x = std::strtod(v.c_str(), &end);
    if (end == v.c_str() || *end != '\0' || errno == ERANGE)
        fail(line, "expected a number, got '" + v + "'");
    return x;
}

long long parse_int(const std::string& v, int line) {
    errno = 0;
    char* end = nullptr;
    const long long x = std::strtoll(v.c_str(), &end, 10);
    if (end == v.c_str() || *end != '\0' || errno == ERANGE)
        fail(line, "expected an integer, got '" + v + "'");
    return x;
}

std::uint64_t parse_u64(const std::string& v, int line) {
    errno = 0;
    char* end = nullptr;
    if (!v.empty() && v[0] == '-') fail(line, "expected a nonnegative integer, got '" + v + "'");
    const unsigned long long x = std::strtoull(v.c_str(), &end, 10);
    if (end == v.c_str() || *end != '\0' || errno == ERANGE)
        fail(line, "expected a nonnegative integer, got '" + v + "'");
    return static_cast<std::uint64_t>(x);
}

bool parse_bool(const std::string& v, int line) {
    if (v == "true" || v == "1") return true;
    if (v == "false" || v == "0") return false;
    fail(line, "expected true/false, got '" + v + "'");
}

std::vector<std::string> split_list(const std::string& v) {
    std::vector<std::string> out;
    std::string item;
    std::istringstream is(v);
    while (std::getline(is, item, ',')) {
        item = trim(item);
        if (!item.empty()) out.push_back(item);
    }
    return out;
}

std::string fmt_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

// Applies one key. Returns false for unknown keys.
bool apply_key(ExperimentConfig& c, const std::string& key, const std::string& value,
               int line) {
    auto& r = c.run;
    if (key == "n_producers") r.n_producers = static_cast<int>(parse_int(value, line));
    else if (key == "m_trainers") r.m_trainers = static_cast<int>(parse_int(value, line));
    else if (key == "horizon") r.horizon = static_cast<int>(parse_int(value, line));
    else if (key == "discount") r.discount = parse_double(value, line);
    else if (key == "learning_rate") r.learning_rate = parse_double(value, line);
    else if (key == "beta_shape") r.beta_shape = parse_double(value, line);
    else if (key == "epsilon_explore") {
        // Config-level contract is strict positivity; the zero setting is an
        // in-process testing hook, not a file option.
        const double eps = parse_double(value, line);
        if (!(eps > 0.0 && eps < 1.0)) fail(line, "epsilon_explore must lie in (0, 1)");
        r.epsilon_explore = eps;
    }
    else if (key == "seed") r.seed = parse_u64(value, line);
    else if (key == "grid_levels") r.grid_levels = static_cast<int>(parse_int(value, line));
    else if (key == "max_quantity") r.max_quantity = parse_double(value, line);
    else if (key == "bundle_cap") r.bundle_cap = parse_double(value, line);
    else if (key == "initial_price") r.initial_price = parse_double(value, line);
    else if (key == "initial_supply") r.initial_supply = parse_double(value, line);
    else if (key == "royalty") r.royalty = parse_double(value, line);
    else if (key == "supply_adjust_rate") r.supply_adjust_rate = parse_double(value, line);
    else if (key == "reinvest_rate") r.reinvest_rate = parse_double(value, line);
    else if (key == "temperature") r.temperature = parse_double(value, line);
    else if (key == "labor") r.labor = parse_double(value, line);
    else if (key == "capital") r.capital = parse_double(value, line);
    else if (key == "revenue_weight") r.revenue_weight = parse_double(value, line);
    else if (key == "rights_window") r.rights_window = parse_double(value, line);
    else if (key == "quality_price") r.quality_price = parse_double(value, line);
    else if (key == "buffer_capacity") r.buffer_capacity = static_cast<int>(parse_int(value, line));
    else if (key == "critic_batch") r.critic_batch = static_cast<int>(parse_int(value, line));
    else if (key == "forced_rho") r.forced_rho = parse_double(value, line);
    else if (key == "regime") {
        try {
            r.regime = pmir::parse_regime(value);
        } catch (const std::invalid_argument& e) {
            fail(line, e.what());
        }
    } else if (key == "q0_mean") r.q0_mean = parse_double(value, line);
    else if (key == "q0_std") r.q0_std = parse_double(value, line);
    else if (key == "target_mean") r.target_mean = parse_double(value, line);
    else if (key == "target_std") r.target_std = parse_double(value, line);
    else if (key == "flow_step_size") r.flow_step_size = parse_double(value, line);
    else if (key == "flow_steps_per_gen") r.flow_steps_per_gen = static_cast<int>(parse_int(value, line));
    else if (key == "empirical_w2") r.empirical_w2 = parse_bool(value, line);
    else if (key == "drift_samples") r.drift_samples = static_cast<int>(parse_int(value, line));
    else if (key == "scale_a") c.scale_a = parse_double(value, line);
    else if (key == "labor_exp") c.labor_exp = parse_double(value, line);
    else if (key == "capital_exp") c.capital_exp = parse_double(value, line);
    else if (key == "human_base") c.human_base = parse_double(value, line);
    else if (key == "human_slope") c.human_slope = parse_double(value, line);
    else if (key == "synth_base") c.synth_base = parse_double(value, line);
    else if (key == "synth_slope") c.synth_slope = parse_double(value, line);
    else if (key == "policy") {
        try {
            c.policy.kind = welfare::parse_policy_kind(value);
        } catch (const std::invalid_argument& e) {
            fail(line, e.what());
        }
    } else if (key == "kappa") c.policy.kappa = parse_double(value, line);
    else if (key == "lambda_pen") c.policy.lambda_pen = parse_double(value, line);
    else if (key == "psi") c.policy.psi = parse_double(value, line);
    else if (key == "price_cap") c.policy.price_cap = parse_double(value, line);
    else if (key == "transfer") c.policy.transfer = parse_double(value, line);
    else if (key == "disclosure_rho_scale")
        c.policy.disclosure_rho_scale = parse_double(value, line);
    else if (key == "rho_grid") {
        c.rho_grid.clear();
        for (const auto& item : split_list(value)) c.rho_grid.push_back(parse_double(item, line));
    } else if (key == "policies") {
        c.policies = split_list(value);
    } else if (key == "seeds") {
        c.seeds.clear();
        for (const auto& item : split_list(value)) c.seeds.push_back(parse_u64(item, line));
    } else if (key == "workers") c.workers = static_cast<int>(parse_int(value, line));
    else if (key == "out_dir") c.out_dir = value;
    else if (key == "format") c.format = value;
    else return false;
    return true;
}

}  // namespace

market::ElasticitySchedule ExperimentConfig::schedule() const {
    return market::ElasticitySchedule(scale_a, labor_exp, capital_exp, human_base,
                                      human_slope, synth_base, synth_slope);
}

void ExperimentConfig::validate() const {
    try {
        run.validate();
        (void)schedule();
    } catch (const std::invalid_argument& e) {
        throw ConfigError(e.what());
    }
    if (format != "csv" && format != "jsonl" && format != "text")
        throw ConfigError("format must be csv, jsonl, or text, got '" + format + "'");
    if (workers < 1) throw ConfigError("workers must be >= 1");
    if (seeds.empty()) throw ConfigError("seed list must not be empty");
    if (policies.empty()) throw ConfigError("policy list must not be empty");
    for (const auto& p : policies) {
        try {
            (void)welfare::parse_policy_kind(p);
        } catch (const std::invalid_argument& e) {
            throw ConfigError(e.what());
        }
    }
    for (double rho : rho_grid)
        if (!(rho >= 0.0 && rho <= 1.0))
            throw ConfigError("rho_grid values must lie in [0, 1]");
    if (!(policy.kappa > 0.0)) throw ConfigError("kappa must be > 0");
    if (policy.lambda_pen < 0.0) throw ConfigError("lambda_pen must be >= 0");
    if (!(policy.psi > 0.0 && policy.psi <= 1.0)) throw ConfigError("psi must lie in (0, 1]");
    if (policy.price_cap < 0.0) throw ConfigError("price_cap must be >= 0");
    if (policy.transfer < 0.0) throw ConfigError("transfer must be >= 0");
    if (!(policy.disclosure_rho_scale > 0.0 && policy.disclosure_rho_scale <= 1.0))
        throw ConfigError("disclosure_rho_scale must lie in (0, 1]");
}

std::vector<std::uint64_t> default_seed_panel() {
    // Four externally fixed leading seeds, 27 frozen primes, and the fixed
    // final seed: 32 in total.
    return {17,  31,  42,  53,  61,  71,  83,  97,  103, 113, 127,
            137, 149, 157, 167, 179, 191, 199, 211, 223, 227, 233,
            239, 241, 251, 257, 263, 269, 271, 277, 281, 9973};
}

ExperimentConfig default_config() {
    ExperimentConfig c;
    c.seeds = default_seed_panel();
    return c;
}

void apply_scale(ExperimentConfig& config, const std::string& scale) {
    if (scale == "desk") {
        config.run.n_producers = 8;
        config.run.m_trainers = 2;
    } else if (scale == "paper") {
        config.run.n_producers = 1024;
        config.run.m_trainers = 16;
    } else {
        throw ConfigError("scale must be desk or paper, got '" + scale + "'");
    }
}

ExperimentConfig parse_config(const std::string& text) {
    ExperimentConfig c = default_config();
    std::istringstream is(text);
    std::string raw;
    int line = 0;
    while (std::getline(is, raw)) {
        ++line;
        const std::size_t hash = raw.find('#');
        if (hash != std::string::npos) raw.erase(hash);
        const std::string s = trim(raw);
        if (s.empty()) continue;
        if (s.front() == '[') {
            if (s.back() != ']') fail(line, "unterminated section header");
            continue;  // organisational only
        }
        const std::size_t eq = s.find('=');
        if (eq == std::string::npos) fail(line, "expected key = value");
        const std::string key = trim(s.substr(0, eq));
        const std::string value = trim(s.substr(eq + 1));
        if (key.empty()) fail(line, "empty key");
        if (!apply_key(c, key, value, line)) fail(line, "unknown key '" + key + "'");
    }
    c.validate();
    return c;
}

ExperimentConfig load_config(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw ConfigError("cannot open config file: " + path);
    std::ostringstream buf;
    buf << f.rdbuf();
    return parse_config(buf.str());
}

std::string canonical_text(const ExperimentConfig& c) {
    // Alphabetical key order; every key present.
    std::string joined_policies;
    for (std::size_t i = 0; i < c.policies.size(); ++i) {
        if (i) joined_policies += ',';
        joined_policies += c.policies[i];
    }
    std::string joined_rho;
    for (std::size_t i = 0; i < c.rho_grid.size(); ++i) {
        if (i) joined_rho += ',';
        joined_rho += fmt_double(c.rho_grid[i]);
    }
    std::string joined_seeds;
    for (std::size_t i = 0; i < c.seeds.size(); ++i) {
        if (i) joined_seeds += ',';
        joined_seeds += std::to_string(c.seeds[i]);
    }
    std::ostringstream os;
    os << "beta_shape=" << fmt_double(c.run.beta_shape) << '\n'
       << "buffer_capacity=" << c.run.buffer_capacity << '\n'
       << "bundle_cap=" << fmt_double(c.run.bundle_cap) << '\n'
       << "capital=" << fmt_double(c.run.capital) << '\n'
       << "capital_exp=" << fmt_double(c.capital_exp) << '\n'
       << "critic_batch=" << c.run.critic_batch << '\n'
       << "disclosure_rho_scale=" << fmt_double(c.policy.disclosure_rho_scale) << '\n'
       << "discount=" << fmt_double(c.run.discount) << '\n'
       << "drift_samples=" << c.run.drift_samples << '\n'
       << "empirical_w2=" << (c.run.empirical_w2 ? 1 : 0) << '\n'
       << "epsilon_explore=" << fmt_double(c.run.epsilon_explore) << '\n'
       << "flow_step_size=" << fmt_double(c.run.flow_step_size) << '\n'
       << "flow_steps_per_gen=" << c.run.flow_steps_per_gen << '\n'
       << "forced_rho=" << fmt_double(c.run.forced_rho) << '\n'
       << "format=" << c.format << '\n'
       << "grid_levels=" << c.run.grid_levels << '\n'
       << "horizon=" << c.run.horizon << '\n'
       << "human_base=" << fmt_double(c.human_base) << '\n'
       << "human_slope=" << fmt_double(c.human_slope) << '\n'
       << "initial_price=" << fmt_double(c.run.initial_price) << '\n'
       << "initial_supply=" << fmt_double(c.run.initial_supply) << '\n'
       << "kappa=" << fmt_double(c.policy.kappa) << '\n'
       << "labor=" << fmt_double(c.run.labor) << '\n'
       << "labor_exp=" << fmt_double(c.labor_exp) << '\n'
       << "lambda_pen=" << fmt_double(c.policy.lambda_pen) << '\n'
       << "learning_rate=" << fmt_double(c.run.learning_rate) << '\n'
       << "m_trainers=" << c.run.m_trainers << '\n'
       << "max_quantity=" << fmt_double(c.run.max_quantity) << '\n'
       << "n_producers=" << c.run.n_producers << '\n'
       << "out_dir=" << c.out_dir << '\n'
       << "policies=" << joined_policies << '\n'
       << "policy=" << welfare::to_string(c.policy.kind) << '\n'
       << "price_cap=" << fmt_double(c.policy.price_cap) << '\n'
       << "psi=" << fmt_double(c.policy.psi) << '\n'
       << "q0_mean=" << fmt_double(c.run.q0_mean) << '\n'
       << "q0_std=" << fmt_double(c.run.q0_std) << '\n'
       << "quality_price=" << fmt_double(c.run.quality_price) << '\n'
       << "regime=" << pmir::to_string(c.run.regime) << '\n'
       << "reinvest_rate=" << fmt_double(c.run.reinvest_rate) << '\n'
       << "revenue_weight=" << fmt_double(c.run.revenue_weight) << '\n'
       << "rho_grid=" << joined_rho << '\n'
       << "rights_window=" << fmt_double(c.run.rights_window) << '\n'
       << "royalty=" << fmt_double(c.run.royalty) << '\n'
       << "scale_a=" << fmt_double(c.scale_a) << '\n'
       << "seed=" << c.run.seed << '\n'
       << "seeds=" << joined_seeds << '\n'
       << "supply_adjust_rate=" << fmt_double(c.run.supply_adjust_rate) << '\n'
       << "synth_base=" << fmt_double(c.synth_base) << '\n'
       << "synth_slope=" << fmt_double(c.synth_slope) << '\n'
       << "target_mean=" << fmt_double(c.run.target_mean) << '\n'
       << "target_std=" << fmt_double(c.run.target_std) << '\n'
       << "temperature=" << fmt_double(c.run.temperature) << '\n'
       << "transfer=" << fmt_double(c.policy.transfer) << '\n'
       << "workers=" << c.workers << '\n';
    return os.str();
}

std::uint64_t fingerprint(const ExperimentConfig& c) {
    const std::string text = canonical_text(c);
    std::uint64_t h = 14695981039346656037ull;
    for (unsigned char ch : text) {
        h ^= ch;
        h *= 1099511628211ull;
    }
    return h;
}

}  // namespace sdce::cfg
