#include "birl/config.hpp"

#include <fstream>
#include <sstream>
#include <stdexcept>

namespace birl {

namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

[[noreturn]] void fail(const std::string& source, int line, const std::string& msg) {
    throw std::invalid_argument(source + ":" + std::to_string(line) + ": " + msg);
}

bool parse_bool(const std::string& v, const std::string& source, int line) {
    if (v == "on" || v == "true" || v == "1") return true;
    if (v == "off" || v == "false" || v == "0") return false;
    fail(source, line, "expected on/off, got '" + v + "'");
}

double parse_double(const std::string& v, const std::string& source, int line) {
    try {
        std::size_t pos = 0;
        const double d = std::stod(v, &pos);
        if (pos != v.size()) throw std::invalid_argument("");
        return d;
    } catch (...) {
        fail(source, line, "expected a number, got '" + v + "'");
    }
}

long long parse_int(const std::string& v, const std::string& source, int line) {
    try {
        std::size_t pos = 0;
        const long long i = std::stoll(v, &pos);
        if (pos != v.size()) throw std::invalid_argument("");
        return i;
    } catch (...) {
        fail(source, line, "expected an integer, got '" + v + "'");
    }
}

// Dispatches one (section, key) assignment; returns false on unknown key.
bool assign(RunConfig& cfg, const std::string& section, const std::string& key,
            const std::string& value, const std::string& source, int line) {
    auto num = [&] { return parse_double(value, source, line); };
    auto integer = [&] { return parse_int(value, source, line); };
    auto flag = [&] { return parse_bool(value, source, line); };

    if (section == "run") {
        if (key == "environment") cfg.environment = value;
        else if (key == "algorithm") cfg.algorithm = value;
        else if (key == "iterations") cfg.iterations = integer();
        else if (key == "seed") cfg.seed = static_cast<std::uint64_t>(integer());
        else if (key == "mode") cfg.mode = value;
        else if (key == "checkpoint_ratio") cfg.checkpoint_ratio = num();
        else if (key == "strict_theory") cfg.strict_theory = flag();
        else if (key == "record_residuals") cfg.record_residuals = flag();
        else if (key == "td_target_uses_restart") cfg.td_target_uses_restart = flag();
        else if (key == "subtract_value_baseline") cfg.subtract_value_baseline = flag();
        else if (key == "recenter_every") cfg.recenter_every = integer();
        else return false;
        return true;
    }
    if (section == "schedules") {
        if (key == "preset") {
            cfg.preset = value;
            if (value == "decaying_tau") {
                const ScheduleSet keep = cfg.schedules;
                cfg.schedules = ScheduleSet::decaying_tau_preset();
                cfg.schedules.zeta0 = keep.zeta0;
                cfg.schedules.alpha0 = keep.alpha0;
                cfg.schedules.beta0 = keep.beta0;
                cfg.schedules.w0 = keep.w0;
                cfg.schedules.tau0 = keep.tau0;
            } else if (value == "fixed_tau") {
                const ScheduleSet keep = cfg.schedules;
                cfg.schedules = ScheduleSet::fixed_tau_preset(keep.tau0);
                cfg.schedules.zeta0 = keep.zeta0;
                cfg.schedules.alpha0 = keep.alpha0;
                cfg.schedules.beta0 = keep.beta0;
                cfg.schedules.w0 = keep.w0;
            } else if (value != "custom") {
                fail(source, line, "unknown schedules preset '" + value + "'");
            }
        }
        else if (key == "zeta0") cfg.schedules.zeta0 = num();
        else if (key == "alpha0") cfg.schedules.alpha0 = num();
        else if (key == "beta0") cfg.schedules.beta0 = num();
        else if (key == "w0") cfg.schedules.w0 = num();
        else if (key == "tau0") cfg.schedules.tau0 = num();
        else if (key == "c_zeta") cfg.schedules.c_zeta = num();
        else if (key == "c_alpha") cfg.schedules.c_alpha = num();
        else if (key == "c_beta") cfg.schedules.c_beta = num();
        else if (key == "c_w") cfg.schedules.c_w = num();
        else if (key == "c_tau") cfg.schedules.c_tau = num();
        else return false;
        return true;
    }
    if (section == "oracle") {
        if (key == "svi_tol") cfg.oracle.svi_tol = num();
        else if (key == "svi_max_iter") cfg.oracle.svi_max_iter = static_cast<int>(integer());
        else if (key == "gd_tol") cfg.oracle.gd_tol = num();
        else if (key == "gd_max_iter") cfg.oracle.gd_max_iter = static_cast<int>(integer());
        else if (key == "fd_step") cfg.oracle.fd_step = num();
        else if (key == "phi_eval_tau") cfg.oracle.phi_eval_tau = num();
        else return false;
        return true;
    }
    if (section == "gridworld") {
        if (key == "width") cfg.gridworld.width = static_cast<int>(integer());
        else if (key == "height") cfg.gridworld.height = static_cast<int>(integer());
        else if (key == "gamma") cfg.gridworld.gamma = num();
        else if (key == "lambda") cfg.gridworld.lambda = num();
        else return false;
        return true;
    }
    if (section == "preference") {
        if (key == "num_states") cfg.preference.num_states = static_cast<int>(integer());
        else if (key == "num_actions") cfg.preference.num_actions = static_cast<int>(integer());
        else if (key == "trajectory_len") cfg.preference.trajectory_len = static_cast<int>(integer());
        else if (key == "pairs_per_eval") cfg.preference.pairs_per_eval = static_cast<int>(integer());
        else if (key == "gamma") cfg.preference.gamma = num();
        else if (key == "slip") cfg.preference.slip = num();
        else if (key == "dynamics_seed")
            cfg.preference.dynamics_seed = static_cast<std::uint64_t>(integer());
        else return false;
        return true;
    }
    if (section == "baseline") {
        if (key == "inner_iters") cfg.baseline.inner_iters = integer();
        else if (key == "fd_epsilon") cfg.baseline.fd_epsilon = num();
        else if (key == "fixed_tau") cfg.baseline.fixed_tau = num();
        else if (key == "inner_tau") cfg.baseline.inner_tau = num();
        else if (key == "inner_decay") cfg.baseline.inner_decay = num();
        else return false;
        return true;
    }
    fail(source, line, "unknown section [" + section + "]");
}

}  // namespace

void RunConfig::validate() const {
    auto bad = [](const std::string& msg) { throw std::invalid_argument("config: " + msg); };
    if (environment != "gridworld" && environment != "preference") {
        bad("environment must be gridworld or preference, got '" + environment + "'");
    }
    if (algorithm != "proposed" && algorithm != "proposed_fixed_tau" &&
        algorithm != "partial_sgd" && algorithm != "finite_difference" &&
        algorithm != "nested_loop") {
        bad("unknown algorithm '" + algorithm + "'");
    }
    if (mode != "markovian" && mode != "iid") bad("mode must be markovian or iid");
    if (iterations < 0) bad("iterations must be nonnegative");
    if (checkpoint_ratio <= 1.0) bad("checkpoint_ratio must exceed 1");
    if (schedules.zeta0 <= 0 || schedules.alpha0 <= 0 || schedules.beta0 <= 0 ||
        schedules.w0 <= 0 || schedules.tau0 <= 0) {
        bad("schedule bases must be positive");
    }
    if (schedules.c_zeta < 0 || schedules.c_alpha < 0 || schedules.c_beta < 0 ||
        schedules.c_w < 0 || schedules.c_tau < 0) {
        bad("schedule exponents must be nonnegative");
    }
    if (strict_theory) schedules.enforce_base_ordering();
    if (oracle.svi_tol <= 0 || oracle.gd_tol <= 0 || oracle.fd_step <= 0 ||
        oracle.phi_eval_tau <= 0) {
        bad("oracle tolerances must be positive");
    }
    if (gridworld.width < 2 || gridworld.height < 2) bad("grid must be at least 2x2");
    if (gridworld.gamma <= 0 || gridworld.gamma >= 1) bad("gridworld gamma must lie in (0,1)");
    if (gridworld.lambda < 0) bad("gridworld lambda must be nonnegative");
    if (baseline.inner_iters < 1) bad("baseline inner_iters must be at least 1");
    if (baseline.fd_epsilon <= 0) bad("baseline fd_epsilon must be positive");
    if (baseline.fixed_tau <= 0) bad("baseline fixed_tau must be positive");
}

RunConfig parse_config(const std::string& text, const std::string& source) {
    RunConfig cfg;
    std::istringstream in(text);
    std::string raw;
    std::string section = "run";
    int line_no = 0;
    while (std::getline(in, raw)) {
        ++line_no;
        std::string line = trim(raw);
        const auto hash = line.find('#');
        if (hash != std::string::npos) line = trim(line.substr(0, hash));
        if (line.empty()) continue;
        if (line.front() == '[') {
            if (line.back() != ']') fail(source, line_no, "unterminated section header");
            section = trim(line.substr(1, line.size() - 2));
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos) fail(source, line_no, "expected key = value");
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        if (key.empty()) fail(source, line_no, "empty key");
        if (!assign(cfg, section, key, value, source, line_no)) {
            fail(source, line_no, "unknown key '" + key + "' in section [" + section + "]");
        }
    }
    cfg.validate();
    return cfg;
}

RunConfig load_config_file(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("cannot open config file " + path);
    std::stringstream ss;
    ss << f.rdbuf();
    return parse_config(ss.str(), path);
}

void apply_override(RunConfig& cfg, const std::string& assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string::npos) {
        throw std::invalid_argument("override must look like section.key=value: " + assignment);
    }
    const std::string path = trim(assignment.substr(0, eq));
    const std::string value = trim(assignment.substr(eq + 1));
    const auto dot = path.find('.');
    const std::string section = dot == std::string::npos ? "run" : path.substr(0, dot);
    const std::string key = dot == std::string::npos ? path : path.substr(dot + 1);
    if (!assign(cfg, section, key, value, "<override>", 0)) {
        throw std::invalid_argument("unknown override key '" + assignment + "'");
    }
    cfg.validate();
}

}  // namespace birl
