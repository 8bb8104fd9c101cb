#include "ktraj/config.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <limits>
#include <map>
#include <set>
#include <sstream>

#include "ktraj/errors.hpp"

namespace ktraj {

namespace {

std::string_view trim(std::string_view s) {
    const auto first = s.find_first_not_of(" \t\r");
    if (first == std::string_view::npos) return {};
    const auto last = s.find_last_not_of(" \t\r");
    return s.substr(first, last - first + 1);
}

double parse_double(std::string_view v) {
    double out = 0.0;
    const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc() || ptr != v.data() + v.size() || !std::isfinite(out)) {
        throw InputError("expected a finite number, got '" + std::string(v) + "'");
    }
    return out;
}

long long parse_int(std::string_view v) {
    long long out = 0;
    const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc() || ptr != v.data() + v.size()) {
        throw InputError("expected an integer, got '" + std::string(v) + "'");
    }
    return out;
}

std::size_t parse_count(std::string_view v) {
    const long long n = parse_int(v);
    if (n < 0) throw InputError("expected a non-negative integer, got '" + std::string(v) + "'");
    return static_cast<std::size_t>(n);
}

int parse_small_int(std::string_view v) {
    const long long n = parse_int(v);
    if (n < std::numeric_limits<int>::min() || n > std::numeric_limits<int>::max()) {
        throw InputError("integer out of range: '" + std::string(v) + "'");
    }
    return static_cast<int>(n);
}

bool parse_bool(std::string_view v) {
    if (v == "true" || v == "1" || v == "yes") return true;
    if (v == "false" || v == "0" || v == "no") return false;
    throw InputError("expected true or false, got '" + std::string(v) + "'");
}

template <class T, class F>
std::vector<T> parse_list(std::string_view v, F&& item) {
    std::vector<T> out;
    while (true) {
        const auto comma = v.find(',');
        out.push_back(item(trim(v.substr(0, comma))));
        if (comma == std::string_view::npos) break;
        v.remove_prefix(comma + 1);
    }
    return out;
}

std::string fmt(double v) {
    std::ostringstream s;
    s.precision(17);
    s << v;
    return s.str();
}

template <class T>
std::string fmt_list(const std::vector<T>& v) {
    std::string out;
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (i) out += ", ";
        if constexpr (std::is_floating_point_v<T>) {
            out += fmt(v[i]);
        } else {
            out += std::to_string(v[i]);
        }
    }
    return out;
}

struct Key {
    std::string name;  // section.key
    std::function<void(RunConfig&, std::string_view)> set;
    std::function<std::string(const RunConfig&)> get;
};

const std::vector<Key>& keys() {
    static const std::vector<Key> table = [] {
        std::vector<Key> k;
        auto add = [&k](std::string name, auto set, auto get) { k.push_back({std::move(name), set, get}); };

        add("hardware.g_max", [](RunConfig& c, std::string_view v) { c.hardware.g_max = parse_double(v); },
            [](const RunConfig& c) { return fmt(c.hardware.g_max); });
        add("hardware.s_max", [](RunConfig& c, std::string_view v) { c.hardware.s_max = parse_double(v); },
            [](const RunConfig& c) { return fmt(c.hardware.s_max); });
        add("hardware.gamma", [](RunConfig& c, std::string_view v) { c.hardware.gamma = parse_double(v); },
            [](const RunConfig& c) { return fmt(c.hardware.gamma); });
        add("hardware.raster_dt", [](RunConfig& c, std::string_view v) { c.hardware.raster_dt = parse_double(v); },
            [](const RunConfig& c) { return fmt(c.hardware.raster_dt); });
        add("hardware.dwell_dt", [](RunConfig& c, std::string_view v) { c.hardware.dwell_dt = parse_double(v); },
            [](const RunConfig& c) { return fmt(c.hardware.dwell_dt); });
        add("hardware.fov",
            [](RunConfig& c, std::string_view v) { c.hardware.fov = parse_list<double>(v, parse_double); },
            [](const RunConfig& c) { return fmt_list(c.hardware.fov); });
        add("hardware.matrix",
            [](RunConfig& c, std::string_view v) { c.hardware.matrix = parse_list<int>(v, parse_small_int); },
            [](const RunConfig& c) { return fmt_list(c.hardware.matrix); });

        add("density.cutoff", [](RunConfig& c, std::string_view v) { c.optimizer.density.cutoff = parse_double(v); },
            [](const RunConfig& c) { return fmt(c.optimizer.density.cutoff); });
        add("density.decay", [](RunConfig& c, std::string_view v) { c.optimizer.density.decay = parse_double(v); },
            [](const RunConfig& c) { return fmt(c.optimizer.density.decay); });
        add("density.grid_n", [](RunConfig& c, std::string_view v) { c.optimizer.grid_n = parse_small_int(v); },
            [](const RunConfig& c) { return std::to_string(c.optimizer.grid_n); });
        add("density.field_eps", [](RunConfig& c, std::string_view v) { c.optimizer.field_eps = parse_double(v); },
            [](const RunConfig& c) { return fmt(c.optimizer.field_eps); });
        add("density.file", [](RunConfig& c, std::string_view v) { c.density_file = std::string(v); },
            [](const RunConfig& c) { return c.density_file; });

        add("optimizer.shots", [](RunConfig& c, std::string_view v) { c.optimizer.shots = parse_count(v); },
            [](const RunConfig& c) { return std::to_string(c.optimizer.shots); });
        add("optimizer.samples", [](RunConfig& c, std::string_view v) { c.optimizer.samples = parse_count(v); },
            [](const RunConfig& c) { return std::to_string(c.optimizer.samples); });
        add("optimizer.n_decim", [](RunConfig& c, std::string_view v) { c.optimizer.n_decim = parse_small_int(v); },
            [](const RunConfig& c) { return std::to_string(c.optimizer.n_decim); });
        add("optimizer.n_git", [](RunConfig& c, std::string_view v) { c.optimizer.n_git = parse_small_int(v); },
            [](const RunConfig& c) { return std::to_string(c.optimizer.n_git); });
        add("optimizer.fixed_step_iters",
            [](RunConfig& c, std::string_view v) { c.optimizer.fixed_step_iters = parse_small_int(v); },
            [](const RunConfig& c) { return std::to_string(c.optimizer.fixed_step_iters); });
        add("optimizer.eta0", [](RunConfig& c, std::string_view v) { c.optimizer.eta0 = parse_double(v); },
            [](const RunConfig& c) { return fmt(c.optimizer.eta0); });
        add("optimizer.step_fraction",
            [](RunConfig& c, std::string_view v) { c.optimizer.step_fraction = parse_double(v); },
            [](const RunConfig& c) { return fmt(c.optimizer.step_fraction); });
        add("optimizer.perturbation",
            [](RunConfig& c, std::string_view v) { c.optimizer.perturbation = parse_double(v); },
            [](const RunConfig& c) { return fmt(c.optimizer.perturbation); });
        add("optimizer.seed", [](RunConfig& c, std::string_view v) { c.optimizer.seed = parse_count(v); },
            [](const RunConfig& c) { return std::to_string(c.optimizer.seed); });
        add("optimizer.pin_center", [](RunConfig& c, std::string_view v) { c.optimizer.pin_center = parse_bool(v); },
            [](const RunConfig& c) { return std::string(c.optimizer.pin_center ? "true" : "false"); });
        add("optimizer.pin_index", [](RunConfig& c, std::string_view v) { c.optimizer.pin_index = parse_count(v); },
            [](const RunConfig& c) {
                return c.optimizer.pin_index ? std::to_string(*c.optimizer.pin_index) : std::string();
            });
        add("optimizer.divergence_factor",
            [](RunConfig& c, std::string_view v) { c.optimizer.divergence_factor = parse_double(v); },
            [](const RunConfig& c) { return fmt(c.optimizer.divergence_factor); });
        add("optimizer.attraction_gradient",
            [](RunConfig& c, std::string_view v) {
                if (v == "consistent") {
                    c.optimizer.attraction_gradient = AttractionGradient::Consistent;
                } else if (v == "interpolated") {
                    c.optimizer.attraction_gradient = AttractionGradient::InterpolatedForce;
                } else {
                    throw InputError("expected consistent or interpolated, got '" + std::string(v) + "'");
                }
            },
            [](const RunConfig& c) {
                return std::string(c.optimizer.attraction_gradient == AttractionGradient::Consistent ? "consistent"
                                                                                                     : "interpolated");
            });

        add("repulsion.kernel_eps",
            [](RunConfig& c, std::string_view v) { c.optimizer.repulsion.kernel_eps = parse_double(v); },
            [](const RunConfig& c) { return fmt(c.optimizer.repulsion.kernel_eps); });
        add("repulsion.backend",
            [](RunConfig& c, std::string_view v) {
                if (v == "direct") {
                    c.optimizer.repulsion.backend = RepulsionBackend::Direct;
                } else if (v == "tree") {
                    c.optimizer.repulsion.backend = RepulsionBackend::Tree;
                } else {
                    throw InputError("expected direct or tree, got '" + std::string(v) + "'");
                }
            },
            [](const RunConfig& c) {
                return std::string(c.optimizer.repulsion.backend == RepulsionBackend::Tree ? "tree" : "direct");
            });
        add("repulsion.tree_precision",
            [](RunConfig& c, std::string_view v) { c.optimizer.repulsion.tree_precision = parse_double(v); },
            [](const RunConfig& c) { return fmt(c.optimizer.repulsion.tree_precision); });
        add("repulsion.leaf_size",
            [](RunConfig& c, std::string_view v) { c.optimizer.repulsion.leaf_size = parse_small_int(v); },
            [](const RunConfig& c) { return std::to_string(c.optimizer.repulsion.leaf_size); });
        add("repulsion.interp_order",
            [](RunConfig& c, std::string_view v) { c.optimizer.repulsion.interp_order = parse_small_int(v); },
            [](const RunConfig& c) { return std::to_string(c.optimizer.repulsion.interp_order); });
        add("repulsion.mac_theta",
            [](RunConfig& c, std::string_view v) { c.optimizer.repulsion.mac_theta = parse_double(v); },
            [](const RunConfig& c) { return fmt(c.optimizer.repulsion.mac_theta); });
        add("repulsion.verify_samples",
            [](RunConfig& c, std::string_view v) { c.optimizer.repulsion.verify_samples = parse_small_int(v); },
            [](const RunConfig& c) { return std::to_string(c.optimizer.repulsion.verify_samples); });

        add("projection.n_pit", [](RunConfig& c, std::string_view v) { c.optimizer.n_pit = parse_small_int(v); },
            [](const RunConfig& c) { return std::to_string(c.optimizer.n_pit); });
        add("projection.init_pit", [](RunConfig& c, std::string_view v) { c.optimizer.init_pit = parse_small_int(v); },
            [](const RunConfig& c) { return std::to_string(c.optimizer.init_pit); });
        add("projection.feas_tol", [](RunConfig& c, std::string_view v) { c.feas_tol = parse_double(v); },
            [](const RunConfig& c) { return fmt(c.feas_tol); });

        add("output.trajectory", [](RunConfig& c, std::string_view v) { c.output = std::string(v); },
            [](const RunConfig& c) { return c.output; });
        add("output.csv", [](RunConfig& c, std::string_view v) { c.write_csv = parse_bool(v); },
            [](const RunConfig& c) { return std::string(c.write_csv ? "true" : "false"); });
        return k;
    }();
    return table;
}

}  // namespace

void RunConfig::validate() const {
    hardware.validate();
    if (optimizer.dims != hardware.dims()) {
        throw InputError("hardware.fov: " + std::to_string(hardware.dims()) +
                         " axes given but the optimizer runs in " + std::to_string(optimizer.dims));
    }
    if (!(feas_tol > 0.0)) throw InputError("projection.feas_tol must be > 0");
    optimizer.validate();
}

RunConfig parse_config(std::string_view text, std::string_view source) {
    std::map<std::string, const Key*, std::less<>> lookup;
    std::set<std::string> sections;
    for (const Key& k : keys()) {
        lookup.emplace(k.name, &k);
        sections.insert(k.name.substr(0, k.name.find('.')));
    }
    RunConfig cfg;
    std::set<std::string> seen;
    std::string section;
    std::size_t line_no = 0;
    auto fail = [&](const std::string& msg) {
        throw InputError(std::string(source) + ":" + std::to_string(line_no) + ": " + msg);
    };
    while (!text.empty()) {
        ++line_no;
        const auto eol = text.find('\n');
        std::string_view line = text.substr(0, eol);
        text.remove_prefix(eol == std::string_view::npos ? text.size() : eol + 1);
        const auto hash = line.find_first_of("#;");
        if (hash != std::string_view::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        if (line.front() == '[') {
            if (line.back() != ']') fail("malformed section header");
            section = std::string(trim(line.substr(1, line.size() - 2)));
            if (!sections.count(section)) fail("unknown section [" + section + "]");
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string_view::npos) fail("expected key = value");
        const std::string key(trim(line.substr(0, eq)));
        const std::string_view value = trim(line.substr(eq + 1));
        if (section.empty()) fail("key '" + key + "' appears before any [section]");
        const std::string full = section + "." + key;
        const auto it = lookup.find(full);
        if (it == lookup.end()) fail("unknown key " + full);
        if (!seen.insert(full).second) fail("duplicate key " + full);
        try {
            it->second->set(cfg, value);
        } catch (const InputError& e) {
            fail(full + ": " + e.what());
        }
    }
    cfg.optimizer.dims = cfg.hardware.dims();
    try {
        cfg.validate();
    } catch (const InputError& e) {
        throw InputError(std::string(source) + ": " + e.what());
    }
    return cfg;
}

RunConfig load_config(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw InputError("cannot open config file " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_config(buf.str(), path);
}

std::string format_config(const RunConfig& cfg) {
    std::string out;
    std::string section;
    for (const Key& k : keys()) {
        const auto dot = k.name.find('.');
        const std::string sec = k.name.substr(0, dot);
        if (sec != section) {
            if (!section.empty()) out += "\n";
            out += "[" + sec + "]\n";
            section = sec;
        }
        const std::string value = k.get(cfg);
        if (value.empty()) continue;
        out += k.name.substr(dot + 1) + " = " + value + "\n";
    }
    return out;
}

std::vector<std::string> config_keys() {
    std::vector<std::string> out;
    for (const Key& k : keys()) out.push_back(k.name);
    return out;
}

}  // namespace ktraj
