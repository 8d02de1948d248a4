#include "spultra/config.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>

namespace spultra {

Subcommand parse_subcommand(const std::string& name) {
    if (name == "simulate") return Subcommand::simulate;
    if (name == "learn") return Subcommand::learn;
    if (name == "reconstruct") return Subcommand::reconstruct;
    if (name == "evaluate") return Subcommand::evaluate;
    if (name == "all") return Subcommand::all;
    throw ConfigError("unknown subcommand '" + name + "'");
}

std::string to_string(Subcommand s) {
    switch (s) {
    case Subcommand::simulate: return "simulate";
    case Subcommand::learn: return "learn";
    case Subcommand::reconstruct: return "reconstruct";
    case Subcommand::evaluate: return "evaluate";
    case Subcommand::all: return "all";
    }
    return "?";
}

namespace {

std::string join_lines(const std::vector<std::string>& errors) {
    std::string out = "invalid config:";
    for (const auto& e : errors) out += "\n  " + e;
    return out;
}

std::string trim(std::string s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

struct Entry {
    std::string value;
    int line;
};

using Table = std::map<std::string, Entry>;  // "section.key" -> value

// Registry of known keys: each binder parses its text into the config and
// returns an error message (empty on success).
using Binder = std::function<std::string(const std::string&, ExperimentConfig&)>;

std::string parse_double(const std::string& s, double& out) {
    const char* b = s.data();
    const char* e = b + s.size();
    auto [p, ec] = std::from_chars(b, e, out);
    if (ec != std::errc() || p != e || !std::isfinite(out)) return "expected a number, got '" + s + "'";
    return {};
}

std::string parse_size(const std::string& s, std::size_t& out) {
    unsigned long long v = 0;
    const char* b = s.data();
    const char* e = b + s.size();
    auto [p, ec] = std::from_chars(b, e, v);
    if (ec != std::errc() || p != e) return "expected a non-negative integer, got '" + s + "'";
    out = static_cast<std::size_t>(v);
    return {};
}

std::string parse_u64(const std::string& s, std::uint64_t& out) {
    unsigned long long v = 0;
    const char* b = s.data();
    const char* e = b + s.size();
    auto [p, ec] = std::from_chars(b, e, v);
    if (ec != std::errc() || p != e) return "expected a non-negative integer, got '" + s + "'";
    out = v;
    return {};
}

template <typename Get>
Binder num(Get get) {
    return [get](const std::string& s, ExperimentConfig& c) { return parse_double(s, get(c)); };
}

template <typename Get>
Binder count(Get get) {
    return [get](const std::string& s, ExperimentConfig& c) { return parse_size(s, get(c)); };
}

template <typename Get>
Binder text(Get get) {
    return [get](const std::string& s, ExperimentConfig& c) {
        get(c) = s;
        return std::string{};
    };
}

const std::map<std::string, Binder>& registry() {
    static const std::map<std::string, Binder> keys = {
        {"geometry.beam",
         [](const std::string& s, ExperimentConfig& c) -> std::string {
             if (s == "parallel") c.geometry.beam_kind = BeamKind::parallel;
             else if (s == "fan") c.geometry.beam_kind = BeamKind::fan;
             else return "expected 'parallel' or 'fan', got '" + s + "'";
             return {};
         }},
        {"geometry.rows", count([](ExperimentConfig& c) -> std::size_t& { return c.geometry.image_dims.rows; })},
        {"geometry.cols", count([](ExperimentConfig& c) -> std::size_t& { return c.geometry.image_dims.cols; })},
        {"geometry.pixel_size",
         [](const std::string& s, ExperimentConfig& c) {
             double v = 0.0;
             auto err = parse_double(s, v);
             c.geometry.pixel_spacing = {v, v};
             return err;
         }},
        {"geometry.n_views", count([](ExperimentConfig& c) -> std::size_t& { return c.geometry.n_views; })},
        {"geometry.n_detectors", count([](ExperimentConfig& c) -> std::size_t& { return c.geometry.n_detectors; })},
        {"geometry.detector_spacing",
         num([](ExperimentConfig& c) -> double& { return c.geometry.detector_spacing; })},
        {"geometry.angular_range_deg",
         [](const std::string& s, ExperimentConfig& c) {
             double v = 0.0;
             auto err = parse_double(s, v);
             c.geometry.angular_range = v * 3.14159265358979323846 / 180.0;
             return err;
         }},
        {"geometry.source_to_iso", num([](ExperimentConfig& c) -> double& { return c.geometry.source_to_iso; })},
        {"geometry.source_to_detector",
         num([](ExperimentConfig& c) -> double& { return c.geometry.source_to_detector; })},

        {"model.I0", num([](ExperimentConfig& c) -> double& { return c.model.I0; })},
        {"model.sigma2", num([](ExperimentConfig& c) -> double& { return c.model.sigma2; })},
        {"model.s1", num([](ExperimentConfig& c) -> double& { return c.model.bh.s1; })},
        {"model.s2", num([](ExperimentConfig& c) -> double& { return c.model.bh.s2; })},

        {"phantom.preset", text([](ExperimentConfig& c) -> std::string& { return c.phantom; })},
        {"phantom.seed",
         [](const std::string& s, ExperimentConfig& c) { return parse_u64(s, c.seed); }},
        {"phantom.rng",
         [](const std::string& s, ExperimentConfig&) -> std::string {
             if (s != kRngAlgorithm) return "unsupported generator '" + s + "' (expected philox4x32-10)";
             return {};
         }},

        {"learning.K", count([](ExperimentConfig& c) -> std::size_t& { return c.learning.K; })},
        {"learning.v", count([](ExperimentConfig& c) -> std::size_t& { return c.learning.v; })},
        {"learning.stride", count([](ExperimentConfig& c) -> std::size_t& { return c.learning.stride; })},
        {"learning.gamma_c", num([](ExperimentConfig& c) -> double& { return c.learning.gamma_c; })},
        {"learning.lambda0", num([](ExperimentConfig& c) -> double& { return c.learning.lambda0; })},
        {"learning.iters", count([](ExperimentConfig& c) -> std::size_t& { return c.learning.iters; })},
        {"learning.phantom", text([](ExperimentConfig& c) -> std::string& { return c.learning.phantom; })},

        {"recon.beta", num([](ExperimentConfig& c) -> double& { return c.recon.beta; })},
        {"recon.gamma_c", num([](ExperimentConfig& c) -> double& { return c.recon.gamma_c; })},
        {"recon.N", count([](ExperimentConfig& c) -> std::size_t& { return c.recon.N; })},
        {"recon.P", count([](ExperimentConfig& c) -> std::size_t& { return c.recon.P; })},
        {"recon.M", count([](ExperimentConfig& c) -> std::size_t& { return c.recon.M; })},
        {"recon.alpha", num([](ExperimentConfig& c) -> double& { return c.recon.alpha; })},
        {"recon.x_max", num([](ExperimentConfig& c) -> double& { return c.recon.x_max; })},
        {"recon.stride", count([](ExperimentConfig& c) -> std::size_t& { return c.recon_stride; })},
        {"recon.beta_ep", num([](ExperimentConfig& c) -> double& { return c.recon.ep.beta_ep; })},
        {"recon.delta", num([](ExperimentConfig& c) -> double& { return c.recon.ep.delta; })},
        {"recon.ep_iters", count([](ExperimentConfig& c) -> std::size_t& { return c.recon.ep.iters; })},
        {"recon.potential",
         [](const std::string& s, ExperimentConfig& c) -> std::string {
             if (s == "lange") c.recon.ep.kind = PotentialKind::lange;
             else if (s == "hyperbola") c.recon.ep.kind = PotentialKind::hyperbola;
             else return "expected 'lange' or 'hyperbola', got '" + s + "'";
             return {};
         }},

        {"metrics.mu_water", num([](ExperimentConfig& c) -> double& { return c.mu_water; })},
        {"metrics.roi",
         [](const std::string& s, ExperimentConfig& c) -> std::string {
             if (s != "body" && s != "full") return "expected 'body' or 'full', got '" + s + "'";
             c.roi = s;
             return {};
         }},

        {"io.out_dir",
         [](const std::string& s, ExperimentConfig& c) {
             c.out_dir = s;
             return std::string{};
         }},
        {"io.transforms",
         [](const std::string& s, ExperimentConfig& c) {
             c.transforms = s;
             return std::string{};
         }},
    };
    return keys;
}

std::vector<std::string> required_keys(Subcommand sub) {
    std::vector<std::string> keys = {"geometry.rows", "geometry.cols", "geometry.n_views", "geometry.n_detectors"};
    const bool needs_model = sub != Subcommand::learn && sub != Subcommand::evaluate;
    if (needs_model) {
        keys.insert(keys.end(), {"model.I0", "model.sigma2"});
    }
    if (sub == Subcommand::learn || sub == Subcommand::all) {
        keys.push_back("learning.K");
    }
    if (sub == Subcommand::reconstruct || sub == Subcommand::all) {
        keys.insert(keys.end(), {"recon.beta", "recon.gamma_c"});
    }
    return keys;
}

void check_ranges(const ExperimentConfig& c, const Table& t, std::vector<std::string>& errors) {
    auto need = [&](bool ok, const std::string& key, const std::string& msg) {
        if (!ok) errors.push_back(key + ": " + msg);
    };
    need(c.geometry.pixel_spacing.dx > 0.0, "geometry.pixel_size", "must be > 0");
    need(c.geometry.detector_spacing > 0.0, "geometry.detector_spacing", "must be > 0");
    need(c.model.I0 > 0.0, "model.I0", "must be > 0");
    need(c.model.sigma2 >= 0.0, "model.sigma2", "must be >= 0");
    need(c.model.bh.s1 > 0.0, "model.s1", "must be > 0");
    need(c.learning.K >= 1, "learning.K", "must be >= 1");
    const auto side = static_cast<std::size_t>(std::llround(std::sqrt(static_cast<double>(c.learning.v))));
    need(side * side == c.learning.v && side > 0, "learning.v", "must be a perfect square (patch side^2)");
    need(c.learning.stride >= 1 && c.learning.stride <= side, "learning.stride", "must lie in [1, patch side]");
    need(c.recon_stride >= 1 && c.recon_stride <= side, "recon.stride", "must lie in [1, patch side]");
    need(c.learning.gamma_c > 0.0, "learning.gamma_c", "must be > 0");
    need(c.learning.lambda0 > 0.0, "learning.lambda0", "must be > 0");
    need(c.recon.beta >= 0.0, "recon.beta", "must be >= 0");
    need(c.recon.gamma_c > 0.0, "recon.gamma_c", "must be > 0");
    need(c.recon.P >= 1, "recon.P", "must be >= 1");
    need(c.recon.M >= 1, "recon.M", "must be >= 1");
    need(c.recon.M <= c.geometry.n_views || c.geometry.n_views == 0, "recon.M", "must not exceed geometry.n_views");
    need(c.recon.alpha >= 1.0 && c.recon.alpha < 2.0, "recon.alpha", "must lie in [1, 2)");
    need(c.recon.x_max > 0.0, "recon.x_max", "must be > 0");
    need(c.recon.ep.beta_ep >= 0.0, "recon.beta_ep", "must be >= 0");
    need(c.recon.ep.delta > 0.0, "recon.delta", "must be > 0");
    need(c.mu_water > 0.0, "metrics.mu_water", "must be > 0");
    if (t.count("geometry.rows") && t.count("geometry.cols") && t.count("geometry.n_views") &&
        t.count("geometry.n_detectors")) {
        need(static_cast<std::size_t>(side) <= std::min(c.geometry.image_dims.rows, c.geometry.image_dims.cols),
             "learning.v", "patch does not fit in the image");
        try {
            c.geometry.validate();
        } catch (const ConfigError& e) {
            errors.push_back(std::string("geometry: ") + e.what());
        }
    }
    for (const char* key : {"phantom.preset", "learning.phantom"}) {
        const std::string& name = std::string(key) == "phantom.preset" ? c.phantom : c.learning.phantom;
        try {
            (void)phantom_preset(name, {8, 8}, {1.0, 1.0});
        } catch (const ConfigError& e) {
            errors.push_back(std::string(key) + ": " + e.what());
        }
    }
}

} // namespace

ConfigValidationError::ConfigValidationError(std::vector<std::string> errors)
    : ConfigError(join_lines(errors)), errors_(std::move(errors)) {}

ExperimentConfig parse_config_text(const std::string& input, Subcommand sub) {
    std::vector<std::string> errors;
    Table table;
    std::set<std::string> sections = {"geometry", "model", "phantom", "learning", "recon", "metrics", "io"};
    std::istringstream is(input);
    std::string raw, section;
    int lineno = 0;
    while (std::getline(is, raw)) {
        ++lineno;
        std::string line = raw;
        if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        line = trim(line);
        if (line.empty()) continue;
        if (line.front() == '[') {
            if (line.back() != ']') {
                errors.push_back("line " + std::to_string(lineno) + ": malformed section header");
                continue;
            }
            section = trim(line.substr(1, line.size() - 2));
            if (!sections.count(section)) {
                errors.push_back("line " + std::to_string(lineno) + ": unknown section [" + section + "]");
            }
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            errors.push_back("line " + std::to_string(lineno) + ": expected key = value");
            continue;
        }
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        if (section.empty()) {
            errors.push_back("line " + std::to_string(lineno) + ": key '" + key + "' outside any section");
            continue;
        }
        const std::string full = section + "." + key;
        if (!sections.count(section)) continue;
        if (!registry().count(full)) {
            errors.push_back(full + ": unknown key (line " + std::to_string(lineno) + ")");
            continue;
        }
        if (auto it = table.find(full); it != table.end()) {
            errors.push_back(full + ": duplicate key (lines " + std::to_string(it->second.line) + " and " +
                             std::to_string(lineno) + ")");
            continue;
        }
        table[full] = {value, lineno};
    }

    ExperimentConfig cfg;
    for (const auto& [key, entry] : table) {
        if (const std::string err = registry().at(key)(entry.value, cfg); !err.empty()) {
            errors.push_back(key + ": " + err);
        }
    }
    if (!table.count("geometry.detector_spacing")) {
        cfg.geometry.detector_spacing = cfg.geometry.pixel_spacing.dx;
    }
    for (const auto& key : required_keys(sub)) {
        if (!table.count(key)) errors.push_back(key + ": missing required key");
    }
    check_ranges(cfg, table, errors);
    if (!errors.empty()) {
        throw ConfigValidationError(std::move(errors));
    }
    cfg.recon.patch = {static_cast<std::size_t>(std::llround(std::sqrt(static_cast<double>(cfg.learning.v)))),
                       cfg.recon_stride};
    return cfg;
}

ExperimentConfig parse_config(const std::filesystem::path& path, Subcommand sub) {
    std::ifstream is(path);
    if (!is) {
        throw ConfigValidationError({"cannot read config file " + path.string()});
    }
    std::ostringstream ss;
    ss << is.rdbuf();
    return parse_config_text(ss.str(), sub);
}

std::string ExperimentConfig::canonical() const {
    std::ostringstream os;
    os.precision(17);
    const auto& g = geometry;
    os << "geometry.beam=" << (g.beam_kind == BeamKind::parallel ? "parallel" : "fan") << '\n'
       << "geometry.rows=" << g.image_dims.rows << "\ngeometry.cols=" << g.image_dims.cols
       << "\ngeometry.pixel_size=" << g.pixel_spacing.dx << "\ngeometry.n_views=" << g.n_views
       << "\ngeometry.n_detectors=" << g.n_detectors << "\ngeometry.detector_spacing=" << g.detector_spacing
       << "\ngeometry.angular_range=" << g.angular_range << "\ngeometry.source_to_iso=" << g.source_to_iso
       << "\ngeometry.source_to_detector=" << g.source_to_detector << "\nmodel.I0=" << model.I0
       << "\nmodel.sigma2=" << model.sigma2 << "\nmodel.s1=" << model.bh.s1 << "\nmodel.s2=" << model.bh.s2
       << "\nphantom.preset=" << phantom << "\nphantom.seed=" << seed << "\nphantom.rng=" << kRngAlgorithm
       << "\nlearning.K=" << learning.K << "\nlearning.v=" << learning.v << "\nlearning.stride=" << learning.stride
       << "\nlearning.gamma_c=" << learning.gamma_c << "\nlearning.lambda0=" << learning.lambda0
       << "\nlearning.iters=" << learning.iters << "\nlearning.phantom=" << learning.phantom
       << "\nrecon.beta=" << recon.beta << "\nrecon.gamma_c=" << recon.gamma_c << "\nrecon.N=" << recon.N
       << "\nrecon.P=" << recon.P << "\nrecon.M=" << recon.M << "\nrecon.alpha=" << recon.alpha
       << "\nrecon.x_max=" << recon.x_max << "\nrecon.stride=" << recon_stride << "\nrecon.beta_ep=" << recon.ep.beta_ep
       << "\nrecon.delta=" << recon.ep.delta
       << "\nrecon.potential=" << (recon.ep.kind == PotentialKind::lange ? "lange" : "hyperbola")
       << "\nrecon.ep_iters=" << recon.ep.iters << "\nmetrics.mu_water=" << mu_water << "\nmetrics.roi=" << roi
       << "\nio.transforms=" << (transforms ? transforms->string() : std::string()) << '\n';
    return os.str();
}

} // namespace spultra
