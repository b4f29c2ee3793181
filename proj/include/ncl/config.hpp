#pragma once

#include "ncl/competition.hpp"
#include "ncl/dispersal.hpp"
#include "ncl/error.hpp"
#include "ncl/spatial.hpp"
#include "ncl/system.hpp"

#include "json.hpp"

#include <Eigen/Core>

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace ncl {

using Json = nlohmann::json;

// ---------------------------------------------------------------------------
// Coefficient profiles
// ---------------------------------------------------------------------------

/// constant:      value
/// cosine:        mean + amplitude cos(2 pi frequency x)
/// linear:        ramp from `start` at x_lo to `end` at x_hi
/// gaussian_bump: base + height exp(-(x - center)^2 / (2 width^2))
/// table:         one value per node
struct ProfileSpec {
    std::string type = "constant";
    double value = 0.0;
    double mean = 0.0, amplitude = 0.0, frequency = 1.0;
    double start = 0.0, end = 0.0;
    double base = 0.0, height = 0.0, center = 0.0, width = 1.0;
    std::vector<double> table;

    static ProfileSpec constant(double v) {
        ProfileSpec p;
        p.value = v;
        return p;
    }

    static ProfileSpec cosine(double mean, double amplitude, double frequency = 1.0) {
        ProfileSpec p;
        p.type = "cosine";
        p.mean = mean;
        p.amplitude = amplitude;
        p.frequency = frequency;
        return p;
    }

    ScalarField sample(const GridPtr& grid) const {
        if (type == "constant") return ScalarField::constant(grid, value);
        if (type == "cosine") {
            return ScalarField::sample(grid, [&](double x) {
                return mean + amplitude * std::cos(2.0 * std::numbers::pi * frequency * x);
            });
        }
        if (type == "linear") {
            const double lo = grid->x_lo();
            const double len = grid->length();
            return ScalarField::sample(grid, [&](double x) { return start + (end - start) * (x - lo) / len; });
        }
        if (type == "gaussian_bump") {
            return ScalarField::sample(grid, [&](double x) {
                const double r = (x - center) / width;
                return base + height * std::exp(-0.5 * r * r);
            });
        }
        if (type == "table") {
            if (table.size() != grid->size()) {
                throw ConfigError("table profile has " + std::to_string(table.size()) + " values, grid has " +
                                  std::to_string(grid->size()) + " nodes");
            }
            return {grid, Eigen::Map<const Eigen::VectorXd>(table.data(), static_cast<Eigen::Index>(table.size()))};
        }
        throw ConfigError("unknown profile type '" + type + "'");
    }

    bool operator==(const ProfileSpec&) const = default;
};

namespace detail {

template <class T>
T required(const Json& j, const char* key, const std::string& where) {
    if (!j.is_object() || !j.contains(key)) throw ConfigError(where + ": missing '" + key + "'");
    try {
        return j.at(key).get<T>();
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(where + "." + key + ": " + e.what());
    }
}

template <class T>
T optional_value(const Json& j, const char* key, T fallback, const std::string& where) {
    if (!j.is_object() || !j.contains(key)) return fallback;
    try {
        return j.at(key).get<T>();
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(where + "." + key + ": " + e.what());
    }
}

inline void reject_unknown(const Json& j, std::initializer_list<const char*> allowed, const std::string& where) {
    for (const auto& [k, v] : j.items()) {
        bool ok = false;
        for (const char* a : allowed) ok = ok || k == a;
        if (!ok) throw ConfigError(where + ": unknown key '" + k + "'");
    }
}

/// Reads the value column of a `node,value` CSV.
inline std::vector<double> read_profile_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open profile table '" + path.string() + "'");
    std::string line;
    std::getline(in, line);
    if (line.rfind("node,value", 0) != 0) throw ConfigError(path.string() + ": expected header 'node,value'");
    std::vector<double> out;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const auto comma = line.find(',');
        if (comma == std::string::npos) throw ConfigError(path.string() + ": malformed row '" + line + "'");
        try {
            out.push_back(std::stod(line.substr(comma + 1)));
        } catch (const std::exception&) {
            throw ConfigError(path.string() + ": malformed value in '" + line + "'");
        }
    }
    return out;
}

}  // namespace detail

/// Numbers are shorthand for constants. Table files are resolved against `base_dir`
/// and inlined, so the parsed config is self-contained.
inline ProfileSpec parse_profile(const Json& j, const std::string& where, const std::filesystem::path& base_dir = {}) {
    if (j.is_number()) return ProfileSpec::constant(j.get<double>());
    if (!j.is_object()) throw ConfigError(where + ": expected a number or a profile object");
    ProfileSpec p;
    p.type = detail::required<std::string>(j, "type", where);
    if (p.type == "constant") {
        detail::reject_unknown(j, {"type", "value"}, where);
        p.value = detail::required<double>(j, "value", where);
    } else if (p.type == "cosine") {
        detail::reject_unknown(j, {"type", "mean", "amplitude", "frequency"}, where);
        p.mean = detail::required<double>(j, "mean", where);
        p.amplitude = detail::required<double>(j, "amplitude", where);
        p.frequency = detail::optional_value<double>(j, "frequency", 1.0, where);
    } else if (p.type == "linear") {
        detail::reject_unknown(j, {"type", "start", "end"}, where);
        p.start = detail::required<double>(j, "start", where);
        p.end = detail::required<double>(j, "end", where);
    } else if (p.type == "gaussian_bump") {
        detail::reject_unknown(j, {"type", "base", "height", "center", "width"}, where);
        p.base = detail::required<double>(j, "base", where);
        p.height = detail::required<double>(j, "height", where);
        p.center = detail::required<double>(j, "center", where);
        p.width = detail::required<double>(j, "width", where);
        if (!(p.width > 0.0)) throw ConfigError(where + ": width must be positive");
    } else if (p.type == "table") {
        detail::reject_unknown(j, {"type", "values", "file"}, where);
        if (j.contains("values")) {
            p.table = detail::required<std::vector<double>>(j, "values", where);
        } else if (j.contains("file")) {
            p.table = detail::read_profile_csv(base_dir / detail::required<std::string>(j, "file", where));
        } else {
            throw ConfigError(where + ": table profile needs 'values' or 'file'");
        }
    } else {
        throw ConfigError(where + ": unknown profile type '" + p.type + "'");
    }
    return p;
}

inline Json to_json(const ProfileSpec& p) {
    Json j;
    j["type"] = p.type;
    if (p.type == "constant") {
        j["value"] = p.value;
    } else if (p.type == "cosine") {
        j["mean"] = p.mean;
        j["amplitude"] = p.amplitude;
        j["frequency"] = p.frequency;
    } else if (p.type == "linear") {
        j["start"] = p.start;
        j["end"] = p.end;
    } else if (p.type == "gaussian_bump") {
        j["base"] = p.base;
        j["height"] = p.height;
        j["center"] = p.center;
        j["width"] = p.width;
    } else {
        j["values"] = p.table;
    }
    return j;
}

// ---------------------------------------------------------------------------
// Scenario
// ---------------------------------------------------------------------------

struct SpeciesConfig {
    std::string kernel = "gaussian";  // gaussian | tophat
    double kernel_parameter = 0.1;
    DispersalKind kind = DispersalKind::N;
    double rate = 1.0;
    double alpha = 1.0;

    bool operator==(const SpeciesConfig&) const = default;
};

struct Tolerances {
    double agreement = 1e-6;
    double neutral = kNeutralRelTol;
    double probe_residual = 1e-10;
    double max_time = 2e4;

    bool operator==(const Tolerances&) const = default;
};

struct ScenarioConfig {
    double x_lo = 0.0;
    double x_hi = 1.0;
    std::size_t n = 100;
    SpeciesConfig u;
    SpeciesConfig v;
    ProfileSpec m = ProfileSpec::constant(1.0);
    ProfileSpec M = ProfileSpec::constant(1.0);
    ProfileSpec b = ProfileSpec::constant(0.5);
    ProfileSpec c = ProfileSpec::constant(0.5);
    ProfileSpec b1 = ProfileSpec::constant(1.0);
    ProfileSpec c2 = ProfileSpec::constant(1.0);
    Variant variant = Variant::classic;
    int probes = 20;
    std::uint64_t seed = 0;
    std::string output = "out";
    Tolerances tolerances;

    bool operator==(const ScenarioConfig&) const = default;
};

namespace detail {

inline SpeciesConfig parse_species(const Json& j, const std::string& where) {
    if (!j.is_object()) throw ConfigError(where + ": expected an object");
    reject_unknown(j, {"kernel", "kind", "rate", "alpha"}, where);
    SpeciesConfig s;
    const Json& k = j.contains("kernel") ? j.at("kernel") : Json::object();
    reject_unknown(k, {"family", "parameter"}, where + ".kernel");
    s.kernel = optional_value<std::string>(k, "family", "gaussian", where + ".kernel");
    if (s.kernel != "gaussian" && s.kernel != "tophat") {
        throw ConfigError(where + ".kernel: unknown family '" + s.kernel + "'");
    }
    s.kernel_parameter = optional_value<double>(k, "parameter", 0.1, where + ".kernel");
    try {
        s.kind = parse_dispersal_kind(optional_value<std::string>(j, "kind", "N", where));
    } catch (const InvalidArgument& e) {
        throw ConfigError(where + ": " + e.what());
    }
    s.rate = required<double>(j, "rate", where);
    s.alpha = optional_value<double>(j, "alpha", 1.0, where);
    if (!(s.rate >= 0.0)) throw ConfigError(where + ": rate must be nonnegative");
    if (!(s.alpha >= 0.0 && s.alpha <= 1.0)) throw ConfigError(where + ": alpha must lie in [0,1]");
    if (!(s.kernel_parameter > 0.0)) throw ConfigError(where + ".kernel: parameter must be positive");
    return s;
}

inline Json species_json(const SpeciesConfig& s) {
    return {{"kernel", {{"family", s.kernel}, {"parameter", s.kernel_parameter}}},
            {"kind", std::string(to_string(s.kind))},
            {"rate", s.rate},
            {"alpha", s.alpha}};
}

}  // namespace detail

inline ScenarioConfig parse_scenario(const Json& j, const std::filesystem::path& base_dir = {}) {
    const std::string root = "config";
    if (!j.is_object()) throw ConfigError("config: expected a JSON object");
    detail::reject_unknown(j, {"grid", "dispersal", "coefficients", "variant", "probes", "seed", "output", "tolerances"},
                           root);
    ScenarioConfig c;
    const Json& g = j.contains("grid") ? j.at("grid") : Json::object();
    detail::reject_unknown(g, {"x_lo", "x_hi", "n"}, "grid");
    c.x_lo = detail::optional_value<double>(g, "x_lo", 0.0, "grid");
    c.x_hi = detail::optional_value<double>(g, "x_hi", 1.0, "grid");
    c.n = detail::optional_value<std::size_t>(g, "n", 100, "grid");
    if (!(c.x_lo < c.x_hi)) throw ConfigError("grid: x_lo must be below x_hi");
    if (c.n < Grid::kMinNodes) throw ConfigError("grid: n must be at least " + std::to_string(Grid::kMinNodes));

    if (!j.contains("dispersal")) throw ConfigError("config: missing 'dispersal'");
    const Json& d = j.at("dispersal");
    detail::reject_unknown(d, {"u", "v"}, "dispersal");
    if (!d.contains("u") || !d.contains("v")) throw ConfigError("dispersal: needs 'u' and 'v'");
    c.u = detail::parse_species(d.at("u"), "dispersal.u");
    c.v = detail::parse_species(d.at("v"), "dispersal.v");

    const Json& co = j.contains("coefficients") ? j.at("coefficients") : Json::object();
    detail::reject_unknown(co, {"m", "M", "b", "c", "b1", "c2"}, "coefficients");
    auto prof = [&](const char* key, ProfileSpec fallback) {
        return co.contains(key) ? parse_profile(co.at(key), std::string("coefficients.") + key, base_dir) : fallback;
    };
    c.m = prof("m", c.m);
    c.M = prof("M", c.M);
    c.b = prof("b", c.b);
    c.c = prof("c", c.c);
    c.b1 = prof("b1", c.b1);
    c.c2 = prof("c2", c.c2);

    try {
        c.variant = parse_variant(detail::optional_value<std::string>(j, "variant", "classic", root));
    } catch (const InvalidArgument& e) {
        throw ConfigError(std::string("config: ") + e.what());
    }
    c.probes = detail::optional_value<int>(j, "probes", 20, root);
    if (c.probes < 0) throw ConfigError("config: probes must be nonnegative");
    c.seed = detail::optional_value<std::uint64_t>(j, "seed", 0, root);
    c.output = detail::optional_value<std::string>(j, "output", "out", root);

    const Json& t = j.contains("tolerances") ? j.at("tolerances") : Json::object();
    detail::reject_unknown(t, {"agreement", "neutral", "probe_residual", "max_time"}, "tolerances");
    c.tolerances.agreement = detail::optional_value<double>(t, "agreement", c.tolerances.agreement, "tolerances");
    c.tolerances.neutral = detail::optional_value<double>(t, "neutral", c.tolerances.neutral, "tolerances");
    c.tolerances.probe_residual =
        detail::optional_value<double>(t, "probe_residual", c.tolerances.probe_residual, "tolerances");
    c.tolerances.max_time = detail::optional_value<double>(t, "max_time", c.tolerances.max_time, "tolerances");
    return c;
}

inline Json to_json(const ScenarioConfig& c) {
    Json j;
    j["grid"] = {{"x_lo", c.x_lo}, {"x_hi", c.x_hi}, {"n", c.n}};
    j["dispersal"] = {{"u", detail::species_json(c.u)}, {"v", detail::species_json(c.v)}};
    j["coefficients"] = {{"m", to_json(c.m)},  {"M", to_json(c.M)},   {"b", to_json(c.b)},
                         {"c", to_json(c.c)},  {"b1", to_json(c.b1)}, {"c2", to_json(c.c2)}};
    j["variant"] = std::string(to_string(c.variant));
    j["probes"] = c.probes;
    j["seed"] = c.seed;
    j["output"] = c.output;
    j["tolerances"] = {{"agreement", c.tolerances.agreement},
                       {"neutral", c.tolerances.neutral},
                       {"probe_residual", c.tolerances.probe_residual},
                       {"max_time", c.tolerances.max_time}};
    return j;
}

inline Json read_json_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config '" + path.string() + "'");
    try {
        return Json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
        throw ConfigError(path.string() + ": " + e.what());
    }
}

inline ScenarioConfig load_scenario(const std::filesystem::path& path) {
    return parse_scenario(read_json_file(path), path.parent_path());
}

/// Canonical text used for hashing and round-trip checks.
inline std::string canonical_text(const Json& j) { return j.dump(2) + "\n"; }

/// 64-bit FNV-1a.
inline std::uint64_t fnv1a(std::string_view bytes) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char ch : bytes) {
        h ^= ch;
        h *= 0x100000001b3ULL;
    }
    return h;
}

inline std::string hex64(std::uint64_t x) {
    std::ostringstream os;
    os << std::hex;
    os.width(16);
    os.fill('0');
    os << x;
    return os.str();
}

inline std::string config_hash(const ScenarioConfig& c) { return hex64(fnv1a(canonical_text(to_json(c)))); }

/// Builds the competition system a scenario describes. Invalid combinations surface
/// as ConfigError.
inline CompetitionSystemPtr build_system(const ScenarioConfig& c) {
    try {
        const GridPtr grid = make_grid(c.x_lo, c.x_hi, c.n);
        auto op = [&](const SpeciesConfig& s) {
            const KernelSpec k = s.kernel == "tophat" ? KernelSpec::tophat(s.kernel_parameter)
                                                      : KernelSpec::gaussian(s.kernel_parameter);
            const std::optional<double> alpha =
                s.kind == DispersalKind::mixed ? std::optional<double>(s.alpha) : std::nullopt;
            return assemble_operator(s.kind, s.rate, build_kernel_matrix(k, grid), grid, alpha);
        };
        SystemSpec spec{op(c.u),           op(c.v),           c.m.sample(grid),  c.M.sample(grid), c.b.sample(grid),
                        c.c.sample(grid), c.b1.sample(grid), c.c2.sample(grid), c.variant};
        return assemble_system(std::move(spec));
    } catch (const InvalidArgument& e) {
        throw ConfigError(std::string("invalid scenario: ") + e.what());
    }
}

inline ClassifyOptions classify_options(const ScenarioConfig& c, int threads = 1) {
    ClassifyOptions o;
    o.probe_starts = c.probes;
    o.seed = c.seed;
    o.threads = threads;
    o.agreement_tol = c.tolerances.agreement;
    o.neutral_rel_tol = c.tolerances.neutral;
    o.march.tol = c.tolerances.probe_residual;
    o.march.max_time = c.tolerances.max_time;
    return o;
}

// ---------------------------------------------------------------------------
// Sweep
// ---------------------------------------------------------------------------

struct SweepAxis {
    std::string parameter;  // d | D | b | c | alpha | beta
    double start = 0.0;
    double stop = 0.0;
    int steps = 1;

    double value(int k) const {
        return steps == 1 ? start : start + (stop - start) * static_cast<double>(k) / static_cast<double>(steps - 1);
    }

    bool operator==(const SweepAxis&) const = default;
};

struct SweepConfig {
    ScenarioConfig base;
    std::vector<SweepAxis> axes;
    int threads = 1;

    std::size_t cell_count() const {
        std::size_t n = 1;
        for (const auto& a : axes) n *= static_cast<std::size_t>(a.steps);
        return n;
    }

    /// Axis step indices of a cell; the first axis varies slowest.
    std::vector<int> cell_steps(std::size_t cell) const {
        std::vector<int> out(axes.size());
        for (std::size_t k = axes.size(); k-- > 0;) {
            out[k] = static_cast<int>(cell % static_cast<std::size_t>(axes[k].steps));
            cell /= static_cast<std::size_t>(axes[k].steps);
        }
        return out;
    }

    bool operator==(const SweepConfig&) const = default;
};

inline void apply_axis(ScenarioConfig& c, const std::string& parameter, double value) {
    if (parameter == "d") c.u.rate = value;
    else if (parameter == "D") c.v.rate = value;
    else if (parameter == "b") c.b = ProfileSpec::constant(value);
    else if (parameter == "c") c.c = ProfileSpec::constant(value);
    else if (parameter == "alpha") c.u.alpha = value;
    else if (parameter == "beta") c.v.alpha = value;
    else throw ConfigError("unknown sweep parameter '" + parameter + "'");
}

/// Scenario of one cell. Its seed is derived from the base seed and the cell index.
inline ScenarioConfig cell_config(const SweepConfig& s, std::size_t cell) {
    ScenarioConfig c = s.base;
    const auto steps = s.cell_steps(cell);
    for (std::size_t k = 0; k < s.axes.size(); ++k) apply_axis(c, s.axes[k].parameter, s.axes[k].value(steps[k]));
    c.seed = derive_seed(s.base.seed, cell);
    return c;
}

inline SweepConfig parse_sweep(const Json& j, const std::filesystem::path& base_dir = {}) {
    if (!j.is_object()) throw ConfigError("sweep: expected a JSON object");
    detail::reject_unknown(j, {"base", "axes", "threads"}, "sweep");
    SweepConfig s;
    if (!j.contains("base")) throw ConfigError("sweep: missing 'base'");
    s.base = parse_scenario(j.at("base"), base_dir);
    if (!j.contains("axes") || !j.at("axes").is_array()) throw ConfigError("sweep: 'axes' must be an array");
    for (const auto& a : j.at("axes")) {
        detail::reject_unknown(a, {"parameter", "start", "stop", "steps"}, "sweep.axes");
        SweepAxis ax;
        ax.parameter = detail::required<std::string>(a, "parameter", "sweep.axes");
        ax.start = detail::required<double>(a, "start", "sweep.axes");
        ax.stop = detail::optional_value<double>(a, "stop", ax.start, "sweep.axes");
        ax.steps = detail::optional_value<int>(a, "steps", 1, "sweep.axes");
        if (ax.steps < 1) throw ConfigError("sweep.axes: steps must be at least 1");
        ScenarioConfig probe = s.base;
        apply_axis(probe, ax.parameter, ax.start);
        for (const auto& prev : s.axes) {
            if (prev.parameter == ax.parameter) throw ConfigError("sweep.axes: parameter '" + ax.parameter + "' repeated");
        }
        s.axes.push_back(ax);
    }
    if (s.axes.size() > 2) throw ConfigError("sweep: at most two axes");
    s.threads = detail::optional_value<int>(j, "threads", 1, "sweep");
    if (s.threads < 1) throw ConfigError("sweep: threads must be at least 1");
    return s;
}

inline Json to_json(const SweepConfig& s) {
    Json axes = Json::array();
    for (const auto& a : s.axes) {
        axes.push_back({{"parameter", a.parameter}, {"start", a.start}, {"stop", a.stop}, {"steps", a.steps}});
    }
    return {{"base", to_json(s.base)}, {"axes", axes}, {"threads", s.threads}};
}

inline SweepConfig load_sweep(const std::filesystem::path& path) {
    return parse_sweep(read_json_file(path), path.parent_path());
}

}  // namespace ncl
