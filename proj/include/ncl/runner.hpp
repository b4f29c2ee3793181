#pragma once

#include "ncl/competition.hpp"
#include "ncl/config.hpp"
#include "ncl/error.hpp"
#include "ncl/oracle.hpp"
#include "ncl/parallel.hpp"
#include "ncl/spectral.hpp"
#include "ncl/version.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace ncl {

enum ExitCode : int { kExitOk = 0, kExitConfig = 2, kExitFalsified = 3, kExitNumeric = 4 };

// ---------------------------------------------------------------------------
// Serialization
// ---------------------------------------------------------------------------

inline Json number_or_null(double x) { return std::isfinite(x) ? Json(x) : Json(nullptr); }

inline Json to_json(const SpectralResult& r) {
    return {{"lambda", r.lambda},
            {"method", std::string(to_string(r.method))},
            {"iterations", r.iterations},
            {"residual", r.residual},
            {"caveat", std::string(SpectralResult::kCaveat)}};
}

inline Json to_json(const StabilityVerdict& v) {
    return {{"sign", std::string(to_string(v.sign))}, {"lambda", v.lambda}, {"tolerance", v.tolerance}};
}

inline Json to_json(const SteadyStateResult& r) {
    return {{"exists", r.exists},
            {"residual", r.residual},
            {"iterations", r.iterations},
            {"lambda_star", r.lambda_star},
            {"c1", r.c1},
            {"newton_polished", r.newton_polished},
            {"sup", r.exists ? r.profile.sup_norm() : 0.0}};
}

inline Json to_json(const OracleReport& r) {
    return {{"name", r.name},
            {"lhs", r.lhs},
            {"rhs", r.rhs},
            {"difference", r.difference},
            {"scale", r.scale},
            {"tolerance", r.tolerance},
            {"sign_claim", std::string(to_string(r.sign_claim))},
            {"sign_satisfied", r.sign_satisfied},
            {"agrees", r.agrees},
            {"passed", r.passed()}};
}

inline Json to_json(const ClassificationReport& rep) {
    Json j;
    j["case"] = rep.case_string();
    j["status"] = std::string(to_string(rep.status));
    j["evidence"] = rep.evidence;
    j["note"] = rep.note;
    j["variant"] = std::string(to_string(rep.variant));
    j["classifiable"] = rep.classifiable;
    j["gate_reason"] = rep.gate_reason;
    j["condition_1_5"] = {{"holds", rep.condition_1_5.holds}, {"margin", rep.condition_1_5.margin}};
    j["seed"] = rep.seed;
    j["probe_starts"] = rep.probe_starts;
    j["semi_trivials"] = {{"u_d", to_json(rep.semi_trivials.u_d)}, {"v_D", to_json(rep.semi_trivials.v_D)}};
    if (rep.indices) {
        j["mu"] = to_json(rep.indices->mu);
        j["nu"] = to_json(rep.indices->nu);
        j["mu"]["verdict"] = to_json(rep.indices->mu_verdict);
        j["nu"]["verdict"] = to_json(rep.indices->nu_verdict);
    } else {
        j["mu"] = nullptr;
        j["nu"] = nullptr;
    }
    if (rep.positive_state) {
        j["positive_state"] = {{"residual", rep.positive_residual},
                               {"u_sup", rep.positive_state->u.sup_norm()},
                               {"v_sup", rep.positive_state->v.sup_norm()},
                               {"u_min", rep.positive_state->u.min()},
                               {"v_min", rep.positive_state->v.min()}};
    } else {
        j["positive_state"] = nullptr;
    }
    j["predicted_attractor"] = rep.predicted_attractor;
    Json family = Json::array();
    for (const auto& [s, r] : rep.continuum.family_residuals) family.push_back({{"s", s}, {"residual", r}});
    j["continuum"] = {{"detected", rep.continuum.detected},
                      {"constant_coefficients", rep.continuum.constant_coefficients},
                      {"bc_gap", rep.continuum.bc_gap},
                      {"mismatch", rep.continuum.mismatch},
                      {"family_residuals", family},
                      {"distinct_segment_points", rep.continuum.distinct_segment_points}};
    Json probes = Json::array();
    for (const auto& p : rep.probes) {
        Json pj = {{"index", p.index},
                   {"kind", std::string(to_string(p.kind))},
                   {"converged", p.converged},
                   {"residual", p.residual},
                   {"time", p.time},
                   {"steps", p.steps},
                   {"distance", number_or_null(p.distance)},
                   {"matched", p.matched},
                   {"limit_u_sup", p.limit.u.sup_norm()},
                   {"limit_v_sup", p.limit.v.sup_norm()}};
        pj["segment_s"] = p.segment_s ? Json(*p.segment_s) : Json(nullptr);
        probes.push_back(std::move(pj));
    }
    j["probe_summary"] = {{"probes", probes},
                          {"all_converged", rep.probes_converged},
                          {"agree", rep.probes_agree},
                          {"distinct_limits", rep.distinct_limit_count}};
    Json oracles = Json::array();
    for (const auto& o : rep.oracles) oracles.push_back(to_json(o));
    j["oracles"] = oracles;
    j["oracles_passed"] = rep.oracles_passed();
    if (rep.falsification) {
        j["falsification"] = {{"message", rep.falsification->message},
                              {"dumped_states", rep.falsification->dump.size()}};
    } else {
        j["falsification"] = nullptr;
    }
    return j;
}

// ---------------------------------------------------------------------------
// Files
// ---------------------------------------------------------------------------

namespace detail {

inline std::string format_double(double x) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", x);
    return buf;
}

inline void write_text(const std::filesystem::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write '" + path.string() + "'");
    out << text;
    if (!out) throw Error("write failed for '" + path.string() + "'");
}

}  // namespace detail

/// `node,value` CSV with the node coordinate in the first column.
inline std::string profile_csv(const ScalarField& f) {
    std::string s = "node,value\n";
    for (std::size_t i = 0; i < f.size(); ++i) {
        s += detail::format_double(f.grid()->node(i)) + "," + detail::format_double(f[i]) + "\n";
    }
    return s;
}

inline std::string state_csv(const SystemState& st) {
    std::string s = "node,u,v\n";
    for (std::size_t i = 0; i < st.u.size(); ++i) {
        s += detail::format_double(st.u.grid()->node(i)) + "," + detail::format_double(st.u[i]) + "," +
             detail::format_double(st.v[i]) + "\n";
    }
    return s;
}

inline ScalarField read_profile(const std::filesystem::path& path, const GridPtr& grid) {
    const std::vector<double> values = detail::read_profile_csv(path);
    if (values.size() != grid->size()) {
        throw ConfigError(path.string() + ": " + std::to_string(values.size()) + " rows, grid has " +
                          std::to_string(grid->size()) + " nodes");
    }
    return {grid, Eigen::Map<const Eigen::VectorXd>(values.data(), static_cast<Eigen::Index>(values.size())),
            FieldTag::density};
}

/// Writes files into `dir` and a manifest naming them together with the config hash.
class OutputSet {
public:
    OutputSet(std::filesystem::path dir, std::string config_hash, std::uint64_t seed, std::string kind)
        : dir_(std::move(dir)), hash_(std::move(config_hash)), seed_(seed), kind_(std::move(kind)) {
        std::error_code ec;
        std::filesystem::create_directories(dir_, ec);
        if (ec) throw Error("cannot create output directory '" + dir_.string() + "': " + ec.message());
    }

    void add(const std::string& name, const std::string& text) {
        detail::write_text(dir_ / name, text);
        files_[name] = hex64(fnv1a(text));
    }

    /// Files already listed under the same config hash are kept, so several
    /// subcommands can share one directory.
    void write_manifest() const {
        Json files = Json::object();
        const auto path = dir_ / "manifest.json";
        if (std::filesystem::exists(path)) {
            try {
                std::ifstream in(path);
                const Json old = Json::parse(in);
                if (old.value("config_hash", "") == hash_ && old.contains("files")) files = old.at("files");
            } catch (const nlohmann::json::exception&) {
            }
        }
        for (const auto& [k, v] : files_) files[k] = v;
        const Json m = {{"config_hash", hash_}, {"seed", seed_}, {"tool", "ncl"},
                        {"tool_version", std::string(kVersion)}, {"kind", kind_}, {"files", files}};
        detail::write_text(dir_ / "manifest.json", canonical_text(m));
    }

    const std::filesystem::path& dir() const { return dir_; }

private:
    std::filesystem::path dir_;
    std::string hash_;
    std::uint64_t seed_;
    std::string kind_;
    std::map<std::string, std::string> files_;
};

// ---------------------------------------------------------------------------
// Operations
// ---------------------------------------------------------------------------

struct RunResult {
    ClassificationReport report;
    std::string report_json;
    int exit_code = kExitOk;
};

/// Classifies one scenario and, when `out_dir` is given, writes report.json, profile
/// CSVs and manifest.json. The report contains no timing or thread information, so
/// reruns are byte-identical.
inline RunResult run_scenario(const ScenarioConfig& config, std::optional<std::filesystem::path> out_dir = {},
                              int threads = 1) {
    const CompetitionSystemPtr system = build_system(config);
    RunResult r;
    r.report = classify_global_dynamics(*system, classify_options(config, threads));
    Json j = to_json(r.report);
    j["config_hash"] = config_hash(config);
    r.report_json = canonical_text(j);
    r.exit_code = r.report.status == ReportStatus::falsified ? kExitFalsified : kExitOk;
    if (out_dir) {
        OutputSet out(*out_dir, config_hash(config), config.seed, "run");
        out.add("config.json", canonical_text(to_json(config)));
        out.add("report.json", r.report_json);
        const auto& st = r.report.semi_trivials;
        if (st.u_d.exists) out.add("u_d.csv", profile_csv(st.u_d.profile));
        if (st.v_D.exists) out.add("v_D.csv", profile_csv(st.v_D.profile));
        if (r.report.positive_state) {
            out.add("positive_u.csv", profile_csv(r.report.positive_state->u));
            out.add("positive_v.csv", profile_csv(r.report.positive_state->v));
        }
        for (const auto& p : r.report.probes) {
            out.add("probe_" + std::to_string(p.index) + ".csv", state_csv(p.limit));
        }
        if (r.report.falsification) {
            for (std::size_t k = 0; k < r.report.falsification->dump.size(); ++k) {
                out.add("falsification_" + std::to_string(k) + ".csv", state_csv(r.report.falsification->dump[k]));
            }
        }
        out.write_manifest();
    }
    return r;
}

struct SweepRow {
    std::size_t cell = 0;
    std::vector<double> axis_values;
    std::string case_label;
    std::string status;
    double mu = std::numeric_limits<double>::quiet_NaN();
    double nu = std::numeric_limits<double>::quiet_NaN();
    bool continuum = false;
    bool probe_agreement = false;
    std::string error;
};

inline std::string csv_field(const std::string& s) {
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string q = "\"";
    for (char ch : s) q += (ch == '"') ? std::string("\"\"") : std::string(1, ch);
    return q + "\"";
}

inline std::string sweep_csv(const SweepConfig& s, const std::vector<SweepRow>& rows) {
    std::string out = "cell";
    for (const auto& a : s.axes) out += "," + a.parameter;
    out += ",case,status,mu,nu,continuum,probe_agreement,error\n";
    auto num = [](double x) { return std::isfinite(x) ? detail::format_double(x) : std::string(); };
    for (const auto& r : rows) {
        out += std::to_string(r.cell);
        for (double v : r.axis_values) out += "," + detail::format_double(v);
        out += "," + r.case_label + "," + csv_field(r.status) + "," + num(r.mu) + "," + num(r.nu) + "," +
               (r.continuum ? "true" : "false") + "," + (r.probe_agreement ? "true" : "false") + "," +
               csv_field(r.error) + "\n";
    }
    return out;
}

struct SweepResult {
    std::vector<SweepRow> rows;
    std::string csv;
};

/// Runs every cell independently on up to `threads` workers. Cell failures are
/// recorded in the row; rows are in cell-index order.
inline SweepResult run_sweep(const SweepConfig& config, std::optional<std::filesystem::path> out_dir = {},
                             std::optional<int> threads = {}) {
    const int workers = threads.value_or(config.threads);
    SweepResult r;
    r.rows.resize(config.cell_count());
    parallel_for(r.rows.size(), workers, [&](std::size_t cell) {
        SweepRow& row = r.rows[cell];
        row.cell = cell;
        const auto steps = config.cell_steps(cell);
        for (std::size_t k = 0; k < config.axes.size(); ++k) row.axis_values.push_back(config.axes[k].value(steps[k]));
        try {
            const ScenarioConfig c = cell_config(config, cell);
            const ClassificationReport rep = classify_global_dynamics(*build_system(c), classify_options(c, 1));
            row.case_label = rep.case_string();
            row.status = std::string(to_string(rep.status));
            if (rep.indices) {
                row.mu = rep.indices->mu.lambda;
                row.nu = rep.indices->nu.lambda;
            }
            row.continuum = rep.continuum.detected;
            row.probe_agreement = rep.probes_agree;
        } catch (const std::exception& e) {
            row.case_label = "error";
            row.status = "error";
            row.error = e.what();
        }
    });
    r.csv = sweep_csv(config, r.rows);
    if (out_dir) {
        OutputSet out(*out_dir, hex64(fnv1a(canonical_text(to_json(config)))), config.base.seed, "sweep");
        out.add("sweep.json", canonical_text(to_json(config)));
        out.add("phase_map.csv", r.csv);
        out.write_manifest();
    }
    return r;
}

enum class SpectrumTarget { lambda_d, lambda_D, mu, nu };

inline SpectrumTarget parse_spectrum_target(std::string_view s) {
    if (s == "lambda_d") return SpectrumTarget::lambda_d;
    if (s == "lambda_D") return SpectrumTarget::lambda_D;
    if (s == "mu") return SpectrumTarget::mu;
    if (s == "nu") return SpectrumTarget::nu;
    throw ConfigError("unknown spectrum target '" + std::string(s) + "' (lambda_d, lambda_D, mu, nu)");
}

/// Raised when mu or nu is requested but the resident semi-trivial state does not exist.
class MissingSemiTrivialError : public NonexistenceError {
public:
    using NonexistenceError::NonexistenceError;
};

inline SpectralResult spectrum_query(const ScenarioConfig& config, SpectrumTarget target,
                                     std::optional<std::filesystem::path> out_dir = {}) {
    const CompetitionSystemPtr s = build_system(config);
    SpectralResult r;
    std::string name;
    switch (target) {
        case SpectrumTarget::lambda_d:
            name = "lambda_d";
            r = spectral_bound(s->op_u(), s->m());
            break;
        case SpectrumTarget::lambda_D:
            name = "lambda_D";
            r = spectral_bound(s->op_v(), s->M());
            break;
        case SpectrumTarget::mu:
        case SpectrumTarget::nu: {
            name = target == SpectrumTarget::mu ? "mu" : "nu";
            const bool need_u = target == SpectrumTarget::mu;
            const SteadyStateResult resident = need_u ? solve_steady_monotone(s->op_u(), s->reaction_u())
                                                      : solve_steady_monotone(s->op_v(), s->reaction_v());
            if (!resident.exists) {
                throw MissingSemiTrivialError(std::string(need_u ? "u_d" : "v_D") +
                                              " does not exist (principal bound " +
                                              detail::format_double(resident.lambda_star) + "), so " + name +
                                              " is undefined");
            }
            const Eigen::ArrayXd p = resident.profile.values().array();
            if (need_u) {
                r = spectral_bound(s->op_v(), ScalarField(s->grid(), (s->M().values().array() - s->b().values().array() * p).matrix()));
            } else {
                r = spectral_bound(s->op_u(), ScalarField(s->grid(), (s->m().values().array() - s->c().values().array() * p).matrix()));
            }
            break;
        }
    }
    if (out_dir) {
        OutputSet out(*out_dir, config_hash(config), config.seed, "spectrum");
        Json j = to_json(r);
        j["target"] = name;
        out.add("spectrum_" + name + ".json", canonical_text(j));
        out.add("eigenfunction_" + name + ".csv", profile_csv(r.eigenfunction));
        out.write_manifest();
    }
    return r;
}

struct OracleRun {
    std::vector<OracleReport> reports;
    std::string json;
};

/// Theorem-oracle suite on profiles stored by a previous run in `dir`.
inline OracleRun run_oracles(const ScenarioConfig& config, const std::filesystem::path& dir,
                             std::optional<std::filesystem::path> out_dir = {}) {
    const CompetitionSystemPtr s = build_system(config);
    const GridPtr& g = s->grid();
    auto maybe = [&](const char* name) -> std::optional<ScalarField> {
        const auto p = dir / name;
        if (!std::filesystem::exists(p)) return std::nullopt;
        return read_profile(p, g);
    };
    const auto ud = maybe("u_d.csv");
    const auto vD = maybe("v_D.csv");
    const auto pu = maybe("positive_u.csv");
    const auto pv = maybe("positive_v.csv");
    if (!ud && !vD && !pu) {
        throw ConfigError("no stored profiles in '" + dir.string() + "'; run the scenario first");
    }
    OracleRun r;
    const ScalarField zero = ScalarField::constant(g, 0.0, FieldTag::density);
    if (ud && pu && s->op_u().symmetric_kernel()) {
        if (s->op_u().kind() == DispersalKind::mixed) {
            r.reports.push_back(mixed_quadratic_form(s->op_u(), *ud, *pu));
        } else {
            r.reports.push_back(symmetrization_identity(s->op_u().kernel(), s->op_u().rate() * s->op_u().alpha(), *ud, *pu));
        }
    }
    if (vD && pv && s->op_v().symmetric_kernel()) {
        if (s->op_v().kind() == DispersalKind::mixed) {
            r.reports.push_back(mixed_quadratic_form(s->op_v(), *pv, *vD));
        } else {
            r.reports.push_back(symmetrization_identity(s->op_v().kernel(), s->op_v().rate() * s->op_v().alpha(), *pv, *vD));
        }
    }
    if (ud && pu && pv) r.reports.push_back(detail::pair_audit(*s, {*ud, zero, 0.0}, {*pu, *pv, 0.0}, true));
    if (vD && pu && pv) r.reports.push_back(detail::pair_audit(*s, {*pu, *pv, 0.0}, {zero, *vD, 0.0}, false));
    if (ud && vD && s->variant() == Variant::classic && s->b()[0] * s->c()[0] <= 1.0) {
        const NeutralFunctionals nf = neutral_case_functionals(*ud, *vD, s->b()[0], s->c()[0]);
        r.reports.push_back(detail::inequality_report("neutral_chain", std::pow(s->b()[0], 3) * nf.i2 + nf.i1, nf.ikey,
                                                      nf.scale, SignClaim::nonnegative));
    }
    Json arr = Json::array();
    for (const auto& o : r.reports) arr.push_back(to_json(o));
    r.json = canonical_text({{"config_hash", config_hash(config)}, {"oracles", arr}});
    if (out_dir) {
        OutputSet out(*out_dir, config_hash(config), config.seed, "oracle");
        out.add("oracle.json", r.json);
        out.write_manifest();
    }
    return r;
}

}  // namespace ncl
