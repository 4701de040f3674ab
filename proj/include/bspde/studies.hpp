#pragma once

#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "bspde/experiments.hpp"

namespace bspde {

// Batch study configuration: defaults reproduce the standard validation
// grids of each study; a config file and command-line overrides adjust
// them.
struct StudyConfig {
    std::string study = "selftest";
    double horizon = 1.0;
    int mode_cut = 0;                 // 0: per-study default
    double dt = 0.0;                  // 0: per-study default
    std::vector<int> step_counts;     // empty: per-study default
    std::vector<int> element_counts;  // empty: per-study default
    std::vector<int> mode_cut_list;   // empty: per-study default
    int degree = 3;
    int samples = 10000;
    std::uint64_t seed = 1;
    int threads = 1;
    std::string out_dir;  // empty: environment override or "."
};

struct FitSummary {
    std::string label;
    double slope = 0.0;
    double r_squared = 0.0;
    double band_lo = 0.0;
    double band_hi = 0.0;
    bool passed = false;
};

struct StudyResult {
    int exit_code = 1;
    std::vector<FitSummary> fits;
    std::string summary_text;
    std::filesystem::path results_csv;
    std::filesystem::path summary_file;
};

namespace detail {

inline std::string trim(const std::string& s) {
    const auto first = s.find_first_not_of(" \t\r\n");
    if (first == std::string::npos) return "";
    const auto last = s.find_last_not_of(" \t\r\n");
    return s.substr(first, last - first + 1);
}

// Accepts plain decimals and power tokens "2^-12".
inline double parse_number(const std::string& token) {
    const std::string t = trim(token);
    if (const auto caret = t.find('^'); caret != std::string::npos) {
        const double base = std::stod(t.substr(0, caret));
        const double exponent = std::stod(t.substr(caret + 1));
        return std::pow(base, exponent);
    }
    return std::stod(t);
}

// Integer lists: "8,16,32" or the dyadic range "8..128".
inline std::vector<int> parse_int_list(const std::string& value) {
    std::vector<int> out;
    const std::string v = trim(value);
    if (const auto dots = v.find(".."); dots != std::string::npos) {
        const int lo = std::stoi(v.substr(0, dots));
        const int hi = std::stoi(v.substr(dots + 2));
        if (lo < 1 || hi < lo) throw std::invalid_argument("invalid dyadic range: " + value);
        for (int x = lo; x <= hi; x *= 2) out.push_back(x);
        return out;
    }
    std::stringstream ss(v);
    std::string item;
    while (std::getline(ss, item, ',')) out.push_back(std::stoi(trim(item)));
    if (out.empty()) throw std::invalid_argument("empty integer list");
    return out;
}

// dtau lists are given as step counts or as "2^-a..2^-b" widths.
inline std::vector<int> parse_step_list(const std::string& value, double horizon) {
    const std::string v = trim(value);
    if (v.find('^') != std::string::npos) {
        std::vector<int> out;
        const auto dots = v.find("..");
        if (dots != std::string::npos) {
            const double first = parse_number(v.substr(0, dots));
            const double last = parse_number(v.substr(dots + 2));
            for (double w = first; w >= last * (1.0 - 1e-12); w /= 2.0)
                out.push_back(static_cast<int>(std::round(horizon / w)));
            return out;
        }
        std::stringstream ss(v);
        std::string item;
        while (std::getline(ss, item, ','))
            out.push_back(static_cast<int>(std::round(horizon / parse_number(item))));
        return out;
    }
    return parse_int_list(v);
}

inline void atomic_write(const std::filesystem::path& target, const std::string& payload) {
    const std::filesystem::path tmp = target.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw std::runtime_error("cannot open " + tmp.string());
        out << payload;
        if (!out) throw std::runtime_error("write failed: " + tmp.string());
    }
    std::filesystem::rename(tmp, target);
}

inline std::string format_double(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

inline std::string format_short(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.6g", v);
    return buf;
}

struct CsvWriter {
    std::string header;
    std::vector<std::string> rows;

    std::string render() const {
        std::string out = header + "\n";
        for (const auto& row : rows) out += row + "\n";
        return out;
    }
};

}  // namespace detail

inline void apply_override(StudyConfig& config, const std::string& key, const std::string& value) {
    if (key == "study")
        config.study = detail::trim(value);
    else if (key == "horizon")
        config.horizon = detail::parse_number(value);
    else if (key == "modes")
        config.mode_cut = std::stoi(detail::trim(value));
    else if (key == "dt")
        config.dt = detail::parse_number(value);
    else if (key == "dtau" || key == "steps")
        config.step_counts = detail::parse_step_list(value, config.horizon);
    else if (key == "elements")
        config.element_counts = detail::parse_int_list(value);
    else if (key == "mode_cuts")
        config.mode_cut_list = detail::parse_int_list(value);
    else if (key == "degree")
        config.degree = std::stoi(detail::trim(value));
    else if (key == "samples")
        config.samples = std::stoi(detail::trim(value));
    else if (key == "seed")
        config.seed = std::stoull(detail::trim(value));
    else if (key == "threads")
        config.threads = std::stoi(detail::trim(value));
    else if (key == "out")
        config.out_dir = detail::trim(value);
    else
        throw std::invalid_argument("unknown configuration key: " + key);
}

// Plain "key = value" lines; '#' starts a comment.  The horizon is applied
// before any other key so that width lists convert to step counts
// regardless of line order.
inline StudyConfig parse_config_file(const std::filesystem::path& file) {
    std::ifstream in(file);
    if (!in) throw std::runtime_error("cannot open config file " + file.string());
    std::vector<std::pair<std::string, std::string>> entries;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        const std::string body = detail::trim(line);
        if (body.empty()) continue;
        const auto eq = body.find('=');
        if (eq == std::string::npos)
            throw std::invalid_argument(file.string() + ":" + std::to_string(line_no) +
                                        ": expected key = value");
        entries.emplace_back(detail::trim(body.substr(0, eq)), body.substr(eq + 1));
    }
    StudyConfig config;
    for (const auto& [key, value] : entries)
        if (key == "horizon") apply_override(config, key, value);
    for (const auto& [key, value] : entries)
        if (key != "horizon") apply_override(config, key, value);
    return config;
}

inline std::filesystem::path study_output_dir(const StudyConfig& config) {
    if (!config.out_dir.empty()) return config.out_dir;
    if (const char* env = std::getenv("BSPDE_OUT_DIR"); env && *env) return env;
    return ".";
}

namespace detail {

inline FitSummary band_check(const std::string& label, const RateReport& report, double lo,
                             double hi, double min_r2 = 0.98) {
    FitSummary fit;
    fit.label = label;
    fit.slope = report.slope;
    fit.r_squared = report.r_squared;
    fit.band_lo = lo;
    fit.band_hi = hi;
    fit.passed = report.slope >= lo && report.slope <= hi && report.r_squared >= min_r2;
    return fit;
}

inline void append_curve_rows(CsvWriter& csv, const StudyConfig& config, const ErrorCurve& curve,
                              const std::vector<double>& extras) {
    for (std::size_t i = 0; i < curve.points.size(); ++i) {
        const auto& [x, e] = curve.points[i];
        csv.rows.push_back(config.study + "," + to_string(curve.kind) + "," + format_double(x) +
                           "," + format_double(e) + "," + format_double(extras[i]) + "," +
                           std::to_string(config.seed));
    }
}

inline StudyResult finalize(const StudyConfig& config, CsvWriter& csv,
                            std::vector<FitSummary> fits) {
    StudyResult result;
    result.fits = std::move(fits);
    result.exit_code = 0;
    std::string summary;
    for (const auto& fit : result.fits) {
        if (!fit.passed) result.exit_code = 1;
        const bool is_rate = fit.band_lo != 0.0 || fit.band_hi != 0.0;
        if (is_rate)
            summary += fit.label + ": slope=" + format_short(fit.slope) +
                       " r_squared=" + format_short(fit.r_squared) + " band=[" +
                       format_short(fit.band_lo) + "," + format_short(fit.band_hi) + "] " +
                       (fit.passed ? "PASS" : "FAIL") + "\n";
        else
            summary += fit.label + ": " + (fit.passed ? "PASS" : "FAIL") + "\n";
    }
    summary += std::string("overall: ") + (result.exit_code == 0 ? "PASS" : "FAIL") + "\n";
    result.summary_text = summary;

    const auto dir = study_output_dir(config);
    std::filesystem::create_directories(dir);
    result.results_csv = dir / "results.csv";
    result.summary_file = dir / "summary.txt";
    atomic_write(result.results_csv, csv.render());
    atomic_write(result.summary_file, summary);
    return result;
}

inline StudyResult run_time_rate(StudyConfig config) {
    if (config.mode_cut == 0) config.mode_cut = 64;
    if (config.dt == 0.0) config.dt = std::pow(2.0, -12);
    if (config.step_counts.empty()) config.step_counts = {16, 32, 64, 128, 256, 512};
    ErrorCurve curve;
    curve.kind = ParameterKind::TimeStep;
    for (int steps : config.step_counts) {
        SchemeConfig cfg{.horizon = config.horizon, .steps = steps};
        const double e = strong_error_exact_time(config.mode_cut, config.dt, cfg, config.threads);
        curve.points.emplace_back(cfg.dtau(), std::sqrt(e));
    }
    const auto report = rate_regression(curve);
    CsvWriter csv{"study,parameter_kind,parameter_value,error,stderr_or_tail,seed", {}};
    append_curve_rows(csv, config, curve, std::vector<double>(curve.points.size(), 0.0));
    return finalize(config, csv, {band_check("time_rate", report, 0.325, 0.425)});
}

inline StudyResult run_space_rate(StudyConfig config) {
    if (config.mode_cut == 0) config.mode_cut = 32;
    if (config.dt == 0.0) config.dt = std::pow(2.0, -10);
    if (config.element_counts.empty()) config.element_counts = {8, 16, 32, 64, 128};
    const int steps = static_cast<int>(std::round(config.horizon / config.dt));
    SchemeConfig cfg{.horizon = config.horizon, .steps = steps};
    ErrorCurve curve;
    curve.kind = ParameterKind::MeshWidth;
    for (int elements : config.element_counts) {
        FemSpace space(Mesh::uniform(elements), config.degree);
        const double e = strong_error_exact_full(space, config.mode_cut, config.dt, cfg,
                                                 SpaceErrorReference::TimeDiscrete, config.threads);
        curve.points.emplace_back(space.mesh().h_max(), std::sqrt(e));
    }
    const auto report = rate_regression(curve);
    const double lo = config.degree == 3 ? 1.3 : 0.85;
    const double hi = config.degree == 3 ? 1.7 : 1.15;
    CsvWriter csv{"study,parameter_kind,parameter_value,error,stderr_or_tail,seed", {}};
    append_curve_rows(csv, config, curve, std::vector<double>(curve.points.size(), 0.0));
    return finalize(config, csv, {band_check("space_rate_p" + std::to_string(config.degree),
                                             report, lo, hi)});
}

inline StudyResult run_model_error_modes(StudyConfig config) {
    if (config.dt == 0.0) config.dt = std::pow(2.0, -14);
    std::vector<int> cuts = config.mode_cut_list.empty() ? std::vector<int>{4, 8, 16, 32, 64}
                                                         : config.mode_cut_list;
    const int k_ref = std::max(k_ref_for_tail(1e-12), 2 * cuts.back());
    ErrorCurve curve;
    curve.kind = ParameterKind::ModeCut;
    std::vector<double> tails;
    for (int cut : cuts) {
        const auto me = model_error_exact(cut, config.dt, config.horizon, k_ref);
        curve.points.emplace_back(1.0 / cut, std::sqrt(me.total()));
        tails.push_back(me.tail_bound);
    }
    const auto report = rate_regression(curve);
    CsvWriter csv{"study,parameter_kind,parameter_value,error,stderr_or_tail,seed", {}};
    append_curve_rows(csv, config, curve, tails);
    return finalize(config, csv, {band_check("model_error_modes", report, 1.35, 1.65)});
}

inline StudyResult run_model_error_dt(StudyConfig config) {
    const int k_ref = k_ref_for_tail(1e-12);
    if (config.mode_cut == 0) config.mode_cut = k_ref;
    std::vector<double> dts;
    if (config.step_counts.empty())
        for (int k = 4; k <= 9; ++k) dts.push_back(std::pow(2.0, -k));
    else
        for (int steps : config.step_counts) dts.push_back(config.horizon / steps);
    ErrorCurve curve;
    curve.kind = ParameterKind::NoiseStep;
    std::vector<double> tails;
    for (double dt : dts) {
        const auto me = model_error_exact(config.mode_cut, dt, config.horizon, config.mode_cut + 1);
        curve.points.emplace_back(dt, std::sqrt(me.total()));
        tails.push_back(me.tail_bound);
    }
    const auto report = rate_regression(curve);
    CsvWriter csv{"study,parameter_kind,parameter_value,error,stderr_or_tail,seed", {}};
    append_curve_rows(csv, config, curve, tails);
    return finalize(config, csv, {band_check("model_error_dt", report, 0.325, 0.425)});
}

inline StudyResult run_deterministic_rates(StudyConfig config) {
    CsvWriter csv{"study,parameter_kind,parameter_value,error,stderr_or_tail,seed", {}};
    std::vector<FitSummary> fits;

    // time refinement of the modified scheme, smooth data
    {
        const auto report = deterministic_time_rate(ErrorSampling::MidpointAverage,
                                                    SpectralField::unit_mode(1), config.horizon,
                                                    {256, 512, 1024, 2048, 4096});
        append_curve_rows(csv, config, report.curve,
                          std::vector<double>(report.curve.points.size(), 0.0));
        fits.push_back(band_check("midpoint_time_rate", report, 0.9, 1.1));
    }
    // mesh refinement of the modified scheme against its spectral twin
    {
        const auto report = deterministic_space_rate(ErrorSampling::MidpointAverage,
                                                     SpectralField::unit_mode(1), config.horizon,
                                                     64, config.degree, {4, 8, 16, 32});
        append_curve_rows(csv, config, report.curve,
                          std::vector<double>(report.curve.points.size(), 0.0));
        const double lo = config.degree == 3 ? 2.7 : 1.8;
        const double hi = config.degree == 3 ? 3.3 : 2.2;
        fits.push_back(band_check("midpoint_space_rate_p" + std::to_string(config.degree), report,
                                  lo, hi));
    }
    // stationary quartic solve, quadratic elements
    {
        ErrorCurve curve;
        curve.kind = ParameterKind::MeshWidth;
        const auto f = SpectralField::unit_mode(1);
        const auto exact = apply_inverse_elliptic(f, 4);
        for (int n : {8, 16, 32, 64, 128}) {
            FemSpace space(Mesh::uniform(n), 2);
            curve.points.emplace_back(1.0 / n,
                                      fem_vs_spectral_error(space, solve_Tbh(space, f), exact));
        }
        const auto report = rate_regression(curve);
        append_curve_rows(csv, config, curve, std::vector<double>(curve.points.size(), 0.0));
        fits.push_back(band_check("quartic_solve_rate_p2", report, 1.8, 2.2));
    }
    return finalize(config, csv, std::move(fits));
}

inline StudyResult run_sample_path(StudyConfig config) {
    if (config.mode_cut == 0) config.mode_cut = 16;
    if (config.dt == 0.0) config.dt = 1.0 / 64;
    const int elements = config.element_counts.empty() ? 16 : config.element_counts.front();
    const int steps = static_cast<int>(std::round(config.horizon / config.dt));
    SchemeConfig cfg{.horizon = config.horizon, .steps = steps};
    const auto path = sample_noise(config.mode_cut, steps, config.horizon, config.seed);
    const auto exact = exact_uhat(path);
    FemSpace space(Mesh::uniform(elements), config.degree);
    const auto fem = cn_fem_stochastic(space, path, cfg);

    CsvWriter csv{"study,series,t,x,value,seed", {}};
    const int x_points = 65;
    for (int m = 0; m <= steps; m += std::max(1, steps / 16)) {
        const double t = m * cfg.dtau();
        for (int q = 0; q <= x_points; ++q) {
            const double x = static_cast<double>(q) / x_points;
            csv.rows.push_back(config.study + ",uhat," + detail::format_double(t) + "," +
                               detail::format_double(x) + "," +
                               detail::format_double(exact[m].evaluate(x)) + "," +
                               std::to_string(config.seed));
            csv.rows.push_back(config.study + ",fem," + detail::format_double(t) + "," +
                               detail::format_double(x) + "," +
                               detail::format_double(space.evaluate(fem[m], x)) + "," +
                               std::to_string(config.seed));
        }
    }
    FitSummary fit;
    fit.label = "sample_path";
    fit.slope = 0.0;
    fit.r_squared = 1.0;
    fit.band_lo = fit.band_hi = 0.0;
    fit.passed = true;
    return finalize(config, csv, {fit});
}

inline StudyResult run_selftest(StudyConfig config) {
    CsvWriter csv{"study,check,status", {}};
    std::vector<FitSummary> fits;
    auto record = [&](const std::string& name, bool ok) {
        FitSummary fit;
        fit.label = name;
        fit.passed = ok;
        fit.r_squared = 1.0;
        fits.push_back(fit);
        csv.rows.push_back(config.study + "," + name + "," + (ok ? "PASS" : "FAIL"));
    };

    // Parseval on a sampled field
    {
        const auto path = sample_noise(8, 4, 1.0, config.seed);
        const auto field = exact_uhat(path).back();
        double sumsq = 0.0;
        for (int k = 1; k <= 8; ++k) sumsq += field.coeff(k) * field.coeff(k);
        const double n0 = hdot_norm(field, 0.0);
        record("parseval", std::abs(n0 * n0 - sumsq) <= 1e-14 * (sumsq + 1.0));
    }
    // stochastic integral identity on random pairs
    {
        bool ok = true;
        for (int trial = 0; trial < 20; ++trial) {
            const auto path = sample_noise(6, 6, 1.0, derive_seed(config.seed, trial));
            Matrix g(6, 6);
            std::uint64_t s = derive_seed(config.seed ^ 0x5851f42d4c957f2dULL, trial);
            for (auto& v : g.data())
                v = static_cast<double>(splitmix64(s) >> 11) * 0x1.0p-53 - 0.5;
            const auto [lhs, rhs] = ito_vs_inner_identity(path, g);
            ok = ok && std::abs(lhs - rhs) <= 1e-12 * (std::abs(lhs) + 1.0);
        }
        record("ito_identity", ok);
    }
    // coupling algebra
    {
        const auto fine = sample_noise(4, 12, 1.0, config.seed + 1);
        const auto coarse = coarsen_time(fine, 3);
        bool ok = true;
        for (int i = 0; i < 4; ++i) {
            double a = 0.0, b = 0.0;
            for (int n = 0; n < 12; ++n) a += fine.increments(i, n);
            for (int n = 0; n < 4; ++n) b += coarse.increments(i, n);
            ok = ok && std::abs(a - b) <= 1e-14 * (std::abs(a) + 1.0);
        }
        record("coupling", ok);
    }
    // energy identity of the deterministic FEM scheme
    {
        FemSpace space(Mesh::uniform(12), 3);
        SchemeConfig cfg{.horizon = 0.05, .steps = 12};
        const auto fields = cn_fem_deterministic(space, SpectralField({1.0, -0.4, 0.2}), cfg);
        const auto mass = assemble_mass(space);
        const auto stiff = assemble_biharmonic(space);
        bool ok = true;
        for (int m = 2; m <= cfg.steps; ++m) {
            FemVector diff(space.dim());
            for (int j = 0; j < space.dim(); ++j) diff[j] = fields[m][j] - fields[m - 1][j];
            const double kinetic = mass.quadratic_form(diff);
            const double curv_new = stiff.quadratic_form(fields[m]);
            const double curv_old = stiff.quadratic_form(fields[m - 1]);
            const double scale = kinetic + 0.5 * cfg.dtau() * (curv_new + curv_old) + 1e-300;
            ok = ok && std::abs(kinetic + 0.5 * cfg.dtau() * (curv_new - curv_old)) <= 1e-10 * scale;
        }
        record("energy_identity", ok);
    }
    // reproducibility
    {
        const auto a = sample_noise(5, 7, 1.0, config.seed + 2);
        const auto b = sample_noise(5, 7, 1.0, config.seed + 2);
        record("determinism", a.increments.data() == b.increments.data());
    }
    return finalize(config, csv, std::move(fits));
}

}  // namespace detail

// Runs the named study, writes results.csv and summary.txt into the
// output directory (atomically, write-then-rename), and reports an exit
// status of 0 exactly when every fitted slope lies in its band.
inline StudyResult run_study(const StudyConfig& config) {
    if (config.threads < 1 || config.samples < 2 || !(config.horizon > 0.0))
        throw std::invalid_argument("run_study: invalid configuration");
    if (config.degree != 2 && config.degree != 3)
        throw std::invalid_argument("run_study: degree must be 2 or 3");
    if (config.study == "time-rate") return detail::run_time_rate(config);
    if (config.study == "space-rate") return detail::run_space_rate(config);
    if (config.study == "model-error-modes") return detail::run_model_error_modes(config);
    if (config.study == "model-error-dt") return detail::run_model_error_dt(config);
    if (config.study == "deterministic-rates") return detail::run_deterministic_rates(config);
    if (config.study == "sample-path") return detail::run_sample_path(config);
    if (config.study == "selftest") return detail::run_selftest(config);
    throw std::invalid_argument("run_study: unknown study " + config.study);
}

}  // namespace bspde
