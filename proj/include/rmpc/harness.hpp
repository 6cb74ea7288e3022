#pragma once

#include <atomic>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <ostream>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "rmpc/certify.hpp"
#include "rmpc/errors.hpp"
#include "rmpc/hydraulics.hpp"
#include "rmpc/optimizer.hpp"
#include "rmpc/problem.hpp"
#include "rmpc/sampling.hpp"

namespace rmpc {

using nlohmann::json;

// ---------------------------------------------------------------------------
// Experiment configuration
// ---------------------------------------------------------------------------

/// Trapezoidal inflow pulse riding on a constant base flow. Step indices are
/// 1-based time steps; the pulse ramps up over (ramp_up_start, ramp_up_end],
/// holds, and ramps back down over (ramp_down_start, ramp_down_end].
struct InflowPulse {
    double base = 100.0;
    double peak = 260.0;
    int ramp_up_start = 8;
    int ramp_up_end = 16;
    int ramp_down_start = 52;
    int ramp_down_end = 60;

    Vector series(int horizon) const {
        Vector q(horizon, base);
        for (int j = 1; j <= horizon; ++j) {
            double v = base;
            if (j <= ramp_up_start)
                v = base;
            else if (j <= ramp_up_end)
                v = base + (peak - base) * (j - ramp_up_start) / double(ramp_up_end - ramp_up_start);
            else if (j <= ramp_down_start)
                v = peak;
            else if (j <= ramp_down_end)
                v = peak - (peak - base) * (j - ramp_down_start) / double(ramp_down_end - ramp_down_start);
            q[j - 1] = v;
        }
        return q;
    }
};

struct MultistartConfig {
    int starts = 100;
    unsigned long seed = 20240601UL;
    int threads = 0; // 0 = hardware concurrency
};

struct ExperimentConfig {
    ChannelModel channel = ChannelModel::reference();
    InflowPulse pulse;
    Vector inflow_values;          // non-empty overrides the pulse
    double release_lower = 100.0;  // m^3/s
    double release_upper = 200.0;  // m^3/s
    double objective_exponent = 2.0;
    OptimizerConfig optimizer;
    MultistartConfig multistart;
    std::string output_dir = "out";

    InflowSeries inflow() const {
        if (!inflow_values.empty()) {
            if (static_cast<int>(inflow_values.size()) != channel.horizon)
                throw ConfigurationError("config: explicit inflow length must equal the horizon");
            return InflowSeries{inflow_values};
        }
        return InflowSeries{pulse.series(channel.horizon)};
    }

    HydraulicProblem problem() const {
        return assemble_rmpc(channel, inflow(), release_lower, release_upper, objective_exponent);
    }

    /// The bundled reference experiment configuration (also the defaults for
    /// every field a config file omits).
    static ExperimentConfig paper_defaults() { return ExperimentConfig{}; }
};

namespace cfgdetail {

template <class T>
void read(const json& j, const char* key, T& out) {
    if (j.contains(key)) out = j.at(key).get<T>();
}

} // namespace cfgdetail

inline ExperimentConfig config_from_json(const json& j) {
    ExperimentConfig cfg = ExperimentConfig::paper_defaults();
    if (j.contains("defaults")) {
        const std::string preset = j.at("defaults").get<std::string>();
        if (preset != "paper")
            throw ConfigurationError("config: unknown defaults preset '" + preset + "'");
    }
    if (j.contains("channel")) {
        const json& c = j.at("channel");
        ChannelModel& m = cfg.channel;
        cfgdetail::read(c, "n_nodes", m.n_nodes);
        cfgdetail::read(c, "width", m.width);
        cfgdetail::read(c, "length", m.length);
        cfgdetail::read(c, "dt", m.dt);
        cfgdetail::read(c, "horizon", m.horizon);
        cfgdetail::read(c, "gravity", m.gravity);
        cfgdetail::read(c, "target_level", m.target_level);
        cfgdetail::read(c, "initial_discharge", m.initial_discharge);
        cfgdetail::read(c, "initial_downstream_level", m.initial_downstream_level);
        if (c.contains("bottom_levels")) {
            m.bottom_levels = c.at("bottom_levels").get<Vector>();
        } else {
            double lo = -4.90, hi = -5.10;
            cfgdetail::read(c, "bottom_start", lo);
            cfgdetail::read(c, "bottom_end", hi);
            m.bottom_levels.resize(m.n_nodes);
            for (int i = 0; i < m.n_nodes; ++i)
                m.bottom_levels[i] = lo + (hi - lo) * i / std::max(1, m.n_nodes - 1);
        }
        if (c.contains("chezy")) {
            if (c.at("chezy").is_array())
                m.chezy = c.at("chezy").get<Vector>();
            else
                m.chezy.assign(m.n_nodes, c.at("chezy").get<double>());
        } else if (static_cast<int>(m.chezy.size()) != m.n_nodes) {
            m.chezy.assign(m.n_nodes, 40.0);
        } else if (static_cast<int>(m.bottom_levels.size()) != m.n_nodes) {
            // nothing; validated below
        }
        if (static_cast<int>(m.chezy.size()) != m.n_nodes) m.chezy.assign(m.n_nodes, m.chezy.front());
        m.validate();
    }
    if (j.contains("inflow")) {
        const json& f = j.at("inflow");
        if (f.contains("values")) {
            cfg.inflow_values = f.at("values").get<Vector>();
        } else {
            cfgdetail::read(f, "base", cfg.pulse.base);
            cfgdetail::read(f, "peak", cfg.pulse.peak);
            cfgdetail::read(f, "ramp_up_start", cfg.pulse.ramp_up_start);
            cfgdetail::read(f, "ramp_up_end", cfg.pulse.ramp_up_end);
            cfgdetail::read(f, "ramp_down_start", cfg.pulse.ramp_down_start);
            cfgdetail::read(f, "ramp_down_end", cfg.pulse.ramp_down_end);
        }
    }
    if (j.contains("bounds")) {
        cfgdetail::read(j.at("bounds"), "lower", cfg.release_lower);
        cfgdetail::read(j.at("bounds"), "upper", cfg.release_upper);
    }
    cfgdetail::read(j, "objective_exponent", cfg.objective_exponent);
    if (j.contains("optimizer")) {
        const json& o = j.at("optimizer");
        cfgdetail::read(o, "grad_tol", cfg.optimizer.grad_tol);
        cfgdetail::read(o, "max_iterations", cfg.optimizer.max_iterations);
        cfgdetail::read(o, "memory", cfg.optimizer.memory);
        cfgdetail::read(o, "armijo_constant", cfg.optimizer.armijo_constant);
        cfgdetail::read(o, "backtrack_factor", cfg.optimizer.backtrack_factor);
        cfgdetail::read(o, "active_tol", cfg.optimizer.active_tol);
        cfgdetail::read(o, "polish", cfg.optimizer.polish);
        cfgdetail::read(o, "polish_max_iterations", cfg.optimizer.polish_max_iterations);
        cfgdetail::read(o, "polish_tol", cfg.optimizer.polish_tol);
    }
    if (j.contains("multistart")) {
        const json& ms = j.at("multistart");
        cfgdetail::read(ms, "starts", cfg.multistart.starts);
        cfgdetail::read(ms, "seed", cfg.multistart.seed);
        cfgdetail::read(ms, "threads", cfg.multistart.threads);
    }
    cfgdetail::read(j, "output_dir", cfg.output_dir);
    return cfg;
}

inline ExperimentConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open config file: " + path);
    json j;
    try {
        in >> j;
    } catch (const std::exception& e) {
        throw ConfigurationError("config parse error in " + path + ": " + e.what());
    }
    return config_from_json(j);
}

inline json config_to_json(const ExperimentConfig& cfg) {
    json c{{"n_nodes", cfg.channel.n_nodes},
           {"width", cfg.channel.width},
           {"length", cfg.channel.length},
           {"dt", cfg.channel.dt},
           {"horizon", cfg.channel.horizon},
           {"gravity", cfg.channel.gravity},
           {"target_level", cfg.channel.target_level},
           {"initial_discharge", cfg.channel.initial_discharge},
           {"initial_downstream_level", cfg.channel.initial_downstream_level},
           {"bottom_levels", cfg.channel.bottom_levels},
           {"chezy", cfg.channel.chezy}};
    json inflow;
    if (!cfg.inflow_values.empty())
        inflow = json{{"values", cfg.inflow_values}};
    else
        inflow = json{{"base", cfg.pulse.base},
                      {"peak", cfg.pulse.peak},
                      {"ramp_up_start", cfg.pulse.ramp_up_start},
                      {"ramp_up_end", cfg.pulse.ramp_up_end},
                      {"ramp_down_start", cfg.pulse.ramp_down_start},
                      {"ramp_down_end", cfg.pulse.ramp_down_end}};
    // output_dir is deliberately omitted: identical experiments must produce
    // byte-identical artifacts regardless of where they are written
    return json{{"channel", c},
                {"inflow", inflow},
                {"bounds", json{{"lower", cfg.release_lower}, {"upper", cfg.release_upper}}},
                {"objective_exponent", cfg.objective_exponent},
                {"optimizer", json{{"grad_tol", cfg.optimizer.grad_tol},
                                   {"max_iterations", cfg.optimizer.max_iterations},
                                   {"memory", cfg.optimizer.memory},
                                   {"armijo_constant", cfg.optimizer.armijo_constant},
                                   {"backtrack_factor", cfg.optimizer.backtrack_factor},
                                   {"active_tol", cfg.optimizer.active_tol},
                                   {"polish", cfg.optimizer.polish},
                                   {"polish_max_iterations", cfg.optimizer.polish_max_iterations},
                                   {"polish_tol", cfg.optimizer.polish_tol}}},
                {"multistart", json{{"starts", cfg.multistart.starts},
                                    {"seed", cfg.multistart.seed},
                                    {"threads", cfg.multistart.threads}}},
                {"output_dir", cfg.output_dir}};
}

// ---------------------------------------------------------------------------
// Multi-start validation
// ---------------------------------------------------------------------------

struct StartRecord {
    int index = 0;
    bool converged = false;
    double objective = 0.0;
    double kkt_residual = 0.0;
    int iterations = 0;
    std::string error; // non-empty when the start failed outright
};

struct MultistartSummary {
    int n_starts = 0;
    int converged = 0;
    int failed = 0;                 // starts that raised an error
    Vector coordinate_std;          // over converged solutions
    double max_coordinate_std = 0.0;
    double objective_min = 0.0;
    double objective_max = 0.0;
    double objective_spread = 0.0;
    Vector u_best;
    double f_best = 0.0;
    std::vector<StartRecord> starts;
};

/// Runs minimize() from n Latin hypercube starts and aggregates the solution
/// dispersion. Starts are independent; they may execute on several threads,
/// and results are merged in start order so the summary is deterministic.
inline MultistartSummary multistart(const RmpcProblem& p, int n, unsigned long seed,
                                    const OptimizerConfig& cfg = {}, int threads = 0) {
    if (n < 2) throw InvalidArgumentError("multistart: need at least 2 starts");
    const auto starts = latin_hypercube(n, p.control_box(), seed);
    std::vector<OptimizationResult> results(n);
    std::vector<std::string> errors(n);

    int nthreads = threads > 0 ? threads : static_cast<int>(std::thread::hardware_concurrency());
    nthreads = std::max(1, std::min(nthreads, n));
    std::atomic<int> next{0};
    auto worker = [&]() {
        for (;;) {
            const int i = next.fetch_add(1);
            if (i >= n) return;
            try {
                results[i] = minimize(p, starts[i], cfg);
            } catch (const Error& e) {
                errors[i] = e.what();
            }
        }
    };
    if (nthreads == 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        pool.reserve(nthreads);
        for (int t = 0; t < nthreads; ++t) pool.emplace_back(worker);
        for (auto& t : pool) t.join();
    }

    MultistartSummary s;
    s.n_starts = n;
    const int dim = p.control_dim();
    Vector mean(dim, 0.0);
    std::vector<const OptimizationResult*> ok;
    for (int i = 0; i < n; ++i) {
        StartRecord rec;
        rec.index = i;
        if (!errors[i].empty()) {
            rec.error = errors[i];
            ++s.failed;
        } else {
            const auto& r = results[i];
            rec.converged = r.converged;
            rec.objective = r.f_star;
            rec.kkt_residual = r.kkt_residual;
            rec.iterations = r.iterations;
            if (r.converged) {
                ok.push_back(&r);
                for (int d = 0; d < dim; ++d) mean[d] += r.u_star[d];
            }
        }
        s.starts.push_back(std::move(rec));
    }
    s.converged = static_cast<int>(ok.size());
    s.coordinate_std.assign(dim, 0.0);
    if (!ok.empty()) {
        for (double& v : mean) v /= static_cast<double>(ok.size());
        for (const auto* r : ok)
            for (int d = 0; d < dim; ++d) {
                const double e = r->u_star[d] - mean[d];
                s.coordinate_std[d] += e * e;
            }
        s.objective_min = std::numeric_limits<double>::infinity();
        s.objective_max = -std::numeric_limits<double>::infinity();
        const OptimizationResult* best = nullptr;
        for (const auto* r : ok) {
            s.objective_min = std::min(s.objective_min, r->f_star);
            s.objective_max = std::max(s.objective_max, r->f_star);
            if (!best || r->f_star < best->f_star) best = r;
        }
        for (int d = 0; d < dim; ++d) {
            s.coordinate_std[d] = std::sqrt(s.coordinate_std[d] / static_cast<double>(ok.size()));
            s.max_coordinate_std = std::max(s.max_coordinate_std, s.coordinate_std[d]);
        }
        s.objective_spread = s.objective_max - s.objective_min;
        s.u_best = best->u_star;
        s.f_best = best->f_star;
    }
    return s;
}

// ---------------------------------------------------------------------------
// Artifacts
// ---------------------------------------------------------------------------

namespace csvdetail {

inline std::string format12(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.12g", v);
    return buf;
}

} // namespace csvdetail

/// Writes a trajectory as CSV: one row per time level (the initial state
/// included), boundary discharges first, then levels, then interior
/// discharges. Values carry 12 significant digits.
inline void emit_csv(const HydraulicTrajectory& traj, const std::string& path, double dt) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open for writing: " + path);
    const int nn = static_cast<int>(traj.states.front().H.size());
    out << "step,time_s";
    out << ",Q_in,Q_out";
    for (int i = 1; i <= nn; ++i) out << ",H_" << i;
    for (int k = 1; k <= nn - 1; ++k) out << ",Q_" << k;
    out << "\n";
    for (std::size_t t = 0; t < traj.states.size(); ++t) {
        const HydraulicState& s = traj.states[t];
        out << t << "," << csvdetail::format12(static_cast<double>(t) * dt);
        out << "," << csvdetail::format12(s.Q.front());
        out << "," << csvdetail::format12(s.Q.back());
        for (int i = 0; i < nn; ++i) out << "," << csvdetail::format12(s.H[i]);
        for (int k = 1; k <= nn - 1; ++k) out << "," << csvdetail::format12(s.Q[k]);
        out << "\n";
    }
    if (!out) throw IoError("write failed: " + path);
}

// ---------------------------------------------------------------------------
// JSON serialization of reports
// ---------------------------------------------------------------------------

inline json to_json(const std::vector<ActiveBound>& active) {
    json a = json::array();
    for (const auto& b : active)
        a.push_back(json{{"index", b.index}, {"side", b.side == BoundSide::Lower ? "lower" : "upper"}});
    return a;
}

inline json to_json(const ConditionReport& report) {
    json out;
    for (int i = 0; i < 8; ++i) {
        const ConditionEntry& e = report.conditions[i];
        json entry{{"status", to_string(e.status)},
                   {"diagnostic", e.diagnostic},
                   {"samples_used", e.samples_used}};
        if (e.witness_u) entry["witness_u"] = *e.witness_u;
        if (e.witness_x) entry["witness_x"] = *e.witness_x;
        out["condition_" + std::to_string(i + 1)] = std::move(entry);
    }
    out["lhs_samples"] = report.lhs_samples;
    out["seed"] = report.seed;
    out["all_passed"] = report.all_passed();
    return out;
}

inline json to_json(const KktCertificate& cert) {
    json normals = json::array();
    for (int r = 0; r < cert.cone_normals.rows(); ++r) {
        json row = json::array();
        for (int c = 0; c < cert.cone_normals.cols(); ++c) row.push_back(cert.cone_normals(r, c));
        normals.push_back(std::move(row));
    }
    return json{{"classification", cert.classification == KktClass::Interior ? "interior" : "boundary"},
                {"active_set", to_json(cert.active_set)},
                {"active_set_strict", to_json(cert.active_set_strict)},
                {"cone_normals", normals},
                {"guarantee",
                 json{{"text", cert.guarantee},
                      {"scope", cert.classification == KktClass::Interior ? "U" : "V(u_star)"},
                      {"f_star", cert.f_star},
                      {"kkt_residual", cert.kkt_residual},
                      {"u_star", cert.u_star},
                      {"y_star", cert.y_star}}}};
}

inline json to_json(const OptimizationResult& r) {
    return json{{"u_star", r.u_star},
                {"f_star", r.f_star},
                {"iterations", r.iterations},
                {"kkt_residual", r.kkt_residual},
                {"converged", r.converged},
                {"message", r.message},
                {"active_set", to_json(r.active_set)},
                {"multipliers_lower", r.multipliers_lower},
                {"multipliers_upper", r.multipliers_upper}};
}

inline json to_json(const MultistartSummary& s) {
    json starts = json::array();
    for (const auto& rec : s.starts) {
        json r{{"index", rec.index},
               {"converged", rec.converged},
               {"objective", rec.objective},
               {"kkt_residual", rec.kkt_residual},
               {"iterations", rec.iterations}};
        if (!rec.error.empty()) r["error"] = rec.error;
        starts.push_back(std::move(r));
    }
    return json{{"n_starts", s.n_starts},
                {"converged", s.converged},
                {"failed", s.failed},
                {"coordinate_std", s.coordinate_std},
                {"max_coordinate_std", s.max_coordinate_std},
                {"objective_min", s.objective_min},
                {"objective_max", s.objective_max},
                {"objective_spread", s.objective_spread},
                {"u_best", s.u_best},
                {"f_best", s.f_best},
                {"starts", starts}};
}

inline void write_json(const json& j, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open for writing: " + path);
    out << j.dump(2) << "\n";
    if (!out) throw IoError("write failed: " + path);
}

// ---------------------------------------------------------------------------
// End-to-end experiment
// ---------------------------------------------------------------------------

struct ReproduceOutcome {
    int exit_code = 0;
    std::vector<std::string> unmet; // human-readable unmet thresholds
    OptimizationResult result;
    KktCertificate certificate;
    MultistartSummary dispersion;
    GlobalOptimalityCheck optimality;
    double f_lower_hold = 0.0;  // constant release at the lower bound
    double f_mid_hold = 0.0;
    double f_upper_hold = 0.0;
    double gate_excursion_optimized = 0.0;
    double gate_excursion_lower_hold = 0.0;
    double optimize_seconds = 0.0;
    double total_seconds = 0.0;
};

/// Runs the bundled reference experiment end to end: steady start, baseline
/// releases, optimization, certification, Theorem-style sampling check, and
/// the multi-start dispersion study. Artifacts (trajectory.csv,
/// certificate.json, summary.json) land in cfg.output_dir. Exit code 0 when
/// every acceptance threshold is met, 2 otherwise.
inline ReproduceOutcome run_reproduce_paper(const ExperimentConfig& cfg, std::ostream& log) {
    namespace fs = std::filesystem;
    const auto t0 = std::chrono::steady_clock::now();
    ReproduceOutcome out;

    const HydraulicProblem problem = cfg.problem();
    const int horizon = cfg.channel.horizon;
    const InflowSeries inflow = cfg.inflow();
    log << "channel: " << cfg.channel.n_nodes << " level nodes, horizon " << horizon << " x " << cfg.channel.dt
        << " s, release bounds [" << cfg.release_lower << ", " << cfg.release_upper << "] m^3/s\n";

    auto hold = [&](double q) {
        return tracking_objective(simulate(cfg.channel, problem.initial_state(), inflow, Vector(horizon, q)),
                                  cfg.channel.target_level, cfg.objective_exponent);
    };
    out.f_lower_hold = hold(cfg.release_lower);
    out.f_mid_hold = hold(0.5 * (cfg.release_lower + cfg.release_upper));
    out.f_upper_hold = hold(cfg.release_upper);
    log << "constant-release objectives: lower " << out.f_lower_hold << ", mid " << out.f_mid_hold
        << ", upper " << out.f_upper_hold << "\n";

    const auto t1 = std::chrono::steady_clock::now();
    out.result = minimize(problem, Vector(horizon, 0.0), cfg.optimizer); // projected onto the box
    const auto t2 = std::chrono::steady_clock::now();
    out.optimize_seconds = std::chrono::duration<double>(t2 - t1).count();
    log << "optimized objective " << out.result.f_star << " (KKT residual " << out.result.kkt_residual
        << ", " << out.result.iterations << " iterations, " << out.result.active_set.size()
        << " active bounds, " << out.optimize_seconds << " s)\n";

    out.certificate = classify_kkt(problem, out.result, 1e-6);
    log << "certificate: " << (out.certificate.classification == KktClass::Interior ? "interior" : "boundary")
        << ", guarantee scope " << (out.certificate.classification == KktClass::Interior ? "U" : "V(u_star)")
        << "\n";

    out.optimality = check_global_on_V(problem, out.certificate, 500, cfg.multistart.seed + 1, 1e-8);
    log << "optimality sampling: " << out.optimality.members << "/" << out.optimality.sampled
        << " samples in the guarantee region, " << out.optimality.violations << " violations\n";

    out.dispersion = multistart(problem, cfg.multistart.starts, cfg.multistart.seed, cfg.optimizer,
                                cfg.multistart.threads);
    log << "multistart: " << out.dispersion.converged << "/" << out.dispersion.n_starts
        << " converged, max coordinate std " << out.dispersion.max_coordinate_std << ", objective spread "
        << out.dispersion.objective_spread << "\n";

    const HydraulicTrajectory opt_traj = simulate(cfg.channel, problem.initial_state(), inflow, out.result.u_star);
    const HydraulicTrajectory low_traj = simulate(cfg.channel, problem.initial_state(), inflow,
                                                  Vector(horizon, cfg.release_lower));
    auto gate_excursion = [&](const HydraulicTrajectory& tr) {
        double m = 0.0;
        for (std::size_t t = 1; t < tr.states.size(); ++t)
            m = std::max(m, std::abs(tr.states[t].H.back() - cfg.channel.target_level));
        return m;
    };
    out.gate_excursion_optimized = gate_excursion(opt_traj);
    out.gate_excursion_lower_hold = gate_excursion(low_traj);

    fs::create_directories(cfg.output_dir);
    emit_csv(opt_traj, cfg.output_dir + "/trajectory.csv", cfg.channel.dt);
    write_json(to_json(out.certificate), cfg.output_dir + "/certificate.json");

    const auto t3 = std::chrono::steady_clock::now();
    out.total_seconds = std::chrono::duration<double>(t3 - t0).count();

    auto require = [&](bool ok, const std::string& what) {
        if (!ok) out.unmet.push_back(what);
    };
    require(out.result.kkt_residual <= 1e-6, "KKT residual <= 1e-6");
    require(out.optimize_seconds <= 60.0, "single optimization within 60 s");
    require(out.certificate.classification == KktClass::Boundary && !out.certificate.active_set.empty(),
            "boundary certificate with a nonempty active set");
    require(out.result.f_star < out.f_lower_hold && out.result.f_star < out.f_mid_hold &&
                out.result.f_star < out.f_upper_hold,
            "optimized objective beats all constant-release baselines");
    require(out.gate_excursion_optimized < out.gate_excursion_lower_hold,
            "optimized gate-level excursion smaller than the hold-at-lower-bound baseline");
    require(out.dispersion.max_coordinate_std <= 1e-6, "multistart coordinate std <= 1e-6");
    require(out.dispersion.objective_spread <= 1e-8, "multistart objective spread <= 1e-8");
    require(out.optimality.violations == 0, "no optimality violations inside the guarantee region");

    json summary{{"config", config_to_json(cfg)},
                 {"objectives", json{{"optimized", out.result.f_star},
                                     {"hold_lower", out.f_lower_hold},
                                     {"hold_mid", out.f_mid_hold},
                                     {"hold_upper", out.f_upper_hold}}},
                 {"gate_excursion", json{{"optimized", out.gate_excursion_optimized},
                                         {"hold_lower", out.gate_excursion_lower_hold}}},
                 {"optimization", to_json(out.result)},
                 {"certificate", to_json(out.certificate)},
                 {"optimality_sampling", json{{"sampled", out.optimality.sampled},
                                              {"members", out.optimality.members},
                                              {"violations", out.optimality.violations},
                                              {"worst_gap", out.optimality.worst_gap}}},
                 {"multistart", to_json(out.dispersion)},
                 {"thresholds_unmet", out.unmet}};
    write_json(summary, cfg.output_dir + "/summary.json");

    out.exit_code = out.unmet.empty() ? 0 : 2;
    for (const auto& u : out.unmet) log << "threshold unmet: " << u << "\n";
    log << "artifacts written to " << cfg.output_dir << " (total " << out.total_seconds << " s)\n";
    return out;
}

} // namespace rmpc
