#pragma once

#include <cmath>
#include <utility>

#include "rmpc/errors.hpp"
#include "rmpc/linalg.hpp"
#include "rmpc/problem.hpp"

namespace rmpc {

/// Single rectangular river reach on a staggered grid: water levels at cell
/// centres, discharges at cell faces. Face 0 carries the upstream inflow
/// boundary condition, face n_nodes the downstream release (the control).
struct ChannelModel {
    int n_nodes = 10;
    double width = 50.0;              // m
    Vector bottom_levels;             // m, one per H node
    Vector chezy;                     // m^0.5/s, one per H node
    double length = 10000.0;          // m
    double dt = 600.0;                // s
    int horizon = 72;                 // number of time steps
    double gravity = 9.81;            // m/s^2
    double target_level = 0.0;        // m, tracking target at the gate node
    double initial_discharge = 100.0; // m^3/s, uniform steady start
    double initial_downstream_level = -0.222; // m, pins the steady profile

    double dx() const { return length / n_nodes; }

    void validate() const {
        if (n_nodes < 2) throw ConfigurationError("channel: need at least 2 level nodes");
        if (width <= 0 || length <= 0 || dt <= 0 || gravity <= 0)
            throw ConfigurationError("channel: width, length, dt, gravity must be positive");
        if (horizon < 0) throw ConfigurationError("channel: horizon must be non-negative");
        if (static_cast<int>(bottom_levels.size()) != n_nodes)
            throw ConfigurationError("channel: bottom_levels size must equal n_nodes");
        if (static_cast<int>(chezy.size()) != n_nodes)
            throw ConfigurationError("channel: chezy size must equal n_nodes");
        for (double c : chezy)
            if (c <= 0) throw ConfigurationError("channel: Chezy coefficients must be positive");
        if (initial_discharge <= 0)
            throw ConfigurationError("channel: initial discharge must be positive");
    }

    /// The reference single-reach configuration: 10 nodes over 10 km, bed
    /// sloping linearly from -4.90 m to -5.10 m, Chezy 40, 600 s steps over a
    /// 12 h horizon, steady start at 100 m^3/s.
    static ChannelModel reference() {
        ChannelModel m;
        m.bottom_levels.resize(m.n_nodes);
        for (int i = 0; i < m.n_nodes; ++i)
            m.bottom_levels[i] = -4.90 + (-5.10 - -4.90) * i / (m.n_nodes - 1);
        m.chezy.assign(m.n_nodes, 40.0);
        return m;
    }
};

/// Levels at the n_nodes cell centres and discharges at the n_nodes+1 faces.
/// Q.front() and Q.back() hold the boundary values at the state's own time
/// level; the interior faces are the unknowns of the time step.
struct HydraulicState {
    Vector H;
    Vector Q;
};

struct InflowSeries {
    Vector values; // m^3/s per time step, length = horizon

    void validate() const {
        for (double v : values)
            if (!(v > 0)) throw ConfigurationError("inflow series: values must be positive");
    }
};

struct HydraulicTrajectory {
    std::vector<HydraulicState> states; // horizon + 1 entries, states[0] = initial
    Vector inflow;                      // boundary series, length horizon
    Vector control;                     // boundary series, length horizon
};

inline double cross_section_area(double H, double Hb, double width) {
    const double depth = H - Hb;
    if (!(depth > 0.0))
        throw DryBedError("cross section: water level " + std::to_string(H) + " at or below bed " +
                          std::to_string(Hb));
    return width * depth;
}

inline double wetted_perimeter(double H, double Hb, double width) { return width + 2.0 * (H - Hb); }

inline double hydraulic_radius(double H, double Hb, double width) {
    return cross_section_area(H, Hb, width) / wetted_perimeter(H, Hb, width);
}

namespace hydetail {

/// Face-averaged geometry and flux coefficients at one time level.
/// Faces 0..n_nodes-1 are used by the momentum stencil (face 0 borrows the
/// first cell's geometry); face n_nodes never enters a momentum equation.
struct FaceCoeffs {
    Vector area, radius, perimeter, chezy, qflux;
};

inline double face_level(const Vector& H, int k) { return k == 0 ? H[0] : 0.5 * (H[k - 1] + H[k]); }

inline double face_bottom(const ChannelModel& m, int k) {
    return k == 0 ? m.bottom_levels[0] : 0.5 * (m.bottom_levels[k - 1] + m.bottom_levels[k]);
}

inline double face_chezy(const ChannelModel& m, int k) {
    return k == 0 ? m.chezy[0] : 0.5 * (m.chezy[k - 1] + m.chezy[k]);
}

/// dH_face/dH_cell: 1 for the single-cell face 0, 1/2 for interior faces.
inline double face_level_weight(int k) { return k == 0 ? 1.0 : 0.5; }

inline FaceCoeffs face_coeffs(const ChannelModel& m, const Vector& H, const Vector& Q) {
    const int nn = m.n_nodes;
    FaceCoeffs f;
    f.area.resize(nn);
    f.radius.resize(nn);
    f.perimeter.resize(nn);
    f.chezy.resize(nn);
    f.qflux.resize(nn);
    for (int k = 0; k < nn; ++k) {
        const double hf = face_level(H, k);
        const double hb = face_bottom(m, k);
        f.area[k] = cross_section_area(hf, hb, m.width);
        f.perimeter[k] = wetted_perimeter(hf, hb, m.width);
        f.radius[k] = f.area[k] / f.perimeter[k];
        f.chezy[k] = face_chezy(m, k);
        f.qflux[k] = Q[k] * Q[k] / f.area[k];
    }
    return f;
}

/// Residuals of one time step, given the previous state (H, Q with boundary
/// values at its own time) and the candidate next state. Continuity rows are
/// in metres, momentum rows in m^3/s. Layout: H cell c at offset 2c, Q face k
/// at offset 2k-1; continuity for cell c at row 2c, momentum for face k at
/// row 2k-1.
inline void step_residual(const ChannelModel& m, const FaceCoeffs& f, const Vector& Hp, const Vector& Qp,
                          const Vector& Hc, const Vector& Qc, double* out) {
    const int nn = m.n_nodes;
    const double dx = m.dx();
    const double co = m.dt / (m.width * dx);
    const double g = m.gravity;
    for (int c = 0; c < nn; ++c)
        out[2 * c] = (Hc[c] - Hp[c]) + co * (Qc[c + 1] - Qc[c]);
    for (int k = 1; k < nn; ++k) {
        const double adv = (f.qflux[k] - f.qflux[k - 1]) / dx;
        const double fric = g * Qc[k] * Qp[k] / (f.area[k] * f.radius[k] * f.chezy[k] * f.chezy[k]);
        out[2 * k - 1] = (Qc[k] - Qp[k]) + m.dt * (adv + g * f.area[k] * (Hc[k] - Hc[k - 1]) / dx + fric);
    }
}

/// Derivatives of the step residuals with respect to the *current* unknowns.
/// Tridiagonal in the interleaved layout. The sink takes (row, col, value)
/// with col < 0 meaning "current boundary discharge at face 0" (col == -1)
/// or "at face n_nodes" (col == -2).
template <class Sink>
inline void step_jacobian_current(const ChannelModel& m, const FaceCoeffs& f, const Vector& Qp, Sink&& add) {
    const int nn = m.n_nodes;
    const double dx = m.dx();
    const double co = m.dt / (m.width * dx);
    const double g = m.gravity;
    for (int c = 0; c < nn; ++c) {
        const int r = 2 * c;
        add(r, 2 * c, 1.0);
        if (c + 1 <= nn - 1)
            add(r, 2 * (c + 1) - 1, co);
        else
            add(r, -2, co);
        if (c >= 1)
            add(r, 2 * c - 1, -co);
        else
            add(r, -1, -co);
    }
    for (int k = 1; k < nn; ++k) {
        const int r = 2 * k - 1;
        add(r, 2 * k - 1, 1.0 + m.dt * g * Qp[k] / (f.area[k] * f.radius[k] * f.chezy[k] * f.chezy[k]));
        add(r, 2 * k, m.dt * g * f.area[k] / dx);
        add(r, 2 * (k - 1), -m.dt * g * f.area[k] / dx);
    }
}

/// Derivatives with respect to the *previous* state. Boundary discharges at
/// the previous time are data, so the sink only ever sees state columns:
/// H cell c at 2c, interior Q face k at 2k-1.
template <class Sink>
inline void step_jacobian_previous(const ChannelModel& m, const FaceCoeffs& f, const Vector& Hp,
                                   const Vector& Qp, const Vector& Hc, const Vector& Qc, Sink&& add) {
    const int nn = m.n_nodes;
    const double dx = m.dx();
    const double g = m.gravity;
    for (int c = 0; c < nn; ++c) add(2 * c, 2 * c, -1.0);
    for (int k = 1; k < nn; ++k) {
        const int r = 2 * k - 1;
        const double c2 = f.chezy[k] * f.chezy[k];
        // transient + advection + friction dependence on the previous discharge
        add(r, 2 * k - 1, -1.0 + m.dt * 2.0 * Qp[k] / (f.area[k] * dx) + m.dt * g * Qc[k] / (f.area[k] * f.radius[k] * c2));
        if (k - 1 >= 1) add(r, 2 * (k - 1) - 1, -m.dt * 2.0 * Qp[k - 1] / (f.area[k - 1] * dx));
        // level dependence through the face geometry
        const double dadv_dAk = -m.dt * Qp[k] * Qp[k] / (f.area[k] * f.area[k]) / dx;
        const double dadv_dAkm = m.dt * Qp[k - 1] * Qp[k - 1] / (f.area[k - 1] * f.area[k - 1]) / dx;
        const double dgrav_dAk = m.dt * g * (Hc[k] - Hc[k - 1]) / dx;
        const double fr = m.dt * g * Qc[k] * Qp[k] / c2; // residual term is fr * P_k / A_k^2
        const double dfr_dAk = fr * (-2.0 * f.perimeter[k] / (f.area[k] * f.area[k] * f.area[k]));
        const double dfr_dPk = fr / (f.area[k] * f.area[k]);
        // face k spans cells k-1 and k
        for (int cell : {k - 1, k}) {
            const double wlev = face_level_weight(k);
            const double dA = m.width * wlev;
            const double dP = 2.0 * wlev;
            add(r, 2 * cell, (dadv_dAk + dgrav_dAk + dfr_dAk) * dA + dfr_dPk * dP);
        }
        // face k-1 spans cells k-2 and k-1 (or just cell 0 for face 0)
        if (k - 1 == 0) {
            add(r, 0, dadv_dAkm * m.width);
        } else {
            for (int cell : {k - 2, k - 1}) add(r, 2 * cell, dadv_dAkm * (m.width * 0.5));
        }
    }
}

inline void check_state_physical(const ChannelModel& m, const Vector& H, const Vector& Q) {
    for (int c = 0; c < m.n_nodes; ++c)
        if (!(H[c] - m.bottom_levels[c] > 0.0))
            throw DryBedError("step produced zero depth at node " + std::to_string(c + 1));
    for (int k = 1; k < m.n_nodes; ++k)
        if (!(Q[k] > 0.0)) throw FlowReversalError("step produced non-positive discharge at face " + std::to_string(k));
}

} // namespace hydetail

/// Advances the state one time step by Newton on the semi-implicit system:
/// implicit level gradient and continuity, friction linearised with the old
/// discharge, advection explicit with first-order upwinding (flow is
/// unidirectional, so the upwind side is always upstream).
inline HydraulicState step(const ChannelModel& m, const HydraulicState& s, double inflow_next,
                           double control_next, double tol = 1e-11, int max_iter = 20) {
    if (!(inflow_next > 0) || !(control_next > 0))
        throw InvalidArgumentError("step: boundary discharges must be positive");
    const int nn = m.n_nodes;
    const int ns = 2 * nn - 1;
    const auto f = hydetail::face_coeffs(m, s.H, s.Q);

    Vector Hc = s.H;
    Vector Qc = s.Q;
    Qc[0] = inflow_next;
    Qc[nn] = control_next;

    Vector r(ns);
    for (int it = 0; it < max_iter; ++it) {
        hydetail::step_residual(m, f, s.H, s.Q, Hc, Qc, r.data());
        if (norm_inf(r) <= tol) {
            hydetail::check_state_physical(m, Hc, Qc);
            return HydraulicState{std::move(Hc), std::move(Qc)};
        }
        BandedMatrix jac(ns, 1, 1);
        hydetail::step_jacobian_current(m, f, s.Q, [&](int row, int col, double v) {
            if (col >= 0) jac.add(row, col, v);
        });
        BandedFactorization lu(jac);
        for (double& v : r) v = -v;
        Vector dx = lu.solve(r);
        for (int c = 0; c < nn; ++c) Hc[c] += dx[2 * c];
        for (int k = 1; k < nn; ++k) Qc[k] += dx[2 * k - 1];
    }
    hydetail::step_residual(m, f, s.H, s.Q, Hc, Qc, r.data());
    if (norm_inf(r) <= tol) {
        hydetail::check_state_physical(m, Hc, Qc);
        return HydraulicState{std::move(Hc), std::move(Qc)};
    }
    throw NoConvergenceError("step: Newton did not reach tolerance " + std::to_string(tol));
}

/// Discrete steady backwater profile: uniform discharge q0, downstream level
/// pinned, levels solved so that one time step maps the state to itself.
inline HydraulicState steady_state(const ChannelModel& m, double q0, double downstream_level) {
    if (!(q0 > 0)) throw InvalidArgumentError("steady_state: discharge must be positive");
    const int nn = m.n_nodes;
    Vector H(nn, downstream_level);
    Vector Q(nn + 1, q0);
    const int nu = nn - 1; // unknown levels; the downstream one is pinned
    for (int it = 0; it < 100; ++it) {
        const auto f = hydetail::face_coeffs(m, H, Q);
        Vector r(nu, 0.0);
        Vector full(2 * nn - 1);
        hydetail::step_residual(m, f, H, Q, H, Q, full.data());
        for (int k = 1; k < nn; ++k) r[k - 1] = full[2 * k - 1];
        if (norm_inf(r) <= 1e-13) return HydraulicState{std::move(H), std::move(Q)};
        // momentum rows k=1..nn-1 against level cells 0..nn-2: tridiagonal.
        // The level appears both implicitly (gradient term) and through the
        // face coefficients, so current- and previous-state derivatives add.
        BandedMatrix jac(nu, 1, 1);
        auto add_level = [&](int row, int col, double v) {
            if (row % 2 != 1 || col < 0 || col % 2 != 0) return; // momentum rows, level columns
            const int cell = col / 2;
            if (cell >= nu) return; // pinned downstream level
            jac.add(row / 2, cell, v);
        };
        hydetail::step_jacobian_current(m, f, Q, add_level);
        hydetail::step_jacobian_previous(m, f, H, Q, H, Q, add_level);
        BandedFactorization lu(jac);
        for (double& v : r) v = -v;
        Vector dH = lu.solve(r);
        for (int c = 0; c < nu; ++c) H[c] += dH[c];
    }
    throw NoConvergenceError("steady_state: Newton did not converge");
}

/// Sequential application of step() from an explicit initial state.
inline HydraulicTrajectory simulate(const ChannelModel& m, const HydraulicState& initial,
                                    const InflowSeries& inflow, const Vector& control) {
    if (inflow.values.size() != control.size())
        throw ConfigurationError("simulate: control length must match the inflow series");
    inflow.validate();
    HydraulicTrajectory traj;
    traj.inflow = inflow.values;
    traj.control = control;
    traj.states.reserve(inflow.values.size() + 1);
    traj.states.push_back(initial);
    for (std::size_t t = 0; t < control.size(); ++t)
        traj.states.push_back(step(m, traj.states.back(), inflow.values[t], control[t]));
    return traj;
}

/// As above, starting from the model's steady state.
inline HydraulicTrajectory simulate(const ChannelModel& m, const InflowSeries& inflow, const Vector& control) {
    return simulate(m, steady_state(m, m.initial_discharge, m.initial_downstream_level), inflow, control);
}

/// Sum over time steps (the initial state excluded) of |H_gate - target|^p,
/// where the gate node is the last level node.
inline double tracking_objective(const HydraulicTrajectory& traj, double target, double p = 2.0) {
    if (p < 2.0) throw InvalidArgumentError("tracking_objective: exponent must be at least 2");
    double s = 0.0;
    for (std::size_t t = 1; t < traj.states.size(); ++t) {
        const double d = std::abs(traj.states[t].H.back() - target);
        s += std::pow(d, p);
    }
    return s;
}

/// Total water volume held in the reach.
inline double channel_storage(const ChannelModel& m, const HydraulicState& s) {
    double v = 0.0;
    for (int c = 0; c < m.n_nodes; ++c) v += m.width * m.dx() * (s.H[c] - m.bottom_levels[c]);
    return v;
}

/// The reach as a reduced-space control problem: all levels and interior
/// discharges over the horizon are stacked into one state vector (2*n_nodes-1
/// unknowns per step), the downstream releases are the controls, and the
/// output picks the gate-node level at every step. The stacked constraint
/// Jacobian is banded: each step couples only to its predecessor.
class HydraulicProblem : public RmpcProblem {
public:
    HydraulicProblem(ChannelModel model, InflowSeries inflow, Box box, double objective_exponent = 2.0)
        : model_(std::move(model)), inflow_(std::move(inflow)), box_(std::move(box)),
          p_(objective_exponent) {
        model_.validate();
        inflow_.validate();
        box_.validate();
        if (static_cast<int>(inflow_.values.size()) != model_.horizon)
            throw ConfigurationError("hydraulic problem: inflow length must equal the horizon");
        if (box_.size() != model_.horizon)
            throw ConfigurationError("hydraulic problem: control box dimension must equal the horizon");
        if (p_ < 2.0) throw ConfigurationError("hydraulic problem: objective exponent must be at least 2");
        initial_ = steady_state(model_, model_.initial_discharge, model_.initial_downstream_level);
        ns_ = 2 * model_.n_nodes - 1;
    }

    const ChannelModel& model() const { return model_; }
    const InflowSeries& inflow() const { return inflow_; }
    const HydraulicState& initial_state() const { return initial_; }
    int states_per_step() const { return ns_; }

    int state_dim() const override { return ns_ * model_.horizon; }
    int control_dim() const override { return model_.horizon; }
    Box control_box() const override { return box_; }

    /// Stacked index of the level at cell `c` (0-based) after step t+1.
    int level_index(int t, int c) const { return ns_ * t + 2 * c; }
    /// Stacked index of the discharge at interior face k (1..n_nodes-1).
    int discharge_index(int t, int k) const { return ns_ * t + 2 * k - 1; }

    Vector pack(const HydraulicTrajectory& traj) const {
        Vector x(state_dim());
        for (int t = 0; t < model_.horizon; ++t) {
            const HydraulicState& s = traj.states[t + 1];
            for (int c = 0; c < model_.n_nodes; ++c) x[level_index(t, c)] = s.H[c];
            for (int k = 1; k < model_.n_nodes; ++k) x[discharge_index(t, k)] = s.Q[k];
        }
        return x;
    }

    HydraulicTrajectory unpack(const Vector& x, const Vector& u) const {
        HydraulicTrajectory traj;
        traj.inflow = inflow_.values;
        traj.control = u;
        traj.states.push_back(initial_);
        for (int t = 0; t < model_.horizon; ++t) {
            HydraulicState s;
            s.H.resize(model_.n_nodes);
            s.Q.assign(model_.n_nodes + 1, 0.0);
            for (int c = 0; c < model_.n_nodes; ++c) s.H[c] = x[level_index(t, c)];
            for (int k = 1; k < model_.n_nodes; ++k) s.Q[k] = x[discharge_index(t, k)];
            s.Q[0] = inflow_.values[t];
            s.Q[model_.n_nodes] = u[t];
            traj.states.push_back(std::move(s));
        }
        return traj;
    }

    Vector residual(const Vector& x, const Vector& u) const override {
        const int nn = model_.n_nodes;
        Vector out(state_dim());
        Vector Hp, Qp, Hc(nn), Qc(nn + 1);
        for (int t = 0; t < model_.horizon; ++t) {
            previous_state(x, u, t, Hp, Qp);
            current_state(x, u, t, Hc, Qc);
            const auto f = hydetail::face_coeffs(model_, Hp, Qp);
            hydetail::step_residual(model_, f, Hp, Qp, Hc, Qc, out.data() + ns_ * t);
        }
        return out;
    }

    StateJacobian state_jacobian(const Vector& x, const Vector& u) const override {
        const int nn = model_.n_nodes;
        // each step couples tridiagonally to itself and up to 3 interleaved
        // positions into the previous step's block
        const int kl = std::min(ns_ + 3, state_dim() - 1);
        const int ku = std::min(1, state_dim() - 1);
        BandedMatrix jac(state_dim(), kl, ku);
        Vector Hp, Qp, Hc(nn), Qc(nn + 1);
        for (int t = 0; t < model_.horizon; ++t) {
            previous_state(x, u, t, Hp, Qp);
            current_state(x, u, t, Hc, Qc);
            const auto f = hydetail::face_coeffs(model_, Hp, Qp);
            const int row0 = ns_ * t;
            hydetail::step_jacobian_current(model_, f, Qp, [&](int row, int col, double v) {
                if (col >= 0) jac.add(row0 + row, ns_ * t + col, v);
            });
            if (t > 0) {
                hydetail::step_jacobian_previous(model_, f, Hp, Qp, Hc, Qc, [&](int row, int col, double v) {
                    jac.add(row0 + row, ns_ * (t - 1) + col, v);
                });
            }
        }
        return jac;
    }

    DenseMatrix control_jacobian(const Vector& /*x*/, const Vector& /*u*/) const override {
        // the control enters only the continuity equation of the gate cell
        DenseMatrix b(state_dim(), control_dim());
        const double co = model_.dt / (model_.width * model_.dx());
        const int gate_row = 2 * (model_.n_nodes - 1);
        for (int t = 0; t < model_.horizon; ++t) b(ns_ * t + gate_row, t) = co;
        return b;
    }

    Vector output(const Vector& x) const override {
        Vector y(control_dim());
        for (int t = 0; t < model_.horizon; ++t) y[t] = x[level_index(t, model_.n_nodes - 1)];
        return y;
    }

    DenseMatrix output_jacobian(const Vector& /*x*/) const override {
        DenseMatrix gx(control_dim(), state_dim());
        for (int t = 0; t < model_.horizon; ++t) gx(t, level_index(t, model_.n_nodes - 1)) = 1.0;
        return gx;
    }

    double objective(const Vector& y) const override {
        double s = 0.0;
        for (double v : y) s += std::pow(std::abs(v - model_.target_level), p_);
        return s;
    }

    Vector objective_gradient(const Vector& y) const override {
        Vector g(y.size());
        for (std::size_t i = 0; i < y.size(); ++i) {
            const double d = y[i] - model_.target_level;
            g[i] = p_ * std::pow(std::abs(d), p_ - 1.0) * (d >= 0 ? 1.0 : -1.0);
        }
        return g;
    }

    Vector initial_state_guess(const Vector& u) const override {
        return pack(simulate(model_, initial_, inflow_, u));
    }

    double objective_exponent() const { return p_; }

private:
    void previous_state(const Vector& x, const Vector& u, int t, Vector& H, Vector& Q) const {
        const int nn = model_.n_nodes;
        if (t == 0) {
            H = initial_.H;
            Q = initial_.Q;
            return;
        }
        H.resize(nn);
        Q.assign(nn + 1, 0.0);
        for (int c = 0; c < nn; ++c) H[c] = x[level_index(t - 1, c)];
        for (int k = 1; k < nn; ++k) Q[k] = x[discharge_index(t - 1, k)];
        Q[0] = inflow_.values[t - 1];
        Q[nn] = u[t - 1];
    }

    void current_state(const Vector& x, const Vector& u, int t, Vector& H, Vector& Q) const {
        const int nn = model_.n_nodes;
        for (int c = 0; c < nn; ++c) H[c] = x[level_index(t, c)];
        for (int k = 1; k < nn; ++k) Q[k] = x[discharge_index(t, k)];
        Q[0] = inflow_.values[t];
        Q[nn] = u[t];
    }

    ChannelModel model_;
    InflowSeries inflow_;
    Box box_;
    double p_;
    HydraulicState initial_;
    int ns_ = 0;
};

/// Builds the reduced-space problem for a channel with the given inflow and
/// scalar release bounds applied at every time step.
inline HydraulicProblem assemble_rmpc(const ChannelModel& model, const InflowSeries& inflow,
                                      double release_lower = 100.0, double release_upper = 200.0,
                                      double objective_exponent = 2.0) {
    if (!(release_lower < release_upper))
        throw ConfigurationError("assemble_rmpc: lower release bound must be below the upper bound");
    return HydraulicProblem(model, inflow, Box::uniform(model.horizon, release_lower, release_upper),
                            objective_exponent);
}

} // namespace rmpc
