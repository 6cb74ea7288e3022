#pragma once

#include <deque>
#include <string>
#include <vector>

#include "rmpc/errors.hpp"
#include "rmpc/linalg.hpp"
#include "rmpc/problem.hpp"

namespace rmpc {

struct OptimizerConfig {
    double grad_tol = 1e-8;         // projected-gradient convergence threshold
    int max_iterations = 500;
    int memory = 10;                // quasi-Newton history length
    double armijo_constant = 1e-4;
    double backtrack_factor = 0.5;
    double active_tol = 1e-8;       // absolute distance for treating a bound as active
    bool polish = true;             // Gauss-Newton refinement after convergence
    int polish_max_iterations = 40;
    double polish_tol = 1e-13;

    void validate() const {
        if (grad_tol <= 0 || max_iterations <= 0 || memory <= 0 || armijo_constant <= 0 ||
            backtrack_factor <= 0 || backtrack_factor >= 1 || active_tol <= 0)
            throw ConfigurationError("optimizer config: all parameters must be positive (backtrack < 1)");
    }
};

enum class BoundSide { Lower, Upper };

struct ActiveBound {
    int index;
    BoundSide side;
};

struct KktPoint {
    double residual = 0.0;          // max stationarity / dual-infeasibility violation
    Vector multipliers_lower;       // >= 0, nonzero only on active lower bounds
    Vector multipliers_upper;       // >= 0, nonzero only on active upper bounds
    std::vector<ActiveBound> active_set;
    Vector gradient;                // reduced gradient at the point
};

struct OptimizationResult {
    Vector u_star;
    double f_star = 0.0;
    int iterations = 0;
    double kkt_residual = 0.0;
    Vector multipliers_lower;
    Vector multipliers_upper;
    std::vector<ActiveBound> active_set;
    bool converged = false;
    std::string message;
    std::vector<double> objective_history; // accepted iterates, non-increasing
};

/// Componentwise clamp onto the box.
inline Vector project(const Vector& u, const Box& box) {
    box.validate();
    if (u.size() != box.lower.size()) throw InvalidArgumentError("project: dimension mismatch");
    return box.clamp(u);
}

namespace optdetail {

/// Multipliers and residual from a gradient at a feasible point. On an active
/// lower bound the multiplier is the positive part of the gradient and any
/// negative part counts towards the residual; symmetrically on upper bounds;
/// interior coordinates contribute their full gradient component.
inline KktPoint kkt_from_gradient(const Box& box, const Vector& u, const Vector& grad, double active_tol) {
    const int n = box.size();
    KktPoint k;
    k.gradient = grad;
    k.multipliers_lower.assign(n, 0.0);
    k.multipliers_upper.assign(n, 0.0);
    double res = 0.0;
    for (int i = 0; i < n; ++i) {
        const bool at_lower = u[i] - box.lower[i] <= active_tol;
        const bool at_upper = box.upper[i] - u[i] <= active_tol;
        if (at_lower) {
            k.active_set.push_back({i, BoundSide::Lower});
            k.multipliers_lower[i] = std::max(grad[i], 0.0);
            res = std::max(res, std::abs(std::min(grad[i], 0.0)));
        } else if (at_upper) {
            k.active_set.push_back({i, BoundSide::Upper});
            k.multipliers_upper[i] = std::max(-grad[i], 0.0);
            res = std::max(res, std::abs(std::max(grad[i], 0.0)));
        } else {
            res = std::max(res, std::abs(grad[i]));
        }
    }
    k.residual = res;
    return k;
}

/// Hessian of the (convex, closed-form) objective in output space by central
/// differences of its gradient; symmetrised. Output-space probes never
/// trigger a state solve.
inline DenseMatrix objective_hessian_fd(const RmpcProblem& p, const Vector& y) {
    const int n = static_cast<int>(y.size());
    DenseMatrix h(n, n);
    for (int j = 0; j < n; ++j) {
        const double step = 1e-6 * (1.0 + std::abs(y[j]));
        Vector yp = y, ym = y;
        yp[j] += step;
        ym[j] -= step;
        const Vector gp = p.objective_gradient(yp);
        const Vector gm = p.objective_gradient(ym);
        for (int i = 0; i < n; ++i) h(i, j) = (gp[i] - gm[i]) / (2.0 * step);
    }
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < i; ++j) {
            const double s = 0.5 * (h(i, j) + h(j, i));
            h(i, j) = s;
            h(j, i) = s;
        }
    return h;
}

struct LbfgsMemory {
    std::deque<Vector> s, y;
    std::deque<double> rho;
    int capacity;

    explicit LbfgsMemory(int cap) : capacity(cap) {}

    void clear() {
        s.clear();
        y.clear();
        rho.clear();
    }

    void push(Vector si, Vector yi) {
        const double sy = dot(si, yi);
        if (sy <= 1e-12 * norm2(si) * norm2(yi)) return; // curvature too weak to be useful
        if (static_cast<int>(s.size()) == capacity) {
            s.pop_front();
            y.pop_front();
            rho.pop_front();
        }
        rho.push_back(1.0 / sy);
        s.push_back(std::move(si));
        y.push_back(std::move(yi));
    }

    /// Two-loop recursion on the free subspace: masked coordinates are zeroed
    /// on entry and exit so the step stays within the inactive coordinates.
    Vector direction(const Vector& grad, const std::vector<bool>& masked) const {
        const int n = static_cast<int>(grad.size());
        Vector q(n);
        for (int i = 0; i < n; ++i) q[i] = masked[i] ? 0.0 : -grad[i];
        const int k = static_cast<int>(s.size());
        std::vector<double> alpha(k);
        for (int j = k - 1; j >= 0; --j) {
            alpha[j] = rho[j] * dot(s[j], q);
            axpy(-alpha[j], y[j], q);
        }
        if (k > 0) {
            const double gamma = dot(s[k - 1], y[k - 1]) / dot(y[k - 1], y[k - 1]);
            for (double& v : q) v *= gamma;
        }
        for (int j = 0; j < k; ++j) {
            const double beta = rho[j] * dot(y[j], q);
            axpy(alpha[j] - beta, s[j], q);
        }
        for (int i = 0; i < n; ++i)
            if (masked[i]) q[i] = 0.0;
        return q;
    }
};

} // namespace optdetail

/// KKT residual, multipliers, and active set of the reduced problem at u.
inline KktPoint kkt_residual(const RmpcProblem& p, const Vector& u, double active_tol = 1e-8) {
    const Box box = p.control_box();
    if (!box.contains(u, 1e-12)) throw InvalidArgumentError("kkt_residual: point is outside the box");
    return optdetail::kkt_from_gradient(box, u, reduced_gradient(p, u), active_tol);
}

/// Bound-constrained minimisation of the reduced objective: projected
/// quasi-Newton search with Armijo backtracking along the projected path,
/// followed by a Gauss-Newton polish on the inactive coordinates that drives
/// the projected gradient towards machine precision (all starts of a
/// multi-start run then land on one point).
inline OptimizationResult minimize(const RmpcProblem& p, const Vector& u0, const OptimizerConfig& cfg = {}) {
    cfg.validate();
    const Box box = p.control_box();
    const int n = box.size();

    Evaluator eval(p);
    Vector u = project(u0, box);
    double f = eval.objective(u);
    Vector grad = eval.gradient(u);

    OptimizationResult result;
    result.objective_history.push_back(f);

    optdetail::LbfgsMemory mem(cfg.memory);
    int it = 0;
    bool main_converged = false;
    std::string stall_reason;

    for (; it < cfg.max_iterations; ++it) {
        const KktPoint kkt = optdetail::kkt_from_gradient(box, u, grad, cfg.active_tol);
        if (kkt.residual <= cfg.grad_tol) {
            main_converged = true;
            break;
        }

        std::vector<bool> masked(n, false);
        for (int i = 0; i < n; ++i) {
            const bool at_lower = u[i] - box.lower[i] <= cfg.active_tol;
            const bool at_upper = box.upper[i] - u[i] <= cfg.active_tol;
            masked[i] = (at_lower && grad[i] > 0) || (at_upper && grad[i] < 0);
        }

        Vector d = mem.direction(grad, masked);
        double gd = dot(grad, d);
        if (!(gd < -1e-14 * std::max(1.0, norm2(grad) * norm2(d)))) {
            // not a usable descent direction; restart from projected steepest descent
            mem.clear();
            d.assign(n, 0.0);
            for (int i = 0; i < n; ++i)
                if (!masked[i]) d[i] = -grad[i];
            gd = dot(grad, d);
            if (gd >= 0) {
                stall_reason = "no descent direction on the free subspace";
                break;
            }
        }

        double alpha = 1.0;
        bool accepted = false;
        Vector u_new;
        double f_new = 0.0;
        for (int h = 0; h < 50; ++h) {
            Vector trial = u;
            axpy(alpha, d, trial);
            trial = box.clamp(std::move(trial));
            Vector delta(n);
            for (int i = 0; i < n; ++i) delta[i] = trial[i] - u[i];
            const double pred = dot(grad, delta);
            if (norm_inf(delta) == 0.0) break;
            try {
                const double ft = eval.objective(trial);
                const bool ok = pred < 0 ? (ft <= f + cfg.armijo_constant * pred) : (ft < f);
                if (ok) {
                    u_new = std::move(trial);
                    f_new = ft;
                    accepted = true;
                    break;
                }
            } catch (const Error&) {
                // state solve failed for this trial control; shorten the step
            }
            alpha *= cfg.backtrack_factor;
        }
        if (!accepted) {
            stall_reason = "line search could not make progress";
            break;
        }

        Vector grad_new = eval.gradient(u_new);
        Vector s(n), yv(n);
        for (int i = 0; i < n; ++i) {
            s[i] = u_new[i] - u[i];
            yv[i] = grad_new[i] - grad[i];
        }
        mem.push(std::move(s), std::move(yv));
        u = std::move(u_new);
        f = f_new;
        grad = std::move(grad_new);
        result.objective_history.push_back(f);
    }

    // Gauss-Newton polish: freeze the near-active bounds, take undamped steps
    // d = -(M^T Hy M)^{-1} g on the free coordinates, and keep the iterate
    // with the smallest projected gradient. Near the optimum the objective
    // changes less than floating-point noise, so no sufficient-decrease test
    // is applied; divergence is caught by the best-iterate tracking.
    if (cfg.polish && n > 0) {
        Vector best_u = u;
        double best_pg = optdetail::kkt_from_gradient(box, u, grad, cfg.active_tol).residual;
        Vector cur = u;
        for (int pit = 0; pit < cfg.polish_max_iterations; ++pit) {
            Vector g;
            try {
                g = eval.gradient(cur);
            } catch (const Error&) {
                break;
            }
            for (int i = 0; i < n; ++i) {
                if (cur[i] - box.lower[i] <= cfg.active_tol) cur[i] = box.lower[i];
                if (box.upper[i] - cur[i] <= cfg.active_tol) cur[i] = box.upper[i];
            }
            const double pg = optdetail::kkt_from_gradient(box, cur, g, cfg.active_tol).residual;
            if (pg < best_pg) {
                best_pg = pg;
                best_u = cur;
            }
            if (pg <= cfg.polish_tol) break;
            if (pit > 8 && pg > 100.0 * best_pg) break;

            std::vector<int> free_idx;
            for (int i = 0; i < n; ++i) {
                const bool pinned = (cur[i] == box.lower[i] && g[i] > 0) || (cur[i] == box.upper[i] && g[i] < 0);
                if (!pinned) free_idx.push_back(i);
            }
            if (free_idx.empty()) break;

            try {
                const DenseMatrix m = eval.controllability(cur);
                const DenseMatrix hy = optdetail::objective_hessian_fd(p, eval.output(cur));
                const DenseMatrix hgn = m.transposed().multiply(hy.multiply(m));
                const int nf = static_cast<int>(free_idx.size());
                DenseMatrix hs(nf, nf);
                Vector gs(nf);
                for (int a = 0; a < nf; ++a) {
                    gs[a] = -g[free_idx[a]];
                    for (int b = 0; b < nf; ++b) hs(a, b) = hgn(free_idx[a], free_idx[b]);
                }
                DenseFactorization lu(hs);
                const Vector d = lu.solve(gs);
                for (int a = 0; a < nf; ++a) {
                    const int i = free_idx[a];
                    cur[i] = std::min(box.upper[i], std::max(box.lower[i], cur[i] + d[a]));
                }
            } catch (const Error&) {
                break;
            }
        }
        u = best_u;
        f = eval.objective(u);
        grad = eval.gradient(u);
    }

    const KktPoint final_kkt = optdetail::kkt_from_gradient(box, u, grad, cfg.active_tol);
    result.u_star = std::move(u);
    result.f_star = f;
    result.iterations = it;
    result.kkt_residual = final_kkt.residual;
    result.multipliers_lower = final_kkt.multipliers_lower;
    result.multipliers_upper = final_kkt.multipliers_upper;
    result.active_set = final_kkt.active_set;
    result.converged = main_converged || final_kkt.residual <= cfg.grad_tol;
    if (result.converged)
        result.message = "converged";
    else if (it >= cfg.max_iterations)
        result.message = "iteration limit reached; returning best iterate";
    else
        result.message = stall_reason.empty() ? "stopped" : stall_reason;
    return result;
}

} // namespace rmpc
