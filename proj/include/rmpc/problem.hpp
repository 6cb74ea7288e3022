#pragma once

#include <memory>
#include <optional>
#include <string>
#include <variant>

#include "rmpc/errors.hpp"
#include "rmpc/linalg.hpp"

namespace rmpc {

/// Componentwise control bounds u_lower <= u <= u_upper.
struct Box {
    Vector lower;
    Vector upper;

    int size() const { return static_cast<int>(lower.size()); }

    void validate() const {
        if (lower.size() != upper.size() || lower.empty())
            throw ConfigurationError("box: bound vectors empty or of mismatched length");
        for (std::size_t i = 0; i < lower.size(); ++i) {
            if (!std::isfinite(lower[i]) || !std::isfinite(upper[i]) || lower[i] > upper[i])
                throw ConfigurationError("box: invalid bounds at coordinate " + std::to_string(i));
        }
    }

    bool contains(const Vector& u, double slack = 0.0) const {
        for (std::size_t i = 0; i < lower.size(); ++i) {
            const double s = slack * (1.0 + std::max(std::abs(lower[i]), std::abs(upper[i])));
            if (u[i] < lower[i] - s || u[i] > upper[i] + s) return false;
        }
        return true;
    }

    Vector clamp(Vector u) const {
        for (std::size_t i = 0; i < lower.size(); ++i) u[i] = std::min(upper[i], std::max(lower[i], u[i]));
        return u;
    }

    Vector center() const {
        Vector c(lower.size());
        for (std::size_t i = 0; i < lower.size(); ++i) c[i] = 0.5 * (lower[i] + upper[i]);
        return c;
    }

    static Box uniform(int n, double lo, double hi) { return Box{Vector(n, lo), Vector(n, hi)}; }
};

/// The state Jacobian of the equality constraints may be banded (time-stacked
/// problems) or small and dense (analytic examples).
using StateJacobian = std::variant<DenseMatrix, BandedMatrix>;

inline int state_jacobian_rows(const StateJacobian& j) {
    if (std::holds_alternative<DenseMatrix>(j)) return std::get<DenseMatrix>(j).rows();
    return std::get<BandedMatrix>(j).size();
}

inline int state_jacobian_cols(const StateJacobian& j) {
    if (std::holds_alternative<DenseMatrix>(j)) return std::get<DenseMatrix>(j).cols();
    return std::get<BandedMatrix>(j).size();
}

inline bool state_jacobian_square(const StateJacobian& j) {
    return state_jacobian_rows(j) == state_jacobian_cols(j);
}

inline DenseMatrix state_jacobian_dense(const StateJacobian& j) {
    if (std::holds_alternative<DenseMatrix>(j)) return std::get<DenseMatrix>(j);
    return std::get<BandedMatrix>(j).to_dense();
}

/// Factorization of a (square) state Jacobian, dense or banded.
class StateJacobianFactor {
public:
    explicit StateJacobianFactor(const StateJacobian& j, double pivot_tol = 0.0) : factor_(make(j, pivot_tol)) {}

    Vector solve(const Vector& b) const {
        return std::visit([&](const auto& f) { return f.solve(b); }, factor_);
    }

    Vector solve_transpose(const Vector& b) const {
        return std::visit([&](const auto& f) { return f.solve_transpose(b); }, factor_);
    }

    double min_pivot() const {
        return std::visit([](const auto& f) { return f.min_pivot(); }, factor_);
    }

private:
    static std::variant<DenseFactorization, BandedFactorization> make(const StateJacobian& j,
                                                                      double pivot_tol) {
        if (!state_jacobian_square(j))
            throw SingularError("state Jacobian is not square (" + std::to_string(state_jacobian_rows(j)) +
                                "x" + std::to_string(state_jacobian_cols(j)) + ")");
        if (std::holds_alternative<DenseMatrix>(j))
            return std::variant<DenseFactorization, BandedFactorization>(
                std::in_place_type<DenseFactorization>, std::get<DenseMatrix>(j), pivot_tol);
        return std::variant<DenseFactorization, BandedFactorization>(
            std::in_place_type<BandedFactorization>, std::get<BandedMatrix>(j), pivot_tol);
    }

    std::variant<DenseFactorization, BandedFactorization> factor_;
};

/// An equality-constrained optimal control problem
///
///     min f(g(x))  subject to  c(x, u) = 0,  u in [u_lower, u_upper],
///
/// with states x (dimension m), controls u (dimension n), outputs y = g(x)
/// (dimension n), and a convex objective f. The states are determined
/// implicitly by the controls through c(x, u) = 0.
class RmpcProblem {
public:
    virtual ~RmpcProblem() = default;

    virtual int state_dim() const = 0;   // m
    virtual int control_dim() const = 0; // n

    /// Number of equality constraints; equals state_dim() for well-posed
    /// problems but may differ for deliberately degenerate examples.
    virtual int residual_dim() const { return state_dim(); }

    virtual Box control_box() const = 0;

    virtual Vector residual(const Vector& x, const Vector& u) const = 0;
    virtual StateJacobian state_jacobian(const Vector& x, const Vector& u) const = 0;
    /// d c / d u, residual_dim() x control_dim().
    virtual DenseMatrix control_jacobian(const Vector& x, const Vector& u) const = 0;

    virtual Vector output(const Vector& x) const = 0;             // g(x), length n
    virtual DenseMatrix output_jacobian(const Vector& x) const = 0; // n x m

    virtual double objective(const Vector& y) const = 0;
    virtual Vector objective_gradient(const Vector& y) const = 0;
    virtual bool objective_is_convex() const { return true; }

    virtual Vector initial_state_guess(const Vector& u) const = 0;

    /// Closed-form state solution, if one is supplied. Degenerate examples
    /// whose constraint systems cannot be solved by Newton provide a
    /// designated branch here so diagnostic checks can still evaluate them.
    virtual std::optional<Vector> explicit_states(const Vector& /*u*/) const { return std::nullopt; }
};

struct NewtonOptions {
    double tol = 1e-10;
    int max_iter = 50;
    double pivot_tol = 0.0; // 0 = scale-aware default
};

struct StateSolveResult {
    Vector x;
    int newton_iterations = 0;
    double residual_norm = 0.0;
};

namespace detail {

inline void check_control_in_box(const RmpcProblem& p, const Vector& u) {
    if (static_cast<int>(u.size()) != p.control_dim())
        throw InvalidArgumentError("control vector has wrong length");
    if (!p.control_box().contains(u, 1e-12))
        throw InvalidArgumentError("control vector lies outside the admissible box");
}

} // namespace detail

/// Newton solve of c(x, u) = 0 for x with step halving on ||c||^2.
inline StateSolveResult solve_states(const RmpcProblem& p, const Vector& u, const Vector& x0,
                                     const NewtonOptions& opts = {}) {
    detail::check_control_in_box(p, u);
    if (opts.tol <= 0.0) throw InvalidArgumentError("solve_states: tolerance must be positive");

    if (auto xc = p.explicit_states(u)) {
        Vector r = p.residual(*xc, u);
        return StateSolveResult{std::move(*xc), 0, norm_inf(r)};
    }

    Vector x = x0;
    Vector r = p.residual(x, u);
    double rn = norm_inf(r);
    for (int it = 0; it < opts.max_iter; ++it) {
        if (rn <= opts.tol) return StateSolveResult{std::move(x), it, rn};
        StateJacobianFactor factor(p.state_jacobian(x, u), opts.pivot_tol);
        Vector rhs(r.size());
        for (std::size_t i = 0; i < r.size(); ++i) rhs[i] = -r[i];
        Vector dx = factor.solve(rhs);

        double alpha = 1.0;
        bool accepted = false;
        for (int h = 0; h < 40; ++h) {
            Vector xt = x;
            axpy(alpha, dx, xt);
            try {
                Vector rt = p.residual(xt, u);
                const double rtn = norm_inf(rt);
                if (rtn <= (1.0 - 1e-4 * alpha) * rn || rtn <= opts.tol) {
                    x = std::move(xt);
                    r = std::move(rt);
                    rn = rtn;
                    accepted = true;
                    break;
                }
            } catch (const Error&) {
                // trial state left the evaluable domain; shorten the step
            }
            alpha *= 0.5;
        }
        if (!accepted)
            throw NoConvergenceError("solve_states: line search failed at residual " + std::to_string(rn));
    }
    if (rn <= opts.tol) return StateSolveResult{std::move(x), opts.max_iter, rn};
    throw NoConvergenceError("solve_states: no convergence in " + std::to_string(opts.max_iter) +
                             " iterations (residual " + std::to_string(rn) + ")");
}

inline StateSolveResult solve_states(const RmpcProblem& p, const Vector& u, const NewtonOptions& opts = {}) {
    return solve_states(p, u, p.initial_state_guess(u), opts);
}

/// Caching evaluation context for the reduced problem. Re-uses the state
/// solution and Jacobian factorization between objective, gradient, and
/// controllability evaluations at the same control vector. Not safe for
/// concurrent use; create one Evaluator per thread.
class Evaluator {
public:
    explicit Evaluator(const RmpcProblem& p, NewtonOptions opts = {}) : p_(&p), opts_(opts) {}

    const RmpcProblem& problem() const { return *p_; }

    const Vector& states(const Vector& u) {
        refresh(u);
        return cache_->x;
    }

    Vector output(const Vector& u) {
        refresh(u);
        return p_->output(cache_->x);
    }

    double objective(const Vector& u) {
        refresh(u);
        return p_->objective(p_->output(cache_->x));
    }

    /// Total gradient of f(g(x(u))) via one adjoint solve:
    /// w = state_jacobian^{-T} (output_jacobian^T grad f), gradient = -control_jacobian^T w.
    Vector gradient(const Vector& u) {
        refresh(u);
        const Vector& x = cache_->x;
        const Vector y = p_->output(x);
        const Vector gy = p_->objective_gradient(y);
        const DenseMatrix gx = p_->output_jacobian(x);
        Vector rhs = gx.matvec_transpose(gy); // (d g / d x)^T grad f, length m
        const Vector w = factor(u).solve_transpose(rhs);
        const DenseMatrix b = p_->control_jacobian(x, u);
        Vector grad = b.matvec_transpose(w);
        for (double& v : grad) v = -v;
        return grad;
    }

    /// The n x n matrix D_u T = -output_jacobian * state_jacobian^{-1} * control_jacobian,
    /// evaluated column by column with one linear solve per control.
    DenseMatrix controllability(const Vector& u) {
        refresh(u);
        const Vector& x = cache_->x;
        const DenseMatrix b = p_->control_jacobian(x, u);
        const DenseMatrix gx = p_->output_jacobian(x);
        const int n = p_->control_dim();
        const int m = p_->state_dim();
        DenseMatrix result(n, n);
        Vector col(m);
        const StateJacobianFactor& f = factor(u);
        for (int j = 0; j < n; ++j) {
            for (int i = 0; i < m; ++i) col[i] = b(i, j);
            Vector dx = f.solve(col); // state_jacobian^{-1} * column j of control_jacobian
            for (int i = 0; i < n; ++i) {
                double s = 0.0;
                for (int k = 0; k < m; ++k) s += gx(i, k) * dx[k];
                result(i, j) = -s;
            }
        }
        return result;
    }

    const StateSolveResult& last_solve(const Vector& u) {
        refresh(u);
        return cache_->solve;
    }

    long solve_count() const { return solves_; }

private:
    const StateJacobianFactor& factor(const Vector& u) {
        refresh(u);
        if (!cache_->factor)
            cache_->factor = std::make_unique<StateJacobianFactor>(p_->state_jacobian(cache_->x, u),
                                                                   opts_.pivot_tol);
        return *cache_->factor;
    }

    void refresh(const Vector& u) {
        if (cache_ && cache_->u == u) return;
        StateSolveResult s = solve_states(*p_, u, opts_);
        ++solves_;
        cache_.emplace();
        cache_->u = u;
        cache_->x = s.x;
        cache_->solve = std::move(s);
    }

    struct Cache {
        Vector u;
        Vector x;
        StateSolveResult solve;
        std::unique_ptr<StateJacobianFactor> factor;
    };

    const RmpcProblem* p_;
    NewtonOptions opts_;
    std::optional<Cache> cache_;
    long solves_ = 0;
};

inline double reduced_objective(const RmpcProblem& p, const Vector& u, const NewtonOptions& opts = {}) {
    Evaluator e(p, opts);
    return e.objective(u);
}

inline Vector reduced_gradient(const RmpcProblem& p, const Vector& u, const NewtonOptions& opts = {}) {
    Evaluator e(p, opts);
    return e.gradient(u);
}

/// D_u T at a given solved state; precondition c(x, u) = 0.
inline DenseMatrix output_controllability_matrix(const RmpcProblem& p, const Vector& x, const Vector& u,
                                                 const NewtonOptions& opts = {}) {
    const DenseMatrix b = p.control_jacobian(x, u);
    const DenseMatrix gx = p.output_jacobian(x);
    StateJacobianFactor f(p.state_jacobian(x, u), opts.pivot_tol);
    const int n = p.control_dim();
    const int m = p.state_dim();
    DenseMatrix result(n, n);
    Vector col(m);
    for (int j = 0; j < n; ++j) {
        for (int i = 0; i < m; ++i) col[i] = b(i, j);
        Vector dx = f.solve(col);
        for (int i = 0; i < n; ++i) {
            double s = 0.0;
            for (int k = 0; k < m; ++k) s += gx(i, k) * dx[k];
            result(i, j) = -s;
        }
    }
    return result;
}

/// Central-difference gradient of the reduced objective; the oracle against
/// which the adjoint gradient is validated.
inline Vector finite_difference_gradient(const RmpcProblem& p, const Vector& u, double h,
                                         const NewtonOptions& opts = {}) {
    if (h <= 0.0) throw InvalidArgumentError("finite_difference_gradient: step size must be positive");
    const int n = p.control_dim();
    Vector grad(n);
    for (int i = 0; i < n; ++i) {
        Vector up = u, um = u;
        up[i] += h;
        um[i] -= h;
        const double fp = reduced_objective(p, up, opts);
        const double fm = reduced_objective(p, um, opts);
        grad[i] = (fp - fm) / (2.0 * h);
    }
    return grad;
}

} // namespace rmpc
