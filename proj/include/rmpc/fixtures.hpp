#pragma once

#include <cmath>
#include <functional>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "rmpc/errors.hpp"
#include "rmpc/linalg.hpp"
#include "rmpc/problem.hpp"

namespace rmpc::fixtures {

/// f(y) = sum_i |y_i - target_i|^p with p >= 2.
struct TrackingObjective {
    Vector target;
    double p = 2.0;

    double value(const Vector& y) const {
        double s = 0.0;
        for (std::size_t i = 0; i < y.size(); ++i) s += std::pow(std::abs(y[i] - target[i]), p);
        return s;
    }

    Vector gradient(const Vector& y) const {
        Vector g(y.size());
        for (std::size_t i = 0; i < y.size(); ++i) {
            const double d = y[i] - target[i];
            g[i] = p * std::pow(std::abs(d), p - 1.0) * (d >= 0 ? 1.0 : -1.0);
        }
        return g;
    }

    void validate(int n) const {
        if (static_cast<int>(target.size()) != n)
            throw ConfigurationError("tracking objective: target length mismatch");
        if (p < 2.0) throw ConfigurationError("tracking objective: exponent must be at least 2");
    }
};

/// Linear-affine dynamics: c(x, u) = A x + B u + b, y = C x + c0.
/// Requires A invertible, B and C full rank, and C A^{-1} B invertible.
class LinearAffineProblem : public RmpcProblem {
public:
    LinearAffineProblem(DenseMatrix a, DenseMatrix b_mat, DenseMatrix c_mat, Vector b_vec, Vector c_vec,
                        TrackingObjective obj, Box box)
        : a_(std::move(a)), b_(std::move(b_mat)), c_(std::move(c_mat)), bvec_(std::move(b_vec)),
          cvec_(std::move(c_vec)), obj_(std::move(obj)), box_(std::move(box)) {
        const int m = a_.rows(), n = b_.cols();
        if (a_.cols() != m || b_.rows() != m || c_.rows() != n || c_.cols() != m ||
            static_cast<int>(bvec_.size()) != m || static_cast<int>(cvec_.size()) != n)
            throw ConfigurationError("linear-affine fixture: inconsistent dimensions");
        box_.validate();
        if (box_.size() != n) throw ConfigurationError("linear-affine fixture: box dimension mismatch");
        obj_.validate(n);
        try {
            DenseFactorization alu(a_);
            // -C A^{-1} B must be invertible (output controllability)
            DenseMatrix t(n, n);
            Vector col(m);
            for (int j = 0; j < n; ++j) {
                for (int i = 0; i < m; ++i) col[i] = b_(i, j);
                Vector ai = alu.solve(col);
                for (int i = 0; i < n; ++i) {
                    double s = 0.0;
                    for (int k = 0; k < m; ++k) s += c_(i, k) * ai[k];
                    t(i, j) = -s;
                }
            }
            DenseFactorization tlu(t);
        } catch (const SingularError& e) {
            throw ConfigurationError(std::string("linear-affine fixture: rank precondition failed: ") + e.what());
        }
        if (numerical_rank(b_) != n || numerical_rank(c_) != n)
            throw ConfigurationError("linear-affine fixture: B and C must have full rank");
    }

    int state_dim() const override { return a_.rows(); }
    int control_dim() const override { return b_.cols(); }
    Box control_box() const override { return box_; }

    Vector residual(const Vector& x, const Vector& u) const override {
        Vector r = a_.matvec(x);
        const Vector bu = b_.matvec(u);
        for (std::size_t i = 0; i < r.size(); ++i) r[i] += bu[i] + bvec_[i];
        return r;
    }

    StateJacobian state_jacobian(const Vector&, const Vector&) const override { return a_; }
    DenseMatrix control_jacobian(const Vector&, const Vector&) const override { return b_; }

    Vector output(const Vector& x) const override {
        Vector y = c_.matvec(x);
        for (std::size_t i = 0; i < y.size(); ++i) y[i] += cvec_[i];
        return y;
    }

    DenseMatrix output_jacobian(const Vector&) const override { return c_; }

    double objective(const Vector& y) const override { return obj_.value(y); }
    Vector objective_gradient(const Vector& y) const override { return obj_.gradient(y); }

    Vector initial_state_guess(const Vector&) const override { return Vector(state_dim(), 0.0); }

private:
    DenseMatrix a_, b_, c_;
    Vector bvec_, cvec_;
    TrackingObjective obj_;
    Box box_;
};

/// Polar-to-Cartesian transformation: x1 = u1 cos u2, x2 = u1 sin u2 with
/// radius bounded away from zero and the angle inside [0, 2*pi).
class TrigonometricProblem : public RmpcProblem {
public:
    TrigonometricProblem(Box box, TrackingObjective obj) : box_(std::move(box)), obj_(std::move(obj)) {
        box_.validate();
        if (box_.size() != 2) throw ConfigurationError("trigonometric fixture: two controls expected");
        if (!(box_.lower[0] > 0.0))
            throw ConfigurationError("trigonometric fixture: radius lower bound must be positive");
        if (box_.lower[1] < 0.0 || box_.upper[1] >= 2.0 * M_PI)
            throw ConfigurationError("trigonometric fixture: angle bounds must lie within [0, 2*pi)");
        obj_.validate(2);
    }

    int state_dim() const override { return 2; }
    int control_dim() const override { return 2; }
    Box control_box() const override { return box_; }

    Vector residual(const Vector& x, const Vector& u) const override {
        return {x[0] - u[0] * std::cos(u[1]), x[1] - u[0] * std::sin(u[1])};
    }

    StateJacobian state_jacobian(const Vector&, const Vector&) const override {
        return DenseMatrix::identity(2);
    }

    DenseMatrix control_jacobian(const Vector&, const Vector& u) const override {
        DenseMatrix b(2, 2);
        b(0, 0) = -std::cos(u[1]);
        b(0, 1) = u[0] * std::sin(u[1]);
        b(1, 0) = -std::sin(u[1]);
        b(1, 1) = -u[0] * std::cos(u[1]);
        return b;
    }

    Vector output(const Vector& x) const override { return x; }
    DenseMatrix output_jacobian(const Vector&) const override { return DenseMatrix::identity(2); }

    double objective(const Vector& y) const override { return obj_.value(y); }
    Vector objective_gradient(const Vector& y) const override { return obj_.gradient(y); }

    Vector initial_state_guess(const Vector&) const override { return {0.0, 0.0}; }

private:
    Box box_;
    TrackingObjective obj_;
};

/// Two-stage bilinear cascade: u1 = x1 z0, x1 = z0 - z1, u2 = x2 z1,
/// x2 = z1 - z2, with output y = (z1, z2). Well posed as long as the levels
/// z_i stay away from zero over the whole control box.
class BilinearCascadeProblem : public RmpcProblem {
public:
    BilinearCascadeProblem(double z0, Box box, TrackingObjective obj)
        : z0_(z0), box_(std::move(box)), obj_(std::move(obj)) {
        box_.validate();
        if (box_.size() != 2) throw ConfigurationError("bilinear cascade: two controls expected");
        if (box_.lower[0] < 0.0 || box_.lower[1] < 0.0)
            throw ConfigurationError("bilinear cascade: control bounds must be non-negative");
        if (!(z0_ > 0.0)) throw ConfigurationError("bilinear cascade: z0 must be positive");
        obj_.validate(2);
        // worst case over the box: z1 shrinks with u1, z2 with z1 and u2
        const double z1_min = z0_ - box_.upper[0] / z0_;
        if (!(z1_min > 0.0))
            throw ConfigurationError("bilinear cascade: bounds admit z1 = 0 (increase z0 or shrink the box)");
        const double z2_min = z1_min - box_.upper[1] / z1_min;
        if (!(z2_min > 0.0))
            throw ConfigurationError("bilinear cascade: bounds admit z2 = 0 (increase z0 or shrink the box)");
    }

    int state_dim() const override { return 4; } // (x1, x2, z1, z2)
    int control_dim() const override { return 2; }
    Box control_box() const override { return box_; }

    Vector residual(const Vector& x, const Vector& u) const override {
        return {x[0] * z0_ - u[0], x[0] - z0_ + x[2], x[1] * x[2] - u[1], x[1] - x[2] + x[3]};
    }

    StateJacobian state_jacobian(const Vector& x, const Vector&) const override {
        DenseMatrix j(4, 4);
        j(0, 0) = z0_;
        j(1, 0) = 1.0;
        j(1, 2) = 1.0;
        j(2, 1) = x[2];
        j(2, 2) = x[1];
        j(3, 1) = 1.0;
        j(3, 2) = -1.0;
        j(3, 3) = 1.0;
        return j;
    }

    DenseMatrix control_jacobian(const Vector&, const Vector&) const override {
        DenseMatrix b(4, 2);
        b(0, 0) = -1.0;
        b(2, 1) = -1.0;
        return b;
    }

    Vector output(const Vector& x) const override { return {x[2], x[3]}; }

    DenseMatrix output_jacobian(const Vector&) const override {
        DenseMatrix g(2, 4);
        g(0, 2) = 1.0;
        g(1, 3) = 1.0;
        return g;
    }

    double objective(const Vector& y) const override { return obj_.value(y); }
    Vector objective_gradient(const Vector& y) const override { return obj_.gradient(y); }

    Vector initial_state_guess(const Vector&) const override { return {0.0, 0.0, z0_, z0_}; }

    double z0() const { return z0_; }

private:
    double z0_;
    Box box_;
    TrackingObjective obj_;
};

/// Negative control: x(1 - x) = u has two solution branches for u < 1/4, so
/// states are not unique functions of the control (the binary restriction
/// x(1 - x) = 0 at u = 0). The box stays below 0.2 so both branches exist and
/// the state Jacobian 1 - 2x is nonsingular on each of them.
class IrregularBinaryProblem : public RmpcProblem {
public:
    int state_dim() const override { return 1; }
    int control_dim() const override { return 1; }
    Box control_box() const override { return Box::uniform(1, 0.0, 0.2); }

    Vector residual(const Vector& x, const Vector& u) const override {
        return {x[0] * (1.0 - x[0]) - u[0]};
    }

    StateJacobian state_jacobian(const Vector& x, const Vector&) const override {
        DenseMatrix j(1, 1);
        j(0, 0) = 1.0 - 2.0 * x[0];
        return j;
    }

    DenseMatrix control_jacobian(const Vector&, const Vector&) const override {
        DenseMatrix b(1, 1);
        b(0, 0) = -1.0;
        return b;
    }

    Vector output(const Vector& x) const override { return x; }
    DenseMatrix output_jacobian(const Vector&) const override { return DenseMatrix::identity(1); }

    double objective(const Vector& y) const override { return y[0] * y[0]; }
    Vector objective_gradient(const Vector& y) const override { return {2.0 * y[0]}; }

    Vector initial_state_guess(const Vector&) const override { return {0.1}; }
};

/// Negative control: u = sin x admits the solutions x, pi - x, x + 2 pi, ...
/// for the same control, again breaking state uniqueness. Bounds keep |u|
/// away from 1 so cos x stays nonsingular on every branch.
class IrregularSineProblem : public RmpcProblem {
public:
    int state_dim() const override { return 1; }
    int control_dim() const override { return 1; }
    Box control_box() const override { return Box::uniform(1, -0.9, 0.9); }

    Vector residual(const Vector& x, const Vector& u) const override { return {std::sin(x[0]) - u[0]}; }

    StateJacobian state_jacobian(const Vector& x, const Vector&) const override {
        DenseMatrix j(1, 1);
        j(0, 0) = std::cos(x[0]);
        return j;
    }

    DenseMatrix control_jacobian(const Vector&, const Vector&) const override {
        DenseMatrix b(1, 1);
        b(0, 0) = -1.0;
        return b;
    }

    Vector output(const Vector& x) const override { return x; }
    DenseMatrix output_jacobian(const Vector&) const override { return DenseMatrix::identity(1); }

    double objective(const Vector& y) const override { return y[0] * y[0]; }
    Vector objective_gradient(const Vector& y) const override { return {2.0 * y[0]}; }

    Vector initial_state_guess(const Vector&) const override { return {0.0}; }
};

/// Negative control: the single constraint u = x1 x2 over two states makes
/// the state Jacobian 1x2, never square. A designated branch
/// x = (sign(u) sqrt|u|, sqrt|u|) keeps the fixture evaluable.
class IrregularBilinearStateProblem : public RmpcProblem {
public:
    int state_dim() const override { return 2; }
    int residual_dim() const override { return 1; }
    int control_dim() const override { return 1; }
    Box control_box() const override { return Box::uniform(1, -1.0, 1.0); }

    Vector residual(const Vector& x, const Vector& u) const override { return {x[0] * x[1] - u[0]}; }

    StateJacobian state_jacobian(const Vector& x, const Vector&) const override {
        DenseMatrix j(1, 2);
        j(0, 0) = x[1];
        j(0, 1) = x[0];
        return j;
    }

    DenseMatrix control_jacobian(const Vector&, const Vector&) const override {
        DenseMatrix b(1, 1);
        b(0, 0) = -1.0;
        return b;
    }

    Vector output(const Vector& x) const override { return {x[1]}; }

    DenseMatrix output_jacobian(const Vector&) const override {
        DenseMatrix g(1, 2);
        g(0, 1) = 1.0;
        return g;
    }

    double objective(const Vector& y) const override { return y[0] * y[0]; }
    Vector objective_gradient(const Vector& y) const override { return {2.0 * y[0]}; }

    Vector initial_state_guess(const Vector& u) const override { return *explicit_states(u); }

    std::optional<Vector> explicit_states(const Vector& u) const override {
        const double r = std::sqrt(std::abs(u[0]));
        return Vector{u[0] >= 0 ? r : -r, r};
    }
};

/// Negative control: x1 = u1 u2 makes the control Jacobian rank deficient at
/// the origin (and wherever u1 + u2 = 0, through the companion state).
class IrregularBilinearControlProblem : public RmpcProblem {
public:
    int state_dim() const override { return 2; }
    int control_dim() const override { return 2; }
    Box control_box() const override { return Box::uniform(2, -1.0, 1.0); }

    Vector residual(const Vector& x, const Vector& u) const override {
        return {x[0] - u[0] * u[1], x[1] - u[0] - u[1]};
    }

    StateJacobian state_jacobian(const Vector&, const Vector&) const override {
        return DenseMatrix::identity(2);
    }

    DenseMatrix control_jacobian(const Vector&, const Vector& u) const override {
        DenseMatrix b(2, 2);
        b(0, 0) = -u[1];
        b(0, 1) = -u[0];
        b(1, 0) = -1.0;
        b(1, 1) = -1.0;
        return b;
    }

    Vector output(const Vector& x) const override { return x; }
    DenseMatrix output_jacobian(const Vector&) const override { return DenseMatrix::identity(2); }

    double objective(const Vector& y) const override { return y[0] * y[0] + y[1] * y[1]; }
    Vector objective_gradient(const Vector& y) const override { return {2.0 * y[0], 2.0 * y[1]}; }

    Vector initial_state_guess(const Vector&) const override { return {0.0, 0.0}; }
};

inline LinearAffineProblem make_linear_affine(DenseMatrix a, DenseMatrix b, DenseMatrix c, Vector b_vec,
                                              Vector c_vec, Vector y_target, double p, Box box) {
    return LinearAffineProblem(std::move(a), std::move(b), std::move(c), std::move(b_vec), std::move(c_vec),
                               TrackingObjective{std::move(y_target), p}, std::move(box));
}

inline TrigonometricProblem make_trigonometric(double u1_lo, double u1_hi, double u2_lo, double u2_hi,
                                               Vector target, double p = 2.0) {
    return TrigonometricProblem(Box{{u1_lo, u2_lo}, {u1_hi, u2_hi}}, TrackingObjective{std::move(target), p});
}

inline BilinearCascadeProblem make_bilinear_cascade(double z0, Box box, Vector target, double p = 2.0) {
    return BilinearCascadeProblem(z0, std::move(box), TrackingObjective{std::move(target), p});
}

/// The default catalog instances. Regular fixtures are built so their optimum
/// is known by construction (target attainable at an interior control).
inline std::unique_ptr<RmpcProblem> default_linear_affine() {
    DenseMatrix a(3, 3), b(3, 2), c(2, 3);
    a(0, 0) = -2.0;  a(0, 1) = 0.3;  a(0, 2) = 0.0;
    a(1, 0) = 0.1;   a(1, 1) = -1.5; a(1, 2) = 0.2;
    a(2, 0) = 0.0;   a(2, 1) = 0.25; a(2, 2) = -1.8;
    b(0, 0) = 1.0;   b(0, 1) = 0.2;
    b(1, 0) = 0.4;   b(1, 1) = 1.1;
    b(2, 0) = -0.3;  b(2, 1) = 0.8;
    c(0, 0) = 0.9;   c(0, 1) = 0.1;  c(0, 2) = -0.2;
    c(1, 0) = 0.2;   c(1, 1) = -0.7; c(1, 2) = 1.0;
    const Vector b_vec{0.5, -0.3, 0.2};
    const Vector c_vec{0.1, -0.2};
    // target = output at u = (0.5, -0.5), so the minimum is interior with value 0
    DenseFactorization alu(a);
    Vector rhs = b.matvec({0.5, -0.5});
    for (int i = 0; i < 3; ++i) rhs[i] = -(rhs[i] + b_vec[i]);
    const Vector x = alu.solve(rhs);
    Vector target = c.matvec(x);
    for (int i = 0; i < 2; ++i) target[i] += c_vec[i];
    return std::make_unique<LinearAffineProblem>(a, b, c, b_vec, c_vec, TrackingObjective{target, 2.0},
                                                 Box::uniform(2, -2.0, 2.0));
}

inline std::unique_ptr<RmpcProblem> default_trigonometric() {
    const Vector target{1.2 * std::cos(0.8), 1.2 * std::sin(0.8)};
    return std::make_unique<TrigonometricProblem>(Box{{0.5, 0.0}, {2.0, 3.0}},
                                                  TrackingObjective{target, 2.0});
}

inline std::unique_ptr<RmpcProblem> default_bilinear_cascade() {
    const double z0 = 10.0;
    const double z1 = z0 - 2.0 / z0;        // u = (2, 3)
    const double z2 = z1 - 3.0 / z1;
    return std::make_unique<BilinearCascadeProblem>(z0, Box::uniform(2, 0.0, 5.0),
                                                    TrackingObjective{{z1, z2}, 2.0});
}

struct FixtureInfo {
    std::string name;
    bool regular;
    int expected_failing_condition; // 0 for regular fixtures
    std::function<std::unique_ptr<RmpcProblem>()> make;
};

inline const std::vector<FixtureInfo>& fixture_catalog() {
    static const std::vector<FixtureInfo> catalog = {
        {"linear_affine", true, 0, [] { return default_linear_affine(); }},
        {"trigonometric", true, 0, [] { return default_trigonometric(); }},
        {"bilinear_cascade", true, 0, [] { return default_bilinear_cascade(); }},
        {"irregular_binary", false, 6,
         [] { return std::unique_ptr<RmpcProblem>(std::make_unique<IrregularBinaryProblem>()); }},
        {"irregular_sine", false, 6,
         [] { return std::unique_ptr<RmpcProblem>(std::make_unique<IrregularSineProblem>()); }},
        {"irregular_bilinear_state", false, 3,
         [] { return std::unique_ptr<RmpcProblem>(std::make_unique<IrregularBilinearStateProblem>()); }},
        {"irregular_bilinear_control", false, 4,
         [] { return std::unique_ptr<RmpcProblem>(std::make_unique<IrregularBilinearControlProblem>()); }},
    };
    return catalog;
}

inline std::unique_ptr<RmpcProblem> make_fixture(const std::string& name) {
    for (const auto& f : fixture_catalog())
        if (f.name == name) return f.make();
    throw ConfigurationError("unknown fixture: " + name);
}

struct BruteForceResult {
    Vector u_best;
    double f_best = 0.0;
    long evaluated = 0;
    long failed = 0;
};

/// Exhaustive reduced-objective evaluation on a uniform grid over the box
/// (corners included). Small problems only; the oracle for global-optimality
/// claims. Ties resolve to the lowest linear grid index.
inline BruteForceResult brute_force_global(const RmpcProblem& p, int grid_per_dim) {
    const int n = p.control_dim();
    if (n > 3) throw InvalidArgumentError("brute_force_global: more than 3 controls");
    if (grid_per_dim < 2) throw InvalidArgumentError("brute_force_global: need at least 2 points per dim");
    const Box box = p.control_box();
    BruteForceResult best;
    best.f_best = std::numeric_limits<double>::infinity();
    std::vector<int> idx(n, 0);
    Vector u(n);
    Evaluator eval(p);
    while (true) {
        for (int i = 0; i < n; ++i)
            u[i] = box.lower[i] + (box.upper[i] - box.lower[i]) * idx[i] / (grid_per_dim - 1);
        try {
            const double f = eval.objective(u);
            ++best.evaluated;
            if (f < best.f_best) {
                best.f_best = f;
                best.u_best = u;
            }
        } catch (const Error&) {
            ++best.failed;
        }
        int d = n - 1;
        while (d >= 0 && ++idx[d] == grid_per_dim) idx[d--] = 0;
        if (d < 0) break;
    }
    if (best.u_best.empty()) throw NoConvergenceError("brute_force_global: every grid point failed");
    return best;
}

} // namespace rmpc::fixtures
