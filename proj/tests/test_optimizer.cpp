#include <catch2/catch_amalgamated.hpp>

#include "rmpc/fixtures.hpp"
#include "rmpc/optimizer.hpp"

using namespace rmpc;
using namespace rmpc::fixtures;

namespace {

/// Reduced objective f(T(u)) = u over [0, 1]: states x = u, linear f.
/// The minimum sits at the lower bound with multiplier 1.
class LinearObjectiveProblem : public RmpcProblem {
public:
    int state_dim() const override { return 1; }
    int control_dim() const override { return 1; }
    Box control_box() const override { return Box::uniform(1, 0.0, 1.0); }
    Vector residual(const Vector& x, const Vector& u) const override { return {x[0] - u[0]}; }
    StateJacobian state_jacobian(const Vector&, const Vector&) const override {
        return DenseMatrix::identity(1);
    }
    DenseMatrix control_jacobian(const Vector&, const Vector&) const override {
        DenseMatrix b(1, 1);
        b(0, 0) = -1.0;
        return b;
    }
    Vector output(const Vector& x) const override { return x; }
    DenseMatrix output_jacobian(const Vector&) const override { return DenseMatrix::identity(1); }
    double objective(const Vector& y) const override { return y[0]; }
    Vector objective_gradient(const Vector&) const override { return {1.0}; }
    Vector initial_state_guess(const Vector&) const override { return {0.0}; }
};

std::unique_ptr<RmpcProblem> scalar_quadratic(double target, double lo, double hi) {
    DenseMatrix a(1, 1), b(1, 1), c(1, 1);
    a(0, 0) = -1.0;
    b(0, 0) = 1.0;
    c(0, 0) = 1.0;
    return std::make_unique<LinearAffineProblem>(a, b, c, Vector{0.0}, Vector{0.0},
                                                 TrackingObjective{{target}, 2.0}, Box{{lo}, {hi}});
}

std::unique_ptr<RmpcProblem> identity_chain(Vector target, Box box) {
    DenseMatrix a = DenseMatrix::identity(2);
    a(0, 0) = a(1, 1) = -1.0;
    return std::make_unique<LinearAffineProblem>(a, DenseMatrix::identity(2), DenseMatrix::identity(2),
                                                 Vector{0.0, 0.0}, Vector{0.0, 0.0},
                                                 TrackingObjective{std::move(target), 2.0}, std::move(box));
}

} // namespace

TEST_CASE("projection clamps componentwise") {
    const Box box = Box::uniform(3, 100.0, 200.0);
    CHECK(project({150.0, 120.0, 180.0}, box) == Vector{150.0, 120.0, 180.0});
    CHECK(project({250.0, 50.0, 150.0}, box) == Vector{200.0, 100.0, 150.0});
    CHECK(project({100.0, 200.0, 100.0}, box) == Vector{100.0, 200.0, 100.0});
}

TEST_CASE("interior quadratic minimum (u - 0.5)^2 on [0, 1]") {
    auto p = scalar_quadratic(0.5, 0.0, 1.0);
    const OptimizationResult r = minimize(*p, {0.9});
    CHECK(r.converged);
    CHECK(r.u_star[0] == Catch::Approx(0.5).margin(1e-9));
    CHECK(r.f_star <= 1e-16);
    CHECK(r.active_set.empty());
    CHECK(norm_inf(r.multipliers_lower) == 0.0);
    CHECK(norm_inf(r.multipliers_upper) == 0.0);
}

TEST_CASE("linear objective activates the lower bound with multiplier 1") {
    LinearObjectiveProblem p;
    const OptimizationResult r = minimize(p, {0.7});
    CHECK(r.converged);
    CHECK(r.u_star[0] == 0.0);
    REQUIRE(r.active_set.size() == 1);
    CHECK(r.active_set[0].index == 0);
    CHECK(r.active_set[0].side == BoundSide::Lower);
    CHECK(r.multipliers_lower[0] == Catch::Approx(1.0).margin(1e-12));
    CHECK(r.kkt_residual <= 1e-12);
}

TEST_CASE("separable quadratic with a clamped coordinate") {
    // unconstrained minimiser (1.5, 0.5); box clamps the first coordinate
    auto p = identity_chain({1.5, 0.5}, Box::uniform(2, -1.0, 1.0));
    const OptimizationResult r = minimize(*p, {-0.9, -0.9});
    CHECK(r.converged);
    CHECK(r.u_star[0] == 1.0);
    CHECK(r.u_star[1] == Catch::Approx(0.5).margin(1e-9));
    REQUIRE(r.active_set.size() == 1);
    CHECK(r.active_set[0].side == BoundSide::Upper);
    // gradient at the solution is 2(1 - 1.5) = -1, so the upper multiplier is 1
    CHECK(r.multipliers_upper[0] == Catch::Approx(1.0).margin(1e-9));
    CHECK(r.f_star == Catch::Approx(0.25).margin(1e-12));
}

TEST_CASE("optimizer invariants on the bilinear cascade") {
    auto p = default_bilinear_cascade();
    const OptimizationResult r = minimize(*p, {5.0, 0.0});
    CHECK(r.converged);
    CHECK(r.kkt_residual <= 1e-8);
    CHECK(r.u_star[0] == Catch::Approx(2.0).margin(1e-6));
    CHECK(r.u_star[1] == Catch::Approx(3.0).margin(1e-6));

    SECTION("accepted objectives never increase") {
        for (std::size_t i = 1; i < r.objective_history.size(); ++i)
            CHECK(r.objective_history[i] <= r.objective_history[i - 1] + 1e-15);
    }
    SECTION("iterates stay exactly inside the box") {
        const Box box = p->control_box();
        CHECK(box.contains(r.u_star, 0.0));
    }
    SECTION("complementarity at the returned point") {
        const Box box = p->control_box();
        for (int i = 0; i < 2; ++i) {
            CHECK(r.multipliers_lower[i] * (r.u_star[i] - box.lower[i]) <= 1e-8);
            CHECK(r.multipliers_upper[i] * (box.upper[i] - r.u_star[i]) <= 1e-8);
        }
    }
}

TEST_CASE("kkt_residual reports the right quantities") {
    SECTION("interior stationary point") {
        auto p = scalar_quadratic(0.5, 0.0, 1.0);
        const KktPoint k = kkt_residual(*p, {0.5});
        CHECK(k.residual <= 1e-14);
        CHECK(k.active_set.empty());
        CHECK(norm_inf(k.multipliers_lower) == 0.0);
    }
    SECTION("active lower bound on the linear objective") {
        LinearObjectiveProblem p;
        const KktPoint k = kkt_residual(p, {0.0});
        CHECK(k.residual == 0.0);
        CHECK(k.multipliers_lower[0] == 1.0);
    }
    SECTION("non-stationary interior point reports the gradient norm") {
        auto p = scalar_quadratic(0.5, 0.0, 1.0);
        const KktPoint k = kkt_residual(*p, {0.8});
        CHECK(k.residual == Catch::Approx(2.0 * 0.3).margin(1e-12));
    }
    SECTION("points outside the box are rejected") {
        auto p = scalar_quadratic(0.5, 0.0, 1.0);
        CHECK_THROWS_AS(kkt_residual(*p, {1.5}), InvalidArgumentError);
    }
}

TEST_CASE("iteration cap returns the best iterate with a flag") {
    auto p = default_bilinear_cascade();
    OptimizerConfig cfg;
    cfg.max_iterations = 1;
    cfg.polish = false;
    const OptimizationResult r = minimize(*p, {5.0, 0.0}, cfg);
    CHECK_FALSE(r.converged);
    CHECK(r.message == "iteration limit reached; returning best iterate");
    CHECK(p->control_box().contains(r.u_star, 0.0));
}

TEST_CASE("start point outside the box is projected first") {
    auto p = scalar_quadratic(0.5, 0.0, 1.0);
    const OptimizationResult r = minimize(*p, {25.0});
    CHECK(r.converged);
    CHECK(r.u_star[0] == Catch::Approx(0.5).margin(1e-9));
}
