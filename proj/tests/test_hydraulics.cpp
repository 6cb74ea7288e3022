#include <catch2/catch_amalgamated.hpp>

#include "rmpc/hydraulics.hpp"
#include "rmpc/sampling.hpp"

using namespace rmpc;

namespace {

// Reference pulse used throughout: base 100, peak 260, ramps over steps
// (8, 16] and (52, 60].
Vector pulse_series(int horizon) {
    Vector q(horizon, 100.0);
    for (int j = 1; j <= horizon; ++j) {
        double v = 100.0;
        if (j > 8 && j <= 16)
            v = 100.0 + 160.0 * (j - 8) / 8.0;
        else if (j > 16 && j <= 52)
            v = 260.0;
        else if (j > 52 && j <= 60)
            v = 260.0 - 160.0 * (j - 52) / 8.0;
        q[j - 1] = v;
    }
    return q;
}

// Steady backwater profile computed with an independent dense implementation
// of the same discretisation (frozen reference values).
const Vector kSteadyProfile{0.007735524169342,  -0.017593703661281, -0.042974313144926,
                            -0.068401864872216, -0.093877169998565, -0.11940106678667,
                            -0.144974412154406, -0.170598082199833, -0.196272972761561,
                            -0.222};

const Vector kStepRise200{0.303309827274745, 0.206695839104625,  0.127657353698732,
                          0.061994586148519, 0.006551906908678,  -0.041022774887527,
                          -0.08246124086367, -0.119009848449283, -0.151526502890087,
                          -0.180547207454849};

double total_boundary_volume(const HydraulicTrajectory& traj, double dt) {
    double v = 0.0;
    for (std::size_t t = 0; t < traj.inflow.size(); ++t) v += dt * (traj.inflow[t] - traj.control[t]);
    return v;
}

} // namespace

TEST_CASE("cross section and hydraulic radius") {
    CHECK(cross_section_area(0.0, -4.90, 50.0) == Catch::Approx(245.0).margin(1e-12));
    CHECK(cross_section_area(-3.9, -4.90, 50.0) == Catch::Approx(50.0).margin(1e-12));
    CHECK(hydraulic_radius(0.0, -4.90, 50.0) == Catch::Approx(245.0 / 59.8).margin(1e-12));
    CHECK_THROWS_AS(cross_section_area(-4.90, -4.90, 50.0), DryBedError);
    SECTION("radius limits") {
        CHECK(hydraulic_radius(-4.90 + 1e-9, -4.90, 50.0) <= 1e-8); // shallow limit
        const double d = 2.0;
        CHECK(hydraulic_radius(d, 0.0, 1e9) == Catch::Approx(d).epsilon(1e-8)); // wide-channel limit
    }
}

TEST_CASE("steady state reproduces the reference backwater profile") {
    const ChannelModel m = ChannelModel::reference();
    const HydraulicState s = steady_state(m, 100.0, -0.222);
    REQUIRE(static_cast<int>(s.H.size()) == 10);
    for (int i = 0; i < 10; ++i) CHECK(s.H[i] == Catch::Approx(kSteadyProfile[i]).margin(1e-7));
    // upstream level comes out at about 0.000 m with per-node drops near 0.025 m
    CHECK(std::abs(s.H.front()) <= 0.01);
    for (int i = 1; i < 10; ++i) {
        const double drop = s.H[i - 1] - s.H[i];
        CHECK(drop > 0.02);
        CHECK(drop < 0.03);
    }
    SECTION("vanishing friction flattens the surface") {
        ChannelModel frictionless = m;
        frictionless.chezy.assign(10, 1e8);
        const HydraulicState flat = steady_state(frictionless, 100.0, -0.222);
        CHECK(std::abs(flat.H.front() - flat.H.back()) <= 1e-6);
    }
    SECTION("doubling the Chezy coefficient shrinks the drawdown") {
        ChannelModel smooth = m;
        smooth.chezy.assign(10, 80.0);
        const HydraulicState s2 = steady_state(smooth, 100.0, -0.222);
        const double drawdown1 = s.H.front() - s.H.back();
        const double drawdown2 = s2.H.front() - s2.H.back();
        CHECK(drawdown2 < 0.6 * drawdown1);
        CHECK(drawdown2 == Catch::Approx(drawdown1 / 4.0).epsilon(0.1)); // friction slope ~ 1/C^2
    }
    SECTION("invalid discharge is rejected") {
        CHECK_THROWS_AS(steady_state(m, 0.0, -0.222), InvalidArgumentError);
    }
}

TEST_CASE("step is a fixed point at steady state") {
    const ChannelModel m = ChannelModel::reference();
    const HydraulicState s = steady_state(m, 100.0, -0.222);
    const HydraulicState next = step(m, s, 100.0, 100.0);
    for (int i = 0; i < 10; ++i) CHECK(next.H[i] == Catch::Approx(s.H[i]).margin(1e-9));
    for (int k = 0; k <= 10; ++k) CHECK(next.Q[k] == Catch::Approx(100.0).margin(1e-9));
}

TEST_CASE("one step of surplus inflow raises the mean level by the stored volume") {
    const ChannelModel m = ChannelModel::reference();
    const HydraulicState s = steady_state(m, 100.0, -0.222);
    const HydraulicState next = step(m, s, 200.0, 100.0);
    double rise = 0.0;
    for (int i = 0; i < 10; ++i) rise += (next.H[i] - s.H[i]) / 10.0;
    CHECK(rise == Catch::Approx(100.0 * m.dt / (m.length * m.width)).margin(1e-9));
    for (int i = 0; i < 10; ++i) CHECK(next.H[i] == Catch::Approx(kStepRise200[i]).margin(1e-7));
}

TEST_CASE("step input validation") {
    const ChannelModel m = ChannelModel::reference();
    const HydraulicState s = steady_state(m, 100.0, -0.222);
    CHECK_THROWS_AS(step(m, s, -5.0, 100.0), InvalidArgumentError);
    HydraulicState dry = s;
    dry.H.front() = m.bottom_levels.front(); // zero depth at the upstream face
    CHECK_THROWS_AS(step(m, dry, 100.0, 100.0), DryBedError);
}

TEST_CASE("simulation invariants") {
    const ChannelModel m = ChannelModel::reference();
    const InflowSeries inflow{pulse_series(m.horizon)};

    SECTION("constant 100/100 keeps the gate level constant") {
        const InflowSeries flat{Vector(m.horizon, 100.0)};
        const HydraulicTrajectory traj = simulate(m, flat, Vector(m.horizon, 100.0));
        for (const auto& s : traj.states)
            CHECK(s.H.back() == Catch::Approx(traj.states.front().H.back()).margin(1e-9));
    }
    SECTION("empty horizon yields only the initial state") {
        ChannelModel m0 = m;
        m0.horizon = 0;
        const HydraulicTrajectory traj = simulate(m0, InflowSeries{Vector{}}, Vector{});
        CHECK(traj.states.size() == 1);
    }
    SECTION("pass-through control returns the storage to its initial value") {
        const HydraulicTrajectory traj = simulate(m, inflow, inflow.values);
        const double s0 = channel_storage(m, traj.states.front());
        const double sT = channel_storage(m, traj.states.back());
        CHECK(std::abs(sT - s0) <= 1e-8 * s0);
    }
    SECTION("discrete mass balance holds for sampled controls") {
        for (const Vector& u : latin_hypercube(6, Box::uniform(m.horizon, 100.0, 200.0), 2024)) {
            const HydraulicTrajectory traj = simulate(m, inflow, u);
            const double s0 = channel_storage(m, traj.states.front());
            const double sT = channel_storage(m, traj.states.back());
            const double boundary = total_boundary_volume(traj, m.dt);
            CHECK(std::abs(sT - s0 - boundary) <= 1e-8 * std::max(s0, std::abs(boundary)));
        }
    }
    SECTION("positivity holds across the whole control box") {
        for (const Vector u : {Vector(m.horizon, 100.0), Vector(m.horizon, 200.0)}) {
            const HydraulicTrajectory traj = simulate(m, inflow, u); // throws on dry bed / reversal
            for (const auto& s : traj.states) {
                for (int i = 0; i < 10; ++i) CHECK(s.H[i] > m.bottom_levels[i]);
                for (int k = 0; k <= 10; ++k) CHECK(s.Q[k] > 0.0);
            }
        }
    }
}

TEST_CASE("tracking objective") {
    SECTION("zero deviation gives zero") {
        HydraulicTrajectory traj;
        for (int t = 0; t <= 5; ++t) traj.states.push_back({Vector(10, 0.0), Vector(11, 100.0)});
        CHECK(tracking_objective(traj, 0.0, 2.0) == 0.0);
    }
    SECTION("constant deviation of 0.1 over 72 steps sums to 0.72") {
        HydraulicTrajectory traj;
        traj.states.push_back({Vector(10, 0.0), Vector(11, 100.0)}); // initial state excluded
        for (int t = 1; t <= 72; ++t) traj.states.push_back({Vector(10, 0.1), Vector(11, 100.0)});
        CHECK(tracking_objective(traj, 0.0, 2.0) == Catch::Approx(0.72).margin(1e-12));
    }
    SECTION("exponent below 2 is rejected") {
        HydraulicTrajectory traj;
        traj.states.push_back({Vector(10, 0.0), Vector(11, 100.0)});
        CHECK_THROWS_AS(tracking_objective(traj, 0.0, 1.0), InvalidArgumentError);
    }
}

TEST_CASE("constant-release objectives match the reference values") {
    const ChannelModel m = ChannelModel::reference();
    const InflowSeries inflow{pulse_series(m.horizon)};
    auto value = [&](double q) {
        return tracking_objective(simulate(m, inflow, Vector(m.horizon, q)), 0.0, 2.0);
    };
    CHECK(value(100.0) == Catch::Approx(2168.262610647257).epsilon(1e-9));
    CHECK(value(150.0) == Catch::Approx(646.4440119389867).epsilon(1e-9));
    CHECK(value(200.0) == Catch::Approx(122.81499675355654).epsilon(1e-9));
}

TEST_CASE("assembled reduced-space problem") {
    const ChannelModel m = ChannelModel::reference();
    const InflowSeries inflow{pulse_series(m.horizon)};
    const HydraulicProblem p = assemble_rmpc(m, inflow);

    SECTION("dimensions: 19 states per step, 72 controls") {
        CHECK(p.states_per_step() == 19);
        CHECK(p.state_dim() == 1368);
        CHECK(p.control_dim() == 72);
    }
    SECTION("output rows are distinct unit selectors") {
        const DenseMatrix gx = p.output_jacobian(Vector(p.state_dim(), 0.0));
        for (int t = 0; t < 72; ++t) {
            int nonzeros = 0;
            for (int j = 0; j < p.state_dim(); ++j)
                if (gx(t, j) != 0.0) ++nonzeros;
            CHECK(nonzeros == 1);
            CHECK(gx(t, p.level_index(t, 9)) == 1.0);
        }
    }
    SECTION("stacked residual vanishes along a simulated trajectory") {
        const Vector u(m.horizon, 130.0);
        const Vector x = p.pack(simulate(m, p.initial_state(), inflow, u));
        CHECK(norm_inf(p.residual(x, u)) <= 1e-9);
    }
    SECTION("reduced gradient matches the reference adjoint values at u = 150") {
        const Vector g = reduced_gradient(p, Vector(m.horizon, 150.0));
        CHECK(g[0] == Catch::Approx(-0.365972405875301).epsilon(1e-6));
        CHECK(g[10] == Catch::Approx(-0.380207270255914).epsilon(1e-6));
        CHECK(g[35] == Catch::Approx(-0.364751206715661).epsilon(1e-6));
        CHECK(g[71] == Catch::Approx(-0.017377777365006).epsilon(1e-6));
    }
    SECTION("adjoint gradient matches finite differences") {
        std::vector<Vector> controls{Vector(m.horizon, 150.0)};
        for (auto& u : latin_hypercube(2, Box::uniform(m.horizon, 110.0, 190.0), 7))
            controls.push_back(std::move(u));
        for (const Vector& u : controls) {
            const Vector adj = reduced_gradient(p, u);
            const Vector fd = finite_difference_gradient(p, u, 1e-4);
            double num = 0.0, den = 0.0;
            for (int i = 0; i < 72; ++i) {
                num = std::max(num, std::abs(adj[i] - fd[i]));
                den = std::max(den, std::abs(fd[i]));
            }
            CHECK(num <= 1e-5 * den);
        }
    }
    SECTION("stacked state Jacobian factorizes at sampled controls") {
        for (const Vector& u : latin_hypercube(20, p.control_box(), 99)) {
            const Vector x = solve_states(p, u).x;
            StateJacobianFactor f(p.state_jacobian(x, u));
            CHECK(f.min_pivot() > 0.0);
        }
    }
    SECTION("one-step problem: gradient matches finite differences") {
        ChannelModel m1 = m;
        m1.horizon = 1;
        const HydraulicProblem p1 = assemble_rmpc(m1, InflowSeries{Vector{100.0}});
        CHECK(p1.state_dim() == 19);
        const Vector u{150.0};
        const Vector adj = reduced_gradient(p1, u);
        const Vector fd = finite_difference_gradient(p1, u, 1e-4);
        CHECK(adj[0] == Catch::Approx(fd[0]).epsilon(1e-5));
    }
    SECTION("dimension mismatches are rejected") {
        CHECK_THROWS_AS(assemble_rmpc(m, InflowSeries{Vector(10, 100.0)}), ConfigurationError);
        CHECK_THROWS_AS(assemble_rmpc(m, inflow, 200.0, 100.0), ConfigurationError);
    }
}
