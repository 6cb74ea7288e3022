#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "rmpc/fixtures.hpp"
#include "rmpc/harness.hpp"

using namespace rmpc;
using namespace rmpc::fixtures;
namespace fs = std::filesystem;

namespace {

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    REQUIRE(in);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::unique_ptr<RmpcProblem> identity_chain(Vector target, Box box) {
    DenseMatrix a = DenseMatrix::identity(2);
    a(0, 0) = a(1, 1) = -1.0;
    return std::make_unique<LinearAffineProblem>(a, DenseMatrix::identity(2), DenseMatrix::identity(2),
                                                 Vector{0.0, 0.0}, Vector{0.0, 0.0},
                                                 TrackingObjective{std::move(target), 2.0}, std::move(box));
}

} // namespace

TEST_CASE("latin hypercube sampling") {
    SECTION("single sample lands in the box") {
        const auto s = latin_hypercube(1, Box::uniform(2, 0.0, 1.0), 42);
        REQUIRE(s.size() == 1);
        CHECK(Box::uniform(2, 0.0, 1.0).contains(s[0]));
    }
    SECTION("four samples occupy the four quartiles") {
        const auto s = latin_hypercube(4, Box::uniform(1, 0.0, 1.0), 42);
        std::vector<int> counts(4, 0);
        for (const auto& p : s) {
            const int stratum = std::min(3, static_cast<int>(p[0] * 4.0));
            ++counts[stratum];
        }
        for (int c : counts) CHECK(c == 1);
    }
    SECTION("identical seeds give identical samples") {
        const auto a = latin_hypercube(16, Box::uniform(3, -2.0, 5.0), 7);
        const auto b = latin_hypercube(16, Box::uniform(3, -2.0, 5.0), 7);
        CHECK(a == b);
        const auto c = latin_hypercube(16, Box::uniform(3, -2.0, 5.0), 8);
        CHECK(a != c);
    }
    SECTION("stratification property holds for random sizes and seeds") {
        std::mt19937_64 rng(99);
        for (int trial = 0; trial < 20; ++trial) {
            const int n = 2 + static_cast<int>(rng() % 40);
            const unsigned long seed = rng();
            const Box box{{-1.0, 3.0}, {2.0, 9.0}};
            const auto s = latin_hypercube(n, box, seed);
            for (int j = 0; j < 2; ++j) {
                std::vector<int> counts(n, 0);
                for (const auto& p : s) {
                    const double rel = (p[j] - box.lower[j]) / (box.upper[j] - box.lower[j]);
                    ++counts[std::min(n - 1, static_cast<int>(rel * n))];
                }
                for (int c : counts) CHECK(c == 1);
            }
        }
    }
    SECTION("invalid inputs") {
        CHECK_THROWS_AS(latin_hypercube(0, Box::uniform(1, 0.0, 1.0), 1), InvalidArgumentError);
        CHECK_THROWS_AS(latin_hypercube(4, Box{{1.0}, {0.0}}, 1), ConfigurationError);
    }
}

TEST_CASE("multistart dispersion") {
    SECTION("strictly convex quadratic collapses to one point") {
        auto p = identity_chain({0.3, -0.2}, Box::uniform(2, -1.0, 1.0));
        const MultistartSummary s = multistart(*p, 20, 123);
        CHECK(s.converged == 20);
        CHECK(s.failed == 0);
        CHECK(s.max_coordinate_std <= 1e-10);
        CHECK(s.objective_spread <= 1e-12);
        CHECK(s.u_best[0] == Catch::Approx(0.3).margin(1e-8));
    }
    SECTION("bilinear cascade: fifty starts agree") {
        auto p = default_bilinear_cascade();
        const MultistartSummary s = multistart(*p, 50, 321);
        CHECK(s.converged == 50);
        CHECK(s.objective_spread <= 1e-8);
        CHECK(s.max_coordinate_std <= 1e-6);
    }
    SECTION("summary is deterministic for a fixed seed") {
        auto p = default_bilinear_cascade();
        const MultistartSummary a = multistart(*p, 12, 55);
        const MultistartSummary b = multistart(*p, 12, 55);
        CHECK(a.u_best == b.u_best);
        CHECK(a.max_coordinate_std == b.max_coordinate_std);
        CHECK(a.objective_spread == b.objective_spread);
    }
    SECTION("needs at least two starts") {
        auto p = default_bilinear_cascade();
        CHECK_THROWS_AS(multistart(*p, 1, 1), InvalidArgumentError);
    }
}

TEST_CASE("trajectory CSV") {
    const ChannelModel m = ChannelModel::reference();
    const InflowSeries flat{Vector(m.horizon, 100.0)};
    const HydraulicTrajectory traj = simulate(m, flat, Vector(m.horizon, 100.0));
    const fs::path dir = fs::temp_directory_path() / "rmpc_csv_test";
    fs::create_directories(dir);
    const std::string path = (dir / "steady.csv").string();
    emit_csv(traj, path, m.dt);

    const std::string text = slurp(path);
    std::istringstream lines(text);
    std::string header;
    std::getline(lines, header);
    CHECK(header ==
          "step,time_s,Q_in,Q_out,H_1,H_2,H_3,H_4,H_5,H_6,H_7,H_8,H_9,H_10,Q_1,Q_2,Q_3,Q_4,Q_5,Q_6,Q_7,Q_8,Q_9");
    int rows = 0;
    std::string line;
    std::string first_levels;
    while (std::getline(lines, line)) {
        ++rows;
        // steady run: every level column repeats the initial profile
        const std::size_t h_start = line.find(',', line.find(',', line.find(',') + 1) + 1);
        const std::string tail = line.substr(h_start);
        if (first_levels.empty())
            first_levels = tail;
        else
            CHECK(tail == first_levels);
    }
    CHECK(rows == m.horizon + 1);

    SECTION("byte-identical on rewrite") {
        const std::string path2 = (dir / "steady2.csv").string();
        emit_csv(traj, path2, m.dt);
        CHECK(slurp(path2) == text);
    }
}

TEST_CASE("experiment configuration") {
    SECTION("defaults embed the reference setup") {
        const ExperimentConfig cfg = ExperimentConfig::paper_defaults();
        CHECK(cfg.channel.n_nodes == 10);
        CHECK(cfg.channel.horizon == 72);
        CHECK(cfg.channel.dt == 600.0);
        CHECK(cfg.release_lower == 100.0);
        CHECK(cfg.release_upper == 200.0);
        CHECK(cfg.channel.bottom_levels.front() == Catch::Approx(-4.90));
        CHECK(cfg.channel.bottom_levels.back() == Catch::Approx(-5.10));
        const Vector q = cfg.inflow().values;
        CHECK(q.front() == 100.0);
        CHECK(*std::max_element(q.begin(), q.end()) == 260.0);
    }
    SECTION("overrides merge over the defaults") {
        const json j{{"defaults", "paper"},
                     {"channel", json{{"horizon", 24}, {"chezy", 45.0}}},
                     {"bounds", json{{"upper", 180.0}}},
                     {"multistart", json{{"starts", 7}}}};
        const ExperimentConfig cfg = config_from_json(j);
        CHECK(cfg.channel.horizon == 24);
        CHECK(cfg.channel.chezy == Vector(10, 45.0));
        CHECK(cfg.release_upper == 180.0);
        CHECK(cfg.release_lower == 100.0);
        CHECK(cfg.multistart.starts == 7);
        CHECK(static_cast<int>(cfg.inflow().values.size()) == 24);
    }
    SECTION("round trip through JSON") {
        ExperimentConfig cfg = ExperimentConfig::paper_defaults();
        cfg.release_upper = 190.0;
        cfg.multistart.seed = 777;
        const ExperimentConfig back = config_from_json(config_to_json(cfg));
        CHECK(back.release_upper == 190.0);
        CHECK(back.multistart.seed == 777);
        CHECK(back.channel.bottom_levels == cfg.channel.bottom_levels);
    }
    SECTION("unknown preset is rejected") {
        CHECK_THROWS_AS(config_from_json(json{{"defaults", "other"}}), ConfigurationError);
    }
    SECTION("explicit inflow length must match the horizon") {
        json j{{"inflow", json{{"values", Vector(10, 100.0)}}}};
        const ExperimentConfig cfg = config_from_json(j);
        CHECK_THROWS_AS(cfg.inflow(), ConfigurationError);
    }
}

TEST_CASE("scaled-down experiment run produces deterministic artifacts") {
    ExperimentConfig cfg = ExperimentConfig::paper_defaults();
    cfg.channel.horizon = 36;
    cfg.pulse.ramp_down_start = 24;
    cfg.pulse.ramp_down_end = 30;
    cfg.multistart.starts = 3;
    cfg.multistart.threads = 1;

    const fs::path base = fs::temp_directory_path() / "rmpc_repro_test";
    fs::remove_all(base);
    std::ostringstream log1, log2;
    cfg.output_dir = (base / "run1").string();
    const ReproduceOutcome a = run_reproduce_paper(cfg, log1);
    cfg.output_dir = (base / "run2").string();
    const ReproduceOutcome b = run_reproduce_paper(cfg, log2);

    CHECK(a.result.f_star == b.result.f_star);
    for (const char* name : {"trajectory.csv", "certificate.json", "summary.json"}) {
        CHECK(slurp((base / "run1" / name).string()) == slurp((base / "run2" / name).string()));
    }
    CHECK(a.result.kkt_residual <= 1e-6);
    CHECK(a.result.f_star < a.f_lower_hold);
    CHECK(a.result.f_star < a.f_upper_hold);
}
