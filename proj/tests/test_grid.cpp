#include <doctest.h>

#include <fstream>
#include <random>
#include <sstream>

#include "mgsim/grid.hpp"

using namespace mgsim;

namespace {

const std::string kDataDir = MGSIM_DATA_DIR;

const char* kTwoBus = R"(baseMVA 100
bus
1 3 0
2 1 50
branch
1 2 0.1 100
)";

// Equal-reactance ring 1-2-3 with the market at bus 1.
const char* kRing = R"(baseMVA 100
bus
1 3 0
2 1 10
3 1 10
branch
1 2 0.2 500
2 3 0.2 500
3 1 0.2 500
)";

GridCase load_case(const std::string& name) {
    return load_grid_case(kDataDir + "/grids/" + name);
}

}  // namespace

TEST_CASE("parse_case: case9 sizes and loads") {
    const GridCase g = load_case("case9.case");
    CHECK(g.bus_count() == 9);
    CHECK(g.line_count() == 9);
    CHECK(g.microgrid_count() == 3);
    CHECK(g.total_load_kw() == doctest::Approx(315.0));
    CHECK(g.buses[g.market_bus].id == 1);
}

TEST_CASE("parse_case: minimal two-bus case") {
    const GridCase g = parse_case(kTwoBus);
    CHECK(g.bus_count() == 2);
    CHECK(g.line_count() == 1);
    CHECK(g.lines[0].reactance_pu == doctest::Approx(0.1));
}

TEST_CASE("parse_case: caseNW sizes") {
    const GridCase g = load_case("casenw.case");
    CHECK(g.bus_count() == 124);
    CHECK(g.line_count() == 123);
    CHECK(g.microgrid_count() == 54);
}

TEST_CASE("parse_case: error paths") {
    CHECK_THROWS_AS(parse_case("baseMVA 100\nbus\n1 3 0\n2 1 5\nbranch\n1 2 -0.1 10\n"), ParseError);
    CHECK_THROWS_AS(parse_case("baseMVA 100\nbus\n1 1 5\nbranch\n"), ParseError);  // no market bus
    CHECK_THROWS_AS(parse_case("baseMVA 100\nbus\n1 3 0\n2 1 5\n3 1 5\nbranch\n1 2 0.1 10\n"),
                    ParseError);  // disconnected
    CHECK_THROWS_AS(parse_case("baseMVA 100\nbus\n1 3 zero\nbranch\n"), ParseError);
}

TEST_CASE("matpower conversion agrees with the shipped native files") {
    for (const std::string name : {"case9", "case14", "case57"}) {
        std::ifstream in(kDataDir + "/matpower/" + name + ".m");
        REQUIRE(in);
        std::ostringstream buf;
        buf << in.rdbuf();
        const GridCase converted = parse_matpower(buf.str());
        const GridCase native = load_case(name + ".case");
        CHECK(write_case_file(converted) == write_case_file(native));
    }
}

TEST_CASE("matpower conversion: case57 keeps parallel lines and demotes generator buses") {
    const GridCase g = load_case("case57.case");
    CHECK(g.bus_count() == 57);
    CHECK(g.line_count() == 80);
    CHECK(g.microgrid_count() == 41);
    int parallel = 0;
    for (const auto& l : g.lines)
        if ((g.buses[l.from].id == 4 && g.buses[l.to].id == 18) ||
            (g.buses[l.from].id == 24 && g.buses[l.to].id == 25))
            ++parallel;
    CHECK(parallel == 4);
}

TEST_CASE("dc power flow: two-bus line carries the transfer") {
    const GridCase g = parse_case(kTwoBus);
    Eigen::VectorXd inj(2);
    inj << 10.0, -10.0;
    const DcSolution sol = solve_dc_power_flow(g, inj);
    CHECK(sol.flows_kw(0) == doctest::Approx(10.0));
    CHECK(sol.angles(0) - sol.angles(1) == doctest::Approx(10.0 * 0.1));
}

TEST_CASE("dc power flow: zero injections give zero flows and angles") {
    const GridCase g = load_case("case9.case");
    const DcSolution sol = solve_dc_power_flow(g, Eigen::VectorXd::Zero(9));
    CHECK(sol.flows_kw.cwiseAbs().maxCoeff() == doctest::Approx(0.0));
    CHECK(sol.angles.cwiseAbs().maxCoeff() == doctest::Approx(0.0));
}

TEST_CASE("dc power flow: equal-reactance ring splits 2:1") {
    const GridCase g = parse_case(kRing);
    // +9 kW at bus 1 (index 0), -9 kW at bus 2 (index 1): the direct line
    // carries 6, the two-hop path carries 3.
    Eigen::VectorXd inj(3);
    inj << 9.0, -9.0, 0.0;
    const DcSolution sol = solve_dc_power_flow(g, inj);
    CHECK(sol.flows_kw(0) == doctest::Approx(6.0));   // 1->2
    CHECK(sol.flows_kw(1) == doctest::Approx(-3.0));  // 2->3 carries 3 toward 2
    CHECK(sol.flows_kw(2) == doctest::Approx(-3.0));  // 3->1 reversed
}

TEST_CASE("dc power flow: unbalanced injections are rejected") {
    const GridCase g = parse_case(kTwoBus);
    Eigen::VectorXd inj(2);
    inj << 10.0, -9.0;
    CHECK_THROWS_AS(solve_dc_power_flow(g, inj), Error);
}

TEST_CASE("dc power flow: nodal balance at every bus") {
    const GridCase g = load_case("case14.case");
    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> uni(-40.0, 40.0);
    Eigen::VectorXd inj = Eigen::VectorXd::Zero(g.bus_count());
    for (int b = 0; b < g.bus_count(); ++b)
        if (b != g.market_bus) inj(b) = uni(rng);
    inj(g.market_bus) = -inj.sum();

    const DcSolution sol = solve_dc_power_flow(g, inj);
    Eigen::VectorXd net = inj;
    for (int l = 0; l < g.line_count(); ++l) {
        net(g.lines[l].from) -= sol.flows_kw(l);
        net(g.lines[l].to) += sol.flows_kw(l);
    }
    CHECK(net.cwiseAbs().maxCoeff() < 1e-9);
}

TEST_CASE("dc power flow: superposition") {
    const GridCase g = load_case("case57.case");
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> uni(-25.0, 25.0);
    auto random_injection = [&]() {
        Eigen::VectorXd inj = Eigen::VectorXd::Zero(g.bus_count());
        for (int b = 0; b < g.bus_count(); ++b)
            if (b != g.market_bus) inj(b) = uni(rng);
        inj(g.market_bus) = -inj.sum();
        return inj;
    };
    const DcSolver solver(g);
    const Eigen::VectorXd a = random_injection();
    const Eigen::VectorXd b = random_injection();
    const Eigen::VectorXd sum_flows = solver.solve(a + b).flows_kw;
    const Eigen::VectorXd split = solver.solve(a).flows_kw + solver.solve(b).flows_kw;
    const double scale = std::max(1.0, sum_flows.cwiseAbs().maxCoeff());
    CHECK((sum_flows - split).cwiseAbs().maxCoeff() < 1e-9 * scale);
}

TEST_CASE("ptdf: radial paths have unit factors and zero diagonal") {
    const GridCase g = load_case("casenw.case");
    const PtdfMatrix ptdf = compute_ptdf(g);
    for (int l = 0; l < ptdf.line_count(); ++l) {
        CHECK(ptdf(l, 5, 5) == 0.0);
        for (int b = 0; b < g.bus_count(); b += 17) {
            const double phi = ptdf(l, b, g.market_bus);
            const bool unit = std::abs(phi) < 1e-9 || std::abs(std::abs(phi) - 1.0) < 1e-9;
            CHECK(unit);
        }
    }
}

TEST_CASE("ptdf: ring trade puts two thirds on the direct line") {
    const GridCase g = parse_case(kRing);
    const PtdfMatrix ptdf = compute_ptdf(g);
    CHECK(ptdf(0, 0, 1) == doctest::Approx(2.0 / 3.0));
    CHECK(ptdf(0, 1, 0) == doctest::Approx(-2.0 / 3.0));  // antisymmetry
}

TEST_CASE("ptdf: predictions match DC re-solves on every grid") {
    std::mt19937_64 rng(23);
    for (const std::string name : {"case9.case", "case14.case", "case57.case", "casenw.case"}) {
        const GridCase g = load_case(name);
        const DcSolver solver(g);
        const PtdfMatrix ptdf = compute_ptdf(g);
        std::uniform_int_distribution<int> pick(0, g.bus_count() - 1);
        std::uniform_real_distribution<double> mag(-80.0, 80.0);

        Eigen::VectorXd base = Eigen::VectorXd::Zero(g.bus_count());
        for (int m : g.microgrid_buses) base(m) = -g.buses[m].load_kw;
        base(g.market_bus) = -base.sum();
        const Eigen::VectorXd base_flows = solver.solve(base).flows_kw;

        for (int trial = 0; trial < 25; ++trial) {
            const int i = pick(rng);
            const int j = pick(rng);
            const double amount = mag(rng);
            Eigen::VectorXd inj = base;
            inj(i) += amount;
            inj(j) -= amount;
            const Eigen::VectorXd flows = solver.solve(inj).flows_kw;
            const double scale = std::max(1.0, flows.cwiseAbs().maxCoeff());
            for (int l = 0; l < g.line_count(); ++l) {
                const double predicted = base_flows(l) + amount * ptdf(l, i, j);
                CHECK(std::abs(predicted - flows(l)) < 1e-9 * scale);
            }
        }
    }
}

TEST_CASE("ptdf: all entries within [-1, 1]") {
    for (const std::string name : {"case9.case", "case14.case", "case57.case"}) {
        const GridCase g = load_case(name);
        const PtdfMatrix ptdf = compute_ptdf(g);
        double worst = 0.0;
        for (int l = 0; l < ptdf.line_count(); ++l)
            for (int i = 0; i < g.bus_count(); ++i)
                for (int j = 0; j < g.bus_count(); ++j)
                    worst = std::max(worst, std::abs(ptdf(l, i, j)));
        CHECK(worst <= 1.0 + 1e-9);
    }
}

TEST_CASE("check_line_limits: signed excess and inclusive boundary") {
    const GridCase g = parse_case(kTwoBus);
    Eigen::VectorXd flows(1);

    flows << 120.0;
    auto v = check_line_limits(g, flows);
    REQUIRE(v.size() == 1);
    CHECK(v[0].overload_kw == doctest::Approx(20.0));

    flows << -120.0;
    v = check_line_limits(g, flows);
    REQUIRE(v.size() == 1);
    CHECK(v[0].overload_kw == doctest::Approx(-20.0));

    flows << 100.0;
    CHECK(check_line_limits(g, flows).empty());
}
