#include "dhn/error.hpp"
#include "dhn/io.hpp"
#include "fixtures.hpp"

#include <doctest.h>

#include <filesystem>
#include <functional>
#include <fstream>
#include <limits>
#include <sstream>

using namespace dhn;
using doctest::Approx;
namespace fs = std::filesystem;

namespace {

fs::path scratch_dir(const std::string &name)
{
    const auto dir = fs::temp_directory_path() / ("dhnopt_test_" + name);
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

PeriodSet tiny_periods()
{
    PeriodSet s;
    s.active_hours = 8208.5;
    s.periods = {fixtures::period("p1", 9.5, {70e3, 40e3}, 0.7), fixtures::period("p2", 1.0, {140e3, 90e3}, 0.3),
                 fixtures::period("peak", -8.0, {200e3, 150e3}, 0.0)};
    s.periods[2].peak = true;
    return s;
}

PeriodsFile tiny_file()
{
    PeriodsFile f;
    f.consumer_ids = {"C1", "C2"};
    f.periods = tiny_periods();
    f.periods.periods[0].medoid_timestamp = "2023-03-02 07:00";
    f.periods.periods[0].medoid_index = 1470;
    f.unavailable = {{}, {}, {"Q"}};
    return f;
}

std::string error_of(const std::function<void()> &f)
{
    try {
        f();
    } catch (const std::exception &e) {
        return e.what();
    }
    return {};
}

} // namespace

TEST_CASE("network file round trip")
{
    const auto g = fixtures::tiny_network(true, true);
    const auto j = network_to_json(g);
    CHECK(j["schema_version"] == schema_version);
    const auto g2 = network_from_json(j);
    CHECK(network_to_json(g2) == j);
    CHECK(g2.n_pipes() == g.n_pipes());
    CHECK(g2.n_consumers() == g.n_consumers());

    const auto dir = scratch_dir("network");
    write_network(dir / "n.json", g);
    CHECK(network_to_json(read_network(dir / "n.json")) == j);

    auto bad = j;
    bad["schema_version"] = 99;
    CHECK(error_of([&] { network_from_json(bad); }).find("schema_version") != std::string::npos);
}

TEST_CASE("missing files are named")
{
    CHECK(error_of([] { read_network("/nonexistent/network.json"); }).find("network file not found") !=
          std::string::npos);
    CHECK(error_of([] { read_periods("/nonexistent/p.json"); }).find("periods file not found") != std::string::npos);
    CHECK(error_of([] { read_config("/nonexistent/c.txt"); }).find("config file not found") != std::string::npos);
}

TEST_CASE("periods file round trip and binding")
{
    const auto f = tiny_file();
    const auto f2 = periods_from_json(periods_to_json(f));
    CHECK(f2 == f);

    const auto g = fixtures::tiny_network(false, true);
    const auto bound = bind_periods(f, g);
    REQUIRE(bound.size() == 3);
    CHECK(bound.periods[2].producer_available(0));
    CHECK_FALSE(bound.periods[2].producer_available(1));
    CHECK(bound.periods[0].producer_available(1));

    // consumer order follows the graph, not the file
    auto swapped = f;
    swapped.consumer_ids = {"C2", "C1"};
    for (auto &p : swapped.periods.periods)
        std::swap(p.demand[0], p.demand[1]);
    CHECK(bind_periods(swapped, g).periods[1].demand == bound.periods[1].demand);

    auto masked = f;
    masked.unavailable = {{}, {}, {}};
    mask_producer_at_peak(masked, g, "Q");
    CHECK(masked.unavailable[2] == std::vector<std::string>{"Q"});
    CHECK_THROWS_AS(mask_producer_at_peak(masked, g, "nobody"), InputError);
}

TEST_CASE("design file round trip")
{
    const auto g = fixtures::tiny_network(true, true);
    const auto periods = tiny_periods();
    auto x = fixtures::tiny_design(g, periods.periods, 0.0625);
    x.d(3) = 0.0;
    x.alpha(1, 0) = 0.375;
    x.phi(1) = 0.8;
    const auto j = design_to_json(g, x, periods);
    CHECK_FALSE(j["pipes"].contains(g.edge(g.pipe_edges()[3]).id));
    const auto back = design_from_json(j, g, periods.size());
    CHECK(back.values == x.values);

    auto bad = j;
    bad["pipes"]["nope"] = 0.1;
    CHECK(error_of([&] { design_from_json(bad, g, periods.size()); }).find("'nope'") != std::string::npos);
    CHECK_THROWS_AS(design_from_json(j, g, 2), InputError);
}

TEST_CASE("series CSV round trip and errors")
{
    const std::string text = "timestamp,C1,C2,temperature\n"
                             "2023-01-01 00:00,1000.5,0,-3.25\n"
                             "2023-01-01 01:00,900,12.5,-3.5\n"
                             "2023-01-01 02:00,0,0,-2\n";
    std::istringstream in(text);
    const auto s = parse_series_csv(in);
    CHECK(s.consumer_ids == std::vector<std::string>{"C1", "C2"});
    CHECK(s.length() == 3);
    CHECK(s.demand[1][1] == 12.5);
    CHECK(s.temperature[0] == -3.25);
    CHECK(s.step_hours == Approx(1.0));

    std::ostringstream out;
    write_series_csv(out, s);
    std::istringstream again(out.str());
    const auto s2 = parse_series_csv(again);
    CHECK(s2.timestamps == s.timestamps);
    CHECK(s2.demand == s.demand);
    CHECK(s2.temperature == s.temperature);

    std::istringstream short_row("timestamp,C1,temperature\n2023-01-01 00:00,1,2\n2023-01-01 01:00,5\n");
    CHECK(error_of([&] { parse_series_csv(short_row, "demo.csv"); }).find("demo.csv: line 3") != std::string::npos);
    std::istringstream bad_number("timestamp,C1,temperature\n2023-01-01 00:00,abc,2\n");
    const auto msg = error_of([&] { parse_series_csv(bad_number, "demo.csv"); });
    CHECK(msg.find("line 2") != std::string::npos);
    CHECK(msg.find("abc") != std::string::npos);
    std::istringstream negative("timestamp,C1,temperature\nx,-1,2\n");
    CHECK_THROWS_AS(parse_series_csv(negative), InputError);
    std::istringstream no_temperature("timestamp,C1,C2\nx,1,2\n");
    CHECK_THROWS_AS(parse_series_csv(no_temperature), InputError);
}

TEST_CASE("run configuration")
{
    std::istringstream in("# comment\n[optimizer]\nxi_schedule = 100, 1000\nmax_outer = 7\n"
                          "kappa0 = 400 # inline\nsnap_to_catalog = true\noffset_mode = false\n"
                          "stall_tolerance = 0\n");
    const auto rc = parse_config(in);
    CHECK(rc.optimizer.xi_schedule == std::vector<double>{100, 1000});
    CHECK(rc.optimizer.max_outer == 7);
    CHECK(rc.econ.kappa0 == 400);
    CHECK(rc.snap_to_catalog);
    CHECK_FALSE(rc.econ.offset_mode);
    CHECK(rc.optimizer.stall_tolerance == 0.0);

    std::istringstream unknown("max_outer = 3\nmax_outr = 4\n");
    const auto msg = error_of([&] { parse_config(unknown, "run.txt"); });
    CHECK(msg.find("run.txt") != std::string::npos);
    CHECK(msg.find("line 2") != std::string::npos);
    CHECK(msg.find("max_outr") != std::string::npos);
    std::istringstream decreasing("xi_schedule = 100, 50\n");
    CHECK_THROWS_AS(parse_config(decreasing), InputError);
    std::istringstream not_a_number("max_step = big\n");
    CHECK_THROWS_AS(parse_config(not_a_number), InputError);
}

TEST_CASE("waste heat share")
{
    const std::vector<bool> waste{false, true};
    CHECK(waste_heat_share({{0, 5e5}, {0, 2e5}}, {0.6, 0.4}, waste) == Approx(100.0));
    CHECK(waste_heat_share({{5e5, 0}, {2e5, 0}}, {0.6, 0.4}, waste) == Approx(0.0));
    CHECK(waste_heat_share({{3e5, 3e5}, {1e5, 1e5}}, {0.6, 0.4}, waste) == Approx(50.0));
    // a zero-weight peak does not count
    CHECK(waste_heat_share({{0, 5e5}, {9e5, 0}}, {1.0, 0.0}, waste) == Approx(100.0));
    CHECK_THROWS_AS(waste_heat_share({{0, 0}}, {1.0}, waste), InputError);
}

TEST_CASE("average installed diameter")
{
    CHECK(average_installed_diameter({0.0937}, {250}) == Approx(9.37));
    CHECK(average_installed_diameter({0.05, 0.10}, {100, 300}) == Approx(8.75));
    CHECK(average_installed_diameter({0.08, 0.08, 0.08}, {10, 700, 3}) == Approx(8.0));
    // removed pipes do not count
    CHECK(average_installed_diameter({0.05, 0.0}, {100, 300}) == Approx(5.0));
    CHECK_THROWS_AS(average_installed_diameter({0.0, 0.0}, {100, 300}), InputError);
}

TEST_CASE("report and trace round trip")
{
    const auto g = fixtures::tiny_network(false, true);
    const auto periods = tiny_periods();
    const auto x = fixtures::tiny_design(g, periods.periods);
    EconomicParams econ;
    const auto sim = simulate(g, x, periods, econ);
    auto r = make_report(g, x, periods, sim, econ);
    r.message = "simulated";
    r.removed_pipes = {"f9"};
    CHECK(r.cost.total == sim.cost.total);
    CHECK(r.waste_heat_share >= 0.0);
    CHECK(r.waste_heat_share <= 100.0);
    CHECK(report_from_json(report_to_json(r)) == r);

    std::vector<TraceEntry> trace(3);
    for (int i = 0; i < 3; ++i) {
        trace[i].xi = 50.0 * (i + 1);
        trace[i].outer = i + 1;
        trace[i].inner_iterations = 10 * i;
        trace[i].cost = 1e6 / 3.0 + i;
        trace[i].violation = 1e-5 / (i + 1);
        trace[i].merit = 1.1e6;
        trace[i].projected_gradient = 3e-7;
        trace[i].penalty = 10.0;
        trace[i].discreteness = 0.75;
    }
    std::stringstream buf;
    write_trace_csv(buf, trace);
    const auto back = parse_trace_csv(buf);
    REQUIRE(back.size() == 3);
    for (int i = 0; i < 3; ++i) {
        CHECK(back[i].xi == trace[i].xi);
        CHECK(back[i].outer == trace[i].outer);
        CHECK(back[i].inner_iterations == trace[i].inner_iterations);
        CHECK(back[i].cost == trace[i].cost);
        CHECK(back[i].violation == trace[i].violation);
        CHECK(back[i].discreteness == trace[i].discreteness);
    }
}

TEST_CASE("a stored design re-simulates to the same cost")
{
    const auto g = fixtures::tiny_network(true, true);
    const auto periods = tiny_periods();
    OptimizerConfig cfg;
    cfg.xi_schedule = {1000.0};
    EconomicParams econ;
    const auto res = optimize(g, periods, econ, cfg);
    const auto fin = finalize_design(g, res.design, periods, econ, cfg, false, true);

    const auto dir = scratch_dir("bundle");
    Bundle b;
    b.graph = &fin.rounded.graph;
    b.design = fin.rounded.design;
    b.periods = fin.rounded.periods;
    b.simulation = fin.simulation;
    b.trace = res.trace;
    econ.xi = 1000.0;
    b.report = make_report(fin.rounded.graph, fin.rounded.design, fin.rounded.periods, fin.simulation, econ);
    write_bundle(dir, b);
    for (const char *f : {"design.json", "trace.csv", "report.json", "network.geojson"})
        CHECK(fs::exists(dir / f));
    CHECK(fs::exists(dir / "periods" / "peak_nodes.csv"));
    CHECK(report_from_json(read_json(dir / "report.json", "report")) == b.report);

    // the stored design refers to the full candidate network; absent pipes count as removed
    const auto stored = read_design(dir / "design.json", g, periods.size());
    const auto r = round_design(g, stored, periods, std::numeric_limits<double>::min(), false);
    CHECK(r.removed_pipes == fin.rounded.removed_pipes);
    const auto sim = simulate(r.graph, r.design, r.periods, econ, cfg);
    CHECK(sim.cost.total == Approx(fin.simulation.cost.total).epsilon(1e-9));
}

TEST_CASE("a design that cuts off a consumer is reported by name")
{
    const auto g = fixtures::tiny_network();
    const auto periods = tiny_periods();
    auto x = fixtures::tiny_design(g, periods.periods);
    auto j = design_to_json(g, x, periods);
    j["pipes"].erase("f3");
    const auto stored = design_from_json(j, g, periods.size());
    const auto msg = error_of([&] { round_design(g, stored, periods, std::numeric_limits<double>::min(), false); });
    CHECK(msg.find("'C2'") != std::string::npos);
}
