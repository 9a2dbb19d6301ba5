#include "dhn/cost.hpp"
#include "fixtures.hpp"

#include <doctest.h>

#include <cmath>

using namespace dhn;
using doctest::Approx;

TEST_CASE("annuity factor")
{
    double direct = 0.0;
    for (int k = 1; k <= 30; ++k)
        direct += std::pow(1.05, -k);
    CHECK(annuity_factor(30, 0.05) == Approx(direct).epsilon(1e-12));
    CHECK(annuity_factor(30, 0.05) == Approx(15.3725).epsilon(1e-5));
    CHECK(annuity_factor(12, 0.0) == 12.0);
    CHECK(annuity_factor(1, 0.05) == Approx(1.0 / 1.05));
    CHECK(EconomicParams{}.annuity() == Approx(15.3725).epsilon(1e-5));
}

TEST_CASE("penalized fixed pipe cost")
{
    const double k0 = 501.3;
    CHECK(penalized_fixed_cost(0.02, k0, 50, 0.02).value == 0.0);
    CHECK(penalized_fixed_cost(0.02 + std::log(3.0) / 50, k0, 50, 0.02).value == Approx(k0 / 2));
    CHECK(penalized_fixed_cost(10.0, k0, 50, 0.02).value == Approx(k0));
    CHECK(penalized_fixed_cost(-10.0, k0, 50, 0.02).value == Approx(-k0));
    // the logistic form, evaluated directly
    for (double d : {0.005, 0.01, 0.03, 0.1}) {
        const double direct = k0 * (2.0 / (1.0 + std::exp(-400 * (d - 0.02))) - 1.0);
        CHECK(penalized_fixed_cost(d, k0, 400, 0.02).value == Approx(direct).epsilon(1e-12));
        const double h = 1e-7;
        CHECK(penalized_fixed_cost(d, k0, 400, 0.02).d ==
              Approx((penalized_fixed_cost(d + h, k0, 400, 0.02).value - penalized_fixed_cost(d - h, k0, 400, 0.02).value) /
                     (2 * h)).epsilon(1e-6));
    }
}

TEST_CASE("pipe investment")
{
    CHECK(pipe_capex({0.02}, {1.0}, 501.3, 1976.3, 50, 0.02, false) == Approx(39.526));
    CHECK(pipe_capex({0.02}, {1.0}, 501.3, 1976.3, 50, 0.02, true) == Approx(39.526 + 250.65));
    CHECK(pipe_capex({0.1}, {0.0}, 501.3, 1976.3, 50, 0.02, true) == 0.0);
    CHECK(pipe_capex({0.1}, {1.0}, 501.3, 1976.3, 1000, 0.02, false) == Approx(197.63 + 250.65).epsilon(1e-6));
    CHECK(pipe_capex({0.1}, {1.0}, 501.3, 1976.3, 1000, 0.02, true) == Approx(197.63 + 501.3).epsilon(1e-6));

    // the offset is a constant shift with identical gradients
    const auto g = fixtures::tiny_network(true, true);
    const auto p = fixtures::period("p", 0, {1e5, 1e5});
    auto design = fixtures::tiny_design(g, {p});
    design.d(0) = 0.004;
    design.d(3) = 0.031;
    EconomicParams on, off;
    off.offset_mode = false;
    Eigen::VectorXd ga = Eigen::VectorXd::Zero(design.values.size()), gb = ga;
    const double a = pipe_capex(g, design, on, &ga);
    const double b = pipe_capex(g, design, off, &gb);
    double total_length = 0;
    for (auto e : g.pipe_edges()) total_length += g.edge(e).length;
    CHECK(a - b == Approx(0.5 * 501.3 * total_length));
    CHECK((ga - gb).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("production capacity investment")
{
    const auto g = fixtures::tiny_network(false, true);
    const auto p = fixtures::period("p", 0, {1e5, 1e5});
    auto design = fixtures::tiny_design(g, {p});
    design.phi(0) = 0.0;
    design.phi(1) = 0.7;
    CHECK(heat_capex(g, design) == 0.0); // the waste source has no capacity cost
    design.phi(0) = 1.0;
    CHECK(heat_capex(g, design) == Approx(1e6 / 1000 * 225 + 2200));
    // the boiler figure from a 43.7 MW unit
    CHECK(43.7e6 / 1000 * 225 + 2200 == Approx(9.83e6).epsilon(1e-3));
}

TEST_CASE("operating cost terms")
{
    const auto g = fixtures::tiny_network(false, false);
    const auto p = fixtures::period("p", 0, {1e5, 1e5});
    auto design = fixtures::tiny_design(g, {p});
    design.phi(0) = 0.0;
    const PeriodModel model(g, p, 0);
    const auto &L = model.layout();
    const auto e = g.producer_edges()[0];
    const auto &edge = g.edge(e);
    Eigen::VectorXd x = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(L.size()));
    const double K = 8208.5;
    CHECK(heat_opex_period(model, design, x, K) == 0.0);
    CHECK(pump_opex_period(model, x, EconomicParams{}, K) == 0.0);

    // 0.05 m3/s lifted by 45 K: 9.255 MW of heat
    x[L.q(e)] = 0.05;
    x[L.theta_node(edge.tail)] = model.supply_temperature(0) - 45.0;
    CHECK(producer_output(model, x, 0) == Approx(9.255e6).epsilon(1e-3));
    const double heat = heat_opex_period(model, design, x, K);
    CHECK(heat == Approx(983.0 * 4185.0 * 0.05 * 45.0 / 1000.0 * K * 0.0319));
    CHECK(heat == Approx(2.424e6).epsilon(1e-3));
    design.phi(0) = 1.0;
    CHECK(heat_opex_period(model, design, x, K) - heat == Approx(235.0));

    x[L.p(edge.head)] = 2e5;
    x[L.p(edge.tail)] = 1e5;
    const double pump = pump_opex_period(model, x, EconomicParams{}, K);
    CHECK(pump == Approx(5.0 / 0.81 * K * 0.1));
    CHECK(pump == Approx(5066).epsilon(1e-3));
    x[L.q(e)] = 0.1;
    CHECK(pump_opex_period(model, x, EconomicParams{}, K) == Approx(2 * pump));

    // monotone in flow and lift
    double prev = -1;
    for (double q : {0.0, 0.01, 0.02, 0.05}) {
        x[L.q(e)] = q;
        const double v = heat_opex_period(model, design, x, K);
        CHECK(v >= prev);
        prev = v;
    }
}

TEST_CASE("constraint values at their boundaries")
{
    const auto g = fixtures::tiny_network(false, false);
    const auto p = fixtures::period("p", 0, {1e5, 0.0});
    auto design = fixtures::tiny_design(g, {p});
    const PeriodModel model(g, p, 0);
    const auto &L = model.layout();
    const auto e = g.producer_edges()[0];
    const auto &edge = g.edge(e);
    Eigen::VectorXd x = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(L.size()));
    x[L.heat(0)] = 1e5;
    x[L.p(edge.head)] = 101325 + 1e6;
    x[L.p(edge.tail)] = 101325;
    design.phi(0) = 1.0;
    const auto &spec = g.producer(0);
    x[L.theta_node(edge.tail)] = model.supply_temperature(0) - 40.0;
    x[L.q(e)] = spec.max_capacity / (spec.efficiency * g.fluid().rho_cp() * 40.0);
    const auto h = constraint_values(model, design, x, EconomicParams{});
    REQUIRE(h.size() == 4);
    CHECK(h[0] == Approx(0.0));
    CHECK(h[1] == 0.0); // zero demand consumer
    CHECK(h[2] == Approx(0.0));
    CHECK(h[3] == Approx(0.0).epsilon(1e-12));
    x[L.heat(0)] = 0.9e5;
    CHECK(constraint_values(model, design, x, EconomicParams{})[0] == Approx(0.1));
}

TEST_CASE("total cost decomposes over periods")
{
    const auto g = fixtures::tiny_network(true, true);
    PeriodSet set;
    set.active_hours = 8208.5;
    set.periods = {fixtures::period("a", 10, {6e4, 3e4}, 0.7), fixtures::period("b", 0, {1.5e5, 1e5}, 0.3),
                   fixtures::period("peak", -4.11, {2e5, 1.5e5}, 0.0)};
    set.periods[2].peak = true;
    const auto design = fixtures::tiny_design(g, set.periods);
    std::vector<Eigen::VectorXd> states;
    for (std::size_t t = 0; t < set.size(); ++t) {
        const PeriodModel m(g, set.periods[t], t);
        const auto s = solve_period(m, design);
        REQUIRE(s.report.converged);
        states.push_back(s.x);
    }
    const EconomicParams econ;
    const auto c = total_cost(g, design, states, set, econ);
    CHECK(c.total == Approx(c.pipe_capex + c.heat_capex + c.heat_opex + c.pump_opex).epsilon(1e-14));

    // sum_t w_t J_t with J_t = CAPEX + f (heat + pump)_t, using sum w = 1
    const double capex = c.pipe_capex + c.heat_capex;
    double sum = 0;
    for (std::size_t t = 0; t < set.size(); ++t)
        sum += set.periods[t].weight * (capex + econ.annuity() * (c.period_heat_opex[t] + c.period_pump_opex[t]));
    CHECK(sum == Approx(c.total).epsilon(1e-12));

    // a huge peak OPEX does not matter at zero weight
    auto states2 = states;
    states2[2][PeriodModel(g, set.periods[2], 2).layout().q(g.producer_edges()[0])] *= 100;
    CHECK(total_cost(g, design, states2, set, econ).total == Approx(c.total).epsilon(1e-14));

    // a single period with unit weight is the worst-case form
    PeriodSet wc;
    wc.active_hours = set.active_hours;
    wc.periods = {set.periods[2]};
    wc.periods[0].weight = 1.0;
    DesignVector d1(design_index_map(g, 1));
    d1.values.head(static_cast<Eigen::Index>(g.n_pipes() + g.n_producers())) =
        design.values.head(static_cast<Eigen::Index>(g.n_pipes() + g.n_producers()));
    for (std::size_t k = 0; k < g.n_consumers(); ++k) d1.alpha(0, k) = design.alpha(2, k);
    for (std::size_t k = 0; k < g.n_producers(); ++k) d1.gamma(0, k) = design.gamma(2, k);
    const auto cw = total_cost(g, d1, {states[2]}, wc, econ);
    CHECK(cw.total == Approx(capex + econ.annuity() * (c.period_heat_opex[2] + c.period_pump_opex[2])));

    CHECK_THROWS(total_cost(g, design, {states[0]}, set, econ));
}
