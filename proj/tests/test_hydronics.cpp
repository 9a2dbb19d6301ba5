#include "dhn/hydronics.hpp"
#include "fixtures.hpp"

#include <doctest.h>

#include <cmath>
#include <set>

using namespace dhn;
using doctest::Approx;

namespace {

// Column-by-column central differences of the scaled residual.
double fd_jacobian_error(const PeriodModel &model, const DesignVector &design, const Eigen::VectorXd &x)
{
    const Eigen::MatrixXd J = Eigen::MatrixXd(state_jacobian(model, design, x));
    double worst = 0.0;
    for (Eigen::Index j = 0; j < x.size(); ++j) {
        const double h = 1e-5 * std::max(1e-3, std::abs(x[j]));
        Eigen::VectorXd xp = x, xm = x;
        xp[j] += h;
        xm[j] -= h;
        const Eigen::VectorXd col = (model.residual(design, xp) - model.residual(design, xm)) / (2 * h);
        for (Eigen::Index r = 0; r < col.size(); ++r)
            worst = std::max(worst, std::abs(col[r] - J(r, j)) / std::max(1.0, std::abs(J(r, j))));
    }
    return worst;
}

double fd_design_error(const PeriodModel &model, DesignVector design, const Eigen::VectorXd &x)
{
    const Eigen::MatrixXd J = Eigen::MatrixXd(design_jacobian(model, design, x));
    double worst = 0.0;
    for (Eigen::Index j = 0; j < design.values.size(); ++j) {
        const double v = design.values[j];
        const double h = 1e-7 * std::max(1e-2, std::abs(v));
        design.values[j] = v + h;
        const Eigen::VectorXd cp = model.residual(design, x);
        design.values[j] = v - h;
        const Eigen::VectorXd cm = model.residual(design, x);
        design.values[j] = v;
        const Eigen::VectorXd col = (cp - cm) / (2 * h);
        for (Eigen::Index r = 0; r < col.size(); ++r)
            worst = std::max(worst, std::abs(col[r] - J(r, j)) / std::max(1.0, std::abs(J(r, j))));
    }
    return worst;
}

} // namespace

TEST_CASE("junction mixing residuals")
{
    // a single junction with two inflows and one outflow
    std::vector<Node> nodes{{"PR", NodeKind::producer_return, 0, 0}, {"a", NodeKind::junction, 0, 1},
                            {"b", NodeKind::junction, 0, 2}, {"n", NodeKind::junction, 1, 1},
                            {"c", NodeKind::junction, 2, 1}};
    std::vector<EdgeRecord> edges{{"ea", EdgeKind::pipe, "a", "n", 10}, {"eb", EdgeKind::pipe, "b", "n", 10},
                                  {"ec", EdgeKind::pipe, "n", "c", 10}, {"ez", EdgeKind::pipe, "PR", "a", 10},
                                  {"ey", EdgeKind::pipe, "PR", "b", 10}};
    const auto g = build_network(nodes, edges, "PR", {}, {});
    PeriodData p = fixtures::period("p", 0.0, {});
    const PeriodModel model(g, p, 0);
    const auto &L = model.layout();
    Eigen::VectorXd x = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(L.size()));
    const auto n = *g.find_node("n");
    x[L.q(*g.find_edge("ea"))] = 0.01;
    x[L.theta_edge(*g.find_edge("ea"))] = 50;
    x[L.q(*g.find_edge("eb"))] = 0.03;
    x[L.theta_edge(*g.find_edge("eb"))] = 30;
    x[L.q(*g.find_edge("ec"))] = 0.04;
    x[L.theta_node(n)] = 35;
    auto [mass, energy] = model.junction_residuals(n, x);
    CHECK(mass == Approx(0.0));
    // brute force: scan candidate mixing temperatures, the residual vanishes only at 35 K
    double best = 0, best_abs = 1e9;
    for (int i = 0; i <= 1000; ++i) {
        x[L.theta_node(n)] = 20.0 + 0.04 * i;
        const double r = std::abs(model.junction_residuals(n, x).second);
        if (r < best_abs) {
            best_abs = r;
            best = x[L.theta_node(n)];
        }
    }
    CHECK(best == Approx(35.0));
    CHECK(std::abs(energy) < 1e-7);

    // pass-through node
    Eigen::VectorXd y = Eigen::VectorXd::Zero(x.size());
    y[L.q(*g.find_edge("ea"))] = 0.01;
    y[L.theta_edge(*g.find_edge("ea"))] = 50;
    y[L.q(*g.find_edge("ec"))] = 0.01;
    y[L.theta_node(n)] = 50;
    y[L.theta_edge(*g.find_edge("ec"))] = 50;
    CHECK(std::abs(model.junction_residuals(n, y).first) < 1e-15);
    CHECK(std::abs(model.junction_residuals(n, y).second) < 1e-5);
    y[L.theta_node(n)] = 49;
    CHECK(std::abs(model.junction_residuals(n, y).second) > 1e-3);
}

TEST_CASE("consumer block at nominal operation reproduces the peak demand")
{
    const auto g = fixtures::tiny_network();
    PeriodData p = fixtures::period("nominal", 0.0, {200e3, 150e3});
    const auto design = fixtures::tiny_design(g, {p});
    const PeriodModel model(g, p, 0);
    const auto &L = model.layout();
    const auto &spec = g.consumer(0);
    const FluidProps f;
    const double rho_cp = f.rho_cp();
    const double q = nominal_primary_flow(spec, f);
    const double qs = spec.peak_demand / (rho_cp * 15.0);
    const double th1 = 60.0;

    // oracle: exact epsilon-NTU block solved by bisection on the secondary return temperature
    const double cmin = rho_cp * std::min(q, qs), cmax = rho_cp * std::max(q, qs);
    const double ntu = spec.ua / cmin, cs = cmin / cmax;
    const double eps = (1 - std::exp(-ntu * (1 - cs))) / (1 - cs * std::exp(-ntu * (1 - cs)));
    const double lnom = (35.0 - 20.0) / std::log(35.0 / 20.0);
    auto solve_for = [&](double t2c) {
        const double heat = eps * cmin * (th1 - t2c);
        const double t2h = t2c + heat / (rho_cp * qs);
        const double lm = (t2h - t2c) / std::log((t2h - 20.0) / (t2c - 20.0));
        return std::tuple{heat, t2h, heat - spec.peak_demand * std::pow(lm / lnom, 1.3)};
    };
    double lo = 20.5, hi = 59.0;
    for (int i = 0; i < 200; ++i) {
        const double mid = 0.5 * (lo + hi);
        (std::get<2>(solve_for(mid)) > 0 ? lo : hi) = mid;
    }
    const double t2c = 0.5 * (lo + hi);
    const auto [heat, t2h, res] = solve_for(t2c);
    CHECK(heat == Approx(spec.peak_demand).epsilon(1e-2));
    CHECK(t2c == Approx(40.0).epsilon(1e-3));

    Eigen::VectorXd x = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(L.size()));
    const auto e = g.consumer_edges()[0];
    x[L.q(e)] = q;
    x[L.theta_node(g.edge(e).tail)] = th1;
    x[L.theta_node(g.edge(e).head)] = 30.0;
    x[L.theta_edge(e)] = th1 - heat / (rho_cp * q);
    x[L.theta_2h(0)] = t2h;
    x[L.theta_2c(0)] = t2c;
    x[L.heat(0)] = heat;
    const double dp = std::pow(q / spec.valve_constant, 2);
    x[L.p(g.edge(e).tail)] = 2e5 + dp;
    x[L.p(g.edge(e).head)] = 2e5;
    const auto r = model.consumer_residuals(0, design, x);
    CHECK(std::abs(r[0]) < 1e-9 * q);
    CHECK(std::abs(r[1]) < 1e-6);
    CHECK(std::abs(r[2]) < 1e-6 * spec.peak_demand);
    CHECK(std::abs(r[3]) < 1e-9 * spec.peak_demand);
    CHECK(std::abs(r[4]) < 1e-6 * spec.peak_demand);
}

TEST_CASE("producer boundary conditions")
{
    const auto g = fixtures::tiny_network(false, true);
    PeriodData p = fixtures::period("cold", -4.11, {200e3, 150e3});
    auto design = fixtures::tiny_design(g, {p});
    const PeriodModel model(g, p, 0);
    CHECK(model.supply_temperature(1) == Approx(69.11));
    design.gamma(0, 1) = 0.05;
    const auto &L = model.layout();
    Eigen::VectorXd x = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(L.size()));
    const auto e = g.producer_edges()[1];
    x[L.q(e)] = 0.05;
    x[L.theta_edge(e)] = 69.11;
    const auto r = model.producer_residuals(1, design, x);
    CHECK(r[0] == Approx(0.0));
    CHECK(r[1] == Approx(0.0));

    PeriodData masked = p;
    masked.available = {true, false};
    const PeriodModel mm(g, masked, 0);
    CHECK(mm.producer_flow(1, design) == 0.0);
    CHECK(mm.producer_residuals(1, design, x)[0] == Approx(0.05));
}

TEST_CASE("state and design Jacobians match finite differences")
{
    for (bool loop : {false, true}) {
        const auto g = fixtures::tiny_network(loop, true);
        PeriodData p = fixtures::period("mid", 5.0, {120e3, 40e3});
        auto design = fixtures::tiny_design(g, {p});
        design.alpha(0, 1) = 0.6;
        const PeriodModel model(g, p, 0);
        const auto s = solve_period(model, design);
        REQUIRE(s.report.converged);
        CHECK(fd_jacobian_error(model, design, s.x) < 1e-6);
        CHECK(fd_design_error(model, design, s.x) < 1e-6);
        // away from the solution and at zero flow as well
        const Eigen::VectorXd x0 = initial_state(model, design);
        CHECK(fd_jacobian_error(model, design, x0) < 1e-6);
        Eigen::VectorXd xz = x0;
        for (std::size_t e = 0; e < g.n_edges(); ++e)
            xz[model.layout().q(e)] = 0.0;
        const Eigen::MatrixXd Jz = Eigen::MatrixXd(state_jacobian(model, design, xz));
        CHECK(Jz.allFinite());
    }
}

TEST_CASE("pressure perturbation only touches incident rows")
{
    const auto g = fixtures::tiny_network(true, false);
    PeriodData p = fixtures::period("mid", 5.0, {120e3, 40e3});
    const auto design = fixtures::tiny_design(g, {p});
    const PeriodModel model(g, p, 0);
    const auto s = solve_period(model, design);
    const auto n = *g.find_node("J1f");
    Eigen::VectorXd x = s.x;
    x[model.layout().p(n)] += 10.0;
    const Eigen::VectorXd dc = model.residual(design, x) - model.residual(design, s.x);
    std::set<std::size_t> allowed;
    for (auto e : g.in_edges(n)) allowed.insert(model.row_pipe_momentum(g.entity_index(e)));
    for (auto e : g.out_edges(n)) allowed.insert(model.row_pipe_momentum(g.entity_index(e)));
    for (Eigen::Index r = 0; r < dc.size(); ++r)
        if (dc[r] != 0.0)
            CHECK(allowed.count(static_cast<std::size_t>(r)) == 1);
    CHECK(model.n_residuals() == model.layout().size());
}

TEST_CASE("converged states satisfy the physical invariants")
{
    const auto g = fixtures::tiny_network(true, true);
    const FluidProps f;
    for (auto [t_amb, d1, d2] : {std::tuple{-4.11, 200e3, 150e3}, {6.85, 90e3, 70e3}, {14.37, 20e3, 0.0}}) {
        PeriodData p = fixtures::period("p", t_amb, {d1, d2});
        const auto design = fixtures::tiny_design(g, {p});
        const PeriodModel model(g, p, 0);
        const auto s = solve_period(model, design);
        REQUIRE(s.report.converged);
        CHECK(s.report.residual_inf <= 1e-8);
        CHECK(s.report.iterations <= 30);
        const auto &L = model.layout();

        double qsum = 0.0;
        for (std::size_t e = 0; e < g.n_edges(); ++e) qsum += std::abs(s.x[L.q(e)]);
        for (std::size_t n = 0; n < g.n_nodes(); ++n)
            CHECK(std::abs(model.junction_residuals(n, s.x).first) <= 1e-10 * std::max(1.0, qsum));

        double produced = 0.0, delivered = 0.0, lost = 0.0;
        for (std::size_t k = 0; k < g.n_producers(); ++k) produced += model.producer_heat(k, s.x);
        for (std::size_t k = 0; k < g.n_consumers(); ++k) delivered += s.x[L.heat(k)];
        for (std::size_t k = 0; k < g.n_pipes(); ++k) lost += model.pipe_heat_loss(k, s.x);
        CHECK(std::abs(produced - delivered - lost) <= 1e-6 * produced);

        for (std::size_t k = 0; k < g.n_pipes(); ++k) {
            const auto e = g.pipe_edges()[k];
            const auto &edge = g.edge(e);
            const double q = s.x[L.q(e)];
            const double th_in = s.x[L.theta_node(q >= 0 ? edge.tail : edge.head)];
            const double th_out = s.x[L.theta_edge(e)];
            if (th_in > 0 && std::abs(q) > 1e-6) {
                CHECK(th_out > 0);
                CHECK(th_out <= th_in + 1e-9);
            }
        }
        for (std::size_t k = 0; k < g.n_consumers(); ++k) {
            if (model.consumer_off(k)) {
                CHECK(s.x[L.heat(k)] == Approx(0.0));
                continue;
            }
            const double q = std::abs(s.x[L.q(g.consumer_edges()[k])]);
            const double qs = model.secondary_flow(k);
            const double cmin = std::min(q, qs), cmax = std::max(q, qs);
            const double eps = effectiveness(g.consumer(k).ua / (f.rho_cp() * cmin), cmin / cmax);
            CHECK(eps >= 0.0);
            CHECK(eps <= 1.0);
        }
        // the reference node sits at the configured pressure
        CHECK(s.x[L.p(g.reference_node())] == Approx(101325.0));
    }
}

TEST_CASE("zero demand with zero producer flow is the trivial state")
{
    const auto g = fixtures::tiny_network();
    PeriodData p = fixtures::period("summer", 18.0, {0.0, 0.0});
    auto design = fixtures::tiny_design(g, {p});
    design.gamma(0, 0) = 0.0;
    const PeriodModel model(g, p, 0);
    const auto s = solve_period(model, design);
    REQUIRE(s.report.converged);
    const auto &L = model.layout();
    for (std::size_t e = 0; e < g.n_edges(); ++e)
        CHECK(std::abs(s.x[L.q(e)]) < 1e-12);
    for (std::size_t n = 0; n < g.n_nodes(); ++n)
        CHECK(s.x[L.p(n)] == Approx(101325.0));
}

TEST_CASE("single producer and consumer converges quickly")
{
    std::vector<Node> nodes{{"PR", NodeKind::producer_return, 0, 0}, {"PF", NodeKind::producer_feed, 0, 1},
                            {"CF", NodeKind::consumer_feed, 300, 1}, {"CR", NodeKind::consumer_return, 300, 0}};
    std::vector<EdgeRecord> edges{{"P", EdgeKind::producer, "PR", "PF", 0}, {"f", EdgeKind::pipe, "PF", "CF", 300},
                                  {"r", EdgeKind::pipe, "CR", "PR", 300}, {"C", EdgeKind::consumer, "CF", "CR", 0}};
    ConsumerSpec c;
    c.peak_demand = 100e3;
    ProducerSpec pr;
    pr.max_capacity = 500e3;
    pr.supply_temperature = 60.0;
    const auto g = build_network(nodes, edges, "PR", {{"C", c}}, {{"P", pr}});
    PeriodData p = fixtures::period("peak", 0.0, {100e3});
    DesignVector design(design_index_map(g, 1));
    design.d(0) = design.d(1) = 0.08;
    design.phi(0) = 1;
    design.alpha(0, 0) = 1;
    design.gamma(0, 0) = nominal_primary_flow(g.consumer(0), g.fluid());
    const PeriodModel model(g, p, 0);
    const auto s = solve_period(model, design);
    REQUIRE(s.report.converged);
    CHECK(s.report.iterations <= 15);
    // nominal flow and supply close to nominal deliver close to the peak demand
    CHECK(s.x[model.layout().heat(0)] == Approx(100e3).epsilon(0.05));

    // warm start from the converged state needs no more iterations than the cold start
    PeriodData p2 = fixtures::period("next", 2.0, {90e3});
    const PeriodModel m2(g, p2, 0);
    const auto cold = solve_period(m2, design);
    const auto warm = solve_period(m2, design, s.x);
    MESSAGE("cold start " << cold.report.iterations << " iterations, warm start " << warm.report.iterations);
    CHECK(warm.report.converged);
}
