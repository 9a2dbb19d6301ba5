#include "dhn/adjoint.hpp"
#include "fixtures.hpp"

#include <doctest.h>

#include <cmath>

using namespace dhn;
using doctest::Approx;

namespace {

struct Problem {
    NetworkGraph graph;
    PeriodSet periods;
    EconomicParams econ;
    std::vector<Eigen::VectorXd> w_con;
};

Problem make_problem()
{
    Problem p{fixtures::tiny_network(true, true), {}, {}, {}};
    p.periods.active_hours = 8208.5;
    p.periods.periods = {fixtures::period("mild", 9, {7e4, 4e4}, 0.6), fixtures::period("cold", 1, {1.4e5, 9e4}, 0.4),
                         fixtures::period("peak", -4.11, {2e5, 1.5e5}, 0.0)};
    p.periods.periods[2].peak = true;
    p.periods.periods[2].available = {true, false};
    p.econ.xi = 150;
    const std::size_t nc = constraints_per_period(p.graph);
    for (std::size_t t = 0; t < 3; ++t) {
        Eigen::VectorXd w(static_cast<Eigen::Index>(nc));
        for (Eigen::Index i = 0; i < w.size(); ++i)
            w[i] = 1e3 * std::sin(1.0 + static_cast<double>(i) + 3.0 * static_cast<double>(t));
        w[static_cast<Eigen::Index>(p.graph.n_consumers())] *= 1e-6; // pressure rows are in Pa
        w[static_cast<Eigen::Index>(p.graph.n_consumers()) + 1] *= 1e-6;
        p.w_con.push_back(w);
    }
    return p;
}

double objective(const Problem &p, const DesignVector &design, std::vector<Eigen::VectorXd> &warm)
{
    double J = pipe_capex(p.graph, design, p.econ) + heat_capex(p.graph, design);
    SolverOptions tight;
    tight.tolerance = 1e-12;
    for (std::size_t t = 0; t < p.periods.size(); ++t) {
        const PeriodModel m(p.graph, p.periods.periods[t], t);
        const auto s = solve_period(m, design, warm[t], tight);
        REQUIRE(s.report.residual_inf < 1e-11);
        const double w = p.econ.annuity() * p.periods.periods[t].weight;
        J += period_functional(m, design, s.x, p.econ, p.periods.active_hours, w, p.w_con[t]).value;
    }
    return J;
}

} // namespace

TEST_CASE("adjoint linear solve corner cases")
{
    Eigen::SparseMatrix<double> I(4, 4);
    I.setIdentity();
    const Eigen::VectorXd rhs = Eigen::VectorXd::LinSpaced(4, 1.0, 4.0);
    CHECK((solve_adjoint_period(I, rhs) - rhs).norm() == 0.0);
    CHECK(solve_adjoint_period(I, Eigen::VectorXd::Zero(4)).norm() == 0.0);

    Eigen::SparseMatrix<double> A(2, 2);
    A.insert(0, 0) = 2.0;
    A.insert(0, 1) = 1.0;
    A.insert(1, 1) = 3.0;
    const Eigen::VectorXd l = solve_adjoint_period(A, Eigen::Vector2d(1.0, 2.0));
    CHECK((Eigen::MatrixXd(A).transpose() * l - Eigen::Vector2d(1.0, 2.0)).norm() < 1e-14);
}

TEST_CASE("adjoint gradient matches central differences for every variable class")
{
    const auto p = make_problem();
    auto design = fixtures::tiny_design(p.graph, p.periods.periods);
    design.d(2) = 0.03;  // inside the penalized band
    design.d(5) = 0.012;
    design.alpha(1, 1) = 0.7;
    design.phi(0) = 0.8;

    std::vector<Eigen::VectorXd> states;
    std::vector<Eigen::VectorXd> grads;
    Eigen::VectorXd capex_grad = Eigen::VectorXd::Zero(design.values.size());
    pipe_capex(p.graph, design, p.econ, &capex_grad);
    heat_capex(p.graph, design, &capex_grad);
    grads.push_back(capex_grad);
    for (std::size_t t = 0; t < p.periods.size(); ++t) {
        const PeriodModel m(p.graph, p.periods.periods[t], t);
        SolverOptions tight;
        tight.tolerance = 1e-12;
        const auto s = solve_period(m, design, std::nullopt, tight);
        REQUIRE(s.report.converged);
        states.push_back(s.x);
        const double w = p.econ.annuity() * p.periods.periods[t].weight;
        grads.push_back(period_gradient(m, design, s.x, p.econ, p.periods.active_hours, w, p.w_con[t]).gradient);
    }
    const Eigen::VectorXd g = assemble_gradient(grads, design.layout.size());

    Eigen::VectorXd fd(g.size());
    auto warm = states;
    for (Eigen::Index i = 0; i < g.size(); ++i) {
        const double v = design.values[i];
        const double h = 1e-6 * std::max(std::abs(v), 1e-3);
        design.values[i] = v + h;
        const double jp = objective(p, design, warm);
        design.values[i] = v - h;
        const double jm = objective(p, design, warm);
        design.values[i] = v;
        fd[i] = (jp - jm) / (2 * h);
    }
    for (auto kind : {VariableKind::diameter, VariableKind::capacity, VariableKind::valve, VariableKind::flow}) {
        double err = 0, scale = 0;
        for (Eigen::Index i = 0; i < g.size(); ++i) {
            if (design.layout.key(static_cast<std::size_t>(i)).kind != kind)
                continue;
            err = std::max(err, std::abs(g[i] - fd[i]));
            scale = std::max(scale, std::abs(fd[i]));
        }
        CAPTURE(static_cast<int>(kind));
        CHECK(scale > 0);
        CHECK(err / scale < 1e-5);
    }

    // one block-diagonal solve gives the same gradient
    std::vector<PeriodModel> models;
    for (std::size_t t = 0; t < p.periods.size(); ++t)
        models.emplace_back(p.graph, p.periods.periods[t], t);
    std::vector<const PeriodModel *> ptrs;
    std::vector<double> w_opex;
    for (std::size_t t = 0; t < models.size(); ++t) {
        ptrs.push_back(&models[t]);
        w_opex.push_back(p.econ.annuity() * p.periods.periods[t].weight);
    }
    const Eigen::VectorXd mono =
        monolithic_gradient(ptrs, design, states, p.econ, p.periods.active_hours, w_opex, p.w_con) + capex_grad;
    CHECK((mono - g).cwiseAbs().maxCoeff() <= 1e-10 * std::max(1.0, g.cwiseAbs().maxCoeff()));
}

TEST_CASE("gradient assembly over identical periods")
{
    const auto g = fixtures::tiny_network(false, true);
    const auto base = fixtures::period("p", 4, {1e5, 6e4}, 1.0);
    PeriodSet one, two;
    one.periods = {base};
    auto half = base;
    half.weight = 0.5;
    two.periods = {half, half};
    const EconomicParams econ;
    const Eigen::VectorXd w0 = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(constraints_per_period(g)));

    const auto d1 = fixtures::tiny_design(g, one.periods);
    const PeriodModel m1(g, one.periods[0], 0);
    const auto s1 = solve_period(m1, d1);
    const auto g1 = period_gradient(m1, d1, s1.x, econ, 8000, econ.annuity(), w0).gradient;

    const auto d2 = fixtures::tiny_design(g, two.periods);
    std::vector<Eigen::VectorXd> parts;
    for (std::size_t t = 0; t < 2; ++t) {
        const PeriodModel m(g, two.periods[t], t);
        const auto s = solve_period(m, d2);
        parts.push_back(period_gradient(m, d2, s.x, econ, 8000, 0.5 * econ.annuity(), w0).gradient);
    }
    const auto g2 = assemble_gradient(parts, d2.layout.size());
    const auto n_shared = static_cast<Eigen::Index>(g.n_pipes() + g.n_producers());
    CHECK((g2.head(n_shared) - g1.head(n_shared)).cwiseAbs().maxCoeff() <=
          1e-9 * g1.head(n_shared).cwiseAbs().maxCoeff());
    // single period assembly is the identity
    CHECK((assemble_gradient({g1}, d1.layout.size()) - g1).norm() == 0.0);

    // a zero-weight period with zero multipliers contributes nothing
    const PeriodModel mp(g, two.periods[0], 0);
    const auto sp = solve_period(mp, d2);
    CHECK(period_gradient(mp, d2, sp.x, econ, 8000, 0.0, w0).gradient.norm() == 0.0);
}
