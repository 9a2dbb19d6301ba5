#include "dhn/cost.hpp"

#include "dhn/error.hpp"

#include <cmath>

namespace dhn {

void EconomicParams::validate() const
{
    if (!(horizon_years >= 1) || !(discount_rate >= 0))
        throw InputError("economic horizon must be >= 1 year and the discount rate >= 0");
    if (kappa0 < 0 || kappa1 < 0 || pump_price < 0)
        throw InputError("pipe and pump prices must be non-negative");
    if (!(xi > 0))
        throw InputError("penalization parameter xi must be positive");
    if (!(max_pressure > 0))
        throw InputError("maximum producer pressure lift must be positive");
}

double EconomicParams::annuity() const { return annuity_factor(horizon_years, discount_rate); }

double annuity_factor(double years, double rate)
{
    if (rate == 0.0)
        return years;
    return -std::expm1(-years * std::log1p(rate)) / rate;
}

Diff1 penalized_fixed_cost(double d, double kappa0, double xi, double d_min)
{
    // 2/(1+e^-z) - 1 = tanh(z/2)
    const double th = std::tanh(0.5 * xi * (d - d_min));
    return {kappa0 * th, kappa0 * 0.5 * xi * (1.0 - th * th)};
}

double pipe_capex(const std::vector<double> &d, const std::vector<double> &length, double kappa0, double kappa1,
                  double xi, double d_min, bool offset_mode)
{
    if (d.size() != length.size())
        throw InputError("diameter and length lists differ in size");
    double sum = 0.0;
    for (std::size_t k = 0; k < d.size(); ++k) {
        const double per_m =
            kappa1 * d[k] + 0.5 * penalized_fixed_cost(d[k], kappa0, xi, d_min).value + (offset_mode ? 0.5 * kappa0 : 0.0);
        sum += per_m * length[k];
    }
    return sum;
}

double pipe_capex(const NetworkGraph &g, const DesignVector &design, const EconomicParams &econ, Eigen::VectorXd *grad)
{
    const double d_min = g.catalog().d_min;
    double sum = 0.0;
    for (std::size_t k = 0; k < g.n_pipes(); ++k) {
        const double L = g.edge(g.pipe_edges()[k]).length;
        const double d = design.d(k);
        const auto pen = penalized_fixed_cost(d, econ.kappa0, econ.xi, d_min);
        sum += (econ.kappa1 * d + 0.5 * pen.value + (econ.offset_mode ? 0.5 * econ.kappa0 : 0.0)) * L;
        if (grad)
            (*grad)[static_cast<Eigen::Index>(design.layout.diameter(k))] += (econ.kappa1 + 0.5 * pen.d) * L;
    }
    return sum;
}

double heat_capex(const NetworkGraph &g, const DesignVector &design, Eigen::VectorXd *grad)
{
    double sum = 0.0;
    for (std::size_t k = 0; k < g.n_producers(); ++k) {
        const auto &p = g.producer(k);
        const double unit = p.max_capacity / 1000.0 * p.capex_per_kw + p.capex_fixed;
        sum += design.phi(k) * unit;
        if (grad)
            (*grad)[static_cast<Eigen::Index>(design.layout.capacity(k))] += unit;
    }
    return sum;
}

double producer_delta_theta(const PeriodModel &model, const Eigen::VectorXd &x, std::size_t k)
{
    const auto &g = model.graph();
    const auto &edge = g.edge(g.producer_edges()[k]);
    return model.supply_temperature(k) - x[model.layout().theta_node(edge.tail)];
}

double producer_output(const PeriodModel &model, const Eigen::VectorXd &x, std::size_t k)
{
    const auto &g = model.graph();
    const double q = x[model.layout().q(g.producer_edges()[k])];
    return g.fluid().rho_cp() * q * producer_delta_theta(model, x, k);
}

std::size_t constraints_per_period(const NetworkGraph &g) { return g.n_consumers() + 2 * g.n_producers(); }

LocalDerivative period_functional(const PeriodModel &model, const DesignVector &design, const Eigen::VectorXd &x,
                                  const EconomicParams &econ, double K, double w_opex, const Eigen::VectorXd &w_con)
{
    const auto &g = model.graph();
    const auto &L = model.layout();
    const std::size_t n_con = g.n_consumers(), n_pr = g.n_producers();
    if (static_cast<std::size_t>(w_con.size()) != constraints_per_period(g))
        throw InputError("constraint weight vector has the wrong size");
    const double rho_cp = g.fluid().rho_cp();
    LocalDerivative out;
    out.d_state = Eigen::VectorXd::Zero(x.size());
    out.d_design = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(design.layout.size()));
    auto ix = [](std::size_t i) { return static_cast<Eigen::Index>(i); };

    if (w_opex != 0.0) {
        for (std::size_t k = 0; k < n_pr; ++k) {
            const auto &spec = g.producer(k);
            const auto e = g.producer_edges()[k];
            const auto &edge = g.edge(e);
            const double q = x[ix(L.q(e))];
            const double dth = producer_delta_theta(model, x, k);
            // W -> kW, times K h/yr and EUR/kWh
            const double a = K * spec.heat_price * rho_cp / (1000.0 * spec.efficiency);
            out.value += w_opex * (a * q * dth + design.phi(k) * spec.fixed_opex);
            out.d_state[ix(L.q(e))] += w_opex * a * dth;
            out.d_state[ix(L.theta_node(edge.tail))] -= w_opex * a * q;
            out.d_design[ix(design.layout.capacity(k))] += w_opex * spec.fixed_opex;

            const double b = K * econ.pump_price / (1000.0 * spec.pump_efficiency);
            const double lift = x[ix(L.p(edge.head))] - x[ix(L.p(edge.tail))];
            out.value += w_opex * b * lift * q;
            out.d_state[ix(L.p(edge.head))] += w_opex * b * q;
            out.d_state[ix(L.p(edge.tail))] -= w_opex * b * q;
            out.d_state[ix(L.q(e))] += w_opex * b * lift;
        }
    }

    for (std::size_t k = 0; k < n_con; ++k) {
        const double w = w_con[ix(k)];
        if (w == 0.0 || model.consumer_off(k))
            continue;
        const double qd = model.period().demand[k];
        out.value += w * (1.0 - x[ix(L.heat(k))] / qd);
        out.d_state[ix(L.heat(k))] -= w / qd;
    }
    for (std::size_t k = 0; k < n_pr; ++k) {
        const auto e = g.producer_edges()[k];
        const auto &edge = g.edge(e);
        const double wp = w_con[ix(n_con + k)];
        if (wp != 0.0) {
            out.value += wp * (x[ix(L.p(edge.head))] - x[ix(L.p(edge.tail))] - econ.max_pressure);
            out.d_state[ix(L.p(edge.head))] += wp;
            out.d_state[ix(L.p(edge.tail))] -= wp;
        }
        const double wc = w_con[ix(n_con + n_pr + k)];
        if (wc != 0.0) {
            const auto &spec = g.producer(k);
            const double c = spec.efficiency * rho_cp / spec.max_capacity;
            const double q = x[ix(L.q(e))];
            const double dth = producer_delta_theta(model, x, k);
            out.value += wc * (dth * q * c - design.phi(k));
            out.d_state[ix(L.q(e))] += wc * dth * c;
            out.d_state[ix(L.theta_node(edge.tail))] -= wc * q * c;
            out.d_design[ix(design.layout.capacity(k))] -= wc;
        }
    }
    return out;
}

double heat_opex_period(const PeriodModel &model, const DesignVector &design, const Eigen::VectorXd &x, double K)
{
    const auto &g = model.graph();
    const double rho_cp = g.fluid().rho_cp();
    double sum = 0.0;
    for (std::size_t k = 0; k < g.n_producers(); ++k) {
        const auto &spec = g.producer(k);
        const double q = x[model.layout().q(g.producer_edges()[k])];
        sum += K * spec.heat_price * rho_cp * q * producer_delta_theta(model, x, k) / (1000.0 * spec.efficiency) +
               design.phi(k) * spec.fixed_opex;
    }
    return sum;
}

double pump_opex_period(const PeriodModel &model, const Eigen::VectorXd &x, const EconomicParams &econ, double K)
{
    const auto &g = model.graph();
    const auto &L = model.layout();
    double sum = 0.0;
    for (std::size_t k = 0; k < g.n_producers(); ++k) {
        const auto e = g.producer_edges()[k];
        const auto &edge = g.edge(e);
        const double lift = x[L.p(edge.head)] - x[L.p(edge.tail)];
        sum += K * econ.pump_price * lift * x[L.q(e)] / (1000.0 * g.producer(k).pump_efficiency);
    }
    return sum;
}

Eigen::VectorXd constraint_values(const PeriodModel &model, const DesignVector &design, const Eigen::VectorXd &x,
                                  const EconomicParams &econ)
{
    const auto &g = model.graph();
    const auto &L = model.layout();
    const std::size_t n_con = g.n_consumers(), n_pr = g.n_producers();
    Eigen::VectorXd h = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(constraints_per_period(g)));
    for (std::size_t k = 0; k < n_con; ++k) {
        if (model.consumer_off(k))
            continue;
        const double qd = model.period().demand[k];
        h[static_cast<Eigen::Index>(k)] = -(x[L.heat(k)] - qd) / qd;
    }
    const double rho_cp = g.fluid().rho_cp();
    for (std::size_t k = 0; k < n_pr; ++k) {
        const auto e = g.producer_edges()[k];
        const auto &edge = g.edge(e);
        const auto &spec = g.producer(k);
        h[static_cast<Eigen::Index>(n_con + k)] = x[L.p(edge.head)] - x[L.p(edge.tail)] - econ.max_pressure;
        h[static_cast<Eigen::Index>(n_con + n_pr + k)] =
            -(design.phi(k) - producer_delta_theta(model, x, k) * x[L.q(e)] * spec.efficiency * rho_cp / spec.max_capacity);
    }
    return h;
}

CostBreakdown total_cost(const NetworkGraph &g, const DesignVector &design, const std::vector<Eigen::VectorXd> &states,
                         const PeriodSet &periods, const EconomicParams &econ, const ModelOptions &options)
{
    if (states.size() != periods.size())
        throw InputError("missing period state: " + std::to_string(states.size()) + " states for " +
                         std::to_string(periods.size()) + " periods");
    CostBreakdown c;
    c.pipe_capex = pipe_capex(g, design, econ);
    c.heat_capex = heat_capex(g, design);
    const double f = econ.annuity();
    for (std::size_t t = 0; t < periods.size(); ++t) {
        const PeriodModel model(g, periods.periods[t], t, options);
        const double h = heat_opex_period(model, design, states[t], periods.active_hours);
        const double p = pump_opex_period(model, states[t], econ, periods.active_hours);
        c.period_heat_opex.push_back(h);
        c.period_pump_opex.push_back(p);
        c.heat_opex += f * periods.periods[t].weight * h;
        c.pump_opex += f * periods.periods[t].weight * p;
    }
    c.total = c.pipe_capex + c.heat_capex + c.heat_opex + c.pump_opex;
    return c;
}

} // namespace dhn
