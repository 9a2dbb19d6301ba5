#include "dhn/hydronics.hpp"

#include "dhn/error.hpp"

#include <Eigen/SparseCholesky>
#include <Eigen/SparseLU>

#include <algorithm>
#include <cmath>
#include <limits>
#include <queue>

namespace dhn {

void PeriodSet::validate(std::size_t n_consumers, std::size_t n_producers) const
{
    if (!(active_hours > 0) || !std::isfinite(active_hours))
        throw InputError("active hours must be positive");
    if (periods.empty())
        throw InputError("period set is empty");
    for (const auto &p : periods) {
        if (p.demand.size() != n_consumers)
            throw InputError("period '" + p.name + "' lists " + std::to_string(p.demand.size()) +
                             " demands for " + std::to_string(n_consumers) + " consumers");
        for (double q : p.demand)
            if (!(q >= 0) || !std::isfinite(q))
                throw InputError("period '" + p.name + "' has a negative or non-finite demand");
        if (!(p.weight >= 0) || !std::isfinite(p.weight))
            throw InputError("period '" + p.name + "' has an invalid weight");
        if (!std::isfinite(p.ambient_temperature))
            throw InputError("period '" + p.name + "' has a non-finite ambient temperature");
        if (!p.available.empty() && p.available.size() != n_producers)
            throw InputError("period '" + p.name + "' availability mask has the wrong size");
    }
}

struct PeriodModel::Sink {
    Triplets *jx = nullptr;
    Triplets *jd = nullptr;

    void x(std::size_t r, std::size_t c, double v) const
    {
        if (jx)
            jx->emplace_back(static_cast<int>(r), static_cast<int>(c), v);
    }
    void d(std::size_t r, std::size_t c, double v) const
    {
        if (jd)
            jd->emplace_back(static_cast<int>(r), static_cast<int>(c), v);
    }
};

PeriodModel::PeriodModel(const NetworkGraph &graph, const PeriodData &period, std::size_t period_index,
                         ModelOptions options)
    : graph_(&graph), period_(&period), t_(period_index), opt_(options), layout_(graph)
{
    if (period.demand.size() != graph.n_consumers())
        throw InputError("period '" + period.name + "' does not match the consumer count");
    if (!period.available.empty() && period.available.size() != graph.n_producers())
        throw InputError("period '" + period.name + "' availability mask has the wrong size");

    n_pipe_ = graph.n_pipes();
    const std::size_t n_nodes = graph.n_nodes();
    std::vector<bool> is_ref(n_nodes, false);
    for (auto r : graph.reference_nodes())
        is_ref[r] = true;
    constexpr auto none = std::numeric_limits<std::size_t>::max();
    mass_row_.assign(n_nodes, none);
    std::size_t row = 2 * n_pipe_;
    for (std::size_t n = 0; n < n_nodes; ++n)
        if (!is_ref[n])
            mass_row_[n] = row++;
    energy0_ = row;
    consumer0_ = energy0_ + n_nodes;
    producer0_ = consumer0_ + 5 * graph.n_consumers();
    reference0_ = producer0_ + 2 * graph.n_producers();
    n_rows_ = reference0_ + graph.n_components();

    const double rho_cp = graph.fluid().rho_cp();
    const double t_inf = period.ambient_temperature;
    for (std::size_t k = 0; k < graph.n_consumers(); ++k) {
        const auto &spec = graph.consumer(k);
        const double qs = period.demand[k] / (rho_cp * spec.secondary_dt_nominal());
        qs_.push_back(qs);
        off_.push_back(qs < 10.0 * opt_.flow_smoothing);
        house_rel_.push_back(spec.house_temperature - t_inf);
        radiator_lmtd_nom_.push_back(spec.radiator_lmtd_nominal());
    }
    for (std::size_t k = 0; k < graph.n_producers(); ++k)
        supply_rel_.push_back(graph.producer(k).supply_temperature - t_inf);
}

double PeriodModel::producer_flow(std::size_t k, const DesignVector &design) const
{
    return period_->producer_available(k) ? design.gamma(t_, k) : 0.0;
}

void PeriodModel::pipe_block(std::size_t k, const DesignVector &design, const Eigen::VectorXd &x,
                             Eigen::VectorXd &c, Sink &s) const
{
    const auto &g = *graph_;
    const std::size_t e = g.pipe_edges()[k];
    const auto &edge = g.edge(e);
    const auto &L = layout_;
    const double d = design.d(k);
    const std::size_t di = design.layout.diameter(k);
    const double q = x[L.q(e)];
    const double Ps = opt_.pressure_scale;

    // momentum
    const auto dp = pipe_pressure_drop_diff(q, d, edge.length, g.fluid(), opt_.flow_smoothing);
    const std::size_t rm = row_pipe_momentum(k);
    c[rm] = (x[L.p(edge.tail)] - x[L.p(edge.head)] - dp.value) / Ps;
    s.x(rm, L.p(edge.tail), 1.0 / Ps);
    s.x(rm, L.p(edge.head), -1.0 / Ps);
    s.x(rm, L.q(e), -dp.da / Ps);
    s.d(rm, di, -dp.db / Ps);

    // heat loss along the pipe, upwinded inlet temperature
    constexpr double two_pi = 2.0 * 3.14159265358979323846;
    const double R = thermal_resistance(d, g.catalog().insulation_ratio, g.fluid());
    const double dR_dd = -1.0 / (two_pi * g.fluid().ground_conductivity * d);
    const double rho_cp = g.fluid().rho_cp();
    const double beta = edge.length / (rho_cp * R);
    const double dbeta_dd = -edge.length / (rho_cp * R * R) * dR_dd;
    const auto a = smooth::abs(q, opt_.flow_smoothing);
    const auto st = smooth::step(q, opt_.flow_smoothing);
    const double th_i = x[L.theta_node(edge.tail)], th_j = x[L.theta_node(edge.head)];
    const double th_up = st.value * th_i + (1.0 - st.value) * th_j;
    const double E = std::exp(-beta / a.value);
    const std::size_t re = row_pipe_energy(k);
    c[re] = x[L.theta_edge(e)] - th_up * E;
    s.x(re, L.theta_edge(e), 1.0);
    s.x(re, L.theta_node(edge.tail), -st.value * E);
    s.x(re, L.theta_node(edge.head), -(1.0 - st.value) * E);
    s.x(re, L.q(e), -(st.d * (th_i - th_j) * E + th_up * E * beta * a.d / (a.value * a.value)));
    s.d(re, di, th_up * E * dbeta_dd / a.value);
}

void PeriodModel::junction_block(std::size_t n, const Eigen::VectorXd &x, Eigen::VectorXd &c, Sink &s) const
{
    const auto &g = *graph_;
    const auto &L = layout_;
    const double Qs = opt_.flow_scale;
    const double dq = opt_.flow_smoothing;
    const double th_n = x[L.theta_node(n)];
    const auto &in = g.in_edges(n);
    const auto &out = g.out_edges(n);

    const std::size_t rm = mass_row_[n];
    constexpr auto none = std::numeric_limits<std::size_t>::max();
    if (rm != none) {
        double m = 0.0;
        for (auto e : in) {
            m += x[L.q(e)];
            s.x(rm, L.q(e), 1.0 / Qs);
        }
        for (auto e : out) {
            m -= x[L.q(e)];
            s.x(rm, L.q(e), -1.0 / Qs);
        }
        c[rm] = m / Qs;
    }

    const std::size_t re = row_energy(n);
    double h = 0.0;
    double d_th_n = 0.0;
    for (auto e : in) {
        const double q = x[L.q(e)], th_e = x[L.theta_edge(e)];
        const auto p = smooth::pos(q, dq), m = smooth::neg(q, dq);
        h += p.value * th_e + m.value * th_n;
        s.x(re, L.q(e), (p.d * th_e + m.d * th_n) / Qs);
        s.x(re, L.theta_edge(e), p.value / Qs);
        d_th_n += m.value;
    }
    for (auto e : out) {
        const double q = x[L.q(e)], th_e = x[L.theta_edge(e)];
        const auto p = smooth::pos(q, dq), m = smooth::neg(q, dq);
        h -= p.value * th_n + m.value * th_e;
        s.x(re, L.q(e), -(p.d * th_n + m.d * th_e) / Qs);
        s.x(re, L.theta_edge(e), -m.value / Qs);
        d_th_n -= p.value;
    }
    // pulls a stagnant node towards the mean of its edges so the row never vanishes
    const std::size_t deg = in.size() + out.size();
    if (deg > 0) {
        const double w = opt_.junction_regularization;
        double mean = 0.0;
        for (auto e : in) mean += x[L.theta_edge(e)];
        for (auto e : out) mean += x[L.theta_edge(e)];
        mean /= static_cast<double>(deg);
        h += w * (th_n - mean);
        d_th_n += w;
        for (auto e : in) s.x(re, L.theta_edge(e), -w / static_cast<double>(deg) / Qs);
        for (auto e : out) s.x(re, L.theta_edge(e), -w / static_cast<double>(deg) / Qs);
    } else {
        h += opt_.junction_regularization * th_n;
        d_th_n += opt_.junction_regularization;
    }
    s.x(re, L.theta_node(n), d_th_n / Qs);
    c[re] = h / Qs;
}

void PeriodModel::consumer_block(std::size_t k, const DesignVector &design, const Eigen::VectorXd &x,
                                 Eigen::VectorXd &c, Sink &s) const
{
    const auto &g = *graph_;
    const auto &L = layout_;
    const auto &spec = g.consumer(k);
    const std::size_t e = g.consumer_edges()[k];
    const auto &edge = g.edge(e);
    const double Qs = opt_.flow_scale;
    const double Qp = spec.peak_demand;
    const double rho_cp = g.fluid().rho_cp();
    const double q = x[L.q(e)];
    const std::size_t ai = design.layout.valve(t_, k);
    const double alpha = design.values[static_cast<Eigen::Index>(ai)];
    const std::size_t r1 = row_consumer(k, 0), r2 = r1 + 1, r3 = r1 + 2, r4 = r1 + 3, r5 = r1 + 4;

    // control valve
    const double zeta = spec.valve_constant;
    const auto sq = smooth::signed_sqrt(x[L.p(edge.tail)] - x[L.p(edge.head)], opt_.valve_smoothing);
    c[r1] = (q - alpha * zeta * sq.value) / Qs;
    s.x(r1, L.q(e), 1.0 / Qs);
    s.x(r1, L.p(edge.tail), -alpha * zeta * sq.d / Qs);
    s.x(r1, L.p(edge.head), alpha * zeta * sq.d / Qs);
    s.d(r1, ai, -zeta * sq.value / Qs);

    const double th_i = x[L.theta_node(edge.tail)], th_j = x[L.theta_node(edge.head)];
    const auto st = smooth::step(q, opt_.flow_smoothing);
    const double th_up = st.value * th_i + (1.0 - st.value) * th_j;
    const double dup_dq = st.d * (th_i - th_j);
    const double th_o = x[L.theta_edge(e)];
    const double th2h = x[L.theta_2h(k)], th2c = x[L.theta_2c(k)], heat = x[L.heat(k)];
    const double th_house = house_rel_[k];

    if (off_[k]) {
        c[r2] = th_o - th_up;
        s.x(r2, L.theta_edge(e), 1.0);
        s.x(r2, L.theta_node(edge.tail), -st.value);
        s.x(r2, L.theta_node(edge.head), -(1.0 - st.value));
        s.x(r2, L.q(e), -dup_dq);
        c[r3] = th2h - th_house;
        s.x(r3, L.theta_2h(k), 1.0);
        c[r4] = th2c - th_house;
        s.x(r4, L.theta_2c(k), 1.0);
        c[r5] = heat / Qp;
        s.x(r5, L.heat(k), 1.0 / Qp);
        return;
    }

    // heat exchanger, counter-flow effectiveness on smoothed capacity rates
    const double qs = qs_[k];
    const auto a = smooth::abs(q, opt_.flow_smoothing);
    const auto mn = smooth::min(a.value, qs, opt_.flow_smoothing);
    const auto mx = smooth::max(a.value, qs, opt_.flow_smoothing);
    const double m = mn.value, M = mx.value;
    const double ntu = spec.ua / (rho_cp * m);
    const double cstar = m / M;
    const auto eps = effectiveness_diff(ntu, cstar);
    const double dntu_da = -ntu / m * mn.da;
    const double dc_da = mn.da / M - m * mx.da / (M * M);
    const double eps_a = eps.da * dntu_da + eps.db * dc_da;
    const double eta = eps.value * m / a.value;
    const double eta_a = (eps_a * m + eps.value * mn.da) / a.value - eps.value * m / (a.value * a.value);

    c[r2] = th_o - (1.0 - eta) * th_up - eta * th2c;
    s.x(r2, L.theta_edge(e), 1.0);
    s.x(r2, L.theta_node(edge.tail), -(1.0 - eta) * st.value);
    s.x(r2, L.theta_node(edge.head), -(1.0 - eta) * (1.0 - st.value));
    s.x(r2, L.theta_2c(k), -eta);
    s.x(r2, L.q(e), eta_a * a.d * (th_up - th2c) - (1.0 - eta) * dup_dq);

    const double H = eps.value * rho_cp * m * (th_up - th2c);
    const double H_a = rho_cp * (th_up - th2c) * (eps_a * m + eps.value * mn.da);
    const double H_up = eps.value * rho_cp * m;
    const double sec = rho_cp * qs;
    c[r3] = (H - sec * (th2h - th2c)) / Qp;
    s.x(r3, L.q(e), (H_a * a.d + H_up * dup_dq) / Qp);
    s.x(r3, L.theta_node(edge.tail), H_up * st.value / Qp);
    s.x(r3, L.theta_node(edge.head), H_up * (1.0 - st.value) / Qp);
    s.x(r3, L.theta_2c(k), (-H_up + sec) / Qp);
    s.x(r3, L.theta_2h(k), -sec / Qp);

    c[r4] = (sec * (th2h - th2c) - heat) / Qp;
    s.x(r4, L.theta_2h(k), sec / Qp);
    s.x(r4, L.theta_2c(k), -sec / Qp);
    s.x(r4, L.heat(k), -1.0 / Qp);

    // radiator characteristic
    const auto A = smooth::pos(th2h - th_house, opt_.radiator_smoothing);
    const auto B = smooth::pos(th2c - th_house, opt_.radiator_smoothing);
    const auto lm = lmtd_diff(A.value, B.value);
    const double n = spec.radiator_exponent;
    const double ln = radiator_lmtd_nom_[k];
    const double ratio = lm.value / ln;
    const double f = std::pow(ratio, n);
    const double df = n * std::pow(ratio, n - 1.0) / ln;
    c[r5] = heat / Qp - f;
    s.x(r5, L.heat(k), 1.0 / Qp);
    s.x(r5, L.theta_2h(k), -df * lm.da * A.d);
    s.x(r5, L.theta_2c(k), -df * lm.db * B.d);
}

void PeriodModel::producer_block(std::size_t k, const DesignVector &design, const Eigen::VectorXd &x,
                                 Eigen::VectorXd &c, Sink &s) const
{
    const auto &L = layout_;
    const std::size_t e = graph_->producer_edges()[k];
    const double Qs = opt_.flow_scale;
    const std::size_t r1 = row_producer(k, 0), r2 = r1 + 1;
    const bool on = period_->producer_available(k);
    c[r1] = (x[L.q(e)] - producer_flow(k, design)) / Qs;
    s.x(r1, L.q(e), 1.0 / Qs);
    if (on)
        s.d(r1, design.layout.flow(t_, k), -1.0 / Qs);
    c[r2] = x[L.theta_edge(e)] - supply_rel_[k];
    s.x(r2, L.theta_edge(e), 1.0);
}

void PeriodModel::evaluate(const DesignVector &design, const Eigen::VectorXd &x, Eigen::VectorXd &c, Triplets *jx,
                           Triplets *jd) const
{
    if (static_cast<std::size_t>(x.size()) != layout_.size())
        throw InputError("state vector has the wrong size");
    if (design.layout != design_index_map(*graph_, design.layout.n_periods()) || t_ >= design.layout.n_periods())
        throw InputError("design vector does not match the network");
    c.setZero(static_cast<Eigen::Index>(n_rows_));
    Sink s{jx, jd};
    if (jx) jx->clear();
    if (jd) jd->clear();
    for (std::size_t k = 0; k < n_pipe_; ++k)
        pipe_block(k, design, x, c, s);
    for (std::size_t n = 0; n < graph_->n_nodes(); ++n)
        junction_block(n, x, c, s);
    for (std::size_t k = 0; k < graph_->n_consumers(); ++k)
        consumer_block(k, design, x, c, s);
    for (std::size_t k = 0; k < graph_->n_producers(); ++k)
        producer_block(k, design, x, c, s);
    const auto &refs = graph_->reference_nodes();
    for (std::size_t ci = 0; ci < refs.size(); ++ci) {
        const std::size_t r = row_reference(ci);
        c[r] = (x[layout_.p(refs[ci])] - opt_.reference_pressure) / opt_.pressure_scale;
        s.x(r, layout_.p(refs[ci]), 1.0 / opt_.pressure_scale);
    }
}

Eigen::VectorXd PeriodModel::residual(const DesignVector &design, const Eigen::VectorXd &x) const
{
    Eigen::VectorXd c;
    evaluate(design, x, c);
    return c;
}

std::pair<double, double> PeriodModel::junction_residuals(std::size_t node, const Eigen::VectorXd &x) const
{
    Eigen::VectorXd c = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n_rows_));
    Sink s;
    junction_block(node, x, c, s);
    // the mass row of a reference node is not part of the system; evaluate it directly
    double mass = 0.0;
    for (auto e : graph_->in_edges(node)) mass += x[layout_.q(e)];
    for (auto e : graph_->out_edges(node)) mass -= x[layout_.q(e)];
    return {mass, c[row_energy(node)] * opt_.flow_scale};
}

std::array<double, 5> PeriodModel::consumer_residuals(std::size_t k, const DesignVector &design,
                                                      const Eigen::VectorXd &x) const
{
    Eigen::VectorXd c = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n_rows_));
    Sink s;
    consumer_block(k, design, x, c, s);
    const double Qp = graph_->consumer(k).peak_demand;
    const std::size_t r = row_consumer(k, 0);
    if (off_[k])
        return {c[r] * opt_.flow_scale, c[r + 1], c[r + 2], c[r + 3], c[r + 4] * Qp};
    return {c[r] * opt_.flow_scale, c[r + 1], c[r + 2] * Qp, c[r + 3] * Qp, c[r + 4] * Qp};
}

std::array<double, 2> PeriodModel::producer_residuals(std::size_t k, const DesignVector &design,
                                                      const Eigen::VectorXd &x) const
{
    Eigen::VectorXd c = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n_rows_));
    Sink s;
    producer_block(k, design, x, c, s);
    const std::size_t r = row_producer(k, 0);
    return {c[r] * opt_.flow_scale, c[r + 1]};
}

namespace {

// Heat carried into an edge at its tail minus heat delivered at its head [W],
// using the same smoothed upwinding as the junction balances.
double edge_heat_drop(const NetworkGraph &g, const StateLayout &L, const ModelOptions &opt, std::size_t e,
                      const Eigen::VectorXd &x)
{
    const auto &edge = g.edge(e);
    const double q = x[L.q(e)];
    const auto p = smooth::pos(q, opt.flow_smoothing), m = smooth::neg(q, opt.flow_smoothing);
    const double th_e = x[L.theta_edge(e)];
    return g.fluid().rho_cp() *
           (p.value * (x[L.theta_node(edge.tail)] - th_e) + m.value * (th_e - x[L.theta_node(edge.head)]));
}

} // namespace

double PeriodModel::producer_heat(std::size_t k, const Eigen::VectorXd &x) const
{
    return -edge_heat_drop(*graph_, layout_, opt_, graph_->producer_edges()[k], x);
}

double PeriodModel::pipe_heat_loss(std::size_t k, const Eigen::VectorXd &x) const
{
    return edge_heat_drop(*graph_, layout_, opt_, graph_->pipe_edges()[k], x);
}

Eigen::SparseMatrix<double> state_jacobian(const PeriodModel &model, const DesignVector &design,
                                           const Eigen::VectorXd &x)
{
    Eigen::VectorXd c;
    Triplets jx;
    model.evaluate(design, x, c, &jx, nullptr);
    const auto n = static_cast<Eigen::Index>(model.layout().size());
    Eigen::SparseMatrix<double> J(static_cast<Eigen::Index>(model.n_residuals()), n);
    J.setFromTriplets(jx.begin(), jx.end());
    return J;
}

Eigen::SparseMatrix<double> design_jacobian(const PeriodModel &model, const DesignVector &design,
                                            const Eigen::VectorXd &x)
{
    Eigen::VectorXd c;
    Triplets jd;
    model.evaluate(design, x, c, nullptr, &jd);
    Eigen::SparseMatrix<double> J(static_cast<Eigen::Index>(model.n_residuals()),
                                  static_cast<Eigen::Index>(design.layout.size()));
    J.setFromTriplets(jd.begin(), jd.end());
    return J;
}

Eigen::VectorXd initial_state(const PeriodModel &model, const DesignVector &design)
{
    const auto &g = model.graph();
    const auto &L = model.layout();
    const auto &fluid = g.fluid();
    const auto &period = model.period();
    const std::size_t t = model.period_index();
    const std::size_t n_nodes = g.n_nodes();
    Eigen::VectorXd x = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(L.size()));

    // producer and consumer flows, balanced per component
    std::vector<double> supply(g.n_components(), 0.0), draw(g.n_components(), 0.0);
    std::vector<double> q_con(g.n_consumers(), 0.0);
    for (std::size_t k = 0; k < g.n_producers(); ++k) {
        const std::size_t e = g.producer_edges()[k];
        const double q = model.producer_flow(k, design);
        x[L.q(e)] = q;
        supply[g.component(g.edge(e).tail)] += q;
    }
    for (std::size_t k = 0; k < g.n_consumers(); ++k) {
        const std::size_t e = g.consumer_edges()[k];
        const double alpha = design.alpha(t, k);
        if (alpha <= 0)
            continue;
        const double share = std::max(period.demand[k] / g.consumer(k).peak_demand, 0.05);
        q_con[k] = alpha * nominal_primary_flow(g.consumer(k), fluid) * share;
        draw[g.component(g.edge(e).tail)] += q_con[k];
    }
    for (std::size_t k = 0; k < g.n_consumers(); ++k) {
        const std::size_t e = g.consumer_edges()[k];
        const std::size_t comp = g.component(g.edge(e).tail);
        if (draw[comp] > 0)
            x[L.q(e)] = q_con[k] * supply[comp] / draw[comp];
    }

    // pipe flows from a linear-resistance network carrying the fixed injections
    Eigen::VectorXd b = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n_nodes));
    for (std::size_t e = 0; e < g.n_edges(); ++e) {
        const auto &edge = g.edge(e);
        if (edge.kind == EdgeKind::pipe)
            continue;
        b[static_cast<Eigen::Index>(edge.tail)] -= x[L.q(e)];
        b[static_cast<Eigen::Index>(edge.head)] += x[L.q(e)];
    }
    std::vector<double> cond(g.n_pipes());
    double mean_cond = 0.0;
    for (std::size_t k = 0; k < g.n_pipes(); ++k) {
        const double d = std::max(design.d(k), 1e-6);
        cond[k] = std::pow(d, 4) / g.edge(g.pipe_edges()[k]).length;
        mean_cond += cond[k];
    }
    mean_cond = g.n_pipes() ? mean_cond / static_cast<double>(g.n_pipes()) : 1.0;
    Triplets lt;
    for (std::size_t n = 0; n < n_nodes; ++n)
        lt.emplace_back(static_cast<int>(n), static_cast<int>(n), 1e-9 * mean_cond);
    for (std::size_t k = 0; k < g.n_pipes(); ++k) {
        const auto &edge = g.edge(g.pipe_edges()[k]);
        const int i = static_cast<int>(edge.tail), j = static_cast<int>(edge.head);
        lt.emplace_back(i, i, cond[k]);
        lt.emplace_back(j, j, cond[k]);
        lt.emplace_back(i, j, -cond[k]);
        lt.emplace_back(j, i, -cond[k]);
    }
    Eigen::SparseMatrix<double> lap(static_cast<Eigen::Index>(n_nodes), static_cast<Eigen::Index>(n_nodes));
    lap.setFromTriplets(lt.begin(), lt.end());
    Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> chol(lap);
    if (chol.info() == Eigen::Success) {
        const Eigen::VectorXd pot = chol.solve(b);
        for (std::size_t k = 0; k < g.n_pipes(); ++k) {
            const std::size_t e = g.pipe_edges()[k];
            const auto &edge = g.edge(e);
            x[L.q(e)] = cond[k] * (pot[static_cast<Eigen::Index>(edge.tail)] - pot[static_cast<Eigen::Index>(edge.head)]);
        }
    }

    // pressures integrated outward from the references along pipes and open valves
    const double p0 = model.options().reference_pressure;
    std::vector<bool> seen(n_nodes, false);
    for (std::size_t n = 0; n < n_nodes; ++n)
        x[L.p(n)] = p0;
    auto edge_drop = [&](std::size_t e) -> std::optional<double> {
        const auto &edge = g.edge(e);
        const double q = x[L.q(e)];
        if (edge.kind == EdgeKind::pipe)
            return pipe_pressure_drop(q, design.d(g.entity_index(e)), edge.length, fluid);
        if (edge.kind == EdgeKind::consumer) {
            const std::size_t k = g.entity_index(e);
            const double kv = design.alpha(t, k) * g.consumer(k).valve_constant;
            if (kv <= 0)
                return std::nullopt;
            const double r = q / kv;
            return r * std::abs(r);
        }
        return std::nullopt;
    };
    for (auto ref : g.reference_nodes()) {
        std::queue<std::size_t> todo;
        todo.push(ref);
        seen[ref] = true;
        while (!todo.empty()) {
            const auto v = todo.front();
            todo.pop();
            for (auto e : g.out_edges(v)) {
                const auto w = g.edge(e).head;
                if (seen[w]) continue;
                if (auto dp = edge_drop(e)) {
                    x[L.p(w)] = x[L.p(v)] - *dp;
                    seen[w] = true;
                    todo.push(w);
                }
            }
            for (auto e : g.in_edges(v)) {
                const auto w = g.edge(e).tail;
                if (seen[w]) continue;
                if (auto dp = edge_drop(e)) {
                    x[L.p(w)] = x[L.p(v)] + *dp;
                    seen[w] = true;
                    todo.push(w);
                }
            }
        }
    }

    // temperatures: supply level on the pipe network downstream of producers
    double t_supply = -std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < g.n_producers(); ++k)
        if (model.producer_flow(k, design) > 0)
            t_supply = std::max(t_supply, model.supply_temperature(k));
    if (!std::isfinite(t_supply))
        for (std::size_t k = 0; k < g.n_producers(); ++k)
            t_supply = std::max(t_supply, model.supply_temperature(k));
    double t_return = 0.0;
    for (std::size_t k = 0; k < g.n_consumers(); ++k)
        t_return += g.consumer(k).primary_return_nom;
    t_return = g.n_consumers() ? t_return / static_cast<double>(g.n_consumers()) : 40.0;
    t_return -= period.ambient_temperature;

    std::vector<bool> feed(n_nodes, false);
    std::queue<std::size_t> todo;
    for (auto e : g.producer_edges()) {
        feed[g.edge(e).head] = true;
        todo.push(g.edge(e).head);
    }
    while (!todo.empty()) {
        const auto v = todo.front();
        todo.pop();
        auto visit = [&](std::size_t w) {
            if (!feed[w]) {
                feed[w] = true;
                todo.push(w);
            }
        };
        for (auto e : g.out_edges(v))
            if (g.edge(e).kind == EdgeKind::pipe) visit(g.edge(e).head);
        for (auto e : g.in_edges(v))
            if (g.edge(e).kind == EdgeKind::pipe) visit(g.edge(e).tail);
    }
    for (std::size_t n = 0; n < n_nodes; ++n)
        x[L.theta_node(n)] = feed[n] ? t_supply : t_return;
    for (std::size_t e = 0; e < g.n_edges(); ++e) {
        const auto &edge = g.edge(e);
        switch (edge.kind) {
        case EdgeKind::pipe: x[L.theta_edge(e)] = x[L.theta_node(edge.tail)]; break;
        case EdgeKind::consumer: x[L.theta_edge(e)] = t_return; break;
        case EdgeKind::producer: x[L.theta_edge(e)] = model.supply_temperature(g.entity_index(e)); break;
        }
    }
    for (std::size_t k = 0; k < g.n_consumers(); ++k) {
        const auto &spec = g.consumer(k);
        if (model.consumer_off(k)) {
            x[L.theta_2h(k)] = x[L.theta_2c(k)] = model.house_temperature(k);
            x[L.heat(k)] = 0.0;
        } else {
            x[L.theta_2h(k)] = spec.secondary_supply_nom - period.ambient_temperature;
            x[L.theta_2c(k)] = spec.secondary_return_nom - period.ambient_temperature;
            x[L.heat(k)] = period.demand[k];
        }
    }
    return x;
}

namespace {

double inf_norm(const Eigen::VectorXd &c)
{
    if (!c.allFinite())
        return std::numeric_limits<double>::infinity();
    return c.size() ? c.cwiseAbs().maxCoeff() : 0.0;
}

double merit(const Eigen::VectorXd &c)
{
    if (!c.allFinite())
        return std::numeric_limits<double>::infinity();
    return 0.5 * c.squaredNorm();
}

} // namespace

PeriodState solve_period(const PeriodModel &model, const DesignVector &design,
                         const std::optional<Eigen::VectorXd> &init, const SolverOptions &options)
{
    const auto &L = model.layout();
    PeriodState out;
    Eigen::VectorXd x = init ? *init : initial_state(model, design);
    if (static_cast<std::size_t>(x.size()) != L.size())
        throw InputError("initial state has the wrong size");

    const auto n = static_cast<Eigen::Index>(L.size());
    const std::size_t temp0 = L.theta_node(0);
    const std::size_t temp1 = L.heat(0); // temperatures occupy [temp0, temp1)

    Eigen::VectorXd c;
    Triplets jx;
    Eigen::SparseMatrix<double> J(static_cast<Eigen::Index>(model.n_residuals()), n);
    Eigen::SparseLU<Eigen::SparseMatrix<double>, Eigen::COLAMDOrdering<int>> lu;

    auto try_eval = [&](const Eigen::VectorXd &xx, Eigen::VectorXd &cc) {
        try {
            model.evaluate(design, xx, cc);
        } catch (const InputError &) {
            throw;
        } catch (const std::exception &) {
            cc = Eigen::VectorXd::Constant(static_cast<Eigen::Index>(model.n_residuals()),
                                           std::numeric_limits<double>::quiet_NaN());
        }
    };

    model.evaluate(design, x, c, &jx, nullptr);
    double f = merit(c);
    double res = inf_norm(c);
    int it = 0;
    std::string message = "converged";
    bool pattern = false;
    for (; it < options.max_iterations; ++it) {
        if (res <= 1e-2 * options.tolerance)
            break;
        if (!std::isfinite(res)) {
            message = "non-finite residual";
            break;
        }
        J.setFromTriplets(jx.begin(), jx.end());
        if (!pattern) {
            lu.analyzePattern(J);
            pattern = true;
        }
        lu.factorize(J);
        if (lu.info() != Eigen::Success) {
            Eigen::SparseMatrix<double> I(n, n);
            I.setIdentity();
            Eigen::SparseMatrix<double> Jr = J + 1e-12 * I;
            lu.compute(Jr);
            pattern = false;
            out.report.regularized = true;
            if (lu.info() != Eigen::Success) {
                message = "singular Jacobian";
                break;
            }
        }
        Eigen::VectorXd dx = lu.solve(-c);
        if (!dx.allFinite()) {
            message = "singular Jacobian";
            break;
        }
        double tmax = 0.0;
        for (std::size_t i = temp0; i < temp1; ++i)
            tmax = std::max(tmax, std::abs(dx[static_cast<Eigen::Index>(i)]));
        if (tmax > options.max_temperature_step)
            dx *= options.max_temperature_step / tmax;

        double step = 1.0;
        Eigen::VectorXd xn, cn;
        bool accepted = false;
        for (int ls = 0; ls < 40; ++ls) {
            xn = x + step * dx;
            try_eval(xn, cn);
            if (merit(cn) <= (1.0 - 2e-4 * step) * f) {
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if (!accepted) {
            message = "line search failed";
            break;
        }
        const double res_old = res;
        x = xn;
        model.evaluate(design, x, c, &jx, nullptr);
        f = merit(c);
        res = inf_norm(c);
        // stagnation at round-off level
        if (res <= options.tolerance && res > 0.5 * res_old)
            break;
    }
    out.report.iterations = it;
    out.report.residual_inf = res;
    out.report.converged = res <= options.tolerance;
    if (!out.report.converged && message == "converged")
        message = "iteration limit reached";
    out.report.message = out.report.converged ? "converged" : message;
    out.x = std::move(x);
    return out;
}

} // namespace dhn
