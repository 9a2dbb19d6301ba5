#include "dhn/topopt.hpp"

#include "dhn/error.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <exception>
#include <limits>
#include <numbers>
#include <numeric>
#include <thread>

namespace dhn {

namespace {

constexpr double inf = std::numeric_limits<double>::infinity();
constexpr int stall_window = 10;
constexpr double initial_velocity = 4.0; // m/s

Eigen::Index ix(std::size_t i) { return static_cast<Eigen::Index>(i); }

/// Pressure rows are in Pa; dividing by the lift bound puts every row on the same footing.
Eigen::VectorXd constraint_scale(const NetworkGraph &g, const EconomicParams &econ)
{
    Eigen::VectorXd s = Eigen::VectorXd::Ones(ix(constraints_per_period(g)));
    for (std::size_t k = 0; k < g.n_producers(); ++k)
        s[ix(g.n_consumers() + k)] = econ.max_pressure;
    return s;
}

/// Runs f(t) for every period on up to `threads` workers. Each worker owns a
/// fixed residue class of t, so results never depend on scheduling.
template <class F>
void for_periods(std::size_t T, int threads, F &&f)
{
    std::size_t workers = threads > 0 ? static_cast<std::size_t>(threads)
                                      : std::max<std::size_t>(1, std::thread::hardware_concurrency());
    workers = std::min(workers, T);
    if (workers <= 1) {
        for (std::size_t t = 0; t < T; ++t)
            f(t);
        return;
    }
    std::vector<std::exception_ptr> errors(T);
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w)
        pool.emplace_back([&, w] {
            for (std::size_t t = w; t < T; t += workers) {
                try {
                    f(t);
                } catch (...) {
                    errors[t] = std::current_exception();
                }
            }
        });
    for (auto &th : pool)
        th.join();
    for (auto &e : errors)
        if (e)
            std::rethrow_exception(e);
}

double clipped_violation(const std::vector<Eigen::VectorXd> &g)
{
    double v = 0.0;
    for (const auto &gt : g)
        if (gt.size() > 0)
            v = std::max(v, gt.maxCoeff());
    return v;
}

struct Point {
    bool ok = false;
    Eigen::VectorXd u;
    double cost = inf;  // J without the constant pipe offset
    double merit = inf;
    std::vector<Eigen::VectorXd> x;
    std::vector<Eigen::VectorXd> g; // scaled constraints per period
    Eigen::VectorXd grad;           // merit gradient in normalized variables
};

struct Multipliers {
    std::vector<Eigen::VectorXd> lambda;
    double mu = 10.0;
};

/// The optimization problem in normalized variables u in [0, 1].
class Problem {
public:
    Problem(const NetworkGraph &g, const PeriodSet &periods, const EconomicParams &econ, const OptimizerConfig &cfg,
            DesignVector base, std::vector<char> fixed, double d_floor)
        : g_(g), periods_(periods), econ_(econ), cfg_(cfg), base_(std::move(base)), fixed_(std::move(fixed))
    {
        // the offset is a design-independent constant and is added back on reporting
        econ_.offset_mode = false;
        std::tie(lo_, hi_) = design_bounds(g, base_.layout);
        for (std::size_t k = 0; k < base_.layout.n_pipes(); ++k) {
            auto &lo = lo_[ix(base_.layout.diameter(k))];
            lo = std::min(std::max(lo, d_floor), hi_[ix(base_.layout.diameter(k))]);
        }
        for (std::size_t t = 0; t < periods.size(); ++t)
            models_.emplace_back(g, periods.periods[t], t, cfg.model);
        scale_ = constraint_scale(g, econ);
        warm_.resize(periods.size());
    }

    std::size_t size() const { return base_.layout.size(); }
    bool free(std::size_t i) const { return !fixed_[i] && hi_[ix(i)] > lo_[ix(i)]; }
    void set_xi(double xi) { econ_.xi = xi; }
    void set_scale(double js) { js_ = js; }
    double scale() const { return js_; }
    int evaluations() const { return evaluations_; }
    std::size_t n_periods() const { return models_.size(); }
    std::size_t n_constraints() const { return static_cast<std::size_t>(scale_.size()); }

    DesignVector design(const Eigen::VectorXd &u) const
    {
        DesignVector d = base_;
        for (std::size_t i = 0; i < size(); ++i)
            if (free(i))
                d.values[ix(i)] = to_physical(i, u[ix(i)]);
        return d;
    }

    Eigen::VectorXd normalized(const DesignVector &d) const
    {
        Eigen::VectorXd u = Eigen::VectorXd::Zero(ix(size()));
        for (std::size_t i = 0; i < size(); ++i)
            if (free(i))
                u[ix(i)] = std::clamp(to_normalized(i, d.values[ix(i)]), 0.0, 1.0);
        return u;
    }

    // Diameters live on a log scale: pumping cost varies like d^-4.75 and the
    // interesting range sits in the lowest decade of the box.
    bool logarithmic(std::size_t i) const { return i < base_.layout.n_pipes(); }
    double to_physical(std::size_t i, double u) const
    {
        const double lo = lo_[ix(i)], hi = hi_[ix(i)];
        return logarithmic(i) ? lo * std::pow(hi / lo, u) : lo + u * (hi - lo);
    }
    double to_normalized(std::size_t i, double v) const
    {
        const double lo = lo_[ix(i)], hi = hi_[ix(i)];
        return logarithmic(i) ? std::log(std::max(v, lo) / lo) / std::log(hi / lo) : (v - lo) / (hi - lo);
    }
    double jacobian(std::size_t i, double u) const
    {
        const double lo = lo_[ix(i)], hi = hi_[ix(i)];
        return logarithmic(i) ? to_physical(i, u) * std::log(hi / lo) : hi - lo;
    }

    /// Forward solves, cost and scaled constraints; merit needs the multipliers.
    Point evaluate(const Eigen::VectorXd &u, const Multipliers &m)
    {
        ++evaluations_;
        Point pt;
        pt.u = u;
        const DesignVector d = design(u);
        const std::size_t T = models_.size();
        pt.x.resize(T);
        pt.g.resize(T);
        std::vector<double> opex(T, 0.0);
        std::vector<char> ok(T, 0);
        for_periods(T, cfg_.threads, [&](std::size_t t) {
            const auto &model = models_[t];
            auto s = warm_[t].size() ? solve_period(model, d, warm_[t], cfg_.solver)
                                     : solve_period(model, d, std::nullopt, cfg_.solver);
            if (!s.report.converged && warm_[t].size())
                s = solve_period(model, d, std::nullopt, cfg_.solver);
            if (!s.report.converged)
                return;
            pt.x[t] = s.x;
            opex[t] = heat_opex_period(model, d, s.x, periods_.active_hours) +
                      pump_opex_period(model, s.x, econ_, periods_.active_hours);
            pt.g[t] = constraint_values(model, d, s.x, econ_).cwiseQuotient(scale_);
            ok[t] = std::isfinite(opex[t]) && pt.g[t].allFinite();
        });
        if (std::find(ok.begin(), ok.end(), 0) != ok.end())
            return pt;
        double cost = pipe_capex(g_, d, econ_) + heat_capex(g_, d);
        const double f = econ_.annuity();
        for (std::size_t t = 0; t < T; ++t)
            cost += f * periods_.periods[t].weight * opex[t];
        pt.cost = cost;
        pt.ok = std::isfinite(cost);
        update_merit(pt, m);
        return pt;
    }

    void update_merit(Point &pt, const Multipliers &m) const
    {
        if (!pt.ok)
            return;
        double pen = 0.0;
        for (std::size_t t = 0; t < pt.g.size(); ++t)
            for (Eigen::Index i = 0; i < pt.g[t].size(); ++i) {
                const double l = m.lambda[t][i];
                const double a = std::max(0.0, l + m.mu * pt.g[t][i]);
                pen += (a * a - l * l) / (2.0 * m.mu);
            }
        pt.merit = pt.cost / js_ + pen;
    }

    /// Adjoint gradient of the merit at an evaluated point.
    void gradient(Point &pt, const Multipliers &m)
    {
        const DesignVector d = design(pt.u);
        const auto n = ix(size());
        Eigen::VectorXd gv = Eigen::VectorXd::Zero(n);
        pipe_capex(g_, d, econ_, &gv);
        heat_capex(g_, d, &gv);
        gv /= js_;
        const std::size_t T = models_.size();
        std::vector<Eigen::VectorXd> parts(T);
        for_periods(T, cfg_.threads, [&](std::size_t t) {
            Eigen::VectorXd w(pt.g[t].size());
            for (Eigen::Index i = 0; i < w.size(); ++i)
                w[i] = std::max(0.0, m.lambda[t][i] + m.mu * pt.g[t][i]) / scale_[i];
            const double w_opex = econ_.annuity() * periods_.periods[t].weight / js_;
            parts[t] = period_gradient(models_[t], d, pt.x[t], econ_, periods_.active_hours, w_opex, w).gradient;
        });
        for (const auto &p : parts)
            gv += p;
        pt.grad.resize(n);
        for (Eigen::Index i = 0; i < n; ++i)
            pt.grad[i] = free(static_cast<std::size_t>(i)) ? gv[i] * jacobian(static_cast<std::size_t>(i), pt.u[i]) : 0.0;
    }

    double projected_gradient(const Point &pt) const
    {
        double r = 0.0;
        for (std::size_t i = 0; i < size(); ++i)
            if (free(i)) {
                const double u = pt.u[ix(i)];
                r = std::max(r, std::abs(std::clamp(u - pt.grad[ix(i)], 0.0, 1.0) - u));
            }
        return r;
    }

    void accept(const Point &pt) { warm_ = pt.x; }

    /// J as reported: with the pipe offset when the caller asked for it.
    double offset_constant(const EconomicParams &econ) const
    {
        if (!econ.offset_mode)
            return 0.0;
        double len = 0.0;
        for (auto e : g_.pipe_edges())
            len += g_.edge(e).length;
        return 0.5 * econ.kappa0 * len;
    }

    const std::vector<PeriodModel> &models() const { return models_; }

private:
    const NetworkGraph &g_;
    const PeriodSet &periods_;
    EconomicParams econ_;
    const OptimizerConfig &cfg_;
    DesignVector base_;
    std::vector<char> fixed_;
    Eigen::VectorXd lo_, hi_, scale_;
    std::vector<PeriodModel> models_;
    std::vector<Eigen::VectorXd> warm_;
    double js_ = 1.0;
    int evaluations_ = 0;
};

struct InnerOutcome {
    int iterations = 0;
    double projected_gradient = inf;
    bool converged = false;
};

/// Projected L-BFGS with an Armijo search along the projected path.
InnerOutcome inner_solve(Problem &P, Point &cur, const Multipliers &m, const OptimizerConfig &cfg)
{
    InnerOutcome out;
    const auto n = ix(P.size());
    std::deque<Eigen::VectorXd> S, Y;
    std::deque<double> recent{cur.merit};
    for (int it = 0; it < cfg.max_inner; ++it) {
        out.projected_gradient = P.projected_gradient(cur);
        out.iterations = it;
        if (out.projected_gradient <= cfg.inner_tolerance) {
            out.converged = true;
            return out;
        }

        // variables pinned at a bound with the gradient pushing outward stay put
        Eigen::VectorXd q = cur.grad;
        std::vector<char> active(static_cast<std::size_t>(n), 0);
        for (Eigen::Index i = 0; i < n; ++i) {
            const bool pinned = !P.free(static_cast<std::size_t>(i)) || (cur.u[i] <= 0.0 && q[i] > 0.0) ||
                                (cur.u[i] >= 1.0 && q[i] < 0.0);
            if (pinned) {
                active[static_cast<std::size_t>(i)] = 1;
                q[i] = 0.0;
            }
        }
        Eigen::VectorXd dir;
        if (!S.empty()) {
            const std::size_t M = S.size();
            std::vector<double> alpha(M), rho(M);
            Eigen::VectorXd r = q;
            for (std::size_t j = M; j-- > 0;) {
                rho[j] = 1.0 / Y[j].dot(S[j]);
                alpha[j] = rho[j] * S[j].dot(r);
                r -= alpha[j] * Y[j];
            }
            r *= S.back().dot(Y.back()) / Y.back().squaredNorm();
            for (std::size_t j = 0; j < M; ++j) {
                const double beta = rho[j] * Y[j].dot(r);
                r += (alpha[j] - beta) * S[j];
            }
            for (Eigen::Index i = 0; i < n; ++i)
                if (active[static_cast<std::size_t>(i)])
                    r[i] = 0.0;
            dir = -r;
            if (!(dir.dot(q) < -1e-14 * dir.norm() * q.norm())) {
                S.clear();
                Y.clear();
            }
        }
        if (S.empty()) {
            const double qmax = q.cwiseAbs().maxCoeff();
            if (qmax == 0.0) {
                out.converged = true;
                return out;
            }
            dir = -q * (0.2 * cfg.max_step / qmax);
        }
        const double dmax = dir.cwiseAbs().maxCoeff();
        if (dmax > cfg.max_step)
            dir *= cfg.max_step / dmax;

        Point trial;
        bool accepted = false;
        double t = 1.0;
        for (int ls = 0; ls < 30; ++ls) {
            const Eigen::VectorXd un = (cur.u + t * dir).cwiseMax(0.0).cwiseMin(1.0);
            const Eigen::VectorXd step = un - cur.u;
            if (step.cwiseAbs().maxCoeff() < 1e-14)
                break;
            const double slope = cur.grad.dot(step);
            if (slope < 0.0) {
                trial = P.evaluate(un, m);
                if (trial.ok && trial.merit <= cur.merit + 1e-4 * slope) {
                    accepted = true;
                    break;
                }
            }
            t *= 0.5;
        }
        if (!accepted) {
            if (S.empty())
                return out; // steepest descent found no decrease either
            S.clear();
            Y.clear();
            continue;
        }
        P.gradient(trial, m);
        const Eigen::VectorXd s = trial.u - cur.u;
        const Eigen::VectorXd y = trial.grad - cur.grad;
        if (s.dot(y) > 1e-12 * s.norm() * y.norm()) {
            S.push_back(s);
            Y.push_back(y);
            if (static_cast<int>(S.size()) > cfg.memory) {
                S.pop_front();
                Y.pop_front();
            }
        }
        cur = std::move(trial);
        P.accept(cur);
        // stalled: the merit barely moved over the last stall_window steps
        recent.push_back(cur.merit);
        if (static_cast<int>(recent.size()) > stall_window)
            recent.pop_front();
        if (static_cast<int>(recent.size()) == stall_window &&
            recent.front() - cur.merit <= cfg.stall_tolerance * std::max(1.0, std::abs(cur.merit))) {
            out.iterations = it + 1;
            out.projected_gradient = P.projected_gradient(cur);
            out.converged = out.projected_gradient <= cfg.inner_tolerance;
            return out;
        }
    }
    out.iterations = cfg.max_inner;
    out.projected_gradient = P.projected_gradient(cur);
    out.converged = out.projected_gradient <= cfg.inner_tolerance;
    return out;
}

OptimizationResult run(const NetworkGraph &g, const PeriodSet &periods, const EconomicParams &econ,
                       const OptimizerConfig &cfg, const std::vector<double> &schedule, DesignVector start,
                       std::vector<char> fixed, double d_floor = 0.0)
{
    Problem P(g, periods, econ, cfg, start, std::move(fixed), d_floor);
    const std::size_t T = P.n_periods();
    Multipliers m;
    m.mu = cfg.penalty_init;
    m.lambda.assign(T, Eigen::VectorXd::Zero(ix(P.n_constraints())));

    Eigen::VectorXd u = P.normalized(start);
    OptimizationResult res;
    Point cur;
    bool stage_done = false;
    InnerOutcome last;
    std::optional<Point> best_feasible;

    for (std::size_t stage = 0; stage < schedule.size(); ++stage) {
        P.set_xi(schedule[stage]);
        cur = P.evaluate(u, m);
        if (!cur.ok)
            throw SolverError("the starting design cannot be simulated in every period");
        if (stage == 0) {
            P.set_scale(std::max(1.0, std::abs(cur.cost)));
            P.update_merit(cur, m);
        }
        P.accept(cur);
        P.gradient(cur, m);

        stage_done = false;
        const bool final_stage = stage + 1 == schedule.size();
        double prev_violation = inf, prev_cost = cur.cost;
        best_feasible.reset();
        for (int outer = 1; outer <= cfg.max_outer; ++outer) {
            last = inner_solve(P, cur, m, cfg);
            const double violation = std::max(0.0, clipped_violation(cur.g));

            TraceEntry e;
            e.xi = schedule[stage];
            e.outer = outer;
            e.inner_iterations = last.iterations;
            e.cost = cur.cost + P.offset_constant(econ);
            e.violation = violation;
            e.merit = cur.merit;
            e.projected_gradient = last.projected_gradient;
            e.penalty = m.mu;
            e.discreteness = discreteness_metric(g, P.design(cur.u), cfg.removal_threshold);
            res.trace.push_back(e);

            if (final_stage && violation <= cfg.outer_tolerance &&
                (!best_feasible || cur.cost < best_feasible->cost))
                best_feasible = cur;

            const bool settled = std::abs(cur.cost - prev_cost) <= cfg.settle_tolerance * std::max(1.0, std::abs(cur.cost));
            if (violation <= cfg.outer_tolerance && (last.converged || (outer > 1 && settled))) {
                stage_done = true;
                break;
            }
            prev_cost = cur.cost;

            for (std::size_t t = 0; t < T; ++t)
                m.lambda[t] = (m.lambda[t] + m.mu * cur.g[t]).cwiseMax(0.0);
            if (violation > cfg.outer_tolerance && violation > 0.25 * prev_violation)
                m.mu = std::min(m.mu * cfg.penalty_growth, cfg.penalty_max);
            prev_violation = violation;
            P.update_merit(cur, m);
            P.gradient(cur, m);
        }
        u = cur.u;
    }

    res.converged = stage_done;
    if (stage_done && last.converged)
        res.message = "converged";
    else if (stage_done)
        res.message = "converged: feasible and cost settled";
    else
        res.message = "iteration budget exhausted";
    if (!stage_done && best_feasible) {
        cur = *best_feasible;
        res.message += "; best feasible iterate returned";
    }

    res.design = P.design(cur.u);
    res.multipliers = m.lambda;
    res.projected_gradient = last.projected_gradient;
    res.evaluations = P.evaluations();
    EconomicParams report = econ;
    report.xi = schedule.back();
    res.states.resize(T);
    for (std::size_t t = 0; t < T; ++t) {
        res.states[t].x = cur.x[t];
        Eigen::VectorXd c;
        P.models()[t].evaluate(res.design, cur.x[t], c);
        res.states[t].report.converged = true;
        res.states[t].report.residual_inf = c.cwiseAbs().maxCoeff();
        res.states[t].report.message = "converged";
        res.constraints.push_back(constraint_values(P.models()[t], res.design, cur.x[t], report));
    }
    std::vector<Eigen::VectorXd> xs = cur.x;
    res.cost = total_cost(g, res.design, xs, periods, report, cfg.model);
    res.max_violation = std::max(0.0, clipped_violation(cur.g));
    res.discreteness = discreteness_metric(g, res.design, cfg.removal_threshold);
    return res;
}

} // namespace

void OptimizerConfig::validate() const
{
    if (xi_schedule.empty())
        throw InputError("the penalization schedule is empty");
    for (std::size_t i = 0; i < xi_schedule.size(); ++i) {
        if (!(xi_schedule[i] > 0))
            throw InputError("penalization values must be positive");
        if (i > 0 && !(xi_schedule[i] > xi_schedule[i - 1]))
            throw InputError("the penalization schedule must be strictly increasing");
    }
    if (!(inner_tolerance > 0) || !(outer_tolerance > 0))
        throw InputError("optimizer tolerances must be positive");
    if (!(penalty_init > 0) || !(penalty_growth > 1))
        throw InputError("penalty must start positive and grow by a factor above 1");
    if (max_outer < 1 || max_inner < 1 || memory < 1)
        throw InputError("iteration limits and memory must be at least 1");
    if (!(stall_tolerance >= 0) || !(settle_tolerance >= 0))
        throw InputError("stall and settle tolerances must be non-negative");
    if (!(max_step > 0) || !(removal_threshold >= 0))
        throw InputError("invalid step limit or removal threshold");
}

std::pair<Eigen::VectorXd, Eigen::VectorXd> design_bounds(const NetworkGraph &g, const DesignLayout &L)
{
    Eigen::VectorXd lo = Eigen::VectorXd::Zero(ix(L.size())), hi = Eigen::VectorXd::Ones(ix(L.size()));
    for (std::size_t k = 0; k < L.n_pipes(); ++k) {
        lo[ix(L.diameter(k))] = g.catalog().d_lb;
        hi[ix(L.diameter(k))] = g.catalog().d_ub;
    }
    for (std::size_t t = 0; t < L.n_periods(); ++t)
        for (std::size_t k = 0; k < L.n_producers(); ++k)
            hi[ix(L.flow(t, k))] = g.producer(k).max_flow(g.fluid());
    return {lo, hi};
}

DesignVector initial_design(const NetworkGraph &g, const PeriodSet &periods)
{
    periods.validate(g.n_consumers(), g.n_producers());
    DesignVector x(design_index_map(g, periods.size()));

    // capacity sized for the largest total demand with a margin for losses
    double peak = 0.0;
    std::size_t peak_t = 0;
    for (std::size_t t = 0; t < periods.size(); ++t) {
        const auto &p = periods.periods[t];
        const double total = std::accumulate(p.demand.begin(), p.demand.end(), 0.0);
        if (total > peak) {
            peak = total;
            peak_t = t;
        }
    }
    double avail_capacity = 0.0;
    for (std::size_t k = 0; k < g.n_producers(); ++k)
        if (periods.periods[peak_t].producer_available(k))
            avail_capacity += g.producer(k).max_capacity;
    const double fraction = avail_capacity > 0 ? std::min(1.0, 1.15 * peak / avail_capacity) : 1.0;
    for (std::size_t k = 0; k < g.n_producers(); ++k)
        x.phi(k) = fraction;

    const double rho_cp = g.fluid().rho_cp();
    double return_nom = 0.0, hottest = 0.0;
    for (std::size_t k = 0; k < g.n_consumers(); ++k)
        return_nom += g.consumer(k).primary_return_nom / static_cast<double>(g.n_consumers());
    for (std::size_t k = 0; k < g.n_producers(); ++k)
        hottest = std::max(hottest, g.producer(k).supply_temperature);

    // every pipe wide enough to carry the whole peak flow at a brisk velocity, so
    // that any route can be simulated from the start
    const double peak_flow = peak / (rho_cp * std::max(5.0, hottest - return_nom));
    const double d0 = std::sqrt(4.0 * peak_flow / (std::numbers::pi * initial_velocity));
    for (std::size_t k = 0; k < g.n_pipes(); ++k)
        x.d(k) = std::clamp(d0, g.catalog().d_min, g.catalog().d_ub);
    for (std::size_t t = 0; t < periods.size(); ++t) {
        const auto &p = periods.periods[t];
        for (std::size_t k = 0; k < g.n_consumers(); ++k)
            x.alpha(t, k) = 1.0;
        double cap = 0.0;
        for (std::size_t k = 0; k < g.n_producers(); ++k)
            if (p.producer_available(k))
                cap += g.producer(k).max_capacity;
        const double need = 1.1 * std::accumulate(p.demand.begin(), p.demand.end(), 0.0);
        for (std::size_t k = 0; k < g.n_producers(); ++k) {
            if (!p.producer_available(k) || cap <= 0) {
                x.gamma(t, k) = 0.0;
                continue;
            }
            const auto &spec = g.producer(k);
            const double lift = std::max(5.0, spec.supply_temperature - return_nom);
            x.gamma(t, k) = std::min(spec.max_flow(g.fluid()), need * spec.max_capacity / cap / (rho_cp * lift));
        }
    }
    return x;
}

Simulation simulate(const NetworkGraph &g, const DesignVector &design, const PeriodSet &periods,
                    const EconomicParams &econ, const OptimizerConfig &config)
{
    periods.validate(g.n_consumers(), g.n_producers());
    if (!(design.layout == design_index_map(g, periods.size())))
        throw InputError("design does not match the network and period set");
    Simulation sim;
    const std::size_t T = periods.size();
    std::vector<PeriodModel> models;
    for (std::size_t t = 0; t < T; ++t)
        models.emplace_back(g, periods.periods[t], t, config.model);
    sim.states.resize(T);
    for_periods(T, config.threads, [&](std::size_t t) { sim.states[t] = solve_period(models[t], design, std::nullopt, config.solver); });
    sim.converged = true;
    std::vector<Eigen::VectorXd> xs;
    const auto scale = constraint_scale(g, econ);
    for (std::size_t t = 0; t < T; ++t) {
        sim.converged = sim.converged && sim.states[t].report.converged;
        xs.push_back(sim.states[t].x);
        sim.constraints.push_back(constraint_values(models[t], design, sim.states[t].x, econ));
        if (sim.constraints.back().size() > 0)
            sim.max_violation = std::max(sim.max_violation, sim.constraints.back().cwiseQuotient(scale).maxCoeff());
    }
    sim.cost = total_cost(g, design, xs, periods, econ, config.model);
    return sim;
}

OptimizationResult optimize(const NetworkGraph &g, const PeriodSet &periods, const EconomicParams &econ,
                            const OptimizerConfig &config, const std::optional<DesignVector> &init)
{
    config.validate();
    econ.validate();
    periods.validate(g.n_consumers(), g.n_producers());
    DesignVector start = init ? *init : initial_design(g, periods);
    if (!(start.layout == design_index_map(g, periods.size())))
        throw InputError("initial design does not match the network and period set");
    std::vector<char> fixed(start.layout.size(), 0);
    for (std::size_t t = 0; t < periods.size(); ++t)
        for (std::size_t k = 0; k < g.n_producers(); ++k)
            if (!periods.periods[t].producer_available(k)) {
                fixed[start.layout.flow(t, k)] = 1;
                start.gamma(t, k) = 0.0;
            }
    return run(g, periods, econ, config, config.xi_schedule, start, std::move(fixed));
}

OptimizationResult worst_case_optimize(const NetworkGraph &g, const PeriodData &peak, double active_hours,
                                       const EconomicParams &econ, const OptimizerConfig &config)
{
    PeriodSet one;
    one.active_hours = active_hours;
    one.periods = {peak};
    one.periods[0].weight = 1.0;
    one.periods[0].peak = true;
    return optimize(g, one, econ, config);
}

namespace {

// Single-stage run at the final sharpness. With `resize` the installed pipes
// may be resized within [d_min, d_ub], otherwise diameters and capacities stay put.
OptimizationResult operate(const NetworkGraph &g, const DesignVector &infrastructure, const PeriodSet &periods,
                           const EconomicParams &econ, const OptimizerConfig &config, bool resize)
{
    config.validate();
    econ.validate();
    periods.validate(g.n_consumers(), g.n_producers());
    if (infrastructure.layout.n_pipes() != g.n_pipes() || infrastructure.layout.n_producers() != g.n_producers())
        throw InputError("infrastructure does not match the network");
    // operation carried over when the infrastructure comes with a matching schedule
    DesignVector start = infrastructure.layout == design_index_map(g, periods.size()) ? infrastructure
                                                                                      : initial_design(g, periods);
    std::vector<char> fixed(start.layout.size(), 0);
    for (std::size_t k = 0; k < g.n_pipes(); ++k) {
        start.d(k) = infrastructure.d(k);
        fixed[start.layout.diameter(k)] = resize ? 0 : 1;
    }
    for (std::size_t k = 0; k < g.n_producers(); ++k) {
        start.phi(k) = infrastructure.phi(k);
        fixed[start.layout.capacity(k)] = resize ? 0 : 1;
    }
    for (std::size_t t = 0; t < periods.size(); ++t)
        for (std::size_t k = 0; k < g.n_producers(); ++k)
            if (!periods.periods[t].producer_available(k)) {
                fixed[start.layout.flow(t, k)] = 1;
                start.gamma(t, k) = 0.0;
            }
    return run(g, periods, econ, config, {config.xi_schedule.back()}, start, std::move(fixed),
               resize ? g.catalog().d_min : 0.0);
}

} // namespace

OptimizationResult evaluate_infrastructure(const NetworkGraph &g, const DesignVector &infrastructure,
                                           const PeriodSet &periods, const EconomicParams &econ,
                                           const OptimizerConfig &config)
{
    return operate(g, infrastructure, periods, econ, config, false);
}

FinalDesign finalize_design(const NetworkGraph &g, const DesignVector &design, const PeriodSet &periods,
                            const EconomicParams &econ, const OptimizerConfig &config, bool snap_to_catalog, bool resize)
{
    FinalDesign f;
    f.rounded = round_design(g, design, periods, config.removal_threshold, snap_to_catalog);
    f.operation = operate(f.rounded.graph, f.rounded.design, f.rounded.periods, econ, config, resize && !snap_to_catalog);
    f.rounded.design = f.operation.design;
    EconomicParams report = econ;
    report.xi = config.xi_schedule.back();
    f.simulation = simulate(f.rounded.graph, f.rounded.design, f.rounded.periods, report, config);
    return f;
}

double discreteness_metric(const std::vector<double> &d, double d_min, double threshold)
{
    if (d.empty())
        return 1.0;
    const auto n = std::count_if(d.begin(), d.end(), [&](double v) { return v <= threshold || v >= d_min; });
    return static_cast<double>(n) / static_cast<double>(d.size());
}

double discreteness_metric(const NetworkGraph &g, const DesignVector &design, double threshold)
{
    std::vector<double> d(g.n_pipes());
    for (std::size_t k = 0; k < g.n_pipes(); ++k)
        d[k] = design.d(k);
    return discreteness_metric(d, g.catalog().d_min, threshold);
}

RoundedDesign round_design(const NetworkGraph &g, const DesignVector &design, const PeriodSet &periods,
                           double threshold, bool snap_to_catalog)
{
    if (design.layout.n_pipes() != g.n_pipes() || design.layout.n_periods() != periods.size())
        throw InputError("design does not match the network and period set");
    std::vector<bool> keep(g.n_pipes());
    RoundedDesign out;
    for (std::size_t k = 0; k < g.n_pipes(); ++k) {
        keep[k] = design.d(k) >= threshold;
        if (!keep[k])
            out.removed_pipes.push_back(g.edge(g.pipe_edges()[k]).id);
    }

    // supply check on the kept pipes: feed side to a producer feed, return side to a producer return
    std::vector<std::size_t> parent(g.n_nodes());
    std::iota(parent.begin(), parent.end(), 0);
    auto find = [&](std::size_t a) {
        while (parent[a] != a)
            a = parent[a] = parent[parent[a]];
        return a;
    };
    for (std::size_t k = 0; k < g.n_pipes(); ++k)
        if (keep[k]) {
            const auto &e = g.edge(g.pipe_edges()[k]);
            parent[find(e.tail)] = find(e.head);
        }
    std::vector<char> feed_root(g.n_nodes(), 0), return_root(g.n_nodes(), 0);
    for (auto e : g.producer_edges()) {
        feed_root[find(g.edge(e).head)] = 1;
        return_root[find(g.edge(e).tail)] = 1;
    }
    std::vector<bool> keep_consumer(g.n_consumers(), true);
    for (std::size_t k = 0; k < g.n_consumers(); ++k) {
        const auto &e = g.edge(g.consumer_edges()[k]);
        if (feed_root[find(e.tail)] && return_root[find(e.head)])
            continue;
        bool demanded = false;
        for (const auto &p : periods.periods)
            demanded = demanded || p.demand[k] > 0;
        if (demanded)
            throw InfeasibleError("rounding disconnects consumer '" + e.id + "'");
        keep_consumer[k] = false;
        out.removed_consumers.push_back(e.id);
    }

    out.graph = remove_pipes(g, keep, keep_consumer);
    out.periods = periods;
    for (auto &p : out.periods.periods) {
        std::vector<double> demand;
        for (std::size_t k = 0; k < g.n_consumers(); ++k)
            if (keep_consumer[k])
                demand.push_back(p.demand[k]);
        p.demand = std::move(demand);
    }
    out.design = DesignVector(design_index_map(out.graph, periods.size()));
    auto old_index = [&](std::size_t e2) { return g.entity_index(*g.find_edge(out.graph.edge(e2).id)); };
    for (std::size_t k = 0; k < out.graph.n_pipes(); ++k) {
        const double d = design.d(old_index(out.graph.pipe_edges()[k]));
        out.design.d(k) = snap_to_catalog ? g.catalog().snap_up(d) : d;
    }
    for (std::size_t k = 0; k < out.graph.n_producers(); ++k) {
        const auto k0 = old_index(out.graph.producer_edges()[k]);
        out.design.phi(k) = design.phi(k0);
        for (std::size_t t = 0; t < periods.size(); ++t)
            out.design.gamma(t, k) = design.gamma(t, k0);
    }
    for (std::size_t k = 0; k < out.graph.n_consumers(); ++k) {
        const auto k0 = old_index(out.graph.consumer_edges()[k]);
        for (std::size_t t = 0; t < periods.size(); ++t)
            out.design.alpha(t, k) = design.alpha(t, k0);
    }
    return out;
}

} // namespace dhn
