#include "dhn/timeagg.hpp"

#include "dhn/error.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <thread>

namespace dhn {

void RawSeries::validate() const
{
    const std::size_t n = temperature.size();
    if (n == 0)
        throw InputError("time series is empty");
    if (!timestamps.empty() && timestamps.size() != n)
        throw InputError("timestamp column length differs from the data");
    if (consumer_ids.size() != demand.size())
        throw InputError("consumer id list does not match the demand columns");
    for (std::size_t k = 0; k < demand.size(); ++k) {
        if (demand[k].size() != n)
            throw InputError("demand series '" + consumer_ids[k] + "' has the wrong length");
        for (double v : demand[k])
            if (!(v >= 0) || !std::isfinite(v))
                throw InputError("demand series '" + consumer_ids[k] + "' has a negative or non-finite value");
    }
    for (double v : temperature)
        if (!std::isfinite(v))
            throw InputError("temperature series has a non-finite value");
    if (!(step_hours > 0))
        throw InputError("time step must be positive");
}

bool RawSeries::active(std::size_t i) const
{
    for (const auto &d : demand)
        if (d[i] > 0)
            return true;
    return false;
}

namespace {

RawSeries select(const RawSeries &s, const std::vector<std::size_t> &keep)
{
    RawSeries out;
    out.consumer_ids = s.consumer_ids;
    out.step_hours = s.step_hours;
    out.demand.assign(s.demand.size(), {});
    for (auto i : keep) {
        if (!s.timestamps.empty())
            out.timestamps.push_back(s.timestamps[i]);
        out.temperature.push_back(s.temperature[i]);
        for (std::size_t k = 0; k < s.demand.size(); ++k)
            out.demand[k].push_back(s.demand[k][i]);
    }
    return out;
}

} // namespace

StripResult strip_inactive(const RawSeries &series, double min_span_days)
{
    series.validate();
    const std::size_t n = series.length();
    std::size_t best_begin = 0, best_len = 0, n_active = 0;
    for (std::size_t i = 0; i < n;) {
        if (series.active(i)) {
            ++n_active;
            ++i;
            continue;
        }
        std::size_t j = i;
        while (j < n && !series.active(j))
            ++j;
        if (j - i > best_len) {
            best_len = j - i;
            best_begin = i;
        }
        i = j;
    }
    if (n_active == 0)
        throw InputError("no active hours: every sample has zero demand");

    StripResult r;
    const bool strip = static_cast<double>(best_len) * series.step_hours >= min_span_days * 24.0 && best_len > 0;
    std::vector<std::size_t> keep;
    for (std::size_t i = 0; i < n; ++i)
        if (!strip || i < best_begin || i >= best_begin + best_len)
            keep.push_back(i);
    r.series = select(series, keep);
    r.removed_begin = strip ? best_begin : 0;
    r.removed_count = strip ? best_len : 0;
    r.active_hours = 8760.0 * static_cast<double>(keep.size()) / static_cast<double>(n);
    return r;
}

Observations normalize(const RawSeries &series)
{
    series.validate();
    const std::size_t n = series.length(), nc = series.n_consumers();
    Observations obs;
    auto &sc = obs.scaling;
    sc.demand_min = std::numeric_limits<double>::infinity();
    sc.demand_max = -std::numeric_limits<double>::infinity();
    for (const auto &d : series.demand)
        for (double v : d) {
            sc.demand_min = std::min(sc.demand_min, v);
            sc.demand_max = std::max(sc.demand_max, v);
        }
    if (nc == 0)
        sc.demand_min = sc.demand_max = 0.0;
    const auto [tmin, tmax] = std::minmax_element(series.temperature.begin(), series.temperature.end());
    sc.temperature_min = *tmin;
    sc.temperature_max = *tmax;
    sc.demand_constant = !(sc.demand_max > sc.demand_min);
    sc.temperature_constant = !(sc.temperature_max > sc.temperature_min);

    obs.data.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(nc + 1));
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t k = 0; k < nc; ++k)
            obs.data(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) =
                sc.demand_constant ? 0.5 : (series.demand[k][i] - sc.demand_min) / (sc.demand_max - sc.demand_min);
        obs.data(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(nc)) =
            sc.temperature_constant ? 0.5
                                    : (series.temperature[i] - sc.temperature_min) / (sc.temperature_max - sc.temperature_min);
    }
    return obs;
}

std::pair<std::vector<double>, double> denormalize(const Eigen::VectorXd &row, const Scaling &sc)
{
    const auto nc = static_cast<std::size_t>(row.size()) - 1;
    std::vector<double> demand(nc);
    for (std::size_t k = 0; k < nc; ++k)
        demand[k] = sc.demand_constant ? sc.demand_min
                                       : sc.demand_min + row[static_cast<Eigen::Index>(k)] * (sc.demand_max - sc.demand_min);
    const double t = sc.temperature_constant
                         ? sc.temperature_min
                         : sc.temperature_min + row[static_cast<Eigen::Index>(nc)] * (sc.temperature_max - sc.temperature_min);
    return {demand, t};
}

namespace {

double dist(const Eigen::MatrixXd &X, std::size_t a, std::size_t b)
{
    return (X.row(static_cast<Eigen::Index>(a)) - X.row(static_cast<Eigen::Index>(b))).norm();
}

// Splits [0, n) into contiguous chunks evaluated on worker threads.
template <class F>
void parallel_chunks(std::size_t n, F &&f)
{
    const std::size_t hw = std::max(1u, std::thread::hardware_concurrency());
    const std::size_t workers = std::min<std::size_t>(hw, std::max<std::size_t>(1, n / 256));
    if (workers <= 1) {
        f(std::size_t{0}, n, std::size_t{0});
        return;
    }
    std::vector<std::thread> pool;
    const std::size_t chunk = (n + workers - 1) / workers;
    for (std::size_t w = 0; w < workers; ++w) {
        const std::size_t lo = w * chunk, hi = std::min(n, lo + chunk);
        if (lo < hi)
            pool.emplace_back([&, lo, hi, w] { f(lo, hi, w); });
    }
    for (auto &t : pool)
        t.join();
}

} // namespace

double medoid_cost(const Eigen::MatrixXd &X, const std::vector<std::size_t> &medoids)
{
    double total = 0.0;
    for (Eigen::Index i = 0; i < X.rows(); ++i) {
        double best = std::numeric_limits<double>::infinity();
        for (auto m : medoids)
            best = std::min(best, dist(X, static_cast<std::size_t>(i), m));
        total += best;
    }
    return total;
}

namespace {

constexpr double exact_limit = 20000.0;

double combinations(std::size_t n, std::size_t k)
{
    double c = 1.0;
    for (std::size_t i = 1; i <= k; ++i)
        c = c * static_cast<double>(n - k + i) / static_cast<double>(i);
    return c;
}

} // namespace

KMedoidsResult kmedoids(const Eigen::MatrixXd &X, std::size_t k, int max_iter)
{
    const auto n = static_cast<std::size_t>(X.rows());
    if (n == 0)
        throw InputError("k-medoids needs at least one observation");
    if (k == 0)
        throw InputError("k-medoids needs k >= 1");
    if (k > n)
        throw InputError("k exceeds the number of observations");

    constexpr double inf = std::numeric_limits<double>::infinity();
    std::vector<std::size_t> medoids;
    std::vector<char> is_medoid(n, 0);
    std::vector<double> nearest(n, inf);

    // greedy build: each step adds the observation with the largest cost reduction
    for (std::size_t step = 0; step < k; ++step) {
        std::vector<double> score(n, inf);
        parallel_chunks(n, [&](std::size_t lo, std::size_t hi, std::size_t) {
            for (std::size_t c = lo; c < hi; ++c) {
                if (is_medoid[c])
                    continue;
                double total = 0.0;
                for (std::size_t o = 0; o < n; ++o)
                    total += std::min(nearest[o], dist(X, c, o));
                score[c] = total;
            }
        });
        std::size_t best = n;
        for (std::size_t c = 0; c < n; ++c)
            if (!is_medoid[c] && (best == n || score[c] < score[best]))
                best = c;
        medoids.push_back(best);
        is_medoid[best] = 1;
        for (std::size_t o = 0; o < n; ++o)
            nearest[o] = std::min(nearest[o], dist(X, best, o));
    }

    KMedoidsResult r;
    std::vector<double> d1(n), d2(n);
    std::vector<std::size_t> near(n);
    auto refresh = [&] {
        double total = 0.0;
        for (std::size_t o = 0; o < n; ++o) {
            double a = inf, b = inf;
            std::size_t ia = 0;
            for (std::size_t i = 0; i < k; ++i) {
                const double d = dist(X, o, medoids[i]);
                if (d < a) {
                    b = a;
                    a = d;
                    ia = i;
                } else if (d < b) {
                    b = d;
                }
            }
            d1[o] = a;
            d2[o] = b;
            near[o] = ia;
            total += a;
        }
        return total;
    };
    double cost = refresh();
    r.cost_history.push_back(cost);

    // swap phase: evaluate all (medoid, candidate) exchanges at once per candidate
    const double tol = 1e-12 * std::max(1.0, cost);
    for (int it = 0; it < max_iter && k < n; ++it) {
        struct Best {
            double delta = 0.0;
            std::size_t cand = 0, slot = 0;
            bool found = false;
        };
        const std::size_t hw = std::max(1u, std::thread::hardware_concurrency());
        std::vector<Best> per_worker(hw + 1);
        parallel_chunks(n, [&](std::size_t lo, std::size_t hi, std::size_t w) {
            Best best;
            std::vector<double> delta(k);
            for (std::size_t c = lo; c < hi; ++c) {
                if (is_medoid[c])
                    continue;
                double shared = 0.0;
                std::fill(delta.begin(), delta.end(), 0.0);
                for (std::size_t o = 0; o < n; ++o) {
                    const double doc = dist(X, o, c);
                    const double gain = std::min(doc - d1[o], 0.0);
                    shared += gain;
                    delta[near[o]] += std::min(d2[o], doc) - d1[o] - gain;
                }
                for (std::size_t i = 0; i < k; ++i) {
                    const double total = shared + delta[i];
                    if (total < best.delta - tol) {
                        best = {total, c, i, true};
                    }
                }
            }
            per_worker[w] = best;
        });
        Best best;
        for (const auto &b : per_worker) // workers cover increasing index ranges
            if (b.found && b.delta < best.delta - tol)
                best = b;
        if (!best.found)
            break;
        is_medoid[medoids[best.slot]] = 0;
        medoids[best.slot] = best.cand;
        is_medoid[best.cand] = 1;
        cost = refresh();
        r.cost_history.push_back(cost);
        r.iterations = it + 1;
    }

    // PAM stops at a local optimum; small instances are settled by enumeration
    if (k < n && combinations(n, k) <= exact_limit) {
        std::vector<std::size_t> pick(k), best_pick;
        std::iota(pick.begin(), pick.end(), 0);
        double best_cost = cost - tol;
        for (;;) {
            const double c = medoid_cost(X, pick);
            if (c < best_cost) {
                best_cost = c;
                best_pick = pick;
            }
            std::size_t i = k;
            while (i > 0 && pick[i - 1] == n - k + i - 1)
                --i;
            if (i == 0)
                break;
            ++pick[i - 1];
            for (std::size_t j = i; j < k; ++j)
                pick[j] = pick[j - 1] + 1;
        }
        if (!best_pick.empty()) {
            for (auto m : medoids)
                is_medoid[m] = 0;
            medoids = best_pick;
            for (auto m : medoids)
                is_medoid[m] = 1;
            cost = refresh();
            r.cost_history.push_back(cost);
        }
    }

    // equal-cost ties inside a cluster go to the lowest observation index
    bool moved = false;
    for (std::size_t i = 0; i < k; ++i) {
        std::vector<std::size_t> members;
        for (std::size_t o = 0; o < n; ++o)
            if (near[o] == i)
                members.push_back(o);
        auto within = [&](std::size_t m) {
            double s = 0.0;
            for (auto o : members)
                s += dist(X, m, o);
            return s;
        };
        const double current = within(medoids[i]);
        for (auto m : members) {
            if (m >= medoids[i])
                break;
            if (within(m) <= current + tol) {
                is_medoid[medoids[i]] = 0;
                medoids[i] = m;
                is_medoid[m] = 1;
                moved = true;
                break;
            }
        }
    }
    if (moved) {
        cost = refresh();
        r.cost_history.push_back(cost);
    }

    r.medoids = medoids;
    r.assignment = near;
    r.weights.assign(k, 0.0);
    for (std::size_t o = 0; o < n; ++o)
        r.weights[near[o]] += 1.0;
    for (auto &w : r.weights)
        w /= static_cast<double>(n);
    return r;
}

PeriodData build_peak_period(const RawSeries &series)
{
    series.validate();
    PeriodData p;
    p.name = "peak";
    p.peak = true;
    p.weight = 0.0;
    for (const auto &d : series.demand)
        p.demand.push_back(*std::max_element(d.begin(), d.end()));
    p.ambient_temperature = *std::min_element(series.temperature.begin(), series.temperature.end());
    return p;
}

Aggregation aggregate(const RawSeries &series, std::size_t k, double active_hours, int max_iter)
{
    Aggregation a;
    const auto obs = normalize(series);
    a.scaling = obs.scaling;
    a.clustering = kmedoids(obs.data, k, max_iter);

    std::vector<std::size_t> order(k);
    std::iota(order.begin(), order.end(), 0);
    const auto &cl = a.clustering;
    std::stable_sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) {
        if (cl.weights[x] != cl.weights[y])
            return cl.weights[x] > cl.weights[y];
        return cl.medoids[x] < cl.medoids[y];
    });
    a.periods.active_hours = active_hours;
    for (std::size_t r = 0; r < k; ++r) {
        const std::size_t c = order[r];
        const std::size_t m = cl.medoids[c];
        PeriodData p;
        p.name = "p" + std::to_string(r + 1);
        p.weight = cl.weights[c];
        // raw values of the medoid observation, not a round trip through the scaling
        for (const auto &d : series.demand)
            p.demand.push_back(d[m]);
        p.ambient_temperature = series.temperature[m];
        p.medoid_index = static_cast<long>(m);
        if (!series.timestamps.empty())
            p.medoid_timestamp = series.timestamps[m];
        a.periods.periods.push_back(std::move(p));
    }
    a.periods.periods.push_back(build_peak_period(series));
    return a;
}

double relative_cost_error(double j_a, double j_b)
{
    if (!std::isfinite(j_a) || !std::isfinite(j_b) || j_b == 0.0)
        throw InputError("missing reference evaluation for the relative cost error");
    return std::abs((j_a - j_b) / j_b);
}

} // namespace dhn
