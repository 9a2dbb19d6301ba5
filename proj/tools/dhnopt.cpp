// Command-line front end: aggregate a demand series, optimize a network over
// the resulting periods, re-simulate a stored design, print a run report.

#include "dhn/error.hpp"
#include "dhn/io.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <limits>

namespace fs = std::filesystem;
using namespace dhn;

namespace {

enum Exit { ok = 0, infeasible = 2, not_converged = 3, bad_input = 4 };

NetworkGraph load_network(const fs::path &p)
{
    if (!fs::exists(p))
        throw InputError("network file not found: " + p.string());
    return read_network(p);
}

RunConfig load_config(const std::string &p)
{
    return p.empty() ? RunConfig{} : read_config(p);
}

EconomicParams reporting_econ(const RunConfig &rc)
{
    EconomicParams e = rc.econ;
    e.xi = rc.optimizer.xi_schedule.back();
    return e;
}

std::size_t peak_index(const PeriodSet &periods)
{
    for (std::size_t t = 0; t < periods.size(); ++t)
        if (periods.periods[t].peak)
            return t;
    throw InputError("the period set has no peak period");
}

struct Final {
    RoundedDesign rounded;
    Simulation sim;
    Report report;
};

// drops the pipes missing from a stored design, re-simulates from a cold start
// and prices the installed network
Final finish(const NetworkGraph &g, const DesignVector &design, const PeriodSet &periods, const RunConfig &rc)
{
    Final f;
    f.rounded = round_design(g, design, periods, std::numeric_limits<double>::min(), false);
    const auto econ = reporting_econ(rc);
    f.sim = simulate(f.rounded.graph, f.rounded.design, f.rounded.periods, econ, rc.optimizer);
    f.report = make_report(f.rounded.graph, f.rounded.design, f.rounded.periods, f.sim, econ, rc.optimizer.model);
    f.report.removed_pipes = f.rounded.removed_pipes;
    f.report.removed_consumers = f.rounded.removed_consumers;
    return f;
}

void print_summary(const Report &r)
{
    std::printf("total cost        %.2f EUR\n", r.cost.total);
    std::printf("  pipe capex      %.2f\n", r.cost.pipe_capex);
    std::printf("  heat capex      %.2f\n", r.cost.heat_capex);
    std::printf("  heat opex       %.2f\n", r.cost.heat_opex);
    std::printf("  pump opex       %.2f\n", r.cost.pump_opex);
    std::printf("waste heat share  %.2f %%\n", r.waste_heat_share);
    std::printf("avg diameter      %.2f cm\n", r.average_diameter_cm);
    std::printf("max violation     %.3g\n", r.max_violation);
    for (const auto &p : r.producers)
        std::printf("producer %-10s capacity %.1f kW, capacity factor %.3f\n", p.id.c_str(), p.capacity / 1e3,
                    p.capacity_factor);
    if (!r.removed_pipes.empty())
        std::printf("removed pipes     %zu\n", r.removed_pipes.size());
    std::printf("status            %s\n", r.message.c_str());
}

int status_code(const Final &f, const OptimizerConfig &cfg, bool optimizer_converged)
{
    if (!f.sim.converged)
        return not_converged;
    if (f.sim.max_violation > cfg.outer_tolerance)
        return infeasible;
    return optimizer_converged ? ok : not_converged;
}

int cmd_aggregate(const std::string &series_path, int k, double strip_days, const std::string &out)
{
    const auto raw = read_series_csv(series_path);
    const auto strip = strip_inactive(raw, strip_days);
    const auto agg = aggregate(strip.series, static_cast<std::size_t>(k), strip.active_hours);
    write_periods(out, periods_from_aggregation(agg, strip.series.consumer_ids));
    std::printf("K = %.1f h/yr (%zu inactive samples removed)\n", strip.active_hours, strip.removed_count);
    for (const auto &p : agg.periods.periods)
        std::printf("%-6s weight %.4f  T_amb %6.2f C  %s\n", p.name.c_str(), p.weight, p.ambient_temperature,
                    p.medoid_timestamp.c_str());
    return ok;
}

int cmd_optimize(const std::string &network_path, const std::string &periods_path, const std::string &config_path,
                 const std::string &mode, const std::vector<std::string> &unavailable, const std::string &out)
{
    const auto g = load_network(network_path);
    auto file = read_periods(periods_path);
    for (const auto &spec : unavailable) {
        const auto at = spec.rfind('@');
        if (at == std::string::npos || spec.substr(at + 1) != "peak")
            throw InputError("--unavailable expects <producer_id>@peak, got '" + spec + "'");
        mask_producer_at_peak(file, g, spec.substr(0, at));
    }
    const auto periods = bind_periods(file, g);
    const auto rc = load_config(config_path);

    OptimizationResult res;
    DesignVector sized;
    if (mode == "worst-case") {
        res = worst_case_optimize(g, periods.periods[peak_index(periods)], periods.active_hours, rc.econ, rc.optimizer);
        // the peak-sized infrastructure, operated over the full period set
        sized = initial_design(g, periods);
        for (std::size_t j = 0; j < g.n_pipes(); ++j)
            sized.d(j) = res.design.d(j);
        for (std::size_t j = 0; j < g.n_producers(); ++j)
            sized.phi(j) = res.design.phi(j);
    } else {
        res = optimize(g, periods, rc.econ, rc.optimizer);
        sized = res.design;
    }
    // worst-case sizing is kept as is, only its operation is re-optimized
    const auto fin = finalize_design(g, sized, periods, rc.econ, rc.optimizer, rc.snap_to_catalog, mode != "worst-case");
    Final f{fin.rounded, fin.simulation, {}};
    f.report = make_report(f.rounded.graph, f.rounded.design, f.rounded.periods, f.sim, reporting_econ(rc),
                           rc.optimizer.model);
    f.report.removed_pipes = f.rounded.removed_pipes;
    f.report.removed_consumers = f.rounded.removed_consumers;
    const bool converged = res.converged && fin.operation.converged;
    f.report.converged = converged && f.sim.converged;
    f.report.message = res.message + "; operation on the installed network: " + fin.operation.message;
    f.report.optimizer_cost = res.cost.total;
    auto trace = res.trace;
    trace.insert(trace.end(), fin.operation.trace.begin(), fin.operation.trace.end());

    Bundle b;
    b.graph = &f.rounded.graph;
    b.design = f.rounded.design;
    b.periods = f.rounded.periods;
    b.simulation = f.sim;
    b.trace = trace;
    b.report = f.report;
    write_bundle(out, b);
    print_summary(f.report);
    return status_code(f, rc.optimizer, converged);
}

int cmd_simulate(const std::string &network_path, const std::string &design_path, const std::string &periods_path,
                 const std::string &config_path, const std::string &out)
{
    const auto g = load_network(network_path);
    const auto periods = bind_periods(read_periods(periods_path), g);
    const auto rc = load_config(config_path);
    const auto design = read_design(design_path, g, periods.size());
    auto f = finish(g, design, periods, rc);
    f.report.converged = f.sim.converged;
    f.report.optimizer_cost = f.report.cost.total;
    std::string flagged;
    for (const auto &p : f.report.periods)
        if (!p.converged)
            flagged += (flagged.empty() ? "" : ", ") + p.name;
    f.report.message = flagged.empty() ? "simulated" : "not converged in periods: " + flagged;

    Bundle b;
    b.graph = &f.rounded.graph;
    b.design = f.rounded.design;
    b.periods = f.rounded.periods;
    b.simulation = f.sim;
    b.report = f.report;
    write_bundle(out, b);
    print_summary(f.report);
    if (!flagged.empty())
        std::fprintf(stderr, "forward solve did not converge in: %s\n", flagged.c_str());
    return status_code(f, rc.optimizer, true);
}

int cmd_report(const std::string &run)
{
    const auto r = report_from_json(read_json(fs::path(run) / "report.json", "report"));
    std::ifstream trace(fs::path(run) / "trace.csv");
    if (trace) {
        const auto entries = parse_trace_csv(trace);
        if (!entries.empty())
            std::printf("optimizer trace   %zu outer iterations, final xi %.0f\n", entries.size(), entries.back().xi);
    }
    print_summary(r);
    for (const auto &p : r.periods)
        std::printf("period %-6s weight %.4f  supply %.1f-%.1f C  lift %.0f Pa  loss %.1f kW  margin %.2e\n",
                    p.name.c_str(), p.weight, p.min_supply_temperature, p.max_supply_temperature,
                    p.max_pressure_lift, p.heat_loss / 1e3, p.constraint_margin);
    return ok;
}

} // namespace

int main(int argc, char **argv)
{
    CLI::App app{"district heating network design optimizer"};
    app.require_subcommand(1);

    std::string series, out, network, periods, config, design, mode = "multi-period", run;
    int k = 3;
    double strip_days = 14.0;
    std::vector<std::string> unavailable;

    auto *agg = app.add_subcommand("aggregate", "cluster a demand series into representative periods");
    agg->add_option("--series", series, "time series CSV")->required();
    agg->add_option("--k", k, "number of representative periods")->required()->check(CLI::PositiveNumber);
    agg->add_option("--strip-days", strip_days, "minimum length of a removable inactive span [days]")
        ->check(CLI::NonNegativeNumber);
    agg->add_option("--out", out, "periods JSON")->required();

    auto *opt = app.add_subcommand("optimize", "optimize topology, sizing and operation");
    opt->add_option("--network", network, "network JSON")->required();
    opt->add_option("--periods", periods, "periods JSON")->required();
    opt->add_option("--config", config, "key = value settings");
    opt->add_option("--mode", mode, "study mode")->check(CLI::IsMember({"worst-case", "multi-period"}));
    opt->add_option("--unavailable", unavailable, "<producer_id>@peak");
    opt->add_option("--out", out, "result directory")->required();

    auto *sim = app.add_subcommand("simulate", "evaluate a fixed design over a period set");
    sim->add_option("--network", network, "network JSON")->required();
    sim->add_option("--design", design, "design JSON")->required();
    sim->add_option("--periods", periods, "periods JSON")->required();
    sim->add_option("--config", config, "key = value settings");
    sim->add_option("--out", out, "result directory")->required();

    auto *rep = app.add_subcommand("report", "print the report of a result directory");
    rep->add_option("--run", run, "result directory")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError &e) {
        const int code = app.exit(e);
        return code == 0 ? ok : bad_input;
    }

    try {
        if (*agg)
            return cmd_aggregate(series, k, strip_days, out);
        if (*opt)
            return cmd_optimize(network, periods, config, mode, unavailable, out);
        if (*sim)
            return cmd_simulate(network, design, periods, config, out);
        return cmd_report(run);
    } catch (const InputError &e) {
        std::fprintf(stderr, "input error: %s\n", e.what());
        return bad_input;
    } catch (const InfeasibleError &e) {
        std::fprintf(stderr, "infeasible: %s\n", e.what());
        return infeasible;
    } catch (const SolverError &e) {
        std::fprintf(stderr, "solver failure: %s\n", e.what());
        return not_converged;
    } catch (const nlohmann::json::exception &e) {
        std::fprintf(stderr, "input error: %s\n", e.what());
        return bad_input;
    }
}
