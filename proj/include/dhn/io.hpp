#pragma once

// File formats (network, series, periods, design, run config) and the result
// bundle with its study metrics.

#include "dhn/timeagg.hpp"
#include "dhn/topopt.hpp"

#include <json.hpp>

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

namespace dhn {

inline constexpr int schema_version = 1;

// ---- network ------------------------------------------------------------

NetworkGraph network_from_json(const nlohmann::json &j);
nlohmann::json network_to_json(const NetworkGraph &graph);
NetworkGraph read_network(const std::filesystem::path &path);
void write_network(const std::filesystem::path &path, const NetworkGraph &graph);

// ---- time series --------------------------------------------------------

/// CSV with a timestamp column, one demand column per consumer [W] and a
/// temperature column [degC]. Parse errors name the source and line.
RawSeries parse_series_csv(std::istream &in, const std::string &source = "series");
RawSeries read_series_csv(const std::filesystem::path &path);
void write_series_csv(std::ostream &out, const RawSeries &series);

// ---- periods ------------------------------------------------------------

/// Period data keyed by consumer and producer ids, independent of any graph.
struct PeriodsFile {
    std::vector<std::string> consumer_ids;
    PeriodSet periods;                                // demand in consumer_ids order, availability unset
    std::vector<std::vector<std::string>> unavailable; // producer ids per period

    bool operator==(const PeriodsFile &) const;
};

PeriodsFile periods_from_aggregation(const Aggregation &aggregation, const std::vector<std::string> &consumer_ids);
PeriodsFile periods_from_json(const nlohmann::json &j);
nlohmann::json periods_to_json(const PeriodsFile &periods);
PeriodsFile read_periods(const std::filesystem::path &path);
void write_periods(const std::filesystem::path &path, const PeriodsFile &periods);

/// Reorders demand to the graph's consumer order and resolves availability.
/// Every graph consumer must appear in the file.
PeriodSet bind_periods(const PeriodsFile &file, const NetworkGraph &graph);

/// Marks `producer_id` unavailable in every peak period. Throws if unknown.
void mask_producer_at_peak(PeriodsFile &file, const NetworkGraph &graph, const std::string &producer_id);

// ---- design -------------------------------------------------------------

/// Installed pipes keyed by id; pipes of the graph absent from the file count
/// as removed (diameter 0).
nlohmann::json design_to_json(const NetworkGraph &graph, const DesignVector &design, const PeriodSet &periods);
DesignVector design_from_json(const nlohmann::json &j, const NetworkGraph &graph, std::size_t n_periods);
DesignVector read_design(const std::filesystem::path &path, const NetworkGraph &graph, std::size_t n_periods);

// ---- run configuration --------------------------------------------------

struct RunConfig {
    EconomicParams econ;
    OptimizerConfig optimizer;
    bool snap_to_catalog = false;
};

/// key = value lines, '#' starts a comment. Unknown keys are errors.
RunConfig parse_config(std::istream &in, const std::string &source = "config");
RunConfig read_config(const std::filesystem::path &path);

// ---- metrics ------------------------------------------------------------

/// 100 * sum_t w_t Q_waste,t / sum_t w_t Q_total,t with heat[t][producer].
double waste_heat_share(const std::vector<std::vector<double>> &heat, const std::vector<double> &weights,
                        const std::vector<bool> &waste);
/// Length-weighted mean diameter of the installed pipes [cm].
double average_installed_diameter(const std::vector<double> &d, const std::vector<double> &length);

/// Delivered heat per period and producer [W].
std::vector<std::vector<double>> producer_heat(const NetworkGraph &graph, const PeriodSet &periods,
                                               const std::vector<PeriodState> &states,
                                               const ModelOptions &options = {});

struct PeriodSummary {
    std::string name;
    double weight = 0.0;
    bool converged = false;
    double residual = 0.0;
    double min_supply_temperature = 0.0; // degC, over consumer feeds
    double max_supply_temperature = 0.0;
    double max_pressure_lift = 0.0;      // Pa
    double total_flow = 0.0;             // m^3/s through the producers
    double heat_loss = 0.0;              // W
    std::vector<double> producer_heat;   // W
    double constraint_margin = 0.0;      // largest scaled constraint value, negative when slack

    bool operator==(const PeriodSummary &) const = default;
};

struct ProducerSummary {
    std::string id;
    bool waste_heat = false;
    double capacity = 0.0;         // W installed
    double capacity_factor = 0.0;  // weighted mean output over installed capacity

    bool operator==(const ProducerSummary &) const = default;
};

struct Report {
    CostBreakdown cost;
    double optimizer_cost = 0.0;          // J of the optimizer's own last iterate
    double waste_heat_share = 0.0;        // %
    double average_diameter_cm = 0.0;     // installed pipes
    double discreteness = 0.0;
    double max_violation = 0.0;
    bool converged = false;
    std::string message;
    std::vector<std::string> removed_pipes;
    std::vector<std::string> removed_consumers;
    std::vector<ProducerSummary> producers;
    std::vector<PeriodSummary> periods;

    bool operator==(const Report &) const;
};

/// Metrics of a simulated design. The graph is the installed (rounded) one.
Report make_report(const NetworkGraph &graph, const DesignVector &design, const PeriodSet &periods,
                   const Simulation &sim, const EconomicParams &econ, const ModelOptions &options = {});

nlohmann::json report_to_json(const Report &report);
Report report_from_json(const nlohmann::json &j);

void write_trace_csv(std::ostream &out, const std::vector<TraceEntry> &trace);
std::vector<TraceEntry> parse_trace_csv(std::istream &in);

/// Per-period node and edge tables with absolute temperatures.
void write_period_csvs(const std::filesystem::path &dir, const NetworkGraph &graph, const DesignVector &design,
                       const PeriodSet &periods, const std::vector<PeriodState> &states);

/// Pipes as line strings (diameter, per-period temperatures), consumers and producers as points.
nlohmann::json network_geojson(const NetworkGraph &graph, const DesignVector &design, const PeriodSet &periods,
                               const std::vector<PeriodState> &states);

struct Bundle {
    const NetworkGraph *graph = nullptr; // installed network
    DesignVector design;
    PeriodSet periods;
    Simulation simulation;
    std::vector<TraceEntry> trace;
    Report report;
};
void write_bundle(const std::filesystem::path &dir, const Bundle &bundle);

nlohmann::json read_json(const std::filesystem::path &path, const std::string &what);
void write_json(const std::filesystem::path &path, const nlohmann::json &j);

} // namespace dhn
