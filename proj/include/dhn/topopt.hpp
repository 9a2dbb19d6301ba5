#pragma once

// Topology and sizing optimizer: augmented Lagrangian over a projected
// limited-memory quasi-Newton inner loop, continuation on the penalization
// sharpness, and rounding to a buildable network.

#include "dhn/adjoint.hpp"

#include <optional>
#include <string>
#include <vector>

namespace dhn {

struct OptimizerConfig {
    std::vector<double> xi_schedule{50.0, 150.0, 400.0, 1000.0}; // 1/m, strictly increasing
    double penalty_init = 10.0;
    double penalty_growth = 10.0;
    double penalty_max = 1e9;
    double inner_tolerance = 1e-5; // projected gradient, normalized variables
    double outer_tolerance = 1e-4; // scaled constraint violation
    double stall_tolerance = 1e-8;  // relative merit decrease over ten inner steps that counts as stalled
    double settle_tolerance = 1e-6; // relative cost change between feasible outer steps that ends a stage
    int max_outer = 20;
    int max_inner = 1500;
    int memory = 30;
    double max_step = 0.25;            // largest move of a normalized variable per inner step
    double removal_threshold = 0.01;   // m; pipes below it are dropped when rounding
    int threads = 0;                   // period solves in parallel; 0 picks the hardware count
    SolverOptions solver;
    ModelOptions model;

    void validate() const;
};

struct TraceEntry {
    double xi = 0.0;
    int outer = 0;
    int inner_iterations = 0;
    double cost = 0.0;       // J, EUR
    double violation = 0.0;  // largest scaled constraint value, clipped at 0
    double merit = 0.0;      // augmented Lagrangian value at the end of the inner loop
    double projected_gradient = 0.0;
    double penalty = 0.0;
    double discreteness = 0.0;
};

/// Evaluation of a fixed design over a period set.
struct Simulation {
    std::vector<PeriodState> states;
    CostBreakdown cost;
    std::vector<Eigen::VectorXd> constraints; // raw h per period
    bool converged = false;
    double max_violation = 0.0; // scaled: pressure rows divided by the lift bound
};

struct OptimizationResult {
    DesignVector design;
    std::vector<PeriodState> states;
    CostBreakdown cost;
    std::vector<Eigen::VectorXd> constraints;
    std::vector<Eigen::VectorXd> multipliers;
    double max_violation = 0.0;
    double projected_gradient = 0.0;
    double discreteness = 0.0;
    std::vector<TraceEntry> trace;
    int evaluations = 0;
    bool converged = false;
    std::string message;
};

/// Starting point: uniform diameters sized for the total peak flow, capacity at
/// the peak-implied fraction, valves open, producer flows from the demand.
DesignVector initial_design(const NetworkGraph &graph, const PeriodSet &periods);

/// Box bounds of every design variable in physical units.
std::pair<Eigen::VectorXd, Eigen::VectorXd> design_bounds(const NetworkGraph &graph, const DesignLayout &layout);

/// Solves every period for a fixed design and prices the result.
Simulation simulate(const NetworkGraph &graph, const DesignVector &design, const PeriodSet &periods,
                    const EconomicParams &econ, const OptimizerConfig &config = {});

OptimizationResult optimize(const NetworkGraph &graph, const PeriodSet &periods, const EconomicParams &econ,
                            const OptimizerConfig &config = {}, const std::optional<DesignVector> &init = std::nullopt);

/// Optimization over the peak period alone, its OPEX weighted by one.
OptimizationResult worst_case_optimize(const NetworkGraph &graph, const PeriodData &peak, double active_hours,
                                       const EconomicParams &econ, const OptimizerConfig &config = {});

/// Keeps the diameters and capacities of `infrastructure` and optimizes only
/// the operation (valves and producer flows) over `periods`, starting from the
/// operation in `infrastructure` when its layout matches.
OptimizationResult evaluate_infrastructure(const NetworkGraph &graph, const DesignVector &infrastructure,
                                           const PeriodSet &periods, const EconomicParams &econ,
                                           const OptimizerConfig &config = {});

/// Fraction of pipes outside the band (threshold, d_min).
double discreteness_metric(const std::vector<double> &d, double d_min, double threshold);
double discreteness_metric(const NetworkGraph &graph, const DesignVector &design, double threshold);

struct RoundedDesign {
    NetworkGraph graph;
    DesignVector design;
    PeriodSet periods; // demand columns of removed consumers dropped
    std::vector<std::string> removed_pipes;
    std::vector<std::string> removed_consumers; // cut off and without demand in every period
};

/// Drops pipes thinner than `threshold` and optionally snaps the rest up to the
/// catalog. Throws InfeasibleError if a consumer with demand loses its supply.
RoundedDesign round_design(const NetworkGraph &graph, const DesignVector &design, const PeriodSet &periods,
                           double threshold, bool snap_to_catalog);

struct FinalDesign {
    RoundedDesign rounded;          // installed network and its re-optimized design
    OptimizationResult operation;   // sizing and operation re-optimized on the installed network
    Simulation simulation;          // cold re-simulation of the final design
};

/// Rounds a design, re-optimizes the installed network over the period set and
/// re-simulates it from a cold start. With `resize` the pipes (kept at d_min or
/// above) and capacities are re-optimized with the topology fixed; otherwise
/// only the operation is.
FinalDesign finalize_design(const NetworkGraph &graph, const DesignVector &design, const PeriodSet &periods,
                            const EconomicParams &econ, const OptimizerConfig &config, bool snap_to_catalog,
                            bool resize);

} // namespace dhn
