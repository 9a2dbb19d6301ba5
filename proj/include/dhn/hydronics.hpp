#pragma once

// Quasi-steady thermal-hydraulic network model. One PeriodModel holds the
// period-dependent constants and evaluates the residual system c(design, x)
// together with its Jacobians with respect to the state and the design.

#include "dhn/network.hpp"

#include <Eigen/Core>
#include <Eigen/SparseCore>

#include <array>
#include <optional>
#include <string>
#include <vector>

namespace dhn {

/// One representative (or peak) operating period.
struct PeriodData {
    std::string name;
    double ambient_temperature = 0.0; // degC
    std::vector<double> demand;       // W per consumer
    double weight = 0.0;
    bool peak = false;
    std::vector<bool> available; // per producer; empty means all available
    std::string medoid_timestamp;
    long medoid_index = -1;

    bool producer_available(std::size_t k) const { return available.empty() || available[k]; }
};

/// A set of periods sharing the conversion factor K [h/yr].
struct PeriodSet {
    std::vector<PeriodData> periods;
    double active_hours = 8760.0;

    std::size_t size() const { return periods.size(); }
    void validate(std::size_t n_consumers, std::size_t n_producers) const;
};

struct ModelOptions {
    double reference_pressure = 101325.0; // Pa
    double flow_smoothing = 1e-7;         // m^3/s, |q| ~ sqrt(q^2 + delta^2)
    double valve_smoothing = 1.0;         // Pa, signed root smoothing
    double junction_regularization = 1e-9;
    double radiator_smoothing = 1e-2;     // K, keeps radiator LMTD arguments positive
    double pressure_scale = 1e5;          // Pa
    double flow_scale = 1e-3;             // m^3/s
};

/// Offsets of the state blocks [q | p | theta_node | theta_edge | theta_2h | theta_2c | Q_hs].
struct StateLayout {
    std::size_t n_edges = 0, n_nodes = 0, n_consumers = 0;

    StateLayout() = default;
    explicit StateLayout(const NetworkGraph &g)
        : n_edges(g.n_edges()), n_nodes(g.n_nodes()), n_consumers(g.n_consumers())
    {
    }
    std::size_t q(std::size_t e) const { return e; }
    std::size_t p(std::size_t n) const { return n_edges + n; }
    std::size_t theta_node(std::size_t n) const { return n_edges + n_nodes + n; }
    std::size_t theta_edge(std::size_t e) const { return n_edges + 2 * n_nodes + e; }
    std::size_t theta_2h(std::size_t k) const { return 2 * n_edges + 2 * n_nodes + k; }
    std::size_t theta_2c(std::size_t k) const { return 2 * n_edges + 2 * n_nodes + n_consumers + k; }
    std::size_t heat(std::size_t k) const { return 2 * n_edges + 2 * n_nodes + 2 * n_consumers + k; }
    std::size_t size() const { return 2 * n_edges + 2 * n_nodes + 3 * n_consumers; }
};

struct ConvergenceReport {
    bool converged = false;
    int iterations = 0;
    double residual_inf = 0.0;
    bool regularized = false;
    std::string message;
};

/// Physical state of one period; temperatures are relative to ambient.
struct PeriodState {
    Eigen::VectorXd x;
    ConvergenceReport report;
};

using Triplets = std::vector<Eigen::Triplet<double>>;

class PeriodModel {
public:
    /// `period_index` locates the per-period valve/flow block in the design layout.
    PeriodModel(const NetworkGraph &graph, const PeriodData &period, std::size_t period_index,
                ModelOptions options = {});

    const NetworkGraph &graph() const { return *graph_; }
    const PeriodData &period() const { return *period_; }
    std::size_t period_index() const { return t_; }
    const StateLayout &layout() const { return layout_; }
    const ModelOptions &options() const { return opt_; }
    std::size_t n_residuals() const { return n_rows_; }

    /// Scaled residual vector; optional Jacobians w.r.t. the state (jx) and the
    /// full design vector (jd). Rows are ordered: pipe momentum, pipe energy,
    /// junction mass (reference nodes skipped), junction energy, consumer
    /// blocks of five, producer blocks of two, reference pressures.
    void evaluate(const DesignVector &design, const Eigen::VectorXd &x, Eigen::VectorXd &c, Triplets *jx = nullptr,
                  Triplets *jd = nullptr) const;
    Eigen::VectorXd residual(const DesignVector &design, const Eigen::VectorXd &x) const;

    /// Unscaled junction residuals: mass [m^3/s] and convected energy [m^3 K/s].
    std::pair<double, double> junction_residuals(std::size_t node, const Eigen::VectorXd &x) const;
    /// Unscaled consumer residuals: valve [m^3/s], primary energy [K], HX, secondary and radiator balances [W].
    std::array<double, 5> consumer_residuals(std::size_t consumer, const DesignVector &design,
                                             const Eigen::VectorXd &x) const;
    /// Unscaled producer residuals: flow [m^3/s] and supply temperature [K].
    std::array<double, 2> producer_residuals(std::size_t producer, const DesignVector &design,
                                             const Eigen::VectorXd &x) const;

    /// Imposed producer flow after the availability mask.
    double producer_flow(std::size_t producer, const DesignVector &design) const;
    /// Supply temperature of a producer above this period's ambient [K].
    double supply_temperature(std::size_t producer) const { return supply_rel_[producer]; }
    /// Secondary flow rate set by this period's demand [m^3/s].
    double secondary_flow(std::size_t consumer) const { return qs_[consumer]; }
    /// Consumers whose demand is too small to model a running heating system.
    bool consumer_off(std::size_t consumer) const { return off_[consumer]; }
    double house_temperature(std::size_t consumer) const { return house_rel_[consumer]; }

    std::size_t row_pipe_momentum(std::size_t k) const { return k; }
    std::size_t row_pipe_energy(std::size_t k) const { return n_pipe_ + k; }
    std::size_t row_mass(std::size_t n) const { return mass_row_[n]; }
    std::size_t row_energy(std::size_t n) const { return energy0_ + n; }
    std::size_t row_consumer(std::size_t k, std::size_t i) const { return consumer0_ + 5 * k + i; }
    std::size_t row_producer(std::size_t k, std::size_t i) const { return producer0_ + 2 * k + i; }
    std::size_t row_reference(std::size_t c) const { return reference0_ + c; }

    /// Heat transported into the network by a producer, consistent with the
    /// smoothed upwinding of the junction balances [W].
    double producer_heat(std::size_t producer, const Eigen::VectorXd &x) const;
    /// Heat lost by a pipe to the ground, consistent with the junction balances [W].
    double pipe_heat_loss(std::size_t pipe, const Eigen::VectorXd &x) const;

private:
    struct Sink;
    void pipe_block(std::size_t k, const DesignVector &design, const Eigen::VectorXd &x, Eigen::VectorXd &c,
                    Sink &s) const;
    void junction_block(std::size_t n, const Eigen::VectorXd &x, Eigen::VectorXd &c, Sink &s) const;
    void consumer_block(std::size_t k, const DesignVector &design, const Eigen::VectorXd &x, Eigen::VectorXd &c,
                        Sink &s) const;
    void producer_block(std::size_t k, const DesignVector &design, const Eigen::VectorXd &x, Eigen::VectorXd &c,
                        Sink &s) const;

    const NetworkGraph *graph_;
    const PeriodData *period_;
    std::size_t t_;
    ModelOptions opt_;
    StateLayout layout_;
    std::size_t n_pipe_ = 0, energy0_ = 0, consumer0_ = 0, producer0_ = 0, reference0_ = 0, n_rows_ = 0;
    std::vector<std::size_t> mass_row_;
    std::vector<double> qs_, house_rel_, radiator_lmtd_nom_, supply_rel_;
    std::vector<bool> off_;
};

Eigen::SparseMatrix<double> state_jacobian(const PeriodModel &model, const DesignVector &design,
                                           const Eigen::VectorXd &x);
Eigen::SparseMatrix<double> design_jacobian(const PeriodModel &model, const DesignVector &design,
                                            const Eigen::VectorXd &x);

/// Cold-start state: linear-resistance flow split, tree-integrated pressures,
/// supply temperature on the feed side and nominal return temperature elsewhere.
Eigen::VectorXd initial_state(const PeriodModel &model, const DesignVector &design);

struct SolverOptions {
    double tolerance = 1e-10;   // on the scaled residual, infinity norm
    int max_iterations = 100;
    double max_temperature_step = 20.0; // K per iteration
};

/// Damped Newton solve of one period. Never throws on non-convergence: the
/// best iterate is returned with report.converged == false.
PeriodState solve_period(const PeriodModel &model, const DesignVector &design,
                         const std::optional<Eigen::VectorXd> &init = std::nullopt, const SolverOptions &options = {});

} // namespace dhn
