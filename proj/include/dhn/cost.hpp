#pragma once

// Discounted project cost and the per-period state constraints.

#include "dhn/hydronics.hpp"

#include <Eigen/Core>

#include <vector>

namespace dhn {

struct EconomicParams {
    double horizon_years = 30.0;
    double discount_rate = 0.05;
    double kappa0 = 501.3;       // EUR/m, fixed part of the pipe cost
    double kappa1 = 1976.3;      // EUR/m^2, diameter-proportional part
    double xi = 50.0;            // 1/m, penalization sharpness
    double pump_price = 0.1;     // EUR/kWh electricity
    double max_pressure = 1e6;   // Pa, producer pressure lift bound
    bool offset_mode = true;     // adds kappa0/2 per metre so a removed pipe costs ~0

    void validate() const;
    double annuity() const;
};

struct CostBreakdown {
    double pipe_capex = 0.0;
    double heat_capex = 0.0;
    double heat_opex = 0.0; // discounted
    double pump_opex = 0.0; // discounted
    double total = 0.0;
    std::vector<double> period_heat_opex; // EUR/yr, undiscounted
    std::vector<double> period_pump_opex; // EUR/yr, undiscounted
};

/// Present-value factor of a constant annual payment.
double annuity_factor(double years, double rate);

/// Penalized fixed pipe cost per metre, kappa0 (2/(1 + exp(-xi (d - d_min))) - 1), with derivative in d.
Diff1 penalized_fixed_cost(double d, double kappa0, double xi, double d_min);

/// Pipe investment for explicit diameter and length lists.
double pipe_capex(const std::vector<double> &d, const std::vector<double> &length, double kappa0, double kappa1,
                  double xi, double d_min, bool offset_mode);
/// Pipe investment of a design; optionally accumulates d-gradient into `grad` (full design length).
double pipe_capex(const NetworkGraph &g, const DesignVector &design, const EconomicParams &econ,
                  Eigen::VectorXd *grad = nullptr);
/// Production capacity investment; P_max enters in kW.
double heat_capex(const NetworkGraph &g, const DesignVector &design, Eigen::VectorXd *grad = nullptr);

/// Temperature lift of a producer: supply minus the temperature at its return node [K].
double producer_delta_theta(const PeriodModel &model, const Eigen::VectorXd &x, std::size_t producer);
/// Heat delivered by a producer as used by the cost and capacity terms [W].
double producer_output(const PeriodModel &model, const Eigen::VectorXd &x, std::size_t producer);

/// Annual heat cost of one period [EUR/yr].
double heat_opex_period(const PeriodModel &model, const DesignVector &design, const Eigen::VectorXd &x,
                        double active_hours);
/// Annual pumping cost of one period [EUR/yr].
double pump_opex_period(const PeriodModel &model, const Eigen::VectorXd &x, const EconomicParams &econ,
                        double active_hours);

/// Number of inequality entries per period: one per consumer and two per producer.
std::size_t constraints_per_period(const NetworkGraph &g);
/// h <= 0 entries [demand per consumer | pressure lift per producer (Pa) | capacity per producer].
Eigen::VectorXd constraint_values(const PeriodModel &model, const DesignVector &design, const Eigen::VectorXd &x,
                                  const EconomicParams &econ);

/// Value and partials of  w_opex (heat + pump OPEX) + sum_i w_con[i] h_i  for one period.
struct LocalDerivative {
    double value = 0.0;
    Eigen::VectorXd d_state;  // state length
    Eigen::VectorXd d_design; // full design length
};
LocalDerivative period_functional(const PeriodModel &model, const DesignVector &design, const Eigen::VectorXd &x,
                                  const EconomicParams &econ, double active_hours, double w_opex,
                                  const Eigen::VectorXd &w_con);

/// Discounted total J = pipe CAPEX + heat CAPEX + f_OP sum_t w_t (heat + pump OPEX)_t.
CostBreakdown total_cost(const NetworkGraph &g, const DesignVector &design, const std::vector<Eigen::VectorXd> &states,
                         const PeriodSet &periods, const EconomicParams &econ, const ModelOptions &options = {});

} // namespace dhn
