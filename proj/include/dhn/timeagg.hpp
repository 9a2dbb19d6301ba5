#pragma once

// Reduction of an annual demand/temperature series to a few weighted
// representative periods plus a zero-weight peak period.

#include "dhn/hydronics.hpp"

#include <Eigen/Core>

#include <string>
#include <vector>

namespace dhn {

struct RawSeries {
    std::vector<std::string> timestamps;
    std::vector<std::string> consumer_ids;
    std::vector<std::vector<double>> demand; // [consumer][sample], W
    std::vector<double> temperature;         // degC
    double step_hours = 1.0;

    std::size_t length() const { return temperature.size(); }
    std::size_t n_consumers() const { return demand.size(); }
    void validate() const;
    bool active(std::size_t i) const;
};

struct StripResult {
    RawSeries series;
    double active_hours = 0.0;      // K, hours per year that remain
    std::size_t removed_begin = 0;  // first removed sample of the original series
    std::size_t removed_count = 0;
};

/// Removes the longest run of samples without any demand if it spans at least
/// `min_span_days`. K scales the remaining share to a 8760 h year.
StripResult strip_inactive(const RawSeries &series, double min_span_days);

struct Scaling {
    double demand_min = 0.0, demand_max = 1.0;
    double temperature_min = 0.0, temperature_max = 1.0;
    bool demand_constant = false, temperature_constant = false;
};

/// Observation matrix (one row per sample, consumers then temperature) scaled
/// to [0, 1] per attribute group; constant groups map to 0.5.
struct Observations {
    Eigen::MatrixXd data;
    Scaling scaling;
};
Observations normalize(const RawSeries &series);
/// Inverse map of one normalized row to (demands, temperature).
std::pair<std::vector<double>, double> denormalize(const Eigen::VectorXd &row, const Scaling &scaling);

struct KMedoidsResult {
    std::vector<std::size_t> medoids;    // observation indices
    std::vector<std::size_t> assignment; // cluster index per observation
    std::vector<double> weights;         // cluster shares
    std::vector<double> cost_history;    // total distance after build and after each swap
    int iterations = 0;
    double cost() const { return cost_history.empty() ? 0.0 : cost_history.back(); }
};

/// PAM (greedy build followed by best-improvement swaps) on Euclidean
/// distances between rows. Distances are computed on the fly. When there are
/// at most 20000 medoid sets the swap result is checked against all of them.
KMedoidsResult kmedoids(const Eigen::MatrixXd &observations, std::size_t k, int max_iter = 100);

/// Sum of distances from every row to its nearest medoid.
double medoid_cost(const Eigen::MatrixXd &observations, const std::vector<std::size_t> &medoids);

/// Componentwise worst case: maximum demand per consumer, minimum temperature, weight 0.
PeriodData build_peak_period(const RawSeries &series);

struct Aggregation {
    PeriodSet periods; // k representative periods followed by the peak period
    KMedoidsResult clustering;
    Scaling scaling;
};
/// Clusters an (already stripped) series into k representative periods plus the peak period.
Aggregation aggregate(const RawSeries &series, std::size_t k, double active_hours, int max_iter = 100);

/// |J_a - J_b| / |J_b| with b the reference resolution.
double relative_cost_error(double j_a, double j_b);

} // namespace dhn
