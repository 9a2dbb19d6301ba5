#pragma once

// Pointwise thermal-hydraulic relations shared by the network model and the
// residual assembly. Every function that enters the residual system comes with
// its partial derivatives so the Jacobians stay consistent with the values.

#include <cmath>

namespace dhn {

struct FluidProps {
    double density = 983.0;           // kg/m^3
    double viscosity = 4.67e-4;       // Pa s
    double heat_capacity = 4185.0;    // J/(kg K)
    double ground_conductivity = 1.0;       // W/(m K)
    double insulation_conductivity = 0.0225; // W/(m K)
    double burial_depth = 1.0;        // m

    double rho_cp() const { return density * heat_capacity; }
    void validate() const;
};

/// Value together with its first derivative(s).
struct Diff1 {
    double value;
    double d;
};

struct Diff2 {
    double value;
    double da;
    double db;
};

namespace smooth {

/// sqrt(x^2 + delta^2)
inline Diff1 abs(double x, double delta)
{
    const double s = std::sqrt(x * x + delta * delta);
    return {s, x / s};
}

/// 1/2 (x + |x|_delta), strictly positive.
inline Diff1 pos(double x, double delta)
{
    const auto a = abs(x, delta);
    return {0.5 * (x + a.value), 0.5 * (1.0 + a.d)};
}

/// 1/2 (x - |x|_delta), strictly negative.
inline Diff1 neg(double x, double delta)
{
    const auto a = abs(x, delta);
    return {0.5 * (x - a.value), 0.5 * (1.0 - a.d)};
}

/// Upwind fraction: pos(x) = |x|_delta * step(x).
inline Diff1 step(double x, double delta)
{
    const double s = std::sqrt(x * x + delta * delta);
    return {0.5 * (1.0 + x / s), 0.5 * delta * delta / (s * s * s)};
}

inline Diff2 min(double a, double b, double delta)
{
    const double r = std::sqrt((a - b) * (a - b) + delta * delta);
    const double t = (a - b) / r;
    return {0.5 * (a + b - r), 0.5 * (1.0 - t), 0.5 * (1.0 + t)};
}

inline Diff2 max(double a, double b, double delta)
{
    const double r = std::sqrt((a - b) * (a - b) + delta * delta);
    const double t = (a - b) / r;
    return {0.5 * (a + b + r), 0.5 * (1.0 + t), 0.5 * (1.0 - t)};
}

/// Signed square root x / (x^2 + delta^2)^(1/4); equals sign(x) sqrt|x| for |x| >> delta.
inline Diff1 signed_sqrt(double x, double delta)
{
    const double w = x * x + delta * delta;
    const double w4 = std::pow(w, 0.25);
    return {x / w4, (0.5 * x * x + delta * delta) / (w * w4)};
}

} // namespace smooth

/// Log-mean temperature difference. Throws on non-positive arguments.
double lmtd(double dt_a, double dt_b);
/// LMTD with partials; returns NaN values for non-positive arguments.
Diff2 lmtd_diff(double dt_a, double dt_b);

/// Counter-flow effectiveness for NTU >= 0 and capacity ratio in [0, 1].
double effectiveness(double ntu, double c_star);
/// Effectiveness with partials with respect to NTU (da) and C* (db).
Diff2 effectiveness_diff(double ntu, double c_star);

/// Blasius friction factor for a Reynolds number > 0.
inline double blasius_friction(double reynolds) { return 0.3164 * std::pow(reynolds, -0.25); }

/// Darcy-Weisbach pressure drop with Blasius friction, exact |q| (no smoothing).
double pipe_pressure_drop(double q, double d, double length, const FluidProps &fluid);

/// Smoothed pressure drop; partials w.r.t. q (da) and d (db).
Diff2 pipe_pressure_drop_diff(double q, double d, double length, const FluidProps &fluid, double delta_q);

/// Pipe-plus-soil thermal resistance per unit length [m K / W].
double thermal_resistance(double d, double insulation_ratio, const FluidProps &fluid);

/// Outlet temperature above ambient for an insulated buried pipe.
double pipe_outlet_temperature(double theta_in, double q, double d, double length, double insulation_ratio,
                               const FluidProps &fluid);

} // namespace dhn
