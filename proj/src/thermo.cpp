#include "dhn/thermo.hpp"

#include "dhn/error.hpp"

#include <limits>
#include <numbers>

namespace dhn {

void FluidProps::validate() const
{
    if (!(density > 0 && viscosity > 0 && heat_capacity > 0 && ground_conductivity > 0 &&
          insulation_conductivity > 0 && burial_depth > 0))
        throw InputError("fluid properties must be strictly positive");
}

namespace {

constexpr double nan = std::numeric_limits<double>::quiet_NaN();

// (1 - exp(-x)) / x
double g_fun(double x)
{
    if (std::abs(x) < 0.1) {
        double term = 1.0, sum = 0.0;
        for (int k = 0; k < 12; ++k) {
            sum += term;
            term *= -x / (k + 2);
        }
        return sum;
    }
    return -std::expm1(-x) / x;
}

// (x - 1 + exp(-x)) / x^2
double h_fun(double x)
{
    if (std::abs(x) < 0.1) {
        double term = 0.5, sum = 0.0;
        for (int k = 0; k < 12; ++k) {
            sum += term;
            term *= -x / (k + 3);
        }
        return sum;
    }
    return (x + std::expm1(-x)) / (x * x);
}

} // namespace

Diff2 lmtd_diff(double a, double b)
{
    if (!(a > 0) || !(b > 0))
        return {nan, nan, nan};
    const double m = 0.5 * (a + b);
    const double u = (a - b) / (a + b);
    if (std::abs(u) < 1e-4) {
        // m u / atanh(u) = m (1 - u^2/3 - 4u^4/45)
        const double u2 = u * u;
        const double val = m * (1.0 - u2 / 3.0 - 4.0 * u2 * u2 / 45.0);
        const double dval_dm = 1.0 - u2 / 3.0 - 4.0 * u2 * u2 / 45.0;
        const double dval_du = m * (-2.0 * u / 3.0 - 16.0 * u2 * u / 45.0);
        const double s2 = (a + b) * (a + b);
        return {val, 0.5 * dval_dm + dval_du * 2.0 * b / s2, 0.5 * dval_dm - dval_du * 2.0 * a / s2};
    }
    const double ln = std::log(a / b);
    const double val = (a - b) / ln;
    const double k = val / (a - b);
    return {val, k * (1.0 - val / a), k * (val / b - 1.0)};
}

double lmtd(double a, double b)
{
    if (!(a > 0) || !(b > 0))
        throw InputError("LMTD requires strictly positive temperature differences");
    return lmtd_diff(a, b).value;
}

Diff2 effectiveness_diff(double ntu, double c_star)
{
    // With x = NTU (1 - C*), g = (1 - e^-x)/x, h = (x - 1 + e^-x)/x^2:
    //   eps = NTU g / (NTU g + e^-x)
    // which is regular through C* = 1 where it reduces to NTU / (1 + NTU).
    const double x = ntu * (1.0 - c_star);
    const double e = std::exp(-x);
    const double g = g_fun(x);
    const double den = ntu * g + e;
    const double eps = ntu * g / den;
    const double d_ntu = e / (den * den);
    const double d_c = -e * h_fun(x) * ntu * ntu / (den * den);
    return {eps, d_ntu, d_c};
}

double effectiveness(double ntu, double c_star)
{
    if (ntu <= 0)
        return 0.0;
    return effectiveness_diff(ntu, c_star).value;
}

namespace {

// Delta p = coeff * d^-4.75 * |q|^0.75 * q  (Blasius folded into Darcy-Weisbach)
double momentum_coefficient(double length, const FluidProps &fluid)
{
    constexpr double pi = std::numbers::pi;
    return 0.3164 * std::pow(4.0 * fluid.density / (pi * fluid.viscosity), -0.25) * 8.0 * fluid.density * length /
           (pi * pi);
}

} // namespace

double pipe_pressure_drop(double q, double d, double length, const FluidProps &fluid)
{
    if (q == 0.0)
        return 0.0;
    return momentum_coefficient(length, fluid) * std::pow(d, -4.75) * std::pow(std::abs(q), 0.75) * q;
}

Diff2 pipe_pressure_drop_diff(double q, double d, double length, const FluidProps &fluid, double delta_q)
{
    const double c = momentum_coefficient(length, fluid) * std::pow(d, -4.75);
    const auto a = smooth::abs(q, delta_q);
    const double a75 = std::pow(a.value, 0.75);
    const double val = c * a75 * q;
    const double dq = c * a75 * (1.0 + 0.75 * q * q / (a.value * a.value));
    return {val, dq, -4.75 * val / d};
}

double thermal_resistance(double d, double ratio, const FluidProps &fluid)
{
    constexpr double pi = std::numbers::pi;
    const double arg = 4.0 * fluid.burial_depth / (ratio * d);
    if (!(arg > 1.0))
        throw InputError("pipe too large for its burial depth (4h/(r d) <= 1)");
    return std::log(arg) / (2.0 * pi * fluid.ground_conductivity) +
           std::log(ratio) / (2.0 * pi * fluid.insulation_conductivity);
}

double pipe_outlet_temperature(double theta_in, double q, double d, double length, double ratio,
                               const FluidProps &fluid)
{
    if (length == 0.0)
        return theta_in;
    const double r = thermal_resistance(d, ratio, fluid);
    return theta_in * std::exp(-length / (fluid.rho_cp() * std::abs(q) * r));
}

} // namespace dhn
