#pragma once

// Adjoint sensitivities of period functionals with respect to the design.

#include "dhn/cost.hpp"

#include <Eigen/SparseCore>

#include <vector>

namespace dhn {

/// Solves J^T lambda = rhs by sparse LU; a 1e-12 diagonal shift is tried once
/// if the factorization fails. Throws SolverError if it is still singular.
Eigen::VectorXd solve_adjoint_period(const Eigen::SparseMatrix<double> &jacobian, const Eigen::VectorXd &rhs,
                                     bool *regularized = nullptr);

struct PeriodGradient {
    double value = 0.0;
    Eigen::VectorXd adjoint;  // state length
    Eigen::VectorXd gradient; // full design length
};

/// Total derivative of a period functional (see period_functional) along the
/// manifold c_t(design, x_t) = 0:  dF/ddesign + (dc/ddesign)^T lambda,  with
/// (dc/dx)^T lambda = -(dF/dx)^T.
PeriodGradient period_gradient(const PeriodModel &model, const DesignVector &design, const Eigen::VectorXd &x,
                               const EconomicParams &econ, double active_hours, double w_opex,
                               const Eigen::VectorXd &w_con);

/// Sums per-period gradients (each already of full design length).
Eigen::VectorXd assemble_gradient(const std::vector<Eigen::VectorXd> &period_gradients, std::size_t design_size);

/// Same gradient from one block-diagonal transpose system over all periods.
Eigen::VectorXd monolithic_gradient(const std::vector<const PeriodModel *> &models, const DesignVector &design,
                                    const std::vector<Eigen::VectorXd> &states, const EconomicParams &econ,
                                    double active_hours, const std::vector<double> &w_opex,
                                    const std::vector<Eigen::VectorXd> &w_con);

} // namespace dhn
