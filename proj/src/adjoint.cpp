#include "dhn/adjoint.hpp"

#include "dhn/error.hpp"

#include <Eigen/SparseLU>

namespace dhn {

Eigen::VectorXd solve_adjoint_period(const Eigen::SparseMatrix<double> &jacobian, const Eigen::VectorXd &rhs,
                                     bool *regularized)
{
    if (jacobian.rows() != jacobian.cols() || jacobian.rows() != rhs.size())
        throw InputError("adjoint system dimensions do not match");
    if (regularized)
        *regularized = false;
    if (rhs.size() == 0 || rhs.isZero(0.0))
        return Eigen::VectorXd::Zero(rhs.size());
    Eigen::SparseMatrix<double> jt = jacobian.transpose();
    jt.makeCompressed();
    Eigen::SparseLU<Eigen::SparseMatrix<double>, Eigen::COLAMDOrdering<int>> lu;
    lu.compute(jt);
    if (lu.info() != Eigen::Success) {
        Eigen::SparseMatrix<double> I(jt.rows(), jt.cols());
        I.setIdentity();
        Eigen::SparseMatrix<double> shifted = jt + 1e-12 * I;
        lu.compute(shifted);
        if (regularized)
            *regularized = true;
        if (lu.info() != Eigen::Success)
            throw SolverError("adjoint system is singular");
    }
    Eigen::VectorXd lambda = lu.solve(rhs);
    if (!lambda.allFinite())
        throw SolverError("adjoint solve produced non-finite values");
    return lambda;
}

PeriodGradient period_gradient(const PeriodModel &model, const DesignVector &design, const Eigen::VectorXd &x,
                               const EconomicParams &econ, double active_hours, double w_opex,
                               const Eigen::VectorXd &w_con)
{
    const auto local = period_functional(model, design, x, econ, active_hours, w_opex, w_con);
    Eigen::VectorXd c;
    Triplets jx, jd;
    model.evaluate(design, x, c, &jx, &jd);
    const auto n = static_cast<Eigen::Index>(model.layout().size());
    Eigen::SparseMatrix<double> Jx(n, n), Jd(n, static_cast<Eigen::Index>(design.layout.size()));
    Jx.setFromTriplets(jx.begin(), jx.end());
    Jd.setFromTriplets(jd.begin(), jd.end());

    PeriodGradient out;
    out.value = local.value;
    out.adjoint = solve_adjoint_period(Jx, -local.d_state);
    out.gradient = local.d_design + Jd.transpose() * out.adjoint;
    return out;
}

Eigen::VectorXd assemble_gradient(const std::vector<Eigen::VectorXd> &period_gradients, std::size_t design_size)
{
    Eigen::VectorXd g = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(design_size));
    for (const auto &gt : period_gradients) {
        if (gt.size() != g.size())
            throw InputError("period gradient does not match the design layout");
        g += gt;
    }
    return g;
}

Eigen::VectorXd monolithic_gradient(const std::vector<const PeriodModel *> &models, const DesignVector &design,
                                    const std::vector<Eigen::VectorXd> &states, const EconomicParams &econ,
                                    double active_hours, const std::vector<double> &w_opex,
                                    const std::vector<Eigen::VectorXd> &w_con)
{
    const std::size_t T = models.size();
    if (states.size() != T || w_opex.size() != T || w_con.size() != T)
        throw InputError("monolithic gradient inputs differ in period count");
    std::vector<Eigen::Index> offset(T + 1, 0);
    for (std::size_t t = 0; t < T; ++t)
        offset[t + 1] = offset[t] + static_cast<Eigen::Index>(models[t]->layout().size());
    const Eigen::Index N = offset[T];
    const auto nd = static_cast<Eigen::Index>(design.layout.size());

    Triplets big_x, big_d;
    Eigen::VectorXd dF_dx(N);
    Eigen::VectorXd dF_dd = Eigen::VectorXd::Zero(nd);
    for (std::size_t t = 0; t < T; ++t) {
        const auto local = period_functional(*models[t], design, states[t], econ, active_hours, w_opex[t], w_con[t]);
        dF_dx.segment(offset[t], local.d_state.size()) = local.d_state;
        dF_dd += local.d_design;
        Eigen::VectorXd c;
        Triplets jx, jd;
        models[t]->evaluate(design, states[t], c, &jx, &jd);
        for (const auto &tr : jx)
            big_x.emplace_back(static_cast<int>(offset[t] + tr.row()), static_cast<int>(offset[t] + tr.col()), tr.value());
        for (const auto &tr : jd)
            big_d.emplace_back(static_cast<int>(offset[t] + tr.row()), tr.col(), tr.value());
    }
    Eigen::SparseMatrix<double> Jx(N, N), Jd(N, nd);
    Jx.setFromTriplets(big_x.begin(), big_x.end());
    Jd.setFromTriplets(big_d.begin(), big_d.end());
    const Eigen::VectorXd lambda = solve_adjoint_period(Jx, -dF_dx);
    return dF_dd + Jd.transpose() * lambda;
}

} // namespace dhn
