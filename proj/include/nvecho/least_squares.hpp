#pragma once

#include <cmath>
#include <functional>
#include <limits>

#include <Eigen/Dense>

#include "error.hpp"

namespace nvecho {

struct LinearSolution {
    Eigen::VectorXd x;
    Eigen::MatrixXd covariance;
    double residual_norm = 0.0;
    Eigen::Index rank = 0;
};

/// Weighted linear least squares min ||W (J x - y)||, solved by column-pivoted
/// QR. Covariance is s^2 (J^T W^2 J)^-1 with s^2 = RSS / (n - p); it is zero
/// for noiseless or exactly determined systems.
inline LinearSolution solve_linear_least_squares(const Eigen::MatrixXd& J, const Eigen::VectorXd& y,
                                                 const Eigen::VectorXd* weights = nullptr) {
    if (J.rows() != y.size()) throw FitError("design matrix and data differ in length");
    if (J.rows() < J.cols()) throw FitError("fewer data points than parameters");
    Eigen::MatrixXd A = J;
    Eigen::VectorXd b = y;
    if (weights) {
        A = weights->asDiagonal() * J;
        b = weights->asDiagonal() * y;
    }
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(A);
    LinearSolution out;
    out.rank = qr.rank();
    out.x = qr.solve(b);
    const Eigen::VectorXd r = A * out.x - b;
    out.residual_norm = r.norm();
    const auto dof = A.rows() - A.cols();
    const double s2 = dof > 0 ? r.squaredNorm() / static_cast<double>(dof) : 0.0;
    if (out.rank == A.cols()) {
        const Eigen::MatrixXd AtA = A.transpose() * A;
        out.covariance = s2 * AtA.ldlt().solve(Eigen::MatrixXd::Identity(A.cols(), A.cols()));
    } else {
        out.covariance = Eigen::MatrixXd::Constant(A.cols(), A.cols(), std::numeric_limits<double>::quiet_NaN());
    }
    return out;
}

struct NonlinearSolution {
    Eigen::VectorXd x;
    Eigen::MatrixXd covariance;
    double residual_norm = 0.0;
    int iterations = 0;
    bool converged = false;
};

/// Levenberg-Marquardt for small problems. `residuals(x, r, J)` fills the
/// residual vector and its Jacobian.
inline NonlinearSolution levenberg_marquardt(
    Eigen::VectorXd x, const std::function<void(const Eigen::VectorXd&, Eigen::VectorXd&, Eigen::MatrixXd&)>& residuals,
    int max_iterations = 200, double tolerance = 1e-15) {
    Eigen::VectorXd r;
    Eigen::MatrixXd J;
    residuals(x, r, J);
    double cost = r.squaredNorm();
    double lambda = 1e-3;
    NonlinearSolution out;
    for (int it = 0; it < max_iterations; ++it) {
        out.iterations = it + 1;
        const Eigen::MatrixXd JtJ = J.transpose() * J;
        const Eigen::VectorXd g = J.transpose() * r;
        bool improved = false;
        for (int attempt = 0; attempt < 30; ++attempt) {
            Eigen::MatrixXd H = JtJ;
            H.diagonal() += lambda * JtJ.diagonal().cwiseMax(1e-300);
            const Eigen::VectorXd step = H.ldlt().solve(-g);
            if (!step.allFinite()) {
                lambda *= 10.0;
                continue;
            }
            const Eigen::VectorXd trial = x + step;
            Eigen::VectorXd rt;
            Eigen::MatrixXd Jt;
            residuals(trial, rt, Jt);
            const double ct = rt.squaredNorm();
            if (std::isfinite(ct) && ct <= cost) {
                const double rel_step = step.norm() / (x.norm() + 1e-300);
                const double decrease = cost - ct;
                x = trial;
                r = rt;
                J = Jt;
                cost = ct;
                lambda = std::max(lambda * 0.3, 1e-12);
                improved = true;
                if (rel_step < tolerance || decrease <= tolerance * tolerance * (cost + 1e-300)) out.converged = true;
                break;
            }
            lambda *= 10.0;
        }
        if (!improved) {
            out.converged = true; // no further descent possible at machine precision
            break;
        }
        if (out.converged) break;
    }
    out.x = x;
    out.residual_norm = std::sqrt(cost);
    const auto dof = r.size() - x.size();
    const double s2 = dof > 0 ? cost / static_cast<double>(dof) : 0.0;
    const Eigen::MatrixXd JtJ = J.transpose() * J;
    out.covariance = s2 * JtJ.ldlt().solve(Eigen::MatrixXd::Identity(x.size(), x.size()));
    return out;
}

} // namespace nvecho
