#include "tsddp/policy.hpp"

#include <cmath>

namespace tsddp {

AffineStagePolicy fit_policy(const StackedState& x, const StackedControl& u) {
    const int nx = x.dim();
    const int nu = static_cast<int>(u.controls.rows());
    const int ns = x.count();
    const Vector& w = x.sigma.weights;

    AffineStagePolicy p;
    p.x_ref = x.mean();
    p.u0 = u.controls * w;  // weighted control mean; deviations are weight-orthogonal

    // Normal equations K * S = M with S the weighted scatter of the sigma
    // deviations and M the control/state cross moment.
    Matrix deviations = x.sigma.points.colwise() - p.x_ref;
    Matrix scatter = deviations * w.asDiagonal() * deviations.transpose();
    scatter = 0.5 * (scatter + scatter.transpose());
    Matrix cross = (u.controls.colwise() - p.u0) * w.asDiagonal() * deviations.transpose();

    const double scale = scatter.cwiseAbs().maxCoeff();
    double control_spread = 0.0;
    for (int i = 0; i < ns; ++i) {
        control_spread = std::max(control_spread, (u.controls.col(i) - p.u0).norm());
    }

    Eigen::SelfAdjointEigenSolver<Matrix> eig(scatter);
    const double lmax = std::max(0.0, eig.eigenvalues().maxCoeff());
    const double cut = std::max(1e-14 * lmax, 1e-300);
    Vector inv_lambda(nx);
    int rank = 0;
    for (int i = 0; i < nx; ++i) {
        if (eig.eigenvalues()(i) > cut) {
            inv_lambda(i) = 1.0 / eig.eigenvalues()(i);
            ++rank;
        } else {
            inv_lambda(i) = 0.0;  // collapsed direction: no feedback
        }
    }
    if (scale <= 0.0 || rank == 0) {
        p.gain = Matrix::Zero(nu, nx);
    } else {
        p.gain = cross * eig.eigenvectors() * inv_lambda.asDiagonal() *
                 eig.eigenvectors().transpose();
    }

    // Differing controls along collapsed directions cannot be interpolated.
    if (rank < nx) {
        double resid = 0.0;
        for (int i = 0; i < ns; ++i) {
            resid = std::max(resid,
                             (u.controls.col(i) - p.u0 - p.gain * deviations.col(i)).norm());
        }
        p.degenerate = resid > 1e-10 * std::max(1.0, control_spread);
    }
    return p;
}

Vector eval_policy(const AffineStagePolicy& p, const Vector& x) {
    Vector u = p.u0 + p.gain * (x - p.x_ref);
    if (p.saturation > 0.0) {
        const double norm = u.norm();
        if (norm > p.saturation) u *= p.saturation / norm;
    }
    return u;
}

}  // namespace tsddp
