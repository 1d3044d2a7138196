#include "tsddp/gaussian.hpp"

#include <cmath>

namespace tsddp {

namespace {
constexpr double kSymmetryTol = 1e-12;
constexpr double kNegEigTol = 1e-10;
}  // namespace

Matrix psd_sqrt(const Matrix& m) {
    const double scale = m.cwiseAbs().maxCoeff();
    if ((m - m.transpose()).cwiseAbs().maxCoeff() > kSymmetryTol * std::max(1.0, scale)) {
        throw NotSymmetric("psd_sqrt: matrix is not symmetric");
    }
    Eigen::SelfAdjointEigenSolver<Matrix> eig(m);
    if (eig.info() != Eigen::Success) {
        throw NotPsd("psd_sqrt: eigendecomposition failed");
    }
    Vector lambda = eig.eigenvalues();
    const double lmax = std::max(0.0, lambda.maxCoeff());
    if (lambda.minCoeff() < -kNegEigTol * std::max(1.0, lmax)) {
        throw NotPsd("psd_sqrt: eigenvalue below PSD tolerance");
    }
    Vector sqrt_lambda = lambda.cwiseMax(0.0).cwiseSqrt();
    Matrix s = eig.eigenvectors() * sqrt_lambda.asDiagonal() * eig.eigenvectors().transpose();
    return 0.5 * (s + s.transpose());
}

Vector sigma_weights(int n, double kappa) {
    Vector w(2 * n + 1);
    w(0) = kappa / (n + kappa);
    w.tail(2 * n).setConstant(1.0 / (2.0 * (n + kappa)));
    return w;
}

SigmaSet make_sigma_set(const GaussianState& g, double kappa) {
    const int n = g.dim();
    Matrix root = psd_sqrt((n + kappa) * g.cov);
    SigmaSet s;
    s.kappa = kappa;
    s.points.resize(n, 2 * n + 1);
    s.points.col(0) = g.mean;
    for (int j = 0; j < n; ++j) {
        s.points.col(1 + j) = g.mean + root.col(j);
        s.points.col(1 + n + j) = g.mean - root.col(j);
    }
    s.weights = sigma_weights(n, kappa);
    return s;
}

GaussianState moments_from_points(const Matrix& points, const Vector& weights) {
    if (points.cols() != weights.size()) {
        throw WeightMismatch("moments_from_points: point count != weight count");
    }
    GaussianState g;
    g.mean = points * weights;
    Matrix centered = points.colwise() - g.mean;
    Matrix cov = centered * weights.asDiagonal() * centered.transpose();
    g.cov = 0.5 * (cov + cov.transpose());
    return g;
}

GaussianState unscented_transform(const std::function<Vector(const Vector&)>& f,
                                  const GaussianState& g, double kappa) {
    SigmaSet s = make_sigma_set(g, kappa);
    Matrix mapped;
    for (int i = 0; i < s.count(); ++i) {
        Vector y = f(s.points.col(i));
        if (i == 0) mapped.resize(y.size(), s.count());
        mapped.col(i) = y;
    }
    return moments_from_points(mapped, s.weights);
}

}  // namespace tsddp
