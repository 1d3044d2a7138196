#pragma once

#include <functional>

#include "tsddp/types.hpp"

namespace tsddp {

/// Gaussian belief: mean vector plus symmetric PSD covariance.
struct GaussianState {
    Vector mean;
    Matrix cov;

    int dim() const { return static_cast<int>(mean.size()); }

    static GaussianState dirac(const Vector& point) {
        return {point, Matrix::Zero(point.size(), point.size())};
    }
};

/// 2n+1 weighted points representing a Gaussian. Column 0 is the mean,
/// columns j and j+n are the +/- pair along the j-th square-root column.
struct SigmaSet {
    Matrix points;   // n x (2n+1)
    Vector weights;  // 2n+1, sums to 1
    double kappa = 2.0;

    int dim() const { return static_cast<int>(points.rows()); }
    int count() const { return static_cast<int>(points.cols()); }
};

/// Symmetric PSD square root by eigendecomposition: S = V diag(sqrt(max(l,0))) V^T.
/// Eigenvalues below -1e-10 * lambda_max are rejected as NotPsd; smaller negative
/// jitter is clamped to zero.
Matrix psd_sqrt(const Matrix& m);

/// Sigma weights for dimension n: kappa/(n+kappa) at the mean,
/// 1/(2(n+kappa)) at the 2n symmetric points.
Vector sigma_weights(int n, double kappa);

/// Sigma points of N(mean, cov): mean, mean +/- columns of sqrt((n+kappa) cov).
SigmaSet make_sigma_set(const GaussianState& g, double kappa);

/// Weighted mean and (re-symmetrized) scatter of an arbitrary weighted point set.
GaussianState moments_from_points(const Matrix& points, const Vector& weights);

/// Full unscented transform: sigma points -> pointwise map -> moments.
GaussianState unscented_transform(const std::function<Vector(const Vector&)>& f,
                                  const GaussianState& g, double kappa);

}  // namespace tsddp
