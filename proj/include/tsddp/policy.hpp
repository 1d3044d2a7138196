#pragma once

#include "tsddp/transcription.hpp"

namespace tsddp {

/// Per-stage feedback law u(x) = u0 + K (x - x_ref), fitted to the optimized
/// sigma-point controls. x_ref is the sigma mean; evaluating there gives u0.
struct AffineStagePolicy {
    Vector u0;
    Matrix gain;    // nu x nx
    Vector x_ref;
    double saturation = 0.0;  // norm bound, <= 0 means off
    bool degenerate = false;  // collapsed geometry with differing controls
};

/// Weighted least-squares affine fit over the (sigma point, control) pairs.
/// Collapsed directions get zero gain; fully collapsed geometry with differing
/// controls returns the weighted control mean with the degenerate flag set.
AffineStagePolicy fit_policy(const StackedState& x, const StackedControl& u);

/// Evaluate the policy; if saturation is set and the result exceeds the bound,
/// it is rescaled to the bound with direction preserved.
Vector eval_policy(const AffineStagePolicy& p, const Vector& x);

}  // namespace tsddp
