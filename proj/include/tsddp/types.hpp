#pragma once

#include <Eigen/Dense>
#include <stdexcept>
#include <string>

namespace tsddp {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

// Base class for all library errors.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Covariance handed in is not symmetric within tolerance.
class NotSymmetric : public Error {
public:
    using Error::Error;
};

// Covariance has an eigenvalue below the allowed negative jitter.
class NotPsd : public Error {
public:
    using Error::Error;
};

// Point matrix and weight vector sizes disagree.
class WeightMismatch : public Error {
public:
    using Error::Error;
};

// Dynamics returned a non-finite value.
class DynamicsFailure : public Error {
public:
    using Error::Error;
};

// Cost function returned a non-finite value.
class CostFailure : public Error {
public:
    using Error::Error;
};

// Constraint function returned a non-finite value.
class ConstraintFailure : public Error {
public:
    using Error::Error;
};

// Finite differencing hit a non-finite function value.
class NonFiniteDerivative : public Error {
public:
    using Error::Error;
};

// Backward pass could not make the control Hessian positive definite.
class RegularizationExhausted : public Error {
public:
    using Error::Error;
};

// Solver cost became non-finite with regularization already maxed out.
class Diverged : public Error {
public:
    using Error::Error;
};

// Statistics over an empty sequence.
class EmptyInput : public Error {
public:
    using Error::Error;
};

// Bad run configuration (unknown key, wrong type, invalid value).
class ConfigError : public Error {
public:
    using Error::Error;
};

}  // namespace tsddp
