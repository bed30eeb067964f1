#pragma once

#include <Eigen/Dense>

namespace amlmc {

// Compile-time capacity of the dense state and noise containers. All vectors
// are dynamically sized up to these bounds and never touch the heap, which
// keeps the per-step inner loops allocation free.
inline constexpr int kMaxStateDim = 6;
inline constexpr int kMaxBrownianDim = 4;
inline constexpr int kMaxFields = kMaxBrownianDim + 1;

template <typename Scalar>
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1, Eigen::ColMajor, kMaxStateDim, 1>;

template <typename Scalar>
using NoiseVector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1, Eigen::ColMajor, kMaxBrownianDim, 1>;

template <typename Scalar>
using SquareMatrix =
    Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::ColMajor, kMaxStateDim, kMaxStateDim>;

/// N x d matrix whose columns are the diffusion vector fields.
template <typename Scalar>
using ColumnMatrix =
    Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::ColMajor, kMaxStateDim, kMaxBrownianDim>;

/// (d+1) x (d+1) table of scalar noise functionals indexed by field pairs.
template <typename Scalar>
using FieldPairMatrix =
    Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::ColMajor, kMaxFields, kMaxFields>;

/// N x (d+1)^2 table; column i*(d+1)+j holds the derivative of field j along field i.
template <typename Scalar>
using LieTable = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::ColMajor, kMaxStateDim,
                               kMaxFields * kMaxFields>;

}  // namespace amlmc
