#pragma once

#include <Eigen/Dense>
#include <Eigen/SparseCore>

namespace gnnattr {

template <typename Scalar>
using MatrixX = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

template <typename Scalar>
using VectorX = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

template <typename Scalar>
using RowVectorX = Eigen::Matrix<Scalar, 1, Eigen::Dynamic>;

template <typename Scalar>
using SparseMatrixX = Eigen::SparseMatrix<Scalar, Eigen::RowMajor>;

}  // namespace gnnattr
