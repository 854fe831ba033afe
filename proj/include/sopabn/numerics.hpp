#pragma once

#include <Eigen/Dense>

namespace sopabn {

// Lower-triangular Cholesky factor of a symmetric PSD matrix.  If the plain
// factorization fails (the matrix is singular or indefinite at machine
// precision), a diagonal jitter of 1e-10 * trace/n is added and escalated by
// a factor of 10 up to three times before giving up.  Throws
// SingularSubmatrix with `context` in the message on failure.
Eigen::MatrixXd cholesky_with_jitter(const Eigen::MatrixXd& m,
                                     const char* context);

// A factor F with F * F^T = m for symmetric PSD m.  Tries Cholesky first;
// falls back to an eigendecomposition with negative eigenvalues clamped to
// zero, which tolerates rank deficiency (e.g. perfectly correlated noise).
Eigen::MatrixXd psd_sqrt_factor(const Eigen::MatrixXd& m);

// Nearest symmetric PSD matrix in the eigenvalue-clamping sense: symmetrize,
// then raise eigenvalues below `floor` (relative to the largest) up to it.
// Used when configuration edits (e.g. posterior draws over covariance
// entries) can push a covariance slightly indefinite.
Eigen::MatrixXd psd_project(const Eigen::MatrixXd& m, double floor = 1e-8);

} // namespace sopabn
