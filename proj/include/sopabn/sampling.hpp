#pragma once

#include <cstdint>
#include <vector>

#include <Eigen/Dense>

#include "sopabn/rng.hpp"

namespace sopabn {

// Correlated Gaussian sampler: x = mean + F z with F F^T = covariance and
// z i.i.d. standard normal.  Used for the distribution over model-parameter
// vectors ("outer uncertainty") and anywhere else a multivariate normal is
// drawn.  The factor tolerates rank-deficient covariances.
class GaussianSampler {
public:
    GaussianSampler() = default;
    GaussianSampler(Eigen::VectorXd mean, const Eigen::MatrixXd& covariance);

    int dimension() const { return static_cast<int>(mean_.size()); }
    const Eigen::VectorXd& mean() const { return mean_; }
    const Eigen::MatrixXd& factor() const { return factor_; }

    Eigen::VectorXd sample(RngStream& rng) const;

    // Deterministic transform from standard normals; the quasi-Monte Carlo
    // driver feeds inverse-CDF'd low-discrepancy coordinates through this.
    Eigen::VectorXd from_normals(const Eigen::VectorXd& z) const;

private:
    Eigen::VectorXd mean_;
    Eigen::MatrixXd factor_;
};

// Map n-1 uniforms in (0,1) to a permutation of {0,...,n-1} through its
// Lehmer code: position k picks index floor(u_k * (n-k)) among the inputs
// not yet placed, and the last remaining input goes last.  Sequential Monte
// Carlo sampling and quasi-Monte Carlo points share this mapping, so the two
// drivers differ only in where the uniforms come from.
std::vector<int> permutation_from_uniforms(const double* u, int n);

// Draw the n-1 uniforms from `rng` (in order) and apply the mapping above.
std::vector<int> sample_permutation(RngStream& rng, int n);

// Halton low-discrepancy sequence with optional per-dimension digit
// scrambling.  Dimension j uses the j-th prime as its base; point k of the
// sequence is the (k+1)-th radical inverse (index 0, the origin, is
// skipped).  With scrambling enabled, each dimension applies a random
// permutation of its digit alphabet drawn from `seed`, including the
// standard tail correction perm[0]/(base-1) for the infinitely repeating
// zero digits, so scrambled coordinates remain uniform on (0,1).
class HaltonSequence {
public:
    HaltonSequence(int dimension, bool scramble, std::uint64_t seed);

    int dimension() const { return dimension_; }

    // Coordinate j of point k (k >= 0).
    double coordinate(long long k, int j) const;

    // All coordinates of point k into `out` (resized to the dimension).
    void point(long long k, std::vector<double>& out) const;

private:
    int dimension_;
    std::vector<int> bases_;
    // Concatenated digit permutations, one block of `base` entries per
    // dimension (identity when scrambling is off).
    std::vector<std::vector<int>> perms_;
};

} // namespace sopabn
