#pragma once

#include <Eigen/Dense>
#include <string>
#include <utility>
#include <vector>

#include "sfqi/dataset.hpp"

namespace sfqi {

// Result of the spectral decomposition of an estimated covariance matrix:
// pooled mean, eigenvalues sorted non-increasing, orthonormal eigenvector
// columns, and the sample count behind the estimate.
struct SpectralBasis {
  Eigen::VectorXd mean;
  Eigen::VectorXd eigenvalues;
  Eigen::MatrixXd eigenvectors;  // column k is the k-th eigenvector
  long long sample_count = 0;

  int dim() const { return static_cast<int>(eigenvalues.size()); }
  // Scale-relative tolerances, anchored at the leading eigenvalue.
  double eps_psd() const { return 1e-8 * std::max(eigenvalues(0), 0.0); }
  double eps_rank() const { return 1e-12 * std::max(eigenvalues(0), 0.0); }
};

// Pooled mean and covariance of the z samples, population denominator
// (divide by the sample count, not count-1). Rows of `samples` are
// observations.
std::pair<Eigen::VectorXd, Eigen::MatrixXd> estimate_covariance(
    const Eigen::MatrixXd& samples);

// Same, pooling every state's z across trajectories and time.
std::pair<Eigen::VectorXd, Eigen::MatrixXd> estimate_covariance(
    const TrajectoryDataset& ds);

// Matrix of all pooled z observations (one row per state).
Eigen::MatrixXd pooled_z(const TrajectoryDataset& ds);

// Symmetric eigendecomposition by cyclic Jacobi rotations. Sorted
// non-increasing; each eigenvector sign-normalized so its
// largest-magnitude entry is positive (ties to the lowest index). The
// mean of the returned basis is zero and sample_count is 0; callers that
// fit from data should use fit_spectral_basis.
SpectralBasis eigendecompose(const Eigen::MatrixXd& g);

// estimate_covariance + eigendecompose, carrying mean and sample count.
SpectralBasis fit_spectral_basis(const TrajectoryDataset& ds);
SpectralBasis fit_spectral_basis(const Eigen::MatrixXd& samples);

// First kappa principal component scores of z: component k equals
// (z - mean)' U_k / sqrt(lambda_k).
Eigen::VectorXd pc_scores(const SpectralBasis& basis,
                          const Eigen::VectorXd& z, int kappa);

// mean + sum_{k<=kappa} U_k U_k' (z - mean).
Eigen::VectorXd reconstruct(const SpectralBasis& basis,
                            const Eigen::VectorXd& z, int kappa);

// Smallest kappa whose cumulative variance-explained ratio reaches the
// threshold. Negative eigenvalues are floored at zero for the ratio.
int select_kappa(const SpectralBasis& basis, double threshold);

// Fraction of variance explained by the first kappa components.
double variance_explained(const SpectralBasis& basis, int kappa);

// Mean squared reconstruction error over every state in the dataset, for
// each requested kappa.
std::vector<std::pair<int, double>> reconstruction_error_curve(
    const SpectralBasis& basis, const TrajectoryDataset& ds,
    const std::vector<int>& kappas);

// Plain-text export: header, mean, eigenvalues, then eigenvector rows.
void save_basis(const SpectralBasis& basis, const std::string& path);
SpectralBasis load_basis(const std::string& path);

}  // namespace sfqi
