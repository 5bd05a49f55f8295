#include "sfqi/spectral.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "sfqi/textio.hpp"

namespace sfqi {

Eigen::MatrixXd pooled_z(const TrajectoryDataset& ds) {
  Eigen::MatrixXd samples(ds.state_count(), ds.m());
  Eigen::Index row = 0;
  for (const auto& traj : ds.trajectories())
    for (const auto& step : traj) samples.row(row++) = step.state.z.transpose();
  return samples;
}

std::pair<Eigen::VectorXd, Eigen::MatrixXd> estimate_covariance(
    const Eigen::MatrixXd& samples) {
  const Eigen::Index n = samples.rows();
  if (n < 2)
    fail(ErrorKind::InsufficientData,
         "covariance estimation needs at least 2 samples");
  const Eigen::VectorXd mean = samples.colwise().mean();
  const Eigen::MatrixXd centered = samples.rowwise() - mean.transpose();
  // population denominator: divide by n, which makes score whitening exact
  Eigen::MatrixXd cov =
      (centered.transpose() * centered) / static_cast<double>(n);
  cov = ((cov + cov.transpose()) * 0.5).eval();
  return {mean, cov};
}

std::pair<Eigen::VectorXd, Eigen::MatrixXd> estimate_covariance(
    const TrajectoryDataset& ds) {
  return estimate_covariance(pooled_z(ds));
}

namespace {

// Cyclic Jacobi rotations on a symmetric matrix; stops when the
// off-diagonal Frobenius norm falls below tol or after max_sweeps.
void jacobi_eigensymm(Eigen::MatrixXd a, Eigen::VectorXd& values,
                      Eigen::MatrixXd& vectors) {
  const Eigen::Index n = a.rows();
  vectors = Eigen::MatrixXd::Identity(n, n);
  const double tol = 1e-12 * std::max(1.0, a.norm());
  const int max_sweeps = 100;

  for (int sweep = 0; sweep < max_sweeps; ++sweep) {
    double off = 0.0;
    for (Eigen::Index p = 0; p < n; ++p)
      for (Eigen::Index q = p + 1; q < n; ++q) off += 2.0 * a(p, q) * a(p, q);
    if (std::sqrt(off) < tol) break;

    for (Eigen::Index p = 0; p < n - 1; ++p) {
      for (Eigen::Index q = p + 1; q < n; ++q) {
        const double apq = a(p, q);
        if (apq == 0.0) continue;
        const double app = a(p, p);
        const double aqq = a(q, q);
        const double theta = (aqq - app) / (2.0 * apq);
        // smaller-angle root of t^2 + 2 theta t - 1 = 0
        const double t = (theta >= 0.0 ? 1.0 : -1.0) /
                         (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;

        for (Eigen::Index k = 0; k < n; ++k) {
          const double akp = a(k, p);
          const double akq = a(k, q);
          a(k, p) = c * akp - s * akq;
          a(k, q) = s * akp + c * akq;
        }
        for (Eigen::Index k = 0; k < n; ++k) {
          const double apk = a(p, k);
          const double aqk = a(q, k);
          a(p, k) = c * apk - s * aqk;
          a(q, k) = s * apk + c * aqk;
        }
        for (Eigen::Index k = 0; k < n; ++k) {
          const double vkp = vectors(k, p);
          const double vkq = vectors(k, q);
          vectors(k, p) = c * vkp - s * vkq;
          vectors(k, q) = s * vkp + c * vkq;
        }
      }
    }
  }
  values = a.diagonal();
}

void sign_normalize(Eigen::MatrixXd& vectors) {
  for (Eigen::Index k = 0; k < vectors.cols(); ++k) {
    Eigen::Index arg = 0;
    double best = -1.0;
    for (Eigen::Index i = 0; i < vectors.rows(); ++i) {
      const double mag = std::abs(vectors(i, k));
      if (mag > best) {  // strict: ties keep the lowest index
        best = mag;
        arg = i;
      }
    }
    if (vectors(arg, k) < 0.0) vectors.col(k) = -vectors.col(k);
  }
}

}  // namespace

SpectralBasis eigendecompose(const Eigen::MatrixXd& g) {
  if (g.rows() != g.cols())
    fail(ErrorKind::Dimension, "eigendecompose needs a square matrix");
  const double asym = (g - g.transpose()).cwiseAbs().maxCoeff();
  if (asym > 1e-10)
    fail(ErrorKind::Asymmetric,
         "matrix is not symmetric (max |g - g'| = " + format_double(asym) +
             ")");

  Eigen::VectorXd values;
  Eigen::MatrixXd vectors;
  jacobi_eigensymm((g + g.transpose()) * 0.5, values, vectors);

  std::vector<Eigen::Index> order(static_cast<std::size_t>(values.size()));
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](Eigen::Index a, Eigen::Index b) {
                     return values(a) > values(b);
                   });

  SpectralBasis basis;
  basis.eigenvalues.resize(values.size());
  basis.eigenvectors.resize(vectors.rows(), vectors.cols());
  for (Eigen::Index k = 0; k < values.size(); ++k) {
    basis.eigenvalues(k) = values(order[static_cast<std::size_t>(k)]);
    basis.eigenvectors.col(k) =
        vectors.col(order[static_cast<std::size_t>(k)]);
  }
  sign_normalize(basis.eigenvectors);
  basis.mean = Eigen::VectorXd::Zero(g.rows());
  basis.sample_count = 0;
  return basis;
}

SpectralBasis fit_spectral_basis(const Eigen::MatrixXd& samples) {
  auto [mean, cov] = estimate_covariance(samples);
  SpectralBasis basis = eigendecompose(cov);
  basis.mean = mean;
  basis.sample_count = samples.rows();
  return basis;
}

SpectralBasis fit_spectral_basis(const TrajectoryDataset& ds) {
  return fit_spectral_basis(pooled_z(ds));
}

Eigen::VectorXd pc_scores(const SpectralBasis& basis, const Eigen::VectorXd& z,
                          int kappa) {
  if (kappa < 1 || kappa > basis.dim())
    fail(ErrorKind::Config, "kappa must lie in 1..m");
  if (z.size() != basis.dim())
    fail(ErrorKind::Dimension, "z has wrong length for this basis");
  if (!(basis.eigenvalues(kappa - 1) > basis.eps_rank()))
    fail(ErrorKind::RankDeficient,
         "eigenvalue " + std::to_string(kappa) +
             " is below the rank tolerance; lower kappa");

  const Eigen::VectorXd centered = z - basis.mean;
  Eigen::VectorXd scores(kappa);
  for (int k = 0; k < kappa; ++k)
    scores(k) = basis.eigenvectors.col(k).dot(centered) /
                std::sqrt(basis.eigenvalues(k));
  return scores;
}

Eigen::VectorXd reconstruct(const SpectralBasis& basis,
                            const Eigen::VectorXd& z, int kappa) {
  if (kappa < 1 || kappa > basis.dim())
    fail(ErrorKind::Config, "kappa must lie in 1..m");
  if (z.size() != basis.dim())
    fail(ErrorKind::Dimension, "z has wrong length for this basis");
  const Eigen::VectorXd centered = z - basis.mean;
  const auto leading = basis.eigenvectors.leftCols(kappa);
  return basis.mean + leading * (leading.transpose() * centered);
}

double variance_explained(const SpectralBasis& basis, int kappa) {
  double total = 0.0;
  double head = 0.0;
  for (int k = 0; k < basis.dim(); ++k) {
    const double lambda = std::max(basis.eigenvalues(k), 0.0);
    total += lambda;
    if (k < kappa) head += lambda;
  }
  if (!(total > 0.0))
    fail(ErrorKind::DegenerateSpectrum, "no positive eigenvalues");
  return head / total;
}

int select_kappa(const SpectralBasis& basis, double threshold) {
  if (!(threshold > 0.0) || threshold > 1.0)
    fail(ErrorKind::Config, "threshold must lie in (0, 1]");
  double total = 0.0;
  for (int k = 0; k < basis.dim(); ++k)
    total += std::max(basis.eigenvalues(k), 0.0);
  if (!(total > 0.0))
    fail(ErrorKind::DegenerateSpectrum, "no positive eigenvalues");
  double head = 0.0;
  for (int k = 0; k < basis.dim(); ++k) {
    head += std::max(basis.eigenvalues(k), 0.0);
    if (head / total >= threshold) return k + 1;
  }
  return basis.dim();
}

std::vector<std::pair<int, double>> reconstruction_error_curve(
    const SpectralBasis& basis, const TrajectoryDataset& ds,
    const std::vector<int>& kappas) {
  const Eigen::MatrixXd samples = pooled_z(ds);
  std::vector<std::pair<int, double>> out;
  out.reserve(kappas.size());
  for (int kappa : kappas) {
    double sum = 0.0;
    for (Eigen::Index i = 0; i < samples.rows(); ++i) {
      const Eigen::VectorXd z = samples.row(i).transpose();
      sum += (z - reconstruct(basis, z, kappa)).squaredNorm();
    }
    out.emplace_back(kappa, sum / static_cast<double>(samples.rows()));
  }
  return out;
}

void save_basis(const SpectralBasis& basis, const std::string& path) {
  std::string out;
  out += "m=" + std::to_string(basis.dim());
  out += " sample_count=" + std::to_string(basis.sample_count);
  out.push_back('\n');
  out += join_doubles(basis.mean) + "\n";
  out += join_doubles(basis.eigenvalues) + "\n";
  for (Eigen::Index i = 0; i < basis.eigenvectors.rows(); ++i)
    out += join_doubles(basis.eigenvectors.row(i).transpose()) + "\n";
  write_file(path, out);
}

SpectralBasis load_basis(const std::string& path) {
  std::istringstream in(read_file(path));
  std::string line;
  if (!std::getline(in, line)) fail(ErrorKind::Schema, "empty basis file");
  const auto header = parse_kv_line(line);
  if (!header.count("m") || !header.count("sample_count"))
    fail(ErrorKind::Schema, "basis header must carry m and sample_count");
  const int m = static_cast<int>(parse_int(header.at("m"), path));

  SpectralBasis basis;
  basis.sample_count = parse_int(header.at("sample_count"), path);
  if (!std::getline(in, line)) fail(ErrorKind::Schema, "basis missing mean");
  basis.mean = parse_doubles(line, path);
  if (!std::getline(in, line))
    fail(ErrorKind::Schema, "basis missing eigenvalues");
  basis.eigenvalues = parse_doubles(line, path);
  basis.eigenvectors.resize(m, m);
  for (int i = 0; i < m; ++i) {
    if (!std::getline(in, line))
      fail(ErrorKind::Schema, "basis missing eigenvector row");
    basis.eigenvectors.row(i) = parse_doubles(line, path).transpose();
  }
  if (basis.mean.size() != m || basis.eigenvalues.size() != m)
    fail(ErrorKind::Dimension, "basis file dimensions inconsistent");
  return basis;
}

}  // namespace sfqi
