#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

#include "sfqi/dataset.hpp"
#include "sfqi/envsim.hpp"
#include "sfqi/fqi.hpp"

namespace sfqi {

struct TreeEnsembleConfig {
  int n_trees = 100;
  int max_depth = 10;
  int min_leaf = 5;
  double bootstrap_fraction = 1.0;  // sampled with replacement
  std::uint64_t seed = 0;
};

// Bagged regression trees with axis-aligned variance-reduction splits;
// prediction is the mean of the per-tree leaf means. Rows are canonicalized
// (sorted lexicographically) before fitting, so training is invariant to
// the input row order given the per-tree seed scheme.
class TreeEnsembleRegressor {
 public:
  struct Node {
    int feature = -1;  // -1 marks a leaf
    double threshold = 0.0;
    int left = -1;
    int right = -1;
    double value = 0.0;
  };

  static TreeEnsembleRegressor fit(const Eigen::MatrixXd& inputs,
                                   const Eigen::VectorXd& targets,
                                   const TreeEnsembleConfig& cfg);

  double predict(const Eigen::VectorXd& input) const;

  int tree_count() const { return static_cast<int>(trees_.size()); }

 private:
  std::vector<std::vector<Node>> trees_;
};

struct EvalReport {
  std::vector<double> values;
  std::vector<std::uint64_t> seeds;  // one per value; pairs comparisons
  double mean = 0.0;
  double se = 0.0;  // sample stdev / sqrt(count)
  std::string label;
};

EvalReport make_report(std::vector<double> values,
                       std::vector<std::uint64_t> seeds, std::string label);

struct ComparisonReport {
  double mean_diff = 0.0;
  double margin = 0.0;  // 1.96 * SE of the paired differences
  std::vector<double> diffs;
  std::string label;
};

// Mean and standard error of discounted Monte-Carlo returns under the
// policy; values carry one entry per rollout.
EvalReport monte_carlo_value(const SimConfig& cfg, const PolicyFn& policy,
                             int n_mc, int t_mc, std::uint64_t seed,
                             const std::string& label = "mc");

struct FqeConfig {
  int iterations = 30;
  TreeEnsembleConfig trees;
  std::uint64_t seed = 0;
};

std::uint64_t fqe_tree_seed(std::uint64_t seed, int iteration);

// Fitted Q Evaluation: iterates Q_{k+1} <- regress(features(s) + action ->
// y + gamma * Q_k(s', pi(s'))) with the tree ensemble, then returns the
// mean of Q_K(s0, pi(s0)) over the first state of each trajectory. Warns
// (stderr) when pi selects an action absent from the dataset.
double fitted_q_evaluation(const PolicyFn& policy, const TrajectoryDataset& ds,
                           const SpectralBasis* basis,
                           const FeatureVariant& variant, double gamma,
                           const FqeConfig& cfg);

// Paired comparison of two reports with identical seed lists.
ComparisonReport compare_policies(const EvalReport& a, const EvalReport& b);

// Line-delimited records (label,seed,value) and a one-line summary.
void save_report(const EvalReport& report, const std::string& path);
void save_comparison(const ComparisonReport& report, const std::string& path);

}  // namespace sfqi
