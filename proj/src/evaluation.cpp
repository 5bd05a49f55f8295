#include "sfqi/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <set>

#include "sfqi/textio.hpp"

namespace sfqi {

namespace {

struct TreeBuilder {
  const Eigen::MatrixXd& inputs;  // rows are samples, canonical order
  const Eigen::VectorXd& targets;
  const TreeEnsembleConfig& cfg;
  std::vector<TreeEnsembleRegressor::Node>& nodes;

  int build(std::vector<int>& rows, int depth) {
    const int n = static_cast<int>(rows.size());
    double sum = 0.0;
    double sum_sq = 0.0;
    for (int r : rows) {
      sum += targets(r);
      sum_sq += targets(r) * targets(r);
    }
    const double mean = sum / n;
    const double sse = sum_sq - sum * sum / n;

    const auto leaf = [&]() {
      TreeEnsembleRegressor::Node node;
      node.value = mean;
      nodes.push_back(node);
      return static_cast<int>(nodes.size()) - 1;
    };
    if (depth >= cfg.max_depth || n < 2 * cfg.min_leaf || sse <= 1e-12)
      return leaf();

    // best axis-aligned split by SSE reduction; ties keep the lowest
    // feature index and threshold
    int best_feature = -1;
    double best_threshold = 0.0;
    double best_reduction = 0.0;
    std::vector<int> sorted = rows;
    for (int f = 0; f < inputs.cols(); ++f) {
      std::sort(sorted.begin(), sorted.end(), [&](int a, int b) {
        if (inputs(a, f) != inputs(b, f)) return inputs(a, f) < inputs(b, f);
        return a < b;
      });
      double left_sum = 0.0;
      double left_sq = 0.0;
      for (int i = 0; i + 1 < n; ++i) {
        const int r = sorted[static_cast<std::size_t>(i)];
        left_sum += targets(r);
        left_sq += targets(r) * targets(r);
        const double v = inputs(r, f);
        const double v_next = inputs(sorted[static_cast<std::size_t>(i + 1)], f);
        if (v == v_next) continue;  // split only between distinct values
        const int left_n = i + 1;
        const int right_n = n - left_n;
        if (left_n < cfg.min_leaf || right_n < cfg.min_leaf) continue;
        const double right_sum = sum - left_sum;
        const double right_sq = sum_sq - left_sq;
        const double left_sse = left_sq - left_sum * left_sum / left_n;
        const double right_sse = right_sq - right_sum * right_sum / right_n;
        const double reduction = sse - left_sse - right_sse;
        if (reduction > best_reduction + 1e-12) {
          best_reduction = reduction;
          best_feature = f;
          best_threshold = 0.5 * (v + v_next);
        }
      }
    }
    if (best_feature < 0) return leaf();

    std::vector<int> left_rows;
    std::vector<int> right_rows;
    for (int r : rows) {
      if (inputs(r, best_feature) <= best_threshold)
        left_rows.push_back(r);
      else
        right_rows.push_back(r);
    }
    const int index = static_cast<int>(nodes.size());
    nodes.push_back({});
    const int left = build(left_rows, depth + 1);
    const int right = build(right_rows, depth + 1);
    nodes[static_cast<std::size_t>(index)].feature = best_feature;
    nodes[static_cast<std::size_t>(index)].threshold = best_threshold;
    nodes[static_cast<std::size_t>(index)].left = left;
    nodes[static_cast<std::size_t>(index)].right = right;
    return index;
  }
};

}  // namespace

TreeEnsembleRegressor TreeEnsembleRegressor::fit(
    const Eigen::MatrixXd& inputs, const Eigen::VectorXd& targets,
    const TreeEnsembleConfig& cfg) {
  const int n = static_cast<int>(inputs.rows());
  if (n < 1 || targets.size() != n)
    fail(ErrorKind::InsufficientData, "tree fit needs matching, non-empty data");
  if (cfg.n_trees < 1 || cfg.min_leaf < 1 || cfg.max_depth < 1 ||
      !(cfg.bootstrap_fraction > 0.0))
    fail(ErrorKind::Config, "invalid tree ensemble configuration");

  // canonical row order: training becomes invariant to the input row order
  std::vector<int> canon(static_cast<std::size_t>(n));
  std::iota(canon.begin(), canon.end(), 0);
  std::sort(canon.begin(), canon.end(), [&](int a, int b) {
    for (Eigen::Index c = 0; c < inputs.cols(); ++c) {
      if (inputs(a, c) != inputs(b, c)) return inputs(a, c) < inputs(b, c);
    }
    return targets(a) < targets(b);
  });
  Eigen::MatrixXd x(n, inputs.cols());
  Eigen::VectorXd y(n);
  for (int i = 0; i < n; ++i) {
    x.row(i) = inputs.row(canon[static_cast<std::size_t>(i)]);
    y(i) = targets(canon[static_cast<std::size_t>(i)]);
  }

  const int draw = std::max(
      1, static_cast<int>(std::lround(cfg.bootstrap_fraction * n)));
  TreeEnsembleRegressor model;
  model.trees_.resize(static_cast<std::size_t>(cfg.n_trees));
  for (int t = 0; t < cfg.n_trees; ++t) {
    Rng rng(mix_seed(cfg.seed, static_cast<std::uint64_t>(t)));
    std::vector<int> rows(static_cast<std::size_t>(draw));
    for (int i = 0; i < draw; ++i)
      rows[static_cast<std::size_t>(i)] = static_cast<int>(
          uniform_below(rng, static_cast<std::uint64_t>(n)));
    std::sort(rows.begin(), rows.end());
    auto& nodes = model.trees_[static_cast<std::size_t>(t)];
    TreeBuilder builder{x, y, cfg, nodes};
    builder.build(rows, 0);
  }
  return model;
}

double TreeEnsembleRegressor::predict(const Eigen::VectorXd& input) const {
  double total = 0.0;
  for (const auto& nodes : trees_) {
    int at = 0;
    while (nodes[static_cast<std::size_t>(at)].feature >= 0) {
      const auto& node = nodes[static_cast<std::size_t>(at)];
      at = input(node.feature) <= node.threshold ? node.left : node.right;
    }
    total += nodes[static_cast<std::size_t>(at)].value;
  }
  return total / static_cast<double>(trees_.size());
}

EvalReport make_report(std::vector<double> values,
                       std::vector<std::uint64_t> seeds, std::string label) {
  if (values.empty())
    fail(ErrorKind::InsufficientData, "report needs at least one value");
  if (seeds.size() != values.size())
    fail(ErrorKind::Pairing, "seed list and value list differ in length");
  EvalReport report;
  report.values = std::move(values);
  report.seeds = std::move(seeds);
  report.label = std::move(label);
  const double n = static_cast<double>(report.values.size());
  report.mean =
      std::accumulate(report.values.begin(), report.values.end(), 0.0) / n;
  if (report.values.size() > 1) {
    double ss = 0.0;
    for (double v : report.values)
      ss += (v - report.mean) * (v - report.mean);
    report.se = std::sqrt(ss / (n - 1.0)) / std::sqrt(n);
  }
  return report;
}

EvalReport monte_carlo_value(const SimConfig& cfg, const PolicyFn& policy,
                             int n_mc, int t_mc, std::uint64_t seed,
                             const std::string& label) {
  std::vector<double> values = rollout(cfg, policy, n_mc, t_mc, seed);
  std::vector<std::uint64_t> indices(values.size());
  std::iota(indices.begin(), indices.end(), 0);
  return make_report(std::move(values), std::move(indices), label);
}

std::uint64_t fqe_tree_seed(std::uint64_t seed, int iteration) {
  return mix_seed(seed, 0x66716574ULL, static_cast<std::uint64_t>(iteration));
}

double fitted_q_evaluation(const PolicyFn& policy, const TrajectoryDataset& ds,
                           const SpectralBasis* basis,
                           const FeatureVariant& variant, double gamma,
                           const FqeConfig& cfg) {
  if (!(gamma >= 0.0) || gamma >= 1.0)
    fail(ErrorKind::Config, "gamma must lie in [0, 1)");
  if (cfg.iterations < 1) fail(ErrorKind::Config, "iterations must be >= 1");
  if (variant.needs_basis() && basis == nullptr)
    fail(ErrorKind::Config, "PCA features require a fitted basis");

  const std::vector<Transition> transitions = to_transitions(ds);
  const Eigen::Index n = static_cast<Eigen::Index>(transitions.size());
  const int d =
      feature_dim(variant, ds.m0(), ds.m(),
                  static_cast<int>(ds.block_lengths().size()));

  std::set<int> seen_actions;
  for (const auto& tr : transitions) seen_actions.insert(tr.action);

  // state-action features: state features with the action index appended
  Eigen::MatrixXd sa(n, d + 1);
  Eigen::MatrixXd next_sa(n, d + 1);
  Eigen::VectorXd rewards(n);
  bool warned = false;
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& tr = transitions[static_cast<std::size_t>(i)];
    sa.row(i).head(d) = build_features(variant, *tr.state, basis).transpose();
    sa(i, d) = static_cast<double>(tr.action);
    const int pi_action = policy(*tr.next_state);
    if (!seen_actions.count(pi_action) && !warned) {
      std::fprintf(stderr,
                   "warning: policy selects action %d, never observed in the "
                   "evaluation dataset\n",
                   pi_action);
      warned = true;
    }
    next_sa.row(i).head(d) =
        build_features(variant, *tr.next_state, basis).transpose();
    next_sa(i, d) = static_cast<double>(pi_action);
    rewards(i) = tr.reward;
  }

  TreeEnsembleRegressor model;
  bool have_model = false;
  for (int k = 1; k <= cfg.iterations; ++k) {
    Eigen::VectorXd targets = rewards;
    if (have_model && gamma > 0.0) {
      for (Eigen::Index i = 0; i < n; ++i)
        targets(i) += gamma * model.predict(next_sa.row(i).transpose());
    }
    TreeEnsembleConfig tree_cfg = cfg.trees;
    tree_cfg.seed = fqe_tree_seed(cfg.seed, k);
    model = TreeEnsembleRegressor::fit(sa, targets, tree_cfg);
    have_model = true;
  }

  // value estimate: mean of Q_K(s0, pi(s0)) over trajectory-initial states
  double total = 0.0;
  for (const auto& traj : ds.trajectories()) {
    const MixedState& s0 = traj[0].state;
    Eigen::VectorXd feat(d + 1);
    feat.head(d) = build_features(variant, s0, basis);
    feat(d) = static_cast<double>(policy(s0));
    total += model.predict(feat);
  }
  return total / static_cast<double>(ds.n_traj());
}

ComparisonReport compare_policies(const EvalReport& a, const EvalReport& b) {
  if (a.seeds != b.seeds)
    fail(ErrorKind::Pairing,
         "paired comparison requires identical seed lists");
  ComparisonReport report;
  report.label = a.label + "-" + b.label;
  report.diffs.resize(a.values.size());
  for (std::size_t i = 0; i < a.values.size(); ++i)
    report.diffs[i] = a.values[i] - b.values[i];
  const double n = static_cast<double>(report.diffs.size());
  report.mean_diff =
      std::accumulate(report.diffs.begin(), report.diffs.end(), 0.0) / n;
  if (report.diffs.size() > 1) {
    double ss = 0.0;
    for (double d : report.diffs)
      ss += (d - report.mean_diff) * (d - report.mean_diff);
    const double se = std::sqrt(ss / (n - 1.0)) / std::sqrt(n);
    report.margin = 1.96 * se;
  }
  return report;
}

void save_report(const EvalReport& report, const std::string& path) {
  std::string out;
  out += "label=" + report.label;
  out += " count=" + std::to_string(report.values.size());
  out += " mean=" + format_double(report.mean);
  out += " se=" + format_double(report.se);
  out.push_back('\n');
  for (std::size_t i = 0; i < report.values.size(); ++i)
    out += std::to_string(report.seeds[i]) + "," +
           format_double(report.values[i]) + "\n";
  write_file(path, out);
}

void save_comparison(const ComparisonReport& report, const std::string& path) {
  std::string out;
  out += "label=" + report.label;
  out += " count=" + std::to_string(report.diffs.size());
  out += " mean_diff=" + format_double(report.mean_diff);
  out += " margin=" + format_double(report.margin);
  out.push_back('\n');
  for (std::size_t i = 0; i < report.diffs.size(); ++i)
    out += std::to_string(i) + "," + format_double(report.diffs[i]) + "\n";
  write_file(path, out);
}

}  // namespace sfqi
