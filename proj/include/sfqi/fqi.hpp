#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "sfqi/dataset.hpp"
#include "sfqi/neuralnet.hpp"
#include "sfqi/spectral.hpp"

namespace sfqi {

// State featurization fed to the per-action Q networks:
//   Pca        concat(x, first-kappa PC scores of z)
//   All        concat(x, z)
//   Ave        concat(x, per-block means of z)
//   Bottleneck concat(x, z); the network gets an extra leading hidden
//              layer of width m0 + kappa that performs the reduction
struct FeatureVariant {
  enum class Kind { Pca, All, Ave, Bottleneck };
  Kind kind = Kind::All;
  int kappa = 0;

  static FeatureVariant pca(int kappa) { return {Kind::Pca, kappa}; }
  static FeatureVariant all() { return {Kind::All, 0}; }
  static FeatureVariant ave() { return {Kind::Ave, 0}; }
  static FeatureVariant bottleneck(int kappa) {
    return {Kind::Bottleneck, kappa};
  }

  bool needs_basis() const { return kind == Kind::Pca; }
  std::string name() const;
  static FeatureVariant from_name(const std::string& name, int kappa);
};

int feature_dim(const FeatureVariant& variant, int m0, int m, int blocks);

Eigen::VectorXd build_features(const FeatureVariant& variant,
                               const MixedState& state,
                               const SpectralBasis* basis);

// Widths of the hidden stack for a variant: Bottleneck prepends one layer
// of width m0 + kappa to the base widths.
std::vector<int> variant_hidden_widths(const FeatureVariant& variant,
                                       const std::vector<int>& base_widths,
                                       int m0);

// One ReLU network per action plus the discount and clamp shared by all.
struct QEnsemble {
  std::vector<NetworkParameters> nets;
  NetworkArchitecture arch;
  double gamma = 0.5;
  FeatureVariant variant;
  std::shared_ptr<const SpectralBasis> basis;  // null unless variant uses it
  int action_count() const { return static_cast<int>(nets.size()); }
  double v_max() const { return arch.v_max; }
};

Eigen::VectorXd q_values(const QEnsemble& q, const MixedState& state);

// Argmax of eval-mode Q values; ties break to the lowest action index.
int greedy_action(const QEnsemble& q, const MixedState& state);

struct GreedyPolicy {
  std::shared_ptr<const QEnsemble> q;
  int operator()(const MixedState& state) const {
    return greedy_action(*q, state);
  }
};

// reward + gamma * max_a Q(next_state, a), evaluated in eval mode and
// clamped to [-v_max, v_max].
Eigen::VectorXd bellman_targets(const QEnsemble& q,
                                const std::vector<Transition>& transitions);

struct FqiConfig {
  int iterations = 50;
  int sample_size = 0;  // 0 = use all N(T-1) transitions each iteration
  TrainConfig train;
  std::uint64_t seed = 0;
};

// Seed derivation shared with tests: network initialization per action and
// the regression fit of iteration k (1-based) per action.
std::uint64_t fqi_init_seed(std::uint64_t seed, int action);
std::uint64_t fqi_fit_seed(std::uint64_t seed, int iteration, int action);

// Runs `iterations` rounds of fitted Q-iteration: targets come from the
// frozen previous ensemble, transitions are partitioned by action, and
// each action's network is refit by train_regression warm-started from the
// previous iterate. V_max is set to ds.r_max() / (1 - gamma).
QEnsemble spectral_fqi(const TrajectoryDataset& ds,
                       const FeatureVariant& variant,
                       std::shared_ptr<const SpectralBasis> basis,
                       const std::vector<int>& base_hidden_widths,
                       double dropout_rate, double gamma,
                       const FqiConfig& cfg);

GreedyPolicy make_greedy_policy(QEnsemble ensemble);

// Self-contained policy file: variant, discount, architecture, basis (when
// present) and per-action parameters. Enough to reload and act.
void save_policy(const QEnsemble& q, const std::string& path);
QEnsemble load_policy(const std::string& path);

}  // namespace sfqi
