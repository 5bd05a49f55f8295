#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "sfqi/rng.hpp"

namespace sfqi {

// Fully-connected ReLU network with a scalar output clamped to
// [-v_max, v_max]. Dropout (inverted, rate in [0,1)) applies to hidden
// activations in train mode only.
struct NetworkArchitecture {
  int input_dim = 1;
  std::vector<int> hidden_widths;
  double dropout_rate = 0.1;
  double v_max = 1.0;

  int layer_count() const { return static_cast<int>(hidden_widths.size()); }
  void validate() const;
};

struct NetworkParameters {
  std::vector<Eigen::MatrixXd> weights;  // weights[j]: d_{j+1} x d_j
  std::vector<Eigen::VectorXd> biases;

  NetworkParameters& operator+=(const NetworkParameters& other);
  NetworkParameters& operator*=(double scale);
};

struct TrainConfig {
  int epochs = 200;
  int batch_size = 32;
  double learning_rate = 1e-3;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  std::uint64_t seed = 0;
};

enum class ForwardMode { Train, Eval };

// One 0/scale multiplier per hidden unit per batch column.
struct DropoutMasks {
  std::vector<Eigen::MatrixXd> masks;  // masks[j]: d_{j+1} x batch
};

NetworkParameters init_network(const NetworkArchitecture& arch,
                               std::uint64_t seed);

DropoutMasks sample_dropout_masks(const NetworkArchitecture& arch, int batch,
                                  Rng& rng);

// Batched forward pass; inputs are columns. Train mode samples fresh
// dropout masks from rng; eval mode is deterministic.
Eigen::RowVectorXd forward_batch(const NetworkParameters& params,
                                 const NetworkArchitecture& arch,
                                 const Eigen::MatrixXd& inputs,
                                 ForwardMode mode, Rng* rng = nullptr);

// Forward with explicit masks (train-mode semantics, reproducible).
Eigen::RowVectorXd forward_with_masks(const NetworkParameters& params,
                                      const NetworkArchitecture& arch,
                                      const Eigen::MatrixXd& inputs,
                                      const DropoutMasks& masks);

double forward(const NetworkParameters& params,
               const NetworkArchitecture& arch, const Eigen::VectorXd& input,
               ForwardMode mode = ForwardMode::Eval, Rng* rng = nullptr);

struct GradientResult {
  NetworkParameters grads;
  double loss = 0.0;
};

// Exact reverse-mode gradients of the mean squared error over the batch.
// The output clamp backpropagates as identity strictly inside
// (-v_max, v_max) and zero outside; the ReLU subgradient at 0 is 0. When
// masks is non-null the network runs in train mode with those masks fixed.
GradientResult gradient(const NetworkParameters& params,
                        const NetworkArchitecture& arch,
                        const Eigen::MatrixXd& inputs,
                        const Eigen::VectorXd& targets,
                        const DropoutMasks* masks = nullptr);

struct TrainResult {
  NetworkParameters params;   // parameters with the lowest recorded loss
  double best_loss = 0.0;
  std::vector<double> epoch_losses;  // full-data eval-mode MSE per epoch
};

// Shuffled minibatch Adam on the mean squared error. The initial
// parameters and every epoch end are loss-recording points; the best one
// is returned. Throws Divergence on a non-finite loss.
TrainResult train_regression(const NetworkParameters& start,
                             const NetworkArchitecture& arch,
                             const Eigen::MatrixXd& inputs,
                             const Eigen::VectorXd& targets,
                             const TrainConfig& cfg);

// Builds a random network and batch, compares analytic gradients against
// central finite differences (h = 1e-5) over every parameter in both eval
// mode and train mode with frozen masks; returns the worst relative error.
double gradient_check(const NetworkArchitecture& arch, std::uint64_t seed);

void save_params(const NetworkParameters& params, const std::string& path);
NetworkParameters load_params(const std::string& path);

// Text-serialized parameter block, reused by the policy file format.
void write_params_text(const NetworkParameters& params, std::string& out);
NetworkParameters read_params_text(std::istream& in,
                                   const std::string& context);

}  // namespace sfqi
