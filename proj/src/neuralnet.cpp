#include "sfqi/neuralnet.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "sfqi/errors.hpp"
#include "sfqi/textio.hpp"

namespace sfqi {

void NetworkArchitecture::validate() const {
  if (input_dim < 1) fail(ErrorKind::Config, "input_dim must be >= 1");
  if (hidden_widths.empty())
    fail(ErrorKind::Config, "at least one hidden layer is required");
  for (int w : hidden_widths)
    if (w < 1) fail(ErrorKind::Config, "hidden widths must be >= 1");
  if (dropout_rate < 0.0 || dropout_rate >= 1.0)
    fail(ErrorKind::Config, "dropout_rate must lie in [0, 1)");
  if (!(v_max > 0.0)) fail(ErrorKind::Config, "v_max must be positive");
}

NetworkParameters& NetworkParameters::operator+=(
    const NetworkParameters& other) {
  for (std::size_t j = 0; j < weights.size(); ++j) {
    weights[j] += other.weights[j];
    biases[j] += other.biases[j];
  }
  return *this;
}

NetworkParameters& NetworkParameters::operator*=(double scale) {
  for (std::size_t j = 0; j < weights.size(); ++j) {
    weights[j] *= scale;
    biases[j] *= scale;
  }
  return *this;
}

namespace {

std::vector<int> layer_dims(const NetworkArchitecture& arch) {
  std::vector<int> dims;
  dims.push_back(arch.input_dim);
  for (int w : arch.hidden_widths) dims.push_back(w);
  dims.push_back(1);
  return dims;
}

void check_shapes(const NetworkParameters& params,
                  const NetworkArchitecture& arch) {
  const auto dims = layer_dims(arch);
  if (params.weights.size() != dims.size() - 1 ||
      params.biases.size() != dims.size() - 1)
    fail(ErrorKind::Dimension, "parameter count does not match architecture");
  for (std::size_t j = 0; j + 1 < dims.size(); ++j) {
    if (params.weights[j].rows() != dims[j + 1] ||
        params.weights[j].cols() != dims[j] ||
        params.biases[j].size() != dims[j + 1])
      fail(ErrorKind::Dimension, "parameter shapes do not match architecture");
  }
}

}  // namespace

NetworkParameters init_network(const NetworkArchitecture& arch,
                               std::uint64_t seed) {
  arch.validate();
  Rng rng(seed);
  const auto dims = layer_dims(arch);
  NetworkParameters params;
  for (std::size_t j = 0; j + 1 < dims.size(); ++j) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(dims[j]));
    Eigen::MatrixXd w(dims[j + 1], dims[j]);
    for (Eigen::Index r = 0; r < w.rows(); ++r)
      for (Eigen::Index c = 0; c < w.cols(); ++c)
        w(r, c) = (2.0 * uniform01(rng) - 1.0) * bound;
    params.weights.push_back(std::move(w));
    params.biases.push_back(Eigen::VectorXd::Zero(dims[j + 1]));
  }
  return params;
}

DropoutMasks sample_dropout_masks(const NetworkArchitecture& arch, int batch,
                                  Rng& rng) {
  DropoutMasks masks;
  const double keep = 1.0 - arch.dropout_rate;
  const double scale = 1.0 / keep;
  for (int w : arch.hidden_widths) {
    Eigen::MatrixXd mask(w, batch);
    for (Eigen::Index c = 0; c < mask.cols(); ++c)
      for (Eigen::Index r = 0; r < mask.rows(); ++r)
        mask(r, c) = uniform01(rng) < arch.dropout_rate ? 0.0 : scale;
    masks.masks.push_back(std::move(mask));
  }
  return masks;
}

namespace {

struct ForwardTrace {
  std::vector<Eigen::MatrixXd> activations;  // activations[0] = inputs
  Eigen::RowVectorXd raw_output;
  Eigen::RowVectorXd clamped_output;
};

ForwardTrace run_forward(const NetworkParameters& params,
                         const NetworkArchitecture& arch,
                         const Eigen::MatrixXd& inputs,
                         const DropoutMasks* masks) {
  check_shapes(params, arch);
  if (inputs.rows() != arch.input_dim)
    fail(ErrorKind::Dimension, "input rows do not match input_dim");

  ForwardTrace trace;
  trace.activations.reserve(arch.hidden_widths.size() + 1);
  trace.activations.push_back(inputs);
  Eigen::MatrixXd h = inputs;
  for (std::size_t j = 0; j < arch.hidden_widths.size(); ++j) {
    Eigen::MatrixXd z =
        (params.weights[j] * h).colwise() + params.biases[j];
    h = z.cwiseMax(0.0);
    if (masks != nullptr) h = h.cwiseProduct(masks->masks[j]);
    trace.activations.push_back(h);
  }
  const std::size_t last = params.weights.size() - 1;
  trace.raw_output =
      (params.weights[last] * h).colwise() + params.biases[last];
  trace.clamped_output =
      trace.raw_output.cwiseMax(-arch.v_max).cwiseMin(arch.v_max);
  return trace;
}

}  // namespace

Eigen::RowVectorXd forward_batch(const NetworkParameters& params,
                                 const NetworkArchitecture& arch,
                                 const Eigen::MatrixXd& inputs,
                                 ForwardMode mode, Rng* rng) {
  if (mode == ForwardMode::Train && arch.dropout_rate > 0.0) {
    if (rng == nullptr)
      fail(ErrorKind::Config, "train-mode forward needs an RNG for dropout");
    const DropoutMasks masks =
        sample_dropout_masks(arch, static_cast<int>(inputs.cols()), *rng);
    return run_forward(params, arch, inputs, &masks).clamped_output;
  }
  return run_forward(params, arch, inputs, nullptr).clamped_output;
}

Eigen::RowVectorXd forward_with_masks(const NetworkParameters& params,
                                      const NetworkArchitecture& arch,
                                      const Eigen::MatrixXd& inputs,
                                      const DropoutMasks& masks) {
  return run_forward(params, arch, inputs, &masks).clamped_output;
}

double forward(const NetworkParameters& params,
               const NetworkArchitecture& arch, const Eigen::VectorXd& input,
               ForwardMode mode, Rng* rng) {
  return forward_batch(params, arch, input, mode, rng)(0);
}

GradientResult gradient(const NetworkParameters& params,
                        const NetworkArchitecture& arch,
                        const Eigen::MatrixXd& inputs,
                        const Eigen::VectorXd& targets,
                        const DropoutMasks* masks) {
  if (inputs.cols() != targets.size())
    fail(ErrorKind::Dimension, "batch and target sizes differ");
  if (inputs.cols() == 0) fail(ErrorKind::InsufficientData, "empty batch");

  const ForwardTrace trace = run_forward(params, arch, inputs, masks);
  const double batch = static_cast<double>(inputs.cols());

  GradientResult result;
  const Eigen::RowVectorXd residual =
      trace.clamped_output - targets.transpose();
  result.loss = residual.squaredNorm() / batch;

  // clamp: identity strictly inside (-v_max, v_max), zero outside
  const Eigen::RowVectorXd gate =
      (trace.raw_output.array().abs() < arch.v_max).cast<double>();
  Eigen::RowVectorXd d_out = (2.0 / batch) * residual.cwiseProduct(gate);

  const std::size_t layers = params.weights.size();
  result.grads.weights.resize(layers);
  result.grads.biases.resize(layers);

  Eigen::MatrixXd delta = d_out;  // 1 x batch at the output layer
  for (std::size_t j = layers; j-- > 0;) {
    result.grads.weights[j] = delta * trace.activations[j].transpose();
    result.grads.biases[j] = delta.rowwise().sum();
    if (j == 0) break;
    Eigen::MatrixXd back = params.weights[j].transpose() * delta;
    if (masks != nullptr) back = back.cwiseProduct(masks->masks[j - 1]);
    // ReLU subgradient at 0 is 0; the post-activation value is positive
    // exactly where the pre-activation was
    const Eigen::MatrixXd relu_gate =
        (trace.activations[j].array() > 0.0).cast<double>();
    delta = back.cwiseProduct(relu_gate);
  }
  return result;
}

namespace {

struct AdamState {
  std::vector<Eigen::MatrixXd> mw, vw;
  std::vector<Eigen::VectorXd> mb, vb;
  long long t = 0;

  explicit AdamState(const NetworkParameters& params) {
    for (const auto& w : params.weights) {
      mw.push_back(Eigen::MatrixXd::Zero(w.rows(), w.cols()));
      vw.push_back(Eigen::MatrixXd::Zero(w.rows(), w.cols()));
    }
    for (const auto& b : params.biases) {
      mb.push_back(Eigen::VectorXd::Zero(b.size()));
      vb.push_back(Eigen::VectorXd::Zero(b.size()));
    }
  }

  void update(NetworkParameters& params, const NetworkParameters& grads,
              const TrainConfig& cfg) {
    ++t;
    const double c1 = 1.0 - std::pow(cfg.adam_beta1, static_cast<double>(t));
    const double c2 = 1.0 - std::pow(cfg.adam_beta2, static_cast<double>(t));
    for (std::size_t j = 0; j < params.weights.size(); ++j) {
      mw[j] = cfg.adam_beta1 * mw[j] + (1.0 - cfg.adam_beta1) * grads.weights[j];
      vw[j] = cfg.adam_beta2 * vw[j] +
              (1.0 - cfg.adam_beta2) * grads.weights[j].cwiseProduct(
                                           grads.weights[j]);
      params.weights[j].array() -=
          cfg.learning_rate * (mw[j].array() / c1) /
          ((vw[j].array() / c2).sqrt() + cfg.adam_eps);

      mb[j] = cfg.adam_beta1 * mb[j] + (1.0 - cfg.adam_beta1) * grads.biases[j];
      vb[j] = cfg.adam_beta2 * vb[j] +
              (1.0 - cfg.adam_beta2) *
                  grads.biases[j].cwiseProduct(grads.biases[j]);
      params.biases[j].array() -=
          cfg.learning_rate * (mb[j].array() / c1) /
          ((vb[j].array() / c2).sqrt() + cfg.adam_eps);
    }
  }
};

double eval_mse(const NetworkParameters& params,
                const NetworkArchitecture& arch, const Eigen::MatrixXd& inputs,
                const Eigen::VectorXd& targets) {
  const Eigen::RowVectorXd out =
      forward_batch(params, arch, inputs, ForwardMode::Eval);
  return (out - targets.transpose()).squaredNorm() /
         static_cast<double>(inputs.cols());
}

}  // namespace

TrainResult train_regression(const NetworkParameters& start,
                             const NetworkArchitecture& arch,
                             const Eigen::MatrixXd& inputs,
                             const Eigen::VectorXd& targets,
                             const TrainConfig& cfg) {
  arch.validate();
  check_shapes(start, arch);
  if (inputs.cols() != targets.size())
    fail(ErrorKind::Dimension, "inputs and targets differ in count");
  if (inputs.cols() < 1)
    fail(ErrorKind::InsufficientData, "training needs at least one sample");
  if (cfg.epochs < 1 || cfg.batch_size < 1 || !(cfg.learning_rate > 0.0))
    fail(ErrorKind::Config, "invalid training configuration");

  const Eigen::Index n = inputs.cols();
  Rng rng(cfg.seed);

  NetworkParameters params = start;
  AdamState adam(params);

  TrainResult result;
  result.params = params;
  result.best_loss = eval_mse(params, arch, inputs, targets);
  if (!std::isfinite(result.best_loss))
    fail(ErrorKind::Divergence, "non-finite loss at initialization");

  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) order[static_cast<std::size_t>(i)] = i;

  const bool use_dropout = arch.dropout_rate > 0.0;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    // Fisher-Yates with the portable uniform draw
    for (Eigen::Index i = n - 1; i > 0; --i) {
      const auto j = static_cast<Eigen::Index>(
          uniform_below(rng, static_cast<std::uint64_t>(i) + 1));
      std::swap(order[static_cast<std::size_t>(i)],
                order[static_cast<std::size_t>(j)]);
    }

    for (Eigen::Index begin = 0; begin < n; begin += cfg.batch_size) {
      const Eigen::Index size = std::min<Eigen::Index>(cfg.batch_size,
                                                       n - begin);
      Eigen::MatrixXd xb(inputs.rows(), size);
      Eigen::VectorXd yb(size);
      for (Eigen::Index k = 0; k < size; ++k) {
        xb.col(k) = inputs.col(order[static_cast<std::size_t>(begin + k)]);
        yb(k) = targets(order[static_cast<std::size_t>(begin + k)]);
      }
      GradientResult grad_result;
      if (use_dropout) {
        const DropoutMasks masks =
            sample_dropout_masks(arch, static_cast<int>(size), rng);
        grad_result = gradient(params, arch, xb, yb, &masks);
      } else {
        grad_result = gradient(params, arch, xb, yb, nullptr);
      }
      if (!std::isfinite(grad_result.loss))
        fail(ErrorKind::Divergence,
             "non-finite minibatch loss; lower the learning rate");
      adam.update(params, grad_result.grads, cfg);
    }

    const double loss = eval_mse(params, arch, inputs, targets);
    if (!std::isfinite(loss))
      fail(ErrorKind::Divergence,
           "non-finite training loss; lower the learning rate");
    result.epoch_losses.push_back(loss);
    if (loss < result.best_loss) {
      result.best_loss = loss;
      result.params = params;
    }
  }
  return result;
}

namespace {

double relative_error(double a, double b) {
  const double denom = std::max({std::abs(a), std::abs(b), 1e-6});
  if (std::abs(a) < 1e-12 && std::abs(b) < 1e-12) return 0.0;
  return std::abs(a - b) / denom;
}

double max_gradient_error(const NetworkParameters& params,
                          const NetworkArchitecture& arch,
                          const Eigen::MatrixXd& inputs,
                          const Eigen::VectorXd& targets,
                          const DropoutMasks* masks) {
  const GradientResult analytic = gradient(params, arch, inputs, targets,
                                           masks);
  const double h = 1e-5;
  const double batch = static_cast<double>(inputs.cols());
  const auto loss_at = [&](const NetworkParameters& p) {
    const Eigen::RowVectorXd out =
        masks != nullptr ? forward_with_masks(p, arch, inputs, *masks)
                         : forward_batch(p, arch, inputs, ForwardMode::Eval);
    return (out - targets.transpose()).squaredNorm() / batch;
  };

  double worst = 0.0;
  NetworkParameters probe = params;
  for (std::size_t j = 0; j < params.weights.size(); ++j) {
    for (Eigen::Index r = 0; r < params.weights[j].rows(); ++r) {
      for (Eigen::Index c = 0; c < params.weights[j].cols(); ++c) {
        const double saved = probe.weights[j](r, c);
        probe.weights[j](r, c) = saved + h;
        const double up = loss_at(probe);
        probe.weights[j](r, c) = saved - h;
        const double down = loss_at(probe);
        probe.weights[j](r, c) = saved;
        worst = std::max(worst, relative_error(analytic.grads.weights[j](r, c),
                                               (up - down) / (2.0 * h)));
      }
    }
    for (Eigen::Index r = 0; r < params.biases[j].size(); ++r) {
      const double saved = probe.biases[j](r);
      probe.biases[j](r) = saved + h;
      const double up = loss_at(probe);
      probe.biases[j](r) = saved - h;
      const double down = loss_at(probe);
      probe.biases[j](r) = saved;
      worst = std::max(worst, relative_error(analytic.grads.biases[j](r),
                                             (up - down) / (2.0 * h)));
    }
  }
  return worst;
}

}  // namespace

double gradient_check(const NetworkArchitecture& arch, std::uint64_t seed) {
  arch.validate();
  NetworkParameters params = init_network(arch, seed);
  Rng rng(mix_seed(seed, 0x6e657463ULL));
  for (auto& b : params.biases)
    for (Eigen::Index i = 0; i < b.size(); ++i)
      b(i) = 0.2 * (2.0 * uniform01(rng) - 1.0);

  const int batch = 5;
  Eigen::MatrixXd inputs(arch.input_dim, batch);
  for (Eigen::Index c = 0; c < inputs.cols(); ++c)
    for (Eigen::Index r = 0; r < inputs.rows(); ++r)
      inputs(r, c) = standard_normal(rng);
  Eigen::VectorXd targets(batch);
  for (Eigen::Index i = 0; i < targets.size(); ++i)
    targets(i) = standard_normal(rng);

  double worst = max_gradient_error(params, arch, inputs, targets, nullptr);
  if (arch.dropout_rate > 0.0) {
    const DropoutMasks masks = sample_dropout_masks(arch, batch, rng);
    worst = std::max(
        worst, max_gradient_error(params, arch, inputs, targets, &masks));
  }
  return worst;
}

void write_params_text(const NetworkParameters& params, std::string& out) {
  out += "tensors=" + std::to_string(2 * params.weights.size()) + "\n";
  for (std::size_t j = 0; j < params.weights.size(); ++j) {
    const auto& w = params.weights[j];
    out += "W " + std::to_string(w.rows()) + " " + std::to_string(w.cols()) +
           "\n";
    for (Eigen::Index r = 0; r < w.rows(); ++r)
      out += join_doubles(w.row(r).transpose()) + "\n";
    out += "b " + std::to_string(params.biases[j].size()) + "\n";
    out += join_doubles(params.biases[j]) + "\n";
  }
}

void save_params(const NetworkParameters& params, const std::string& path) {
  std::string out;
  write_params_text(params, out);
  write_file(path, out);
}

NetworkParameters read_params_text(std::istream& in,
                                   const std::string& context) {
  std::string line;
  if (!std::getline(in, line))
    fail(ErrorKind::Schema, "missing tensor count in " + context);
  const auto header = parse_kv_line(line);
  if (!header.count("tensors"))
    fail(ErrorKind::Schema, "missing tensors= header in " + context);
  const long long tensors = parse_int(header.at("tensors"), context);
  if (tensors <= 0 || tensors % 2 != 0)
    fail(ErrorKind::Schema, "tensor count must be a positive even number");

  NetworkParameters params;
  for (long long t = 0; t < tensors / 2; ++t) {
    if (!std::getline(in, line))
      fail(ErrorKind::Schema, "missing weight header in " + context);
    auto parts = split(line, ' ');
    if (parts.size() != 3 || parts[0] != "W")
      fail(ErrorKind::Schema, "expected 'W rows cols' in " + context);
    const auto rows = parse_int(parts[1], context);
    const auto cols = parse_int(parts[2], context);
    Eigen::MatrixXd w(rows, cols);
    for (long long r = 0; r < rows; ++r) {
      if (!std::getline(in, line))
        fail(ErrorKind::Schema, "missing weight row in " + context);
      const Eigen::VectorXd row = parse_doubles(line, context);
      if (row.size() != cols)
        fail(ErrorKind::Dimension, "weight row length mismatch in " + context);
      w.row(r) = row.transpose();
    }
    params.weights.push_back(std::move(w));

    if (!std::getline(in, line))
      fail(ErrorKind::Schema, "missing bias header in " + context);
    parts = split(line, ' ');
    if (parts.size() != 2 || parts[0] != "b")
      fail(ErrorKind::Schema, "expected 'b len' in " + context);
    const auto len = parse_int(parts[1], context);
    if (!std::getline(in, line))
      fail(ErrorKind::Schema, "missing bias values in " + context);
    const Eigen::VectorXd b = parse_doubles(line, context);
    if (b.size() != len)
      fail(ErrorKind::Dimension, "bias length mismatch in " + context);
    params.biases.push_back(b);
  }
  return params;
}

NetworkParameters load_params(const std::string& path) {
  std::istringstream in(read_file(path));
  return read_params_text(in, path);
}

}  // namespace sfqi
