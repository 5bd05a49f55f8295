#include "sfqi/envsim.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "sfqi/spectral.hpp"
#include "sfqi/textio.hpp"

namespace sfqi {

namespace {

constexpr std::uint64_t kBasisStream = 0x62617369ULL;
constexpr std::uint64_t kCoeffStream = 0x636f6566ULL;
constexpr std::uint64_t kTrajStream = 0x7472616aULL;
constexpr std::uint64_t kMcStream = 0x6d63726fULL;

// Random orthonormal matrix: QR of a Gaussian matrix with the column signs
// fixed by the R diagonal, so the result is deterministic.
Eigen::MatrixXd random_orthonormal(int dim, Rng& rng) {
  Eigen::MatrixXd g(dim, dim);
  for (Eigen::Index c = 0; c < dim; ++c)
    for (Eigen::Index r = 0; r < dim; ++r) g(r, c) = standard_normal(rng);
  const Eigen::HouseholderQR<Eigen::MatrixXd> qr(g);
  Eigen::MatrixXd q = qr.householderQ();
  const Eigen::MatrixXd r = qr.matrixQR();
  for (Eigen::Index c = 0; c < dim; ++c)
    if (r(c, c) < 0.0) q.col(c) = -q.col(c);
  return q;
}

Eigen::VectorXd decay_spectrum(double zeta, int dim) {
  Eigen::VectorXd lambda(dim);
  for (int k = 0; k < dim; ++k)
    lambda(k) = std::exp(-zeta * static_cast<double>(k + 1));
  return lambda;
}

}  // namespace

int SimConfig::m() const {
  int total = 0;
  for (int b : block_lengths) total += b;
  return total;
}

void SimConfig::validate() const {
  if (n_traj < 1) fail(ErrorKind::Config, "n_traj must be >= 1");
  if (horizon < 2) fail(ErrorKind::Config, "horizon must be >= 2");
  if (m0 < 0) fail(ErrorKind::Config, "m0 must be >= 0");
  if (block_lengths.empty())
    fail(ErrorKind::Config, "at least one high-frequency block is required");
  for (int b : block_lengths)
    if (b < 1) fail(ErrorKind::Config, "block lengths must be >= 1");
  if (!(zeta > 0.0)) fail(ErrorKind::Config, "zeta must be positive");
  if (action_count < 1) fail(ErrorKind::Config, "action_count must be >= 1");
  if (!(gamma >= 0.0) || gamma >= 1.0)
    fail(ErrorKind::Config, "gamma must lie in [0, 1)");
  const auto acts = static_cast<std::size_t>(action_count);
  if (beta1.size() != acts || beta2.size() != acts ||
      trans_m.size() != acts || trans_b.size() != acts ||
      reward_intercept.size() != acts)
    fail(ErrorKind::Config, "per-action coefficient lists are incomplete");
  const int dim = state_dim();
  for (std::size_t a = 0; a < acts; ++a) {
    if (beta1[a].size() != m0 || beta2[a].size() != m() ||
        trans_m[a].rows() != dim || trans_m[a].cols() != dim ||
        trans_b[a].size() != dim)
      fail(ErrorKind::Config, "coefficient dimensions do not match the state");
  }
}

Eigen::MatrixXd make_covariance(const SimConfig& cfg) {
  const int m = cfg.m();
  if (cfg.setting == SimConfig::Setting::Dependent) {
    Rng rng(mix_seed(cfg.seed, kBasisStream));
    const Eigen::MatrixXd q = random_orthonormal(m, rng);
    const Eigen::VectorXd lambda = decay_spectrum(cfg.zeta, m);
    return q * lambda.asDiagonal() * q.transpose();
  }
  Eigen::MatrixXd cov = Eigen::MatrixXd::Zero(m, m);
  int offset = 0;
  for (std::size_t j = 0; j < cfg.block_lengths.size(); ++j) {
    const int len = cfg.block_lengths[j];
    Rng rng(mix_seed(cfg.seed, kBasisStream, j));
    const Eigen::MatrixXd q = random_orthonormal(len, rng);
    const Eigen::VectorXd lambda = decay_spectrum(cfg.zeta, len);
    cov.block(offset, offset, len, len) =
        q * lambda.asDiagonal() * q.transpose();
    offset += len;
  }
  return cov;
}

Eigen::MatrixXd make_covariance_factor(const SimConfig& cfg) {
  const int m = cfg.m();
  if (cfg.setting == SimConfig::Setting::Dependent) {
    Rng rng(mix_seed(cfg.seed, kBasisStream));
    const Eigen::MatrixXd q = random_orthonormal(m, rng);
    const Eigen::VectorXd lambda = decay_spectrum(cfg.zeta, m);
    return q * lambda.cwiseSqrt().asDiagonal();
  }
  Eigen::MatrixXd factor = Eigen::MatrixXd::Zero(m, m);
  int offset = 0;
  for (std::size_t j = 0; j < cfg.block_lengths.size(); ++j) {
    const int len = cfg.block_lengths[j];
    Rng rng(mix_seed(cfg.seed, kBasisStream, j));
    const Eigen::MatrixXd q = random_orthonormal(len, rng);
    const Eigen::VectorXd lambda = decay_spectrum(cfg.zeta, len);
    factor.block(offset, offset, len, len) =
        q * lambda.cwiseSqrt().asDiagonal();
    offset += len;
  }
  return factor;
}

SimConfig make_default_config(std::uint64_t seed) {
  SimConfig cfg;
  cfg.seed = seed;
  return draw_coefficients(cfg, seed);
}

SimConfig draw_coefficients(SimConfig structural, std::uint64_t seed) {
  SimConfig cfg = std::move(structural);
  cfg.seed = seed;
  const int m0 = cfg.m0;
  const int m = cfg.m();
  const int dim = cfg.state_dim();
  const Eigen::MatrixXd cov = make_covariance(cfg);
  // dev knobs (temporary)
  const double b1_scale = std::getenv("SFQI_B1") ? atof(std::getenv("SFQI_B1")) : 1.0;
  const double b2_scale = std::getenv("SFQI_B2") ? atof(std::getenv("SFQI_B2")) : 1.0;
  const double bz_scale = std::getenv("SFQI_BZ") ? atof(std::getenv("SFQI_BZ")) : 0.7;

  Rng rng(mix_seed(seed, kCoeffStream));
  cfg.beta1.clear();
  cfg.beta2.clear();
  cfg.trans_m.clear();
  cfg.trans_b.clear();
  if (cfg.reward_intercept.size() !=
      static_cast<std::size_t>(cfg.action_count))
    cfg.reward_intercept.assign(static_cast<std::size_t>(cfg.action_count),
                                0.0);

  for (int a = 0; a < cfg.action_count; ++a) {
    // reward coefficients: beta1 unit-norm, beta2 normalized so the
    // high-frequency reward signal z'beta2 has unit variance under cov
    Eigen::VectorXd b1(m0);
    for (Eigen::Index i = 0; i < b1.size(); ++i) b1(i) = standard_normal(rng);
    if (m0 > 0 && b1.norm() > 0.0) b1 /= b1.norm();
    cfg.beta1.push_back(b1);

    Eigen::VectorXd b2(m);
    for (Eigen::Index i = 0; i < b2.size(); ++i) b2(i) = standard_normal(rng);
    const double signal_var = b2.dot(cov * b2);
    if (signal_var > 0.0) b2 /= std::sqrt(signal_var);
    cfg.beta2.push_back(b2);

    // transition mean map: only the x rows are nonzero, so z stays
    // exogenous and Cov(Z_t) equals make_covariance at every t. The x->x
    // feedback block is the closed loop and is capped at a largest
    // singular value of 0.9; the z->x rows are normalized under the z
    // covariance so Var of their contribution is 0.7^2 per component,
    // which makes the current z predictive of future rewards.
    Eigen::MatrixXd trans = Eigen::MatrixXd::Zero(dim, dim);
    if (m0 > 0) {
      Eigen::MatrixXd feedback(m0, m0);
      const double x_scale = 0.5 / std::sqrt(static_cast<double>(m0));
      for (int r = 0; r < m0; ++r)
        for (int c = 0; c < m0; ++c)
          feedback(r, c) = x_scale * standard_normal(rng);
      const SpectralBasis eig =
          eigendecompose(feedback * feedback.transpose());
      const double sigma_max = std::sqrt(std::max(eig.eigenvalues(0), 0.0));
      if (sigma_max > 0.9) feedback *= 0.9 / sigma_max;
      trans.topLeftCorner(m0, m0) = feedback;

      for (int r = 0; r < m0; ++r) {
        Eigen::VectorXd row(m);
        for (Eigen::Index i = 0; i < row.size(); ++i)
          row(i) = standard_normal(rng);
        const double var = row.dot(cov * row);
        if (var > 0.0) row *= 0.7 / std::sqrt(var);
        trans.block(r, m0, 1, m) = row.transpose();
      }
    }
    cfg.trans_m.push_back(std::move(trans));

    Eigen::VectorXd drift = Eigen::VectorXd::Zero(dim);
    for (int r = 0; r < m0; ++r) drift(r) = 0.5 * standard_normal(rng);
    cfg.trans_b.push_back(std::move(drift));
  }
  cfg.validate();
  return cfg;
}

double reward_mean(const SimConfig& cfg, const Eigen::VectorXd& x,
                   const Eigen::VectorXd& z, int action) {
  const auto a = static_cast<std::size_t>(action);
  const double linear = cfg.beta1[a].dot(x) + cfg.beta2[a].dot(z);
  return cfg.reward_intercept[a] + linear +
         cfg.nonlin_c * std::max(linear, 0.0);
}

double reward(const SimConfig& cfg, const Eigen::VectorXd& x,
              const Eigen::VectorXd& z, int action, Rng& rng) {
  double r = reward_mean(cfg, x, z, action);
  if (cfg.reward_noise > 0.0) r += cfg.reward_noise * standard_normal(rng);
  return r;
}

MixedState initial_state(const SimConfig& cfg,
                         const Eigen::MatrixXd& cov_factor, Rng& rng) {
  MixedState s;
  s.x.resize(cfg.m0);
  for (Eigen::Index i = 0; i < s.x.size(); ++i)
    s.x(i) = cfg.x_init_scale * standard_normal(rng);
  Eigen::VectorXd noise(cfg.m());
  for (Eigen::Index i = 0; i < noise.size(); ++i)
    noise(i) = standard_normal(rng);
  s.z = cov_factor * noise;
  s.block_lengths = cfg.block_lengths;
  return s;
}

std::pair<MixedState, double> step(const SimConfig& cfg,
                                   const Eigen::MatrixXd& cov_factor,
                                   const MixedState& state, int action,
                                   Rng& rng) {
  const auto a = static_cast<std::size_t>(action);
  const double r = reward(cfg, state.x, state.z, action, rng);

  Eigen::VectorXd s(cfg.state_dim());
  s.head(cfg.m0) = state.x;
  s.tail(cfg.m()) = state.z;
  const Eigen::VectorXd mean = cfg.trans_m[a] * s + cfg.trans_b[a];

  MixedState next;
  next.x.resize(cfg.m0);
  for (Eigen::Index i = 0; i < next.x.size(); ++i)
    next.x(i) = mean(i) + cfg.x_noise * standard_normal(rng);
  Eigen::VectorXd noise(cfg.m());
  for (Eigen::Index i = 0; i < noise.size(); ++i)
    noise(i) = standard_normal(rng);
  next.z = mean.tail(cfg.m()) + cov_factor * noise;
  next.block_lengths = cfg.block_lengths;
  return {std::move(next), r};
}

TrajectoryDataset generate_dataset(const SimConfig& cfg) {
  cfg.validate();
  const Eigen::MatrixXd cov_factor = make_covariance_factor(cfg);

  std::vector<std::vector<TimeStep>> trajectories;
  trajectories.reserve(static_cast<std::size_t>(cfg.n_traj));
  double max_abs_reward = 0.0;
  for (int i = 0; i < cfg.n_traj; ++i) {
    Rng rng(mix_seed(cfg.seed, kTrajStream, static_cast<std::uint64_t>(i)));
    std::vector<TimeStep> traj;
    traj.reserve(static_cast<std::size_t>(cfg.horizon));
    MixedState state = initial_state(cfg, cov_factor, rng);
    for (int t = 0; t < cfg.horizon; ++t) {
      const int action = static_cast<int>(
          uniform_below(rng, static_cast<std::uint64_t>(cfg.action_count)));
      TimeStep ts;
      ts.state = state;
      ts.action = action;
      if (t + 1 < cfg.horizon) {
        auto [next, r] = step(cfg, cov_factor, state, action, rng);
        ts.reward = r;
        state = std::move(next);
      } else {
        ts.reward = reward(cfg, ts.state.x, ts.state.z, action, rng);
      }
      max_abs_reward = std::max(max_abs_reward, std::abs(ts.reward));
      traj.push_back(std::move(ts));
    }
    trajectories.push_back(std::move(traj));
  }
  const double r_max = std::max(1.1 * max_abs_reward, 1e-6);
  return TrajectoryDataset(std::move(trajectories), cfg.action_count, r_max);
}

std::vector<double> rollout(const SimConfig& cfg, const PolicyFn& policy,
                            int n_mc, int t_mc, std::uint64_t seed) {
  cfg.validate();
  if (n_mc < 1 || t_mc < 1)
    fail(ErrorKind::Config, "rollout needs n_mc >= 1 and t_mc >= 1");
  const Eigen::MatrixXd cov_factor = make_covariance_factor(cfg);

  std::vector<double> returns(static_cast<std::size_t>(n_mc), 0.0);
  for (int i = 0; i < n_mc; ++i) {
    Rng rng(mix_seed(seed, kMcStream, static_cast<std::uint64_t>(i)));
    MixedState state = initial_state(cfg, cov_factor, rng);
    double total = 0.0;
    double discount = 1.0;
    for (int t = 0; t < t_mc; ++t) {
      const int action = policy(state);
      auto [next, r] = step(cfg, cov_factor, state, action, rng);
      total += discount * r;
      discount *= cfg.gamma;
      state = std::move(next);
    }
    returns[static_cast<std::size_t>(i)] = total;
  }
  return returns;
}

void save_config(const SimConfig& cfg, const std::string& path) {
  std::string out;
  out += "n_traj=" + std::to_string(cfg.n_traj);
  out += " horizon=" + std::to_string(cfg.horizon);
  out += " m0=" + std::to_string(cfg.m0);
  out += " block_lengths=";
  for (std::size_t j = 0; j < cfg.block_lengths.size(); ++j) {
    if (j > 0) out.push_back(',');
    out += std::to_string(cfg.block_lengths[j]);
  }
  out += " zeta=" + format_double(cfg.zeta);
  out += std::string(" setting=") +
         (cfg.setting == SimConfig::Setting::Dependent ? "dependent"
                                                       : "independent-blocks");
  out += " action_count=" + std::to_string(cfg.action_count);
  out += " nonlin_c=" + format_double(cfg.nonlin_c);
  out += " x_noise=" + format_double(cfg.x_noise);
  out += " reward_noise=" + format_double(cfg.reward_noise);
  out += " x_init_scale=" + format_double(cfg.x_init_scale);
  out += " gamma=" + format_double(cfg.gamma);
  out += " seed=" + std::to_string(cfg.seed);
  out += " intercepts=";
  for (std::size_t a = 0; a < cfg.reward_intercept.size(); ++a) {
    if (a > 0) out.push_back(',');
    out += format_double(cfg.reward_intercept[a]);
  }
  out.push_back('\n');

  for (int a = 0; a < cfg.action_count; ++a) {
    const auto idx = static_cast<std::size_t>(a);
    out += "beta1 " + std::to_string(a) + "\n";
    out += join_doubles(cfg.beta1[idx]) + "\n";
    out += "beta2 " + std::to_string(a) + "\n";
    out += join_doubles(cfg.beta2[idx]) + "\n";
    out += "M " + std::to_string(a) + " " +
           std::to_string(cfg.trans_m[idx].rows()) + " " +
           std::to_string(cfg.trans_m[idx].cols()) + "\n";
    for (Eigen::Index r = 0; r < cfg.trans_m[idx].rows(); ++r)
      out += join_doubles(cfg.trans_m[idx].row(r).transpose()) + "\n";
    out += "b " + std::to_string(a) + "\n";
    out += join_doubles(cfg.trans_b[idx]) + "\n";
  }
  write_file(path, out);
}

SimConfig load_config(const std::string& path) {
  std::istringstream in(read_file(path));
  std::string line;
  if (!std::getline(in, line)) fail(ErrorKind::Schema, "empty config file");
  const auto kv = parse_kv_line(line);
  for (const char* key :
       {"n_traj", "horizon", "m0", "block_lengths", "zeta", "setting",
        "action_count", "nonlin_c", "x_noise", "reward_noise", "x_init_scale",
        "gamma", "seed", "intercepts"})
    if (!kv.count(key))
      fail(ErrorKind::Schema,
           std::string("config missing key '") + key + "' in " + path);

  SimConfig cfg;
  cfg.n_traj = static_cast<int>(parse_int(kv.at("n_traj"), path));
  cfg.horizon = static_cast<int>(parse_int(kv.at("horizon"), path));
  cfg.m0 = static_cast<int>(parse_int(kv.at("m0"), path));
  cfg.block_lengths.clear();
  for (const auto& tok : split(kv.at("block_lengths"), ','))
    cfg.block_lengths.push_back(static_cast<int>(parse_int(tok, path)));
  cfg.zeta = parse_double(kv.at("zeta"), path);
  if (kv.at("setting") == "dependent")
    cfg.setting = SimConfig::Setting::Dependent;
  else if (kv.at("setting") == "independent-blocks")
    cfg.setting = SimConfig::Setting::IndependentBlocks;
  else
    fail(ErrorKind::Schema, "unknown setting '" + kv.at("setting") + "'");
  cfg.action_count = static_cast<int>(parse_int(kv.at("action_count"), path));
  cfg.nonlin_c = parse_double(kv.at("nonlin_c"), path);
  cfg.x_noise = parse_double(kv.at("x_noise"), path);
  cfg.reward_noise = parse_double(kv.at("reward_noise"), path);
  cfg.x_init_scale = parse_double(kv.at("x_init_scale"), path);
  cfg.gamma = parse_double(kv.at("gamma"), path);
  cfg.seed = static_cast<std::uint64_t>(parse_int(kv.at("seed"), path));
  cfg.reward_intercept.clear();
  for (const auto& tok : split(kv.at("intercepts"), ','))
    cfg.reward_intercept.push_back(parse_double(tok, path));

  const int dim = cfg.state_dim();
  cfg.beta1.assign(static_cast<std::size_t>(cfg.action_count), {});
  cfg.beta2.assign(static_cast<std::size_t>(cfg.action_count), {});
  cfg.trans_m.assign(static_cast<std::size_t>(cfg.action_count), {});
  cfg.trans_b.assign(static_cast<std::size_t>(cfg.action_count), {});
  for (int a = 0; a < cfg.action_count; ++a) {
    const auto idx = static_cast<std::size_t>(a);
    const std::string tag = " (action " + std::to_string(a) + ") in " + path;
    auto expect = [&](const std::string& want) {
      if (!std::getline(in, line) || line != want)
        fail(ErrorKind::Schema, "expected '" + want + "'" + tag);
    };
    expect("beta1 " + std::to_string(a));
    if (!std::getline(in, line)) fail(ErrorKind::Schema, "missing beta1" + tag);
    cfg.beta1[idx] = parse_doubles(line, path);
    expect("beta2 " + std::to_string(a));
    if (!std::getline(in, line)) fail(ErrorKind::Schema, "missing beta2" + tag);
    cfg.beta2[idx] = parse_doubles(line, path);
    expect("M " + std::to_string(a) + " " + std::to_string(dim) + " " +
           std::to_string(dim));
    cfg.trans_m[idx].resize(dim, dim);
    for (int r = 0; r < dim; ++r) {
      if (!std::getline(in, line))
        fail(ErrorKind::Schema, "missing transition row" + tag);
      cfg.trans_m[idx].row(r) = parse_doubles(line, path).transpose();
    }
    expect("b " + std::to_string(a));
    if (!std::getline(in, line))
      fail(ErrorKind::Schema, "missing drift vector" + tag);
    cfg.trans_b[idx] = parse_doubles(line, path);
  }
  cfg.validate();
  return cfg;
}

}  // namespace sfqi
