#include "sfqi/fqi.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "sfqi/textio.hpp"

namespace sfqi {

std::string FeatureVariant::name() const {
  switch (kind) {
    case Kind::Pca: return "pca";
    case Kind::All: return "all";
    case Kind::Ave: return "ave";
    case Kind::Bottleneck: return "bottleneck";
  }
  return "?";
}

FeatureVariant FeatureVariant::from_name(const std::string& name, int kappa) {
  if (name == "pca") return pca(kappa);
  if (name == "all") return all();
  if (name == "ave") return ave();
  if (name == "bottleneck") return bottleneck(kappa);
  fail(ErrorKind::Config, "unknown feature variant '" + name + "'");
}

int feature_dim(const FeatureVariant& variant, int m0, int m, int blocks) {
  switch (variant.kind) {
    case FeatureVariant::Kind::Pca: return m0 + variant.kappa;
    case FeatureVariant::Kind::All: return m0 + m;
    case FeatureVariant::Kind::Ave: return m0 + blocks;
    case FeatureVariant::Kind::Bottleneck: return m0 + m;
  }
  return 0;
}

Eigen::VectorXd build_features(const FeatureVariant& variant,
                               const MixedState& state,
                               const SpectralBasis* basis) {
  const int m0 = state.m0();
  switch (variant.kind) {
    case FeatureVariant::Kind::Pca: {
      if (basis == nullptr)
        fail(ErrorKind::Config, "PCA features require a spectral basis");
      Eigen::VectorXd out(m0 + variant.kappa);
      out.head(m0) = state.x;
      out.tail(variant.kappa) = pc_scores(*basis, state.z, variant.kappa);
      return out;
    }
    case FeatureVariant::Kind::All:
    case FeatureVariant::Kind::Bottleneck: {
      Eigen::VectorXd out(m0 + state.m());
      out.head(m0) = state.x;
      out.tail(state.m()) = state.z;
      return out;
    }
    case FeatureVariant::Kind::Ave: {
      Eigen::VectorXd out(m0 + state.blocks());
      out.head(m0) = state.x;
      int offset = 0;
      for (int j = 0; j < state.blocks(); ++j) {
        const int len = state.block_lengths[static_cast<std::size_t>(j)];
        out(m0 + j) = state.z.segment(offset, len).mean();
        offset += len;
      }
      return out;
    }
  }
  fail(ErrorKind::Config, "unreachable variant kind");
}

std::vector<int> variant_hidden_widths(const FeatureVariant& variant,
                                       const std::vector<int>& base_widths,
                                       int m0) {
  if (variant.kind != FeatureVariant::Kind::Bottleneck) return base_widths;
  // the bottleneck layer is as wide as the PCA policy's input, m0 + kappa
  std::vector<int> widths;
  widths.push_back(m0 + variant.kappa);
  widths.insert(widths.end(), base_widths.begin(), base_widths.end());
  return widths;
}

Eigen::VectorXd q_values(const QEnsemble& q, const MixedState& state) {
  const Eigen::VectorXd features =
      build_features(q.variant, state, q.basis.get());
  Eigen::VectorXd values(q.action_count());
  for (int a = 0; a < q.action_count(); ++a)
    values(a) = forward(q.nets[static_cast<std::size_t>(a)], q.arch, features);
  return values;
}

int greedy_action(const QEnsemble& q, const MixedState& state) {
  const Eigen::VectorXd values = q_values(q, state);
  int best = 0;
  for (int a = 1; a < values.size(); ++a)
    if (values(a) > values(best)) best = a;  // ties keep the lowest index
  return best;
}

Eigen::VectorXd bellman_targets(const QEnsemble& q,
                                const std::vector<Transition>& transitions) {
  Eigen::VectorXd targets(static_cast<Eigen::Index>(transitions.size()));
  for (std::size_t i = 0; i < transitions.size(); ++i) {
    const Eigen::VectorXd values = q_values(q, *transitions[i].next_state);
    const double target =
        transitions[i].reward + q.gamma * values.maxCoeff();
    targets(static_cast<Eigen::Index>(i)) =
        std::clamp(target, -q.v_max(), q.v_max());
  }
  return targets;
}

std::uint64_t fqi_init_seed(std::uint64_t seed, int action) {
  return mix_seed(seed, 0x696e6974ULL, static_cast<std::uint64_t>(action));
}

std::uint64_t fqi_fit_seed(std::uint64_t seed, int iteration, int action) {
  return mix_seed(mix_seed(seed, 0x666974ULL),
                  static_cast<std::uint64_t>(iteration) * 1009ULL +
                      static_cast<std::uint64_t>(action));
}

namespace {

// Eval-mode Q values for precomputed feature columns, clamped via the
// network's own output clamp.
Eigen::RowVectorXd batch_q(const QEnsemble& q, int action,
                           const Eigen::MatrixXd& features) {
  return forward_batch(q.nets[static_cast<std::size_t>(action)], q.arch,
                       features, ForwardMode::Eval);
}

}  // namespace

QEnsemble spectral_fqi(const TrajectoryDataset& ds,
                       const FeatureVariant& variant,
                       std::shared_ptr<const SpectralBasis> basis,
                       const std::vector<int>& base_hidden_widths,
                       double dropout_rate, double gamma,
                       const FqiConfig& cfg) {
  if (!(gamma >= 0.0) || gamma >= 1.0)
    fail(ErrorKind::Config, "gamma must lie in [0, 1)");
  if (cfg.iterations < 1) fail(ErrorKind::Config, "iterations must be >= 1");
  if (variant.needs_basis() && basis == nullptr)
    fail(ErrorKind::Config, "PCA variant requires a fitted basis");

  const std::vector<Transition> transitions = to_transitions(ds);
  const int actions = ds.action_count();

  std::vector<int> counts(static_cast<std::size_t>(actions), 0);
  for (const auto& tr : transitions) ++counts[static_cast<std::size_t>(tr.action)];
  for (int a = 0; a < actions; ++a)
    if (counts[static_cast<std::size_t>(a)] == 0)
      fail(ErrorKind::Coverage,
           "action " + std::to_string(a) + " never appears in the dataset");

  QEnsemble q;
  q.variant = variant;
  q.basis = std::move(basis);
  q.gamma = gamma;
  q.arch.input_dim = feature_dim(variant, ds.m0(), ds.m(),
                                 static_cast<int>(ds.block_lengths().size()));
  q.arch.hidden_widths =
      variant_hidden_widths(variant, base_hidden_widths, ds.m0());
  q.arch.dropout_rate = dropout_rate;
  q.arch.v_max = ds.r_max() / (1.0 - gamma);
  for (int a = 0; a < actions; ++a)
    q.nets.push_back(init_network(q.arch, fqi_init_seed(cfg.seed, a)));

  // features never change across iterations; precompute once
  const Eigen::Index n = static_cast<Eigen::Index>(transitions.size());
  Eigen::MatrixXd state_feats(q.arch.input_dim, n);
  Eigen::MatrixXd next_feats(q.arch.input_dim, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& tr = transitions[static_cast<std::size_t>(i)];
    state_feats.col(i) = build_features(variant, *tr.state, q.basis.get());
    next_feats.col(i) = build_features(variant, *tr.next_state, q.basis.get());
  }
  Eigen::VectorXd rewards(n);
  for (Eigen::Index i = 0; i < n; ++i)
    rewards(i) = transitions[static_cast<std::size_t>(i)].reward;

  std::vector<std::vector<Eigen::Index>> by_action(
      static_cast<std::size_t>(actions));
  for (Eigen::Index i = 0; i < n; ++i)
    by_action[static_cast<std::size_t>(
                  transitions[static_cast<std::size_t>(i)].action)]
        .push_back(i);

  for (int k = 1; k <= cfg.iterations; ++k) {
    // targets from the frozen previous ensemble
    Eigen::VectorXd max_next = batch_q(q, 0, next_feats).transpose();
    for (int a = 1; a < actions; ++a)
      max_next = max_next.cwiseMax(batch_q(q, a, next_feats).transpose());
    Eigen::VectorXd targets =
        (rewards + gamma * max_next)
            .cwiseMax(-q.v_max())
            .cwiseMin(q.v_max());

    std::vector<Eigen::Index> sampled;
    const std::vector<Eigen::Index>* index_set = nullptr;
    if (cfg.sample_size > 0 && cfg.sample_size < n) {
      // uniform subsample without replacement, reseeded per iteration
      sampled.resize(static_cast<std::size_t>(n));
      for (Eigen::Index i = 0; i < n; ++i)
        sampled[static_cast<std::size_t>(i)] = i;
      Rng rng(mix_seed(cfg.seed, 0x73616d70ULL,
                       static_cast<std::uint64_t>(k)));
      for (Eigen::Index i = 0; i < cfg.sample_size; ++i) {
        const auto j = i + static_cast<Eigen::Index>(uniform_below(
                               rng, static_cast<std::uint64_t>(n - i)));
        std::swap(sampled[static_cast<std::size_t>(i)],
                  sampled[static_cast<std::size_t>(j)]);
      }
      sampled.resize(static_cast<std::size_t>(cfg.sample_size));
      index_set = &sampled;
    }

    for (int a = 0; a < actions; ++a) {
      std::vector<Eigen::Index> rows;
      if (index_set != nullptr) {
        for (Eigen::Index i : *index_set)
          if (transitions[static_cast<std::size_t>(i)].action == a)
            rows.push_back(i);
        if (rows.empty()) continue;  // keep the previous iterate
      } else {
        rows = by_action[static_cast<std::size_t>(a)];
      }
      Eigen::MatrixXd xa(q.arch.input_dim,
                         static_cast<Eigen::Index>(rows.size()));
      Eigen::VectorXd ya(static_cast<Eigen::Index>(rows.size()));
      for (std::size_t i = 0; i < rows.size(); ++i) {
        xa.col(static_cast<Eigen::Index>(i)) = state_feats.col(rows[i]);
        ya(static_cast<Eigen::Index>(i)) = targets(rows[i]);
      }
      TrainConfig train = cfg.train;
      train.seed = fqi_fit_seed(cfg.seed, k, a);
      q.nets[static_cast<std::size_t>(a)] =
          train_regression(q.nets[static_cast<std::size_t>(a)], q.arch, xa,
                           ya, train)
              .params;
    }
  }
  return q;
}

GreedyPolicy make_greedy_policy(QEnsemble ensemble) {
  return GreedyPolicy{std::make_shared<const QEnsemble>(std::move(ensemble))};
}

void save_policy(const QEnsemble& q, const std::string& path) {
  std::string out;
  out += "variant=" + q.variant.name();
  out += " kappa=" + std::to_string(q.variant.kappa);
  out += " gamma=" + format_double(q.gamma);
  out += " v_max=" + format_double(q.arch.v_max);
  out += " dropout=" + format_double(q.arch.dropout_rate);
  out += " input_dim=" + std::to_string(q.arch.input_dim);
  out += " action_count=" + std::to_string(q.action_count());
  out += " widths=";
  for (std::size_t j = 0; j < q.arch.hidden_widths.size(); ++j) {
    if (j > 0) out.push_back(',');
    out += std::to_string(q.arch.hidden_widths[j]);
  }
  out += " has_basis=" + std::string(q.basis ? "1" : "0");
  out.push_back('\n');

  if (q.basis) {
    out += "m=" + std::to_string(q.basis->dim());
    out += " sample_count=" + std::to_string(q.basis->sample_count);
    out.push_back('\n');
    out += join_doubles(q.basis->mean) + "\n";
    out += join_doubles(q.basis->eigenvalues) + "\n";
    for (Eigen::Index i = 0; i < q.basis->eigenvectors.rows(); ++i)
      out += join_doubles(q.basis->eigenvectors.row(i).transpose()) + "\n";
  }
  for (const auto& net : q.nets) write_params_text(net, out);
  write_file(path, out);
}

QEnsemble load_policy(const std::string& path) {
  std::istringstream in(read_file(path));
  std::string line;
  if (!std::getline(in, line)) fail(ErrorKind::Schema, "empty policy file");
  const auto header = parse_kv_line(line);
  for (const char* key : {"variant", "kappa", "gamma", "v_max", "dropout",
                          "input_dim", "action_count", "widths", "has_basis"})
    if (!header.count(key))
      fail(ErrorKind::Schema,
           std::string("policy header missing '") + key + "'");

  QEnsemble q;
  q.variant = FeatureVariant::from_name(
      header.at("variant"),
      static_cast<int>(parse_int(header.at("kappa"), path)));
  q.gamma = parse_double(header.at("gamma"), path);
  q.arch.v_max = parse_double(header.at("v_max"), path);
  q.arch.dropout_rate = parse_double(header.at("dropout"), path);
  q.arch.input_dim = static_cast<int>(parse_int(header.at("input_dim"), path));
  for (const auto& tok : split(header.at("widths"), ','))
    q.arch.hidden_widths.push_back(static_cast<int>(parse_int(tok, path)));

  if (header.at("has_basis") == "1") {
    if (!std::getline(in, line))
      fail(ErrorKind::Schema, "policy missing basis header");
    const auto bh = parse_kv_line(line);
    const int m = static_cast<int>(parse_int(bh.at("m"), path));
    SpectralBasis basis;
    basis.sample_count = parse_int(bh.at("sample_count"), path);
    if (!std::getline(in, line)) fail(ErrorKind::Schema, "missing basis mean");
    basis.mean = parse_doubles(line, path);
    if (!std::getline(in, line))
      fail(ErrorKind::Schema, "missing basis eigenvalues");
    basis.eigenvalues = parse_doubles(line, path);
    basis.eigenvectors.resize(m, m);
    for (int i = 0; i < m; ++i) {
      if (!std::getline(in, line))
        fail(ErrorKind::Schema, "missing basis eigenvector row");
      basis.eigenvectors.row(i) = parse_doubles(line, path).transpose();
    }
    q.basis = std::make_shared<const SpectralBasis>(std::move(basis));
  }

  const int actions =
      static_cast<int>(parse_int(header.at("action_count"), path));
  for (int a = 0; a < actions; ++a)
    q.nets.push_back(read_params_text(in, path));
  return q;
}

}  // namespace sfqi
