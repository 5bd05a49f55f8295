#include "sfqi/experiment.hpp"

#include <filesystem>
#include <functional>
#include <thread>

#include "sfqi/textio.hpp"

namespace sfqi {

namespace {

constexpr std::uint64_t kEvalStream = 0x6576616cULL;
constexpr std::uint64_t kKappaStream = 0x6b617070ULL;
constexpr std::uint64_t kVariantStream = 0x76617269ULL;

// Index-sliced worker threads; slot writes keep the merge order
// deterministic regardless of scheduling.
void parallel_for(int count, int threads, const std::function<void(int)>& fn) {
  threads = std::max(1, std::min(threads, count));
  if (threads == 1) {
    for (int i = 0; i < count; ++i) fn(i);
    return;
  }
  std::vector<std::thread> pool;
  pool.reserve(static_cast<std::size_t>(threads));
  for (int w = 0; w < threads; ++w) {
    pool.emplace_back([&, w]() {
      for (int i = w; i < count; i += threads) fn(i);
    });
  }
  for (auto& t : pool) t.join();
}

void ensure_dir(const std::string& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) fail(ErrorKind::Io, "cannot create directory " + dir);
}

std::string seeds_to_string(const std::vector<std::uint64_t>& seeds) {
  std::string out;
  for (std::size_t i = 0; i < seeds.size(); ++i) {
    if (i > 0) out.push_back(',');
    out += std::to_string(seeds[i]);
  }
  return out;
}

void write_manifest(const ExperimentSpec& spec, const std::string& command) {
  std::string out;
  out += "version=" + std::string(kVersion) + "\n";
  out += "command=" + command + "\n";
  for (const auto& [key, value] : spec.describe())
    out += key + "=" + value + "\n";
  write_file(spec.out_dir + "/manifest.txt", out);
}

struct TrainedPolicy {
  QEnsemble ensemble;
  std::shared_ptr<const SpectralBasis> basis;
  int kappa = 0;
};

// Resolves the variant's kappa (explicit, or smallest kappa reaching the
// variance threshold) and runs spectral FQI on the dataset.
TrainedPolicy train_variant(const ExperimentSpec& spec,
                            const TrajectoryDataset& ds,
                            const std::string& variant_name, int explicit_kappa,
                            std::uint64_t fqi_seed) {
  TrainedPolicy out;
  int kappa = explicit_kappa;
  std::shared_ptr<const SpectralBasis> basis;
  if (variant_name == "pca" || variant_name == "bottleneck") {
    basis = std::make_shared<const SpectralBasis>(fit_spectral_basis(ds));
    if (kappa <= 0) kappa = select_kappa(*basis, spec.variance_threshold);
  }
  const FeatureVariant variant = FeatureVariant::from_name(variant_name, kappa);

  FqiConfig cfg = spec.fqi;
  cfg.seed = fqi_seed;
  out.ensemble = spectral_fqi(ds, variant,
                              variant.needs_basis() ? basis : nullptr,
                              spec.hidden_widths, spec.dropout_rate,
                              spec.sim.gamma, cfg);
  out.basis = basis;
  out.kappa = kappa;
  return out;
}

}  // namespace

std::map<std::string, std::string> ExperimentSpec::describe() const {
  std::map<std::string, std::string> kv;
  kv["n_traj"] = std::to_string(sim.n_traj);
  kv["horizon"] = std::to_string(sim.horizon);
  kv["m0"] = std::to_string(sim.m0);
  std::string blocks;
  for (std::size_t j = 0; j < sim.block_lengths.size(); ++j) {
    if (j > 0) blocks.push_back(',');
    blocks += std::to_string(sim.block_lengths[j]);
  }
  kv["block_lengths"] = blocks;
  kv["zeta"] = format_double(sim.zeta);
  kv["setting"] = sim.setting == SimConfig::Setting::Dependent
                      ? "dependent"
                      : "independent-blocks";
  kv["gamma"] = format_double(sim.gamma);
  kv["nonlin_c"] = format_double(sim.nonlin_c);
  kv["x_noise"] = format_double(sim.x_noise);
  kv["reward_noise"] = format_double(sim.reward_noise);
  std::string vs;
  for (std::size_t i = 0; i < variants.size(); ++i) {
    if (i > 0) vs.push_back(',');
    vs += variants[i];
  }
  kv["variants"] = vs;
  std::string ks;
  for (std::size_t i = 0; i < kappas.size(); ++i) {
    if (i > 0) ks.push_back(',');
    ks += std::to_string(kappas[i]);
  }
  kv["kappas"] = ks;
  kv["variance_threshold"] = format_double(variance_threshold);
  std::string ws;
  for (std::size_t i = 0; i < hidden_widths.size(); ++i) {
    if (i > 0) ws.push_back(',');
    ws += std::to_string(hidden_widths[i]);
  }
  kv["hidden_widths"] = ws;
  kv["dropout_rate"] = format_double(dropout_rate);
  kv["iterations"] = std::to_string(fqi.iterations);
  kv["sample_size"] = std::to_string(fqi.sample_size);
  kv["epochs"] = std::to_string(fqi.train.epochs);
  kv["batch_size"] = std::to_string(fqi.train.batch_size);
  kv["learning_rate"] = format_double(fqi.train.learning_rate);
  kv["n_mc"] = std::to_string(n_mc);
  kv["t_mc"] = std::to_string(t_mc);
  kv["seeds"] = seeds_to_string(seeds);
  return kv;
}

SimConfig config_for_seed(const SimConfig& base, std::uint64_t seed) {
  return draw_coefficients(base, seed);
}

void run_simulate(const ExperimentSpec& spec) {
  if (spec.seeds.empty()) fail(ErrorKind::Config, "seed list is empty");
  ensure_dir(spec.out_dir);
  parallel_for(static_cast<int>(spec.seeds.size()), spec.threads, [&](int i) {
    const std::uint64_t seed = spec.seeds[static_cast<std::size_t>(i)];
    const SimConfig cfg = config_for_seed(spec.sim, seed);
    save_config(cfg, spec.out_dir + "/config_" + std::to_string(seed) + ".txt");
    const TrajectoryDataset ds = generate_dataset(cfg);
    save_trajectories(
        ds, spec.out_dir + "/dataset_" + std::to_string(seed) + ".txt");
  });
  write_manifest(spec, "simulate");
}

void run_train(const ExperimentSpec& spec) {
  if (spec.seeds.empty() || spec.variants.empty())
    fail(ErrorKind::Config, "seed and variant lists must be non-empty");
  ensure_dir(spec.out_dir);
  const int explicit_kappa = spec.kappas.empty() ? 0 : spec.kappas[0];
  parallel_for(static_cast<int>(spec.seeds.size()), spec.threads, [&](int i) {
    const std::uint64_t seed = spec.seeds[static_cast<std::size_t>(i)];
    const SimConfig cfg = config_for_seed(spec.sim, seed);
    const TrajectoryDataset ds = generate_dataset(cfg);
    for (std::size_t v = 0; v < spec.variants.size(); ++v) {
      const TrainedPolicy policy =
          train_variant(spec, ds, spec.variants[v], explicit_kappa,
                        mix_seed(seed, kVariantStream, v));
      save_policy(policy.ensemble,
                  spec.out_dir + "/policy_" + std::to_string(seed) + "_" +
                      spec.variants[v] + ".txt");
    }
  });
  write_manifest(spec, "train");
}

SweepResult run_sweep_kappa(const ExperimentSpec& spec) {
  if (spec.seeds.empty()) fail(ErrorKind::Config, "seed list is empty");
  if (spec.kappas.empty()) fail(ErrorKind::Config, "kappa list is empty");

  const int n_seeds = static_cast<int>(spec.seeds.size());
  const int n_kappas = static_cast<int>(spec.kappas.size());
  SweepResult result;
  result.seeds = spec.seeds;
  result.values.assign(static_cast<std::size_t>(n_kappas),
                       std::vector<double>(static_cast<std::size_t>(n_seeds)));
  std::vector<std::vector<double>> explained(
      static_cast<std::size_t>(n_kappas),
      std::vector<double>(static_cast<std::size_t>(n_seeds)));

  parallel_for(n_seeds, spec.threads, [&](int i) {
    const std::uint64_t seed = spec.seeds[static_cast<std::size_t>(i)];
    const SimConfig cfg = config_for_seed(spec.sim, seed);
    const TrajectoryDataset ds = generate_dataset(cfg);
    const auto basis =
        std::make_shared<const SpectralBasis>(fit_spectral_basis(ds));
    const std::uint64_t eval_seed = mix_seed(seed, kEvalStream);
    for (int k = 0; k < n_kappas; ++k) {
      const int kappa = spec.kappas[static_cast<std::size_t>(k)];
      FqiConfig fqi_cfg = spec.fqi;
      fqi_cfg.seed = mix_seed(seed, kKappaStream,
                              static_cast<std::uint64_t>(kappa));
      const QEnsemble ensemble =
          spectral_fqi(ds, FeatureVariant::pca(kappa), basis,
                       spec.hidden_widths, spec.dropout_rate, spec.sim.gamma,
                       fqi_cfg);
      const GreedyPolicy policy = make_greedy_policy(ensemble);
      const std::vector<double> returns =
          rollout(cfg, policy, spec.n_mc, spec.t_mc, eval_seed);
      double mean = 0.0;
      for (double r : returns) mean += r;
      mean /= static_cast<double>(returns.size());
      result.values[static_cast<std::size_t>(k)][static_cast<std::size_t>(i)] =
          mean;
      explained[static_cast<std::size_t>(k)][static_cast<std::size_t>(i)] =
          variance_explained(*basis, kappa);
    }
  });

  for (int k = 0; k < n_kappas; ++k) {
    const auto& vals = result.values[static_cast<std::size_t>(k)];
    EvalReport report = make_report(vals, spec.seeds, "sweep");
    SweepRow row;
    row.kappa = spec.kappas[static_cast<std::size_t>(k)];
    row.mean = report.mean;
    row.se = report.se;
    double ve = 0.0;
    for (double e : explained[static_cast<std::size_t>(k)]) ve += e;
    row.variance_explained = ve / static_cast<double>(n_seeds);
    result.rows.push_back(row);
  }

  if (!spec.out_dir.empty()) {
    ensure_dir(spec.out_dir);
    std::string values;
    values += "kappa,seed,value\n";
    for (int k = 0; k < n_kappas; ++k)
      for (int i = 0; i < n_seeds; ++i)
        values += std::to_string(spec.kappas[static_cast<std::size_t>(k)]) +
                  "," +
                  std::to_string(spec.seeds[static_cast<std::size_t>(i)]) +
                  "," +
                  format_double(result.values[static_cast<std::size_t>(k)]
                                             [static_cast<std::size_t>(i)]) +
                  "\n";
    write_file(spec.out_dir + "/sweep_values.csv", values);

    std::string summary;
    summary += "kappa,mean,se,variance_explained\n";
    for (const auto& row : result.rows)
      summary += std::to_string(row.kappa) + "," + format_double(row.mean) +
                 "," + format_double(row.se) + "," +
                 format_double(row.variance_explained) + "\n";
    write_file(spec.out_dir + "/sweep_summary.csv", summary);
    write_manifest(spec, "sweep-kappa");
  }
  return result;
}

CompareResult run_compare(const ExperimentSpec& spec) {
  if (spec.seeds.empty() || spec.variants.empty())
    fail(ErrorKind::Config, "seed and variant lists must be non-empty");

  const int n_seeds = static_cast<int>(spec.seeds.size());
  const int n_variants = static_cast<int>(spec.variants.size());
  const int explicit_kappa = spec.kappas.empty() ? 0 : spec.kappas[0];
  std::vector<std::vector<double>> values(
      static_cast<std::size_t>(n_variants),
      std::vector<double>(static_cast<std::size_t>(n_seeds)));

  parallel_for(n_seeds, spec.threads, [&](int i) {
    const std::uint64_t seed = spec.seeds[static_cast<std::size_t>(i)];
    const SimConfig cfg = config_for_seed(spec.sim, seed);
    const TrajectoryDataset ds = generate_dataset(cfg);
    const std::uint64_t eval_seed = mix_seed(seed, kEvalStream);
    for (int v = 0; v < n_variants; ++v) {
      const TrainedPolicy trained = train_variant(
          spec, ds, spec.variants[static_cast<std::size_t>(v)], explicit_kappa,
          mix_seed(seed, kVariantStream, static_cast<std::uint64_t>(v)));
      const GreedyPolicy policy = make_greedy_policy(trained.ensemble);
      const std::vector<double> returns =
          rollout(cfg, policy, spec.n_mc, spec.t_mc, eval_seed);
      double mean = 0.0;
      for (double r : returns) mean += r;
      values[static_cast<std::size_t>(v)][static_cast<std::size_t>(i)] =
          mean / static_cast<double>(returns.size());
    }
  });

  CompareResult result;
  for (int v = 0; v < n_variants; ++v)
    result.reports.push_back(
        make_report(values[static_cast<std::size_t>(v)], spec.seeds,
                    spec.variants[static_cast<std::size_t>(v)]));
  for (int v = 1; v < n_variants; ++v)
    result.comparisons.push_back(
        compare_policies(result.reports[0],
                         result.reports[static_cast<std::size_t>(v)]));

  if (!spec.out_dir.empty()) {
    ensure_dir(spec.out_dir);
    std::string values_csv = "variant,seed,value\n";
    for (int v = 0; v < n_variants; ++v)
      for (int i = 0; i < n_seeds; ++i)
        values_csv += spec.variants[static_cast<std::size_t>(v)] + "," +
                      std::to_string(spec.seeds[static_cast<std::size_t>(i)]) +
                      "," +
                      format_double(values[static_cast<std::size_t>(v)]
                                          [static_cast<std::size_t>(i)]) +
                      "\n";
    write_file(spec.out_dir + "/compare_values.csv", values_csv);

    std::string summary = "variant,mean,se\n";
    for (const auto& report : result.reports)
      summary += report.label + "," + format_double(report.mean) + "," +
                 format_double(report.se) + "\n";
    write_file(spec.out_dir + "/compare_summary.csv", summary);

    std::string comparisons = "pair,mean_diff,margin\n";
    for (const auto& cmp : result.comparisons)
      comparisons += cmp.label + "," + format_double(cmp.mean_diff) + "," +
                     format_double(cmp.margin) + "\n";
    write_file(spec.out_dir + "/comparisons.csv", comparisons);
    write_manifest(spec, "compare");
  }
  return result;
}

double run_evaluate(const EvaluateOptions& opts) {
  const QEnsemble ensemble = load_policy(opts.policy_path);
  const GreedyPolicy policy{std::make_shared<const QEnsemble>(ensemble)};

  double value = 0.0;
  std::string report_text;
  if (opts.mode == "monte-carlo") {
    if (opts.sim_config_path.empty())
      fail(ErrorKind::Config, "monte-carlo evaluation needs --sim-config");
    const SimConfig cfg = load_config(opts.sim_config_path);
    const EvalReport report = monte_carlo_value(
        cfg, policy, opts.n_mc, opts.t_mc, mix_seed(opts.seed, kEvalStream),
        "mc");
    value = report.mean;
    report_text = "mode=monte-carlo mean=" + format_double(report.mean) +
                  " se=" + format_double(report.se) + "\n";
  } else if (opts.mode == "fqe") {
    if (opts.data_path.empty())
      fail(ErrorKind::Config, "fqe evaluation needs --data");
    const TrajectoryDataset ds = load_trajectories(opts.data_path);
    FqeConfig cfg;
    cfg.iterations = opts.fqe_iterations;
    cfg.seed = opts.seed;
    value = fitted_q_evaluation(policy, ds, ensemble.basis.get(),
                                ensemble.variant, ensemble.gamma, cfg);
    report_text = "mode=fqe value=" + format_double(value) + "\n";
  } else {
    fail(ErrorKind::Config, "unknown evaluation mode '" + opts.mode + "'");
  }
  if (!opts.out_path.empty()) write_file(opts.out_path, report_text);
  return value;
}

}  // namespace sfqi
