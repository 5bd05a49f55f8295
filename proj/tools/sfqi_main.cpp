// Command-line driver: simulate datasets, train policies, sweep kappa,
// evaluate and compare policies, and run the gradient checker.

#include <CLI11.hpp>
#include <cstdio>
#include <json.hpp>
#include <string>
#include <vector>

#include "sfqi/experiment.hpp"
#include "sfqi/neuralnet.hpp"
#include "sfqi/textio.hpp"

namespace {

struct CommonFlags {
  sfqi::ExperimentSpec spec;
  std::string seeds = "0";
  std::string variants = "pca";
  std::string kappas;
  std::string widths = "15,5,5";
  std::string blocks = "27,27,27,27";
  std::string setting = "dependent";
};

std::vector<std::uint64_t> parse_seed_list(const std::string& s) {
  std::vector<std::uint64_t> seeds;
  for (const auto& tok : sfqi::split(s, ','))
    seeds.push_back(static_cast<std::uint64_t>(sfqi::parse_int(tok, "--seeds")));
  return seeds;
}

std::vector<int> parse_int_list(const std::string& s, const char* flag) {
  std::vector<int> out;
  if (s.empty()) return out;
  for (const auto& tok : sfqi::split(s, ','))
    out.push_back(static_cast<int>(sfqi::parse_int(tok, flag)));
  return out;
}

void add_sim_flags(CLI::App* cmd, CommonFlags& flags) {
  auto& sim = flags.spec.sim;
  cmd->add_option("--n-traj", sim.n_traj, "number of trajectories N");
  cmd->add_option("--horizon", sim.horizon, "trajectory length T");
  cmd->add_option("--m0", sim.m0, "low-frequency dimension");
  cmd->add_option("--blocks", flags.blocks,
                  "comma-separated high-frequency block lengths");
  cmd->add_option("--zeta", sim.zeta, "eigenvalue decay rate");
  cmd->add_option("--setting", flags.setting,
                  "dependent | independent-blocks");
  cmd->add_option("--gamma", sim.gamma, "discount factor");
  cmd->add_option("--c", sim.nonlin_c, "nonlinearity weight");
  cmd->add_option("--x-noise", sim.x_noise, "x transition noise scale");
  cmd->add_option("--reward-noise", sim.reward_noise, "reward noise scale");
}

void add_train_flags(CLI::App* cmd, CommonFlags& flags) {
  auto& spec = flags.spec;
  cmd->add_option("--widths", flags.widths, "hidden layer widths");
  cmd->add_option("--dropout", spec.dropout_rate, "dropout rate");
  cmd->add_option("--iterations", spec.fqi.iterations, "FQI iterations K");
  cmd->add_option("--sample-size", spec.fqi.sample_size,
                  "per-iteration subsample size (0 = all transitions)");
  cmd->add_option("--epochs", spec.fqi.train.epochs,
                  "epochs per regression fit");
  cmd->add_option("--batch", spec.fqi.train.batch_size, "minibatch size");
  cmd->add_option("--lr", spec.fqi.train.learning_rate, "learning rate");
  cmd->add_option("--var-threshold", spec.variance_threshold,
                  "variance-explained threshold for kappa selection");
  cmd->add_option("--n-mc", spec.n_mc, "Monte-Carlo rollouts per policy");
  cmd->add_option("--t-mc", spec.t_mc, "Monte-Carlo rollout length");
  cmd->add_option("--threads", spec.threads, "concurrent seed workers");
}

void finalize(CommonFlags& flags) {
  flags.spec.seeds = parse_seed_list(flags.seeds);
  flags.spec.variants = sfqi::split(flags.variants, ',');
  flags.spec.kappas = parse_int_list(flags.kappas, "--kappas");
  flags.spec.hidden_widths = parse_int_list(flags.widths, "--widths");
  flags.spec.sim.block_lengths = parse_int_list(flags.blocks, "--blocks");
  if (flags.setting == "dependent")
    flags.spec.sim.setting = sfqi::SimConfig::Setting::Dependent;
  else if (flags.setting == "independent-blocks")
    flags.spec.sim.setting = sfqi::SimConfig::Setting::IndependentBlocks;
  else
    sfqi::fail(sfqi::ErrorKind::Config,
               "unknown --setting '" + flags.setting + "'");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Spectral fitted Q-iteration for mixed-frequency offline RL"};
  app.require_subcommand(1);

  CommonFlags flags;
  sfqi::EvaluateOptions eval_opts;
  std::string arch_spec = "15,5,5";
  int arch_input = 7;
  std::uint64_t check_seed = 0;

  auto* simulate = app.add_subcommand("simulate", "generate datasets");
  add_sim_flags(simulate, flags);
  simulate->add_option("--seeds", flags.seeds, "comma-separated seed list");
  simulate->add_option("--out", flags.spec.out_dir, "output directory")
      ->required();
  simulate->add_option("--threads", flags.spec.threads, "seed workers");

  auto* train = app.add_subcommand("train", "train policies per seed");
  add_sim_flags(train, flags);
  add_train_flags(train, flags);
  train->add_option("--seeds", flags.seeds, "comma-separated seed list");
  train->add_option("--variants", flags.variants,
                    "comma-separated: pca,all,ave,bottleneck");
  train->add_option("--kappas", flags.kappas,
                    "explicit kappa (first entry used)");
  train->add_option("--out", flags.spec.out_dir, "output directory")
      ->required();

  auto* sweep = app.add_subcommand("sweep-kappa",
                                   "train and evaluate across kappa values");
  add_sim_flags(sweep, flags);
  add_train_flags(sweep, flags);
  sweep->add_option("--seeds", flags.seeds, "comma-separated seed list");
  sweep->add_option("--kappas", flags.kappas, "comma-separated kappa list")
      ->required();
  sweep->add_option("--out", flags.spec.out_dir, "output directory")
      ->required();

  auto* compare = app.add_subcommand(
      "compare", "paired comparison of feature variants");
  add_sim_flags(compare, flags);
  add_train_flags(compare, flags);
  compare->add_option("--seeds", flags.seeds, "comma-separated seed list");
  compare->add_option("--variants", flags.variants,
                      "comma-separated variant list; first is the baseline");
  compare->add_option("--kappas", flags.kappas, "explicit kappa override");
  compare->add_option("--out", flags.spec.out_dir, "output directory")
      ->required();

  auto* evaluate = app.add_subcommand("evaluate", "evaluate a stored policy");
  evaluate->add_option("--policy", eval_opts.policy_path, "policy file")
      ->required();
  evaluate->add_option("--mode", eval_opts.mode, "monte-carlo | fqe");
  evaluate->add_option("--sim-config", eval_opts.sim_config_path,
                       "simulator config (monte-carlo mode)");
  evaluate->add_option("--data", eval_opts.data_path,
                       "trajectory dataset (fqe mode)");
  evaluate->add_option("--fqe-iterations", eval_opts.fqe_iterations,
                       "FQE iterations");
  evaluate->add_option("--seed", eval_opts.seed, "evaluation seed");
  evaluate->add_option("--n-mc", eval_opts.n_mc, "Monte-Carlo rollouts");
  evaluate->add_option("--t-mc", eval_opts.t_mc, "rollout length");
  evaluate->add_option("--out", eval_opts.out_path, "report file");

  auto* check = app.add_subcommand("gradient-check",
                                   "finite-difference gradient verification");
  check->add_option("--arch", arch_spec, "hidden widths, e.g. 15,5,5");
  check->add_option("--input-dim", arch_input, "input dimension");
  check->add_option("--seed", check_seed, "seed");

  CLI11_PARSE(app, argc, argv);

  try {
    if (simulate->parsed()) {
      finalize(flags);
      sfqi::run_simulate(flags.spec);
      std::printf("wrote %zu dataset(s) to %s\n", flags.spec.seeds.size(),
                  flags.spec.out_dir.c_str());
    } else if (train->parsed()) {
      finalize(flags);
      sfqi::run_train(flags.spec);
      std::printf("wrote policies to %s\n", flags.spec.out_dir.c_str());
    } else if (sweep->parsed()) {
      finalize(flags);
      const sfqi::SweepResult result = sfqi::run_sweep_kappa(flags.spec);
      std::printf("kappa,mean,se,variance_explained\n");
      for (const auto& row : result.rows)
        std::printf("%d,%.6f,%.6f,%.6f\n", row.kappa, row.mean, row.se,
                    row.variance_explained);
    } else if (compare->parsed()) {
      finalize(flags);
      const sfqi::CompareResult result = sfqi::run_compare(flags.spec);
      for (const auto& report : result.reports)
        std::printf("%s: %.6f (se %.6f)\n", report.label.c_str(), report.mean,
                    report.se);
      for (const auto& cmp : result.comparisons)
        std::printf("%s: %.6f +/- %.6f\n", cmp.label.c_str(), cmp.mean_diff,
                    cmp.margin);
    } else if (evaluate->parsed()) {
      const double value = sfqi::run_evaluate(eval_opts);
      std::printf("value %.6f\n", value);
    } else if (check->parsed()) {
      sfqi::NetworkArchitecture arch;
      arch.input_dim = arch_input;
      arch.hidden_widths = parse_int_list(arch_spec, "--arch");
      arch.dropout_rate = 0.1;
      arch.v_max = 100.0;
      const double err = sfqi::gradient_check(arch, check_seed);
      std::printf("max relative error %.3g\n", err);
      if (!(err < 1e-4)) {
        std::fprintf(stderr, "gradient check FAILED (>= 1e-4)\n");
        return 1;
      }
      std::printf("gradient check passed\n");
    }
  } catch (const sfqi::Error& e) {
    const nlohmann::json record = {
        {"error", sfqi::error_kind_name(e.kind())}, {"message", e.what()}};
    std::fprintf(stderr, "%s\n", record.dump().c_str());
    return 1;
  } catch (const std::exception& e) {
    const nlohmann::json record = {{"error", "internal"},
                                   {"message", e.what()}};
    std::fprintf(stderr, "%s\n", record.dump().c_str());
    return 1;
  }
  return 0;
}
