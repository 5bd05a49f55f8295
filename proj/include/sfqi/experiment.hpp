#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "sfqi/envsim.hpp"
#include "sfqi/evaluation.hpp"
#include "sfqi/fqi.hpp"

namespace sfqi {

inline constexpr const char* kVersion = "sfqi 1.0.0";

// Everything a reproducible experiment run needs: the simulator settings,
// the variants and kappa choices to train, FQI hyperparameters, the
// Monte-Carlo evaluation budget, and the seed list.
struct ExperimentSpec {
  SimConfig sim;                       // base config; per-seed reseeded
  std::vector<std::string> variants = {"pca"};
  std::vector<int> kappas;             // sweep list; empty = use threshold
  double variance_threshold = 0.95;
  std::vector<int> hidden_widths = {15, 5, 5};
  double dropout_rate = 0.1;
  FqiConfig fqi;
  int n_mc = 100;
  int t_mc = 20;
  std::vector<std::uint64_t> seeds = {0};
  std::string out_dir;
  int threads = 1;

  std::map<std::string, std::string> describe() const;
};

// Per-seed simulator config: same frozen structure, reseeded streams.
SimConfig config_for_seed(const SimConfig& base, std::uint64_t seed);

// simulate: writes config_<seed>.txt and dataset_<seed>.txt per seed plus
// a manifest.
void run_simulate(const ExperimentSpec& spec);

// train: fits one policy per (seed, variant) and writes policy files.
void run_train(const ExperimentSpec& spec);

struct SweepRow {
  int kappa = 0;
  double mean = 0.0;
  double se = 0.0;
  double variance_explained = 0.0;  // mean across seeds
};

struct SweepResult {
  std::vector<SweepRow> rows;
  // values[k][s]: MC value of the kappa-k policy under seed s.
  std::vector<std::vector<double>> values;
  std::vector<std::uint64_t> seeds;
};

SweepResult run_sweep_kappa(const ExperimentSpec& spec);

struct CompareResult {
  std::vector<EvalReport> reports;            // one per variant
  std::vector<ComparisonReport> comparisons;  // first variant vs each other
};

CompareResult run_compare(const ExperimentSpec& spec);

struct EvaluateOptions {
  std::string policy_path;
  std::string mode = "monte-carlo";  // or "fqe"
  std::string sim_config_path;       // monte-carlo: environment to roll out
  std::string data_path;             // fqe: offline dataset
  int fqe_iterations = 30;
  std::uint64_t seed = 0;
  int n_mc = 100;
  int t_mc = 20;
  std::string out_path;
};

double run_evaluate(const EvaluateOptions& opts);

}  // namespace sfqi
