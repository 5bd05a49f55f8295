#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

#include "sfqi/errors.hpp"

namespace sfqi {

// State with a low-frequency part x and a concatenation z of J
// high-frequency blocks. block_lengths gives the length of each block and
// must sum to z.size().
struct MixedState {
  Eigen::VectorXd x;
  Eigen::VectorXd z;
  std::vector<int> block_lengths;

  int m0() const { return static_cast<int>(x.size()); }
  int m() const { return static_cast<int>(z.size()); }
  int blocks() const { return static_cast<int>(block_lengths.size()); }
};

struct TimeStep {
  MixedState state;
  int action = 0;
  double reward = 0.0;
};

struct Transition {
  const MixedState* state = nullptr;
  int action = 0;
  double reward = 0.0;
  const MixedState* next_state = nullptr;
};

// N trajectories of equal length T. Immutable after construction; shared
// read-only across workers.
class TrajectoryDataset {
 public:
  // Validates equal lengths, consistent dimensions, action range and the
  // reward bound.
  TrajectoryDataset(std::vector<std::vector<TimeStep>> trajectories,
                    int action_count, double r_max);

  int n_traj() const { return static_cast<int>(trajectories_.size()); }
  int horizon() const {
    return trajectories_.empty() ? 0
                                 : static_cast<int>(trajectories_[0].size());
  }
  int action_count() const { return action_count_; }
  double r_max() const { return r_max_; }

  int m0() const { return trajectories_[0][0].state.m0(); }
  int m() const { return trajectories_[0][0].state.m(); }
  const std::vector<int>& block_lengths() const {
    return trajectories_[0][0].state.block_lengths;
  }

  const std::vector<std::vector<TimeStep>>& trajectories() const {
    return trajectories_;
  }
  const TimeStep& at(int traj, int t) const { return trajectories_[traj][t]; }

  // Total number of states N*T.
  int state_count() const { return n_traj() * horizon(); }

 private:
  std::vector<std::vector<TimeStep>> trajectories_;
  int action_count_;
  double r_max_;
};

// One transition per (i, t) with t < T-1; exactly N*(T-1) entries. The
// returned views point into ds and share its lifetime.
std::vector<Transition> to_transitions(const TrajectoryDataset& ds);

// Trajectory file: one manifest line of key=value pairs (n_traj, horizon,
// m0, block_lengths, action_count, r_max) followed by records
// traj_id,t,x_1..x_m0,z_1..z_m,action,reward.
void save_trajectories(const TrajectoryDataset& ds, const std::string& path);
TrajectoryDataset load_trajectories(const std::string& path);

bool datasets_equal(const TrajectoryDataset& a, const TrajectoryDataset& b);

}  // namespace sfqi
