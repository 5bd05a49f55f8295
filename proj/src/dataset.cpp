#include "sfqi/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <sstream>

#include "sfqi/textio.hpp"

namespace sfqi {

namespace {

void check_state(const MixedState& s, int m0, int m,
                 const std::vector<int>& blocks, const char* where) {
  if (s.m0() != m0 || s.m() != m || s.block_lengths != blocks)
    fail(ErrorKind::Dimension,
         std::string("state dimensions differ across records (") + where +
             ")");
}

}  // namespace

TrajectoryDataset::TrajectoryDataset(
    std::vector<std::vector<TimeStep>> trajectories, int action_count,
    double r_max)
    : trajectories_(std::move(trajectories)),
      action_count_(action_count),
      r_max_(r_max) {
  if (trajectories_.empty())
    fail(ErrorKind::InsufficientData, "dataset has no trajectories");
  if (action_count_ < 1) fail(ErrorKind::Config, "action_count must be >= 1");
  if (!(r_max_ > 0) || !std::isfinite(r_max_))
    fail(ErrorKind::Config, "r_max must be positive and finite");

  const std::size_t t_len = trajectories_[0].size();
  if (t_len < 2)
    fail(ErrorKind::RaggedTrajectory, "trajectories must have length >= 2");

  const auto& first = trajectories_[0][0].state;
  const int m0 = first.m0();
  const int m = first.m();
  const auto& blocks = first.block_lengths;
  if (m < 1 || blocks.empty())
    fail(ErrorKind::Dimension, "high-frequency part must be non-empty");
  int block_sum = 0;
  for (int b : blocks) {
    if (b <= 0) fail(ErrorKind::Dimension, "block lengths must be positive");
    block_sum += b;
  }
  if (block_sum != m)
    fail(ErrorKind::Dimension, "block lengths do not sum to len(z)");

  for (const auto& traj : trajectories_) {
    if (traj.size() != t_len)
      fail(ErrorKind::RaggedTrajectory,
           "all trajectories must share the same length");
    for (const auto& step : traj) {
      check_state(step.state, m0, m, blocks, "dataset");
      if (step.action < 0 || step.action >= action_count_)
        fail(ErrorKind::Schema, "action index out of range");
      if (!(std::abs(step.reward) <= r_max_))
        fail(ErrorKind::BoundViolation,
             "reward exceeds the declared bound r_max");
    }
  }
}

std::vector<Transition> to_transitions(const TrajectoryDataset& ds) {
  std::vector<Transition> out;
  out.reserve(static_cast<std::size_t>(ds.n_traj()) *
              static_cast<std::size_t>(ds.horizon() - 1));
  for (const auto& traj : ds.trajectories()) {
    for (std::size_t t = 0; t + 1 < traj.size(); ++t) {
      out.push_back(Transition{&traj[t].state, traj[t].action, traj[t].reward,
                               &traj[t + 1].state});
    }
  }
  return out;
}

void save_trajectories(const TrajectoryDataset& ds, const std::string& path) {
  std::string out;
  out += "n_traj=" + std::to_string(ds.n_traj());
  out += " horizon=" + std::to_string(ds.horizon());
  out += " m0=" + std::to_string(ds.m0());
  out += " block_lengths=";
  const auto& blocks = ds.block_lengths();
  for (std::size_t j = 0; j < blocks.size(); ++j) {
    if (j > 0) out.push_back(',');
    out += std::to_string(blocks[j]);
  }
  out += " action_count=" + std::to_string(ds.action_count());
  out += " r_max=" + format_double(ds.r_max());
  out.push_back('\n');

  for (int i = 0; i < ds.n_traj(); ++i) {
    for (int t = 0; t < ds.horizon(); ++t) {
      const TimeStep& step = ds.at(i, t);
      out += std::to_string(i);
      out.push_back(',');
      out += std::to_string(t);
      for (Eigen::Index k = 0; k < step.state.x.size(); ++k) {
        out.push_back(',');
        out += format_double(step.state.x(k));
      }
      for (Eigen::Index k = 0; k < step.state.z.size(); ++k) {
        out.push_back(',');
        out += format_double(step.state.z(k));
      }
      out.push_back(',');
      out += std::to_string(step.action);
      out.push_back(',');
      out += format_double(step.reward);
      out.push_back('\n');
    }
  }
  write_file(path, out);
}

TrajectoryDataset load_trajectories(const std::string& path) {
  const std::string contents = read_file(path);
  std::istringstream in(contents);
  std::string line;
  if (!std::getline(in, line))
    fail(ErrorKind::Schema, "empty trajectory file " + path);

  const auto manifest = parse_kv_line(line);
  for (const char* key : {"n_traj", "horizon", "m0", "block_lengths",
                          "action_count", "r_max"}) {
    if (!manifest.count(key))
      fail(ErrorKind::Schema,
           std::string("manifest missing key '") + key + "' in " + path);
  }
  const int n_traj =
      static_cast<int>(parse_int(manifest.at("n_traj"), "manifest"));
  const int horizon =
      static_cast<int>(parse_int(manifest.at("horizon"), "manifest"));
  const int m0 = static_cast<int>(parse_int(manifest.at("m0"), "manifest"));
  const int action_count =
      static_cast<int>(parse_int(manifest.at("action_count"), "manifest"));
  const double r_max = parse_double(manifest.at("r_max"), "manifest");
  std::vector<int> blocks;
  for (const auto& tok : split(manifest.at("block_lengths"), ','))
    blocks.push_back(static_cast<int>(parse_int(tok, "block_lengths")));
  int m = 0;
  for (int b : blocks) m += b;

  const int fields = 2 + m0 + m + 2;
  // record rows keyed by (traj_id, t); sorted by time below
  std::map<long long, std::map<long long, TimeStep>> rows;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto parts = split(line, ',');
    const std::string where = path + ":" + std::to_string(line_no);
    if (static_cast<int>(parts.size()) != fields)
      fail(ErrorKind::Dimension,
           "record has " + std::to_string(parts.size()) + " fields, expected " +
               std::to_string(fields) + " at " + where);
    const long long traj_id = parse_int(parts[0], where);
    const long long t = parse_int(parts[1], where);
    TimeStep step;
    step.state.x.resize(m0);
    for (int k = 0; k < m0; ++k)
      step.state.x(k) = parse_double(parts[2 + k], where);
    step.state.z.resize(m);
    for (int k = 0; k < m; ++k)
      step.state.z(k) = parse_double(parts[2 + m0 + k], where);
    step.state.block_lengths = blocks;
    step.action = static_cast<int>(parse_int(parts[2 + m0 + m], where));
    step.reward = parse_double(parts[3 + m0 + m], where);
    if (!rows[traj_id].emplace(t, std::move(step)).second)
      fail(ErrorKind::Schema, "duplicate (traj_id, t) at " + where);
  }

  if (static_cast<int>(rows.size()) != n_traj)
    fail(ErrorKind::RaggedTrajectory,
         "manifest declares " + std::to_string(n_traj) + " trajectories, file has " +
             std::to_string(rows.size()));
  std::vector<std::vector<TimeStep>> trajectories;
  trajectories.reserve(rows.size());
  for (auto& [id, steps] : rows) {
    if (static_cast<int>(steps.size()) != horizon)
      fail(ErrorKind::RaggedTrajectory,
           "trajectory " + std::to_string(id) + " has " +
               std::to_string(steps.size()) + " steps, expected " +
               std::to_string(horizon));
    std::vector<TimeStep> traj;
    traj.reserve(steps.size());
    for (auto& [t, step] : steps) traj.push_back(std::move(step));
    trajectories.push_back(std::move(traj));
  }
  return TrajectoryDataset(std::move(trajectories), action_count, r_max);
}

bool datasets_equal(const TrajectoryDataset& a, const TrajectoryDataset& b) {
  if (a.n_traj() != b.n_traj() || a.horizon() != b.horizon() ||
      a.action_count() != b.action_count() || a.r_max() != b.r_max() ||
      a.block_lengths() != b.block_lengths())
    return false;
  for (int i = 0; i < a.n_traj(); ++i) {
    for (int t = 0; t < a.horizon(); ++t) {
      const TimeStep& sa = a.at(i, t);
      const TimeStep& sb = b.at(i, t);
      if (sa.action != sb.action || sa.reward != sb.reward) return false;
      if (sa.state.x.size() != sb.state.x.size() ||
          (sa.state.x.array() != sb.state.x.array()).any())
        return false;
      if (sa.state.z.size() != sb.state.z.size() ||
          (sa.state.z.array() != sb.state.z.array()).any())
        return false;
    }
  }
  return true;
}

}  // namespace sfqi
