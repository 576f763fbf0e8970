// Test-only oracles, independent of the implementation paths they check.
#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <limits>
#include <queue>
#include <vector>

#include "baffle/env.hpp"

namespace baffle::test {

// Best (or worst) undiscounted return over every action sequence of length
// <= the episode horizon, by exhaustive enumeration of the real
// environment. Feasible for ChainWalk-sized action spaces.
inline double enumerate_extreme_return(const EnvSpec& spec, bool maximize) {
  const int actions = spec.action_count();
  double best = maximize ? -std::numeric_limits<double>::infinity()
                         : std::numeric_limits<double>::infinity();
  std::vector<int> seq;
  auto recurse = [&](auto&& self, Env& env, double ret) -> void {
    if (env.done()) {
      best = maximize ? std::max(best, ret) : std::min(best, ret);
      return;
    }
    for (int a = 0; a < actions; ++a) {
      Env copy = env;
      StepResult step = copy.step(a);
      self(self, copy, ret + step.reward);
    }
  };
  Env env(spec, 0);
  env.reset();
  recurse(recurse, env, 0.0);
  return best;
}

// Shortest goal distance from every cell by breadth-first search; the
// optimal PatchGrid return from the start is 1 - 0.01 * (dist - 1).
inline int bfs_goal_distance(const EnvSpec& spec, int from_row, int from_col) {
  const int h = spec.grid_h;
  const int w = spec.grid_w;
  std::vector<int> dist(static_cast<std::size_t>(h) * w, -1);
  std::queue<std::pair<int, int>> frontier;
  dist[static_cast<std::size_t>(from_row) * w + from_col] = 0;
  frontier.emplace(from_row, from_col);
  while (!frontier.empty()) {
    const auto [r, c] = frontier.front();
    frontier.pop();
    const int d = dist[static_cast<std::size_t>(r) * w + c];
    const int nr[] = {r - 1, r + 1, r, r};
    const int nc[] = {c, c, c - 1, c + 1};
    for (int i = 0; i < 4; ++i) {
      const int rr = std::clamp(nr[i], 0, h - 1);
      const int cc = std::clamp(nc[i], 0, w - 1);
      auto& slot = dist[static_cast<std::size_t>(rr) * w + cc];
      if (slot < 0) {
        slot = d + 1;
        frontier.emplace(rr, cc);
      }
    }
  }
  return dist[static_cast<std::size_t>(h - 1) * w + (w - 1)];
}

// Quantile by the textbook definition, written independently of the
// implementation in core.
inline double quantile_by_definition(std::vector<double> v, double q) {
  std::sort(v.begin(), v.end());
  const double h = q * static_cast<double>(v.size() - 1);
  const std::size_t lo = static_cast<std::size_t>(h);
  const std::size_t hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (h - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

// PCA through the covariance eigendecomposition: the dense brute-force
// route (the implementation itself uses SVD of the centered matrix).
inline Eigen::MatrixXd pca_components_by_covariance(const Eigen::MatrixXd& x,
                                                    int k) {
  const Eigen::RowVectorXd mean = x.colwise().mean();
  const Eigen::MatrixXd centered = x.rowwise() - mean;
  const Eigen::MatrixXd cov =
      centered.transpose() * centered / static_cast<double>(x.rows() - 1);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(cov);
  Eigen::MatrixXd comps(x.cols(), k);
  for (int j = 0; j < k; ++j) {
    comps.col(j) = eig.eigenvectors().col(x.cols() - 1 - j);  // descending
  }
  return comps;
}

// Globally optimal 2-partition inertia by enumerating every labeling.
// Feasible up to ~16 points.
inline double best_two_partition_inertia(const Eigen::MatrixXd& pts) {
  const int n = static_cast<int>(pts.rows());
  double best = std::numeric_limits<double>::infinity();
  for (std::uint32_t mask = 1; mask < (1u << (n - 1)); ++mask) {
    Eigen::RowVectorXd c0 = Eigen::RowVectorXd::Zero(pts.cols());
    Eigen::RowVectorXd c1 = Eigen::RowVectorXd::Zero(pts.cols());
    int n0 = 0, n1 = 0;
    for (int i = 0; i < n; ++i) {
      if (mask & (1u << i)) {
        c1 += pts.row(i);
        ++n1;
      } else {
        c0 += pts.row(i);
        ++n0;
      }
    }
    if (n0 == 0 || n1 == 0) continue;
    c0 /= n0;
    c1 /= n1;
    double inertia = 0.0;
    for (int i = 0; i < n; ++i) {
      inertia += (mask & (1u << i)) ? (pts.row(i) - c1).squaredNorm()
                                    : (pts.row(i) - c0).squaredNorm();
    }
    best = std::min(best, inertia);
  }
  return best;
}

}  // namespace baffle::test
