#include "baffle/tabular.hpp"

#include <cmath>
#include <limits>

#include "baffle/errors.hpp"

namespace baffle {
namespace {

struct Transition {
  int next_state;
  double reward;
  bool terminal;
};

// Deterministic transition of the canonical (position / cell) state.
Transition transition(const EnvSpec& spec, int state, int action) {
  if (spec.id == EnvId::ChainWalk) {
    int next = state + (action == 0 ? -1 : 1);
    if (next == 0) return {next, -1.0, true};
    if (next == spec.n_states - 1) return {next, 1.0, true};
    return {next, -0.01, false};
  }
  int row = state / spec.grid_w;
  int col = state % spec.grid_w;
  switch (action) {
    case 0: row = std::max(0, row - 1); break;
    case 1: row = std::min(spec.grid_h - 1, row + 1); break;
    case 2: col = std::max(0, col - 1); break;
    default: col = std::min(spec.grid_w - 1, col + 1); break;
  }
  const int next = row * spec.grid_w + col;
  if (row == spec.grid_h - 1 && col == spec.grid_w - 1) return {next, 1.0, true};
  return {next, -0.01, false};
}

bool is_terminal_state(const EnvSpec& spec, int state) {
  if (spec.id == EnvId::ChainWalk) {
    return state == 0 || state == spec.n_states - 1;
  }
  return state == spec.grid_w * spec.grid_h - 1;
}

// With step penalty 0.01 and unit terminal rewards, 1 - 0.01/1 is the
// discount above which a return-minimizing policy earns more (more
// negative) by stalling until the horizon than by walking into the worst
// terminal. The minimize solve caps gamma there so the pessimal policy
// actively seeks the bad terminal instead of exploiting the time limit;
// the cap also keeps the Bellman operator a contraction at gamma = 1,
// where the undiscounted minimizing iteration has no fixed point.
constexpr double kMinimizeGammaCap = 0.99;

}  // namespace

std::string to_string(Objective o) {
  return o == Objective::Maximize ? "maximize" : "minimize";
}

Objective objective_from_string(const std::string& name) {
  if (name == "maximize") return Objective::Maximize;
  if (name == "minimize") return Objective::Minimize;
  throw ConfigError("unknown objective: " + name);
}

TabularSolution tabular_policy(const EnvSpec& spec, Objective objective,
                               double gamma) {
  spec.validate();
  if (!(gamma > 0.0) || gamma > 1.0) {
    throw ConfigError("tabular_policy requires gamma in (0, 1]");
  }

  const int n_states = spec.canonical_state_count();
  const int n_actions = spec.action_count();
  const bool maximize = objective == Objective::Maximize;
  const double solve_gamma =
      maximize ? gamma : std::min(gamma, kMinimizeGammaCap);

  std::vector<double> v(static_cast<std::size_t>(n_states), 0.0);
  constexpr double kTol = 1e-10;
  constexpr int kMaxSweeps = 10000;
  int sweeps = 0;
  double residual = std::numeric_limits<double>::infinity();
  while (residual >= kTol) {
    if (++sweeps > kMaxSweeps) {
      throw NumericalError("tabular_policy: no fixed point after " +
                           std::to_string(kMaxSweeps) +
                           " sweeps; residual " + std::to_string(residual));
    }
    residual = 0.0;
    for (int s = 0; s < n_states; ++s) {
      if (is_terminal_state(spec, s)) continue;
      double best = maximize ? -std::numeric_limits<double>::infinity()
                             : std::numeric_limits<double>::infinity();
      for (int a = 0; a < n_actions; ++a) {
        const Transition tr = transition(spec, s, a);
        const double q =
            tr.reward + (tr.terminal ? 0.0 : solve_gamma * v[tr.next_state]);
        best = maximize ? std::max(best, q) : std::min(best, q);
      }
      residual = std::max(residual, std::abs(best - v[s]));
      v[s] = best;
    }
  }

  TabularSolution sol;
  sol.objective = objective;
  sol.gamma = gamma;
  sol.sweeps = sweeps;
  sol.residual = residual;
  sol.action.assign(n_states, 0);
  sol.value.assign(n_states, 0.0);
  for (int s = 0; s < n_states; ++s) {
    if (is_terminal_state(spec, s)) continue;
    int best_action = 0;
    double best = maximize ? -std::numeric_limits<double>::infinity()
                           : std::numeric_limits<double>::infinity();
    for (int a = 0; a < n_actions; ++a) {
      const Transition tr = transition(spec, s, a);
      const double q =
          tr.reward + (tr.terminal ? 0.0 : solve_gamma * v[tr.next_state]);
      if (maximize ? q > best : q < best) {
        best = q;
        best_action = a;
      }
    }
    sol.action[s] = best_action;
  }

  // Reported values are the greedy policy's episode returns: simulate the
  // policy from each state under the requested gamma and the episode
  // horizon (so gamma = 1 yields plain reward sums).
  for (int s = 0; s < n_states; ++s) {
    if (is_terminal_state(spec, s)) continue;
    double ret = 0.0;
    double discount = 1.0;
    int state = s;
    for (int t = 0; t < spec.max_episode_steps; ++t) {
      const Transition tr = transition(spec, state, sol.action[state]);
      ret += discount * tr.reward;
      if (tr.terminal) break;
      discount *= gamma;
      state = tr.next_state;
    }
    sol.value[s] = ret;
  }
  return sol;
}

}  // namespace baffle
