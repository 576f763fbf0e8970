#pragma once

#include <vector>

#include "baffle/env.hpp"

namespace baffle {

enum class Objective { Maximize, Minimize };

std::string to_string(Objective o);
Objective objective_from_string(const std::string& name);

/// Exact policy/value tables for one of the built-in environments.
/// `action[s]` / `value[s]` are indexed by canonical state and refer to the
/// start of an episode (timestep 0); terminal states carry action 0 and
/// value 0.
struct TabularSolution {
  Objective objective = Objective::Maximize;
  double gamma = 1.0;
  std::vector<int> action;
  std::vector<double> value;
  int sweeps = 0;
  double residual = 0.0;
};

/// Stationary value iteration to a fixed point (sup-norm change < 1e-10,
/// NumericalError after 10,000 sweeps). Minimize is value iteration with
/// argmin action selection; ties break to the lowest action index. The
/// minimize solve caps the discount at 0.99 (= 1 - step/terminal reward),
/// above which a return minimizer would stall against the horizon instead
/// of seeking the worst terminal and the undiscounted iteration has no
/// fixed point.
/// The `value` table holds the greedy policy's episode return from each
/// state, simulated under the requested gamma and max_episode_steps.
TabularSolution tabular_policy(const EnvSpec& spec, Objective objective,
                               double gamma);

}  // namespace baffle
