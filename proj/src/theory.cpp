#include "sgf/theory.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>

#include "sgf/random.hpp"
#include "sgf/tabular.hpp"

namespace sgf::theory {

using namespace tabular;

namespace {

std::vector<double> optimal_values(const TabularMG& mg, const JointTable& r) {
  const int S = mg.n_states, A = mg.n_joint();
  std::vector<double> V(S, 0.0);
  for (int it = 0; it < 100000; ++it) {
    double change = 0.0;
    std::vector<double> next(S, -std::numeric_limits<double>::infinity());
    for (int s = 0; s < S; ++s) {
      for (int a = 0; a < A; ++a) {
        double acc = 0.0;
        for (int t = 0; t < S; ++t) acc += mg.p(s, a, t) * V[t];
        next[s] = std::max(next[s], r(s, a) + mg.gamma * acc);
      }
      change = std::max(change, std::abs(next[s] - V[s]));
    }
    V = next;
    if (change < 1e-15) break;
  }
  return V;
}

// Deterministic joint policy taking the greedy joint action in every state.
JointTable greedy_policy(const TabularMG& mg, const JointTable& r) {
  const auto V = optimal_values(mg, r);
  const int S = mg.n_states, A = mg.n_joint();
  JointTable pi(S, A);
  for (int s = 0; s < S; ++s) {
    int best = 0;
    double best_q = -std::numeric_limits<double>::infinity();
    for (int a = 0; a < A; ++a) {
      double acc = 0.0;
      for (int t = 0; t < S; ++t) acc += mg.p(s, a, t) * V[t];
      const double q = r(s, a) + mg.gamma * acc;
      if (q > best_q) best_q = q, best = a;
    }
    pi(s, best) = 1.0;
  }
  return pi;
}

double reconstruction_residual(const TabularMG& mg, const JointTable& r, const JointTable& pi) {
  const int S = mg.n_states, A = mg.n_joint();
  Eigen::MatrixXd M = Eigen::MatrixXd::Identity(S, S);
  Eigen::VectorXd b = Eigen::VectorXd::Zero(S);
  for (int s = 0; s < S; ++s) {
    for (int a = 0; a < A; ++a) {
      b(s) += pi(s, a) * r(s, a);
      for (int t = 0; t < S; ++t) M(s, t) -= mg.gamma * pi(s, a) * mg.p(s, a, t);
    }
  }
  const Eigen::VectorXd v = M.fullPivLu().solve(b);
  FeasibleRewardParams params;
  params.V.assign(v.data(), v.data() + S);
  params.zeta = JointTable(S, A);
  for (int s = 0; s < S; ++s) {
    for (int a = 0; a < A; ++a) {
      if (pi(s, a) != 0.0) continue;
      double acc = 0.0;
      for (int t = 0; t < S; ++t) acc += mg.p(s, a, t) * v(t);
      params.zeta(s, a) = std::max(0.0, v(s) - (r(s, a) + mg.gamma * acc));
    }
  }
  const auto rebuilt = build_feasible_reward(mg, pi, params);
  double worst = 0.0;
  for (size_t k = 0; k < r.values.size(); ++k) worst = std::max(worst, std::abs(rebuilt.values[k] - r.values[k]));
  return worst;
}

}  // namespace

SoundnessReport feasible_reward_soundness(int instances, int draws, int max_states, int max_actions,
                                          std::uint64_t seed, double tol) {
  Rng rng(seed);
  SoundnessReport out;
  for (int k = 0; k < instances; ++k) {
    const int S = 1 + static_cast<int>(uniform_index(rng, max_states));
    const std::vector<int> counts{1 + static_cast<int>(uniform_index(rng, max_actions)),
                                  1 + static_cast<int>(uniform_index(rng, max_actions))};
    const auto mg = random_mg(S, counts, uniform(rng, 0.5, 0.95), rng);
    const auto pi = random_policy(S, counts, rng).joint();
    ++out.instances;
    for (int d = 0; d < draws; ++d) {
      const auto params = random_params(S, mg.n_joint(), rng, uniform(rng, 0.1, 10.0));
      const auto r = build_feasible_reward(mg, pi, params);
      ++out.draws;
      if (!is_optimal(mg, r, pi, tol)) ++out.failures;
    }
  }
  return out;
}

CompletenessReport feasible_reward_completeness(int instances, int max_states, std::uint64_t seed) {
  Rng rng(seed);
  CompletenessReport out;
  for (int k = 0; k < instances; ++k) {
    const int S = 1 + static_cast<int>(uniform_index(rng, max_states));
    const std::vector<int> counts{1 + static_cast<int>(uniform_index(rng, 3)),
                                  1 + static_cast<int>(uniform_index(rng, 3))};
    const auto mg = random_mg(S, counts, uniform(rng, 0.5, 0.95), rng);

    JointTable r(S, mg.n_joint());
    for (double& x : r.values) x = uniform(rng, -1.0, 1.0);
    const auto greedy = greedy_policy(mg, r);
    ++out.cases;
    if (!is_optimal(mg, r, greedy, 1e-8)) ++out.not_optimal;
    out.max_residual = std::max(out.max_residual, reconstruction_residual(mg, r, greedy));

    const auto pi = random_policy(S, counts, rng).joint();
    const auto built = build_feasible_reward(mg, pi, random_params(S, mg.n_joint(), rng));
    ++out.cases;
    out.max_residual = std::max(out.max_residual, reconstruction_residual(mg, built, pi));
  }
  return out;
}

BoundReport augmentation_bound_sweep(int instances, const std::vector<int>& sample_sizes, std::uint64_t seed,
                                     double tolerance) {
  struct Shape {
    int width, height, agents, order;
  };
  // grids closed under the group; the quarter-turn group needs square grids
  const Shape shapes[] = {{2, 2, 1, 2}, {2, 2, 1, 4}, {3, 1, 1, 2}, {3, 3, 1, 4}, {2, 1, 2, 2}};
  Rng rng(seed);
  BoundReport out;
  out.min_delta = std::numeric_limits<double>::infinity();
  BoundCheckOptions opts;
  opts.tolerance = tolerance;
  for (int k = 0; k < instances; ++k) {
    const auto& sh = shapes[k % std::size(shapes)];
    const auto action = grid_symmetry(sh.width, sh.height, sh.agents, sh.order);
    const int S = static_cast<int>(action.state_perm[0].size());
    const std::vector<int> counts(sh.agents, kGridActions);
    const auto mg = symmetrize(random_mg(S, counts, uniform(rng, 0.5, 0.95), rng), action);
    const auto pi = random_symmetric_policy(S, counts, action, rng).joint();
    const auto params = random_params(S, mg.n_joint(), rng);
    ++out.instances;
    for (int m : sample_sizes) {
      const std::uint64_t seeds[] = {rng()};
      const auto rep = verify_augmentation_bound(mg, pi, action, m, seeds, params, opts);
      out.cells += rep.cells;
      out.failing_cells += rep.failing_cells;
      out.min_delta = std::min(out.min_delta, rep.min_delta);
    }
  }
  return out;
}

}  // namespace sgf::theory
