#pragma once

// Randomised checks of the tabular results: feasible-reward soundness and
// completeness, and the augmentation error-bound inequality on symmetric
// instances.

#include <cstdint>
#include <vector>

namespace sgf::theory {

struct SoundnessReport {
  int instances = 0;
  int draws = 0;
  int failures = 0;  // constructed rewards under which the expert is not optimal
};

// Random MGs (1..max_states states, 2 agents, 1..max_actions actions each),
// `draws` (zeta, V) per MG; every constructed reward must pass is_optimal.
SoundnessReport feasible_reward_soundness(int instances, int draws, int max_states, int max_actions,
                                          std::uint64_t seed, double tol = 1e-8);

struct CompletenessReport {
  int cases = 0;
  int not_optimal = 0;      // greedy experts that failed is_optimal (should be 0)
  double max_residual = 0.0;
};

// For rewards under which the expert is optimal (greedy experts of random
// rewards, and rewards built from random parameters), solves
// (I - gamma P_pi) V = r_pi, sets zeta = V - Q off the expert support and
// rebuilds the reward. Reports the largest reconstruction error.
CompletenessReport feasible_reward_completeness(int instances, int max_states, std::uint64_t seed);

struct BoundReport {
  int instances = 0;
  int cells = 0;
  int failing_cells = 0;  // delta < -tolerance
  double min_delta = 0.0;
};

// Random D_2 / D_4 symmetric grid instances; each is checked at every sample
// size with verify_augmentation_bound.
BoundReport augmentation_bound_sweep(int instances, const std::vector<int>& sample_sizes, std::uint64_t seed,
                                     double tolerance = 1e-12);

}  // namespace sgf::theory
