#pragma once

// Finite Markov games without reward: feasible reward construction, empirical
// estimation from demonstrations, error-propagation bounds and the symmetry
// improvement check.
//
// Joint actions use a mixed-radix index with agent 0 as the least significant
// digit: a = a_0 + c_0 * (a_1 + c_1 * (a_2 + ...)).

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "sgf/group.hpp"

namespace sgf::tabular {

class NumericError : public std::runtime_error {
 public:
  NumericError(const std::string& what, double residual)
      : std::runtime_error(what), residual_(residual) {}
  double residual() const { return residual_; }

 private:
  double residual_;
};

class EstimationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DomainError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class SymmetryViolationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

int joint_action_count(std::span<const int> action_counts);
int encode_joint(std::span<const int> actions, std::span<const int> action_counts);
std::vector<int> decode_joint(int joint, std::span<const int> action_counts);

// Dense table over (state, joint action).
struct JointTable {
  int n_states = 0;
  int n_joint = 0;
  std::vector<double> values;

  JointTable() = default;
  JointTable(int states, int joint, double fill = 0.0)
      : n_states(states), n_joint(joint), values(static_cast<size_t>(states) * joint, fill) {}

  double& operator()(int s, int a) { return values[static_cast<size_t>(s) * n_joint + a]; }
  double operator()(int s, int a) const { return values[static_cast<size_t>(s) * n_joint + a]; }

  friend bool operator==(const JointTable&, const JointTable&) = default;
};

struct TabularMG {
  int n_states = 0;
  std::vector<int> action_counts;
  std::vector<double> transition;  // [s][joint_a][s']
  double gamma = 0.9;

  TabularMG() = default;
  TabularMG(int states, std::vector<int> counts, double discount);

  int n_agents() const { return static_cast<int>(action_counts.size()); }
  int n_joint() const { return joint_action_count(action_counts); }

  double& p(int s, int a, int s_next) {
    return transition[(static_cast<size_t>(s) * n_joint() + a) * n_states + s_next];
  }
  double p(int s, int a, int s_next) const {
    return transition[(static_cast<size_t>(s) * n_joint() + a) * n_states + s_next];
  }
  std::span<const double> row(int s, int a) const {
    return {transition.data() + (static_cast<size_t>(s) * n_joint() + a) * n_states,
            static_cast<size_t>(n_states)};
  }

  // Throws DomainError when a row is not a distribution or gamma is not in [0, 1).
  void validate() const;

  friend bool operator==(const TabularMG& a, const TabularMG& b) {
    return a.n_states == b.n_states && a.action_counts == b.action_counts &&
           a.transition == b.transition && a.gamma == b.gamma;
  }
};

// Product-form joint policy: pi(a|s) = prod_i pi_i(a_i|s).
struct JointPolicy {
  int n_states = 0;
  std::vector<int> action_counts;
  std::vector<std::vector<double>> per_agent;  // per_agent[i][s * counts[i] + a_i]

  double agent_prob(int agent, int s, int a_i) const {
    return per_agent[agent][static_cast<size_t>(s) * action_counts[agent] + a_i];
  }
  JointTable joint() const;
  void validate() const;
};

struct FeasibleRewardParams {
  JointTable zeta;  // >= 0
  std::vector<double> V;
};

struct Evaluation {
  JointTable Q;
  std::vector<double> V;
  double residual = 0.0;
  int iterations = 0;
};

struct EvaluationOptions {
  double residual_target = 1e-13;
  int max_iterations = 2'000'000;
};

// Q, V of `pi` in mg + reward, by fixed-point iteration. Throws NumericError
// with the last residual when the iteration cap is hit.
Evaluation policy_evaluation(const TabularMG& mg, const JointTable& reward, const JointTable& pi,
                             const EvaluationOptions& options = {});

// Q - V == 0 where pi_E > 0 and Q - V <= 0 where pi_E == 0 (both within tol).
bool is_optimal(const TabularMG& mg, const JointTable& reward, const JointTable& pi_E, double tol);

JointTable build_feasible_reward(const TabularMG& mg, const JointTable& pi_E,
                                 const FeasibleRewardParams& params);

// Inverse of build_feasible_reward for a reward under which pi_E is optimal:
// V = V^{pi_E}, zeta = V - Q on the zero-probability support, 0 elsewhere.
FeasibleRewardParams recover_feasible_params(const TabularMG& mg, const JointTable& reward,
                                             const JointTable& pi_E);

struct Transition {
  int s = 0;
  int a = 0;
  int s_next = 0;
  friend bool operator==(const Transition&, const Transition&) = default;
};

struct DemoDataset {
  int n_states = 0;
  std::vector<int> action_counts;
  std::vector<Transition> tuples;

  int n_joint() const { return joint_action_count(action_counts); }
  std::vector<std::int64_t> count_sa() const;   // N(s, a)
  std::vector<std::int64_t> count_sas() const;  // N(s, a, s')
  std::vector<std::int64_t> count_s() const;    // N(s)

  friend bool operator==(const DemoDataset&, const DemoDataset&) = default;
};

struct EmpiricalModel {
  int n_states = 0;
  std::vector<int> action_counts;
  std::vector<double> p_hat;         // [s][a][s'], zero rows where undefined
  std::vector<std::uint8_t> defined;  // [s][a]: N(s, a) > 0
  std::vector<std::int64_t> visits;   // N(s, a)
  JointTable pi_hat;

  bool is_defined(int s, int a) const { return defined[static_cast<size_t>(s) * pi_hat.n_joint + a] != 0; }
  double p(int s, int a, int s_next) const {
    return p_hat[(static_cast<size_t>(s) * pi_hat.n_joint + a) * n_states + s_next];
  }
};

// Throws EstimationError on an empty dataset.
EmpiricalModel estimate_empirical(const DemoDataset& demos);

struct GroupActionOnMG {
  std::vector<group::GroupElement> elements;
  std::vector<std::vector<int>> state_perm;   // [g][s]
  std::vector<std::vector<int>> action_perm;  // [g][joint_a]
  // Optional per-agent action permutation shared by all agents, [g][a_i].
  std::vector<std::vector<int>> agent_action_perm;

  size_t size() const { return elements.size(); }
  // Bijections, identity maps to identity, and perm(g o h) = perm(g) o perm(h).
  void validate() const;
};

// Identity-only action for an MG of the given shape.
GroupActionOnMG trivial_action(int n_states, int n_joint);

// D_n acting on a width x height grid world (cell centres symmetric about the
// origin) with per-agent actions {stay, +x, -x, +y, -y}. Throws when the grid
// is not closed under the group (non-square grid with a quarter-turn group).
GroupActionOnMG grid_symmetry(int width, int height, int n_agents, int group_order);
inline constexpr int kGridActions = 5;

DemoDataset augment_demos(const DemoDataset& demos, const GroupActionOnMG& action);

// Elementwise error-propagation bound with the realised empirical model.
// Undefined rows use the worst case |P - P_hat| <= 1.
JointTable error_bound(const TabularMG& mg_true, const JointTable& pi_E_true,
                       const EmpiricalModel& model, const FeasibleRewardParams& params);

// Same bound, but the per-row deviation |P - P_hat| is replaced by the
// count-based envelope min(1, c / sqrt(N(s, a))) (1 when unvisited).
JointTable envelope_bound(const TabularMG& mg_true, const JointTable& pi_E_true,
                          const EmpiricalModel& model, const FeasibleRewardParams& params,
                          double concentration);

struct InvarianceViolation {
  int element = 0;
  int s = 0;
  int a = 0;
  int s_next = -1;  // -1 for a policy violation
  double lhs = 0.0;
  double rhs = 0.0;
  std::string describe(const GroupActionOnMG& action) const;
};

std::optional<InvarianceViolation> find_invariance_violation(const TabularMG& mg, const JointTable& pi,
                                                             const GroupActionOnMG& action,
                                                             double tol = 1e-12);
bool check_g_invariance(const TabularMG& mg, const JointTable& pi, const GroupActionOnMG& action,
                        double tol = 1e-12);

// Orbit averages; the results satisfy the invariance equations by construction.
TabularMG symmetrize(const TabularMG& mg, const GroupActionOnMG& action);
JointTable symmetrize(const JointTable& pi, const GroupActionOnMG& action);

// s uniform, a ~ pi_E(.|s), s' ~ P(.|s, a).
DemoDataset sample_demos(const TabularMG& mg, const JointTable& pi_E, int count, std::mt19937_64& rng);

struct BoundCheckOptions {
  double concentration = 1.0;
  double tolerance = 1e-12;
};

struct BoundSeedResult {
  std::uint64_t seed = 0;
  JointTable delta;           // envelope bound: plain - augmented
  JointTable realized_delta;  // realised bound: plain - augmented (diagnostic)
  double min_delta = 0.0;
  double min_realized_delta = 0.0;
  int negative_realized_cells = 0;
  bool passed = true;
};

struct BoundCheckReport {
  int sample_size = 0;
  std::vector<BoundSeedResult> seeds;
  double min_delta = 0.0;
  int cells = 0;
  int failing_cells = 0;
  bool passed() const { return failing_cells == 0; }
};

// Checks invariance first (SymmetryViolationError naming the offending tuple),
// then per seed samples M tuples, estimates the plain and augmented models and
// compares both bounds under one shared (zeta, V).
BoundCheckReport verify_augmentation_bound(const TabularMG& mg, const JointTable& pi_E,
                                           const GroupActionOnMG& action, int sample_size,
                                           std::span<const std::uint64_t> seeds, const FeasibleRewardParams& params,
                                           const BoundCheckOptions& options = {});

// Random instances.
TabularMG random_mg(int n_states, std::vector<int> action_counts, double gamma, std::mt19937_64& rng,
                    double sparsity = 0.3);
JointPolicy random_policy(int n_states, std::vector<int> action_counts, std::mt19937_64& rng,
                          double zero_fraction = 0.3);
FeasibleRewardParams random_params(int n_states, int n_joint, std::mt19937_64& rng, double scale = 1.0);

// Symmetric per-agent policy: orbit-averaged with orbit-closed zero sets.
// Needs action.agent_action_perm.
JointPolicy random_symmetric_policy(int n_states, std::vector<int> action_counts,
                                    const GroupActionOnMG& action, std::mt19937_64& rng,
                                    double zero_fraction = 0.3);

// Plain-text serialization: header line with dims, then dense rows, doubles
// written with 17 significant digits so the round trip is exact.
void write_mg(std::ostream& out, const TabularMG& mg);
TabularMG read_mg(std::istream& in);
void write_demos(std::ostream& out, const DemoDataset& demos);
DemoDataset read_demos(std::istream& in);

}  // namespace sgf::tabular
