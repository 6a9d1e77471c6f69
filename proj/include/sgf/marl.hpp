#pragma once

// Generator side: Gaussian actors with a state-independent log-std, an
// egocentric centralised critic, rollout collection, GAE and clipped PPO.
//
// Each agent conditions on its egocentric encoding of the full global state
// (envs::agent_features). Actors are shared across agents by default.

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "sgf/adversarial.hpp"
#include "sgf/approx.hpp"
#include "sgf/demos.hpp"
#include "sgf/envs.hpp"

namespace sgf::marl {

using approx::Matrix;
using approx::Vector;

struct PolicyConfig {
  std::vector<int> hidden{64, 64};
  double init_log_std = -0.5;
  bool shared_actor = true;
};

class ActorCritic {
 public:
  ActorCritic() = default;
  ActorCritic(const envs::EnvSpec& spec, const PolicyConfig& config, Rng& rng);

  const envs::EnvSpec& spec() const { return spec_; }
  const PolicyConfig& config() const { return config_; }
  int n_agents() const { return spec_.n_agents; }

  std::vector<approx::Mlp>& actors() { return actors_; }
  const std::vector<approx::Mlp>& actors() const { return actors_; }
  const approx::Mlp& actor_for(int agent) const { return actors_[config_.shared_actor ? 0 : agent]; }
  int actor_index(int agent) const { return config_.shared_actor ? 0 : agent; }
  Vector& log_std() { return log_std_; }
  const Vector& log_std() const { return log_std_; }
  approx::Mlp& critic() { return critic_; }
  const approx::Mlp& critic() const { return critic_; }

  // Egocentric features, one column per agent.
  Matrix features(const envs::EnvState& s) const;
  // Action means (2 x N) and values (N).
  Matrix means(const Matrix& features) const;
  Vector values(const Matrix& features) const;

  // Samples (or takes the mean of) each agent's Gaussian. log_probs gets
  // log pi_i(a_i | s) of the returned raw actions.
  std::vector<envs::Vec2> act(const envs::EnvState& s, Rng& rng, bool deterministic, Vector* log_probs = nullptr) const;

  // log pi_i(a_i | s) for every agent and tuple (N x B), evaluated at the
  // stored (canonical) actions.
  Matrix log_prob_tuples(std::span<const demos::ContinuousTuple> batch) const;

  double entropy_per_agent() const;

  void save(approx::Checkpoint& ckpt) const;
  static ActorCritic load(const approx::Checkpoint& ckpt, const envs::EnvSpec& spec);

 private:
  envs::EnvSpec spec_;
  PolicyConfig config_;
  std::vector<approx::Mlp> actors_;
  Vector log_std_;
  approx::Mlp critic_;
};

// log N(a; mean, diag(exp(log_std))^2).
double gaussian_log_prob(const Vector& mean, const Vector& log_std, const Vector& a);

enum class RewardSource { kDiscriminator, kTrue };

// Samples are stored step-major: column t * N + i is agent i at step t.
struct RolloutBuffer {
  int n_agents = 0;
  int steps = 0;
  Matrix features;    // F x (steps * N)
  Matrix actions;     // 2 x (steps * N), raw sampled actions
  Vector log_probs;   // behaviour log-densities
  Vector values;      // V(s_t) per agent
  Vector next_values; // V(s_{t+1}) per agent (bootstrap at truncation)
  Vector rewards;     // training signal
  Vector true_rewards;
  std::vector<std::uint8_t> episode_end;  // per step: last step of an episode
  std::vector<demos::ContinuousTuple> tuples;  // per step, for discriminators
  std::vector<double> final_order;  // order parameter at each episode end (Vicsek)
  std::vector<double> episode_returns;  // true per-step reward summed per episode
  Vector advantages;
  Vector returns;
  RewardSource source = RewardSource::kTrue;

  size_t size() const { return static_cast<size_t>(steps) * n_agents; }
};

struct RolloutOptions {
  int episodes = 1;
  int episode_steps = 200;  // clamped to spec.max_steps
  bool deterministic = false;
};

// Runs `episodes` fresh episodes; reset seeds are drawn from rng. Rewards
// come from the true reward when discs is null, from the discriminators
// otherwise. episodes = 0 or episode_steps = 0 gives an empty buffer.
RolloutBuffer collect_rollouts(const ActorCritic& policy, const RolloutOptions& opts, Rng& rng,
                               const adversarial::DiscriminatorSet* discs = nullptr,
                               const adversarial::Encoder* enc = nullptr);

// Recomputes discriminator rewards for the stored tuples.
void label_rewards(RolloutBuffer& buf, const ActorCritic& policy, const adversarial::DiscriminatorSet& discs,
                   const adversarial::Encoder& enc);

// Single-trajectory GAE; trajectory_end[t] cuts the recursion after t.
Vector gae(const Vector& rewards, const Vector& values, const Vector& next_values,
           const std::vector<std::uint8_t>& trajectory_end, double gamma, double lambda);
// Fills buf.advantages and buf.returns agent by agent.
void compute_gae(RolloutBuffer& buf, double gamma, double lambda);

struct PpoConfig {
  double gamma = 0.99;
  double lambda = 0.95;
  double clip_eps = 0.2;
  int epochs = 10;
  int minibatch = 256;
  double actor_lr = 3e-4;
  double critic_lr = 1e-3;
  double value_coef = 0.5;
  double entropy_coef = 0.0;
  double max_grad_norm = 0.5;
  double min_log_std = -3.0;
  // Divide rewards by the running std of the discounted return.
  bool normalize_rewards = true;
};

struct PpoStats {
  double policy_loss = 0.0;
  double value_loss = 0.0;
  double entropy = 0.0;
  double clip_fraction = 0.0;
  double approx_kl = 0.0;
};

// Running variance of the discounted return (parallel Welford merge).
struct ReturnScaler {
  double count = 0.0;
  double mean = 0.0;
  double m2 = 0.0;

  // Updates the statistics with the discounted returns of `rewards` and
  // returns rewards / std.
  Vector scale(const Vector& rewards, int n_agents, const std::vector<std::uint8_t>& episode_end, double gamma);
  double stddev() const;
};

struct Optimizers {
  std::vector<approx::AdamState> actors;
  approx::AdamState log_std;
  approx::AdamState critic;
  ReturnScaler returns;

  Optimizers() = default;
  Optimizers(const ActorCritic& policy, const PpoConfig& config);
};

// Clipped surrogate (per sample): min(r A, clip(r, 1 - eps, 1 + eps) A).
double clipped_surrogate(double ratio, double advantage, double clip_eps);
// d surrogate / d ratio: A where the unclipped branch is active, else 0.
double clipped_surrogate_grad(double ratio, double advantage, double clip_eps);

struct ActorLoss {
  double value = 0.0;  // -mean clipped surrogate
  std::vector<Vector> actor_grads;  // one per actor network
  std::vector<int> actor_samples;   // samples that reached each actor
  Vector log_std_grad;
  double approx_kl = 0.0;
  double clip_fraction = 0.0;
};

// Clipped-surrogate loss over buffer columns `samples` and its gradient.
ActorLoss actor_loss(const ActorCritic& policy, const RolloutBuffer& buf, std::span<const Eigen::Index> samples,
                     const Vector& advantages, double clip_eps);
// value_coef * mean (V - R)^2 gradient into grad; returns the unscaled mean
// squared error.
double critic_loss(const ActorCritic& policy, const RolloutBuffer& buf, std::span<const Eigen::Index> samples,
                   double value_coef, Vector& grad);

// Throws std::logic_error if require_discriminator is set and the buffer's
// rewards did not come from discriminators.
PpoStats ppo_update(ActorCritic& policy, Optimizers& opt, RolloutBuffer& buf, const PpoConfig& config, Rng& rng,
                    bool require_discriminator = false);

struct EvalResult {
  std::vector<double> returns;      // true-reward episode returns
  std::vector<double> final_order;  // Vicsek only
  double mean_return = 0.0;
  double mean_final_order = 0.0;
};

EvalResult evaluate(const ActorCritic& policy, int episodes, int episode_steps, std::uint64_t seed,
                    bool deterministic);

}  // namespace sgf::marl
