#pragma once

// Per-agent discriminators for adversarial imitation (GAIL logit nets and
// AIRL f = g(s, a_i) + gamma h(s') - h(s)), the cross-entropy losses on plain
// and group-transformed batches, and the reward signal handed to the
// generator.

#include <functional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "sgf/approx.hpp"
#include "sgf/demos.hpp"
#include "sgf/envs.hpp"
#include "sgf/group.hpp"

namespace sgf::adversarial {

using approx::Matrix;
using approx::Vector;

class DiscriminatorError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

enum class Variant { kGail, kAirl };
std::string variant_name(Variant v);
Variant parse_variant(const std::string& name);  // "gail" | "airl"

// kInvariant reduces every input to the Gram matrix of its 2D blocks, which
// makes the discriminator exactly D_n invariant.
enum class FeatureMode { kEquivariant, kInvariant };

// GAIL generator reward: -log(1 - D) or log D - log(1 - D).
enum class GailReward { kNegLogOneMinusD, kLogit };

inline constexpr double kProbFloor = 1e-12;
inline constexpr double kRewardClamp = 20.0;

// Encoded network inputs for one agent, one column per tuple.
struct AgentInputs {
  Matrix sas;     // gail: [s, a_i, s']
  Matrix sa;      // airl: [s, a_i]
  Matrix s;       // airl: s
  Matrix s_next;  // airl: s'
};

class Encoder {
 public:
  Encoder(envs::EnvSpec spec, Variant variant, FeatureMode mode);

  const envs::EnvSpec& spec() const { return spec_; }
  Variant variant() const { return variant_; }
  FeatureMode mode() const { return mode_; }

  int sas_width() const;
  int sa_width() const;
  int s_width() const;

  // One AgentInputs per agent.
  std::vector<AgentInputs> encode(std::span<const demos::ContinuousTuple> batch) const;

 private:
  int width_for_blocks(int blocks) const;
  void put(std::span<const double> equ, Matrix& m, Eigen::Index col) const;

  envs::EnvSpec spec_;
  Variant variant_;
  FeatureMode mode_;
};

struct DiscriminatorConfig {
  Variant variant = Variant::kGail;
  FeatureMode features = FeatureMode::kEquivariant;
  std::vector<int> hidden{64, 64};
  double gamma = 0.99;
  bool shared = false;  // one discriminator for all agents
  GailReward gail_reward = GailReward::kNegLogOneMinusD;
};

// One agent's discriminator. Parameters are [net, h] concatenated.
struct Discriminator {
  Variant variant = Variant::kGail;
  double gamma = 0.99;
  approx::Mlp net;  // gail logit, or airl g(s, a)
  approx::Mlp h;    // airl shaping potential

  Eigen::Index num_params() const;
  Vector params() const;
  void set_params(const Vector& p);

  // gail: logit; airl: f(s, a_i, s').
  Vector score(const AgentInputs& in) const;
  // Adds dLoss/dparams for dLoss/dscore = score_grad.
  void backward(const AgentInputs& in, const Vector& score_grad, Vector& grad) const;
};

class DiscriminatorSet {
 public:
  DiscriminatorSet() = default;
  DiscriminatorSet(const DiscriminatorConfig& config, const Encoder& encoder, Rng& rng);

  const DiscriminatorConfig& config() const { return config_; }
  int n_agents() const { return n_agents_; }
  // Unshared: one per agent. Shared: a single entry.
  std::vector<Discriminator>& discs() { return discs_; }
  const std::vector<Discriminator>& discs() const { return discs_; }
  const Discriminator& for_agent(int i) const { return discs_[config_.shared ? 0 : i]; }
  int index_for_agent(int i) const { return config_.shared ? 0 : i; }

 private:
  DiscriminatorConfig config_;
  int n_agents_ = 0;
  std::vector<Discriminator> discs_;
};

// log pi_i(a_i | s) of the generator for every agent and tuple (N x B).
// Required for airl, ignored for gail.
using LogProbFn = std::function<Matrix(std::span<const demos::ContinuousTuple>)>;

// log D - log(1 - D) before clamping: gail score, airl f - log pi.
double logit_from(Variant v, double score, double log_pi);

// D in [kProbFloor, 1 - kProbFloor]. Throws DiscriminatorError for airl
// without log_pi.
double d_prob(Variant v, double score, const double* log_pi);
Vector d_prob(const Discriminator& d, const AgentInputs& in, const Vector* log_pi);

// Generator reward: airl f - log pi (unclamped); gail per GailReward,
// clamped to [-20, 20].
double reward_from(Variant v, GailReward mode, double score, double log_pi);
Vector reward_signal(const Discriminator& d, GailReward mode, const AgentInputs& in, const Vector* log_pi);

struct LossResult {
  double value = 0.0;
  std::vector<Vector> grads;  // one per entry of DiscriminatorSet::discs()
};

LossResult& operator+=(LossResult& a, const LossResult& b);

// Cross-entropy, mean over each batch and summed over agents.
LossResult loss_plain(const DiscriminatorSet& discs, const Encoder& enc,
                      std::span<const demos::ContinuousTuple> expert,
                      std::span<const demos::ContinuousTuple> generated, const LogProbFn& log_pi);

// loss_plain on both batches transformed by g.
LossResult loss_symmetric(const DiscriminatorSet& discs, const Encoder& enc,
                          std::span<const demos::ContinuousTuple> expert,
                          std::span<const demos::ContinuousTuple> generated, const LogProbFn& log_pi,
                          const group::GroupElement& g);

// Average of loss_symmetric over all supplied elements.
LossResult loss_symmetric_full(const DiscriminatorSet& discs, const Encoder& enc,
                               std::span<const demos::ContinuousTuple> expert,
                               std::span<const demos::ContinuousTuple> generated, const LogProbFn& log_pi,
                               std::span<const group::GroupElement> elements);

// loss_plain + loss_symmetric.
LossResult loss_sgf(const DiscriminatorSet& discs, const Encoder& enc,
                    std::span<const demos::ContinuousTuple> expert,
                    std::span<const demos::ContinuousTuple> generated, const LogProbFn& log_pi,
                    const group::GroupElement& g);

std::vector<demos::ContinuousTuple> transform_batch(const group::GroupElement& g,
                                                    std::span<const demos::ContinuousTuple> batch);

// Per-agent reward signals (N x B) for a batch of generator tuples.
Matrix batch_rewards(const DiscriminatorSet& discs, const Encoder& enc,
                     std::span<const demos::ContinuousTuple> batch, const LogProbFn& log_pi);

void save_discriminators(approx::Checkpoint& ckpt, const DiscriminatorSet& discs);
// Restores parameters into `discs`, which must already have the saved shape.
void load_discriminators(const approx::Checkpoint& ckpt, DiscriminatorSet& discs);

}  // namespace sgf::adversarial
