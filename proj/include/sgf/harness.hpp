#pragma once

// Experiment configuration, the adversarial imitation training loop, run
// records (CSV metrics + summary), reward maps and SVG output.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "sgf/adversarial.hpp"
#include "sgf/demos.hpp"
#include "sgf/envs.hpp"
#include "sgf/marl.hpp"

namespace sgf::harness {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr int kConfigVersion = 1;

struct ExperimentConfig {
  std::string env = "rendezvous";
  int n_agents = 5;
  std::string algorithm = "ma-gail";  // ma-gail | ma-airl
  bool augment_expert = false;
  bool sad = false;
  bool sad_full_group = false;  // average the symmetric loss over the whole group
  int group_order = 4;

  int demos = 100;  // M
  int demo_episode_steps = 20;
  std::uint64_t expert_seed = 12345;
  std::string demo_file;  // empty: record the scripted expert in memory

  std::vector<std::uint64_t> seeds{1, 2, 3, 4, 5};
  int updates = 200;
  int rollout_episodes = 1;
  int episode_steps = 200;

  int disc_updates = 2;
  int disc_batch = 256;
  double disc_lr = 1e-3;
  std::vector<int> disc_hidden{64, 64};
  bool disc_shared = false;
  std::string disc_features = "equivariant";  // equivariant | invariant
  std::string gail_reward = "neglog1m";      // neglog1m | logit

  std::vector<int> policy_hidden{64, 64};
  double init_log_std = -0.5;
  bool shared_actor = true;
  double gamma = 0.99;
  double lambda = 0.95;
  double clip_eps = 0.2;
  int ppo_epochs = 10;
  int minibatch = 256;
  double actor_lr = 3e-4;
  double critic_lr = 1e-3;
  double entropy_coef = 0.0;
  bool normalize_rewards = true;

  int eval_episodes = 10;
  std::uint64_t eval_seed = 777;
  std::string output_dir = "runs/default";

  envs::EnvSpec env_spec() const;
  adversarial::Variant variant() const;
  adversarial::DiscriminatorConfig disc_config() const;
  marl::PolicyConfig policy_config() const;
  marl::PpoConfig ppo_config() const;
  std::vector<group::GroupElement> group_elements() const;

  // Throws ConfigError on out-of-range values.
  void validate() const;
};

// Flat "key = value" text; '#' starts a comment. config_version must be
// present and equal kConfigVersion.
ExperimentConfig parse_config(const std::string& text);
ExperimentConfig load_config(const std::filesystem::path& path);
// Applies one "key=value" override; throws ConfigError on unknown keys.
void apply_override(ExperimentConfig& config, const std::string& key, const std::string& value);
std::string dump_config(const ExperimentConfig& config);
std::vector<std::string> config_keys();

struct MetricsRow {
  std::uint64_t seed = 0;
  int update = 0;
  double true_return = 0.0;   // mean true-reward return of this update's rollouts
  double final_order = 0.0;   // Vicsek: mean order parameter at episode end
  double disc_loss = 0.0;
  double d_expert = 0.0;      // mean D on the expert batch
  double d_generator = 0.0;   // mean D on the generator batch
  double policy_loss = 0.0;
  double value_loss = 0.0;
  double entropy = 0.0;
  double approx_kl = 0.0;
  std::string timestamp;      // wall clock, excluded from reproducibility checks
};

std::string metrics_header();
std::string format_row(const MetricsRow& row);
MetricsRow parse_row(const std::string& line);

struct SeedResult {
  std::uint64_t seed = 0;
  std::vector<MetricsRow> rows;
  marl::EvalResult eval;     // deterministic evaluation of the final policy
  double convergence = 0.0;  // mean true_return over the final 10% of updates
  approx::Checkpoint checkpoint;
};

struct Summary {
  std::string metric;
  std::vector<double> per_seed;
  double mean = 0.0;
  double stddev = 0.0;  // population std over seeds
};

Summary summarize(const std::string& metric, const std::vector<double>& per_seed);

// Mean of the last ceil(10%) values.
double tail_mean(const std::vector<double>& values);

struct RunRecord {
  ExperimentConfig config;
  std::vector<SeedResult> seeds;
  Summary final_return;
  Summary final_order;
  Summary convergence;
};

using ProgressFn = std::function<void(const MetricsRow&)>;

// Adversarial imitation for one seed: rollouts, discriminator steps, reward
// relabelling, PPO. `expert` must match config.env_spec().
SeedResult train_seed(const ExperimentConfig& config, const demos::DemoStore& expert, std::uint64_t seed,
                      const ProgressFn& progress = nullptr);

// Expert demos per config: loads demo_file or records the scripted expert.
demos::DemoStore expert_demos(const ExperimentConfig& config);

// All seeds; writes config.txt, metrics.csv, summary.txt and one checkpoint
// per seed into config.output_dir when write_files is set.
RunRecord train(const ExperimentConfig& config, bool write_files, const ProgressFn& progress = nullptr);

void write_summary(const RunRecord& record, const std::filesystem::path& path);

// Re-derives the per-seed convergence values and their summary from
// metrics.csv and compares with summary.txt. Returns a list of problems
// (empty when consistent).
std::vector<std::string> verify_record(const std::filesystem::path& run_dir);

struct RewardMap {
  int resolution = 0;
  double extent = 0.0;        // accelerations span [-extent, extent]^2
  std::vector<double> values; // row-major, row = y index, column = x index
  envs::Vec2 argmax;
};

// Reward estimate over a grid of accelerations for one agent while the
// others take zero action. airl only: the value is the recovered
// f(s, a_i, s'); include_policy_term subtracts log pi_i(a_i | s) as well.
RewardMap reward_map(const adversarial::DiscriminatorSet& discs, const adversarial::Encoder& enc,
                     const marl::ActorCritic* policy, const envs::EnvState& state, int agent, int resolution,
                     bool include_policy_term = false);

// Agent farthest from the swarm centroid.
int farthest_from_centroid(const envs::EnvState& state);

std::string heatmap_svg(const RewardMap& map, const std::string& title);
std::string line_plot_svg(const std::vector<std::pair<std::string, std::vector<double>>>& series,
                          const std::string& title, const std::string& y_label);

// Loads the "seed<k>.ckpt" checkpoint written by train().
approx::Checkpoint load_seed_checkpoint(const std::filesystem::path& run_dir, std::uint64_t seed);

}  // namespace sgf::harness
