#pragma once

// Continuous multi-agent tasks: Rendezvous, Pursuit (Voronoi prey) and
// Vicsek alignment. Arenas are centred on the origin so that D_4 rotations and
// reflections about the origin map the arena onto itself; Vicsek uses a
// periodic box [-L/2, L/2)^2.

#include <array>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "sgf/group.hpp"
#include "sgf/random.hpp"

namespace sgf::envs {

class InputError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct Vec2 {
  double x = 0.0;
  double y = 0.0;

  Vec2 operator+(Vec2 o) const { return {x + o.x, y + o.y}; }
  Vec2 operator-(Vec2 o) const { return {x - o.x, y - o.y}; }
  Vec2 operator*(double k) const { return {x * k, y * k}; }
  Vec2& operator+=(Vec2 o) {
    x += o.x;
    y += o.y;
    return *this;
  }
  friend bool operator==(const Vec2&, const Vec2&) = default;
};

double dot(Vec2 a, Vec2 b);
double norm(Vec2 v);
Vec2 clamp_norm(Vec2 v, double max_norm);
Vec2 apply(const group::GroupElement& g, Vec2 v);

enum class EnvKind { kRendezvous, kPursuit, kVicsek };

std::string_view env_name(EnvKind kind);
// "rendezvous" | "pursuit" | "vicsek"; throws std::invalid_argument otherwise.
EnvKind parse_env_name(std::string_view name);

enum class BlockKind { kEquivariant, kInvariant };

struct FeatureBlock {
  std::string name;
  BlockKind kind;
  int width;  // scalars in the block (pairs count twice)
};

struct EnvSpec {
  EnvKind kind = EnvKind::kRendezvous;
  int n_agents = 5;
  double arena_size = 4.0;  // m, side of the square
  double dt = 0.1;          // s
  int max_steps = 200;
  double max_accel = 1.0;  // m/s^2
  double max_speed = 1.0;  // m/s
  double prey_speed_ratio = 1.5;
  double vicsek_speed = 0.5;   // m/s
  double vicsek_radius = 2.0;  // m
  double vicsek_noise = 0.1;   // rad, full width of the uniform angular noise

  // scripted expert gains
  double rendezvous_gain = 1.0;
  double rendezvous_damping = 2.0;
  double pursuit_gain = 2.0;
  double pursuit_spread = 0.5;

  double half() const { return 0.5 * arena_size; }
  double prey_max_speed() const { return prey_speed_ratio * max_speed; }
  double prey_max_accel() const { return prey_speed_ratio * max_accel; }

  // Throws std::invalid_argument on nonpositive constants.
  void validate() const;

  // Layout of to_structured(): every slot appears in exactly one block.
  std::vector<FeatureBlock> state_blocks() const;
  int state_equ_size() const;
  int state_inv_size() const;

  // Width of agent_features().
  int feature_size() const;

  // Stable text identity of every field that changes dynamics or layout.
  std::string fingerprint() const;
};

EnvSpec make_spec(EnvKind kind, int n_agents = 5);

struct EnvState {
  std::vector<Vec2> positions;
  std::vector<Vec2> velocities;
  std::vector<Vec2> headings;  // Vicsek only, unit vectors
  Vec2 prey_position;          // Pursuit only
  Vec2 prey_velocity;
  int time_step = 0;

  friend bool operator==(const EnvState&, const EnvState&) = default;
};

group::StructuredVector to_structured(const EnvSpec& spec, const EnvState& state);
EnvState from_structured(const EnvSpec& spec, const group::StructuredVector& v);

// L_g on states. Vicsek positions are wrapped back into the box.
EnvState transform(const EnvSpec& spec, const group::GroupElement& g, const EnvState& state);

Vec2 wrap_periodic(const EnvSpec& spec, Vec2 p);
// Minimum-image displacement b - a in the periodic box.
Vec2 periodic_delta(const EnvSpec& spec, Vec2 a, Vec2 b);

EnvState reset(const EnvSpec& spec, std::uint64_t seed);

struct StepResult {
  EnvState state;
  std::vector<double> rewards;  // per agent, identical for these cooperative tasks
};

// Throws InputError on wrong action count or non-finite actions.
StepResult step(const EnvSpec& spec, const EnvState& state, std::span<const Vec2> joint_action);

// Ground-truth per-step reward of a state (the reward step() reports for the state it returns).
double true_reward(const EnvSpec& spec, const EnvState& state);

double order_parameter(const EnvState& state);
double mean_pairwise_distance(const EnvState& state);
double mean_prey_distance(const EnvState& state);

struct PreyDecision {
  Vec2 action;
  Vec2 cell_centroid;
  double cell_area = 0.0;
  bool used_fallback = false;
};

// Voronoi-cell centroid seeking with an away-from-nearest fallback when the
// centroid coincides with the prey.
PreyDecision prey_decision(const EnvSpec& spec, const EnvState& state);
Vec2 prey_policy(const EnvSpec& spec, const EnvState& state);

// Bounded Voronoi cell of `site` against `others`, clipped to the arena
// square; vertices in counter-clockwise order.
std::vector<Vec2> voronoi_cell(const EnvSpec& spec, Vec2 site, std::span<const Vec2> others);
Vec2 polygon_centroid(std::span<const Vec2> polygon, double* area = nullptr);

std::vector<Vec2> scripted_expert(const EnvSpec& spec, const EnvState& state, Rng& rng);

// The action the dynamics actually consume: unit direction for Vicsek,
// norm-clamped acceleration otherwise.
Vec2 canonical_action(const EnvSpec& spec, Vec2 action);

// Egocentric encoding for agent i built only from 2D blocks, so that
// agent_features(L_g s, i) = L_g agent_features(s, i).
void agent_features(const EnvSpec& spec, const EnvState& state, int agent, std::span<double> out);
std::vector<double> agent_features(const EnvSpec& spec, const EnvState& state, int agent);

}  // namespace sgf::envs
