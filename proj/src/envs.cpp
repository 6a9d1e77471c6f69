#include "sgf/envs.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <sstream>

namespace sgf::envs {

double dot(Vec2 a, Vec2 b) { return a.x * b.x + a.y * b.y; }
double norm(Vec2 v) { return std::hypot(v.x, v.y); }

Vec2 clamp_norm(Vec2 v, double max_norm) {
  const double n = norm(v);
  if (n <= max_norm) return v;
  return v * (max_norm / n);
}

Vec2 apply(const group::GroupElement& g, Vec2 v) {
  if (g.is_identity()) return v;
  const auto m = group::matrix(g);
  return {m[0] * v.x + m[1] * v.y, m[2] * v.x + m[3] * v.y};
}

std::string_view env_name(EnvKind kind) {
  switch (kind) {
    case EnvKind::kRendezvous: return "rendezvous";
    case EnvKind::kPursuit: return "pursuit";
    case EnvKind::kVicsek: return "vicsek";
  }
  return "unknown";
}

EnvKind parse_env_name(std::string_view name) {
  if (name == "rendezvous") return EnvKind::kRendezvous;
  if (name == "pursuit") return EnvKind::kPursuit;
  if (name == "vicsek") return EnvKind::kVicsek;
  throw std::invalid_argument("unknown environment '" + std::string(name) + "'");
}

void EnvSpec::validate() const {
  auto positive = [](double v, const char* what) {
    if (!(v > 0.0) || !std::isfinite(v)) throw std::invalid_argument(std::string(what) + " must be positive");
  };
  if (n_agents < 1) throw std::invalid_argument("n_agents must be positive");
  if (kind != EnvKind::kPursuit && n_agents < 2) throw std::invalid_argument("swarm tasks need >= 2 agents");
  if (max_steps < 1) throw std::invalid_argument("max_steps must be positive");
  positive(arena_size, "arena_size");
  positive(dt, "dt");
  positive(max_accel, "max_accel");
  positive(max_speed, "max_speed");
  positive(prey_speed_ratio, "prey_speed_ratio");
  positive(vicsek_speed, "vicsek_speed");
  positive(vicsek_radius, "vicsek_radius");
  if (!(vicsek_noise >= 0.0)) throw std::invalid_argument("vicsek_noise must be nonnegative");
}

std::vector<FeatureBlock> EnvSpec::state_blocks() const {
  std::vector<FeatureBlock> b;
  b.push_back({"positions", BlockKind::kEquivariant, 2 * n_agents});
  b.push_back({"velocities", BlockKind::kEquivariant, 2 * n_agents});
  if (kind == EnvKind::kPursuit) {
    b.push_back({"prey_position", BlockKind::kEquivariant, 2});
    b.push_back({"prey_velocity", BlockKind::kEquivariant, 2});
  }
  if (kind == EnvKind::kVicsek) b.push_back({"headings", BlockKind::kEquivariant, 2 * n_agents});
  b.push_back({"time_step", BlockKind::kInvariant, 1});
  return b;
}

int EnvSpec::state_equ_size() const {
  int total = 0;
  for (const auto& b : state_blocks()) total += b.kind == BlockKind::kEquivariant ? b.width : 0;
  return total;
}

int EnvSpec::state_inv_size() const {
  int total = 0;
  for (const auto& b : state_blocks()) total += b.kind == BlockKind::kInvariant ? b.width : 0;
  return total;
}

int EnvSpec::feature_size() const {
  switch (kind) {
    case EnvKind::kRendezvous: return 4 * n_agents;
    case EnvKind::kPursuit: return 4 * n_agents + 4;
    case EnvKind::kVicsek: return 2 + 4 * (n_agents - 1);
  }
  return 0;
}

std::string EnvSpec::fingerprint() const {
  std::ostringstream os;
  os.precision(17);
  os << env_name(kind) << ";n=" << n_agents << ";L=" << arena_size << ";dt=" << dt << ";T=" << max_steps
     << ";amax=" << max_accel << ";vmax=" << max_speed << ";prey=" << prey_speed_ratio
     << ";v0=" << vicsek_speed << ";rho=" << vicsek_radius << ";eta=" << vicsek_noise;
  return os.str();
}

EnvSpec make_spec(EnvKind kind, int n_agents) {
  EnvSpec spec;
  spec.kind = kind;
  spec.n_agents = n_agents;
  spec.validate();
  return spec;
}

group::StructuredVector to_structured(const EnvSpec& spec, const EnvState& state) {
  group::StructuredVector v;
  v.equ.reserve(spec.state_equ_size());
  auto push = [&](Vec2 p) {
    v.equ.push_back(p.x);
    v.equ.push_back(p.y);
  };
  for (const auto& p : state.positions) push(p);
  for (const auto& p : state.velocities) push(p);
  if (spec.kind == EnvKind::kPursuit) {
    push(state.prey_position);
    push(state.prey_velocity);
  }
  if (spec.kind == EnvKind::kVicsek) {
    for (const auto& h : state.headings) push(h);
  }
  v.inv.push_back(static_cast<double>(state.time_step));
  return v;
}

EnvState from_structured(const EnvSpec& spec, const group::StructuredVector& v) {
  if (static_cast<int>(v.equ.size()) != spec.state_equ_size() ||
      static_cast<int>(v.inv.size()) != spec.state_inv_size()) {
    throw group::StructureError("structured state does not match the environment layout");
  }
  EnvState s;
  size_t k = 0;
  auto pop = [&]() {
    Vec2 p{v.equ[k], v.equ[k + 1]};
    k += 2;
    return p;
  };
  const int n = spec.n_agents;
  for (int i = 0; i < n; ++i) s.positions.push_back(pop());
  for (int i = 0; i < n; ++i) s.velocities.push_back(pop());
  if (spec.kind == EnvKind::kPursuit) {
    s.prey_position = pop();
    s.prey_velocity = pop();
  }
  if (spec.kind == EnvKind::kVicsek) {
    for (int i = 0; i < n; ++i) s.headings.push_back(pop());
  }
  s.time_step = static_cast<int>(v.inv[0]);
  return s;
}

Vec2 wrap_periodic(const EnvSpec& spec, Vec2 p) {
  const double L = spec.arena_size;
  const double h = spec.half();
  auto wrap = [&](double x) {
    double w = x - L * std::floor((x + h) / L);
    if (w >= h) w -= L;  // guards the rounding edge of floor()
    if (w < -h) w += L;
    return w;
  };
  return {wrap(p.x), wrap(p.y)};
}

Vec2 periodic_delta(const EnvSpec& spec, Vec2 a, Vec2 b) {
  const double L = spec.arena_size;
  auto nearest = [&](double d) { return d - L * std::round(d / L); };
  return {nearest(b.x - a.x), nearest(b.y - a.y)};
}

EnvState transform(const EnvSpec& spec, const group::GroupElement& g, const EnvState& state) {
  EnvState out = state;
  for (auto& p : out.positions) p = apply(g, p);
  for (auto& v : out.velocities) v = apply(g, v);
  for (auto& h : out.headings) h = apply(g, h);
  out.prey_position = apply(g, out.prey_position);
  out.prey_velocity = apply(g, out.prey_velocity);
  if (spec.kind == EnvKind::kVicsek) {
    for (auto& p : out.positions) p = wrap_periodic(spec, p);
  }
  return out;
}

EnvState reset(const EnvSpec& spec, std::uint64_t seed) {
  spec.validate();
  Rng rng(seed);
  const double h = spec.half();
  EnvState s;
  s.positions.resize(spec.n_agents);
  s.velocities.assign(spec.n_agents, Vec2{});
  for (auto& p : s.positions) {
    p.x = uniform(rng, -h, h);
    p.y = uniform(rng, -h, h);
  }
  if (spec.kind == EnvKind::kPursuit) {
    s.prey_position = {uniform(rng, -h, h), uniform(rng, -h, h)};
  }
  if (spec.kind == EnvKind::kVicsek) {
    s.headings.resize(spec.n_agents);
    for (int i = 0; i < spec.n_agents; ++i) {
      const double theta = uniform(rng, -std::numbers::pi, std::numbers::pi);
      s.headings[i] = {std::cos(theta), std::sin(theta)};
      s.velocities[i] = s.headings[i] * spec.vicsek_speed;
    }
  }
  return s;
}

double order_parameter(const EnvState& state) {
  if (state.headings.empty()) return 0.0;
  Vec2 sum;
  for (const auto& h : state.headings) sum += h;
  return std::min(1.0, norm(sum) / static_cast<double>(state.headings.size()));
}

double mean_pairwise_distance(const EnvState& state) {
  const size_t n = state.positions.size();
  if (n < 2) return 0.0;
  double total = 0.0;
  for (size_t i = 0; i < n; ++i) {
    for (size_t j = i + 1; j < n; ++j) total += norm(state.positions[i] - state.positions[j]);
  }
  return total / static_cast<double>(n * (n - 1) / 2);
}

double mean_prey_distance(const EnvState& state) {
  double total = 0.0;
  for (const auto& p : state.positions) total += norm(p - state.prey_position);
  return total / static_cast<double>(state.positions.size());
}

double true_reward(const EnvSpec& spec, const EnvState& state) {
  switch (spec.kind) {
    case EnvKind::kRendezvous: return -mean_pairwise_distance(state);
    case EnvKind::kPursuit: return -mean_prey_distance(state);
    case EnvKind::kVicsek: return order_parameter(state);
  }
  return 0.0;
}

namespace {

// Double integrator inside the closed arena; hitting a wall stops motion
// along that axis.
void integrate(const EnvSpec& spec, Vec2& p, Vec2& v, Vec2 accel, double max_accel, double max_speed) {
  const Vec2 a = clamp_norm(accel, max_accel);
  p += v * spec.dt;
  v = clamp_norm(v + a * spec.dt, max_speed);
  const double h = spec.half();
  if (p.x > h) p.x = h, v.x = 0.0;
  if (p.x < -h) p.x = -h, v.x = 0.0;
  if (p.y > h) p.y = h, v.y = 0.0;
  if (p.y < -h) p.y = -h, v.y = 0.0;
}

}  // namespace

StepResult step(const EnvSpec& spec, const EnvState& state, std::span<const Vec2> joint_action) {
  if (static_cast<int>(joint_action.size()) != spec.n_agents) {
    throw InputError("expected " + std::to_string(spec.n_agents) + " actions, got " +
                     std::to_string(joint_action.size()));
  }
  for (const auto& a : joint_action) {
    if (!std::isfinite(a.x) || !std::isfinite(a.y)) throw InputError("non-finite action");
  }
  StepResult out;
  EnvState& next = out.state;
  next = state;
  next.time_step = state.time_step + 1;

  switch (spec.kind) {
    case EnvKind::kRendezvous:
      for (int i = 0; i < spec.n_agents; ++i) {
        integrate(spec, next.positions[i], next.velocities[i], joint_action[i], spec.max_accel, spec.max_speed);
      }
      break;
    case EnvKind::kPursuit: {
      const Vec2 prey_action = prey_policy(spec, state);
      for (int i = 0; i < spec.n_agents; ++i) {
        integrate(spec, next.positions[i], next.velocities[i], joint_action[i], spec.max_accel, spec.max_speed);
      }
      integrate(spec, next.prey_position, next.prey_velocity, prey_action, spec.prey_max_accel(),
                spec.prey_max_speed());
      break;
    }
    case EnvKind::kVicsek:
      for (int i = 0; i < spec.n_agents; ++i) {
        const double n = norm(joint_action[i]);
        if (n > 1e-12) next.headings[i] = joint_action[i] * (1.0 / n);
        next.velocities[i] = next.headings[i] * spec.vicsek_speed;
        next.positions[i] = wrap_periodic(spec, next.positions[i] + next.velocities[i] * spec.dt);
      }
      break;
  }
  out.rewards.assign(spec.n_agents, true_reward(spec, next));
  return out;
}

std::vector<Vec2> voronoi_cell(const EnvSpec& spec, Vec2 site, std::span<const Vec2> others) {
  const double h = spec.half();
  std::vector<Vec2> poly{{-h, -h}, {h, -h}, {h, h}, {-h, h}};
  std::vector<Vec2> clipped;
  for (const auto& o : others) {
    const Vec2 n = o - site;  // keep points with (x - mid) . n <= 0
    if (norm(n) < 1e-12) continue;
    const Vec2 mid = (site + o) * 0.5;
    auto side = [&](Vec2 x) { return dot(x - mid, n); };
    clipped.clear();
    for (size_t k = 0; k < poly.size(); ++k) {
      const Vec2 a = poly[k];
      const Vec2 b = poly[(k + 1) % poly.size()];
      const double sa = side(a), sb = side(b);
      if (sa <= 0.0) clipped.push_back(a);
      if ((sa < 0.0 && sb > 0.0) || (sa > 0.0 && sb < 0.0)) {
        const double t = sa / (sa - sb);
        clipped.push_back(a + (b - a) * t);
      }
    }
    poly.swap(clipped);
    if (poly.empty()) break;
  }
  return poly;
}

Vec2 polygon_centroid(std::span<const Vec2> polygon, double* area) {
  double a2 = 0.0;
  Vec2 c;
  const size_t n = polygon.size();
  for (size_t k = 0; k < n; ++k) {
    const Vec2 p = polygon[k];
    const Vec2 q = polygon[(k + 1) % n];
    const double cross = p.x * q.y - q.x * p.y;
    a2 += cross;
    c.x += (p.x + q.x) * cross;
    c.y += (p.y + q.y) * cross;
  }
  if (area) *area = 0.5 * a2;
  if (std::abs(a2) < 1e-300) {
    Vec2 mean;
    for (const auto& p : polygon) mean += p;
    return n ? mean * (1.0 / static_cast<double>(n)) : mean;
  }
  return c * (1.0 / (3.0 * a2));
}

PreyDecision prey_decision(const EnvSpec& spec, const EnvState& state) {
  PreyDecision d;
  const Vec2 prey = state.prey_position;
  const auto cell = voronoi_cell(spec, prey, state.positions);
  d.cell_centroid = polygon_centroid(cell, &d.cell_area);
  Vec2 dir = d.cell_centroid - prey;
  const double scale = 1e-9 * spec.arena_size;
  if (cell.size() < 3 || norm(dir) <= scale) {
    d.used_fallback = true;
    double nearest = std::numeric_limits<double>::infinity();
    for (const auto& p : state.positions) nearest = std::min(nearest, norm(prey - p));
    dir = {};
    // Sum over all (near-)tied nearest predators keeps the rule symmetric.
    for (const auto& p : state.positions) {
      const double dist = norm(prey - p);
      if (dist <= nearest + scale && dist > 0.0) dir += (prey - p) * (1.0 / dist);
    }
  }
  const double n = norm(dir);
  d.action = n > 1e-12 ? dir * (spec.prey_max_accel() / n) : Vec2{};
  return d;
}

Vec2 prey_policy(const EnvSpec& spec, const EnvState& state) { return prey_decision(spec, state).action; }

std::vector<Vec2> scripted_expert(const EnvSpec& spec, const EnvState& state, Rng& rng) {
  const int n = spec.n_agents;
  std::vector<Vec2> actions(n);
  switch (spec.kind) {
    case EnvKind::kRendezvous: {
      Vec2 c;
      for (const auto& p : state.positions) c += p;
      c = c * (1.0 / n);
      for (int i = 0; i < n; ++i) {
        const Vec2 a = (c - state.positions[i]) * spec.rendezvous_gain - state.velocities[i] * spec.rendezvous_damping;
        actions[i] = clamp_norm(a, spec.max_accel);
      }
      break;
    }
    case EnvKind::kPursuit: {
      for (int i = 0; i < n; ++i) {
        const Vec2 to_prey = state.prey_position - state.positions[i];
        const double dist = norm(to_prey);
        const Vec2 u = dist > 1e-12 ? to_prey * (1.0 / dist) : Vec2{};
        Vec2 push;
        for (int j = 0; j < n; ++j) {
          if (j == i) continue;
          const Vec2 d = state.positions[i] - state.positions[j];
          const double d2 = dot(d, d);
          if (d2 > 1e-12) push += d * (1.0 / d2);
        }
        const Vec2 tangential = push - u * dot(push, u);
        const Vec2 desired = u * spec.max_speed + tangential * spec.pursuit_spread;
        actions[i] = clamp_norm((desired - state.velocities[i]) * spec.pursuit_gain, spec.max_accel);
      }
      break;
    }
    case EnvKind::kVicsek: {
      const double r2 = spec.vicsek_radius * spec.vicsek_radius;
      for (int i = 0; i < n; ++i) {
        Vec2 mean;
        for (int j = 0; j < n; ++j) {
          const Vec2 d = periodic_delta(spec, state.positions[i], state.positions[j]);
          if (dot(d, d) <= r2) mean += state.headings[j];
        }
        const double m = norm(mean);
        Vec2 dir = m > 1e-12 ? mean * (1.0 / m) : state.headings[i];
        if (spec.vicsek_noise > 0.0) {
          const double xi = uniform(rng, -0.5, 0.5) * spec.vicsek_noise;
          const double c = std::cos(xi), s = std::sin(xi);
          dir = {c * dir.x - s * dir.y, s * dir.x + c * dir.y};
        }
        actions[i] = dir;
      }
      break;
    }
  }
  return actions;
}

Vec2 canonical_action(const EnvSpec& spec, Vec2 action) {
  if (spec.kind == EnvKind::kVicsek) {
    const double n = norm(action);
    return n > 1e-12 ? action * (1.0 / n) : Vec2{};
  }
  return clamp_norm(action, spec.max_accel);
}

void agent_features(const EnvSpec& spec, const EnvState& state, int agent, std::span<double> out) {
  size_t k = 0;
  auto push = [&](Vec2 v) {
    out[k++] = v.x;
    out[k++] = v.y;
  };
  const int n = spec.n_agents;
  switch (spec.kind) {
    case EnvKind::kRendezvous:
    case EnvKind::kPursuit: {
      const Vec2 p = state.positions[agent];
      const Vec2 v = state.velocities[agent];
      push(p);
      push(v);
      if (spec.kind == EnvKind::kPursuit) {
        push(state.prey_position - p);
        push(state.prey_velocity - v);
      }
      for (int j = 0; j < n; ++j) {
        if (j == agent) continue;
        push(state.positions[j] - p);
        push(state.velocities[j] - v);
      }
      break;
    }
    case EnvKind::kVicsek: {
      push(state.headings[agent]);
      for (int j = 0; j < n; ++j) {
        if (j == agent) continue;
        push(periodic_delta(spec, state.positions[agent], state.positions[j]));
        push(state.headings[j]);
      }
      break;
    }
  }
}

std::vector<double> agent_features(const EnvSpec& spec, const EnvState& state, int agent) {
  std::vector<double> out(spec.feature_size());
  agent_features(spec, state, agent, out);
  return out;
}

}  // namespace sgf::envs
