#include "sgf/tabular.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <istream>
#include <limits>
#include <numeric>
#include <ostream>
#include <sstream>

#include "sgf/random.hpp"

namespace sgf::tabular {

namespace {

size_t idx(int s, int a, int n_joint) { return static_cast<size_t>(s) * n_joint + a; }

void require_shape(const JointTable& t, int n_states, int n_joint, const char* what) {
  if (t.n_states != n_states || t.n_joint != n_joint ||
      t.values.size() != static_cast<size_t>(n_states) * n_joint) {
    throw DomainError(std::string(what) + ": table shape does not match the game");
  }
}

}  // namespace

int joint_action_count(std::span<const int> action_counts) {
  int total = 1;
  for (int c : action_counts) total *= c;
  return total;
}

int encode_joint(std::span<const int> actions, std::span<const int> action_counts) {
  if (actions.size() != action_counts.size()) throw DomainError("joint action arity mismatch");
  int code = 0;
  for (size_t i = actions.size(); i-- > 0;) {
    if (actions[i] < 0 || actions[i] >= action_counts[i]) throw DomainError("agent action out of range");
    code = code * action_counts[i] + actions[i];
  }
  return code;
}

std::vector<int> decode_joint(int joint, std::span<const int> action_counts) {
  std::vector<int> out(action_counts.size());
  for (size_t i = 0; i < action_counts.size(); ++i) {
    out[i] = joint % action_counts[i];
    joint /= action_counts[i];
  }
  return out;
}

TabularMG::TabularMG(int states, std::vector<int> counts, double discount)
    : n_states(states), action_counts(std::move(counts)), gamma(discount) {
  transition.assign(static_cast<size_t>(n_states) * n_joint() * n_states, 0.0);
}

void TabularMG::validate() const {
  if (!(gamma >= 0.0 && gamma < 1.0)) throw DomainError("gamma must lie in [0, 1)");
  const int nj = n_joint();
  if (transition.size() != static_cast<size_t>(n_states) * nj * n_states) {
    throw DomainError("transition tensor has wrong size");
  }
  for (int s = 0; s < n_states; ++s) {
    for (int a = 0; a < nj; ++a) {
      double sum = 0.0;
      for (double p : row(s, a)) {
        if (!(p >= 0.0)) throw DomainError("negative or NaN transition probability");
        sum += p;
      }
      if (std::abs(sum - 1.0) > 1e-12) {
        throw DomainError("transition row (" + std::to_string(s) + ", " + std::to_string(a) +
                          ") sums to " + std::to_string(sum));
      }
    }
  }
}

JointTable JointPolicy::joint() const {
  const int nj = joint_action_count(action_counts);
  JointTable out(n_states, nj);
  for (int s = 0; s < n_states; ++s) {
    for (int a = 0; a < nj; ++a) {
      const auto parts = decode_joint(a, action_counts);
      double p = 1.0;
      for (size_t i = 0; i < parts.size(); ++i) p *= agent_prob(static_cast<int>(i), s, parts[i]);
      out(s, a) = p;
    }
  }
  return out;
}

void JointPolicy::validate() const {
  if (per_agent.size() != action_counts.size()) throw DomainError("policy agent count mismatch");
  for (size_t i = 0; i < per_agent.size(); ++i) {
    const int c = action_counts[i];
    if (per_agent[i].size() != static_cast<size_t>(n_states) * c) throw DomainError("policy table size");
    for (int s = 0; s < n_states; ++s) {
      double sum = 0.0;
      for (int a = 0; a < c; ++a) {
        const double p = agent_prob(static_cast<int>(i), s, a);
        if (!(p >= 0.0)) throw DomainError("negative policy probability");
        sum += p;
      }
      if (std::abs(sum - 1.0) > 1e-12) throw DomainError("policy row does not sum to 1");
    }
  }
}

Evaluation policy_evaluation(const TabularMG& mg, const JointTable& reward, const JointTable& pi,
                             const EvaluationOptions& options) {
  const int S = mg.n_states;
  const int A = mg.n_joint();
  require_shape(reward, S, A, "policy_evaluation reward");
  require_shape(pi, S, A, "policy_evaluation policy");
  for (double r : reward.values) {
    if (!std::isfinite(r)) throw DomainError("reward must be finite");
  }

  // Collapse onto the state chain induced by pi.
  std::vector<double> r_pi(S, 0.0);
  std::vector<double> p_pi(static_cast<size_t>(S) * S, 0.0);
  for (int s = 0; s < S; ++s) {
    for (int a = 0; a < A; ++a) {
      const double w = pi(s, a);
      if (w == 0.0) continue;
      r_pi[s] += w * reward(s, a);
      const auto row = mg.row(s, a);
      for (int t = 0; t < S; ++t) p_pi[static_cast<size_t>(s) * S + t] += w * row[t];
    }
  }

  std::vector<double> V(S, 0.0), next(S, 0.0);
  double residual = 0.0;
  int it = 0;
  for (; it < options.max_iterations; ++it) {
    residual = 0.0;
    double scale = 1.0;
    for (int s = 0; s < S; ++s) {
      double acc = 0.0;
      for (int t = 0; t < S; ++t) acc += p_pi[static_cast<size_t>(s) * S + t] * V[t];
      next[s] = r_pi[s] + mg.gamma * acc;
      residual = std::max(residual, std::abs(next[s] - V[s]));
      scale = std::max(scale, std::abs(next[s]));
    }
    V.swap(next);
    if (residual <= options.residual_target * scale) break;
  }
  if (it == options.max_iterations) {
    throw NumericError("policy evaluation did not converge", residual);
  }

  Evaluation out;
  out.Q = JointTable(S, A);
  for (int s = 0; s < S; ++s) {
    for (int a = 0; a < A; ++a) {
      const auto row = mg.row(s, a);
      double acc = 0.0;
      for (int t = 0; t < S; ++t) acc += row[t] * V[t];
      out.Q(s, a) = reward(s, a) + mg.gamma * acc;
    }
  }
  out.V = std::move(V);
  out.residual = residual;
  out.iterations = it + 1;
  return out;
}

bool is_optimal(const TabularMG& mg, const JointTable& reward, const JointTable& pi_E, double tol) {
  const Evaluation ev = policy_evaluation(mg, reward, pi_E);
  for (int s = 0; s < mg.n_states; ++s) {
    for (int a = 0; a < mg.n_joint(); ++a) {
      const double gap = ev.Q(s, a) - ev.V[s];
      if (pi_E(s, a) > 0.0) {
        if (std::abs(gap) > tol) return false;
      } else if (gap > tol) {
        return false;
      }
    }
  }
  return true;
}

JointTable build_feasible_reward(const TabularMG& mg, const JointTable& pi_E,
                                 const FeasibleRewardParams& params) {
  const int S = mg.n_states;
  const int A = mg.n_joint();
  require_shape(pi_E, S, A, "build_feasible_reward policy");
  require_shape(params.zeta, S, A, "build_feasible_reward zeta");
  if (params.V.size() != static_cast<size_t>(S)) throw DomainError("V has wrong length");
  for (double z : params.zeta.values) {
    if (!(z >= 0.0)) throw DomainError("zeta must be nonnegative");
  }
  JointTable r(S, A);
  for (int s = 0; s < S; ++s) {
    for (int a = 0; a < A; ++a) {
      const auto row = mg.row(s, a);
      double expected = 0.0;
      for (int t = 0; t < S; ++t) expected += row[t] * params.V[t];
      const double penalty = pi_E(s, a) == 0.0 ? params.zeta(s, a) : 0.0;
      r(s, a) = -penalty + params.V[s] - mg.gamma * expected;
    }
  }
  return r;
}

FeasibleRewardParams recover_feasible_params(const TabularMG& mg, const JointTable& reward,
                                             const JointTable& pi_E) {
  const Evaluation ev = policy_evaluation(mg, reward, pi_E);
  FeasibleRewardParams out;
  out.V = ev.V;
  out.zeta = JointTable(mg.n_states, mg.n_joint());
  for (int s = 0; s < mg.n_states; ++s) {
    for (int a = 0; a < mg.n_joint(); ++a) {
      if (pi_E(s, a) == 0.0) out.zeta(s, a) = ev.V[s] - ev.Q(s, a);
    }
  }
  return out;
}

std::vector<std::int64_t> DemoDataset::count_sa() const {
  std::vector<std::int64_t> n(static_cast<size_t>(n_states) * n_joint(), 0);
  for (const auto& t : tuples) ++n[idx(t.s, t.a, n_joint())];
  return n;
}

std::vector<std::int64_t> DemoDataset::count_sas() const {
  const int A = n_joint();
  std::vector<std::int64_t> n(static_cast<size_t>(n_states) * A * n_states, 0);
  for (const auto& t : tuples) ++n[idx(t.s, t.a, A) * n_states + t.s_next];
  return n;
}

std::vector<std::int64_t> DemoDataset::count_s() const {
  std::vector<std::int64_t> n(n_states, 0);
  for (const auto& t : tuples) ++n[t.s];
  return n;
}

EmpiricalModel estimate_empirical(const DemoDataset& demos) {
  if (demos.tuples.empty()) throw EstimationError("cannot estimate a model from an empty dataset");
  const int S = demos.n_states;
  const int A = demos.n_joint();
  for (const auto& t : demos.tuples) {
    if (t.s < 0 || t.s >= S || t.s_next < 0 || t.s_next >= S || t.a < 0 || t.a >= A) {
      throw EstimationError("demonstration tuple out of range");
    }
  }
  const auto n_sa = demos.count_sa();
  const auto n_sas = demos.count_sas();
  const auto n_s = demos.count_s();

  EmpiricalModel m;
  m.n_states = S;
  m.action_counts = demos.action_counts;
  m.p_hat.assign(static_cast<size_t>(S) * A * S, 0.0);
  m.defined.assign(static_cast<size_t>(S) * A, 0);
  m.visits = n_sa;
  m.pi_hat = JointTable(S, A);
  for (int s = 0; s < S; ++s) {
    for (int a = 0; a < A; ++a) {
      const auto n = n_sa[idx(s, a, A)];
      if (n_s[s] > 0) m.pi_hat(s, a) = static_cast<double>(n) / static_cast<double>(n_s[s]);
      if (n == 0) continue;
      m.defined[idx(s, a, A)] = 1;
      for (int t = 0; t < S; ++t) {
        m.p_hat[idx(s, a, A) * S + t] =
            static_cast<double>(n_sas[idx(s, a, A) * S + t]) / static_cast<double>(n);
      }
    }
  }
  return m;
}

void GroupActionOnMG::validate() const {
  const size_t G = elements.size();
  if (state_perm.size() != G || action_perm.size() != G) throw DomainError("group action size mismatch");
  auto check_bijection = [](const std::vector<int>& perm, const char* what) {
    std::vector<char> seen(perm.size(), 0);
    for (int x : perm) {
      if (x < 0 || static_cast<size_t>(x) >= perm.size() || seen[x]) {
        throw DomainError(std::string(what) + " permutation is not a bijection");
      }
      seen[x] = 1;
    }
  };
  for (size_t g = 0; g < G; ++g) {
    check_bijection(state_perm[g], "state");
    check_bijection(action_perm[g], "action");
    if (elements[g].is_identity()) {
      for (size_t s = 0; s < state_perm[g].size(); ++s) {
        if (state_perm[g][s] != static_cast<int>(s)) throw DomainError("identity must fix every state");
      }
      for (size_t a = 0; a < action_perm[g].size(); ++a) {
        if (action_perm[g][a] != static_cast<int>(a)) throw DomainError("identity must fix every action");
      }
    }
  }
  auto index_of = [&](const group::GroupElement& e) -> std::optional<size_t> {
    for (size_t k = 0; k < G; ++k) {
      if (elements[k] == e) return k;
    }
    return std::nullopt;
  };
  for (size_t g = 0; g < G; ++g) {
    for (size_t h = 0; h < G; ++h) {
      const auto gh = index_of(group::compose(elements[g], elements[h]));
      if (!gh) throw DomainError("group elements are not closed under composition");
      for (size_t s = 0; s < state_perm[g].size(); ++s) {
        if (state_perm[*gh][s] != state_perm[g][state_perm[h][s]]) {
          throw DomainError("state permutations do not respect composition");
        }
      }
      for (size_t a = 0; a < action_perm[g].size(); ++a) {
        if (action_perm[*gh][a] != action_perm[g][action_perm[h][a]]) {
          throw DomainError("action permutations do not respect composition");
        }
      }
    }
  }
}

GroupActionOnMG trivial_action(int n_states, int n_joint) {
  GroupActionOnMG out;
  out.elements = {group::GroupElement::identity()};
  std::vector<int> sp(n_states), ap(n_joint);
  std::iota(sp.begin(), sp.end(), 0);
  std::iota(ap.begin(), ap.end(), 0);
  out.state_perm = {sp};
  out.action_perm = {ap};
  return out;
}

GroupActionOnMG grid_symmetry(int width, int height, int n_agents, int group_order) {
  if (width < 1 || height < 1 || n_agents < 1) throw DomainError("grid dimensions must be positive");
  const auto elements = group::dihedral_elements(group_order);
  const int S = width * height;

  auto locate = [&](double x, double y) -> int {
    const double fi = x + 0.5 * (width - 1);
    const double fj = y + 0.5 * (height - 1);
    const double ri = std::round(fi);
    const double rj = std::round(fj);
    if (std::abs(fi - ri) > 1e-9 || std::abs(fj - rj) > 1e-9 || ri < 0 || rj < 0 || ri >= width ||
        rj >= height) {
      return -1;
    }
    return static_cast<int>(rj) * width + static_cast<int>(ri);
  };
  static constexpr double kDirections[kGridActions][2] = {{0, 0}, {1, 0}, {-1, 0}, {0, 1}, {0, -1}};
  auto locate_direction = [&](double x, double y) -> int {
    for (int d = 0; d < kGridActions; ++d) {
      if (std::abs(x - kDirections[d][0]) < 1e-9 && std::abs(y - kDirections[d][1]) < 1e-9) return d;
    }
    return -1;
  };

  GroupActionOnMG out;
  out.elements = elements;
  const std::vector<int> counts(n_agents, kGridActions);
  const int A = joint_action_count(counts);
  for (const auto& g : elements) {
    const auto m = group::matrix(g);
    std::vector<int> sp(S);
    for (int j = 0; j < height; ++j) {
      for (int i = 0; i < width; ++i) {
        const double x = i - 0.5 * (width - 1);
        const double y = j - 0.5 * (height - 1);
        const int target = locate(m[0] * x + m[1] * y, m[2] * x + m[3] * y);
        if (target < 0) {
          throw DomainError("grid " + std::to_string(width) + "x" + std::to_string(height) +
                            " is not closed under " + group::to_token(g) + " of D_" +
                            std::to_string(group_order));
        }
        sp[j * width + i] = target;
      }
    }
    std::vector<int> dp(kGridActions);
    for (int d = 0; d < kGridActions; ++d) {
      const double x = kDirections[d][0];
      const double y = kDirections[d][1];
      dp[d] = locate_direction(m[0] * x + m[1] * y, m[2] * x + m[3] * y);
      if (dp[d] < 0) throw DomainError("grid actions are not closed under D_" + std::to_string(group_order));
    }
    std::vector<int> ap(A);
    for (int a = 0; a < A; ++a) {
      auto parts = decode_joint(a, counts);
      for (int& p : parts) p = dp[p];
      ap[a] = encode_joint(parts, counts);
    }
    out.state_perm.push_back(std::move(sp));
    out.action_perm.push_back(std::move(ap));
    out.agent_action_perm.push_back(std::move(dp));
  }
  out.validate();
  return out;
}

DemoDataset augment_demos(const DemoDataset& demos, const GroupActionOnMG& action) {
  DemoDataset out;
  out.n_states = demos.n_states;
  out.action_counts = demos.action_counts;
  out.tuples.reserve(demos.tuples.size() * action.size());
  for (size_t g = 0; g < action.size(); ++g) {
    const auto& sp = action.state_perm[g];
    const auto& ap = action.action_perm[g];
    for (const auto& t : demos.tuples) out.tuples.push_back({sp[t.s], ap[t.a], sp[t.s_next]});
  }
  return out;
}

namespace {

template <typename RowDeviation>
JointTable bound_impl(const TabularMG& mg, const JointTable& pi_E, const EmpiricalModel& model,
                      const FeasibleRewardParams& params, RowDeviation&& deviation) {
  const int S = mg.n_states;
  const int A = mg.n_joint();
  require_shape(pi_E, S, A, "bound policy");
  require_shape(params.zeta, S, A, "bound zeta");
  require_shape(model.pi_hat, S, A, "bound empirical policy");
  JointTable out(S, A);
  for (int s = 0; s < S; ++s) {
    for (int a = 0; a < A; ++a) {
      const double indicator = (pi_E(s, a) == 0.0 && model.pi_hat(s, a) > 0.0) ? 1.0 : 0.0;
      double transport = 0.0;
      for (int t = 0; t < S; ++t) transport += std::abs(params.V[t]) * deviation(s, a, t);
      out(s, a) = params.zeta(s, a) * indicator + mg.gamma * transport;
    }
  }
  return out;
}

}  // namespace

JointTable error_bound(const TabularMG& mg_true, const JointTable& pi_E_true, const EmpiricalModel& model,
                       const FeasibleRewardParams& params) {
  return bound_impl(mg_true, pi_E_true, model, params, [&](int s, int a, int t) {
    if (!model.is_defined(s, a)) return 1.0;
    return std::abs(mg_true.p(s, a, t) - model.p(s, a, t));
  });
}

JointTable envelope_bound(const TabularMG& mg_true, const JointTable& pi_E_true, const EmpiricalModel& model,
                          const FeasibleRewardParams& params, double concentration) {
  if (!(concentration > 0.0)) throw DomainError("concentration constant must be positive");
  const int A = mg_true.n_joint();
  return bound_impl(mg_true, pi_E_true, model, params, [&](int s, int a, int) {
    const auto n = model.visits[idx(s, a, A)];
    if (n == 0) return 1.0;
    return std::min(1.0, concentration / std::sqrt(static_cast<double>(n)));
  });
}

std::string InvarianceViolation::describe(const GroupActionOnMG& action) const {
  std::ostringstream os;
  os << "symmetry violation under " << group::to_token(action.elements[element]) << " at s=" << s << " a=" << a;
  if (s_next >= 0) {
    os << " s'=" << s_next << ": P=" << lhs << " vs transformed P=" << rhs;
  } else {
    os << ": pi=" << lhs << " vs transformed pi=" << rhs;
  }
  return os.str();
}

std::optional<InvarianceViolation> find_invariance_violation(const TabularMG& mg, const JointTable& pi,
                                                             const GroupActionOnMG& action, double tol) {
  const int S = mg.n_states;
  const int A = mg.n_joint();
  require_shape(pi, S, A, "invariance policy");
  for (size_t g = 0; g < action.size(); ++g) {
    const auto& sp = action.state_perm[g];
    const auto& ap = action.action_perm[g];
    for (int s = 0; s < S; ++s) {
      for (int a = 0; a < A; ++a) {
        const double lhs = pi(s, a);
        const double rhs = pi(sp[s], ap[a]);
        if (std::abs(lhs - rhs) > tol) return InvarianceViolation{static_cast<int>(g), s, a, -1, lhs, rhs};
        for (int t = 0; t < S; ++t) {
          const double pl = mg.p(s, a, t);
          const double pr = mg.p(sp[s], ap[a], sp[t]);
          if (std::abs(pl - pr) > tol) return InvarianceViolation{static_cast<int>(g), s, a, t, pl, pr};
        }
      }
    }
  }
  return std::nullopt;
}

bool check_g_invariance(const TabularMG& mg, const JointTable& pi, const GroupActionOnMG& action, double tol) {
  return !find_invariance_violation(mg, pi, action, tol).has_value();
}

TabularMG symmetrize(const TabularMG& mg, const GroupActionOnMG& action) {
  TabularMG out = mg;
  const int S = mg.n_states;
  const int A = mg.n_joint();
  const double inv_g = 1.0 / static_cast<double>(action.size());
  for (int s = 0; s < S; ++s) {
    for (int a = 0; a < A; ++a) {
      for (int t = 0; t < S; ++t) {
        double acc = 0.0;
        for (size_t g = 0; g < action.size(); ++g) {
          acc += mg.p(action.state_perm[g][s], action.action_perm[g][a], action.state_perm[g][t]);
        }
        out.p(s, a, t) = acc * inv_g;
      }
    }
  }
  return out;
}

JointTable symmetrize(const JointTable& pi, const GroupActionOnMG& action) {
  JointTable out(pi.n_states, pi.n_joint);
  const double inv_g = 1.0 / static_cast<double>(action.size());
  for (int s = 0; s < pi.n_states; ++s) {
    for (int a = 0; a < pi.n_joint; ++a) {
      double acc = 0.0;
      for (size_t g = 0; g < action.size(); ++g) acc += pi(action.state_perm[g][s], action.action_perm[g][a]);
      out(s, a) = acc * inv_g;
    }
  }
  return out;
}

DemoDataset sample_demos(const TabularMG& mg, const JointTable& pi_E, int count, std::mt19937_64& rng) {
  DemoDataset out;
  out.n_states = mg.n_states;
  out.action_counts = mg.action_counts;
  out.tuples.reserve(count);
  const int A = mg.n_joint();
  for (int j = 0; j < count; ++j) {
    const int s = static_cast<int>(uniform_index(rng, mg.n_states));
    const std::span<const double> policy_row(pi_E.values.data() + static_cast<size_t>(s) * A, A);
    const int a = categorical(rng, policy_row);
    const int t = categorical(rng, mg.row(s, a));
    out.tuples.push_back({s, a, t});
  }
  return out;
}

BoundCheckReport verify_augmentation_bound(const TabularMG& mg, const JointTable& pi_E,
                                           const GroupActionOnMG& action, int sample_size,
                                           std::span<const std::uint64_t> seeds, const FeasibleRewardParams& params,
                                           const BoundCheckOptions& options) {
  if (auto violation = find_invariance_violation(mg, pi_E, action)) {
    throw SymmetryViolationError(violation->describe(action));
  }
  BoundCheckReport report;
  report.sample_size = sample_size;
  report.min_delta = std::numeric_limits<double>::infinity();
  for (const auto seed : seeds) {
    Rng rng(seed);
    const DemoDataset demos = sample_demos(mg, pi_E, sample_size, rng);
    const EmpiricalModel plain = estimate_empirical(demos);
    const EmpiricalModel augmented = estimate_empirical(augment_demos(demos, action));

    const JointTable env_plain = envelope_bound(mg, pi_E, plain, params, options.concentration);
    const JointTable env_aug = envelope_bound(mg, pi_E, augmented, params, options.concentration);
    const JointTable real_plain = error_bound(mg, pi_E, plain, params);
    const JointTable real_aug = error_bound(mg, pi_E, augmented, params);

    BoundSeedResult r;
    r.seed = seed;
    r.delta = JointTable(mg.n_states, mg.n_joint());
    r.realized_delta = JointTable(mg.n_states, mg.n_joint());
    r.min_delta = std::numeric_limits<double>::infinity();
    r.min_realized_delta = std::numeric_limits<double>::infinity();
    for (size_t k = 0; k < r.delta.values.size(); ++k) {
      const double d = env_plain.values[k] - env_aug.values[k];
      const double dr = real_plain.values[k] - real_aug.values[k];
      r.delta.values[k] = d;
      r.realized_delta.values[k] = dr;
      r.min_delta = std::min(r.min_delta, d);
      r.min_realized_delta = std::min(r.min_realized_delta, dr);
      if (dr < -options.tolerance) ++r.negative_realized_cells;
      ++report.cells;
      if (d < -options.tolerance) {
        ++report.failing_cells;
        r.passed = false;
      }
    }
    report.min_delta = std::min(report.min_delta, r.min_delta);
    report.seeds.push_back(std::move(r));
  }
  return report;
}

TabularMG random_mg(int n_states, std::vector<int> action_counts, double gamma, std::mt19937_64& rng,
                    double sparsity) {
  TabularMG mg(n_states, std::move(action_counts), gamma);
  const int A = mg.n_joint();
  for (int s = 0; s < n_states; ++s) {
    for (int a = 0; a < A; ++a) {
      double total = 0.0;
      for (int t = 0; t < n_states; ++t) {
        const double w = uniform01(rng) < sparsity ? 0.0 : exponential(rng);
        mg.p(s, a, t) = w;
        total += w;
      }
      if (total == 0.0) {
        mg.p(s, a, static_cast<int>(uniform_index(rng, n_states))) = 1.0;
        continue;
      }
      for (int t = 0; t < n_states; ++t) mg.p(s, a, t) /= total;
    }
  }
  return mg;
}

JointPolicy random_policy(int n_states, std::vector<int> action_counts, std::mt19937_64& rng,
                          double zero_fraction) {
  JointPolicy pi;
  pi.n_states = n_states;
  pi.action_counts = std::move(action_counts);
  for (int c : pi.action_counts) {
    std::vector<double> table(static_cast<size_t>(n_states) * c, 0.0);
    for (int s = 0; s < n_states; ++s) {
      double total = 0.0;
      for (int a = 0; a < c; ++a) {
        const double w = uniform01(rng) < zero_fraction ? 0.0 : exponential(rng) + 1e-3;
        table[static_cast<size_t>(s) * c + a] = w;
        total += w;
      }
      if (total == 0.0) {
        table[static_cast<size_t>(s) * c + uniform_index(rng, c)] = 1.0;
        continue;
      }
      for (int a = 0; a < c; ++a) table[static_cast<size_t>(s) * c + a] /= total;
    }
    pi.per_agent.push_back(std::move(table));
  }
  return pi;
}

FeasibleRewardParams random_params(int n_states, int n_joint, std::mt19937_64& rng, double scale) {
  FeasibleRewardParams p;
  p.zeta = JointTable(n_states, n_joint);
  for (double& z : p.zeta.values) z = scale * uniform01(rng);
  p.V.resize(n_states);
  for (double& v : p.V) v = uniform(rng, -scale, scale);
  return p;
}

JointPolicy random_symmetric_policy(int n_states, std::vector<int> action_counts, const GroupActionOnMG& action,
                                    std::mt19937_64& rng, double zero_fraction) {
  if (action.agent_action_perm.size() != action.size()) {
    throw DomainError("random_symmetric_policy needs per-agent action permutations");
  }
  const size_t G = action.size();
  JointPolicy pi;
  pi.n_states = n_states;
  pi.action_counts = std::move(action_counts);
  for (int c : pi.action_counts) {
    if (action.agent_action_perm[0].size() != static_cast<size_t>(c)) {
      throw DomainError("per-agent permutation size does not match action count");
    }
    auto at = [c](int s, int a) { return static_cast<size_t>(s) * c + a; };
    std::vector<double> raw(static_cast<size_t>(n_states) * c);
    for (double& w : raw) w = exponential(rng) + 1e-3;

    std::vector<char> zero(raw.size(), 0);
    std::vector<int> live(n_states, c);
    for (int s = 0; s < n_states; ++s) {
      for (int a = 0; a < c; ++a) {
        if (zero[at(s, a)] || uniform01(rng) >= zero_fraction) continue;
        // Zero the whole orbit, unless that would empty some state's row.
        std::vector<size_t> orbit;
        for (size_t g = 0; g < G; ++g) {
          const size_t k = at(action.state_perm[g][s], action.agent_action_perm[g][a]);
          if (std::find(orbit.begin(), orbit.end(), k) == orbit.end()) orbit.push_back(k);
        }
        std::vector<int> drop(n_states, 0);
        for (size_t k : orbit) ++drop[k / c];
        bool ok = true;
        for (int t = 0; t < n_states; ++t) ok = ok && live[t] - drop[t] >= 1;
        if (!ok) continue;
        for (size_t k : orbit) zero[k] = 1;
        for (int t = 0; t < n_states; ++t) live[t] -= drop[t];
      }
    }
    std::vector<double> table(raw.size(), 0.0);
    for (int s = 0; s < n_states; ++s) {
      for (int a = 0; a < c; ++a) {
        if (zero[at(s, a)]) continue;
        double acc = 0.0;
        for (size_t g = 0; g < G; ++g) acc += raw[at(action.state_perm[g][s], action.agent_action_perm[g][a])];
        table[at(s, a)] = acc / static_cast<double>(G);
      }
    }
    for (int s = 0; s < n_states; ++s) {
      double total = 0.0;
      for (int a = 0; a < c; ++a) total += table[at(s, a)];
      for (int a = 0; a < c; ++a) table[at(s, a)] /= total;
    }
    pi.per_agent.push_back(std::move(table));
  }
  return pi;
}

// ---------------------------------------------------------------------------
// Plain-text serialization

namespace {

void put_double(std::ostream& out, double x) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), x);
  out.write(buf, ptr - buf);
}

std::string next_token(std::istream& in) {
  std::string tok;
  if (!(in >> tok)) throw FormatError("unexpected end of input");
  return tok;
}

void expect(std::istream& in, const std::string& word) {
  const auto tok = next_token(in);
  if (tok != word) throw FormatError("expected '" + word + "', found '" + tok + "'");
}

template <typename T>
T parse_number(const std::string& tok) {
  T value{};
  auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), value);
  if (ec != std::errc() || ptr != tok.data() + tok.size()) throw FormatError("bad number '" + tok + "'");
  return value;
}

template <typename T>
T read_number(std::istream& in) {
  return parse_number<T>(next_token(in));
}

constexpr int kTextVersion = 1;

std::vector<int> read_dims(std::istream& in, int& n_states) {
  expect(in, "states");
  n_states = read_number<int>(in);
  expect(in, "agents");
  const int n_agents = read_number<int>(in);
  if (n_states <= 0 || n_agents <= 0) throw FormatError("dimensions must be positive");
  expect(in, "actions");
  std::vector<int> counts(n_agents);
  for (int& c : counts) {
    c = read_number<int>(in);
    if (c <= 0) throw FormatError("action counts must be positive");
  }
  return counts;
}

void write_dims(std::ostream& out, int n_states, const std::vector<int>& counts) {
  out << "states " << n_states << " agents " << counts.size() << " actions";
  for (int c : counts) out << ' ' << c;
}

}  // namespace

void write_mg(std::ostream& out, const TabularMG& mg) {
  out << "sgf-tabular-mg " << kTextVersion << '\n';
  write_dims(out, mg.n_states, mg.action_counts);
  out << " gamma ";
  put_double(out, mg.gamma);
  out << '\n';
  for (int s = 0; s < mg.n_states; ++s) {
    for (int a = 0; a < mg.n_joint(); ++a) {
      const auto row = mg.row(s, a);
      for (int t = 0; t < mg.n_states; ++t) {
        if (t) out << ' ';
        put_double(out, row[t]);
      }
      out << '\n';
    }
  }
}

TabularMG read_mg(std::istream& in) {
  expect(in, "sgf-tabular-mg");
  if (read_number<int>(in) != kTextVersion) throw FormatError("unsupported tabular MG version");
  int n_states = 0;
  auto counts = read_dims(in, n_states);
  expect(in, "gamma");
  const double gamma = read_number<double>(in);
  TabularMG mg(n_states, std::move(counts), gamma);
  for (double& p : mg.transition) p = read_number<double>(in);
  return mg;
}

void write_demos(std::ostream& out, const DemoDataset& demos) {
  out << "sgf-tabular-demos " << kTextVersion << '\n';
  write_dims(out, demos.n_states, demos.action_counts);
  out << " tuples " << demos.tuples.size() << '\n';
  for (const auto& t : demos.tuples) out << t.s << ' ' << t.a << ' ' << t.s_next << '\n';
}

DemoDataset read_demos(std::istream& in) {
  expect(in, "sgf-tabular-demos");
  if (read_number<int>(in) != kTextVersion) throw FormatError("unsupported tabular demo version");
  DemoDataset d;
  d.action_counts = read_dims(in, d.n_states);
  expect(in, "tuples");
  const auto m = read_number<long long>(in);
  if (m < 0) throw FormatError("negative tuple count");
  d.tuples.resize(static_cast<size_t>(m));
  for (auto& t : d.tuples) {
    t.s = read_number<int>(in);
    t.a = read_number<int>(in);
    t.s_next = read_number<int>(in);
  }
  return d;
}

}  // namespace sgf::tabular
