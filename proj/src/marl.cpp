#include "sgf/marl.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <stdexcept>

namespace sgf::marl {

namespace {

std::vector<int> widths(int in, const std::vector<int>& hidden, int out) {
  std::vector<int> w{in};
  w.insert(w.end(), hidden.begin(), hidden.end());
  w.push_back(out);
  return w;
}

const double kLog2Pi = std::log(2.0 * std::numbers::pi);

}  // namespace

ActorCritic::ActorCritic(const envs::EnvSpec& spec, const PolicyConfig& config, Rng& rng)
    : spec_(spec), config_(config) {
  using approx::Activation;
  const int F = spec.feature_size();
  const int n_actors = config.shared_actor ? 1 : spec.n_agents;
  for (int k = 0; k < n_actors; ++k) {
    actors_.emplace_back(widths(F, config.hidden, 2), Activation::kTanh, Activation::kIdentity, rng, 1.0, 0.01);
  }
  critic_ = approx::Mlp(widths(F, config.hidden, 1), Activation::kTanh, Activation::kIdentity, rng);
  log_std_ = Vector::Constant(2, config.init_log_std);
}

Matrix ActorCritic::features(const envs::EnvState& s) const {
  const int F = spec_.feature_size();
  Matrix X(F, spec_.n_agents);
  for (int i = 0; i < spec_.n_agents; ++i) envs::agent_features(spec_, s, i, std::span<double>(X.col(i).data(), F));
  return X;
}

Matrix ActorCritic::means(const Matrix& X) const {
  if (config_.shared_actor) return actors_[0].forward(X);
  Matrix out(2, X.cols());
  for (Eigen::Index i = 0; i < X.cols(); ++i) out.col(i) = actors_[i].forward(Vector(X.col(i)));
  return out;
}

Vector ActorCritic::values(const Matrix& X) const { return critic_.forward(X).row(0).transpose(); }

double gaussian_log_prob(const Vector& mean, const Vector& log_std, const Vector& a) {
  double lp = 0.0;
  for (Eigen::Index k = 0; k < mean.size(); ++k) {
    const double z = (a[k] - mean[k]) * std::exp(-log_std[k]);
    lp += -0.5 * z * z - log_std[k] - 0.5 * kLog2Pi;
  }
  return lp;
}

std::vector<envs::Vec2> ActorCritic::act(const envs::EnvState& s, Rng& rng, bool deterministic,
                                         Vector* log_probs) const {
  const Matrix mu = means(features(s));
  const int n = spec_.n_agents;
  std::vector<envs::Vec2> out(n);
  if (log_probs) log_probs->resize(n);
  for (int i = 0; i < n; ++i) {
    Vector a = mu.col(i);
    if (!deterministic) {
      for (int k = 0; k < 2; ++k) a[k] += std::exp(log_std_[k]) * standard_normal(rng);
    }
    out[i] = {a[0], a[1]};
    if (log_probs) (*log_probs)[i] = gaussian_log_prob(mu.col(i), log_std_, a);
  }
  return out;
}

Matrix ActorCritic::log_prob_tuples(std::span<const demos::ContinuousTuple> batch) const {
  const int n = spec_.n_agents;
  const int F = spec_.feature_size();
  const auto B = static_cast<Eigen::Index>(batch.size());
  Matrix X(F, B * n);
  for (Eigen::Index b = 0; b < B; ++b) {
    const auto s = envs::from_structured(spec_, batch[b].s);
    for (int i = 0; i < n; ++i) envs::agent_features(spec_, s, i, std::span<double>(X.col(b * n + i).data(), F));
  }
  Matrix mu;
  if (config_.shared_actor) {
    mu = actors_[0].forward(X);
  } else {
    mu.resize(2, X.cols());
    for (Eigen::Index c = 0; c < X.cols(); ++c) mu.col(c) = actors_[c % n].forward(Vector(X.col(c)));
  }
  Matrix out(n, B);
  for (Eigen::Index b = 0; b < B; ++b) {
    for (int i = 0; i < n; ++i) {
      const auto& a = batch[b].actions[i].equ;
      out(i, b) = gaussian_log_prob(mu.col(b * n + i), log_std_, Vector{{a[0], a[1]}});
    }
  }
  return out;
}

double ActorCritic::entropy_per_agent() const {
  return log_std_.sum() + 0.5 * static_cast<double>(log_std_.size()) * (kLog2Pi + 1.0);
}

void ActorCritic::save(approx::Checkpoint& ckpt) const {
  ckpt.text["policy.env"] = spec_.fingerprint();
  ckpt.text["policy.shared_actor"] = config_.shared_actor ? "1" : "0";
  ckpt.text["policy.actors"] = std::to_string(actors_.size());
  for (size_t k = 0; k < actors_.size(); ++k) ckpt.put_network("actor" + std::to_string(k), actors_[k]);
  ckpt.put_network("critic", critic_);
  ckpt.put("log_std", log_std_);
}

ActorCritic ActorCritic::load(const approx::Checkpoint& ckpt, const envs::EnvSpec& spec) {
  if (ckpt.get_text("policy.env") != spec.fingerprint()) {
    throw approx::CheckpointError("policy checkpoint was trained on '" + ckpt.get_text("policy.env") + "'");
  }
  ActorCritic p;
  p.spec_ = spec;
  p.config_.shared_actor = ckpt.get_text("policy.shared_actor") == "1";
  const int count = std::stoi(ckpt.get_text("policy.actors"));
  for (int k = 0; k < count; ++k) p.actors_.push_back(ckpt.get_network("actor" + std::to_string(k)));
  p.critic_ = ckpt.get_network("critic");
  p.log_std_ = ckpt.get("log_std");
  const auto& w = p.critic_.widths();
  p.config_.hidden.assign(w.begin() + 1, w.end() - 1);
  if (w.front() != spec.feature_size()) throw approx::CheckpointError("policy input width does not match environment");
  return p;
}

RolloutBuffer collect_rollouts(const ActorCritic& policy, const RolloutOptions& opts, Rng& rng,
                               const adversarial::DiscriminatorSet* discs, const adversarial::Encoder* enc) {
  const auto& spec = policy.spec();
  const int n = spec.n_agents;
  const int horizon = std::clamp(opts.episode_steps, 0, spec.max_steps);
  const int episodes = std::max(0, opts.episodes);
  RolloutBuffer buf;
  buf.n_agents = n;
  buf.steps = episodes * horizon;
  const auto total = static_cast<Eigen::Index>(buf.size());
  buf.features.resize(spec.feature_size(), total);
  buf.actions.resize(2, total);
  buf.log_probs.resize(total);
  buf.values.resize(total);
  buf.next_values.resize(total);
  buf.rewards.resize(total);
  buf.true_rewards.resize(total);
  buf.episode_end.assign(buf.steps, 0);
  buf.tuples.reserve(buf.steps);

  Eigen::Index col = 0;
  for (int ep = 0; ep < episodes && horizon > 0; ++ep) {
    envs::EnvState s = envs::reset(spec, rng());
    Matrix X = policy.features(s);
    Vector v = policy.values(X);
    double ep_return = 0.0;
    for (int t = 0; t < horizon; ++t) {
      const Matrix mu = policy.means(X);
      std::vector<envs::Vec2> a(n);
      for (int i = 0; i < n; ++i) {
        Vector ai = mu.col(i);
        if (!opts.deterministic) {
          for (int k = 0; k < 2; ++k) ai[k] += std::exp(policy.log_std()[k]) * standard_normal(rng);
        }
        a[i] = {ai[0], ai[1]};
        buf.features.col(col + i) = X.col(i);
        buf.actions.col(col + i) = ai;
        buf.log_probs[col + i] = gaussian_log_prob(mu.col(i), policy.log_std(), ai);
      }
      auto r = envs::step(spec, s, a);
      const Matrix X_next = policy.features(r.state);
      const Vector v_next = policy.values(X_next);
      for (int i = 0; i < n; ++i) {
        buf.values[col + i] = v[i];
        buf.next_values[col + i] = v_next[i];
        buf.true_rewards[col + i] = r.rewards[i];
      }
      ep_return += r.rewards[0];
      const int step_row = ep * horizon + t;
      buf.tuples.push_back(demos::make_demo_tuple(spec, s, a, r.state, ep, t));
      if (t + 1 == horizon) buf.episode_end[step_row] = 1;
      s = std::move(r.state);
      X = X_next;
      v = v_next;
      col += n;
    }
    buf.episode_returns.push_back(ep_return);
    buf.final_order.push_back(envs::order_parameter(s));
  }
  buf.rewards = buf.true_rewards;
  buf.source = RewardSource::kTrue;
  if (discs) {
    if (!enc) throw std::invalid_argument("discriminator rewards need an encoder");
    label_rewards(buf, policy, *discs, *enc);
  }
  return buf;
}

void label_rewards(RolloutBuffer& buf, const ActorCritic& policy, const adversarial::DiscriminatorSet& discs,
                   const adversarial::Encoder& enc) {
  if (buf.tuples.empty()) {
    buf.source = RewardSource::kDiscriminator;
    return;
  }
  adversarial::LogProbFn lp = [&](std::span<const demos::ContinuousTuple> b) { return policy.log_prob_tuples(b); };
  const Matrix r = adversarial::batch_rewards(discs, enc, buf.tuples, lp);
  // r is N x steps; the buffer is step-major.
  buf.rewards = Eigen::Map<const Vector>(r.data(), r.size());
  buf.source = RewardSource::kDiscriminator;
}

Vector gae(const Vector& rewards, const Vector& values, const Vector& next_values,
           const std::vector<std::uint8_t>& trajectory_end, double gamma, double lambda) {
  const auto T = rewards.size();
  Vector adv(T);
  double running = 0.0;
  for (Eigen::Index t = T - 1; t >= 0; --t) {
    if (trajectory_end[t]) running = 0.0;
    const double delta = rewards[t] + gamma * next_values[t] - values[t];
    running = delta + gamma * lambda * running;
    adv[t] = running;
  }
  return adv;
}

void compute_gae(RolloutBuffer& buf, double gamma, double lambda) {
  const int n = buf.n_agents;
  const int T = buf.steps;
  buf.advantages.resize(static_cast<Eigen::Index>(buf.size()));
  Vector r(T), v(T), nv(T);
  for (int i = 0; i < n; ++i) {
    for (int t = 0; t < T; ++t) {
      r[t] = buf.rewards[t * n + i];
      v[t] = buf.values[t * n + i];
      nv[t] = buf.next_values[t * n + i];
    }
    const Vector a = gae(r, v, nv, buf.episode_end, gamma, lambda);
    for (int t = 0; t < T; ++t) buf.advantages[t * n + i] = a[t];
  }
  buf.returns = buf.advantages + buf.values;
}

Optimizers::Optimizers(const ActorCritic& policy, const PpoConfig& config)
    : log_std(config.actor_lr), critic(config.critic_lr) {
  actors.assign(policy.actors().size(), approx::AdamState(config.actor_lr));
}

double ReturnScaler::stddev() const { return count > 1.0 ? std::sqrt(m2 / count) : 1.0; }

Vector ReturnScaler::scale(const Vector& rewards, int n_agents, const std::vector<std::uint8_t>& episode_end,
                           double gamma) {
  const int T = static_cast<int>(episode_end.size());
  std::vector<double> g(n_agents, 0.0);
  double b_count = 0.0, b_mean = 0.0, b_m2 = 0.0;
  for (int t = 0; t < T; ++t) {
    for (int i = 0; i < n_agents; ++i) {
      g[i] = gamma * g[i] + rewards[t * n_agents + i];
      b_count += 1.0;
      const double d = g[i] - b_mean;
      b_mean += d / b_count;
      b_m2 += d * (g[i] - b_mean);
    }
    if (episode_end[t]) std::fill(g.begin(), g.end(), 0.0);
  }
  if (b_count > 0.0) {
    const double total = count + b_count;
    const double delta = b_mean - mean;
    m2 += b_m2 + delta * delta * count * b_count / total;
    mean += delta * b_count / total;
    count = total;
  }
  return rewards / (stddev() + 1e-8);
}

double clipped_surrogate(double ratio, double advantage, double clip_eps) {
  return std::min(ratio * advantage, std::clamp(ratio, 1.0 - clip_eps, 1.0 + clip_eps) * advantage);
}

double clipped_surrogate_grad(double ratio, double advantage, double clip_eps) {
  if (advantage > 0.0 && ratio >= 1.0 + clip_eps) return 0.0;
  if (advantage < 0.0 && ratio <= 1.0 - clip_eps) return 0.0;
  return advantage;
}

ActorLoss actor_loss(const ActorCritic& policy, const RolloutBuffer& buf, std::span<const Eigen::Index> samples,
                     const Vector& advantages, double clip_eps) {
  const int n = buf.n_agents;
  const int n_actors = static_cast<int>(policy.actors().size());
  const double inv_m = 1.0 / static_cast<double>(std::max<size_t>(1, samples.size()));
  const Vector sigma2 = (2.0 * policy.log_std().array()).exp();
  ActorLoss out;
  out.log_std_grad = Vector::Zero(2);
  double clipped = 0.0;
  for (int k = 0; k < n_actors; ++k) {
    out.actor_grads.push_back(Vector::Zero(policy.actors()[k].num_params()));
    out.actor_samples.push_back(0);
    std::vector<Eigen::Index> idx;
    idx.reserve(samples.size());
    for (Eigen::Index s : samples) {
      if (n_actors == 1 || s % n == k) idx.push_back(s);
    }
    if (idx.empty()) continue;
    out.actor_samples[k] = static_cast<int>(idx.size());
    const auto c = static_cast<Eigen::Index>(idx.size());
    Matrix X(buf.features.rows(), c);
    for (Eigen::Index j = 0; j < c; ++j) X.col(j) = buf.features.col(idx[j]);
    approx::ForwardCache cache;
    const Matrix mu = policy.actors()[k].forward(X, &cache);
    Matrix d_mu(2, c);
    for (Eigen::Index j = 0; j < c; ++j) {
      const Eigen::Index s = idx[j];
      const Vector a = buf.actions.col(s);
      const double log_ratio = gaussian_log_prob(mu.col(j), policy.log_std(), a) - buf.log_probs[s];
      const double ratio = std::exp(log_ratio);
      out.value -= clipped_surrogate(ratio, advantages[s], clip_eps) * inv_m;
      out.approx_kl += ((ratio - 1.0) - log_ratio) * inv_m;
      if (std::abs(ratio - 1.0) > clip_eps) clipped += 1.0;
      // d(-surrogate)/d log pi
      const double g_lp = -clipped_surrogate_grad(ratio, advantages[s], clip_eps) * ratio * inv_m;
      for (int d = 0; d < 2; ++d) {
        const double diff = a[d] - mu(d, j);
        d_mu(d, j) = g_lp * diff / sigma2[d];
        out.log_std_grad[d] += g_lp * (diff * diff / sigma2[d] - 1.0);
      }
    }
    policy.actors()[k].backward(cache, d_mu, out.actor_grads[k]);
  }
  out.clip_fraction = clipped * inv_m;
  return out;
}

double critic_loss(const ActorCritic& policy, const RolloutBuffer& buf, std::span<const Eigen::Index> samples,
                   double value_coef, Vector& grad) {
  const auto m = static_cast<Eigen::Index>(samples.size());
  const double inv_m = 1.0 / static_cast<double>(std::max<Eigen::Index>(1, m));
  Matrix X(buf.features.rows(), m);
  Vector R(m);
  for (Eigen::Index j = 0; j < m; ++j) {
    X.col(j) = buf.features.col(samples[j]);
    R[j] = buf.returns[samples[j]];
  }
  approx::ForwardCache cache;
  const Matrix V = policy.critic().forward(X, &cache);
  const Vector err = V.row(0).transpose() - R;
  grad = Vector::Zero(policy.critic().num_params());
  policy.critic().backward(cache, (2.0 * value_coef * inv_m) * err.transpose(), grad);
  return err.squaredNorm() * inv_m;
}

PpoStats ppo_update(ActorCritic& policy, Optimizers& opt, RolloutBuffer& buf, const PpoConfig& config, Rng& rng,
                    bool require_discriminator) {
  if (require_discriminator && buf.source != RewardSource::kDiscriminator) {
    throw std::logic_error("imitation update received environment rewards");
  }
  PpoStats stats;
  const auto total = static_cast<Eigen::Index>(buf.size());
  if (total == 0) return stats;
  if (config.normalize_rewards) {
    const Vector raw = buf.rewards;
    buf.rewards = opt.returns.scale(raw, buf.n_agents, buf.episode_end, config.gamma);
    compute_gae(buf, config.gamma, config.lambda);
    buf.rewards = raw;
  } else {
    compute_gae(buf, config.gamma, config.lambda);
  }
  Vector adv = buf.advantages;
  const double mean = adv.mean();
  const double sd = std::sqrt((adv.array() - mean).square().mean());
  adv = (adv.array() - mean) / (sd + 1e-8);

  const int n_actors = static_cast<int>(policy.actors().size());
  std::vector<Eigen::Index> order(total);
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  const Eigen::Index mb = std::max<Eigen::Index>(1, std::min<Eigen::Index>(config.minibatch, total));
  long batches = 0;
  double clip_count = 0.0;
  double sample_count = 0.0;

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    for (Eigen::Index i = total - 1; i > 0; --i) {
      std::swap(order[i], order[static_cast<Eigen::Index>(uniform_index(rng, static_cast<std::uint64_t>(i + 1)))]);
    }
    for (Eigen::Index start = 0; start < total; start += mb) {
      const Eigen::Index m = std::min(mb, total - start);
      const std::span<const Eigen::Index> idx(order.data() + start, static_cast<size_t>(m));
      const auto actor = actor_loss(policy, buf, idx, adv, config.clip_eps);
      stats.policy_loss += actor.value * static_cast<double>(m);
      stats.approx_kl += actor.approx_kl * static_cast<double>(m);
      clip_count += actor.clip_fraction * static_cast<double>(m);
      sample_count += static_cast<double>(m);
      for (int k = 0; k < n_actors; ++k) {
        if (actor.actor_samples[k] == 0) continue;
        Vector g = actor.actor_grads[k];
        approx::clip_grad_norm(g, config.max_grad_norm);
        approx::adam_step(opt.actors[k], policy.actors()[k].params(), g);
      }
      Vector g_log_std = actor.log_std_grad;
      g_log_std.array() -= config.entropy_coef;
      approx::clip_grad_norm(g_log_std, config.max_grad_norm);
      approx::adam_step(opt.log_std, policy.log_std(), g_log_std);
      policy.log_std() = policy.log_std().cwiseMax(config.min_log_std);

      Vector g_critic;
      stats.value_loss += critic_loss(policy, buf, idx, config.value_coef, g_critic);
      approx::clip_grad_norm(g_critic, config.max_grad_norm);
      approx::adam_step(opt.critic, policy.critic().params(), g_critic);
      ++batches;
    }
  }
  stats.policy_loss /= std::max(1.0, sample_count);
  stats.approx_kl /= std::max(1.0, sample_count);
  stats.value_loss /= static_cast<double>(std::max(1L, batches));
  stats.clip_fraction = clip_count / std::max(1.0, sample_count);
  stats.entropy = policy.entropy_per_agent();
  return stats;
}

EvalResult evaluate(const ActorCritic& policy, int episodes, int episode_steps, std::uint64_t seed,
                    bool deterministic) {
  Rng rng(seed);
  RolloutOptions opts;
  opts.episodes = episodes;
  opts.episode_steps = episode_steps;
  opts.deterministic = deterministic;
  const auto buf = collect_rollouts(policy, opts, rng);
  EvalResult out;
  out.returns = buf.episode_returns;
  if (policy.spec().kind == envs::EnvKind::kVicsek) out.final_order = buf.final_order;
  if (!out.returns.empty()) {
    out.mean_return = std::accumulate(out.returns.begin(), out.returns.end(), 0.0) / out.returns.size();
  }
  if (!out.final_order.empty()) {
    out.mean_final_order =
        std::accumulate(out.final_order.begin(), out.final_order.end(), 0.0) / out.final_order.size();
  }
  return out;
}

}  // namespace sgf::marl
