#include "sgf/adversarial.hpp"

#include <algorithm>
#include <cmath>

namespace sgf::adversarial {

namespace {

const double kMaxLogit = std::log((1.0 - kProbFloor) / kProbFloor);

double softplus(double x) { return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }
double sigmoid(double x) { return x >= 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x)); }

}  // namespace

std::string variant_name(Variant v) { return v == Variant::kGail ? "gail" : "airl"; }

Variant parse_variant(const std::string& name) {
  if (name == "gail" || name == "ma-gail") return Variant::kGail;
  if (name == "airl" || name == "ma-airl") return Variant::kAirl;
  throw std::invalid_argument("unknown discriminator variant '" + name + "'");
}

Encoder::Encoder(envs::EnvSpec spec, Variant variant, FeatureMode mode)
    : spec_(std::move(spec)), variant_(variant), mode_(mode) {}

int Encoder::width_for_blocks(int blocks) const {
  return mode_ == FeatureMode::kEquivariant ? 2 * blocks : blocks * (blocks + 1) / 2;
}

int Encoder::s_width() const { return width_for_blocks(spec_.feature_size() / 2); }
int Encoder::sa_width() const { return width_for_blocks(spec_.feature_size() / 2 + 1); }
int Encoder::sas_width() const { return width_for_blocks(spec_.feature_size() + 1); }

void Encoder::put(std::span<const double> equ, Matrix& m, Eigen::Index col) const {
  if (mode_ == FeatureMode::kEquivariant) {
    for (size_t k = 0; k < equ.size(); ++k) m(static_cast<Eigen::Index>(k), col) = equ[k];
    return;
  }
  const size_t blocks = equ.size() / 2;
  Eigen::Index row = 0;
  for (size_t a = 0; a < blocks; ++a) {
    for (size_t b = a; b < blocks; ++b) m(row++, col) = equ[2 * a] * equ[2 * b] + equ[2 * a + 1] * equ[2 * b + 1];
  }
}

std::vector<AgentInputs> Encoder::encode(std::span<const demos::ContinuousTuple> batch) const {
  const int n = spec_.n_agents;
  const int F = spec_.feature_size();
  const auto B = static_cast<Eigen::Index>(batch.size());
  std::vector<AgentInputs> out(n);
  for (auto& in : out) {
    if (variant_ == Variant::kGail) {
      in.sas.resize(sas_width(), B);
    } else {
      in.sa.resize(sa_width(), B);
      in.s.resize(s_width(), B);
      in.s_next.resize(s_width(), B);
    }
  }
  std::vector<double> fs(F), fn(F), row(2 * F + 2);
  for (Eigen::Index b = 0; b < B; ++b) {
    const auto& t = batch[b];
    const auto s = envs::from_structured(spec_, t.s);
    const auto s_next = envs::from_structured(spec_, t.s_next);
    for (int i = 0; i < n; ++i) {
      envs::agent_features(spec_, s, i, fs);
      envs::agent_features(spec_, s_next, i, fn);
      const auto& a = t.actions[i].equ;
      std::copy(fs.begin(), fs.end(), row.begin());
      row[F] = a[0];
      row[F + 1] = a[1];
      auto& in = out[i];
      if (variant_ == Variant::kGail) {
        std::copy(fn.begin(), fn.end(), row.begin() + F + 2);
        put(row, in.sas, b);
      } else {
        put(std::span<const double>(row.data(), F + 2), in.sa, b);
        put(fs, in.s, b);
        put(fn, in.s_next, b);
      }
    }
  }
  return out;
}

Eigen::Index Discriminator::num_params() const {
  return net.num_params() + (variant == Variant::kAirl ? h.num_params() : 0);
}

Vector Discriminator::params() const {
  Vector p(num_params());
  p.head(net.num_params()) = net.params();
  if (variant == Variant::kAirl) p.tail(h.num_params()) = h.params();
  return p;
}

void Discriminator::set_params(const Vector& p) {
  if (p.size() != num_params()) throw DiscriminatorError("discriminator parameter size mismatch");
  net.params() = p.head(net.num_params());
  if (variant == Variant::kAirl) h.params() = p.tail(h.num_params());
}

Vector Discriminator::score(const AgentInputs& in) const {
  if (variant == Variant::kGail) return net.forward(in.sas).row(0).transpose();
  const Matrix g = net.forward(in.sa);
  const Matrix hs = h.forward(in.s);
  const Matrix hn = h.forward(in.s_next);
  return (g.row(0) + gamma * hn.row(0) - hs.row(0)).transpose();
}

void Discriminator::backward(const AgentInputs& in, const Vector& score_grad, Vector& grad) const {
  if (grad.size() == 0) grad = Vector::Zero(num_params());
  approx::ForwardCache cache;
  Vector g_net = Vector::Zero(net.num_params());
  const Matrix dy = score_grad.transpose();
  if (variant == Variant::kGail) {
    net.forward(in.sas, &cache);
    net.backward(cache, dy, g_net);
    grad.head(net.num_params()) += g_net;
    return;
  }
  net.forward(in.sa, &cache);
  net.backward(cache, dy, g_net);
  grad.head(net.num_params()) += g_net;
  Vector g_h = Vector::Zero(h.num_params());
  h.forward(in.s_next, &cache);
  h.backward(cache, gamma * dy, g_h);
  h.forward(in.s, &cache);
  h.backward(cache, -dy, g_h);
  grad.tail(h.num_params()) += g_h;
}

DiscriminatorSet::DiscriminatorSet(const DiscriminatorConfig& config, const Encoder& encoder, Rng& rng)
    : config_(config), n_agents_(encoder.spec().n_agents) {
  if (encoder.variant() != config.variant) throw DiscriminatorError("encoder and discriminator variants differ");
  const int count = config.shared ? 1 : n_agents_;
  for (int k = 0; k < count; ++k) {
    Discriminator d;
    d.variant = config.variant;
    d.gamma = config.gamma;
    auto widths = [&](int in) {
      std::vector<int> w{in};
      w.insert(w.end(), config.hidden.begin(), config.hidden.end());
      w.push_back(1);
      return w;
    };
    using approx::Activation;
    if (config.variant == Variant::kGail) {
      d.net = approx::Mlp(widths(encoder.sas_width()), Activation::kTanh, Activation::kIdentity, rng);
    } else {
      d.net = approx::Mlp(widths(encoder.sa_width()), Activation::kTanh, Activation::kIdentity, rng);
      d.h = approx::Mlp(widths(encoder.s_width()), Activation::kTanh, Activation::kIdentity, rng);
    }
    discs_.push_back(std::move(d));
  }
}

double logit_from(Variant v, double score, double log_pi) { return v == Variant::kGail ? score : score - log_pi; }

double d_prob(Variant v, double score, const double* log_pi) {
  if (v == Variant::kAirl && !log_pi) throw DiscriminatorError("airl discriminator needs the policy log-density");
  const double l = logit_from(v, score, log_pi ? *log_pi : 0.0);
  return std::clamp(sigmoid(l), kProbFloor, 1.0 - kProbFloor);
}

Vector d_prob(const Discriminator& d, const AgentInputs& in, const Vector* log_pi) {
  if (d.variant == Variant::kAirl && !log_pi) throw DiscriminatorError("airl discriminator needs the policy log-density");
  const Vector s = d.score(in);
  Vector p(s.size());
  for (Eigen::Index k = 0; k < s.size(); ++k) p[k] = d_prob(d.variant, s[k], log_pi ? &(*log_pi)[k] : nullptr);
  return p;
}

double reward_from(Variant v, GailReward mode, double score, double log_pi) {
  if (v == Variant::kAirl) return score - log_pi;
  const double l = std::clamp(score, -kMaxLogit, kMaxLogit);
  const double r = mode == GailReward::kNegLogOneMinusD ? softplus(l) : l;
  return std::clamp(r, -kRewardClamp, kRewardClamp);
}

Vector reward_signal(const Discriminator& d, GailReward mode, const AgentInputs& in, const Vector* log_pi) {
  if (d.variant == Variant::kAirl && !log_pi) throw DiscriminatorError("airl discriminator needs the policy log-density");
  const Vector s = d.score(in);
  Vector r(s.size());
  for (Eigen::Index k = 0; k < s.size(); ++k) r[k] = reward_from(d.variant, mode, s[k], log_pi ? (*log_pi)[k] : 0.0);
  return r;
}

LossResult& operator+=(LossResult& a, const LossResult& b) {
  a.value += b.value;
  if (a.grads.empty()) {
    a.grads = b.grads;
    return a;
  }
  for (size_t k = 0; k < a.grads.size(); ++k) a.grads[k] += b.grads[k];
  return a;
}

namespace {

// Adds one batch's cross-entropy term: -log D (expert) or -log(1 - D).
double batch_term(const Discriminator& d, const AgentInputs& in, const Matrix* log_pi, int agent, bool expert,
                  Vector& grad) {
  const Vector s = d.score(in);
  const auto B = s.size();
  Vector ds(B);
  double total = 0.0;
  for (Eigen::Index k = 0; k < B; ++k) {
    const double raw = logit_from(d.variant, s[k], log_pi ? (*log_pi)(agent, k) : 0.0);
    const double l = std::clamp(raw, -kMaxLogit, kMaxLogit);
    const bool clamped = l != raw;
    const double p = sigmoid(l);
    if (expert) {
      total += softplus(-l);
      ds[k] = clamped ? 0.0 : (p - 1.0);
    } else {
      total += softplus(l);
      ds[k] = clamped ? 0.0 : p;
    }
  }
  ds /= static_cast<double>(B);
  d.backward(in, ds, grad);
  return total / static_cast<double>(B);
}

}  // namespace

LossResult loss_plain(const DiscriminatorSet& discs, const Encoder& enc,
                      std::span<const demos::ContinuousTuple> expert,
                      std::span<const demos::ContinuousTuple> generated, const LogProbFn& log_pi) {
  if (expert.empty() || generated.empty()) throw DiscriminatorError("loss needs nonempty expert and generator batches");
  const bool airl = discs.config().variant == Variant::kAirl;
  if (airl && !log_pi) throw DiscriminatorError("airl loss needs the policy log-density");
  const auto in_e = enc.encode(expert);
  const auto in_g = enc.encode(generated);
  Matrix lp_e, lp_g;
  if (airl) {
    lp_e = log_pi(expert);
    lp_g = log_pi(generated);
  }
  LossResult out;
  out.grads.reserve(discs.discs().size());
  for (const auto& d : discs.discs()) out.grads.push_back(Vector::Zero(d.num_params()));
  for (int i = 0; i < discs.n_agents(); ++i) {
    const auto& d = discs.for_agent(i);
    Vector& grad = out.grads[discs.index_for_agent(i)];
    out.value += batch_term(d, in_e[i], airl ? &lp_e : nullptr, i, true, grad);
    out.value += batch_term(d, in_g[i], airl ? &lp_g : nullptr, i, false, grad);
  }
  return out;
}

std::vector<demos::ContinuousTuple> transform_batch(const group::GroupElement& g,
                                                    std::span<const demos::ContinuousTuple> batch) {
  std::vector<demos::ContinuousTuple> out;
  out.reserve(batch.size());
  for (const auto& t : batch) out.push_back(demos::transform_tuple(g, t));
  return out;
}

LossResult loss_symmetric(const DiscriminatorSet& discs, const Encoder& enc,
                          std::span<const demos::ContinuousTuple> expert,
                          std::span<const demos::ContinuousTuple> generated, const LogProbFn& log_pi,
                          const group::GroupElement& g) {
  if (g.is_identity()) return loss_plain(discs, enc, expert, generated, log_pi);
  const auto ge = transform_batch(g, expert);
  const auto gg = transform_batch(g, generated);
  return loss_plain(discs, enc, ge, gg, log_pi);
}

LossResult loss_symmetric_full(const DiscriminatorSet& discs, const Encoder& enc,
                               std::span<const demos::ContinuousTuple> expert,
                               std::span<const demos::ContinuousTuple> generated, const LogProbFn& log_pi,
                               std::span<const group::GroupElement> elements) {
  if (elements.empty()) throw DiscriminatorError("full-group loss needs at least one element");
  LossResult total;
  for (const auto& g : elements) total += loss_symmetric(discs, enc, expert, generated, log_pi, g);
  const double scale = 1.0 / static_cast<double>(elements.size());
  total.value *= scale;
  for (auto& gr : total.grads) gr *= scale;
  return total;
}

LossResult loss_sgf(const DiscriminatorSet& discs, const Encoder& enc,
                    std::span<const demos::ContinuousTuple> expert,
                    std::span<const demos::ContinuousTuple> generated, const LogProbFn& log_pi,
                    const group::GroupElement& g) {
  LossResult total = loss_plain(discs, enc, expert, generated, log_pi);
  total += loss_symmetric(discs, enc, expert, generated, log_pi, g);
  return total;
}

Matrix batch_rewards(const DiscriminatorSet& discs, const Encoder& enc,
                     std::span<const demos::ContinuousTuple> batch, const LogProbFn& log_pi) {
  const bool airl = discs.config().variant == Variant::kAirl;
  if (airl && !log_pi) throw DiscriminatorError("airl reward needs the policy log-density");
  const auto in = enc.encode(batch);
  Matrix lp;
  if (airl) lp = log_pi(batch);
  Matrix out(discs.n_agents(), static_cast<Eigen::Index>(batch.size()));
  for (int i = 0; i < discs.n_agents(); ++i) {
    Vector row_lp;
    if (airl) row_lp = lp.row(i).transpose();
    out.row(i) = reward_signal(discs.for_agent(i), discs.config().gail_reward, in[i], airl ? &row_lp : nullptr).transpose();
  }
  return out;
}

void save_discriminators(approx::Checkpoint& ckpt, const DiscriminatorSet& discs) {
  ckpt.text["disc.variant"] = variant_name(discs.config().variant);
  ckpt.text["disc.count"] = std::to_string(discs.discs().size());
  for (size_t k = 0; k < discs.discs().size(); ++k) {
    const auto& d = discs.discs()[k];
    ckpt.put_network("disc" + std::to_string(k) + ".net", d.net);
    if (d.variant == Variant::kAirl) ckpt.put_network("disc" + std::to_string(k) + ".h", d.h);
  }
}

void load_discriminators(const approx::Checkpoint& ckpt, DiscriminatorSet& discs) {
  if (ckpt.get_text("disc.variant") != variant_name(discs.config().variant) ||
      ckpt.get_text("disc.count") != std::to_string(discs.discs().size())) {
    throw approx::CheckpointError("checkpoint discriminators do not match the configured ones");
  }
  for (size_t k = 0; k < discs.discs().size(); ++k) {
    auto& d = discs.discs()[k];
    auto net = ckpt.get_network("disc" + std::to_string(k) + ".net");
    if (net.widths() != d.net.widths()) throw approx::CheckpointError("discriminator shape mismatch");
    d.net = std::move(net);
    if (d.variant == Variant::kAirl) {
      auto h = ckpt.get_network("disc" + std::to_string(k) + ".h");
      if (h.widths() != d.h.widths()) throw approx::CheckpointError("discriminator shape mismatch");
      d.h = std::move(h);
    }
  }
}

}  // namespace sgf::adversarial
