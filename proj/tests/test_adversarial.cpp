#include <cmath>

#include "doctest.h"
#include "sgf/adversarial.hpp"

using namespace sgf::adversarial;
using sgf::Rng;
using sgf::demos::ContinuousTuple;
using sgf::envs::EnvKind;
using sgf::envs::EnvSpec;
using sgf::envs::Vec2;

namespace {

// Random-action transitions tagged with episode_id = -1.
std::vector<ContinuousTuple> random_batch(const EnvSpec& spec, int size, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<ContinuousTuple> out;
  auto s = sgf::envs::reset(spec, seed);
  for (int k = 0; k < size; ++k) {
    std::vector<Vec2> a(spec.n_agents);
    for (auto& v : a) v = {sgf::uniform(rng, -1.2, 1.2), sgf::uniform(rng, -1.2, 1.2)};
    const auto next = sgf::envs::step(spec, s, a).state;
    out.push_back(sgf::demos::make_demo_tuple(spec, s, a, next, -1, k));
    s = next;
  }
  return out;
}

std::vector<ContinuousTuple> expert_batch(const EnvSpec& spec, int size) {
  return sgf::demos::record_expert(spec, size, 99, 10).tuples();
}

// Smooth, rotation-invariant stand-in for log pi.
Matrix fake_log_pi(const EnvSpec& spec, std::span<const ContinuousTuple> b) {
  Matrix out(spec.n_agents, static_cast<Eigen::Index>(b.size()));
  for (size_t k = 0; k < b.size(); ++k) {
    for (int i = 0; i < spec.n_agents; ++i) {
      const auto a = sgf::demos::action_of(b[k], i);
      out(i, static_cast<Eigen::Index>(k)) = -1.0 - 0.5 * (a.x * a.x + a.y * a.y) +
                                          0.1 * (b[k].s.equ[2 * i] * b[k].s.equ[2 * i] + b[k].s.equ[2 * i + 1] * b[k].s.equ[2 * i + 1]);
    }
  }
  return out;
}

// Builds gB from the environment's state action and Vec2 rotation, without
// going through the tuple transform used by the losses.
std::vector<ContinuousTuple> transform_independently(const EnvSpec& spec, const sgf::group::GroupElement& g,
                                                     std::span<const ContinuousTuple> batch) {
  std::vector<ContinuousTuple> out;
  for (const auto& t : batch) {
    const auto s = sgf::envs::transform(spec, g, sgf::envs::from_structured(spec, t.s));
    const auto n = sgf::envs::transform(spec, g, sgf::envs::from_structured(spec, t.s_next));
    std::vector<Vec2> a(spec.n_agents);
    for (int i = 0; i < spec.n_agents; ++i) a[i] = sgf::envs::apply(g, sgf::demos::action_of(t, i));
    out.push_back(sgf::demos::make_demo_tuple(spec, s, a, n, t.episode_id, t.step_index));
  }
  return out;
}

double max_abs_diff(const LossResult& a, const LossResult& b) {
  double m = std::abs(a.value - b.value);
  for (size_t k = 0; k < a.grads.size(); ++k) m = std::max(m, (a.grads[k] - b.grads[k]).cwiseAbs().maxCoeff());
  return m;
}

struct Setup {
  EnvSpec spec;
  Encoder enc;
  DiscriminatorSet discs;
  LogProbFn log_pi;

  Setup(EnvKind kind, Variant v, FeatureMode mode, bool shared, std::uint64_t seed = 3)
      : spec(sgf::envs::make_spec(kind, 3)), enc(spec, v, mode) {
    DiscriminatorConfig c;
    c.variant = v;
    c.features = mode;
    c.hidden = {8, 8};
    c.shared = shared;
    Rng rng(seed);
    discs = DiscriminatorSet(c, enc, rng);
    if (v == Variant::kAirl) {
      const EnvSpec sp = spec;
      log_pi = [sp](std::span<const ContinuousTuple> b) { return fake_log_pi(sp, b); };
    }
  }
};

}  // namespace

TEST_CASE("variant names") {
  CHECK(parse_variant("gail") == Variant::kGail);
  CHECK(parse_variant("ma-airl") == Variant::kAirl);
  CHECK(variant_name(Variant::kAirl) == "airl");
  CHECK_THROWS_AS(parse_variant("bc"), std::invalid_argument);
}

TEST_CASE("probability map examples") {
  CHECK(d_prob(Variant::kGail, 0.0, nullptr) == 0.5);
  CHECK(d_prob(Variant::kGail, 1e6, nullptr) == 1.0 - kProbFloor);
  CHECK(d_prob(Variant::kGail, -1e6, nullptr) == kProbFloor);
  const double lp = -1.3;
  CHECK(d_prob(Variant::kAirl, lp, &lp) == 0.5);
  CHECK_THROWS_AS(d_prob(Variant::kAirl, 0.0, nullptr), DiscriminatorError);

  // D = exp f / (exp f + pi)
  Rng rng(5);
  for (int k = 0; k < 1000; ++k) {
    const double f = sgf::uniform(rng, -5.0, 5.0);
    const double log_pi = sgf::uniform(rng, -5.0, 2.0);
    const double expected = std::exp(f) / (std::exp(f) + std::exp(log_pi));
    CHECK(std::abs(d_prob(Variant::kAirl, f, &log_pi) - expected) <= 1e-10);
  }
}

TEST_CASE("generator reward examples") {
  for (double l : {-3.0, -0.5, 0.0, 0.7, 4.0}) {
    const double d = 1.0 / (1.0 + std::exp(-l));
    CHECK(reward_from(Variant::kGail, GailReward::kNegLogOneMinusD, l, 0.0) == doctest::Approx(-std::log(1.0 - d)).epsilon(1e-12));
    CHECK(reward_from(Variant::kGail, GailReward::kLogit, l, 0.0) == doctest::Approx(l));
  }
  CHECK(reward_from(Variant::kGail, GailReward::kNegLogOneMinusD, 100.0, 0.0) == kRewardClamp);
  CHECK(reward_from(Variant::kGail, GailReward::kLogit, -100.0, 0.0) == -kRewardClamp);
  CHECK(reward_from(Variant::kAirl, GailReward::kLogit, 2.5, -1.0) == 3.5);
  CHECK(reward_from(Variant::kAirl, GailReward::kLogit, 100.0, -100.0) == 200.0);
}

TEST_CASE("encoder widths") {
  const auto spec = sgf::envs::make_spec(EnvKind::kRendezvous, 3);
  const int F = spec.feature_size();
  Encoder gail(spec, Variant::kGail, FeatureMode::kEquivariant);
  CHECK(gail.sas_width() == 2 * F + 2);
  Encoder airl(spec, Variant::kAirl, FeatureMode::kEquivariant);
  CHECK(airl.sa_width() == F + 2);
  CHECK(airl.s_width() == F);
  Encoder inv(spec, Variant::kAirl, FeatureMode::kInvariant);
  const int blocks = F / 2;
  CHECK(inv.s_width() == blocks * (blocks + 1) / 2);
  const auto batch = expert_batch(spec, 4);
  const auto in = airl.encode(batch);
  REQUIRE(in.size() == 3);
  CHECK(in[0].sa.rows() == F + 2);
  CHECK(in[0].sa.cols() == 4);
  // action rows sit right after the state features
  CHECK(in[1].sa(F, 2) == batch[2].actions[1].equ[0]);
  CHECK(in[1].sa(F + 1, 2) == batch[2].actions[1].equ[1]);
}

TEST_CASE("loss is 2 N ln 2 when D is one half everywhere") {
  for (auto v : {Variant::kGail, Variant::kAirl}) {
    Setup st(EnvKind::kRendezvous, v, FeatureMode::kEquivariant, false);
    for (auto& d : st.discs.discs()) d.set_params(Vector::Zero(d.num_params()));
    // airl logit is f - log pi = -log pi, so a zero log-density gives D = 1/2
    LogProbFn zero = [&](std::span<const ContinuousTuple> b) {
      return Matrix::Zero(st.spec.n_agents, static_cast<Eigen::Index>(b.size())).eval();
    };
    const auto loss = loss_plain(st.discs, st.enc, expert_batch(st.spec, 16), random_batch(st.spec, 16, 1), zero);
    CHECK(std::abs(loss.value - 2.0 * st.spec.n_agents * std::log(2.0)) <= 1e-12);
  }
}

TEST_CASE("a perfect discriminator drives the loss to zero") {
  Setup st(EnvKind::kRendezvous, Variant::kAirl, FeatureMode::kEquivariant, false);
  for (auto& d : st.discs.discs()) d.set_params(Vector::Zero(d.num_params()));
  // f = 0, so the logit is -log pi: large on expert tuples, very negative on generated ones
  LogProbFn lp = [&](std::span<const ContinuousTuple> b) {
    Matrix m(st.spec.n_agents, static_cast<Eigen::Index>(b.size()));
    for (size_t k = 0; k < b.size(); ++k) m.col(static_cast<Eigen::Index>(k)).setConstant(b[k].episode_id < 0 ? 40.0 : -40.0);
    return m;
  };
  const auto loss = loss_plain(st.discs, st.enc, expert_batch(st.spec, 8), random_batch(st.spec, 8, 2), lp);
  // logits are clamped at log((1 - floor) / floor), so each of the 2N terms bottoms out near the floor
  CHECK(loss.value >= 0.0);
  CHECK(loss.value <= 2.0 * st.spec.n_agents * kProbFloor * (1.0 + 1e-6));
}

TEST_CASE("discriminator gradients match finite differences") {
  for (auto v : {Variant::kGail, Variant::kAirl}) {
    for (auto mode : {FeatureMode::kEquivariant, FeatureMode::kInvariant}) {
      for (bool shared : {false, true}) {
        Setup st(EnvKind::kPursuit, v, mode, shared);
        const auto xe = expert_batch(st.spec, 6);
        const auto xg = random_batch(st.spec, 6, 4);
        const auto g = sgf::group::GroupElement{1, true, 4};
        const auto analytic = loss_sgf(st.discs, st.enc, xe, xg, st.log_pi, g);
        for (size_t d = 0; d < st.discs.discs().size(); ++d) {
          auto& disc = st.discs.discs()[d];
          const Vector p0 = disc.params();
          Vector fd(p0.size());
          const double h = 1e-5;
          for (Eigen::Index k = 0; k < p0.size(); ++k) {
            Vector p = p0;
            p[k] += h;
            disc.set_params(p);
            const double up = loss_sgf(st.discs, st.enc, xe, xg, st.log_pi, g).value;
            p[k] -= 2 * h;
            disc.set_params(p);
            const double down = loss_sgf(st.discs, st.enc, xe, xg, st.log_pi, g).value;
            fd[k] = (up - down) / (2 * h);
          }
          disc.set_params(p0);
          const double rel = (fd - analytic.grads[d]).norm() / std::max(1e-12, fd.norm());
          INFO("variant " << variant_name(v) << " invariant " << (mode == FeatureMode::kInvariant) << " shared "
                          << shared << " disc " << d);
          CHECK(rel <= 1e-4);
        }
      }
    }
  }
}

TEST_CASE("symmetric loss equals the plain loss on an independently transformed batch") {
  for (auto kind : {EnvKind::kRendezvous, EnvKind::kPursuit, EnvKind::kVicsek}) {
    for (auto v : {Variant::kGail, Variant::kAirl}) {
      Setup st(kind, v, FeatureMode::kEquivariant, false);
      const auto xe = expert_batch(st.spec, 8);
      const auto xg = random_batch(st.spec, 8, 6);
      for (const auto& g : sgf::group::dihedral_elements(4)) {
        const auto lhs = loss_symmetric(st.discs, st.enc, xe, xg, st.log_pi, g);
        const auto rhs = loss_plain(st.discs, st.enc, transform_independently(st.spec, g, xe),
                                    transform_independently(st.spec, g, xg), st.log_pi);
        CHECK(max_abs_diff(lhs, rhs) <= 1e-12);
      }
    }
  }
}

TEST_CASE("invariant features make the symmetric loss equal the plain loss") {
  for (auto v : {Variant::kGail, Variant::kAirl}) {
    Setup st(EnvKind::kRendezvous, v, FeatureMode::kInvariant, false);
    const auto xe = expert_batch(st.spec, 8);
    const auto xg = random_batch(st.spec, 8, 7);
    const auto plain = loss_plain(st.discs, st.enc, xe, xg, st.log_pi);
    for (const auto& g : sgf::group::dihedral_elements(4)) {
      CHECK(max_abs_diff(loss_symmetric(st.discs, st.enc, xe, xg, st.log_pi, g), plain) <= 1e-12);
    }
  }
}

TEST_CASE("the combined loss is the sum of its parts") {
  Setup st(EnvKind::kVicsek, Variant::kAirl, FeatureMode::kEquivariant, false);
  const auto xe = expert_batch(st.spec, 8);
  const auto xg = random_batch(st.spec, 8, 8);
  const sgf::group::GroupElement g{3, false, 4};
  auto sum = loss_plain(st.discs, st.enc, xe, xg, st.log_pi);
  sum += loss_symmetric(st.discs, st.enc, xe, xg, st.log_pi, g);
  CHECK(max_abs_diff(loss_sgf(st.discs, st.enc, xe, xg, st.log_pi, g), sum) <= 1e-12);

  const auto elements = sgf::group::dihedral_elements(4);
  LossResult avg;
  for (const auto& h : elements) avg += loss_symmetric(st.discs, st.enc, xe, xg, st.log_pi, h);
  avg.value /= 8.0;
  for (auto& gr : avg.grads) gr /= 8.0;
  CHECK(max_abs_diff(loss_symmetric_full(st.discs, st.enc, xe, xg, st.log_pi, elements), avg) <= 1e-12);
}

TEST_CASE("loss preconditions") {
  Setup airl(EnvKind::kRendezvous, Variant::kAirl, FeatureMode::kEquivariant, false);
  const auto xe = expert_batch(airl.spec, 4);
  CHECK_THROWS_AS(loss_plain(airl.discs, airl.enc, xe, xe, nullptr), DiscriminatorError);
  CHECK_THROWS_AS(loss_plain(airl.discs, airl.enc, xe, {}, airl.log_pi), DiscriminatorError);
}

TEST_CASE("batch rewards follow the per-agent reward signal") {
  Setup st(EnvKind::kRendezvous, Variant::kAirl, FeatureMode::kEquivariant, false);
  const auto xg = random_batch(st.spec, 5, 9);
  const Matrix r = batch_rewards(st.discs, st.enc, xg, st.log_pi);
  const auto in = st.enc.encode(xg);
  const Matrix lp = st.log_pi(xg);
  for (int i = 0; i < st.spec.n_agents; ++i) {
    const Vector f = st.discs.for_agent(i).score(in[i]);
    for (int k = 0; k < 5; ++k) CHECK(r(i, k) == f[k] - lp(i, k));
  }
}

TEST_CASE("discriminators survive a checkpoint round trip") {
  Setup st(EnvKind::kPursuit, Variant::kAirl, FeatureMode::kEquivariant, false);
  sgf::approx::Checkpoint ck;
  save_discriminators(ck, st.discs);
  Setup other(EnvKind::kPursuit, Variant::kAirl, FeatureMode::kEquivariant, false, 11);
  load_discriminators(ck, other.discs);
  for (size_t k = 0; k < st.discs.discs().size(); ++k) {
    CHECK(other.discs.discs()[k].params() == st.discs.discs()[k].params());
  }
  Setup gail(EnvKind::kPursuit, Variant::kGail, FeatureMode::kEquivariant, false);
  CHECK_THROWS_AS(load_discriminators(ck, gail.discs), sgf::approx::CheckpointError);
}
