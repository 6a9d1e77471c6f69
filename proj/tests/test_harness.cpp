#include <filesystem>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "sgf/harness.hpp"

using namespace sgf::harness;
using sgf::Rng;

namespace {

ExperimentConfig tiny(const std::string& env = "rendezvous", const std::string& algo = "ma-gail") {
  ExperimentConfig c;
  c.env = env;
  c.algorithm = algo;
  c.n_agents = 3;
  c.demos = 40;
  c.seeds = {4, 9};
  c.updates = 3;
  c.episode_steps = 20;
  c.disc_batch = 16;
  c.disc_hidden = {8};
  c.policy_hidden = {8};
  c.ppo_epochs = 2;
  c.minibatch = 16;
  c.eval_episodes = 2;
  return c;
}

std::filesystem::path temp_dir(const std::string& name) {
  const auto p = std::filesystem::temp_directory_path() / ("sgf_harness_" + name);
  std::filesystem::remove_all(p);
  return p;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream is(p, std::ios::binary);
  std::stringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

std::string strip_timestamps(const std::string& csv) {
  std::stringstream in(csv), out;
  for (std::string line; std::getline(in, line);) out << line.substr(0, line.rfind(',')) << "\n";
  return out.str();
}

// The adversarial imitation loop written out directly from the library
// primitives, without any of the symmetry options.
std::vector<MetricsRow> baseline_loop(const ExperimentConfig& c, const sgf::demos::DemoStore& expert,
                                      std::uint64_t seed, sgf::approx::Checkpoint& ckpt) {
  namespace adv = sgf::adversarial;
  namespace marl = sgf::marl;
  const auto spec = sgf::envs::make_spec(sgf::envs::parse_env_name(c.env), c.n_agents);
  adv::DiscriminatorConfig dc;
  dc.variant = adv::parse_variant(c.algorithm);
  dc.hidden = c.disc_hidden;
  dc.gamma = c.gamma;
  const adv::Encoder enc(spec, dc.variant, dc.features);
  marl::PolicyConfig pc;
  pc.hidden = c.policy_hidden;
  pc.init_log_std = c.init_log_std;
  marl::PpoConfig ppo;
  ppo.epochs = c.ppo_epochs;
  ppo.minibatch = c.minibatch;

  Rng rng(seed);
  marl::ActorCritic policy(spec, pc, rng);
  adv::DiscriminatorSet discs(dc, enc, rng);
  marl::Optimizers opt(policy, ppo);
  std::vector<sgf::approx::AdamState> dopt(discs.discs().size(), sgf::approx::AdamState(c.disc_lr));
  adv::LogProbFn lp = [&](std::span<const sgf::demos::ContinuousTuple> b) { return policy.log_prob_tuples(b); };
  marl::RolloutOptions ro;
  ro.episode_steps = c.episode_steps;

  std::vector<MetricsRow> rows;
  for (int u = 0; u < c.updates; ++u) {
    auto buf = marl::collect_rollouts(policy, ro, rng);
    MetricsRow row;
    row.seed = seed;
    row.update = u;
    for (int k = 0; k < c.disc_updates; ++k) {
      const auto xe = sgf::demos::sample_batch(expert, c.disc_batch, rng, true);
      std::vector<sgf::demos::ContinuousTuple> xg;
      for (size_t i : sgf::demos::sample_indices(buf.tuples.size(), c.disc_batch, rng, true)) xg.push_back(buf.tuples[i]);
      const auto loss = adv::loss_plain(discs, enc, xe, xg, lp);
      for (size_t d = 0; d < discs.discs().size(); ++d) {
        auto p = discs.discs()[d].params();
        sgf::approx::adam_step(dopt[d], p, loss.grads[d]);
        discs.discs()[d].set_params(p);
      }
      row.disc_loss = loss.value;
    }
    marl::label_rewards(buf, policy, discs, enc);
    const auto stats = marl::ppo_update(policy, opt, buf, ppo, rng, true);
    row.true_return = buf.episode_returns[0];
    row.policy_loss = stats.policy_loss;
    row.value_loss = stats.value_loss;
    rows.push_back(row);
  }
  policy.save(ckpt);
  adv::save_discriminators(ckpt, discs);
  return rows;
}

}  // namespace

TEST_CASE("config text round trip and overrides") {
  auto c = parse_config("config_version = 1\nenv = vicsek  # comment\nseeds = 3, 4,5\nsad = true\ndisc_lr = 0.002\n");
  CHECK(c.env == "vicsek");
  CHECK(c.seeds == std::vector<std::uint64_t>{3, 4, 5});
  CHECK(c.sad);
  CHECK(c.disc_lr == 0.002);
  CHECK(c.n_agents == ExperimentConfig{}.n_agents);
  apply_override(c, "disc_hidden", "16,16,16");
  CHECK(c.disc_hidden == std::vector<int>{16, 16, 16});
  const auto again = parse_config(dump_config(c));
  CHECK(dump_config(again) == dump_config(c));
  CHECK(config_keys().size() > 30);
}

TEST_CASE("config errors") {
  CHECK_THROWS_AS(parse_config("env = vicsek\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("config_version = 2\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("config_version = 1\nlearning_rate = 3\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("config_version = 1\nupdates = many\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("config_version = 1\nsad = maybe\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("config_version = 1\njust words\n"), ConfigError);
  auto c = tiny();
  c.env = "flocking";
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = tiny();
  c.seeds.clear();
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = tiny();
  c.disc_features = "polar";
  CHECK_THROWS_AS(c.validate(), ConfigError);
  CHECK_THROWS_AS(load_config("/nonexistent/config.txt"), ConfigError);
}

TEST_CASE("metrics rows and summaries") {
  MetricsRow r;
  r.seed = 7;
  r.update = 12;
  r.true_return = -41.123456789012345;
  r.d_expert = 0.6;
  r.approx_kl = 1e-9;
  r.timestamp = "2026-01-02T03:04:05Z";
  const auto back = parse_row(format_row(r));
  CHECK(back.seed == 7);
  CHECK(back.update == 12);
  CHECK(back.true_return == r.true_return);
  CHECK(back.approx_kl == r.approx_kl);
  CHECK(back.timestamp == r.timestamp);
  CHECK_THROWS_AS(parse_row("1,2,3"), ConfigError);

  CHECK(tail_mean({}) == 0.0);
  CHECK(tail_mean({1, 2, 3}) == 3.0);
  std::vector<double> v(20);
  for (int k = 0; k < 20; ++k) v[k] = k;
  CHECK(tail_mean(v) == 18.5);
  const auto s = summarize("x", {1.0, 3.0});
  CHECK(s.mean == 2.0);
  CHECK(s.stddev == 1.0);
}

TEST_CASE("zero updates evaluate the initial policy") {
  auto c = tiny();
  c.updates = 0;
  c.seeds = {2};
  const auto expert = expert_demos(c);
  const auto r = train_seed(c, expert, 2);
  CHECK(r.rows.empty());
  CHECK(r.eval.returns.size() == 2);
  CHECK(r.convergence == r.eval.mean_return);
}

TEST_CASE("with symmetry options off training matches a plain adversarial loop") {
  for (const std::string algo : {"ma-gail", "ma-airl"}) {
    auto c = tiny("pursuit", algo);
    const auto expert = expert_demos(c);
    const auto r = train_seed(c, expert, 5);
    sgf::approx::Checkpoint ref;
    const auto rows = baseline_loop(c, expert, 5, ref);
    REQUIRE(rows.size() == r.rows.size());
    for (size_t k = 0; k < rows.size(); ++k) {
      CHECK(rows[k].true_return == r.rows[k].true_return);
      CHECK(rows[k].disc_loss == r.rows[k].disc_loss);
      CHECK(rows[k].policy_loss == r.rows[k].policy_loss);
      CHECK(rows[k].value_loss == r.rows[k].value_loss);
    }
    for (const auto& [key, arr] : ref.arrays) {
      INFO(algo << " " << key);
      CHECK(r.checkpoint.arrays.at(key) == arr);
    }
  }
}

TEST_CASE("symmetry options change training") {
  auto c = tiny("pursuit");
  const auto expert = expert_demos(c);
  const auto plain = train_seed(c, expert, 5);
  c.sad = true;
  const auto sad = train_seed(c, expert, 5);
  CHECK(sad.rows.back().disc_loss != plain.rows.back().disc_loss);
  c.sad = false;
  c.augment_expert = true;
  const auto aug = train_seed(c, expert, 5);
  CHECK(aug.checkpoint.get("disc0.net.params") != plain.checkpoint.get("disc0.net.params"));
}

TEST_CASE("runs are byte reproducible and their records verify") {
  auto c = tiny("vicsek", "ma-airl");
  c.sad = true;
  c.augment_expert = true;
  const auto a = temp_dir("a"), b = temp_dir("b");
  c.output_dir = a.string();
  train(c, true);
  std::filesystem::copy(a, b);
  const auto rec = train(c, true);
  for (const char* f : {"config.txt", "summary.txt", "seed4.ckpt", "seed9.ckpt"}) {
    INFO(f);
    CHECK(slurp(a / f) == slurp(b / f));
  }
  CHECK(strip_timestamps(slurp(a / "metrics.csv")) == strip_timestamps(slurp(b / "metrics.csv")));
  CHECK(verify_record(a).empty());
  CHECK(rec.convergence.per_seed.size() == 2);

  const auto ck = load_seed_checkpoint(a, 9);
  CHECK(ck.get_text("seed") == "9");
  CHECK(parse_config(ck.get_text("config")).env == "vicsek");

  // tamper with the summary and with a metrics row
  std::string summary = slurp(a / "summary.txt");
  const auto pos = summary.find("convergence.mean = ") + std::string("convergence.mean = ").size();
  summary.insert(pos, "1");
  std::ofstream(a / "summary.txt") << summary;
  CHECK(!verify_record(a).empty());
  std::filesystem::copy_file(b / "summary.txt", a / "summary.txt", std::filesystem::copy_options::overwrite_existing);
  CHECK(verify_record(a).empty());
  std::string metrics = slurp(a / "metrics.csv");
  const auto row = metrics.rfind("\n4,2,");
  REQUIRE(row != std::string::npos);
  metrics.insert(row + 5, "9");
  std::ofstream(a / "metrics.csv") << metrics;
  CHECK(!verify_record(a).empty());
  CHECK(!verify_record(temp_dir("missing")).empty());
}

TEST_CASE("reward map layout") {
  auto c = tiny("rendezvous", "ma-airl");
  const auto spec = c.env_spec();
  const auto dcfg = c.disc_config();
  const sgf::adversarial::Encoder enc(spec, dcfg.variant, dcfg.features);
  Rng rng(1);
  sgf::adversarial::DiscriminatorSet discs(dcfg, enc, rng);
  const auto s = sgf::envs::reset(spec, 3);

  const auto map = reward_map(discs, enc, nullptr, s, 1, 3);
  REQUIRE(map.values.size() == 9);
  CHECK(map.extent == spec.max_accel);
  // cell (ix, iy) holds f for the acceleration (x_ix, y_iy) with x, y in {-1, 0, 1}
  std::vector<sgf::envs::Vec2> a(3);
  a[1] = {1.0, -1.0};
  const auto next = sgf::envs::step(spec, s, a).state;
  const auto t = sgf::demos::make_demo_tuple(spec, s, a, next, 0, 0);
  const auto in = enc.encode(std::span(&t, 1));
  CHECK(map.values[0 * 3 + 2] == discs.for_agent(1).score(in[1])[0]);
  const auto best = std::max_element(map.values.begin(), map.values.end()) - map.values.begin();
  CHECK(map.argmax.x == -1.0 + static_cast<double>(best % 3));
  CHECK(map.argmax.y == -1.0 + static_cast<double>(best / 3));

  for (auto& d : discs.discs()) d.set_params(sgf::approx::Vector::Zero(d.num_params()));
  const auto flat = reward_map(discs, enc, nullptr, s, 0, 5);
  for (double v : flat.values) CHECK(v == 0.0);

  const auto svg = heatmap_svg(map, "agent 1");
  CHECK(svg.find("<svg") == 0);
  size_t rects = 0;
  for (size_t p = svg.find("<rect"); p != std::string::npos; p = svg.find("<rect", p + 1)) ++rects;
  CHECK(rects == 9);

  CHECK_THROWS_AS(reward_map(discs, enc, nullptr, s, 3, 3), std::out_of_range);
  auto gc = tiny("rendezvous", "ma-gail");
  const sgf::adversarial::Encoder genc(spec, gc.disc_config().variant, gc.disc_config().features);
  sgf::adversarial::DiscriminatorSet gdiscs(gc.disc_config(), genc, rng);
  CHECK_THROWS_AS(reward_map(gdiscs, genc, nullptr, s, 0, 3), sgf::adversarial::DiscriminatorError);
}

TEST_CASE("reward maps of an invariant discriminator rotate with the state") {
  auto c = tiny("rendezvous", "ma-airl");
  c.disc_features = "invariant";
  const auto spec = c.env_spec();
  const auto dcfg = c.disc_config();
  const sgf::adversarial::Encoder enc(spec, dcfg.variant, dcfg.features);
  Rng rng(2);
  sgf::adversarial::DiscriminatorSet discs(dcfg, enc, rng);
  const auto s = sgf::envs::reset(spec, 8);
  const int n = 7;
  const auto base = reward_map(discs, enc, nullptr, s, 2, n);
  auto coord = [&](int k) { return -1.0 + 2.0 * k / (n - 1); };
  auto index = [&](double v) { return static_cast<int>(std::lround((v + 1.0) * (n - 1) / 2.0)); };
  for (const auto& g : sgf::group::dihedral_elements(4)) {
    const auto moved = reward_map(discs, enc, nullptr, sgf::envs::transform(spec, g, s), 2, n);
    for (int iy = 0; iy < n; ++iy) {
      for (int ix = 0; ix < n; ++ix) {
        const auto ga = sgf::envs::apply(g, {coord(ix), coord(iy)});
        const double want = base.values[iy * n + ix];
        const double got = moved.values[index(ga.y) * n + index(ga.x)];
        CHECK(std::abs(got - want) <= 1e-12);
      }
    }
  }
}

TEST_CASE("farthest agent from the centroid") {
  sgf::envs::EnvState s;
  s.positions = {{0.0, 0.0}, {0.2, 0.0}, {-1.5, 1.0}, {0.1, 0.1}};
  CHECK(farthest_from_centroid(s) == 2);
}

TEST_CASE("line plot svg") {
  const auto svg = line_plot_svg({{"seed 1", {1, 2, 3}}, {"seed 2", {2, 2, 1}}}, "returns", "true return");
  CHECK(svg.find("<svg") == 0);
  CHECK(svg.find("seed 2") != std::string::npos);
  size_t lines = 0;
  for (size_t p = svg.find("<polyline"); p != std::string::npos; p = svg.find("<polyline", p + 1)) ++lines;
  CHECK(lines == 2);
}
