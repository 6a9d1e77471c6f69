#include "sgf/harness.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <ctime>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <sstream>

namespace sgf::harness {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  for (std::string part; std::getline(ss, part, sep);) out.push_back(trim(part));
  return out;
}

std::string fmt_double(double v) {
  char buf[40];
  const auto r = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, r.ptr);
}

template <typename T>
T parse_number(const std::string& key, const std::string& v) {
  T out{};
  const auto r = std::from_chars(v.data(), v.data() + v.size(), out);
  if (r.ec != std::errc() || r.ptr != v.data() + v.size()) {
    throw ConfigError("bad value '" + v + "' for key '" + key + "'");
  }
  return out;
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "on" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "off" || v == "no") return false;
  throw ConfigError("bad boolean '" + v + "' for key '" + key + "'");
}

template <typename T>
std::string join(const std::vector<T>& v) {
  std::string s;
  for (size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + std::to_string(v[i]);
  return s;
}

template <typename T>
std::vector<T> parse_list(const std::string& key, const std::string& v) {
  std::vector<T> out;
  if (trim(v).empty()) return out;
  for (const auto& p : split(v, ',')) out.push_back(parse_number<T>(key, p));
  return out;
}

struct Field {
  std::function<std::string(const ExperimentConfig&)> get;
  std::function<void(ExperimentConfig&, const std::string&)> set;
};

const std::vector<std::pair<std::string, Field>>& fields() {
  static const std::vector<std::pair<std::string, Field>> table = [] {
    std::vector<std::pair<std::string, Field>> t;
#define SGF_STR(name)                                                                   \
  t.push_back({#name, {[](const ExperimentConfig& c) { return c.name; },               \
                       [](ExperimentConfig& c, const std::string& v) { c.name = v; }}})
#define SGF_NUM(name, type)                                                                    \
  t.push_back({#name, {[](const ExperimentConfig& c) { return std::to_string(c.name); },      \
                       [](ExperimentConfig& c, const std::string& v) { c.name = parse_number<type>(#name, v); }}})
#define SGF_DBL(name)                                                                          \
  t.push_back({#name, {[](const ExperimentConfig& c) { return fmt_double(c.name); },          \
                       [](ExperimentConfig& c, const std::string& v) { c.name = parse_number<double>(#name, v); }}})
#define SGF_BOOL(name)                                                                          \
  t.push_back({#name, {[](const ExperimentConfig& c) { return std::string(c.name ? "true" : "false"); }, \
                       [](ExperimentConfig& c, const std::string& v) { c.name = parse_bool(#name, v); }}})
#define SGF_LIST(name, type)                                                                    \
  t.push_back({#name, {[](const ExperimentConfig& c) { return join(c.name); },                 \
                       [](ExperimentConfig& c, const std::string& v) { c.name = parse_list<type>(#name, v); }}})
    SGF_STR(env);
    SGF_NUM(n_agents, int);
    SGF_STR(algorithm);
    SGF_BOOL(augment_expert);
    SGF_BOOL(sad);
    SGF_BOOL(sad_full_group);
    SGF_NUM(group_order, int);
    SGF_NUM(demos, int);
    SGF_NUM(demo_episode_steps, int);
    SGF_NUM(expert_seed, std::uint64_t);
    SGF_STR(demo_file);
    SGF_LIST(seeds, std::uint64_t);
    SGF_NUM(updates, int);
    SGF_NUM(rollout_episodes, int);
    SGF_NUM(episode_steps, int);
    SGF_NUM(disc_updates, int);
    SGF_NUM(disc_batch, int);
    SGF_DBL(disc_lr);
    SGF_LIST(disc_hidden, int);
    SGF_BOOL(disc_shared);
    SGF_STR(disc_features);
    SGF_STR(gail_reward);
    SGF_LIST(policy_hidden, int);
    SGF_DBL(init_log_std);
    SGF_BOOL(shared_actor);
    SGF_DBL(gamma);
    SGF_DBL(lambda);
    SGF_DBL(clip_eps);
    SGF_NUM(ppo_epochs, int);
    SGF_NUM(minibatch, int);
    SGF_DBL(actor_lr);
    SGF_DBL(critic_lr);
    SGF_DBL(entropy_coef);
    SGF_BOOL(normalize_rewards);
    SGF_NUM(eval_episodes, int);
    SGF_NUM(eval_seed, std::uint64_t);
    SGF_STR(output_dir);
#undef SGF_STR
#undef SGF_NUM
#undef SGF_DBL
#undef SGF_BOOL
#undef SGF_LIST
    return t;
  }();
  return table;
}

std::string now_iso() {
  const auto t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

}  // namespace

envs::EnvSpec ExperimentConfig::env_spec() const { return envs::make_spec(envs::parse_env_name(env), n_agents); }

adversarial::Variant ExperimentConfig::variant() const { return adversarial::parse_variant(algorithm); }

adversarial::DiscriminatorConfig ExperimentConfig::disc_config() const {
  adversarial::DiscriminatorConfig d;
  d.variant = variant();
  d.features = disc_features == "invariant" ? adversarial::FeatureMode::kInvariant
                                            : adversarial::FeatureMode::kEquivariant;
  d.hidden = disc_hidden;
  d.gamma = gamma;
  d.shared = disc_shared;
  d.gail_reward = gail_reward == "logit" ? adversarial::GailReward::kLogit : adversarial::GailReward::kNegLogOneMinusD;
  return d;
}

marl::PolicyConfig ExperimentConfig::policy_config() const {
  marl::PolicyConfig p;
  p.hidden = policy_hidden;
  p.init_log_std = init_log_std;
  p.shared_actor = shared_actor;
  return p;
}

marl::PpoConfig ExperimentConfig::ppo_config() const {
  marl::PpoConfig p;
  p.gamma = gamma;
  p.lambda = lambda;
  p.clip_eps = clip_eps;
  p.epochs = ppo_epochs;
  p.minibatch = minibatch;
  p.actor_lr = actor_lr;
  p.critic_lr = critic_lr;
  p.entropy_coef = entropy_coef;
  p.normalize_rewards = normalize_rewards;
  return p;
}

std::vector<group::GroupElement> ExperimentConfig::group_elements() const {
  return group::dihedral_elements(group_order);
}

void ExperimentConfig::validate() const {
  auto require = [](bool ok, const std::string& what) {
    if (!ok) throw ConfigError(what);
  };
  try {
    envs::parse_env_name(env);
    adversarial::parse_variant(algorithm);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  require(n_agents >= 2, "n_agents must be >= 2");
  require(group_order >= 1, "group_order must be >= 1");
  require(demos >= 1, "demos must be >= 1");
  require(demo_episode_steps >= 1, "demo_episode_steps must be >= 1");
  require(!seeds.empty(), "seeds must not be empty");
  require(updates >= 0, "updates must be >= 0");
  require(rollout_episodes >= 1, "rollout_episodes must be >= 1");
  require(episode_steps >= 1, "episode_steps must be >= 1");
  require(disc_updates >= 0, "disc_updates must be >= 0");
  require(disc_batch >= 1, "disc_batch must be >= 1");
  require(disc_lr > 0.0, "disc_lr must be positive");
  require(!disc_hidden.empty() && !policy_hidden.empty(), "hidden layer lists must not be empty");
  require(disc_features == "equivariant" || disc_features == "invariant",
          "disc_features must be equivariant or invariant");
  require(gail_reward == "neglog1m" || gail_reward == "logit", "gail_reward must be neglog1m or logit");
  require(gamma > 0.0 && gamma <= 1.0, "gamma must be in (0, 1]");
  require(lambda >= 0.0 && lambda <= 1.0, "lambda must be in [0, 1]");
  require(clip_eps >= 0.0, "clip_eps must be >= 0");
  require(ppo_epochs >= 0 && minibatch >= 1, "bad PPO batch settings");
  require(actor_lr > 0.0 && critic_lr > 0.0, "learning rates must be positive");
  require(eval_episodes >= 0, "eval_episodes must be >= 0");
  try {
    env_spec().validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
}

std::vector<std::string> config_keys() {
  std::vector<std::string> keys;
  for (const auto& [k, f] : fields()) keys.push_back(k);
  return keys;
}

void apply_override(ExperimentConfig& config, const std::string& key, const std::string& value) {
  for (const auto& [k, f] : fields()) {
    if (k == key) {
      f.set(config, trim(value));
      return;
    }
  }
  throw ConfigError("unknown config key '" + key + "'");
}

ExperimentConfig parse_config(const std::string& text) {
  ExperimentConfig c;
  bool versioned = false;
  std::stringstream ss(text);
  int line_no = 0;
  for (std::string line; std::getline(ss, line);) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError("line " + std::to_string(line_no) + ": expected key = value");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key == "config_version") {
      if (value != std::to_string(kConfigVersion)) throw ConfigError("unsupported config_version " + value);
      versioned = true;
      continue;
    }
    apply_override(c, key, value);
  }
  if (!versioned) throw ConfigError("config is missing config_version");
  return c;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot read config " + path.string());
  std::stringstream ss;
  ss << is.rdbuf();
  return parse_config(ss.str());
}

std::string dump_config(const ExperimentConfig& config) {
  std::string s = "config_version = " + std::to_string(kConfigVersion) + "\n";
  for (const auto& [k, f] : fields()) s += k + " = " + f.get(config) + "\n";
  return s;
}

std::string metrics_header() {
  return "seed,update,true_return,final_order,disc_loss,d_expert,d_generator,policy_loss,value_loss,entropy,"
         "approx_kl,timestamp";
}

std::string format_row(const MetricsRow& r) {
  std::string s = std::to_string(r.seed) + "," + std::to_string(r.update);
  for (double v : {r.true_return, r.final_order, r.disc_loss, r.d_expert, r.d_generator, r.policy_loss, r.value_loss,
                   r.entropy, r.approx_kl}) {
    s += "," + fmt_double(v);
  }
  return s + "," + r.timestamp;
}

MetricsRow parse_row(const std::string& line) {
  const auto p = split(line, ',');
  if (p.size() != 12) throw ConfigError("metrics row has " + std::to_string(p.size()) + " fields");
  MetricsRow r;
  r.seed = parse_number<std::uint64_t>("seed", p[0]);
  r.update = parse_number<int>("update", p[1]);
  double* dst[] = {&r.true_return, &r.final_order, &r.disc_loss, &r.d_expert, &r.d_generator,
                   &r.policy_loss, &r.value_loss, &r.entropy, &r.approx_kl};
  for (int k = 0; k < 9; ++k) *dst[k] = parse_number<double>("metric", p[2 + k]);
  r.timestamp = p[11];
  return r;
}

double tail_mean(const std::vector<double>& values) {
  if (values.empty()) return 0.0;
  const size_t k = std::max<size_t>(1, (values.size() + 9) / 10);
  double s = 0.0;
  for (size_t i = values.size() - k; i < values.size(); ++i) s += values[i];
  return s / static_cast<double>(k);
}

Summary summarize(const std::string& metric, const std::vector<double>& per_seed) {
  Summary s;
  s.metric = metric;
  s.per_seed = per_seed;
  if (per_seed.empty()) return s;
  s.mean = std::accumulate(per_seed.begin(), per_seed.end(), 0.0) / per_seed.size();
  double ss = 0.0;
  for (double v : per_seed) ss += (v - s.mean) * (v - s.mean);
  s.stddev = std::sqrt(ss / per_seed.size());
  return s;
}

demos::DemoStore expert_demos(const ExperimentConfig& config) {
  const auto spec = config.env_spec();
  if (!config.demo_file.empty()) {
    auto store = demos::load(config.demo_file, spec.fingerprint());
    if (store.provenance() != "expert") throw ConfigError(config.demo_file + " does not hold raw expert demos");
    return store;
  }
  return demos::record_expert(spec, static_cast<size_t>(config.demos), config.expert_seed, config.demo_episode_steps);
}

SeedResult train_seed(const ExperimentConfig& config, const demos::DemoStore& expert_raw, std::uint64_t seed,
                      const ProgressFn& progress) {
  config.validate();
  const auto spec = config.env_spec();
  expert_raw.require_spec(spec);
  const auto dcfg = config.disc_config();
  const auto pcfg = config.ppo_config();
  const adversarial::Encoder enc(spec, dcfg.variant, dcfg.features);
  const auto elements = config.group_elements();

  Rng rng(seed);
  marl::ActorCritic policy(spec, config.policy_config(), rng);
  adversarial::DiscriminatorSet discs(dcfg, enc, rng);
  marl::Optimizers opt(policy, pcfg);
  std::vector<approx::AdamState> disc_opt(discs.discs().size(), approx::AdamState(config.disc_lr));

  const demos::DemoStore expert = config.augment_expert ? demos::augment(expert_raw, elements) : expert_raw;
  adversarial::LogProbFn log_pi = [&](std::span<const demos::ContinuousTuple> b) { return policy.log_prob_tuples(b); };

  SeedResult result;
  result.seed = seed;
  marl::RolloutOptions ro;
  ro.episodes = config.rollout_episodes;
  ro.episode_steps = config.episode_steps;

  for (int u = 0; u < config.updates; ++u) {
    auto buf = marl::collect_rollouts(policy, ro, rng);
    MetricsRow row;
    row.seed = seed;
    row.update = u;

    for (int k = 0; k < config.disc_updates; ++k) {
      const auto xe = demos::sample_batch(expert, static_cast<size_t>(config.disc_batch), rng, true);
      std::vector<demos::ContinuousTuple> xg;
      xg.reserve(config.disc_batch);
      for (size_t i : demos::sample_indices(buf.tuples.size(), static_cast<size_t>(config.disc_batch), rng, true)) {
        xg.push_back(buf.tuples[i]);
      }
      auto loss = adversarial::loss_plain(discs, enc, xe, xg, log_pi);
      if (config.sad) {
        if (config.sad_full_group) {
          loss += adversarial::loss_symmetric_full(discs, enc, xe, xg, log_pi, elements);
        } else {
          const auto& g = elements[uniform_index(rng, elements.size())];
          loss += adversarial::loss_symmetric(discs, enc, xe, xg, log_pi, g);
        }
      }
      for (size_t d = 0; d < discs.discs().size(); ++d) {
        approx::Vector p = discs.discs()[d].params();
        approx::adam_step(disc_opt[d], p, loss.grads[d]);
        discs.discs()[d].set_params(p);
      }
      if (k + 1 == config.disc_updates) {
        row.disc_loss = loss.value;
        const auto in_e = enc.encode(xe);
        const auto in_g = enc.encode(xg);
        approx::Matrix lp_e, lp_g;
        if (dcfg.variant == adversarial::Variant::kAirl) {
          lp_e = log_pi(xe);
          lp_g = log_pi(xg);
        }
        for (int i = 0; i < spec.n_agents; ++i) {
          approx::Vector le, lg;
          if (dcfg.variant == adversarial::Variant::kAirl) {
            le = lp_e.row(i).transpose();
            lg = lp_g.row(i).transpose();
          }
          const bool airl = dcfg.variant == adversarial::Variant::kAirl;
          row.d_expert += adversarial::d_prob(discs.for_agent(i), in_e[i], airl ? &le : nullptr).mean();
          row.d_generator += adversarial::d_prob(discs.for_agent(i), in_g[i], airl ? &lg : nullptr).mean();
        }
        row.d_expert /= spec.n_agents;
        row.d_generator /= spec.n_agents;
      }
    }

    marl::label_rewards(buf, policy, discs, enc);
    const auto stats = marl::ppo_update(policy, opt, buf, pcfg, rng, true);

    row.true_return = std::accumulate(buf.episode_returns.begin(), buf.episode_returns.end(), 0.0) /
                      static_cast<double>(buf.episode_returns.size());
    row.final_order = std::accumulate(buf.final_order.begin(), buf.final_order.end(), 0.0) /
                      static_cast<double>(buf.final_order.size());
    row.policy_loss = stats.policy_loss;
    row.value_loss = stats.value_loss;
    row.entropy = stats.entropy;
    row.approx_kl = stats.approx_kl;
    row.timestamp = now_iso();
    if (progress) progress(row);
    result.rows.push_back(row);
  }

  result.eval = marl::evaluate(policy, config.eval_episodes, config.episode_steps, config.eval_seed, true);
  std::vector<double> returns;
  for (const auto& r : result.rows) returns.push_back(r.true_return);
  result.convergence = returns.empty() ? result.eval.mean_return : tail_mean(returns);

  auto& ck = result.checkpoint;
  ck.text["config"] = dump_config(config);
  ck.text["seed"] = std::to_string(seed);
  policy.save(ck);
  adversarial::save_discriminators(ck, discs);
  for (size_t k = 0; k < opt.actors.size(); ++k) ck.put_adam("opt.actor" + std::to_string(k), opt.actors[k]);
  ck.put_adam("opt.log_std", opt.log_std);
  ck.put_adam("opt.critic", opt.critic);
  ck.put("opt.returns", approx::Vector{{opt.returns.count, opt.returns.mean, opt.returns.m2}});
  for (size_t d = 0; d < disc_opt.size(); ++d) ck.put_adam("opt.disc" + std::to_string(d), disc_opt[d]);
  return result;
}

void write_summary(const RunRecord& record, const std::filesystem::path& path) {
  std::ofstream os(path);
  if (!os) throw ConfigError("cannot write " + path.string());
  os << "summary_version = 1\n";
  std::vector<std::uint64_t> seeds;
  for (const auto& s : record.seeds) seeds.push_back(s.seed);
  os << "seeds = " << join(seeds) << "\n";
  for (const auto* s : {&record.convergence, &record.final_return, &record.final_order}) {
    std::string vals;
    for (size_t i = 0; i < s->per_seed.size(); ++i) vals += (i ? "," : "") + fmt_double(s->per_seed[i]);
    os << s->metric << ".per_seed = " << vals << "\n";
    os << s->metric << ".mean = " << fmt_double(s->mean) << "\n";
    os << s->metric << ".std = " << fmt_double(s->stddev) << "\n";
  }
}

approx::Checkpoint load_seed_checkpoint(const std::filesystem::path& run_dir, std::uint64_t seed) {
  return approx::Checkpoint::load(run_dir / ("seed" + std::to_string(seed) + ".ckpt"));
}

RunRecord train(const ExperimentConfig& config, bool write_files, const ProgressFn& progress) {
  config.validate();
  const auto expert = expert_demos(config);
  RunRecord record;
  record.config = config;
  const std::filesystem::path dir = config.output_dir;
  std::ofstream metrics;
  if (write_files) {
    std::filesystem::create_directories(dir);
    std::ofstream(dir / "config.txt") << dump_config(config);
    metrics.open(dir / "metrics.csv", std::ios::trunc);
    metrics << metrics_header() << "\n";
  }
  std::vector<double> conv, ret, order;
  for (auto seed : config.seeds) {
    auto r = train_seed(config, expert, seed, progress);
    if (write_files) {
      for (const auto& row : r.rows) metrics << format_row(row) << "\n";
      metrics.flush();
      r.checkpoint.save(dir / ("seed" + std::to_string(seed) + ".ckpt"));
    }
    conv.push_back(r.convergence);
    ret.push_back(r.eval.mean_return);
    order.push_back(r.eval.mean_final_order);
    record.seeds.push_back(std::move(r));
  }
  record.convergence = summarize("convergence", conv);
  record.final_return = summarize("final_return", ret);
  record.final_order = summarize("final_order", order);
  if (write_files) write_summary(record, dir / "summary.txt");
  return record;
}

std::vector<std::string> verify_record(const std::filesystem::path& run_dir) {
  std::vector<std::string> problems;
  std::ifstream mf(run_dir / "metrics.csv");
  if (!mf) return {"missing metrics.csv"};
  std::string line;
  std::getline(mf, line);
  if (trim(line) != metrics_header()) problems.push_back("metrics.csv header mismatch");
  std::map<std::uint64_t, std::vector<double>> returns;
  std::vector<std::uint64_t> order;
  int line_no = 1;
  while (std::getline(mf, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    try {
      const auto r = parse_row(line);
      if (r.timestamp.empty()) problems.push_back("row " + std::to_string(line_no) + " has no timestamp");
      if (!returns.count(r.seed)) order.push_back(r.seed);
      auto& v = returns[r.seed];
      if (r.update != static_cast<int>(v.size())) {
        problems.push_back("row " + std::to_string(line_no) + " breaks the update sequence");
      }
      v.push_back(r.true_return);
    } catch (const std::exception& e) {
      problems.push_back("row " + std::to_string(line_no) + ": " + e.what());
    }
  }

  std::ifstream sf(run_dir / "summary.txt");
  if (!sf) {
    problems.push_back("missing summary.txt");
    return problems;
  }
  std::map<std::string, std::string> kv;
  while (std::getline(sf, line)) {
    const auto eq = line.find('=');
    if (eq != std::string::npos) kv[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
  }
  auto close = [](double a, double b) { return std::abs(a - b) <= 1e-12 * std::max(1.0, std::abs(b)); };
  const auto seeds = parse_list<std::uint64_t>("seeds", kv["seeds"]);
  for (const std::string metric : {"convergence", "final_return", "final_order"}) {
    const auto per_seed = parse_list<double>(metric, kv[metric + ".per_seed"]);
    if (per_seed.size() != seeds.size()) {
      problems.push_back(metric + ": per-seed count does not match seed list");
      continue;
    }
    const auto s = summarize(metric, per_seed);
    if (!close(s.mean, parse_number<double>(metric, kv[metric + ".mean"]))) problems.push_back(metric + ".mean mismatch");
    if (!close(s.stddev, parse_number<double>(metric, kv[metric + ".std"]))) problems.push_back(metric + ".std mismatch");
    if (metric != "convergence") continue;
    for (size_t i = 0; i < seeds.size(); ++i) {
      const auto it = returns.find(seeds[i]);
      if (it == returns.end()) {
        // zero-update runs have no rows; their value comes from evaluation
        continue;
      }
      if (!close(tail_mean(it->second), per_seed[i])) {
        problems.push_back("convergence for seed " + std::to_string(seeds[i]) + " does not match metrics rows");
      }
    }
  }
  if (order != std::vector<std::uint64_t>(seeds.begin(), seeds.begin() + std::min(seeds.size(), order.size()))) {
    problems.push_back("metrics seeds do not follow the summary seed order");
  }
  return problems;
}

int farthest_from_centroid(const envs::EnvState& state) {
  envs::Vec2 c;
  for (const auto& p : state.positions) c += p;
  c = c * (1.0 / static_cast<double>(state.positions.size()));
  int best = 0;
  double best_d = -1.0;
  for (size_t i = 0; i < state.positions.size(); ++i) {
    const double d = envs::norm(state.positions[i] - c);
    if (d > best_d) best_d = d, best = static_cast<int>(i);
  }
  return best;
}

RewardMap reward_map(const adversarial::DiscriminatorSet& discs, const adversarial::Encoder& enc,
                     const marl::ActorCritic* policy, const envs::EnvState& state, int agent, int resolution,
                     bool include_policy_term) {
  if (discs.config().variant != adversarial::Variant::kAirl) {
    throw adversarial::DiscriminatorError(
        "reward maps need an airl checkpoint: a gail discriminator has no separable reward term");
  }
  if (include_policy_term && !policy) throw adversarial::DiscriminatorError("policy term requested without a policy");
  const auto& spec = enc.spec();
  if (agent < 0 || agent >= spec.n_agents) throw std::out_of_range("agent index out of range");
  if (resolution < 1) throw std::invalid_argument("resolution must be >= 1");
  RewardMap map;
  map.resolution = resolution;
  map.extent = spec.max_accel;
  std::vector<demos::ContinuousTuple> batch;
  batch.reserve(static_cast<size_t>(resolution) * resolution);
  std::vector<envs::Vec2> actions(spec.n_agents);
  auto coord = [&](int k) {
    return resolution == 1 ? 0.0 : -map.extent + 2.0 * map.extent * k / (resolution - 1);
  };
  for (int iy = 0; iy < resolution; ++iy) {
    for (int ix = 0; ix < resolution; ++ix) {
      actions[agent] = {coord(ix), coord(iy)};
      const auto next = envs::step(spec, state, actions).state;
      batch.push_back(demos::make_demo_tuple(spec, state, actions, next, 0, state.time_step));
    }
  }
  const auto in = enc.encode(batch);
  approx::Vector values = discs.for_agent(agent).score(in[agent]);
  if (include_policy_term) values -= policy->log_prob_tuples(batch).row(agent).transpose();
  map.values.assign(values.data(), values.data() + values.size());
  const auto best = std::max_element(map.values.begin(), map.values.end()) - map.values.begin();
  map.argmax = {coord(static_cast<int>(best % resolution)), coord(static_cast<int>(best / resolution))};
  return map;
}

namespace {

std::string colour(double t) {
  // Piecewise-linear dark blue -> teal -> yellow.
  t = std::clamp(t, 0.0, 1.0);
  const double stops[3][3] = {{68, 1, 84}, {33, 145, 140}, {253, 231, 37}};
  const int k = t < 0.5 ? 0 : 1;
  const double u = t < 0.5 ? t / 0.5 : (t - 0.5) / 0.5;
  char buf[16];
  std::snprintf(buf, sizeof(buf), "#%02x%02x%02x", static_cast<int>(stops[k][0] + u * (stops[k + 1][0] - stops[k][0])),
                static_cast<int>(stops[k][1] + u * (stops[k + 1][1] - stops[k][1])),
                static_cast<int>(stops[k][2] + u * (stops[k + 1][2] - stops[k][2])));
  return buf;
}

std::string xml_escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    if (c == '<') out += "&lt;";
    else if (c == '>') out += "&gt;";
    else if (c == '&') out += "&amp;";
    else out += c;
  }
  return out;
}

}  // namespace

std::string heatmap_svg(const RewardMap& map, const std::string& title) {
  const int n = map.resolution;
  const double size = 400.0, margin = 50.0, cell = size / n;
  const auto [lo_it, hi_it] = std::minmax_element(map.values.begin(), map.values.end());
  const double lo = *lo_it, hi = *hi_it;
  std::ostringstream os;
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << size + 2 * margin << "\" height=\""
     << size + 2 * margin << "\">\n";
  os << "<text x=\"" << margin << "\" y=\"30\" font-family=\"sans-serif\" font-size=\"14\">" << xml_escape(title)
     << "</text>\n";
  for (int iy = 0; iy < n; ++iy) {
    for (int ix = 0; ix < n; ++ix) {
      const double v = map.values[static_cast<size_t>(iy) * n + ix];
      const double t = hi > lo ? (v - lo) / (hi - lo) : 0.5;
      // y axis points up
      os << "<rect x=\"" << margin + ix * cell << "\" y=\"" << margin + (n - 1 - iy) * cell << "\" width=\"" << cell
         << "\" height=\"" << cell << "\" fill=\"" << colour(t) << "\"/>\n";
    }
  }
  const double cx = margin + size / 2, cy = margin + size / 2;
  const double ax = cx + map.argmax.x / map.extent * size / 2, ay = cy - map.argmax.y / map.extent * size / 2;
  os << "<line x1=\"" << cx << "\" y1=\"" << cy << "\" x2=\"" << ax << "\" y2=\"" << ay
     << "\" stroke=\"red\" stroke-width=\"3\"/>\n";
  os << "<text x=\"" << margin << "\" y=\"" << size + margin + 30 << "\" font-family=\"sans-serif\" font-size=\"12\">"
     << "a_x, a_y in [" << -map.extent << ", " << map.extent << "]; range " << lo << " .. " << hi << "</text>\n";
  os << "</svg>\n";
  return os.str();
}

std::string line_plot_svg(const std::vector<std::pair<std::string, std::vector<double>>>& series,
                          const std::string& title, const std::string& y_label) {
  const double w = 640, h = 400, ml = 70, mr = 150, mt = 40, mb = 50;
  double lo = 0, hi = 1;
  size_t len = 1;
  bool first = true;
  for (const auto& [name, v] : series) {
    for (double x : v) {
      if (first) lo = hi = x, first = false;
      lo = std::min(lo, x), hi = std::max(hi, x);
    }
    len = std::max(len, v.size());
  }
  if (hi <= lo) hi = lo + 1.0;
  static const char* palette[] = {"#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b"};
  std::ostringstream os;
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w << "\" height=\"" << h << "\">\n";
  os << "<text x=\"" << ml << "\" y=\"25\" font-family=\"sans-serif\" font-size=\"14\">" << xml_escape(title)
     << "</text>\n";
  os << "<rect x=\"" << ml << "\" y=\"" << mt << "\" width=\"" << w - ml - mr << "\" height=\"" << h - mt - mb
     << "\" fill=\"none\" stroke=\"black\"/>\n";
  os << "<text x=\"10\" y=\"" << mt + 10 << "\" font-family=\"sans-serif\" font-size=\"11\">" << hi << "</text>\n";
  os << "<text x=\"10\" y=\"" << h - mb << "\" font-family=\"sans-serif\" font-size=\"11\">" << lo << "</text>\n";
  os << "<text x=\"10\" y=\"" << h / 2 << "\" font-family=\"sans-serif\" font-size=\"11\">" << xml_escape(y_label)
     << "</text>\n";
  os << "<text x=\"" << ml << "\" y=\"" << h - 15 << "\" font-family=\"sans-serif\" font-size=\"11\">update (0 .. "
     << len - 1 << ")</text>\n";
  for (size_t s = 0; s < series.size(); ++s) {
    const auto& v = series[s].second;
    os << "<polyline fill=\"none\" stroke=\"" << palette[s % 6] << "\" stroke-width=\"1.5\" points=\"";
    for (size_t i = 0; i < v.size(); ++i) {
      const double x = ml + (len > 1 ? static_cast<double>(i) / (len - 1) : 0.0) * (w - ml - mr);
      const double y = mt + (1.0 - (v[i] - lo) / (hi - lo)) * (h - mt - mb);
      os << x << "," << y << " ";
    }
    os << "\"/>\n";
    os << "<text x=\"" << w - mr + 10 << "\" y=\"" << mt + 15 * (s + 1) << "\" font-family=\"sans-serif\" "
       << "font-size=\"11\" fill=\"" << palette[s % 6] << "\">" << xml_escape(series[s].first) << "</text>\n";
  }
  os << "</svg>\n";
  return os.str();
}

}  // namespace sgf::harness
