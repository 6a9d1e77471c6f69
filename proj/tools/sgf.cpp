// Command-line front end: expert generation, augmentation, training,
// evaluation, reward maps, plots and record checks.
//
// Exit codes: 0 success, 1 bad input or configuration, 2 a check failed.
// Relative output paths are resolved under $SGF_OUTPUT_ROOT when it is set.

#include <CLI11.hpp>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>

#include "sgf/harness.hpp"
#include "sgf/theory.hpp"

namespace fs = std::filesystem;
using namespace sgf;

namespace {

constexpr int kExitInput = 1;
constexpr int kExitGate = 2;

fs::path output_path(const std::string& p) {
  const fs::path path(p);
  const char* root = std::getenv("SGF_OUTPUT_ROOT");
  if (path.is_absolute() || !root || !*root) return path;
  return fs::path(root) / path;
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream os(path);
  if (!os) throw harness::ConfigError("cannot write " + path.string());
  os << text;
}

harness::ExperimentConfig load_with_overrides(const std::string& config_path, const std::vector<std::string>& sets) {
  harness::ExperimentConfig c = config_path.empty() ? harness::ExperimentConfig{} : harness::load_config(config_path);
  for (const auto& kv : sets) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw harness::ConfigError("--set expects key=value, got '" + kv + "'");
    harness::apply_override(c, kv.substr(0, eq), kv.substr(eq + 1));
  }
  c.validate();
  return c;
}

int cmd_gen_experts(const std::string& env, int n_agents, int count, int steps, std::uint64_t seed,
                    const std::string& out) {
  const auto spec = envs::make_spec(envs::parse_env_name(env), n_agents);
  const auto store = demos::record_expert(spec, static_cast<size_t>(count), seed, steps);
  const auto path = output_path(out);
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  demos::save(store, path);
  std::cout << "wrote " << store.size() << " tuples (" << spec.fingerprint() << ") to " << path << "\n";
  return 0;
}

int cmd_augment(const std::string& in, const std::string& out, int order) {
  const auto store = demos::load(in);
  const auto elements = group::dihedral_elements(order);
  const auto aug = demos::augment(store, elements);
  const auto path = output_path(out);
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  demos::save(aug, path);
  std::cout << store.size() << " -> " << aug.size() << " tuples written to " << path << "\n";
  return 0;
}

int cmd_train(harness::ExperimentConfig c, bool quiet) {
  c.output_dir = output_path(c.output_dir).string();
  std::cout << "# effective config\n" << harness::dump_config(c);
  const auto start = std::chrono::steady_clock::now();
  const auto record = harness::train(c, true, [&](const harness::MetricsRow& r) {
    if (quiet) return;
    const int every = std::max(1, c.updates / 10);
    if (r.update % every == 0 || r.update + 1 == c.updates) {
      std::printf("seed %llu update %d return %.4f order %.4f D(expert) %.3f D(gen) %.3f\n",
                  static_cast<unsigned long long>(r.seed), r.update, r.true_return, r.final_order, r.d_expert,
                  r.d_generator);
      std::fflush(stdout);
    }
  });
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  std::printf("convergence %.6f +- %.6f, final return %.6f, final order %.6f (%.1f s)\n", record.convergence.mean,
              record.convergence.stddev, record.final_return.mean, record.final_order.mean, secs);
  std::cout << "run written to " << c.output_dir << "\n";
  return 0;
}

int cmd_eval(const std::string& run_dir, std::uint64_t seed, int episodes, bool stochastic) {
  const auto ck = harness::load_seed_checkpoint(run_dir, seed);
  const auto cfg = harness::parse_config(ck.get_text("config"));
  const auto policy = marl::ActorCritic::load(ck, cfg.env_spec());
  const auto res = marl::evaluate(policy, episodes, cfg.episode_steps, cfg.eval_seed, !stochastic);
  std::printf("mean return %.6f over %d episodes", res.mean_return, episodes);
  if (!res.final_order.empty()) std::printf(", mean final order %.6f", res.mean_final_order);
  std::printf("\n");
  return 0;
}

int cmd_verify_theory(int instances, int draws, int bound_instances, std::uint64_t seed) {
  const auto sound = theory::feasible_reward_soundness(instances, draws, 6, 3, seed);
  const auto comp = theory::feasible_reward_completeness(instances, 3, seed + 1);
  const auto bound = theory::augmentation_bound_sweep(bound_instances, {1, 5, 20, 100, 1000}, seed + 2);
  std::printf("feasible rewards: %d/%d draws optimal\n", sound.draws - sound.failures, sound.draws);
  std::printf("reconstruction: %d cases, max residual %.3g, %d non-optimal greedy experts\n", comp.cases,
              comp.max_residual, comp.not_optimal);
  std::printf("augmentation bound: %d instances, %d/%d cells with delta < 0, min delta %.3g\n", bound.instances,
              bound.failing_cells, bound.cells, bound.min_delta);
  const bool ok = sound.failures == 0 && comp.not_optimal == 0 && comp.max_residual <= 1e-8 && bound.failing_cells == 0;
  std::cout << (ok ? "all checks passed\n" : "CHECK FAILED\n");
  return ok ? 0 : kExitGate;
}

int cmd_reward_map(const std::string& run_dir, std::uint64_t seed, int agent, int resolution,
                   std::uint64_t state_seed, bool policy_term, const std::string& out) {
  const auto ck = harness::load_seed_checkpoint(run_dir, seed);
  const auto cfg = harness::parse_config(ck.get_text("config"));
  const auto spec = cfg.env_spec();
  const auto dcfg = cfg.disc_config();
  const adversarial::Encoder enc(spec, dcfg.variant, dcfg.features);
  Rng rng(0);
  adversarial::DiscriminatorSet discs(dcfg, enc, rng);
  adversarial::load_discriminators(ck, discs);
  const auto policy = marl::ActorCritic::load(ck, spec);
  const auto state = envs::reset(spec, state_seed);
  if (agent < 0) agent = harness::farthest_from_centroid(state);
  const auto map = harness::reward_map(discs, enc, &policy, state, agent, resolution, policy_term);

  envs::Vec2 centroid;
  for (const auto& p : state.positions) centroid += p;
  centroid = centroid * (1.0 / spec.n_agents);
  const auto offset = state.positions[agent] - centroid;
  const double inner = envs::dot(map.argmax, offset);
  std::printf("agent %d offset from centroid (%.4f, %.4f); argmax acceleration (%.4f, %.4f); inner product %.6f\n",
              agent, offset.x, offset.y, map.argmax.x, map.argmax.y, inner);
  const auto path = output_path(out);
  write_text(path, harness::heatmap_svg(map, "recovered reward, agent " + std::to_string(agent) + ", seed " +
                                                 std::to_string(seed)));
  std::cout << "heatmap written to " << path << "\n";
  return 0;
}

int cmd_plot(const std::string& run_dir, const std::string& metric, const std::string& out) {
  std::ifstream is(fs::path(run_dir) / "metrics.csv");
  if (!is) throw harness::ConfigError("no metrics.csv in " + run_dir);
  std::string line;
  std::getline(is, line);
  std::map<std::uint64_t, std::vector<double>> series;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    const auto r = harness::parse_row(line);
    double v = 0.0;
    if (metric == "true_return") v = r.true_return;
    else if (metric == "final_order") v = r.final_order;
    else if (metric == "disc_loss") v = r.disc_loss;
    else if (metric == "d_expert") v = r.d_expert;
    else if (metric == "d_generator") v = r.d_generator;
    else throw harness::ConfigError("unknown metric '" + metric + "'");
    series[r.seed].push_back(v);
  }
  std::vector<std::pair<std::string, std::vector<double>>> lines;
  for (auto& [seed, v] : series) lines.push_back({"seed " + std::to_string(seed), std::move(v)});
  const auto path = output_path(out);
  write_text(path, harness::line_plot_svg(lines, run_dir, metric));
  std::cout << "plot written to " << path << "\n";
  return 0;
}

int cmd_verify_record(const std::string& run_dir) {
  const auto problems = harness::verify_record(run_dir);
  for (const auto& p : problems) std::cout << "problem: " << p << "\n";
  if (!problems.empty()) return kExitGate;
  std::cout << "record consistent\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Symmetry-augmented multi-agent adversarial imitation"};
  app.require_subcommand(1);

  std::string env = "rendezvous", out, in, run_dir, config_path, metric = "true_return";
  int n_agents = 5, count = 100, steps = 20, order = 4, episodes = 10, agent = -1, resolution = 41;
  std::uint64_t seed = 1, state_seed = 0;
  bool stochastic = false, quiet = false, policy_term = false;
  std::vector<std::string> sets;
  int instances = 100, draws = 50, bound_instances = 200;

  auto* gen = app.add_subcommand("gen-experts", "record scripted expert demonstrations");
  gen->add_option("--env", env, "rendezvous | pursuit | vicsek")->capture_default_str();
  gen->add_option("--n-agents", n_agents)->capture_default_str();
  gen->add_option("--demos", count, "number of tuples")->capture_default_str();
  gen->add_option("--episode-steps", steps)->capture_default_str();
  gen->add_option("--seed", seed)->capture_default_str();
  gen->add_option("--out", out)->required();

  auto* aug = app.add_subcommand("augment", "apply every element of D_n to a demo file");
  aug->add_option("--in", in)->required();
  aug->add_option("--out", out)->required();
  aug->add_option("--group-order", order)->capture_default_str();

  auto* train = app.add_subcommand("train", "run adversarial imitation for every configured seed");
  train->add_option("--config", config_path, "key = value config file");
  train->add_option("--set", sets, "override, key=value (repeatable)");
  train->add_flag("--quiet", quiet);

  auto* dump = app.add_subcommand("dump-config", "print the effective configuration");
  dump->add_option("--config", config_path);
  dump->add_option("--set", sets);

  auto* eval = app.add_subcommand("eval", "evaluate a trained policy on the true reward");
  eval->add_option("--run-dir", run_dir)->required();
  eval->add_option("--seed", seed)->capture_default_str();
  eval->add_option("--episodes", episodes)->capture_default_str();
  eval->add_flag("--stochastic", stochastic, "sample actions instead of taking the mean");

  auto* theory_cmd = app.add_subcommand("verify-theory", "randomised checks of the tabular results");
  theory_cmd->add_option("--instances", instances)->capture_default_str();
  theory_cmd->add_option("--draws", draws)->capture_default_str();
  theory_cmd->add_option("--bound-instances", bound_instances)->capture_default_str();
  theory_cmd->add_option("--seed", seed)->capture_default_str();

  auto* rmap = app.add_subcommand("reward-map", "heatmap of the recovered airl reward over accelerations");
  rmap->add_option("--run-dir", run_dir)->required();
  rmap->add_option("--seed", seed)->capture_default_str();
  rmap->add_option("--agent", agent, "default: agent farthest from the centroid");
  rmap->add_option("--resolution", resolution)->capture_default_str();
  rmap->add_option("--state-seed", state_seed, "reset seed of the probed state")->capture_default_str();
  rmap->add_flag("--policy-term", policy_term, "subtract log pi as well");
  rmap->add_option("--out", out)->required();

  auto* plot = app.add_subcommand("plot", "learning curves from metrics.csv");
  plot->add_option("--run-dir", run_dir)->required();
  plot->add_option("--metric", metric)->capture_default_str();
  plot->add_option("--out", out)->required();

  auto* verify = app.add_subcommand("verify-record", "recompute the summary from metrics.csv");
  verify->add_option("--run-dir", run_dir)->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitInput;
  }

  try {
    if (*gen) return cmd_gen_experts(env, n_agents, count, steps, seed, out);
    if (*aug) return cmd_augment(in, out, order);
    if (*train) return cmd_train(load_with_overrides(config_path, sets), quiet);
    if (*dump) {
      std::cout << harness::dump_config(load_with_overrides(config_path, sets));
      return 0;
    }
    if (*eval) return cmd_eval(run_dir, seed, episodes, stochastic);
    if (*theory_cmd) return cmd_verify_theory(instances, draws, bound_instances, seed);
    if (*rmap) return cmd_reward_map(run_dir, seed, agent, resolution, state_seed, policy_term, out);
    if (*plot) return cmd_plot(run_dir, metric, out);
    if (*verify) return cmd_verify_record(run_dir);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitInput;
  }
  return kExitInput;
}
