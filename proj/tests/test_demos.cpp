#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "sgf/demos.hpp"

using namespace sgf::demos;
using sgf::envs::EnvKind;
using sgf::group::GroupElement;

namespace {

std::filesystem::path temp_path(const std::string& name) {
  return std::filesystem::temp_directory_path() / ("sgf_test_" + name);
}

}  // namespace

TEST_CASE("recorded expert tuples are well formed") {
  const auto spec = sgf::envs::make_spec(EnvKind::kPursuit, 3);
  const auto store = record_expert(spec, 100, 7, 40);
  REQUIRE(store.size() == 100);
  CHECK(store.provenance() == "expert");
  CHECK(store.fingerprint() == spec.fingerprint());
  CHECK(store[0].episode_id == 0);
  CHECK(store[40].episode_id == 1);
  CHECK(store[40].step_index == 0);
  for (const auto& t : store.tuples()) CHECK(t.s_next.inv[0] == t.s.inv[0] + 1);
  CHECK(record_expert(spec, 100, 7, 40) == store);
  store.require_spec(spec);
  CHECK_THROWS_AS(store.require_spec(sgf::envs::make_spec(EnvKind::kPursuit, 4)), SpecMismatchError);
}

TEST_CASE("append rejects mismatched tuples") {
  const auto spec = sgf::envs::make_spec(EnvKind::kRendezvous, 3);
  DemoStore store(spec, "expert");
  const auto other = record_expert(sgf::envs::make_spec(EnvKind::kRendezvous, 4), 1, 1, 10);
  CHECK_THROWS_AS(store.append(other[0]), SpecMismatchError);
}

TEST_CASE("augment cardinality, identity and provenance") {
  const auto spec = sgf::envs::make_spec(EnvKind::kRendezvous, 3);
  const auto store = record_expert(spec, 100, 3, 50);
  const std::vector<GroupElement> id{GroupElement::identity()};
  const auto same = augment(store, id);
  CHECK(same.tuples() == store.tuples());
  const auto d4 = sgf::group::dihedral_elements(4);
  const auto aug = augment(store, d4);
  CHECK(aug.size() == 800);
  CHECK(aug.provenance() == "augmented");
  for (size_t k = 0; k < d4.size(); ++k) CHECK(aug[k * 100 + 5].element == d4[k]);
  // invariant blocks untouched
  for (const auto& t : aug.tuples()) CHECK(t.s.inv == store[static_cast<size_t>(t.step_index) % 50 + 50 * t.episode_id].s.inv);

  const auto twice = augment(aug, d4);
  CHECK(twice.size() == 6400);
  for (size_t i = 0; i < twice.size(); i += 97) {
    const auto& t = twice[i];
    const auto& g = d4[i / 800];
    const auto& parent = aug[i % 800];
    CHECK(t.element == sgf::group::compose(g, parent.element));
  }
  DemoStore empty(spec, "expert");
  CHECK_THROWS_AS(augment(empty, d4), DemoError);
}

TEST_CASE("augmented tuples replay through the dynamics") {
  for (auto kind : {EnvKind::kRendezvous, EnvKind::kPursuit, EnvKind::kVicsek}) {
    const auto spec = sgf::envs::make_spec(kind, 4);
    const auto aug = augment(record_expert(spec, 60, 11, 30), sgf::group::dihedral_elements(4));
    for (const auto& t : aug.tuples()) {
      const auto s = sgf::envs::from_structured(spec, t.s);
      std::vector<sgf::envs::Vec2> a(spec.n_agents);
      for (int i = 0; i < spec.n_agents; ++i) a[i] = action_of(t, i);
      const auto next = sgf::envs::step(spec, s, a).state;
      const auto expect = sgf::envs::from_structured(spec, t.s_next);
      double err = 0.0;
      for (int i = 0; i < spec.n_agents; ++i) {
        err = std::max(err, sgf::envs::norm(sgf::envs::periodic_delta(spec, next.positions[i], expect.positions[i])));
        err = std::max(err, sgf::envs::norm(next.velocities[i] - expect.velocities[i]));
      }
      err = std::max(err, sgf::envs::norm(next.prey_position - expect.prey_position));
      CHECK(err <= 1e-9);
    }
  }
}

TEST_CASE("sampling") {
  const auto spec = sgf::envs::make_spec(EnvKind::kRendezvous, 2);
  const auto store = record_expert(spec, 10, 1, 10);
  sgf::Rng rng(5);
  auto idx = sample_indices(10, 10, rng, false);
  std::sort(idx.begin(), idx.end());
  for (size_t i = 0; i < 10; ++i) CHECK(idx[i] == i);

  sgf::Rng a(9), b(9);
  CHECK(sample_batch(store, 4, a, true) == sample_batch(store, 4, b, true));
  CHECK_THROWS_AS(sample_indices(10, 11, rng, false), DemoError);
  CHECK_THROWS_AS(sample_indices(0, 1, rng, true), DemoError);

  constexpr int kDraws = 100000;
  std::vector<int> counts(10, 0);
  for (size_t i : sample_indices(10, kDraws, rng, true)) counts[i]++;
  const double p = 0.1;
  const double sigma = std::sqrt(kDraws * p * (1 - p));
  for (int c : counts) CHECK(std::abs(c - kDraws * p) <= 3 * sigma);
}

TEST_CASE("save and load round-trip") {
  const auto spec = sgf::envs::make_spec(EnvKind::kVicsek, 3);
  const auto store = augment(record_expert(spec, 25, 2, 10), sgf::group::dihedral_elements(4));
  const auto path = temp_path("roundtrip.demo");
  save(store, path);
  CHECK(load(path) == store);
  CHECK(load(path, spec.fingerprint()) == store);
  CHECK_THROWS_AS(load(path, "other"), SpecMismatchError);

  {
    std::fstream f(path, std::ios::in | std::ios::out | std::ios::binary);
    f.seekp(8);
    const std::uint32_t v = 99;
    f.write(reinterpret_cast<const char*>(&v), 4);
  }
  CHECK_THROWS_AS(load(path), VersionError);
  {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    f << "garbage";
  }
  CHECK_THROWS_AS(load(path), VersionError);
  save(store, path);
  std::filesystem::resize_file(path, std::filesystem::file_size(path) - 3);
  CHECK_THROWS_AS(load(path), VersionError);
  std::filesystem::remove(path);
}

TEST_CASE("million-tuple round-trip timing" * doctest::skip(std::getenv("SGF_BENCH") == nullptr)) {
  const auto spec = sgf::envs::make_spec(EnvKind::kRendezvous, 5);
  const auto seed = record_expert(spec, 1000, 1, 200);
  DemoStore big(spec, "expert");
  big.reserve(1000000);
  for (int k = 0; k < 1000; ++k) {
    for (const auto& t : seed.tuples()) big.append(t);
  }
  const auto path = temp_path("bench.demo");
  const auto t0 = std::chrono::steady_clock::now();
  save(big, path);
  const auto loaded = load(path);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  MESSAGE("1e6 tuples round-trip in " << secs << " s");
  CHECK(loaded.size() == big.size());
  CHECK(secs < 5.0);
  std::filesystem::remove(path);
}
