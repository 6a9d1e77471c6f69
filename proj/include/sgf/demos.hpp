#pragma once

// Demonstration tuples (s, a_1..a_N, s'), the store that holds them, group
// augmentation of stores, minibatch sampling and the binary file format
// (layout in docs/format.md).

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "sgf/envs.hpp"
#include "sgf/group.hpp"
#include "sgf/random.hpp"

namespace sgf::demos {

class DemoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};
// Tuple dimensions or spec fingerprint disagree with the store.
class SpecMismatchError : public DemoError {
 public:
  using DemoError::DemoError;
};
// Bad magic, unsupported version or truncated file.
class VersionError : public DemoError {
 public:
  using DemoError::DemoError;
};

struct ContinuousTuple {
  group::StructuredVector s;
  std::vector<group::StructuredVector> actions;  // one per agent
  group::StructuredVector s_next;
  std::int64_t episode_id = 0;
  std::int64_t step_index = 0;
  // Transformation applied to the original recorded tuple.
  group::GroupElement element = group::GroupElement::identity();

  friend bool operator==(const ContinuousTuple&, const ContinuousTuple&) = default;
};

struct TupleDims {
  int state_equ = 0;
  int state_inv = 0;
  int n_agents = 0;
  int action_equ = 0;
  int action_inv = 0;

  friend bool operator==(const TupleDims&, const TupleDims&) = default;
};

TupleDims dims_of(const ContinuousTuple& t);
TupleDims dims_of(const envs::EnvSpec& spec);

class DemoStore {
 public:
  DemoStore() = default;
  DemoStore(std::string fingerprint, std::string provenance, TupleDims dims);
  // Store shaped for `spec`, fingerprint taken from it.
  DemoStore(const envs::EnvSpec& spec, std::string provenance);

  // Throws SpecMismatchError if the tuple's dimensions differ from dims().
  void append(ContinuousTuple t);
  void reserve(size_t n) { tuples_.reserve(n); }

  const std::vector<ContinuousTuple>& tuples() const { return tuples_; }
  const ContinuousTuple& operator[](size_t i) const { return tuples_[i]; }
  size_t size() const { return tuples_.size(); }
  bool empty() const { return tuples_.empty(); }

  const std::string& fingerprint() const { return fingerprint_; }
  // "expert" | "generator" | "augmented"; per-tuple elements carry which g.
  const std::string& provenance() const { return provenance_; }
  const TupleDims& dims() const { return dims_; }

  // Throws SpecMismatchError unless the store was recorded under `spec`.
  void require_spec(const envs::EnvSpec& spec) const;

  friend bool operator==(const DemoStore&, const DemoStore&) = default;

 private:
  std::string fingerprint_;
  std::string provenance_;
  TupleDims dims_;
  std::vector<ContinuousTuple> tuples_;
};

ContinuousTuple make_demo_tuple(const envs::EnvSpec& spec, const envs::EnvState& s,
                           std::span<const envs::Vec2> actions, const envs::EnvState& s_next,
                           std::int64_t episode_id, std::int64_t step_index);

envs::Vec2 action_of(const ContinuousTuple& t, int agent);

ContinuousTuple transform_tuple(const group::GroupElement& g, const ContinuousTuple& t);

// Every tuple under every element, outer loop over elements in the order
// given. Throws DemoError on an empty store or empty element list.
DemoStore augment(const DemoStore& store, std::span<const group::GroupElement> elements);

// Indices into the store. Without replacement requires batch_size <= size.
std::vector<size_t> sample_indices(size_t store_size, size_t batch_size, Rng& rng, bool with_replacement);
std::vector<ContinuousTuple> sample_batch(const DemoStore& store, size_t batch_size, Rng& rng,
                                          bool with_replacement);

// Rolls out the scripted expert and keeps the first n_tuples transitions.
// Each episode runs episode_steps steps (clamped to spec.max_steps) from a
// fresh reset.
DemoStore record_expert(const envs::EnvSpec& spec, size_t n_tuples, std::uint64_t seed, int episode_steps);

void save(const DemoStore& store, const std::filesystem::path& path);
DemoStore load(const std::filesystem::path& path);
// As load(), also throwing SpecMismatchError if the fingerprint differs.
DemoStore load(const std::filesystem::path& path, const std::string& expected_fingerprint);

inline constexpr char kMagic[8] = {'S', 'G', 'F', 'D', 'E', 'M', 'O', '\0'};
inline constexpr std::uint32_t kFormatVersion = 1;

}  // namespace sgf::demos
