#include "sgf/demos.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <numeric>

namespace sgf::demos {

static_assert(std::endian::native == std::endian::little, "demo files are written in host order");

TupleDims dims_of(const ContinuousTuple& t) {
  TupleDims d;
  d.state_equ = static_cast<int>(t.s.equ.size());
  d.state_inv = static_cast<int>(t.s.inv.size());
  d.n_agents = static_cast<int>(t.actions.size());
  if (!t.actions.empty()) {
    d.action_equ = static_cast<int>(t.actions[0].equ.size());
    d.action_inv = static_cast<int>(t.actions[0].inv.size());
  }
  return d;
}

TupleDims dims_of(const envs::EnvSpec& spec) {
  return {spec.state_equ_size(), spec.state_inv_size(), spec.n_agents, 2, 0};
}

DemoStore::DemoStore(std::string fingerprint, std::string provenance, TupleDims dims)
    : fingerprint_(std::move(fingerprint)), provenance_(std::move(provenance)), dims_(dims) {}

DemoStore::DemoStore(const envs::EnvSpec& spec, std::string provenance)
    : DemoStore(spec.fingerprint(), std::move(provenance), dims_of(spec)) {}

void DemoStore::append(ContinuousTuple t) {
  bool ok = dims_of(t) == dims_ && t.s_next.equ.size() == t.s.equ.size() &&
            t.s_next.inv.size() == t.s.inv.size();
  for (const auto& a : t.actions) {
    ok = ok && static_cast<int>(a.equ.size()) == dims_.action_equ &&
         static_cast<int>(a.inv.size()) == dims_.action_inv;
  }
  if (!ok) throw SpecMismatchError("tuple dimensions do not match the demo store");
  tuples_.push_back(std::move(t));
}

void DemoStore::require_spec(const envs::EnvSpec& spec) const {
  if (spec.fingerprint() != fingerprint_) {
    throw SpecMismatchError("demo store was recorded under '" + fingerprint_ + "', expected '" +
                            spec.fingerprint() + "'");
  }
}

ContinuousTuple make_demo_tuple(const envs::EnvSpec& spec, const envs::EnvState& s,
                           std::span<const envs::Vec2> actions, const envs::EnvState& s_next,
                           std::int64_t episode_id, std::int64_t step_index) {
  ContinuousTuple t;
  t.s = envs::to_structured(spec, s);
  t.s_next = envs::to_structured(spec, s_next);
  t.actions.reserve(actions.size());
  for (const auto& a : actions) {
    const auto c = envs::canonical_action(spec, a);
    t.actions.push_back({{c.x, c.y}, {}});
  }
  t.episode_id = episode_id;
  t.step_index = step_index;
  return t;
}

envs::Vec2 action_of(const ContinuousTuple& t, int agent) {
  const auto& a = t.actions.at(agent).equ;
  return {a[0], a[1]};
}

ContinuousTuple transform_tuple(const group::GroupElement& g, const ContinuousTuple& t) {
  ContinuousTuple out = t;
  group::act_inplace(g, out.s.equ);
  group::act_inplace(g, out.s_next.equ);
  for (auto& a : out.actions) group::act_inplace(g, a.equ);
  out.element = t.element.is_identity() ? g : group::compose(g, t.element);
  return out;
}

DemoStore augment(const DemoStore& store, std::span<const group::GroupElement> elements) {
  if (store.empty()) throw DemoError("cannot augment an empty demo store");
  if (elements.empty()) throw DemoError("augmentation needs at least one group element");
  DemoStore out(store.fingerprint(), "augmented", store.dims());
  out.reserve(store.size() * elements.size());
  for (const auto& g : elements) {
    for (const auto& t : store.tuples()) out.append(transform_tuple(g, t));
  }
  return out;
}

std::vector<size_t> sample_indices(size_t store_size, size_t batch_size, Rng& rng, bool with_replacement) {
  if (store_size == 0) throw DemoError("cannot sample from an empty demo store");
  std::vector<size_t> out(batch_size);
  if (with_replacement) {
    for (auto& i : out) i = static_cast<size_t>(uniform_index(rng, store_size));
    return out;
  }
  if (batch_size > store_size) throw DemoError("batch larger than store without replacement");
  std::vector<size_t> perm(store_size);
  std::iota(perm.begin(), perm.end(), size_t{0});
  // Partial Fisher-Yates.
  for (size_t i = 0; i < batch_size; ++i) {
    const size_t j = i + static_cast<size_t>(uniform_index(rng, store_size - i));
    std::swap(perm[i], perm[j]);
    out[i] = perm[i];
  }
  return out;
}

std::vector<ContinuousTuple> sample_batch(const DemoStore& store, size_t batch_size, Rng& rng,
                                          bool with_replacement) {
  std::vector<ContinuousTuple> out;
  out.reserve(batch_size);
  for (size_t i : sample_indices(store.size(), batch_size, rng, with_replacement)) out.push_back(store[i]);
  return out;
}

DemoStore record_expert(const envs::EnvSpec& spec, size_t n_tuples, std::uint64_t seed, int episode_steps) {
  const int horizon = std::max(1, std::min(episode_steps, spec.max_steps));
  DemoStore store(spec, "expert");
  store.reserve(n_tuples);
  Rng rng(seed);
  for (std::int64_t episode = 0; store.size() < n_tuples; ++episode) {
    envs::EnvState s = envs::reset(spec, rng());
    for (int t = 0; t < horizon && store.size() < n_tuples; ++t) {
      const auto a = envs::scripted_expert(spec, s, rng);
      auto next = envs::step(spec, s, a).state;
      store.append(make_demo_tuple(spec, s, a, next, episode, t));
      s = std::move(next);
    }
  }
  return store;
}

namespace {

class Writer {
 public:
  explicit Writer(std::ostream& os) : os_(os) {}
  template <typename T>
  void pod(T v) {
    os_.write(reinterpret_cast<const char*>(&v), sizeof(T));
  }
  void str(const std::string& s) {
    pod<std::uint32_t>(static_cast<std::uint32_t>(s.size()));
    os_.write(s.data(), static_cast<std::streamsize>(s.size()));
  }
  void doubles(const std::vector<double>& v) {
    os_.write(reinterpret_cast<const char*>(v.data()), static_cast<std::streamsize>(v.size() * sizeof(double)));
  }

 private:
  std::ostream& os_;
};

class Reader {
 public:
  Reader(std::istream& is, std::string what) : is_(is), what_(std::move(what)) {}
  template <typename T>
  T pod() {
    T v{};
    read(reinterpret_cast<char*>(&v), sizeof(T));
    return v;
  }
  std::string str() {
    const auto n = pod<std::uint32_t>();
    if (n > (1u << 20)) throw VersionError(what_ + ": implausible string length");
    std::string s(n, '\0');
    read(s.data(), n);
    return s;
  }
  void doubles(std::vector<double>& v, size_t n) {
    v.resize(n);
    read(reinterpret_cast<char*>(v.data()), n * sizeof(double));
  }

 private:
  void read(char* dst, size_t n) {
    is_.read(dst, static_cast<std::streamsize>(n));
    if (static_cast<size_t>(is_.gcount()) != n) throw VersionError(what_ + ": truncated file");
  }
  std::istream& is_;
  std::string what_;
};

}  // namespace

void save(const DemoStore& store, const std::filesystem::path& path) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw DemoError("cannot open " + path.string() + " for writing");
  Writer w(os);
  os.write(kMagic, sizeof(kMagic));
  w.pod<std::uint32_t>(kFormatVersion);
  w.str(store.fingerprint());
  w.str(store.provenance());
  const auto& d = store.dims();
  w.pod<std::uint64_t>(store.size());
  for (int v : {d.state_equ, d.state_inv, d.n_agents, d.action_equ, d.action_inv}) {
    w.pod<std::uint32_t>(static_cast<std::uint32_t>(v));
  }
  for (const auto& t : store.tuples()) {
    w.pod<std::int64_t>(t.episode_id);
    w.pod<std::int64_t>(t.step_index);
    w.pod<std::int32_t>(t.element.n);
    w.pod<std::int32_t>(t.element.rotation_index);
    w.pod<std::int32_t>(t.element.reflected ? 1 : 0);
    w.doubles(t.s.equ);
    w.doubles(t.s.inv);
    for (const auto& a : t.actions) {
      w.doubles(a.equ);
      w.doubles(a.inv);
    }
    w.doubles(t.s_next.equ);
    w.doubles(t.s_next.inv);
  }
  if (!os) throw DemoError("write failed for " + path.string());
}

DemoStore load(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DemoError("cannot open " + path.string());
  Reader r(is, path.string());
  char magic[sizeof(kMagic)];
  is.read(magic, sizeof(magic));
  if (is.gcount() != sizeof(magic) || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
    throw VersionError(path.string() + ": not a demo file");
  }
  const auto version = r.pod<std::uint32_t>();
  if (version != kFormatVersion) {
    throw VersionError(path.string() + ": unsupported demo format version " + std::to_string(version));
  }
  std::string fingerprint = r.str();
  std::string provenance = r.str();
  const auto m = r.pod<std::uint64_t>();
  TupleDims d;
  for (int* v : {&d.state_equ, &d.state_inv, &d.n_agents, &d.action_equ, &d.action_inv}) {
    *v = static_cast<int>(r.pod<std::uint32_t>());
    if (*v < 0 || *v > (1 << 20)) throw VersionError(path.string() + ": implausible dimensions");
  }
  DemoStore store(std::move(fingerprint), std::move(provenance), d);
  store.reserve(m);
  for (std::uint64_t k = 0; k < m; ++k) {
    ContinuousTuple t;
    t.episode_id = r.pod<std::int64_t>();
    t.step_index = r.pod<std::int64_t>();
    t.element.n = r.pod<std::int32_t>();
    t.element.rotation_index = r.pod<std::int32_t>();
    t.element.reflected = r.pod<std::int32_t>() != 0;
    r.doubles(t.s.equ, d.state_equ);
    r.doubles(t.s.inv, d.state_inv);
    t.actions.resize(d.n_agents);
    for (auto& a : t.actions) {
      r.doubles(a.equ, d.action_equ);
      r.doubles(a.inv, d.action_inv);
    }
    r.doubles(t.s_next.equ, d.state_equ);
    r.doubles(t.s_next.inv, d.state_inv);
    store.append(std::move(t));
  }
  return store;
}

DemoStore load(const std::filesystem::path& path, const std::string& expected_fingerprint) {
  DemoStore store = load(path);
  if (store.fingerprint() != expected_fingerprint) {
    throw SpecMismatchError(path.string() + " was recorded under '" + store.fingerprint() + "', expected '" +
                            expected_fingerprint + "'");
  }
  return store;
}

}  // namespace sgf::demos
