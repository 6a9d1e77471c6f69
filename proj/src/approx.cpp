#include "sgf/approx.hpp"

#include <bit>
#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

namespace sgf::approx {

std::string activation_name(Activation a) {
  switch (a) {
    case Activation::kIdentity: return "identity";
    case Activation::kTanh: return "tanh";
    case Activation::kRelu: return "relu";
    case Activation::kSigmoid: return "sigmoid";
  }
  return "identity";
}

Activation parse_activation(const std::string& name) {
  if (name == "identity") return Activation::kIdentity;
  if (name == "tanh") return Activation::kTanh;
  if (name == "relu") return Activation::kRelu;
  if (name == "sigmoid") return Activation::kSigmoid;
  throw std::invalid_argument("unknown activation '" + name + "'");
}

namespace {

void activate(Activation a, Matrix& z) {
  switch (a) {
    case Activation::kIdentity: break;
    case Activation::kTanh:
      // Eigen has no packet tanh for double; this form vectorises through exp.
      z = 1.0 - 2.0 * ((2.0 * z.array()).exp() + 1.0).inverse();
      break;
    case Activation::kRelu: z = z.array().max(0.0); break;
    case Activation::kSigmoid: z = (1.0 + (-z.array()).exp()).inverse(); break;
  }
}

// dL/dz from dL/dy, given y = act(z).
void activation_backward(Activation a, const Matrix& y, Matrix& grad) {
  switch (a) {
    case Activation::kIdentity: break;
    case Activation::kTanh: grad.array() *= 1.0 - y.array().square(); break;
    case Activation::kRelu: grad.array() *= (y.array() > 0.0).cast<double>(); break;
    case Activation::kSigmoid: grad.array() *= y.array() * (1.0 - y.array()); break;
  }
}

}  // namespace

Mlp::Mlp(std::vector<int> widths, Activation hidden, Activation output, Rng& rng, double gain,
         double output_gain)
    : widths_(std::move(widths)) {
  if (widths_.size() < 2) throw ShapeError("an MLP needs at least input and output widths");
  for (int w : widths_) {
    if (w < 1) throw ShapeError("layer widths must be positive");
  }
  acts_.assign(widths_.size() - 1, hidden);
  acts_.back() = output;
  layout();
  for (int l = 0; l < num_layers(); ++l) {
    const double k = (l + 1 == num_layers() ? output_gain : gain) / std::sqrt(static_cast<double>(widths_[l]));
    auto W = weight(l);
    for (Eigen::Index j = 0; j < W.cols(); ++j) {
      for (Eigen::Index i = 0; i < W.rows(); ++i) W(i, j) = uniform(rng, -k, k);
    }
  }
}

void Mlp::layout() {
  offsets_.clear();
  Eigen::Index total = 0;
  for (int l = 0; l < num_layers(); ++l) {
    offsets_.push_back(total);
    total += static_cast<Eigen::Index>(widths_[l + 1]) * (widths_[l] + 1);
  }
  params_ = Vector::Zero(total);
}

Eigen::Map<const Matrix> Mlp::weight(int l) const {
  return {params_.data() + offsets_[l], widths_[l + 1], widths_[l]};
}
Eigen::Map<Matrix> Mlp::weight(int l) { return {params_.data() + offsets_[l], widths_[l + 1], widths_[l]}; }
Eigen::Map<const Vector> Mlp::bias(int l) const {
  return {params_.data() + offsets_[l] + static_cast<Eigen::Index>(widths_[l + 1]) * widths_[l], widths_[l + 1]};
}
Eigen::Map<Vector> Mlp::bias(int l) {
  return {params_.data() + offsets_[l] + static_cast<Eigen::Index>(widths_[l + 1]) * widths_[l], widths_[l + 1]};
}

Matrix Mlp::forward(const Matrix& X, ForwardCache* cache) const {
  if (X.rows() != input_size()) {
    throw ShapeError("network expects input width " + std::to_string(input_size()) + ", got " +
                     std::to_string(X.rows()));
  }
  if (cache) {
    cache->inputs.clear();
    cache->outputs.clear();
  }
  Matrix h = X;
  for (int l = 0; l < num_layers(); ++l) {
    Matrix z = weight(l) * h;
    z.colwise() += bias(l);
    activate(acts_[l], z);
    if (cache) {
      cache->inputs.push_back(std::move(h));
      cache->outputs.push_back(z);
    }
    h = std::move(z);
  }
  return h;
}

Vector Mlp::forward(const Vector& x) const { return forward(Matrix(x)).col(0); }

Matrix Mlp::backward(const ForwardCache& cache, const Matrix& output_grad, Vector& grad) const {
  if (static_cast<int>(cache.inputs.size()) != num_layers()) throw ShapeError("forward cache does not match network");
  if (output_grad.rows() != output_size() || output_grad.cols() != cache.outputs.back().cols()) {
    throw ShapeError("output gradient shape does not match the cached batch");
  }
  if (grad.size() == 0) grad = Vector::Zero(num_params());
  if (grad.size() != num_params()) throw ShapeError("gradient buffer has the wrong size");
  Matrix g = output_grad;
  for (int l = num_layers() - 1; l >= 0; --l) {
    activation_backward(acts_[l], cache.outputs[l], g);
    const Eigen::Index rows = widths_[l + 1], cols = widths_[l];
    Eigen::Map<Matrix> dW(grad.data() + offsets_[l], rows, cols);
    Eigen::Map<Vector> db(grad.data() + offsets_[l] + rows * cols, rows);
    dW.noalias() += g * cache.inputs[l].transpose();
    db += g.rowwise().sum();
    g = weight(l).transpose() * g;
  }
  return g;
}

std::string Mlp::architecture() const {
  std::string s;
  for (size_t i = 0; i < widths_.size(); ++i) s += (i ? "-" : "") + std::to_string(widths_[i]);
  s += ":" + activation_name(acts_.front()) + ":" + activation_name(acts_.back());
  return s;
}

Mlp Mlp::from_architecture(const std::string& arch) {
  std::vector<std::string> parts;
  std::stringstream ss(arch);
  for (std::string p; std::getline(ss, p, ':');) parts.push_back(p);
  if (parts.size() != 3) throw CheckpointError("bad architecture string '" + arch + "'");
  Mlp net;
  std::stringstream ws(parts[0]);
  for (std::string w; std::getline(ws, w, '-');) {
    int v = 0;
    const auto [ptr, ec] = std::from_chars(w.data(), w.data() + w.size(), v);
    if (ec != std::errc() || ptr != w.data() + w.size() || v < 1) {
      throw CheckpointError("bad width in architecture '" + arch + "'");
    }
    net.widths_.push_back(v);
  }
  if (net.widths_.size() < 2) throw CheckpointError("bad architecture string '" + arch + "'");
  net.acts_.assign(net.widths_.size() - 1, parse_activation(parts[1]));
  net.acts_.back() = parse_activation(parts[2]);
  net.layout();
  return net;
}

void adam_step(AdamState& s, Vector& params, const Vector& grads) {
  if (grads.size() != params.size()) throw ShapeError("gradient and parameter sizes differ");
  if (s.m.size() == 0) {
    s.m = Vector::Zero(params.size());
    s.v = Vector::Zero(params.size());
  }
  if (s.m.size() != params.size()) throw ShapeError("optimizer state does not match parameters");
  ++s.step;
  s.m = s.beta1 * s.m + (1.0 - s.beta1) * grads;
  s.v = s.beta2 * s.v + (1.0 - s.beta2) * grads.cwiseProduct(grads);
  const double c1 = 1.0 - std::pow(s.beta1, static_cast<double>(s.step));
  const double c2 = 1.0 - std::pow(s.beta2, static_cast<double>(s.step));
  params.array() -= s.lr * (s.m.array() / c1) / ((s.v.array() / c2).sqrt() + s.eps);
}

double clip_grad_norm(Vector& grads, double max_norm) {
  const double n = grads.norm();
  if (n > max_norm && n > 0.0) grads *= max_norm / n;
  return n;
}

void Checkpoint::put(const std::string& name, const Vector& v) { arrays[name].assign(v.data(), v.data() + v.size()); }

Vector Checkpoint::get(const std::string& name) const {
  const auto it = arrays.find(name);
  if (it == arrays.end()) throw CheckpointError("checkpoint has no array '" + name + "'");
  return Eigen::Map<const Vector>(it->second.data(), static_cast<Eigen::Index>(it->second.size()));
}

const std::string& Checkpoint::get_text(const std::string& name) const {
  const auto it = text.find(name);
  if (it == text.end()) throw CheckpointError("checkpoint has no field '" + name + "'");
  return it->second;
}

void Checkpoint::put_network(const std::string& name, const Mlp& net) {
  text[name + ".arch"] = net.architecture();
  put(name + ".params", net.params());
}

Mlp Checkpoint::get_network(const std::string& name) const {
  Mlp net = Mlp::from_architecture(get_text(name + ".arch"));
  const Vector p = get(name + ".params");
  if (p.size() != net.num_params()) throw CheckpointError("parameter count mismatch for '" + name + "'");
  net.params() = p;
  return net;
}

void Checkpoint::put_adam(const std::string& name, const AdamState& s) {
  put(name + ".m", s.m);
  put(name + ".v", s.v);
  put(name + ".hyper", Vector{{s.lr, s.beta1, s.beta2, s.eps, static_cast<double>(s.step)}});
}

AdamState Checkpoint::get_adam(const std::string& name) const {
  AdamState s;
  s.m = get(name + ".m");
  s.v = get(name + ".v");
  const Vector h = get(name + ".hyper");
  if (h.size() != 5) throw CheckpointError("bad optimizer record '" + name + "'");
  s.lr = h[0], s.beta1 = h[1], s.beta2 = h[2], s.eps = h[3];
  s.step = static_cast<long>(h[4]);
  return s;
}

namespace {

static_assert(std::endian::native == std::endian::little, "checkpoints are written in host order");
constexpr char kCkptMagic[8] = {'S', 'G', 'F', 'C', 'K', 'P', 'T', '\0'};
constexpr std::uint32_t kCkptVersion = 1;

void write_u64(std::ostream& os, std::uint64_t v) { os.write(reinterpret_cast<const char*>(&v), 8); }
void write_str(std::ostream& os, const std::string& s) {
  write_u64(os, s.size());
  os.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::uint64_t read_u64(std::istream& is) {
  std::uint64_t v = 0;
  is.read(reinterpret_cast<char*>(&v), 8);
  if (is.gcount() != 8) throw CheckpointError("truncated checkpoint");
  return v;
}
std::string read_str(std::istream& is) {
  const auto n = read_u64(is);
  if (n > (1u << 24)) throw CheckpointError("implausible string in checkpoint");
  std::string s(n, '\0');
  is.read(s.data(), static_cast<std::streamsize>(n));
  if (static_cast<std::uint64_t>(is.gcount()) != n) throw CheckpointError("truncated checkpoint");
  return s;
}

}  // namespace

void Checkpoint::save(const std::filesystem::path& path) const {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw CheckpointError("cannot open " + path.string() + " for writing");
  os.write(kCkptMagic, 8);
  os.write(reinterpret_cast<const char*>(&kCkptVersion), 4);
  write_u64(os, text.size());
  for (const auto& [k, v] : text) {
    write_str(os, k);
    write_str(os, v);
  }
  write_u64(os, arrays.size());
  for (const auto& [k, v] : arrays) {
    write_str(os, k);
    write_u64(os, v.size());
    os.write(reinterpret_cast<const char*>(v.data()), static_cast<std::streamsize>(v.size() * sizeof(double)));
  }
  if (!os) throw CheckpointError("write failed for " + path.string());
}

Checkpoint Checkpoint::load(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw CheckpointError("cannot open " + path.string());
  char magic[8];
  is.read(magic, 8);
  std::uint32_t version = 0;
  is.read(reinterpret_cast<char*>(&version), 4);
  if (is.gcount() != 4 || std::memcmp(magic, kCkptMagic, 8) != 0) throw CheckpointError(path.string() + ": not a checkpoint");
  if (version != kCkptVersion) throw CheckpointError(path.string() + ": unsupported checkpoint version");
  Checkpoint c;
  const auto n_text = read_u64(is);
  for (std::uint64_t i = 0; i < n_text; ++i) {
    auto k = read_str(is);
    c.text[k] = read_str(is);
  }
  const auto n_arrays = read_u64(is);
  for (std::uint64_t i = 0; i < n_arrays; ++i) {
    auto k = read_str(is);
    const auto n = read_u64(is);
    if (n > (std::uint64_t{1} << 32)) throw CheckpointError("implausible array in checkpoint");
    std::vector<double> v(n);
    is.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(n * sizeof(double)));
    if (static_cast<std::uint64_t>(is.gcount()) != n * sizeof(double)) throw CheckpointError("truncated checkpoint");
    c.arrays[k] = std::move(v);
  }
  return c;
}

}  // namespace sgf::approx
