#pragma once

// Dense feedforward networks with hand-written reverse mode, Adam, and a
// small named-array checkpoint container.
//
// Parameters live in one flat vector so optimizers and checkpoints treat a
// network as a single array. Layer l stores W_l (out x in, column-major)
// followed by b_l. Batched calls take one sample per column.

#include <filesystem>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "sgf/random.hpp"

namespace sgf::approx {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class Activation { kIdentity, kTanh, kRelu, kSigmoid };

std::string activation_name(Activation a);
Activation parse_activation(const std::string& name);

struct ForwardCache {
  std::vector<Matrix> inputs;  // input to each layer (layer 0 gets the network input)
  std::vector<Matrix> outputs;  // post-activation output of each layer
};

class Mlp {
 public:
  Mlp() = default;
  // widths = {in, hidden..., out}. Hidden layers use `hidden`, the last layer
  // `output`. Weights ~ U(-k, k) with k = gain / sqrt(fan_in); the last layer
  // uses output_gain instead of gain. Biases start at zero.
  Mlp(std::vector<int> widths, Activation hidden, Activation output, Rng& rng, double gain = 1.0,
      double output_gain = 1.0);

  int input_size() const { return widths_.front(); }
  int output_size() const { return widths_.back(); }
  int num_layers() const { return static_cast<int>(widths_.size()) - 1; }
  const std::vector<int>& widths() const { return widths_; }
  Activation activation(int layer) const { return acts_[layer]; }

  Vector& params() { return params_; }
  const Vector& params() const { return params_; }
  Eigen::Index num_params() const { return params_.size(); }

  Eigen::Map<const Matrix> weight(int layer) const;
  Eigen::Map<Matrix> weight(int layer);
  Eigen::Map<const Vector> bias(int layer) const;
  Eigen::Map<Vector> bias(int layer);

  // Throws ShapeError if X.rows() != input_size().
  Matrix forward(const Matrix& X, ForwardCache* cache = nullptr) const;
  Vector forward(const Vector& x) const;

  // Accumulates dLoss/dparams into grad (resized and zeroed if empty) given
  // dLoss/doutput for the batch in `cache`. Returns dLoss/dinput.
  Matrix backward(const ForwardCache& cache, const Matrix& output_grad, Vector& grad) const;

  // "in-h1-...-out:hidden:output" for checkpoints.
  std::string architecture() const;
  static Mlp from_architecture(const std::string& arch);

  friend bool operator==(const Mlp& a, const Mlp& b) {
    return a.widths_ == b.widths_ && a.acts_ == b.acts_ && a.params_ == b.params_;
  }

 private:
  void layout();

  std::vector<int> widths_;
  std::vector<Activation> acts_;
  std::vector<Eigen::Index> offsets_;  // start of W_l in params_
  Vector params_;
};

struct AdamState {
  double lr = 3e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  Vector m;
  Vector v;
  long step = 0;

  explicit AdamState(double learning_rate = 3e-4) : lr(learning_rate) {}
};

// One bias-corrected Adam update, params -= lr * mhat / (sqrt(vhat) + eps).
void adam_step(AdamState& state, Vector& params, const Vector& grads);

// Rescales grads so its Euclidean norm is at most max_norm; returns the norm
// before scaling.
double clip_grad_norm(Vector& grads, double max_norm);

// Named float64 arrays and text fields in one little-endian file.
struct Checkpoint {
  std::map<std::string, std::vector<double>> arrays;
  std::map<std::string, std::string> text;

  void put(const std::string& name, const Vector& v);
  Vector get(const std::string& name) const;  // throws CheckpointError if absent
  const std::string& get_text(const std::string& name) const;

  void put_network(const std::string& name, const Mlp& net);
  Mlp get_network(const std::string& name) const;
  void put_adam(const std::string& name, const AdamState& s);
  AdamState get_adam(const std::string& name) const;

  void save(const std::filesystem::path& path) const;
  static Checkpoint load(const std::filesystem::path& path);

  friend bool operator==(const Checkpoint&, const Checkpoint&) = default;
};

}  // namespace sgf::approx
