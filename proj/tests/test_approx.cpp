#include <cmath>
#include <filesystem>

#include "doctest.h"
#include "sgf/approx.hpp"

using namespace sgf::approx;

namespace {

double act_ref(Activation a, double z) {
  switch (a) {
    case Activation::kIdentity: return z;
    case Activation::kTanh: return std::tanh(z);
    case Activation::kRelu: return z > 0 ? z : 0.0;
    case Activation::kSigmoid: return 1.0 / (1.0 + std::exp(-z));
  }
  return z;
}

// Straight-line evaluator reading weights by index from the flat vector.
std::vector<double> reference_forward(const Mlp& net, std::vector<double> x) {
  const auto& w = net.widths();
  const double* p = net.params().data();
  for (int l = 0; l < net.num_layers(); ++l) {
    const int in = w[l], out = w[l + 1];
    std::vector<double> y(out);
    for (int i = 0; i < out; ++i) {
      double z = p[in * out + i];
      for (int j = 0; j < in; ++j) z += p[j * out + i] * x[j];
      y[i] = act_ref(net.activation(l), z);
    }
    p += in * out + out;
    x = y;
  }
  return x;
}

// Scalar loss: sum of c_k * y_k over the batch.
double weighted_loss(const Mlp& net, const Matrix& X, const Matrix& C) {
  return (net.forward(X).array() * C.array()).sum();
}

}  // namespace

TEST_CASE("forward examples") {
  sgf::Rng rng(1);
  Mlp net({3, 4, 2}, Activation::kTanh, Activation::kIdentity, rng);
  net.params().setZero();
  net.bias(1) << 0.5, -2.0;
  const Vector y = net.forward(Vector{{1.0, 2.0, 3.0}});
  CHECK(y[0] == 0.5);
  CHECK(y[1] == -2.0);

  Mlp id({3, 3, 3}, Activation::kIdentity, Activation::kIdentity, rng);
  id.params().setZero();
  id.weight(0).setIdentity();
  id.weight(1).setIdentity();
  const Vector x{{0.1, -4.0, 7.0}};
  CHECK(id.forward(x) == x);
  CHECK_THROWS_AS(id.forward(Vector{{1.0, 2.0}}), ShapeError);
}

TEST_CASE("forward matches a straight-line evaluator") {
  sgf::Rng rng(2);
  for (auto hidden : {Activation::kTanh, Activation::kRelu, Activation::kSigmoid}) {
    for (auto out : {Activation::kIdentity, Activation::kSigmoid, Activation::kTanh}) {
      Mlp net({5, 7, 6, 3}, hidden, out, rng);
      net.params() += Vector::Random(net.num_params()) * 0.1;
      std::vector<double> x(5);
      for (auto& v : x) v = sgf::uniform(rng, -2, 2);
      const auto ref = reference_forward(net, x);
      const Vector y = net.forward(Vector(Eigen::Map<Vector>(x.data(), 5)));
      for (int i = 0; i < 3; ++i) CHECK(std::abs(y[i] - ref[i]) <= 1e-12);
    }
  }
}

TEST_CASE("backward examples") {
  sgf::Rng rng(3);
  Mlp lin({3, 2}, Activation::kIdentity, Activation::kIdentity, rng);
  const Matrix x = Matrix(Vector{{1.0, -2.0, 0.5}});
  const Matrix gy = Matrix(Vector{{0.3, -1.0}});
  ForwardCache cache;
  lin.forward(x, &cache);
  Vector grad;
  const Matrix gx = lin.backward(cache, gy, grad);
  Eigen::Map<const Matrix> dW(grad.data(), 2, 3);
  CHECK((dW - gy * x.transpose()).norm() == 0.0);
  CHECK(grad.tail(2) == gy.col(0));

  Mlp deep({3, 4, 2}, Activation::kIdentity, Activation::kIdentity, rng);
  deep.forward(x, &cache);
  Vector g2;
  const Matrix gx2 = deep.backward(cache, gy, g2);
  CHECK((gx2 - deep.weight(0).transpose() * deep.weight(1).transpose() * gy).norm() <= 1e-14);
  (void)gx;
}

TEST_CASE("backward agrees with central finite differences") {
  sgf::Rng rng(4);
  for (auto hidden : {Activation::kTanh, Activation::kRelu}) {
    for (auto out : {Activation::kIdentity, Activation::kSigmoid, Activation::kTanh}) {
      Mlp net({4, 6, 5, 2}, hidden, out, rng);
      const Matrix X = Matrix::Random(4, 3);
      const Matrix C = Matrix::Random(2, 3);
      ForwardCache cache;
      net.forward(X, &cache);
      Vector grad;
      const Matrix gx = net.backward(cache, C, grad);
      const double h = 1e-5;
      for (Eigen::Index k = 0; k < net.num_params(); ++k) {
        Mlp plus = net, minus = net;
        plus.params()[k] += h;
        minus.params()[k] -= h;
        const double fd = (weighted_loss(plus, X, C) - weighted_loss(minus, X, C)) / (2 * h);
        CHECK(std::abs(fd - grad[k]) <= 1e-4 * std::max(1.0, std::abs(fd)));
      }
      for (Eigen::Index i = 0; i < X.size(); ++i) {
        Matrix Xp = X, Xm = X;
        Xp(i) += h;
        Xm(i) -= h;
        const double fd = (weighted_loss(net, Xp, C) - weighted_loss(net, Xm, C)) / (2 * h);
        CHECK(std::abs(fd - gx(i)) <= 1e-4 * std::max(1.0, std::abs(fd)));
      }
    }
  }
}

TEST_CASE("adam examples") {
  Vector p{{1.0, -2.0}};
  AdamState s(0.01);
  adam_step(s, p, Vector::Zero(2));
  CHECK(p == Vector{{1.0, -2.0}});

  AdamState t(0.01);
  Vector q = Vector::Zero(3);
  adam_step(t, q, Vector{{5.0, -0.2, 1e3}});
  for (int i = 0; i < 3; ++i) CHECK(std::abs(std::abs(q[i]) - 0.01) <= 1e-8);
}

TEST_CASE("adam minimizes a quadratic") {
  sgf::Rng rng(6);
  Vector c(10), x(10);
  for (int i = 0; i < 10; ++i) c[i] = sgf::uniform(rng, -3, 3), x[i] = sgf::uniform(rng, -3, 3);
  AdamState s(0.05);
  int steps = 0;
  while ((x - c).norm() >= 1e-3 && steps < 5000) {
    adam_step(s, x, 2.0 * (x - c));
    ++steps;
  }
  CHECK((x - c).norm() < 1e-3);
  CHECK(steps <= 5000);
}

TEST_CASE("clip_grad_norm") {
  Vector g{{3.0, 4.0}};
  CHECK(clip_grad_norm(g, 1.0) == 5.0);
  CHECK(g.norm() == doctest::Approx(1.0));
  Vector small{{0.1, 0.0}};
  clip_grad_norm(small, 1.0);
  CHECK(small[0] == 0.1);
}

TEST_CASE("checkpoint round-trip") {
  sgf::Rng rng(8);
  Mlp net({3, 8, 1}, Activation::kTanh, Activation::kIdentity, rng);
  AdamState s(1e-3);
  Vector grad;
  ForwardCache cache;
  net.forward(Matrix::Random(3, 4), &cache);
  net.backward(cache, Matrix::Ones(1, 4), grad);
  adam_step(s, net.params(), grad);

  Checkpoint c;
  c.put_network("actor", net);
  c.put_adam("actor_opt", s);
  c.text["note"] = "x";
  const auto path = std::filesystem::temp_directory_path() / "sgf_test_ckpt.bin";
  c.save(path);
  const auto back = Checkpoint::load(path);
  CHECK(back == c);
  CHECK(back.get_network("actor") == net);
  const auto s2 = back.get_adam("actor_opt");
  CHECK(s2.m == s.m);
  CHECK(s2.v == s.v);
  CHECK(s2.step == 1);
  CHECK_THROWS_AS(back.get("missing"), CheckpointError);
  std::filesystem::resize_file(path, 20);
  CHECK_THROWS_AS(Checkpoint::load(path), CheckpointError);
  std::filesystem::remove(path);
}

TEST_CASE("seeded construction is deterministic") {
  sgf::Rng a(9), b(9);
  CHECK(Mlp({4, 64, 64, 2}, Activation::kTanh, Activation::kIdentity, a) ==
        Mlp({4, 64, 64, 2}, Activation::kTanh, Activation::kIdentity, b));
}
