#include "sgf/group.hpp"

#include <charconv>
#include <cmath>
#include <numbers>

namespace sgf::group {

namespace {

int wrap_index(int k, int n) {
  int r = k % n;
  return r < 0 ? r + n : r;
}

void check_order(int n) {
  if (n < 1) throw std::invalid_argument("dihedral order must be >= 1, got " + std::to_string(n));
}

// cos/sin of 2*pi*k/n; quarter turns are returned exactly.
std::pair<double, double> rotation_cos_sin(int k, int n) {
  if ((4 * k) % n == 0) {
    switch ((4 * k / n) % 4) {
      case 0: return {1.0, 0.0};
      case 1: return {0.0, 1.0};
      case 2: return {-1.0, 0.0};
      default: return {0.0, -1.0};
    }
  }
  const double theta = 2.0 * std::numbers::pi * static_cast<double>(k) / static_cast<double>(n);
  return {std::cos(theta), std::sin(theta)};
}

}  // namespace

GroupElement GroupElement::rotation(int k, int n) {
  check_order(n);
  return {wrap_index(k, n), false, n};
}

GroupElement GroupElement::reflection(int k, int n) {
  check_order(n);
  return {wrap_index(k, n), true, n};
}

// (R^a S^p)(R^b S^q) = R^(a + (-1)^p b) S^(p xor q), using S R^b = R^-b S.
GroupElement compose(const GroupElement& g, const GroupElement& h) {
  if (g.n != h.n) {
    throw OrderMismatchError("cannot compose elements of D_" + std::to_string(g.n) + " and D_" +
                             std::to_string(h.n));
  }
  const int b = g.reflected ? -h.rotation_index : h.rotation_index;
  return {wrap_index(g.rotation_index + b, g.n), g.reflected != h.reflected, g.n};
}

GroupElement inverse(const GroupElement& g) {
  if (g.reflected) return g;  // reflections are involutions
  return {wrap_index(-g.rotation_index, g.n), false, g.n};
}

Mat2 matrix(const GroupElement& g) {
  const auto [c, s] = rotation_cos_sin(g.rotation_index, g.n);
  if (!g.reflected) return {c, -s, s, c};
  // Rot * diag(1, -1)
  return {c, s, s, -c};
}

std::vector<GroupElement> dihedral_elements(int n) {
  check_order(n);
  std::vector<GroupElement> out;
  out.reserve(2 * static_cast<size_t>(n));
  for (int k = 0; k < n; ++k) out.push_back({k, false, n});
  for (int k = 0; k < n; ++k) out.push_back({k, true, n});
  return out;
}

std::string to_token(const GroupElement& g) {
  return (g.reflected ? "sr" : "r") + std::to_string(g.rotation_index);
}

GroupElement parse_token(std::string_view token, int n) {
  check_order(n);
  bool reflected = false;
  std::string_view rest = token;
  if (rest.starts_with("sr")) {
    reflected = true;
    rest.remove_prefix(2);
  } else if (rest.starts_with("r")) {
    rest.remove_prefix(1);
  } else {
    throw std::invalid_argument("bad group token '" + std::string(token) + "'");
  }
  int k = 0;
  auto [ptr, ec] = std::from_chars(rest.data(), rest.data() + rest.size(), k);
  if (ec != std::errc() || ptr != rest.data() + rest.size() || rest.empty()) {
    throw std::invalid_argument("bad group token '" + std::string(token) + "'");
  }
  if (k < 0 || k >= n) {
    throw std::invalid_argument("group token '" + std::string(token) + "' out of range for D_" +
                                std::to_string(n));
  }
  return {k, reflected, n};
}

void act_inplace(const GroupElement& g, std::vector<double>& packed_pairs) {
  if (packed_pairs.size() % 2 != 0) {
    throw StructureError("equivariant block has odd length " + std::to_string(packed_pairs.size()));
  }
  if (g.is_identity()) return;
  const Mat2 m = matrix(g);
  for (size_t i = 0; i < packed_pairs.size(); i += 2) {
    const double x = packed_pairs[i];
    const double y = packed_pairs[i + 1];
    packed_pairs[i] = m[0] * x + m[1] * y;
    packed_pairs[i + 1] = m[2] * x + m[3] * y;
  }
}

StructuredVector act(const GroupElement& g, const StructuredVector& v) {
  StructuredVector out = v;
  act_inplace(g, out.equ);
  return out;
}

}  // namespace sgf::group
