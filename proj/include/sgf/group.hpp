#pragma once

// Dihedral group D_n and its action on structured (equivariant | invariant)
// feature vectors.
//
// Convention: an element with rotation index k and reflection flag r has the
// planar representation Rot(2*pi*k/n) * S^r, where S = diag(1, -1) is the
// reflection about the x-axis. The reflection is applied first. Tokens are
// "r<k>" for pure rotations and "sr<k>" for reflected elements.

#include <array>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace sgf::group {

class OrderMismatchError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class StructureError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Row-major 2x2 matrix.
using Mat2 = std::array<double, 4>;

struct GroupElement {
  int rotation_index = 0;
  bool reflected = false;
  int n = 4;

  static GroupElement identity(int n = 4) { return {0, false, n}; }
  static GroupElement rotation(int k, int n = 4);
  static GroupElement reflection(int k = 0, int n = 4);

  bool is_identity() const { return rotation_index == 0 && !reflected; }

  friend bool operator==(const GroupElement&, const GroupElement&) = default;
};

GroupElement compose(const GroupElement& g, const GroupElement& h);
GroupElement inverse(const GroupElement& g);
Mat2 matrix(const GroupElement& g);

// All 2n elements of D_n: rotations r0..r(n-1) followed by sr0..sr(n-1).
std::vector<GroupElement> dihedral_elements(int n);

std::string to_token(const GroupElement& g);
// Throws std::invalid_argument on malformed tokens or k outside [0, n).
GroupElement parse_token(std::string_view token, int n);

struct StructuredVector {
  std::vector<double> equ;  // packed (x, y) pairs
  std::vector<double> inv;

  friend bool operator==(const StructuredVector&, const StructuredVector&) = default;
};

StructuredVector act(const GroupElement& g, const StructuredVector& v);

// Applies matrix(g) to every (x, y) pair of a packed buffer in place.
void act_inplace(const GroupElement& g, std::vector<double>& packed_pairs);

}  // namespace sgf::group
