#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "fedmuon/matrix.hpp"

namespace fedmuon {

struct NamedMatrix {
  std::string name;
  Matrix value;
  friend bool operator==(const NamedMatrix&, const NamedMatrix&) = default;
};

struct NamedVector {
  std::string name;
  std::vector<double> value;
  friend bool operator==(const NamedVector&, const NamedVector&) = default;
};

/// Model parameters: matrix weights plus 1-D parameters such as biases.
/// Names are unique across both lists.
struct ParamSet {
  std::vector<NamedMatrix> matrices;
  std::vector<NamedVector> vectors;

  void add_matrix(std::string name, Matrix value);
  void add_vector(std::string name, std::vector<double> value);

  std::size_t scalar_count() const noexcept;
  std::size_t matrix_scalar_count() const noexcept;
  bool all_finite() const noexcept;

  ParamSet& operator+=(const ParamSet& rhs);
  ParamSet& operator-=(const ParamSet& rhs);
  ParamSet& operator*=(double s) noexcept;

  friend bool operator==(const ParamSet&, const ParamSet&) = default;
};

/// One matrix per matrix parameter, index-aligned with ParamSet::matrices.
using MatrixSet = std::vector<Matrix>;

ParamSet zeros_like(const ParamSet& p);
MatrixSet zero_matrices_like(const ParamSet& p);
bool same_layout(const ParamSet& a, const ParamSet& b) noexcept;
/// Throws std::invalid_argument naming `what` on any name or shape difference.
void require_same_layout(const ParamSet& a, const ParamSet& b, const char* what);

ParamSet operator+(ParamSet a, const ParamSet& b);
ParamSet operator-(ParamSet a, const ParamSet& b);
ParamSet operator*(ParamSet a, double s);

double squared_norm(const ParamSet& p);
double norm(const ParamSet& p);

}  // namespace fedmuon
