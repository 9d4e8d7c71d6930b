#include "fedmuon/param_set.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace fedmuon {

namespace {

bool has_name(const ParamSet& p, const std::string& name) {
  return std::any_of(p.matrices.begin(), p.matrices.end(),
                     [&](const NamedMatrix& m) { return m.name == name; }) ||
         std::any_of(p.vectors.begin(), p.vectors.end(),
                     [&](const NamedVector& v) { return v.name == name; });
}

}  // namespace

void ParamSet::add_matrix(std::string name, Matrix value) {
  if (has_name(*this, name)) throw std::invalid_argument("ParamSet: duplicate name " + name);
  if (value.empty()) throw std::invalid_argument("ParamSet: empty matrix " + name);
  matrices.push_back({std::move(name), std::move(value)});
}

void ParamSet::add_vector(std::string name, std::vector<double> value) {
  if (has_name(*this, name)) throw std::invalid_argument("ParamSet: duplicate name " + name);
  if (value.empty()) throw std::invalid_argument("ParamSet: empty vector " + name);
  vectors.push_back({std::move(name), std::move(value)});
}

std::size_t ParamSet::matrix_scalar_count() const noexcept {
  std::size_t n = 0;
  for (const auto& m : matrices) n += m.value.size();
  return n;
}

std::size_t ParamSet::scalar_count() const noexcept {
  std::size_t n = matrix_scalar_count();
  for (const auto& v : vectors) n += v.value.size();
  return n;
}

bool ParamSet::all_finite() const noexcept {
  for (const auto& m : matrices) {
    if (!m.value.all_finite()) return false;
  }
  for (const auto& v : vectors) {
    if (!std::all_of(v.value.begin(), v.value.end(), [](double x) { return std::isfinite(x); })) {
      return false;
    }
  }
  return true;
}

ParamSet& ParamSet::operator+=(const ParamSet& rhs) {
  require_same_layout(*this, rhs, "ParamSet +=");
  for (std::size_t i = 0; i < matrices.size(); ++i) matrices[i].value += rhs.matrices[i].value;
  for (std::size_t i = 0; i < vectors.size(); ++i) {
    auto& dst = vectors[i].value;
    const auto& src = rhs.vectors[i].value;
    for (std::size_t j = 0; j < dst.size(); ++j) dst[j] += src[j];
  }
  return *this;
}

ParamSet& ParamSet::operator-=(const ParamSet& rhs) {
  require_same_layout(*this, rhs, "ParamSet -=");
  for (std::size_t i = 0; i < matrices.size(); ++i) matrices[i].value -= rhs.matrices[i].value;
  for (std::size_t i = 0; i < vectors.size(); ++i) {
    auto& dst = vectors[i].value;
    const auto& src = rhs.vectors[i].value;
    for (std::size_t j = 0; j < dst.size(); ++j) dst[j] -= src[j];
  }
  return *this;
}

ParamSet& ParamSet::operator*=(double s) noexcept {
  for (auto& m : matrices) m.value *= s;
  for (auto& v : vectors) {
    for (double& x : v.value) x *= s;
  }
  return *this;
}

ParamSet operator+(ParamSet a, const ParamSet& b) { return a += b; }
ParamSet operator-(ParamSet a, const ParamSet& b) { return a -= b; }
ParamSet operator*(ParamSet a, double s) { return a *= s; }

ParamSet zeros_like(const ParamSet& p) {
  ParamSet out;
  for (const auto& m : p.matrices) out.matrices.push_back({m.name, Matrix(m.value.rows(), m.value.cols())});
  for (const auto& v : p.vectors) out.vectors.push_back({v.name, std::vector<double>(v.value.size(), 0.0)});
  return out;
}

MatrixSet zero_matrices_like(const ParamSet& p) {
  MatrixSet out;
  out.reserve(p.matrices.size());
  for (const auto& m : p.matrices) out.emplace_back(m.value.rows(), m.value.cols());
  return out;
}

bool same_layout(const ParamSet& a, const ParamSet& b) noexcept {
  if (a.matrices.size() != b.matrices.size() || a.vectors.size() != b.vectors.size()) return false;
  for (std::size_t i = 0; i < a.matrices.size(); ++i) {
    if (a.matrices[i].name != b.matrices[i].name) return false;
    if (!a.matrices[i].value.same_shape(b.matrices[i].value)) return false;
  }
  for (std::size_t i = 0; i < a.vectors.size(); ++i) {
    if (a.vectors[i].name != b.vectors[i].name) return false;
    if (a.vectors[i].value.size() != b.vectors[i].value.size()) return false;
  }
  return true;
}

void require_same_layout(const ParamSet& a, const ParamSet& b, const char* what) {
  if (!same_layout(a, b)) throw std::invalid_argument(std::string(what) + ": parameter layout mismatch");
}

double squared_norm(const ParamSet& p) {
  double acc = 0.0;
  for (const auto& m : p.matrices) acc += squared_frobenius_norm(m.value);
  for (const auto& v : p.vectors) {
    for (double x : v.value) acc += x * x;
  }
  return acc;
}

double norm(const ParamSet& p) { return std::sqrt(squared_norm(p)); }

}  // namespace fedmuon
