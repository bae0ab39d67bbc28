#include "idea/linalg.hpp"

#include <algorithm>
#include <cassert>
#include <cmath>

namespace idea {

Matrix Matrix::Identity(std::size_t n) {
  Matrix m(n, n);
  for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
  return m;
}

bool Matrix::AllFinite() const {
  return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

bool Matrix::IsZero() const {
  return std::all_of(data_.begin(), data_.end(), [](double v) { return v == 0.0; });
}

namespace {

template <typename A, typename B>
double DotImpl(std::span<const A> a, std::span<const B> b) {
  assert(a.size() == b.size());
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    acc += static_cast<double>(a[i]) * static_cast<double>(b[i]);
  }
  return acc;
}

}  // namespace

double Dot(std::span<const float> a, std::span<const float> b) { return DotImpl(a, b); }
double Dot(std::span<const float> a, std::span<const double> b) { return DotImpl(a, b); }
double Dot(std::span<const double> a, std::span<const float> b) { return DotImpl(a, b); }

}  // namespace idea
