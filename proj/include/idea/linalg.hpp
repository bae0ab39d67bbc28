#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace idea {

/// Dense row-major matrix of doubles. Used for trainable parameters,
/// gradients and batched logits; stored embeddings use EmbeddingMatrix.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

  static Matrix Identity(std::size_t n);

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  bool empty() const noexcept { return data_.empty(); }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

  std::span<double> data() noexcept { return data_; }
  std::span<const double> data() const noexcept { return data_; }

  bool AllFinite() const;
  bool IsZero() const;

  friend bool operator==(const Matrix&, const Matrix&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

// Dot products accumulate in double regardless of the storage type.
double Dot(std::span<const float> a, std::span<const float> b);
double Dot(std::span<const float> a, std::span<const double> b);
double Dot(std::span<const double> a, std::span<const float> b);

}  // namespace idea
