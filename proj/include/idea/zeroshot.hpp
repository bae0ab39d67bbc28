#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "idea/embedstore.hpp"
#include "idea/linalg.hpp"

namespace idea {

/// Zero-shot classifier: one normalized prompt embedding per class.
class ZeroShotHead {
 public:
  ZeroShotHead(EmbeddingMatrix prototypes, std::vector<std::string> class_names);

  const EmbeddingMatrix& prototypes() const noexcept { return prototypes_; }
  const std::vector<std::string>& class_names() const noexcept { return class_names_; }
  std::size_t num_classes() const noexcept { return prototypes_.rows(); }
  std::size_t dim() const noexcept { return prototypes_.dim(); }

 private:
  EmbeddingMatrix prototypes_;
  std::vector<std::string> class_names_;
};

/// logits[n] = <prototype n, test>.
std::vector<double> ZeroShotLogits(const ZeroShotHead& head, std::span<const float> test);
Matrix ZeroShotLogitsBatch(const ZeroShotHead& head, const EmbeddingMatrix& tests);

/// Index of the largest logit; the lowest index wins ties.
std::size_t Classify(std::span<const double> logits);

/// Number of rows of `logits` whose Classify result equals the label.
std::size_t CountCorrect(const Matrix& logits, std::span<const std::size_t> labels);

}  // namespace idea
