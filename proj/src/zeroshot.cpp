#include "idea/zeroshot.hpp"

#include <algorithm>
#include <cmath>

#include "idea/error.hpp"
#include "idea/linalg.hpp"

namespace idea {

ZeroShotHead::ZeroShotHead(EmbeddingMatrix prototypes, std::vector<std::string> class_names)
    : prototypes_(std::move(prototypes)), class_names_(std::move(class_names)) {
  if (!prototypes_.normalized()) {
    throw Error(ErrorCode::kInvariant, "class prototypes must be normalized");
  }
  if (prototypes_.rows() != class_names_.size()) {
    throw Error(ErrorCode::kShape, std::to_string(prototypes_.rows()) + " prototypes for " +
                                       std::to_string(class_names_.size()) + " class names");
  }
}

std::vector<double> ZeroShotLogits(const ZeroShotHead& head, std::span<const float> test) {
  if (test.size() != head.dim()) {
    throw Error(ErrorCode::kShape, "test feature has dim " + std::to_string(test.size()) +
                                       ", prototypes have dim " + std::to_string(head.dim()));
  }
  std::vector<double> logits(head.num_classes());
  for (std::size_t n = 0; n < logits.size(); ++n) {
    logits[n] = Dot(head.prototypes().row(n), test);
  }
  return logits;
}

Matrix ZeroShotLogitsBatch(const ZeroShotHead& head, const EmbeddingMatrix& tests) {
  Matrix out(tests.rows(), head.num_classes());
  for (std::size_t m = 0; m < tests.rows(); ++m) {
    const auto logits = ZeroShotLogits(head, tests.row(m));
    std::copy(logits.begin(), logits.end(), out.row(m).begin());
  }
  return out;
}

std::size_t Classify(std::span<const double> logits) {
  if (logits.empty()) throw Error(ErrorCode::kShape, "cannot classify an empty logit vector");
  std::size_t best = 0;
  for (std::size_t i = 1; i < logits.size(); ++i) {
    if (logits[i] > logits[best]) best = i;
  }
  return best;
}

std::size_t CountCorrect(const Matrix& logits, std::span<const std::size_t> labels) {
  if (logits.rows() != labels.size()) {
    throw Error(ErrorCode::kShape, std::to_string(logits.rows()) + " logit rows for " +
                                       std::to_string(labels.size()) + " labels");
  }
  std::size_t correct = 0;
  for (std::size_t m = 0; m < labels.size(); ++m) {
    if (Classify(logits.row(m)) == labels[m]) ++correct;
  }
  return correct;
}

}  // namespace idea
