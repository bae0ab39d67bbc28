#pragma once

// Training-free adapter: fuses class-aggregated cache similarities with the
// zero-shot logits.
//
//   s      = (1 - alpha) * Sim_I + alpha * Sim_T          (length N*K)
//   logits = beta * g(f(s)) + T_class . test              (length N)
//   f(x)   = exp(theta * (x - 1))                         elementwise
//   g(x)_i = sum_j x[i*K + j]                             class-major sum
//
// f is applied to every cache row before g sums the rows of a class.

#include <cstddef>
#include <span>
#include <vector>

#include "idea/embedstore.hpp"
#include "idea/linalg.hpp"
#include "idea/zeroshot.hpp"

namespace idea {

struct FusionConfig {
  double alpha = 0.5;   // weight of caption similarity vs image similarity
  double beta = 2.75;   // weight of few-shot knowledge vs zero-shot logits
  double theta = 2.0;   // sharpness of the activation

  /// 0 <= alpha <= 1, beta >= 0, theta > 0, all finite.
  void Validate() const;

  friend bool operator==(const FusionConfig&, const FusionConfig&) = default;
};

struct SimilarityPair {
  std::vector<double> sim_image;
  std::vector<double> sim_text;
};

SimilarityPair Similarities(const FewShotCache& cache, std::span<const float> test);

std::vector<double> Activate(std::span<const double> x, double theta);

/// Sums each class's K consecutive entries. Throws kShape unless x has n*k entries.
std::vector<double> Aggregate(std::span<const double> x, std::size_t n, std::size_t k);

/// Fusion kernel shared by the adapters and the grid search, so every caller
/// producing logits for the same inputs gets bit-identical results.
/// `bias` is either empty or one additive term per cache row.
std::vector<double> FuseLogits(std::span<const double> sim_image,
                               std::span<const double> sim_text, std::span<const double> bias,
                               std::span<const double> zero_shot, std::size_t n, std::size_t k,
                               const FusionConfig& config);

std::vector<double> IdeaLogits(const FewShotCache& cache, const ZeroShotHead& head,
                               std::span<const float> test, const FusionConfig& config);

/// Row m of the result is IdeaLogits for row m of `tests`.
Matrix IdeaLogitsBatch(const FewShotCache& cache, const ZeroShotHead& head,
                       const EmbeddingMatrix& tests, const FusionConfig& config);

/// Throws kShape unless cache, head and test dimension agree.
void CheckCompatible(const FewShotCache& cache, const ZeroShotHead& head, std::size_t test_dim);

}  // namespace idea
