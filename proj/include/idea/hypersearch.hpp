#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "idea/embedstore.hpp"
#include "idea/idea_core.hpp"
#include "idea/tidea.hpp"
#include "idea/zeroshot.hpp"

namespace idea {

struct GridSpec {
  std::vector<double> alphas;
  std::vector<double> betas;
  std::vector<double> thetas;

  /// alpha {0, .2, .4, .5, .8, 1}, beta {0, 1, 2, 2.5, 2.75, 3},
  /// theta {.5, 1, 1.5, 2, 3, 3.5}.
  static GridSpec Default();

  void Validate() const;
  std::size_t size() const { return alphas.size() * betas.size() * thetas.size(); }
};

struct GridRow {
  FusionConfig config;
  std::size_t correct = 0;
  double accuracy = 0.0;
};

struct GridResult {
  FusionConfig best;
  double best_accuracy = 0.0;
  std::vector<GridRow> table;  // accuracy descending, then (alpha, beta, theta) ascending
};

/// Per-sample adapter terms of a validation set, computed once and reused for
/// every fusion config. Logits come out of the same kernel the adapters use,
/// so they are bit-identical to a direct evaluation.
class SimilarityBank {
 public:
  SimilarityBank(const FewShotCache& cache, const ZeroShotHead& head,
                 const EmbeddingMatrix& features, const TrainableState* state = nullptr);

  std::size_t size() const noexcept { return terms_.size(); }
  std::vector<double> Logits(std::size_t sample, const FusionConfig& config) const;
  std::size_t CountCorrect(const FusionConfig& config, std::span<const std::size_t> labels) const;

 private:
  std::size_t num_classes_;
  std::size_t shots_;
  std::vector<AdapterTerms> terms_;
  std::vector<std::vector<double>> zero_shot_;
};

/// Exhaustive search over the Cartesian product of the grid. The most
/// accurate config wins; ties go to the lexicographically smallest
/// (alpha, beta, theta).
GridResult GridSearch(const FewShotCache& cache, const ZeroShotHead& head,
                      const EmbeddingMatrix& val_features, std::span<const std::size_t> val_labels,
                      const GridSpec& grid, const TrainableState* state = nullptr);

enum class SweptParameter { kAlpha, kBeta, kTheta };

const char* SweptParameterName(SweptParameter parameter);

struct SweepRow {
  SweptParameter parameter;
  FusionConfig config;
  std::size_t correct = 0;
  double accuracy = 0.0;
};

/// One-at-a-time sweep: each parameter takes every grid value while the other
/// two stay at `anchor`. Rows are grouped by parameter in grid order.
std::vector<SweepRow> CoordinateSweep(const FewShotCache& cache, const ZeroShotHead& head,
                                      const EmbeddingMatrix& val_features,
                                      std::span<const std::size_t> val_labels,
                                      const GridSpec& grid, const FusionConfig& anchor,
                                      const TrainableState* state = nullptr);

/// Accuracy of one config evaluated directly through the adapter logits.
double EvaluateConfig(const FewShotCache& cache, const ZeroShotHead& head,
                      const EmbeddingMatrix& features, std::span<const std::size_t> labels,
                      const FusionConfig& config, const TrainableState* state = nullptr);

std::string GridTableCsv(const std::vector<GridRow>& table);
std::string GridTableJson(const GridResult& result);
std::string SweepTableCsv(const std::vector<SweepRow>& rows);
std::string SweepTableJson(const std::vector<SweepRow>& rows);

}  // namespace idea
