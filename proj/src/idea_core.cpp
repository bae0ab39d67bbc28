#include "idea/idea_core.hpp"

#include <cmath>
#include <string>

#include "idea/error.hpp"

namespace idea {

void FusionConfig::Validate() const {
  if (!std::isfinite(alpha) || alpha < 0.0 || alpha > 1.0) {
    throw Error(ErrorCode::kInput, "alpha must lie in [0, 1], got " + std::to_string(alpha));
  }
  if (!std::isfinite(beta) || beta < 0.0) {
    throw Error(ErrorCode::kInput, "beta must be >= 0, got " + std::to_string(beta));
  }
  if (!std::isfinite(theta) || theta <= 0.0) {
    throw Error(ErrorCode::kInput, "theta must be > 0, got " + std::to_string(theta));
  }
}

void CheckCompatible(const FewShotCache& cache, const ZeroShotHead& head, std::size_t test_dim) {
  if (cache.num_classes() != head.num_classes()) {
    throw Error(ErrorCode::kShape, "cache has " + std::to_string(cache.num_classes()) +
                                       " classes, head has " +
                                       std::to_string(head.num_classes()));
  }
  if (cache.dim() != head.dim() || test_dim != cache.dim()) {
    throw Error(ErrorCode::kShape, "dimension mismatch: cache " + std::to_string(cache.dim()) +
                                       ", head " + std::to_string(head.dim()) + ", test " +
                                       std::to_string(test_dim));
  }
}

SimilarityPair Similarities(const FewShotCache& cache, std::span<const float> test) {
  if (test.size() != cache.dim()) {
    throw Error(ErrorCode::kShape, "test feature has dim " + std::to_string(test.size()) +
                                       ", cache has dim " + std::to_string(cache.dim()));
  }
  SimilarityPair out;
  out.sim_image.resize(cache.rows());
  out.sim_text.resize(cache.rows());
  for (std::size_t r = 0; r < cache.rows(); ++r) {
    out.sim_image[r] = Dot(cache.images().row(r), test);
    out.sim_text[r] = Dot(cache.texts().row(r), test);
  }
  return out;
}

std::vector<double> Activate(std::span<const double> x, double theta) {
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = std::exp(theta * (x[i] - 1.0));
  return out;
}

std::vector<double> Aggregate(std::span<const double> x, std::size_t n, std::size_t k) {
  if (x.size() != n * k) {
    throw Error(ErrorCode::kShape, "aggregate expects " + std::to_string(n * k) +
                                       " entries, got " + std::to_string(x.size()));
  }
  std::vector<double> out(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < k; ++j) out[i] += x[i * k + j];
  }
  return out;
}

std::vector<double> FuseLogits(std::span<const double> sim_image,
                               std::span<const double> sim_text, std::span<const double> bias,
                               std::span<const double> zero_shot, std::size_t n, std::size_t k,
                               const FusionConfig& config) {
  const std::size_t rows = n * k;
  if (sim_image.size() != rows || sim_text.size() != rows ||
      (!bias.empty() && bias.size() != rows) || zero_shot.size() != n) {
    throw Error(ErrorCode::kShape, "fusion inputs disagree with N=" + std::to_string(n) +
                                       ", K=" + std::to_string(k));
  }
  std::vector<double> mixed(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    mixed[r] = (1.0 - config.alpha) * sim_image[r] + config.alpha * sim_text[r];
    if (!bias.empty()) mixed[r] += bias[r];
  }
  const auto few_shot = Aggregate(Activate(mixed, config.theta), n, k);
  std::vector<double> logits(n);
  for (std::size_t i = 0; i < n; ++i) logits[i] = config.beta * few_shot[i] + zero_shot[i];
  return logits;
}

std::vector<double> IdeaLogits(const FewShotCache& cache, const ZeroShotHead& head,
                               std::span<const float> test, const FusionConfig& config) {
  config.Validate();
  CheckCompatible(cache, head, test.size());
  const auto sims = Similarities(cache, test);
  const auto zero_shot = ZeroShotLogits(head, test);
  return FuseLogits(sims.sim_image, sims.sim_text, {}, zero_shot, cache.num_classes(),
                    cache.shots(), config);
}

Matrix IdeaLogitsBatch(const FewShotCache& cache, const ZeroShotHead& head,
                       const EmbeddingMatrix& tests, const FusionConfig& config) {
  config.Validate();
  CheckCompatible(cache, head, tests.dim());
  Matrix out(tests.rows(), cache.num_classes());
  for (std::size_t m = 0; m < tests.rows(); ++m) {
    const auto test = tests.row(m);
    const auto sims = Similarities(cache, test);
    const auto zero_shot = ZeroShotLogits(head, test);
    const auto logits = FuseLogits(sims.sim_image, sims.sim_text, {}, zero_shot,
                                   cache.num_classes(), cache.shots(), config);
    std::copy(logits.begin(), logits.end(), out.row(m).begin());
  }
  return out;
}

}  // namespace idea
