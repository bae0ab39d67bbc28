#pragma once

// Trainable adapter. Adds a residual projection on the caption path and a
// learnable per-row correction to the fused similarity:
//
//   s = (1 - alpha) * I_train . x
//     + alpha * (T_train . W_proj . x + T_train . x)
//     + E_bias . x
//   logits = beta * g(f(s)) + T_class . x
//
// W_proj (D x D) and E_bias (NK x D) start at zero, where the adapter is
// exactly the training-free one. Either component can be switched off.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "idea/embedstore.hpp"
#include "idea/idea_core.hpp"
#include "idea/linalg.hpp"
#include "idea/zeroshot.hpp"

namespace idea {

struct TrainableState {
  Matrix w_proj;
  Matrix e_bias;
  bool enable_proj = true;
  bool enable_bias = true;

  static TrainableState Zero(std::size_t cache_rows, std::size_t dim, bool enable_proj = true,
                             bool enable_bias = true);

  /// Throws kShape unless w_proj is D x D and e_bias is NK x D for `cache`.
  void CheckShape(const FewShotCache& cache) const;
  /// Throws kStateCorruption on any non-finite parameter.
  void CheckFinite() const;

  friend bool operator==(const TrainableState&, const TrainableState&) = default;
};

enum class LrSchedule { kConstant, kCosine };

const char* LrScheduleName(LrSchedule schedule);
LrSchedule ParseLrSchedule(const std::string& name);

struct TrainConfig {
  double learning_rate = 5e-4;
  std::size_t epochs = 50;
  std::size_t batch_size = 256;
  std::uint64_t seed = 1;
  LrSchedule lr_schedule = LrSchedule::kCosine;
  double momentum = 0.0;
  double weight_decay = 0.0;

  void Validate() const;
  /// Step size for optimizer step `step` out of `total_steps`. The cosine
  /// schedule decays from learning_rate towards zero over the run.
  double LearningRateAt(std::size_t step, std::size_t total_steps) const;

  friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

/// Per-cache-row inputs to the fusion kernel for one test feature.
struct AdapterTerms {
  std::vector<double> sim_image;
  std::vector<double> sim_text;  // caption similarity plus the projected term when enabled
  std::vector<double> bias;      // E_bias . x, empty when disabled or without a state
};

/// With a null state this is the training-free adapter's similarity pair.
AdapterTerms ComputeAdapterTerms(const FewShotCache& cache, const TrainableState* state,
                                 std::span<const float> test);

std::vector<double> TideaLogits(const FewShotCache& cache, const ZeroShotHead& head,
                                const TrainableState& state, std::span<const float> test,
                                const FusionConfig& config);

Matrix TideaLogitsBatch(const FewShotCache& cache, const ZeroShotHead& head,
                        const TrainableState& state, const EmbeddingMatrix& tests,
                        const FusionConfig& config);

struct LossGrads {
  double loss = 0.0;
  Matrix grad_w;
  Matrix grad_e;
};

/// Mean softmax cross-entropy of the adapter logits over `batch`, with exact
/// gradients for both parameter blocks. Gradients of disabled components are
/// zero matrices.
LossGrads LossAndGrads(const FewShotCache& cache, const ZeroShotHead& head,
                       const TrainableState& state, const EmbeddingMatrix& batch,
                       std::span<const std::size_t> labels, const FusionConfig& config);

/// params -= step_lr * grads, for enabled components only.
TrainableState SgdStep(const TrainableState& state, const LossGrads& grads, double step_lr);

struct EpochRecord {
  std::size_t epoch = 0;  // 1-based
  double train_loss = 0.0;
  double val_accuracy = 0.0;
  double learning_rate = 0.0;  // step size of the epoch's first step
};

struct TrainResult {
  TrainableState state;
  std::vector<EpochRecord> history;
  std::size_t best_epoch = 0;  // 0 when no epoch ran
  double best_val_accuracy = 0.0;
};

/// Mini-batch SGD with per-epoch seeded shuffling. Keeps the state of the
/// epoch with the highest validation accuracy; the earlier epoch wins ties.
TrainResult Train(const FewShotCache& cache, const ZeroShotHead& head,
                  const EmbeddingMatrix& train_features,
                  std::span<const std::size_t> train_labels,
                  const EmbeddingMatrix& val_features, std::span<const std::size_t> val_labels,
                  const FusionConfig& fusion, const TrainConfig& config, bool enable_proj = true,
                  bool enable_bias = true);

struct Checkpoint {
  TrainableState state;
  FusionConfig fusion;
  TrainConfig train;
  std::size_t epoch = 0;
  double val_accuracy = 0.0;
};

/// Writes w_proj.emb, e_bias.emb and checkpoint.json into `dir`. Parameters
/// are stored as float32, so a reload is exact only to single precision.
void SaveCheckpoint(const Checkpoint& checkpoint, const std::filesystem::path& dir);
Checkpoint LoadCheckpoint(const std::filesystem::path& dir);

}  // namespace idea
