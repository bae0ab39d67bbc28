#include "idea/tidea.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <random>
#include <string>

#include <json.hpp>

#include "idea/error.hpp"
#include "idea/fileio.hpp"
#include "idea/random.hpp"
#include "idea/serialization.hpp"

namespace idea {

TrainableState TrainableState::Zero(std::size_t cache_rows, std::size_t dim, bool enable_proj,
                                    bool enable_bias) {
  TrainableState state;
  state.w_proj = Matrix(dim, dim);
  state.e_bias = Matrix(cache_rows, dim);
  state.enable_proj = enable_proj;
  state.enable_bias = enable_bias;
  return state;
}

void TrainableState::CheckShape(const FewShotCache& cache) const {
  const std::size_t d = cache.dim();
  if (w_proj.rows() != d || w_proj.cols() != d) {
    throw Error(ErrorCode::kShape, "w_proj must be " + std::to_string(d) + "x" +
                                       std::to_string(d) + ", got " +
                                       std::to_string(w_proj.rows()) + "x" +
                                       std::to_string(w_proj.cols()));
  }
  if (e_bias.rows() != cache.rows() || e_bias.cols() != d) {
    throw Error(ErrorCode::kShape, "e_bias must be " + std::to_string(cache.rows()) + "x" +
                                       std::to_string(d) + ", got " +
                                       std::to_string(e_bias.rows()) + "x" +
                                       std::to_string(e_bias.cols()));
  }
}

void TrainableState::CheckFinite() const {
  if (!w_proj.AllFinite()) throw Error(ErrorCode::kStateCorruption, "w_proj has non-finite entries");
  if (!e_bias.AllFinite()) throw Error(ErrorCode::kStateCorruption, "e_bias has non-finite entries");
}

const char* LrScheduleName(LrSchedule schedule) {
  return schedule == LrSchedule::kConstant ? "constant" : "cosine";
}

LrSchedule ParseLrSchedule(const std::string& name) {
  if (name == "constant") return LrSchedule::kConstant;
  if (name == "cosine") return LrSchedule::kCosine;
  throw Error(ErrorCode::kInput, "unknown lr_schedule \"" + name + "\"");
}

void TrainConfig::Validate() const {
  // A zero rate is accepted as the explicit no-learning configuration.
  if (!std::isfinite(learning_rate) || learning_rate < 0.0) {
    throw Error(ErrorCode::kInput, "learning_rate must be >= 0");
  }
  if (epochs < 1) throw Error(ErrorCode::kInput, "epochs must be >= 1");
  if (batch_size < 1) throw Error(ErrorCode::kInput, "batch_size must be >= 1");
  if (!std::isfinite(momentum) || momentum < 0.0 || momentum >= 1.0) {
    throw Error(ErrorCode::kInput, "momentum must lie in [0, 1)");
  }
  if (!std::isfinite(weight_decay) || weight_decay < 0.0) {
    throw Error(ErrorCode::kInput, "weight_decay must be >= 0");
  }
}

double TrainConfig::LearningRateAt(std::size_t step, std::size_t total_steps) const {
  if (lr_schedule == LrSchedule::kConstant || total_steps == 0) return learning_rate;
  const double progress = static_cast<double>(step) / static_cast<double>(total_steps);
  return learning_rate * 0.5 * (1.0 + std::cos(std::numbers::pi * progress));
}

AdapterTerms ComputeAdapterTerms(const FewShotCache& cache, const TrainableState* state,
                                 std::span<const float> test) {
  const std::size_t d = cache.dim();
  AdapterTerms terms;
  auto sims = Similarities(cache, test);
  terms.sim_image = std::move(sims.sim_image);
  terms.sim_text = std::move(sims.sim_text);
  if (state == nullptr) return terms;

  if (state->enable_proj) {
    std::vector<double> projected(d);
    for (std::size_t a = 0; a < d; ++a) projected[a] = Dot(state->w_proj.row(a), test);
    for (std::size_t r = 0; r < cache.rows(); ++r) {
      terms.sim_text[r] += Dot(cache.texts().row(r), std::span<const double>(projected));
    }
  }
  if (state->enable_bias) {
    terms.bias.resize(cache.rows());
    for (std::size_t r = 0; r < cache.rows(); ++r) {
      terms.bias[r] = Dot(state->e_bias.row(r), test);
    }
  }
  return terms;
}

namespace {

void CheckLabels(std::span<const std::size_t> labels, std::size_t num_classes) {
  for (std::size_t label : labels) {
    if (label >= num_classes) {
      throw Error(ErrorCode::kLabel, "label " + std::to_string(label) + " outside [0, " +
                                         std::to_string(num_classes) + ")");
    }
  }
}

}  // namespace

std::vector<double> TideaLogits(const FewShotCache& cache, const ZeroShotHead& head,
                                const TrainableState& state, std::span<const float> test,
                                const FusionConfig& config) {
  config.Validate();
  CheckCompatible(cache, head, test.size());
  state.CheckShape(cache);
  state.CheckFinite();
  const auto terms = ComputeAdapterTerms(cache, &state, test);
  const auto zero_shot = ZeroShotLogits(head, test);
  return FuseLogits(terms.sim_image, terms.sim_text, terms.bias, zero_shot, cache.num_classes(),
                    cache.shots(), config);
}

Matrix TideaLogitsBatch(const FewShotCache& cache, const ZeroShotHead& head,
                        const TrainableState& state, const EmbeddingMatrix& tests,
                        const FusionConfig& config) {
  config.Validate();
  CheckCompatible(cache, head, tests.dim());
  state.CheckShape(cache);
  state.CheckFinite();
  Matrix out(tests.rows(), cache.num_classes());
  for (std::size_t m = 0; m < tests.rows(); ++m) {
    const auto test = tests.row(m);
    const auto terms = ComputeAdapterTerms(cache, &state, test);
    const auto zero_shot = ZeroShotLogits(head, test);
    const auto logits = FuseLogits(terms.sim_image, terms.sim_text, terms.bias, zero_shot,
                                   cache.num_classes(), cache.shots(), config);
    std::copy(logits.begin(), logits.end(), out.row(m).begin());
  }
  return out;
}

LossGrads LossAndGrads(const FewShotCache& cache, const ZeroShotHead& head,
                       const TrainableState& state, const EmbeddingMatrix& batch,
                       std::span<const std::size_t> labels, const FusionConfig& config) {
  config.Validate();
  CheckCompatible(cache, head, batch.dim());
  state.CheckShape(cache);
  state.CheckFinite();
  if (batch.rows() != labels.size()) {
    throw Error(ErrorCode::kShape, std::to_string(batch.rows()) + " batch rows for " +
                                       std::to_string(labels.size()) + " labels");
  }
  CheckLabels(labels, cache.num_classes());

  const std::size_t n = cache.num_classes();
  const std::size_t k = cache.shots();
  const std::size_t rows = cache.rows();
  const std::size_t d = cache.dim();
  const double inv_m = 1.0 / static_cast<double>(batch.rows());
  const double alpha = config.alpha;

  LossGrads out;
  out.grad_w = Matrix(d, d);
  out.grad_e = Matrix(rows, d);

  std::vector<double> mixed(rows);
  std::vector<double> activated(rows);
  std::vector<double> text_weight(d);
  for (std::size_t m = 0; m < batch.rows(); ++m) {
    const auto x = batch.row(m);
    const auto terms = ComputeAdapterTerms(cache, &state, x);
    for (std::size_t r = 0; r < rows; ++r) {
      mixed[r] = (1.0 - alpha) * terms.sim_image[r] + alpha * terms.sim_text[r];
      if (!terms.bias.empty()) mixed[r] += terms.bias[r];
      activated[r] = std::exp(config.theta * (mixed[r] - 1.0));
    }
    const auto few_shot = Aggregate(activated, n, k);
    const auto zero_shot = ZeroShotLogits(head, x);
    std::vector<double> logits(n);
    for (std::size_t i = 0; i < n; ++i) logits[i] = config.beta * few_shot[i] + zero_shot[i];

    const double peak = *std::max_element(logits.begin(), logits.end());
    double denom = 0.0;
    for (double v : logits) denom += std::exp(v - peak);
    const double log_norm = peak + std::log(denom);
    out.loss += (log_norm - logits[labels[m]]) * inv_m;

    // d loss / d logits_i, then through beta * f to each cache row of class i.
    std::fill(text_weight.begin(), text_weight.end(), 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      const double prob = std::exp(logits[i] - log_norm);
      const double dlogit = (prob - (i == labels[m] ? 1.0 : 0.0)) * inv_m;
      for (std::size_t j = 0; j < k; ++j) {
        const std::size_t r = i * k + j;
        const double coeff = dlogit * config.beta * config.theta * activated[r];
        if (state.enable_bias) {
          auto grad_row = out.grad_e.row(r);
          for (std::size_t c = 0; c < d; ++c) grad_row[c] += coeff * x[c];
        }
        if (state.enable_proj) {
          const auto text_row = cache.texts().row(r);
          for (std::size_t c = 0; c < d; ++c) text_weight[c] += coeff * text_row[c];
        }
      }
    }
    if (state.enable_proj) {
      for (std::size_t a = 0; a < d; ++a) {
        auto grad_row = out.grad_w.row(a);
        const double scale = alpha * text_weight[a];
        for (std::size_t b = 0; b < d; ++b) grad_row[b] += scale * x[b];
      }
    }
  }
  if (!std::isfinite(out.loss)) throw Error(ErrorCode::kDivergence, "loss is not finite");
  return out;
}

TrainableState SgdStep(const TrainableState& state, const LossGrads& grads, double step_lr) {
  if (!std::isfinite(step_lr) || step_lr <= 0.0) {
    throw Error(ErrorCode::kInput, "step learning rate must be > 0");
  }
  if (grads.grad_w.rows() != state.w_proj.rows() || grads.grad_w.cols() != state.w_proj.cols() ||
      grads.grad_e.rows() != state.e_bias.rows() || grads.grad_e.cols() != state.e_bias.cols()) {
    throw Error(ErrorCode::kShape, "gradient shapes do not match the trainable state");
  }
  TrainableState next = state;
  auto apply = [step_lr](Matrix& params, const Matrix& grad, const char* name) {
    auto p = params.data();
    const auto g = grad.data();
    for (std::size_t i = 0; i < p.size(); ++i) {
      p[i] -= step_lr * g[i];
      if (!std::isfinite(p[i])) {
        throw Error(ErrorCode::kDivergence, std::string(name) + " diverged during SGD update");
      }
    }
  };
  if (next.enable_proj) apply(next.w_proj, grads.grad_w, "w_proj");
  if (next.enable_bias) apply(next.e_bias, grads.grad_e, "e_bias");
  return next;
}

TrainResult Train(const FewShotCache& cache, const ZeroShotHead& head,
                  const EmbeddingMatrix& train_features,
                  std::span<const std::size_t> train_labels,
                  const EmbeddingMatrix& val_features, std::span<const std::size_t> val_labels,
                  const FusionConfig& fusion, const TrainConfig& config, bool enable_proj,
                  bool enable_bias) {
  fusion.Validate();
  config.Validate();
  if (train_labels.empty()) throw Error(ErrorCode::kInput, "training set is empty");
  if (train_features.rows() != train_labels.size()) {
    throw Error(ErrorCode::kShape, "training features and labels differ in length");
  }
  if (val_features.rows() != val_labels.size() || val_labels.empty()) {
    throw Error(ErrorCode::kShape, "validation features and labels must be non-empty and equal");
  }
  CheckLabels(train_labels, cache.num_classes());
  CheckLabels(val_labels, cache.num_classes());

  TrainResult result;
  result.state = TrainableState::Zero(cache.rows(), cache.dim(), enable_proj, enable_bias);
  auto val_accuracy = [&](const TrainableState& state) {
    const auto logits = TideaLogitsBatch(cache, head, state, val_features, fusion);
    return static_cast<double>(CountCorrect(logits, val_labels)) /
           static_cast<double>(val_labels.size());
  };
  if (!enable_proj && !enable_bias) {
    result.best_val_accuracy = val_accuracy(result.state);
    return result;
  }

  const std::size_t samples = train_labels.size();
  const std::size_t steps_per_epoch = (samples + config.batch_size - 1) / config.batch_size;
  const std::size_t total_steps = steps_per_epoch * config.epochs;

  TrainableState state = result.state;
  LossGrads velocity{0.0, Matrix(state.w_proj.rows(), state.w_proj.cols()),
                     Matrix(state.e_bias.rows(), state.e_bias.cols())};
  std::vector<std::size_t> order(samples);
  std::mt19937_64 rng(config.seed);
  std::size_t step = 0;
  bool have_best = false;

  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    SeededShuffle(std::span<std::size_t>(order), rng);

    EpochRecord record;
    record.epoch = epoch;
    record.learning_rate = config.LearningRateAt(step, total_steps);
    double loss_sum = 0.0;
    for (std::size_t begin = 0; begin < samples; begin += config.batch_size, ++step) {
      const std::size_t end = std::min(samples, begin + config.batch_size);
      const std::span<const std::size_t> picked(order.data() + begin, end - begin);
      std::vector<std::size_t> batch_labels(picked.size());
      for (std::size_t i = 0; i < picked.size(); ++i) batch_labels[i] = train_labels[picked[i]];
      const auto batch = train_features.SelectRows(picked);

      auto grads = LossAndGrads(cache, head, state, batch, batch_labels, fusion);
      loss_sum += grads.loss * static_cast<double>(picked.size());

      if (config.weight_decay > 0.0) {
        for (std::size_t i = 0; i < grads.grad_w.data().size(); ++i) {
          grads.grad_w.data()[i] += config.weight_decay * state.w_proj.data()[i];
        }
        for (std::size_t i = 0; i < grads.grad_e.data().size(); ++i) {
          grads.grad_e.data()[i] += config.weight_decay * state.e_bias.data()[i];
        }
      }
      if (config.momentum > 0.0) {
        for (std::size_t i = 0; i < velocity.grad_w.data().size(); ++i) {
          velocity.grad_w.data()[i] =
              config.momentum * velocity.grad_w.data()[i] + grads.grad_w.data()[i];
        }
        for (std::size_t i = 0; i < velocity.grad_e.data().size(); ++i) {
          velocity.grad_e.data()[i] =
              config.momentum * velocity.grad_e.data()[i] + grads.grad_e.data()[i];
        }
        grads.grad_w = velocity.grad_w;
        grads.grad_e = velocity.grad_e;
      }

      const double step_lr = config.LearningRateAt(step, total_steps);
      if (step_lr > 0.0) state = SgdStep(state, grads, step_lr);
    }
    record.train_loss = loss_sum / static_cast<double>(samples);
    record.val_accuracy = val_accuracy(state);
    result.history.push_back(record);

    if (!have_best || record.val_accuracy > result.best_val_accuracy) {
      have_best = true;
      result.best_val_accuracy = record.val_accuracy;
      result.best_epoch = epoch;
      result.state = state;
    }
  }
  return result;
}

namespace {

EmbeddingMatrix ToEmbedding(const Matrix& m) {
  std::vector<float> data(m.data().size());
  for (std::size_t i = 0; i < data.size(); ++i) data[i] = static_cast<float>(m.data()[i]);
  return EmbeddingMatrix(m.rows(), m.cols(), std::move(data), false);
}

Matrix FromEmbedding(const EmbeddingMatrix& e) {
  Matrix m(e.rows(), e.dim());
  for (std::size_t i = 0; i < e.data().size(); ++i) m.data()[i] = e.data()[i];
  return m;
}

}  // namespace

void SaveCheckpoint(const Checkpoint& checkpoint, const std::filesystem::path& dir) {
  checkpoint.state.CheckFinite();
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw Error(ErrorCode::kIo, "cannot create checkpoint directory " + dir.string());
  SaveEmbeddings(ToEmbedding(checkpoint.state.w_proj), dir / "w_proj.emb");
  SaveEmbeddings(ToEmbedding(checkpoint.state.e_bias), dir / "e_bias.emb");
  nlohmann::json meta = {
      {"fusion", checkpoint.fusion},
      {"train", checkpoint.train},
      {"epoch", checkpoint.epoch},
      {"val_accuracy", checkpoint.val_accuracy},
      {"enable_proj", checkpoint.state.enable_proj},
      {"enable_bias", checkpoint.state.enable_bias},
  };
  WriteFileAtomic(dir / "checkpoint.json", meta.dump(2) + "\n");
}

Checkpoint LoadCheckpoint(const std::filesystem::path& dir) {
  Checkpoint checkpoint;
  try {
    const auto meta = nlohmann::json::parse(ReadFileText(dir / "checkpoint.json"));
    checkpoint.fusion = meta.at("fusion").get<FusionConfig>();
    checkpoint.train = meta.at("train").get<TrainConfig>();
    checkpoint.epoch = meta.at("epoch").get<std::size_t>();
    checkpoint.val_accuracy = meta.at("val_accuracy").get<double>();
    checkpoint.state.enable_proj = meta.at("enable_proj").get<bool>();
    checkpoint.state.enable_bias = meta.at("enable_bias").get<bool>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kFormat, "checkpoint.json: " + std::string(e.what()));
  }
  checkpoint.state.w_proj = FromEmbedding(LoadEmbeddings(dir / "w_proj.emb"));
  checkpoint.state.e_bias = FromEmbedding(LoadEmbeddings(dir / "e_bias.emb"));
  if (checkpoint.state.w_proj.rows() != checkpoint.state.w_proj.cols() ||
      checkpoint.state.e_bias.cols() != checkpoint.state.w_proj.cols()) {
    throw Error(ErrorCode::kShape, "checkpoint matrices have inconsistent shapes");
  }
  return checkpoint;
}

}  // namespace idea
