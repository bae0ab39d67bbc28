#include "idea/hypersearch.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <string>
#include <tuple>

#include <json.hpp>

#include "idea/error.hpp"
#include "idea/serialization.hpp"

namespace idea {

GridSpec GridSpec::Default() {
  return GridSpec{{0.0, 0.2, 0.4, 0.5, 0.8, 1.0},
                  {0.0, 1.0, 2.0, 2.5, 2.75, 3.0},
                  {0.5, 1.0, 1.5, 2.0, 3.0, 3.5}};
}

void GridSpec::Validate() const {
  if (alphas.empty() || betas.empty() || thetas.empty()) {
    throw Error(ErrorCode::kInput, "grid lists must be non-empty");
  }
  for (double a : alphas) FusionConfig{a, 1.0, 1.0}.Validate();
  for (double b : betas) FusionConfig{0.5, b, 1.0}.Validate();
  for (double t : thetas) FusionConfig{0.5, 1.0, t}.Validate();
}

SimilarityBank::SimilarityBank(const FewShotCache& cache, const ZeroShotHead& head,
                               const EmbeddingMatrix& features, const TrainableState* state)
    : num_classes_(cache.num_classes()), shots_(cache.shots()) {
  CheckCompatible(cache, head, features.dim());
  if (state != nullptr) {
    state->CheckShape(cache);
    state->CheckFinite();
  }
  terms_.reserve(features.rows());
  zero_shot_.reserve(features.rows());
  for (std::size_t m = 0; m < features.rows(); ++m) {
    terms_.push_back(ComputeAdapterTerms(cache, state, features.row(m)));
    zero_shot_.push_back(ZeroShotLogits(head, features.row(m)));
  }
}

std::vector<double> SimilarityBank::Logits(std::size_t sample, const FusionConfig& config) const {
  const auto& t = terms_.at(sample);
  return FuseLogits(t.sim_image, t.sim_text, t.bias, zero_shot_[sample], num_classes_, shots_,
                    config);
}

std::size_t SimilarityBank::CountCorrect(const FusionConfig& config,
                                         std::span<const std::size_t> labels) const {
  if (labels.size() != terms_.size()) {
    throw Error(ErrorCode::kShape, std::to_string(labels.size()) + " labels for " +
                                       std::to_string(terms_.size()) + " samples");
  }
  std::size_t correct = 0;
  for (std::size_t m = 0; m < terms_.size(); ++m) {
    if (Classify(Logits(m, config)) == labels[m]) ++correct;
  }
  return correct;
}

namespace {

auto Key(const FusionConfig& c) { return std::make_tuple(c.alpha, c.beta, c.theta); }

void CheckValidation(const EmbeddingMatrix& features, std::span<const std::size_t> labels) {
  if (labels.empty()) throw Error(ErrorCode::kInput, "validation set is empty");
  if (features.rows() != labels.size()) {
    throw Error(ErrorCode::kShape, "validation features and labels differ in length");
  }
}

std::string FormatDouble(double v) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, end);
}

}  // namespace

GridResult GridSearch(const FewShotCache& cache, const ZeroShotHead& head,
                      const EmbeddingMatrix& val_features, std::span<const std::size_t> val_labels,
                      const GridSpec& grid, const TrainableState* state) {
  grid.Validate();
  CheckValidation(val_features, val_labels);
  const SimilarityBank bank(cache, head, val_features, state);
  const double total = static_cast<double>(val_labels.size());

  GridResult result;
  result.table.reserve(grid.size());
  for (double a : grid.alphas) {
    for (double b : grid.betas) {
      for (double t : grid.thetas) {
        GridRow row;
        row.config = FusionConfig{a, b, t};
        row.correct = bank.CountCorrect(row.config, val_labels);
        row.accuracy = static_cast<double>(row.correct) / total;
        result.table.push_back(row);
      }
    }
  }
  std::sort(result.table.begin(), result.table.end(), [](const GridRow& x, const GridRow& y) {
    if (x.correct != y.correct) return x.correct > y.correct;
    return Key(x.config) < Key(y.config);
  });
  result.best = result.table.front().config;
  result.best_accuracy = result.table.front().accuracy;
  return result;
}

const char* SweptParameterName(SweptParameter parameter) {
  switch (parameter) {
    case SweptParameter::kAlpha: return "alpha";
    case SweptParameter::kBeta: return "beta";
    case SweptParameter::kTheta: return "theta";
  }
  return "alpha";
}

std::vector<SweepRow> CoordinateSweep(const FewShotCache& cache, const ZeroShotHead& head,
                                      const EmbeddingMatrix& val_features,
                                      std::span<const std::size_t> val_labels,
                                      const GridSpec& grid, const FusionConfig& anchor,
                                      const TrainableState* state) {
  grid.Validate();
  anchor.Validate();
  CheckValidation(val_features, val_labels);
  const SimilarityBank bank(cache, head, val_features, state);
  const double total = static_cast<double>(val_labels.size());

  std::vector<SweepRow> rows;
  auto add = [&](SweptParameter p, FusionConfig c) {
    SweepRow row{p, c};
    row.correct = bank.CountCorrect(c, val_labels);
    row.accuracy = static_cast<double>(row.correct) / total;
    rows.push_back(row);
  };
  for (double a : grid.alphas) add(SweptParameter::kAlpha, {a, anchor.beta, anchor.theta});
  for (double b : grid.betas) add(SweptParameter::kBeta, {anchor.alpha, b, anchor.theta});
  for (double t : grid.thetas) add(SweptParameter::kTheta, {anchor.alpha, anchor.beta, t});
  return rows;
}

double EvaluateConfig(const FewShotCache& cache, const ZeroShotHead& head,
                      const EmbeddingMatrix& features, std::span<const std::size_t> labels,
                      const FusionConfig& config, const TrainableState* state) {
  CheckValidation(features, labels);
  const Matrix logits = state == nullptr
                            ? IdeaLogitsBatch(cache, head, features, config)
                            : TideaLogitsBatch(cache, head, *state, features, config);
  return static_cast<double>(CountCorrect(logits, labels)) / static_cast<double>(labels.size());
}

std::string GridTableCsv(const std::vector<GridRow>& table) {
  std::string out = "alpha,beta,theta,correct,accuracy\n";
  for (const auto& row : table) {
    out += FormatDouble(row.config.alpha) + "," + FormatDouble(row.config.beta) + "," +
           FormatDouble(row.config.theta) + "," + std::to_string(row.correct) + "," +
           FormatDouble(row.accuracy) + "\n";
  }
  return out;
}

std::string GridTableJson(const GridResult& result) {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& row : result.table) {
    rows.push_back({{"config", row.config}, {"correct", row.correct}, {"accuracy", row.accuracy}});
  }
  nlohmann::json j = {
      {"best", result.best}, {"best_accuracy", result.best_accuracy}, {"table", rows}};
  return j.dump(2) + "\n";
}

std::string SweepTableCsv(const std::vector<SweepRow>& rows) {
  std::string out = "parameter,value,alpha,beta,theta,correct,accuracy\n";
  for (const auto& row : rows) {
    const double value = row.parameter == SweptParameter::kAlpha  ? row.config.alpha
                         : row.parameter == SweptParameter::kBeta ? row.config.beta
                                                                  : row.config.theta;
    out += std::string(SweptParameterName(row.parameter)) + "," + FormatDouble(value) + "," +
           FormatDouble(row.config.alpha) + "," + FormatDouble(row.config.beta) + "," +
           FormatDouble(row.config.theta) + "," + std::to_string(row.correct) + "," +
           FormatDouble(row.accuracy) + "\n";
  }
  return out;
}

std::string SweepTableJson(const std::vector<SweepRow>& rows) {
  nlohmann::json out = nlohmann::json::array();
  for (const auto& row : rows) {
    out.push_back({{"parameter", SweptParameterName(row.parameter)},
                   {"config", row.config},
                   {"correct", row.correct},
                   {"accuracy", row.accuracy}});
  }
  return out.dump(2) + "\n";
}

}  // namespace idea
