#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "idea/hypersearch.hpp"
#include "idea/idea_core.hpp"
#include "idea/linalg.hpp"
#include "idea/tidea.hpp"

namespace idea {

inline constexpr const char* kToolVersion = "0.1.0";

enum class Mode { kZeroShot, kIdea, kTidea };

const char* ModeName(Mode mode);
Mode ParseMode(const std::string& name);

enum class SearchOrder { kSearchThenTrain, kTrainThenSearch };

struct AblationFlags {
  bool proj = true;
  bool bias = true;
  friend bool operator==(const AblationFlags&, const AblationFlags&) = default;
};

/// Input files. Unset entries are filled from `dataset_dir` using the
/// standard layout; relative paths resolve against the config file's folder.
struct DataPaths {
  std::filesystem::path dataset_dir;
  std::filesystem::path manifest;
  std::filesystem::path train_images;
  std::filesystem::path train_texts;
  std::filesystem::path train_labels;
  std::filesystem::path val_features;
  std::filesystem::path val_labels;
  std::filesystem::path test_features;
  std::filesystem::path test_labels;
  std::filesystem::path prototypes;

  DataPaths Resolved(const std::filesystem::path& base_dir) const;
};

struct ExperimentConfig {
  Mode mode = Mode::kIdea;
  std::size_t shots = 16;
  FusionConfig fusion;
  std::optional<TrainConfig> train;
  AblationFlags ablation;
  std::uint64_t seed = 1;  // shot sampling; training has its own seed
  bool search = false;     // grid-search the fusion config on validation
  SearchOrder search_order = SearchOrder::kSearchThenTrain;
  GridSpec grid = GridSpec::Default();
  DataPaths paths;
  std::filesystem::path report_path;     // empty: do not write
  std::filesystem::path checkpoint_dir;  // empty: do not write (tidea only)

  void Validate() const;
};

ExperimentConfig ExperimentConfigFromJson(const nlohmann::json& j);
nlohmann::json ExperimentConfigToJson(const ExperimentConfig& config);
/// Parses a config file; relative paths inside it are resolved against the
/// file's directory.
ExperimentConfig LoadExperimentConfig(const std::filesystem::path& path);

struct EvalReport {
  double top1_accuracy = 0.0;
  std::size_t correct = 0;
  std::size_t total = 0;
  std::vector<double> per_class_accuracy;
  std::vector<std::size_t> per_class_total;

  // Filled by RunExperiment.
  std::string dataset;
  std::string backbone;
  std::string tool_version = kToolVersion;
  nlohmann::json config;       // echo of the experiment config
  nlohmann::json details;      // fusion used, search and training summaries
  nlohmann::json timing;       // seconds per stage

  /// Canonical JSON (sorted keys, 2-space indent).
  std::string ToJson() const;
};

/// Uniformly draws k distinct indices of every class in [0, num_classes).
/// Output is class-major, ascending within a class, and a pure function of
/// (labels, k, seed).
std::vector<std::size_t> SampleShots(std::span<const std::size_t> labels, std::size_t num_classes,
                                     std::size_t k, std::uint64_t seed);

/// Top-1 and per-class accuracy of row-wise argmax predictions. Classes
/// without samples report 0.
EvalReport Evaluate(const Matrix& logits, std::span<const std::size_t> labels);

EvalReport RunExperiment(const ExperimentConfig& config);

/// Everything a search needs: the head, the sampled cache and the validation split.
struct FewShotSetup {
  CacheManifest manifest;
  ZeroShotHead head;
  FewShotCache cache;
  EmbeddingMatrix val_features;
  std::vector<std::size_t> val_labels;
};

/// Loads the config's files and builds the seeded K-shot cache. Errors are
/// tagged with the stage that raised them.
FewShotSetup LoadFewShotSetup(const ExperimentConfig& config);

struct AblationRow {
  AblationFlags flags;
  EvalReport report;
};

/// Runs every on/off combination of the listed components ("proj", "bias");
/// components not listed keep the config's setting. Both-off runs are plain
/// training-free evaluations.
std::vector<AblationRow> RunAblation(const ExperimentConfig& config,
                                     const std::vector<std::string>& components);
std::string AblationCsv(const std::vector<AblationRow>& rows);

struct ShotPoint {
  std::size_t shots = 0;
  std::uint64_t seed = 0;
  double top1_accuracy = 0.0;
};

/// Accuracy per (shots, seed) in list order.
std::vector<ShotPoint> RunShotCurve(const ExperimentConfig& config,
                                    const std::vector<std::size_t>& shot_list,
                                    const std::vector<std::uint64_t>& seeds);
/// Per-seed rows followed by one "mean" row per shot count.
std::string ShotCurveCsv(const std::vector<ShotPoint>& points);

}  // namespace idea
