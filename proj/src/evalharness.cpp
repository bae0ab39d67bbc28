#include "idea/evalharness.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <map>
#include <random>
#include <utility>

#include "idea/dataset_layout.hpp"
#include "idea/embedstore.hpp"
#include "idea/error.hpp"
#include "idea/fileio.hpp"
#include "idea/random.hpp"
#include "idea/serialization.hpp"
#include "idea/zeroshot.hpp"

namespace idea {

using nlohmann::json;

const char* ModeName(Mode mode) {
  switch (mode) {
    case Mode::kZeroShot: return "zeroshot";
    case Mode::kIdea: return "idea";
    case Mode::kTidea: return "tidea";
  }
  return "idea";
}

Mode ParseMode(const std::string& name) {
  if (name == "zeroshot") return Mode::kZeroShot;
  if (name == "idea") return Mode::kIdea;
  if (name == "tidea") return Mode::kTidea;
  throw Error(ErrorCode::kInput, "unknown mode \"" + name + "\"");
}

namespace {

const char* SearchOrderName(SearchOrder order) {
  return order == SearchOrder::kSearchThenTrain ? "search-then-train" : "train-then-search";
}

SearchOrder ParseSearchOrder(const std::string& name) {
  if (name == "search-then-train") return SearchOrder::kSearchThenTrain;
  if (name == "train-then-search") return SearchOrder::kTrainThenSearch;
  throw Error(ErrorCode::kInput, "unknown search_order \"" + name + "\"");
}

std::filesystem::path ResolveOne(const std::filesystem::path& explicit_path,
                                 const std::filesystem::path& dataset_dir, const char* file_name,
                                 const std::filesystem::path& base_dir) {
  std::filesystem::path p = explicit_path;
  if (p.empty() && !dataset_dir.empty()) p = dataset_dir / file_name;
  if (!p.empty() && p.is_relative() && !base_dir.empty()) p = base_dir / p;
  return p;
}

std::string FormatDouble(double v) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, end);
}

}  // namespace

DataPaths DataPaths::Resolved(const std::filesystem::path& base_dir) const {
  DataPaths out;
  out.dataset_dir = dataset_dir;
  if (!out.dataset_dir.empty() && out.dataset_dir.is_relative() && !base_dir.empty()) {
    out.dataset_dir = base_dir / out.dataset_dir;
  }
  // The dataset directory is already resolved, so only explicit paths need base_dir.
  auto one = [&](const std::filesystem::path& p, const char* name) {
    if (!p.empty()) return ResolveOne(p, {}, name, base_dir);
    return ResolveOne({}, out.dataset_dir, name, {});
  };
  out.manifest = one(manifest, layout::kManifest);
  out.train_images = one(train_images, layout::kTrainImages);
  out.train_texts = one(train_texts, layout::kTrainTexts);
  out.train_labels = one(train_labels, layout::kTrainLabels);
  out.val_features = one(val_features, layout::kValFeatures);
  out.val_labels = one(val_labels, layout::kValLabels);
  out.test_features = one(test_features, layout::kTestFeatures);
  out.test_labels = one(test_labels, layout::kTestLabels);
  out.prototypes = one(prototypes, layout::kPrototypes);
  return out;
}

void ExperimentConfig::Validate() const {
  if (shots < 1) throw Error(ErrorCode::kInput, "shots must be >= 1");
  fusion.Validate();
  if (mode == Mode::kTidea && !train) {
    throw Error(ErrorCode::kInput, "mode \"tidea\" requires a train config");
  }
  if (train) train->Validate();
  if (search) grid.Validate();
}

ExperimentConfig ExperimentConfigFromJson(const json& j) {
  ExperimentConfig c;
  try {
    if (j.contains("mode")) c.mode = ParseMode(j.at("mode").get<std::string>());
    c.shots = j.value("shots", c.shots);
    c.seed = j.value("seed", c.seed);
    if (j.contains("fusion")) c.fusion = j.at("fusion").get<FusionConfig>();
    if (j.contains("train") && !j.at("train").is_null()) c.train = j.at("train").get<TrainConfig>();
    if (j.contains("ablation")) {
      c.ablation.proj = j.at("ablation").value("proj", true);
      c.ablation.bias = j.at("ablation").value("bias", true);
    }
    c.search = j.value("search", c.search);
    if (j.contains("search_order")) {
      c.search_order = ParseSearchOrder(j.at("search_order").get<std::string>());
    }
    if (j.contains("grid")) c.grid = j.at("grid").get<GridSpec>();
    if (j.contains("paths")) {
      const json& p = j.at("paths");
      auto get = [&](const char* key) { return std::filesystem::path(p.value(key, std::string())); };
      c.paths.dataset_dir = get("dataset_dir");
      c.paths.manifest = get("manifest");
      c.paths.train_images = get("train_images");
      c.paths.train_texts = get("train_texts");
      c.paths.train_labels = get("train_labels");
      c.paths.val_features = get("val_features");
      c.paths.val_labels = get("val_labels");
      c.paths.test_features = get("test_features");
      c.paths.test_labels = get("test_labels");
      c.paths.prototypes = get("prototypes");
    }
    c.report_path = j.value("report", std::string());
    c.checkpoint_dir = j.value("checkpoint_dir", std::string());
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kFormat, std::string("experiment config: ") + e.what());
  }
  c.Validate();
  return c;
}

json ExperimentConfigToJson(const ExperimentConfig& c) {
  const auto& p = c.paths;
  json j = {
      {"mode", ModeName(c.mode)},
      {"shots", c.shots},
      {"seed", c.seed},
      {"fusion", c.fusion},
      {"train", c.train ? json(*c.train) : json(nullptr)},
      {"ablation", {{"proj", c.ablation.proj}, {"bias", c.ablation.bias}}},
      {"search", c.search},
      {"search_order", SearchOrderName(c.search_order)},
      {"grid", c.grid},
      {"paths",
       {{"dataset_dir", p.dataset_dir.string()},
        {"manifest", p.manifest.string()},
        {"train_images", p.train_images.string()},
        {"train_texts", p.train_texts.string()},
        {"train_labels", p.train_labels.string()},
        {"val_features", p.val_features.string()},
        {"val_labels", p.val_labels.string()},
        {"test_features", p.test_features.string()},
        {"test_labels", p.test_labels.string()},
        {"prototypes", p.prototypes.string()}}},
      {"report", c.report_path.string()},
      {"checkpoint_dir", c.checkpoint_dir.string()},
  };
  return j;
}

ExperimentConfig LoadExperimentConfig(const std::filesystem::path& path) {
  json j;
  try {
    j = json::parse(ReadFileText(path));
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kFormat, path.string() + ": " + e.what());
  }
  ExperimentConfig c = ExperimentConfigFromJson(j);
  const auto base = path.parent_path();
  c.paths = c.paths.Resolved(base);
  if (!c.report_path.empty() && c.report_path.is_relative()) c.report_path = base / c.report_path;
  if (!c.checkpoint_dir.empty() && c.checkpoint_dir.is_relative()) {
    c.checkpoint_dir = base / c.checkpoint_dir;
  }
  return c;
}

std::string EvalReport::ToJson() const {
  json j = {
      {"top1_accuracy", top1_accuracy},
      {"correct", correct},
      {"total", total},
      {"per_class_accuracy", per_class_accuracy},
      {"per_class_total", per_class_total},
      {"dataset", dataset},
      {"backbone", backbone},
      {"tool_version", tool_version},
      {"config", config},
      {"details", details},
      {"timing", timing},
  };
  return j.dump(2) + "\n";
}

std::vector<std::size_t> SampleShots(std::span<const std::size_t> labels, std::size_t num_classes,
                                     std::size_t k, std::uint64_t seed) {
  if (k == 0) throw Error(ErrorCode::kInput, "shots must be >= 1");
  std::vector<std::vector<std::size_t>> by_class(num_classes);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] >= num_classes) {
      throw Error(ErrorCode::kLabel, "label " + std::to_string(labels[i]) + " at index " +
                                         std::to_string(i) + " outside [0, " +
                                         std::to_string(num_classes) + ")");
    }
    by_class[labels[i]].push_back(i);
  }
  std::mt19937_64 rng(seed);
  std::vector<std::size_t> out;
  out.reserve(num_classes * k);
  for (std::size_t c = 0; c < num_classes; ++c) {
    auto& pool = by_class[c];
    if (pool.size() < k) {
      throw Error(ErrorCode::kCardinality, "class " + std::to_string(c) + " has " +
                                               std::to_string(pool.size()) +
                                               " samples, fewer than " + std::to_string(k) +
                                               " shots");
    }
    // Partial Fisher-Yates: the first k slots end up a uniform k-subset.
    for (std::size_t i = 0; i < k; ++i) {
      const auto j = i + static_cast<std::size_t>(UniformIndex(rng, pool.size() - i));
      std::swap(pool[i], pool[j]);
    }
    std::sort(pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(k));
    out.insert(out.end(), pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(k));
  }
  return out;
}

EvalReport Evaluate(const Matrix& logits, std::span<const std::size_t> labels) {
  if (logits.rows() != labels.size()) {
    throw Error(ErrorCode::kShape, std::to_string(logits.rows()) + " logit rows for " +
                                       std::to_string(labels.size()) + " labels");
  }
  if (labels.empty()) throw Error(ErrorCode::kShape, "cannot evaluate an empty set");
  const std::size_t n = logits.cols();
  EvalReport report;
  report.total = labels.size();
  report.per_class_total.assign(n, 0);
  std::vector<std::size_t> per_class_correct(n, 0);
  for (std::size_t m = 0; m < labels.size(); ++m) {
    if (labels[m] >= n) {
      throw Error(ErrorCode::kLabel, "label " + std::to_string(labels[m]) + " outside [0, " +
                                         std::to_string(n) + ")");
    }
    ++report.per_class_total[labels[m]];
    if (Classify(logits.row(m)) == labels[m]) {
      ++report.correct;
      ++per_class_correct[labels[m]];
    }
  }
  report.top1_accuracy =
      static_cast<double>(report.correct) / static_cast<double>(report.total);
  report.per_class_accuracy.assign(n, 0.0);
  for (std::size_t c = 0; c < n; ++c) {
    if (report.per_class_total[c] > 0) {
      report.per_class_accuracy[c] = static_cast<double>(per_class_correct[c]) /
                                     static_cast<double>(report.per_class_total[c]);
    }
  }
  return report;
}

namespace {

class StageClock {
 public:
  template <typename F>
  auto Run(const char* stage, F&& body) {
    const auto start = std::chrono::steady_clock::now();
    try {
      if constexpr (std::is_void_v<decltype(body())>) {
        body();
        Record(stage, start);
      } else {
        auto value = body();
        Record(stage, start);
        return value;
      }
    } catch (const Error& e) {
      throw e.WithStage(stage);
    }
  }

  json ToJson(double total_seconds) const {
    json j = seconds_;
    j["total"] = total_seconds;
    return j;
  }

 private:
  void Record(const char* stage, std::chrono::steady_clock::time_point start) {
    const std::chrono::duration<double> elapsed = std::chrono::steady_clock::now() - start;
    seconds_[stage] = seconds_.value(stage, 0.0) + elapsed.count();
  }

  json seconds_ = json::object();
};

EmbeddingMatrix Normalized(EmbeddingMatrix m) {
  return m.normalized() ? std::move(m) : L2NormalizeRows(m);
}

void RequireRows(const EmbeddingMatrix& features, std::span<const std::size_t> labels,
                 const char* what) {
  if (features.rows() != labels.size()) {
    throw Error(ErrorCode::kShape, std::string(what) + ": " + std::to_string(features.rows()) +
                                       " feature rows for " + std::to_string(labels.size()) +
                                       " labels");
  }
}

json SearchSummary(const GridResult& result) {
  return {{"best", result.best},
          {"best_accuracy", result.best_accuracy},
          {"grid_points", result.table.size()}};
}

}  // namespace

EvalReport RunExperiment(const ExperimentConfig& config) {
  const auto run_start = std::chrono::steady_clock::now();
  StageClock clock;
  clock.Run("config", [&] { config.Validate(); });
  const DataPaths& paths = config.paths;

  const auto manifest = clock.Run("load", [&] { return LoadManifest(paths.manifest); });
  const ZeroShotHead head = clock.Run("load", [&] {
    return ZeroShotHead(Normalized(LoadEmbeddings(paths.prototypes)), manifest.class_names);
  });
  const auto test_features =
      clock.Run("load", [&] { return Normalized(LoadEmbeddings(paths.test_features)); });
  const auto test_labels = clock.Run("load", [&] {
    auto labels = LoadLabels(paths.test_labels);
    RequireRows(test_features, labels, "test split");
    return labels;
  });

  FusionConfig fusion = config.fusion;
  json details = json::object();
  Matrix logits;

  if (config.mode == Mode::kZeroShot) {
    logits = clock.Run("evaluate", [&] { return ZeroShotLogitsBatch(head, test_features); });
  } else {
    const auto train_images =
        clock.Run("load", [&] { return LoadEmbeddings(paths.train_images); });
    const auto train_texts = clock.Run("load", [&] { return LoadEmbeddings(paths.train_texts); });
    const auto train_labels = clock.Run("load", [&] {
      auto labels = LoadLabels(paths.train_labels);
      RequireRows(train_images, labels, "train split");
      return labels;
    });
    const auto val_features =
        clock.Run("load", [&] { return Normalized(LoadEmbeddings(paths.val_features)); });
    const auto val_labels = clock.Run("load", [&] {
      auto labels = LoadLabels(paths.val_labels);
      RequireRows(val_features, labels, "validation split");
      return labels;
    });

    const auto picked = clock.Run("sample", [&] {
      return SampleShots(train_labels, manifest.num_classes, config.shots, config.seed);
    });
    const FewShotCache cache = clock.Run("cache", [&] {
      CacheManifest cache_manifest = manifest;
      cache_manifest.shots = config.shots;
      std::vector<std::size_t> cache_labels(picked.size());
      for (std::size_t i = 0; i < picked.size(); ++i) cache_labels[i] = train_labels[picked[i]];
      return AssembleCache(train_images.SelectRows(picked), train_texts.SelectRows(picked),
                           cache_manifest, cache_labels);
    });

    auto search = [&](const TrainableState* state) {
      const auto result = clock.Run("search", [&] {
        return GridSearch(cache, head, val_features, val_labels, config.grid, state);
      });
      fusion = result.best;
      details["search"] = SearchSummary(result);
    };

    if (config.mode == Mode::kIdea) {
      if (config.search) search(nullptr);
      logits = clock.Run("evaluate", [&] {
        return IdeaLogitsBatch(cache, head, test_features, fusion);
      });
    } else {
      if (config.search && config.search_order == SearchOrder::kSearchThenTrain) search(nullptr);
      const auto trained = clock.Run("train", [&] {
        return Train(cache, head, cache.images(), cache.labels(), val_features, val_labels,
                     fusion, *config.train, config.ablation.proj, config.ablation.bias);
      });
      if (config.search && config.search_order == SearchOrder::kTrainThenSearch) {
        search(&trained.state);
      }
      json history = json::array();
      for (const auto& e : trained.history) {
        history.push_back({{"epoch", e.epoch},
                           {"train_loss", e.train_loss},
                           {"val_accuracy", e.val_accuracy},
                           {"learning_rate", e.learning_rate}});
      }
      details["training"] = {{"best_epoch", trained.best_epoch},
                             {"best_val_accuracy", trained.best_val_accuracy},
                             {"history", history}};
      if (!config.checkpoint_dir.empty()) {
        clock.Run("checkpoint", [&] {
          SaveCheckpoint(Checkpoint{trained.state, fusion, *config.train, trained.best_epoch,
                                    trained.best_val_accuracy},
                         config.checkpoint_dir);
        });
      }
      logits = clock.Run("evaluate", [&] {
        return TideaLogitsBatch(cache, head, trained.state, test_features, fusion);
      });
    }
  }

  EvalReport report = clock.Run("evaluate", [&] { return Evaluate(logits, test_labels); });
  details["fusion"] = fusion;
  report.dataset = manifest.dataset_name;
  report.backbone = manifest.backbone_tag;
  report.config = ExperimentConfigToJson(config);
  report.details = std::move(details);

  const std::chrono::duration<double> total = std::chrono::steady_clock::now() - run_start;
  report.timing = clock.ToJson(total.count());
  if (!config.report_path.empty()) {
    clock.Run("report", [&] { WriteFileAtomic(config.report_path, report.ToJson()); });
  }
  return report;
}

FewShotSetup LoadFewShotSetup(const ExperimentConfig& config) {
  StageClock clock;
  clock.Run("config", [&] { config.Validate(); });
  const DataPaths& paths = config.paths;
  auto manifest = clock.Run("load", [&] { return LoadManifest(paths.manifest); });
  auto head = clock.Run("load", [&] {
    return ZeroShotHead(Normalized(LoadEmbeddings(paths.prototypes)), manifest.class_names);
  });
  const auto train_images = clock.Run("load", [&] { return LoadEmbeddings(paths.train_images); });
  const auto train_texts = clock.Run("load", [&] { return LoadEmbeddings(paths.train_texts); });
  const auto train_labels = clock.Run("load", [&] {
    auto labels = LoadLabels(paths.train_labels);
    RequireRows(train_images, labels, "train split");
    return labels;
  });
  auto val_features =
      clock.Run("load", [&] { return Normalized(LoadEmbeddings(paths.val_features)); });
  auto val_labels = clock.Run("load", [&] {
    auto labels = LoadLabels(paths.val_labels);
    RequireRows(val_features, labels, "validation split");
    return labels;
  });
  const auto picked = clock.Run("sample", [&] {
    return SampleShots(train_labels, manifest.num_classes, config.shots, config.seed);
  });
  auto cache = clock.Run("cache", [&] {
    CacheManifest cache_manifest = manifest;
    cache_manifest.shots = config.shots;
    std::vector<std::size_t> cache_labels(picked.size());
    for (std::size_t i = 0; i < picked.size(); ++i) cache_labels[i] = train_labels[picked[i]];
    return AssembleCache(train_images.SelectRows(picked), train_texts.SelectRows(picked),
                         cache_manifest, cache_labels);
  });
  return FewShotSetup{std::move(manifest), std::move(head), std::move(cache),
                      std::move(val_features), std::move(val_labels)};
}

std::vector<AblationRow> RunAblation(const ExperimentConfig& config,
                                     const std::vector<std::string>& components) {
  bool sweep_proj = false;
  bool sweep_bias = false;
  for (const auto& c : components) {
    if (c == "proj") {
      sweep_proj = true;
    } else if (c == "bias") {
      sweep_bias = true;
    } else {
      throw Error(ErrorCode::kInput, "unknown component \"" + c + "\" (expected proj or bias)");
    }
  }
  if (!sweep_proj && !sweep_bias) throw Error(ErrorCode::kInput, "no components to ablate");

  std::vector<bool> proj_values = sweep_proj ? std::vector<bool>{false, true}
                                             : std::vector<bool>{config.ablation.proj};
  std::vector<bool> bias_values = sweep_bias ? std::vector<bool>{false, true}
                                             : std::vector<bool>{config.ablation.bias};
  std::vector<AblationRow> rows;
  for (bool proj : proj_values) {
    for (bool bias : bias_values) {
      ExperimentConfig run = config;
      run.mode = Mode::kTidea;
      if (!run.train) run.train = TrainConfig{};
      run.ablation = AblationFlags{proj, bias};
      run.report_path.clear();
      run.checkpoint_dir.clear();
      rows.push_back(AblationRow{run.ablation, RunExperiment(run)});
    }
  }
  return rows;
}

std::string AblationCsv(const std::vector<AblationRow>& rows) {
  std::string out = "proj,bias,correct,total,top1_accuracy\n";
  for (const auto& row : rows) {
    out += std::string(row.flags.proj ? "1" : "0") + "," + (row.flags.bias ? "1" : "0") + "," +
           std::to_string(row.report.correct) + "," + std::to_string(row.report.total) + "," +
           FormatDouble(row.report.top1_accuracy) + "\n";
  }
  return out;
}

std::vector<ShotPoint> RunShotCurve(const ExperimentConfig& config,
                                    const std::vector<std::size_t>& shot_list,
                                    const std::vector<std::uint64_t>& seeds) {
  if (shot_list.empty() || seeds.empty()) {
    throw Error(ErrorCode::kInput, "shot list and seed list must be non-empty");
  }
  std::vector<ShotPoint> points;
  for (std::size_t shots : shot_list) {
    for (std::uint64_t seed : seeds) {
      ExperimentConfig run = config;
      run.shots = shots;
      run.seed = seed;
      run.report_path.clear();
      run.checkpoint_dir.clear();
      points.push_back(ShotPoint{shots, seed, RunExperiment(run).top1_accuracy});
    }
  }
  return points;
}

std::string ShotCurveCsv(const std::vector<ShotPoint>& points) {
  std::string out = "shots,seed,top1_accuracy\n";
  std::map<std::size_t, std::pair<double, std::size_t>> sums;
  std::vector<std::size_t> order;
  for (const auto& p : points) {
    out += std::to_string(p.shots) + "," + std::to_string(p.seed) + "," +
           FormatDouble(p.top1_accuracy) + "\n";
    auto [it, inserted] = sums.try_emplace(p.shots, 0.0, 0);
    if (inserted) order.push_back(p.shots);
    it->second.first += p.top1_accuracy;
    ++it->second.second;
  }
  for (std::size_t shots : order) {
    const auto& [sum, count] = sums.at(shots);
    out += std::to_string(shots) + ",mean," + FormatDouble(sum / static_cast<double>(count)) + "\n";
  }
  return out;
}

}  // namespace idea
