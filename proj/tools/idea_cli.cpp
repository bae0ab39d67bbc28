// idea: command-line front end for the few-shot CLIP adapters.
//
//   idea eval    --config <path>                       single run
//   idea search  --grid <path> --config <path>         (alpha, beta, theta) search
//   idea train   --config <path>                       trainable adapter run
//   idea ablate  --components proj,bias --config <p>   component on/off matrix
//   idea shots   --list 1,2,4,8,16 --config <path>     accuracy vs shots curve
//   idea synth   --out <dir>                           synthetic dataset + config

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "idea/error.hpp"
#include "idea/evalharness.hpp"
#include "idea/fileio.hpp"
#include "idea/hypersearch.hpp"
#include "idea/serialization.hpp"
#include "idea/synthetic.hpp"
#include "idea/tidea.hpp"

namespace fs = std::filesystem;

namespace {

void PrintSummary(const idea::EvalReport& report) {
  std::cout << "dataset=" << report.dataset << " mode=" << report.config.value("mode", "")
            << " shots=" << report.config.value("shots", 0) << " top1=" << report.top1_accuracy
            << " (" << report.correct << "/" << report.total << ")\n";
}

void WriteOrPrint(const fs::path& path, const std::string& text) {
  if (path.empty()) {
    std::cout << text;
  } else {
    idea::WriteFileAtomic(path, text);
    std::cout << "wrote " << path.string() << "\n";
  }
}

idea::GridSpec LoadGrid(const fs::path& path) {
  if (path.empty()) return idea::GridSpec::Default();
  try {
    return nlohmann::json::parse(idea::ReadFileText(path)).get<idea::GridSpec>();
  } catch (const nlohmann::json::exception& e) {
    throw idea::Error(idea::ErrorCode::kFormat, path.string() + ": " + e.what());
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Few-shot CLIP adapters over precomputed embeddings"};
  app.require_subcommand(1);

  fs::path config_path;
  fs::path report_path;

  auto* eval = app.add_subcommand("eval", "Run one experiment from a config file");
  eval->add_option("--config", config_path, "Experiment config (JSON)")->required();
  eval->add_option("--report", report_path, "Override the report output path");

  fs::path grid_path;
  fs::path out_prefix = "search";
  fs::path checkpoint_in;
  bool coordinate = false;
  auto* search = app.add_subcommand("search", "Grid-search alpha, beta, theta on validation");
  search->add_option("--grid", grid_path, "Grid spec (JSON); defaults to the standard grid");
  search->add_option("--config", config_path, "Experiment config (JSON)")->required();
  search->add_flag("--coordinate", coordinate,
                   "Sweep one parameter at a time around the config's fusion values");
  search->add_option("--checkpoint", checkpoint_in, "Search with a trained adapter state");
  search->add_option("--out", out_prefix, "Output prefix for .csv and .json tables");

  fs::path checkpoint_out;
  auto* train = app.add_subcommand("train", "Train the adapter and evaluate it");
  train->add_option("--config", config_path, "Experiment config (JSON)")->required();
  train->add_option("--checkpoint", checkpoint_out, "Directory for the trained state");
  train->add_option("--report", report_path, "Override the report output path");

  std::vector<std::string> components;
  fs::path csv_out;
  auto* ablate = app.add_subcommand("ablate", "Plug/unplug trainable components");
  ablate->add_option("--components", components, "Components to toggle (proj,bias)")
      ->delimiter(',')
      ->required();
  ablate->add_option("--config", config_path, "Experiment config (JSON)")->required();
  ablate->add_option("--out", csv_out, "CSV output path (stdout if omitted)");

  std::vector<std::size_t> shot_list;
  std::vector<std::uint64_t> seeds{1};
  auto* shots = app.add_subcommand("shots", "Accuracy as a function of shots per class");
  shots->add_option("--list", shot_list, "Shot counts, e.g. 1,2,4,8,16")->delimiter(',')->required();
  shots->add_option("--seeds", seeds, "Shot-sampling seeds")->delimiter(',');
  shots->add_option("--config", config_path, "Experiment config (JSON)")->required();
  shots->add_option("--out", csv_out, "CSV output path (stdout if omitted)");

  fs::path synth_dir;
  idea::SyntheticSpec spec;
  auto* synth = app.add_subcommand("synth", "Write a synthetic dataset directory and config");
  synth->add_option("--out", synth_dir, "Output directory")->required();
  synth->add_option("--seed", spec.seed, "Generator seed");
  synth->add_option("--classes", spec.num_classes, "Number of classes");
  synth->add_option("--dim", spec.dim, "Feature dimension");
  synth->add_option("--train-per-class", spec.train_per_class, "Training samples per class");
  synth->add_option("--val-per-class", spec.val_per_class, "Validation samples per class");
  synth->add_option("--test-size", spec.test_size, "Test samples");
  synth->add_option("--image-noise", spec.image_noise, "Image cluster spread");
  synth->add_option("--text-noise", spec.text_noise, "Caption cluster spread");
  synth->add_option("--prototype-noise", spec.prototype_noise, "Prototype noise");
  synth->add_option("--text-misalignment", spec.text_misalignment, "Caption space rotation in [0,1]");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*eval) {
      auto config = idea::LoadExperimentConfig(config_path);
      if (!report_path.empty()) config.report_path = report_path;
      PrintSummary(idea::RunExperiment(config));
    } else if (*search) {
      const auto config = idea::LoadExperimentConfig(config_path);
      const auto grid = LoadGrid(grid_path);
      const auto setup = idea::LoadFewShotSetup(config);
      std::optional<idea::TrainableState> state;
      if (!checkpoint_in.empty()) state = idea::LoadCheckpoint(checkpoint_in).state;
      const idea::TrainableState* state_ptr = state ? &*state : nullptr;
      if (coordinate) {
        const auto rows = idea::CoordinateSweep(setup.cache, setup.head, setup.val_features,
                                                setup.val_labels, grid, config.fusion, state_ptr);
        idea::WriteFileAtomic(fs::path(out_prefix.string() + ".csv"), idea::SweepTableCsv(rows));
        idea::WriteFileAtomic(fs::path(out_prefix.string() + ".json"), idea::SweepTableJson(rows));
        std::cout << "coordinate sweep: " << rows.size() << " rows -> " << out_prefix.string()
                  << ".{csv,json}\n";
      } else {
        const auto result = idea::GridSearch(setup.cache, setup.head, setup.val_features,
                                             setup.val_labels, grid, state_ptr);
        idea::WriteFileAtomic(fs::path(out_prefix.string() + ".csv"),
                              idea::GridTableCsv(result.table));
        idea::WriteFileAtomic(fs::path(out_prefix.string() + ".json"), idea::GridTableJson(result));
        std::cout << "best alpha=" << result.best.alpha << " beta=" << result.best.beta
                  << " theta=" << result.best.theta << " val_accuracy=" << result.best_accuracy
                  << " over " << result.table.size() << " configs -> " << out_prefix.string()
                  << ".{csv,json}\n";
      }
    } else if (*train) {
      auto config = idea::LoadExperimentConfig(config_path);
      config.mode = idea::Mode::kTidea;
      if (!config.train) config.train = idea::TrainConfig{};
      if (!checkpoint_out.empty()) config.checkpoint_dir = checkpoint_out;
      if (!report_path.empty()) config.report_path = report_path;
      const auto report = idea::RunExperiment(config);
      PrintSummary(report);
      const auto& training = report.details.at("training");
      std::cout << "best_epoch=" << training.at("best_epoch")
                << " best_val_accuracy=" << training.at("best_val_accuracy") << "\n";
    } else if (*ablate) {
      const auto config = idea::LoadExperimentConfig(config_path);
      WriteOrPrint(csv_out, idea::AblationCsv(idea::RunAblation(config, components)));
    } else if (*shots) {
      const auto config = idea::LoadExperimentConfig(config_path);
      WriteOrPrint(csv_out, idea::ShotCurveCsv(idea::RunShotCurve(config, shot_list, seeds)));
    } else if (*synth) {
      const auto dataset = idea::MakeSyntheticDataset(spec);
      idea::WriteDatasetDir(dataset, synth_dir);
      nlohmann::json config = {
          {"mode", "idea"},
          {"shots", std::min<std::size_t>(16, spec.train_per_class)},
          {"seed", 1},
          {"fusion", idea::FusionConfig{}},
          {"train", idea::TrainConfig{}},
          {"paths", {{"dataset_dir", "."}}},
          {"report", "report.json"},
      };
      idea::WriteFileAtomic(synth_dir / "config.json", config.dump(2) + "\n");
      std::cout << "wrote synthetic dataset to " << synth_dir.string() << "\n";
    }
  } catch (const idea::Error& e) {
    std::cerr << "idea: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "idea: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
