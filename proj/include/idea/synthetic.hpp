#pragma once

// Seeded synthetic few-shot benchmark: Gaussian class clusters on the unit
// sphere with paired "caption" features and noisy class prototypes.
//
//   image     = normalize(mu_c + image_noise * z / sqrt(D))
//   caption   = normalize(rot_c + text_noise * z / sqrt(D))
//   prototype = normalize(mu_c + prototype_noise * z / sqrt(D))
//
// rot_c = normalize((1 - m) * mu_c + m * Q mu_c) for a fixed random rotation Q
// and misalignment m, modelling a gap between image and caption spaces.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <random>
#include <vector>

#include "idea/embedstore.hpp"

namespace idea {

struct SyntheticSpec {
  std::size_t num_classes = 10;
  std::size_t dim = 32;
  std::size_t train_per_class = 16;
  std::size_t val_per_class = 20;
  std::size_t test_size = 500;
  double image_noise = 1.3;
  double text_noise = 1.0;
  double prototype_noise = 2.0;
  double text_misalignment = 0.3;
  std::uint64_t seed = 1;
};

struct SyntheticDataset {
  CacheManifest manifest;  // shots = train_per_class
  EmbeddingMatrix train_images;
  EmbeddingMatrix train_texts;
  std::vector<std::size_t> train_labels;
  EmbeddingMatrix val_features;
  std::vector<std::size_t> val_labels;
  EmbeddingMatrix test_features;
  std::vector<std::size_t> test_labels;
  EmbeddingMatrix prototypes;
};

SyntheticDataset MakeSyntheticDataset(const SyntheticSpec& spec);

/// Writes the dataset using the standard dataset-directory file names.
void WriteDatasetDir(const SyntheticDataset& dataset, const std::filesystem::path& dir);

/// Standard normal draw from raw generator output (Box-Muller).
double StandardNormal(std::mt19937_64& rng);

/// Random unit vector, uniform on the sphere.
std::vector<double> RandomUnitVector(std::mt19937_64& rng, std::size_t dim);

}  // namespace idea
