#include "idea/synthetic.hpp"

#include <cmath>
#include <numbers>

#include "idea/dataset_layout.hpp"
#include "idea/error.hpp"
#include "idea/fileio.hpp"

namespace idea {

double StandardNormal(std::mt19937_64& rng) {
  constexpr double kScale = 1.0 / 9007199254740992.0;  // 2^-53
  double u1 = 0.0;
  while (u1 == 0.0) u1 = static_cast<double>(rng() >> 11) * kScale;
  const double u2 = static_cast<double>(rng() >> 11) * kScale;
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

std::vector<double> RandomUnitVector(std::mt19937_64& rng, std::size_t dim) {
  std::vector<double> v(dim);
  double sq = 0.0;
  do {
    sq = 0.0;
    for (auto& x : v) {
      x = StandardNormal(rng);
      sq += x * x;
    }
  } while (sq < 1e-12);
  const double norm = std::sqrt(sq);
  for (auto& x : v) x /= norm;
  return v;
}

namespace {

using Vec = std::vector<double>;

Vec Normalized(Vec v) {
  double sq = 0.0;
  for (double x : v) sq += x * x;
  const double norm = std::sqrt(sq);
  for (auto& x : v) x /= norm;
  return v;
}

// Random orthogonal matrix via Gram-Schmidt on Gaussian columns.
std::vector<Vec> RandomRotation(std::mt19937_64& rng, std::size_t dim) {
  std::vector<Vec> basis;
  while (basis.size() < dim) {
    Vec v(dim);
    for (auto& x : v) x = StandardNormal(rng);
    for (const auto& b : basis) {
      double proj = 0.0;
      for (std::size_t i = 0; i < dim; ++i) proj += v[i] * b[i];
      for (std::size_t i = 0; i < dim; ++i) v[i] -= proj * b[i];
    }
    double sq = 0.0;
    for (double x : v) sq += x * x;
    if (sq > 1e-8) basis.push_back(Normalized(std::move(v)));
  }
  return basis;
}

Vec Perturbed(std::mt19937_64& rng, const Vec& center, double noise) {
  const double scale = noise / std::sqrt(static_cast<double>(center.size()));
  Vec v = center;
  for (auto& x : v) x += scale * StandardNormal(rng);
  return Normalized(std::move(v));
}

class RowBuilder {
 public:
  explicit RowBuilder(std::size_t dim) : dim_(dim) {}
  void Add(const Vec& v) {
    for (double x : v) data_.push_back(static_cast<float>(x));
    ++rows_;
  }
  // Float rounding can move a norm by ~1e-7, well inside the unit tolerance.
  EmbeddingMatrix Build() { return EmbeddingMatrix(rows_, dim_, std::move(data_), true); }

 private:
  std::size_t dim_;
  std::size_t rows_ = 0;
  std::vector<float> data_;
};

}  // namespace

SyntheticDataset MakeSyntheticDataset(const SyntheticSpec& spec) {
  if (spec.num_classes == 0 || spec.dim == 0 || spec.train_per_class == 0 ||
      spec.val_per_class == 0 || spec.test_size == 0) {
    throw Error(ErrorCode::kInput, "synthetic benchmark sizes must be >= 1");
  }
  if (spec.text_misalignment < 0.0 || spec.text_misalignment > 1.0) {
    throw Error(ErrorCode::kInput, "text_misalignment must lie in [0, 1]");
  }
  const std::size_t n = spec.num_classes;
  const std::size_t d = spec.dim;
  std::mt19937_64 rng(spec.seed);

  std::vector<Vec> centers;
  for (std::size_t c = 0; c < n; ++c) centers.push_back(RandomUnitVector(rng, d));
  const auto rotation = RandomRotation(rng, d);
  std::vector<Vec> text_centers;
  for (const auto& mu : centers) {
    Vec rotated(d, 0.0);
    for (std::size_t i = 0; i < d; ++i) {
      for (std::size_t j = 0; j < d; ++j) rotated[i] += rotation[i][j] * mu[j];
    }
    Vec mixed(d);
    for (std::size_t i = 0; i < d; ++i) {
      mixed[i] = (1.0 - spec.text_misalignment) * mu[i] + spec.text_misalignment * rotated[i];
    }
    text_centers.push_back(Normalized(std::move(mixed)));
  }

  RowBuilder prototypes(d);
  for (const auto& mu : centers) prototypes.Add(Perturbed(rng, mu, spec.prototype_noise));

  // Interleave classes so split files are not already class-major.
  RowBuilder train_images(d);
  RowBuilder train_texts(d);
  std::vector<std::size_t> train_labels;
  for (std::size_t s = 0; s < spec.train_per_class; ++s) {
    for (std::size_t c = 0; c < n; ++c) {
      train_images.Add(Perturbed(rng, centers[c], spec.image_noise));
      train_texts.Add(Perturbed(rng, text_centers[c], spec.text_noise));
      train_labels.push_back(c);
    }
  }
  RowBuilder val(d);
  std::vector<std::size_t> val_labels;
  for (std::size_t s = 0; s < spec.val_per_class; ++s) {
    for (std::size_t c = 0; c < n; ++c) {
      val.Add(Perturbed(rng, centers[c], spec.image_noise));
      val_labels.push_back(c);
    }
  }
  RowBuilder test(d);
  std::vector<std::size_t> test_labels;
  for (std::size_t m = 0; m < spec.test_size; ++m) {
    const std::size_t c = m % n;
    test.Add(Perturbed(rng, centers[c], spec.image_noise));
    test_labels.push_back(c);
  }

  CacheManifest manifest;
  manifest.dataset_name = "synthetic-" + std::to_string(spec.seed);
  manifest.num_classes = n;
  manifest.shots = spec.train_per_class;
  for (std::size_t c = 0; c < n; ++c) manifest.class_names.push_back("class_" + std::to_string(c));
  manifest.backbone_tag = "synthetic";
  manifest.dim = d;
  manifest.modality = Modality::kImage;

  return SyntheticDataset{std::move(manifest), train_images.Build(), train_texts.Build(),
                          std::move(train_labels), val.Build(), std::move(val_labels),
                          test.Build(), std::move(test_labels), prototypes.Build()};
}

void WriteDatasetDir(const SyntheticDataset& dataset, const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw Error(ErrorCode::kIo, "cannot create " + dir.string());
  SaveManifest(dataset.manifest, dir / layout::kManifest);
  SaveEmbeddings(dataset.train_images, dir / layout::kTrainImages);
  SaveEmbeddings(dataset.train_texts, dir / layout::kTrainTexts);
  SaveLabels(dataset.train_labels, dir / layout::kTrainLabels);
  SaveEmbeddings(dataset.val_features, dir / layout::kValFeatures);
  SaveLabels(dataset.val_labels, dir / layout::kValLabels);
  SaveEmbeddings(dataset.test_features, dir / layout::kTestFeatures);
  SaveLabels(dataset.test_labels, dir / layout::kTestLabels);
  SaveEmbeddings(dataset.prototypes, dir / layout::kPrototypes);
}

}  // namespace idea
