#pragma once

// On-disk embedding cache (EMB1) and the few-shot cache assembled from it.
//
// EMB1 layout, little-endian:
//   offset  0  magic "EMB1"
//   offset  4  u32 format version (= 1)
//   offset  8  u64 rows
//   offset 16  u64 dim
//   offset 24  u8  normalized flag (0/1)
//   offset 25  7 reserved bytes (= 0)
//   offset 32  rows * dim float32, row-major

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace idea {

inline constexpr char kEmbMagic[4] = {'E', 'M', 'B', '1'};
inline constexpr std::uint32_t kEmbVersion = 1;
inline constexpr std::size_t kEmbHeaderSize = 32;
inline constexpr double kUnitNormTolerance = 1e-4;
inline constexpr double kDegenerateNorm = 1e-12;

/// Dense row-major float32 matrix of feature rows.
///
/// Construction validates every invariant (non-empty shape, matching payload
/// length, finite entries, unit rows when flagged normalized), so an instance
/// is always valid and can be shared freely between readers.
class EmbeddingMatrix {
 public:
  EmbeddingMatrix(std::size_t rows, std::size_t dim, std::vector<float> data, bool normalized);

  std::size_t rows() const noexcept { return rows_; }
  std::size_t dim() const noexcept { return dim_; }
  bool normalized() const noexcept { return normalized_; }

  std::span<const float> row(std::size_t r) const { return {data_.data() + r * dim_, dim_}; }
  std::span<const float> data() const noexcept { return data_; }

  /// New matrix made of the given rows, in the given order.
  EmbeddingMatrix SelectRows(std::span<const std::size_t> indices) const;

  friend bool operator==(const EmbeddingMatrix&, const EmbeddingMatrix&) = default;

 private:
  std::size_t rows_;
  std::size_t dim_;
  std::vector<float> data_;
  bool normalized_;
};

EmbeddingMatrix LoadEmbeddings(const std::filesystem::path& path);

/// Decodes an in-memory EMB1 image. Errors carry the failing byte offset.
EmbeddingMatrix DecodeEmbeddings(std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> EncodeEmbeddings(const EmbeddingMatrix& matrix);

/// Writes atomically (temporary file, then rename).
void SaveEmbeddings(const EmbeddingMatrix& matrix, const std::filesystem::path& path);

/// Rescales every row to unit L2 norm. Throws kDegenerateRow naming the first
/// row whose norm is at or below 1e-12.
EmbeddingMatrix L2NormalizeRows(const EmbeddingMatrix& matrix);

enum class Modality { kImage, kText, kClassPrototype, kTest };

const char* ModalityName(Modality modality);
Modality ParseModality(const std::string& name);

struct CacheManifest {
  std::string dataset_name;
  std::size_t num_classes = 0;
  std::size_t shots = 0;
  std::vector<std::string> class_names;
  std::string backbone_tag;
  std::size_t dim = 0;
  std::string row_order = "class-major";
  Modality modality = Modality::kImage;

  /// Throws kInvariant when class names are not N distinct entries or the
  /// row order is anything but "class-major".
  void Validate() const;

  friend bool operator==(const CacheManifest&, const CacheManifest&) = default;
};

CacheManifest LoadManifest(const std::filesystem::path& path);
void SaveManifest(const CacheManifest& manifest, const std::filesystem::path& path);
std::string ManifestToJson(const CacheManifest& manifest);
CacheManifest ManifestFromJson(const std::string& text);

/// K-shot N-class cache of paired image and caption features.
/// Row i*K + j holds shot j of class i.
class FewShotCache {
 public:
  const CacheManifest& manifest() const noexcept { return manifest_; }
  const EmbeddingMatrix& images() const noexcept { return images_; }
  const EmbeddingMatrix& texts() const noexcept { return texts_; }
  const std::vector<std::size_t>& labels() const noexcept { return labels_; }

  std::size_t num_classes() const noexcept { return manifest_.num_classes; }
  std::size_t shots() const noexcept { return manifest_.shots; }
  std::size_t rows() const noexcept { return images_.rows(); }
  std::size_t dim() const noexcept { return images_.dim(); }

 private:
  friend FewShotCache AssembleCache(const EmbeddingMatrix&, const EmbeddingMatrix&,
                                    const CacheManifest&, std::span<const std::size_t>);

  FewShotCache(CacheManifest manifest, EmbeddingMatrix images, EmbeddingMatrix texts,
               std::vector<std::size_t> labels);

  CacheManifest manifest_;
  EmbeddingMatrix images_;
  EmbeddingMatrix texts_;
  std::vector<std::size_t> labels_;
};

/// Builds a cache from unordered rows. Rows are stably sorted into
/// class-major order; matrices not already flagged normalized are
/// normalized here. Every class must have exactly manifest.shots rows.
FewShotCache AssembleCache(const EmbeddingMatrix& images, const EmbeddingMatrix& texts,
                           const CacheManifest& manifest, std::span<const std::size_t> labels);

}  // namespace idea
