#include "idea/embedstore.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <limits>
#include <set>

#include <json.hpp>

#include "idea/error.hpp"
#include "idea/fileio.hpp"

namespace idea {

using nlohmann::json;

EmbeddingMatrix::EmbeddingMatrix(std::size_t rows, std::size_t dim, std::vector<float> data,
                                 bool normalized)
    : rows_(rows), dim_(dim), data_(std::move(data)), normalized_(normalized) {
  if (rows_ == 0 || dim_ == 0) {
    throw Error(ErrorCode::kInvariant, "embedding matrix must have rows >= 1 and dim >= 1");
  }
  if (data_.size() != rows_ * dim_) {
    throw Error(ErrorCode::kInvariant, "payload length " + std::to_string(data_.size()) +
                                           " != rows*dim " + std::to_string(rows_ * dim_));
  }
  for (std::size_t i = 0; i < data_.size(); ++i) {
    if (!std::isfinite(data_[i])) {
      throw Error(ErrorCode::kInvariant, "non-finite entry at row " + std::to_string(i / dim_) +
                                             ", column " + std::to_string(i % dim_));
    }
  }
  if (normalized_) {
    for (std::size_t r = 0; r < rows_; ++r) {
      double sq = 0.0;
      for (float v : row(r)) sq += static_cast<double>(v) * v;
      if (std::abs(std::sqrt(sq) - 1.0) > kUnitNormTolerance) {
        throw Error(ErrorCode::kInvariant,
                    "row " + std::to_string(r) + " is flagged normalized but has norm " +
                        std::to_string(std::sqrt(sq)));
      }
    }
  }
}

EmbeddingMatrix EmbeddingMatrix::SelectRows(std::span<const std::size_t> indices) const {
  std::vector<float> out;
  out.reserve(indices.size() * dim_);
  for (std::size_t idx : indices) {
    if (idx >= rows_) {
      throw Error(ErrorCode::kShape, "row index " + std::to_string(idx) + " out of range for " +
                                         std::to_string(rows_) + " rows");
    }
    auto r = row(idx);
    out.insert(out.end(), r.begin(), r.end());
  }
  return EmbeddingMatrix(indices.size(), dim_, std::move(out), normalized_);
}

namespace {

void PutU32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void PutU64(std::vector<std::uint8_t>& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

std::uint32_t GetU32(std::span<const std::uint8_t> b, std::size_t at) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[at + i]) << (8 * i);
  return v;
}

std::uint64_t GetU64(std::span<const std::uint8_t> b, std::size_t at) {
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[at + i]) << (8 * i);
  return v;
}

}  // namespace

std::vector<std::uint8_t> EncodeEmbeddings(const EmbeddingMatrix& matrix) {
  std::vector<std::uint8_t> out;
  out.reserve(kEmbHeaderSize + matrix.data().size() * 4);
  out.insert(out.end(), std::begin(kEmbMagic), std::end(kEmbMagic));
  PutU32(out, kEmbVersion);
  PutU64(out, matrix.rows());
  PutU64(out, matrix.dim());
  out.push_back(matrix.normalized() ? 1 : 0);
  out.insert(out.end(), 7, 0);
  for (float v : matrix.data()) PutU32(out, std::bit_cast<std::uint32_t>(v));
  return out;
}

EmbeddingMatrix DecodeEmbeddings(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 4 || std::memcmp(bytes.data(), kEmbMagic, 4) != 0) {
    throw Error(ErrorCode::kFormat, "bad magic, expected \"EMB1\"", 0);
  }
  if (bytes.size() < kEmbHeaderSize) {
    throw Error(ErrorCode::kFormat, "truncated header", bytes.size());
  }
  if (std::uint32_t version = GetU32(bytes, 4); version != kEmbVersion) {
    throw Error(ErrorCode::kFormat, "unsupported format version " + std::to_string(version), 4);
  }
  const std::uint64_t rows = GetU64(bytes, 8);
  const std::uint64_t dim = GetU64(bytes, 16);
  if (rows == 0) throw Error(ErrorCode::kFormat, "rows must be >= 1", 8);
  if (dim == 0) throw Error(ErrorCode::kFormat, "dim must be >= 1", 16);
  const std::uint8_t flag = bytes[24];
  if (flag > 1) throw Error(ErrorCode::kFormat, "normalized flag must be 0 or 1", 24);
  for (std::size_t i = 25; i < kEmbHeaderSize; ++i) {
    if (bytes[i] != 0) throw Error(ErrorCode::kFormat, "reserved bytes must be zero", i);
  }

  const std::uint64_t max_count = std::numeric_limits<std::uint64_t>::max() / 4 / dim;
  if (rows > max_count) throw Error(ErrorCode::kFormat, "rows*dim overflows", 8);
  const std::uint64_t count = rows * dim;
  const std::uint64_t payload = bytes.size() - kEmbHeaderSize;
  if (payload < count * 4) {
    throw Error(ErrorCode::kFormat,
                "truncated payload: need " + std::to_string(count * 4) + " bytes, have " +
                    std::to_string(payload),
                bytes.size());
  }
  if (payload > count * 4) {
    throw Error(ErrorCode::kFormat, "trailing bytes after payload", kEmbHeaderSize + count * 4);
  }

  std::vector<float> data(count);
  for (std::uint64_t i = 0; i < count; ++i) {
    const std::size_t at = kEmbHeaderSize + i * 4;
    data[i] = std::bit_cast<float>(GetU32(bytes, at));
    if (!std::isfinite(data[i])) throw Error(ErrorCode::kFormat, "non-finite value", at);
  }
  try {
    return EmbeddingMatrix(rows, dim, std::move(data), flag == 1);
  } catch (const Error& e) {
    throw Error(ErrorCode::kFormat, e.detail(), kEmbHeaderSize);
  }
}

EmbeddingMatrix LoadEmbeddings(const std::filesystem::path& path) {
  const auto bytes = ReadFileBytes(path);
  try {
    return DecodeEmbeddings(bytes);
  } catch (const Error& e) {
    throw Error(e.code(), path.string() + ": " + e.detail(), e.byte_offset());
  }
}

void SaveEmbeddings(const EmbeddingMatrix& matrix, const std::filesystem::path& path) {
  WriteFileAtomic(path, EncodeEmbeddings(matrix));
}

EmbeddingMatrix L2NormalizeRows(const EmbeddingMatrix& matrix) {
  std::vector<float> out(matrix.data().begin(), matrix.data().end());
  const std::size_t dim = matrix.dim();
  for (std::size_t r = 0; r < matrix.rows(); ++r) {
    double sq = 0.0;
    for (float v : matrix.row(r)) sq += static_cast<double>(v) * v;
    const double norm = std::sqrt(sq);
    if (!(norm > kDegenerateNorm)) {
      throw Error(ErrorCode::kDegenerateRow, "row " + std::to_string(r) + " has zero norm");
    }
    for (std::size_t c = 0; c < dim; ++c) {
      out[r * dim + c] = static_cast<float>(static_cast<double>(out[r * dim + c]) / norm);
    }
  }
  return EmbeddingMatrix(matrix.rows(), dim, std::move(out), true);
}

const char* ModalityName(Modality modality) {
  switch (modality) {
    case Modality::kImage: return "image";
    case Modality::kText: return "text";
    case Modality::kClassPrototype: return "class-prototype";
    case Modality::kTest: return "test";
  }
  return "image";
}

Modality ParseModality(const std::string& name) {
  if (name == "image") return Modality::kImage;
  if (name == "text") return Modality::kText;
  if (name == "class-prototype") return Modality::kClassPrototype;
  if (name == "test") return Modality::kTest;
  throw Error(ErrorCode::kFormat, "unknown modality \"" + name + "\"");
}

void CacheManifest::Validate() const {
  if (num_classes == 0) throw Error(ErrorCode::kInvariant, "manifest declares zero classes");
  if (class_names.size() != num_classes) {
    throw Error(ErrorCode::kInvariant, "manifest lists " + std::to_string(class_names.size()) +
                                           " class names for " + std::to_string(num_classes) +
                                           " classes");
  }
  std::set<std::string> seen;
  for (const auto& name : class_names) {
    if (!seen.insert(name).second) {
      throw Error(ErrorCode::kInvariant, "duplicate class name \"" + name + "\"");
    }
  }
  if (row_order != "class-major") {
    throw Error(ErrorCode::kInvariant, "row_order must be \"class-major\", got \"" + row_order + "\"");
  }
}

std::string ManifestToJson(const CacheManifest& m) {
  json j = {
      {"dataset_name", m.dataset_name}, {"num_classes", m.num_classes},
      {"shots", m.shots},               {"class_names", m.class_names},
      {"backbone_tag", m.backbone_tag}, {"dim", m.dim},
      {"row_order", m.row_order},       {"modality", ModalityName(m.modality)},
  };
  return j.dump(2) + "\n";
}

CacheManifest ManifestFromJson(const std::string& text) {
  CacheManifest m;
  try {
    const json j = json::parse(text);
    m.dataset_name = j.at("dataset_name").get<std::string>();
    m.num_classes = j.at("num_classes").get<std::size_t>();
    m.shots = j.at("shots").get<std::size_t>();
    m.class_names = j.at("class_names").get<std::vector<std::string>>();
    m.backbone_tag = j.at("backbone_tag").get<std::string>();
    m.dim = j.at("dim").get<std::size_t>();
    m.row_order = j.at("row_order").get<std::string>();
    m.modality = ParseModality(j.at("modality").get<std::string>());
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kFormat, std::string("manifest: ") + e.what());
  }
  m.Validate();
  return m;
}

CacheManifest LoadManifest(const std::filesystem::path& path) {
  try {
    return ManifestFromJson(ReadFileText(path));
  } catch (const Error& e) {
    throw Error(e.code(), path.string() + ": " + e.detail());
  }
}

void SaveManifest(const CacheManifest& manifest, const std::filesystem::path& path) {
  manifest.Validate();
  WriteFileAtomic(path, ManifestToJson(manifest));
}

FewShotCache::FewShotCache(CacheManifest manifest, EmbeddingMatrix images, EmbeddingMatrix texts,
                           std::vector<std::size_t> labels)
    : manifest_(std::move(manifest)),
      images_(std::move(images)),
      texts_(std::move(texts)),
      labels_(std::move(labels)) {}

FewShotCache AssembleCache(const EmbeddingMatrix& images, const EmbeddingMatrix& texts,
                           const CacheManifest& manifest, std::span<const std::size_t> labels) {
  manifest.Validate();
  const std::size_t n = manifest.num_classes;
  const std::size_t k = manifest.shots;
  if (k == 0) throw Error(ErrorCode::kCardinality, "shots must be >= 1");
  if (images.dim() != texts.dim()) {
    throw Error(ErrorCode::kShape, "image dim " + std::to_string(images.dim()) +
                                       " != text dim " + std::to_string(texts.dim()));
  }
  if (manifest.dim != 0 && manifest.dim != images.dim()) {
    throw Error(ErrorCode::kShape, "manifest dim " + std::to_string(manifest.dim) +
                                       " != embedding dim " + std::to_string(images.dim()));
  }
  if (images.rows() != texts.rows() || images.rows() != labels.size()) {
    throw Error(ErrorCode::kShape, "image rows, text rows and labels must have equal length");
  }

  std::vector<std::size_t> per_class(n, 0);
  for (std::size_t label : labels) {
    if (label >= n) {
      throw Error(ErrorCode::kLabel,
                  "label " + std::to_string(label) + " outside [0, " + std::to_string(n) + ")");
    }
    ++per_class[label];
  }
  for (std::size_t c = 0; c < n; ++c) {
    if (per_class[c] != k) {
      throw Error(ErrorCode::kCardinality, "class " + std::to_string(c) + " (" +
                                               manifest.class_names[c] + ") has " +
                                               std::to_string(per_class[c]) + " samples, expected " +
                                               std::to_string(k));
    }
  }

  std::vector<std::size_t> order(labels.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return labels[a] < labels[b]; });

  std::vector<std::size_t> sorted_labels(order.size());
  for (std::size_t i = 0; i < order.size(); ++i) sorted_labels[i] = labels[order[i]];

  auto ordered_images = images.SelectRows(order);
  auto ordered_texts = texts.SelectRows(order);
  if (!ordered_images.normalized()) ordered_images = L2NormalizeRows(ordered_images);
  if (!ordered_texts.normalized()) ordered_texts = L2NormalizeRows(ordered_texts);

  CacheManifest out = manifest;
  out.dim = images.dim();
  return FewShotCache(std::move(out), std::move(ordered_images), std::move(ordered_texts),
                      std::move(sorted_labels));
}

}  // namespace idea
