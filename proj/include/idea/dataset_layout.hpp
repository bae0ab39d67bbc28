#pragma once

// File names inside a dataset directory. One directory per dataset; the
// experiment runner resolves any path the config leaves unset from these.
namespace idea::layout {

inline constexpr const char* kManifest = "manifest.json";
inline constexpr const char* kTrainImages = "train_images.emb";
inline constexpr const char* kTrainTexts = "train_texts.emb";
inline constexpr const char* kTrainLabels = "train_labels.txt";
inline constexpr const char* kValFeatures = "val_features.emb";
inline constexpr const char* kValLabels = "val_labels.txt";
inline constexpr const char* kTestFeatures = "test_features.emb";
inline constexpr const char* kTestLabels = "test_labels.txt";
inline constexpr const char* kPrototypes = "prototypes.emb";

}  // namespace idea::layout
