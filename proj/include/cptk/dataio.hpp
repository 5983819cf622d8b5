// Copyright 2026 The cptk Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// On-disk datasets.
//
// A dataset directory holds manifest.json plus one matrix file per array.
// Matrix file layout (little-endian):
//
//   offset  size  field
//   0       4     magic "CPTK"
//   4       4     u32 format version (1)
//   8       8     u64 rows
//   16      8     u64 cols
//   24      ...   payload, row-major; f32 for features/scores/conditionals,
//                 u32 for labels (cols == 1)
//
// Each file is referenced from the manifest with a "crc32:xxxxxxxx" checksum
// of its full contents.

#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "cptk/core.hpp"
#include "cptk/matrix.hpp"

namespace cptk {

inline constexpr std::uint32_t kMatrixFileVersion = 1;
inline constexpr std::uint32_t kManifestVersion = 1;
inline constexpr std::size_t kMatrixHeaderBytes = 24;
inline constexpr const char* kManifestName = "manifest.json";
inline constexpr const char* kLockName = ".cptk.lock";

enum class ScoresKind { kLogits, kProbabilities };

struct FileRef {
  std::string path;      // relative to the dataset directory
  std::string checksum;  // "crc32:xxxxxxxx"

  friend bool operator==(const FileRef&, const FileRef&) = default;
};

struct DatasetManifest {
  std::uint32_t version = kManifestVersion;
  std::string name;
  std::uint64_t n = 0;
  std::uint32_t k = 0;
  std::uint32_t d = 0;
  ScoresKind scores_kind = ScoresKind::kLogits;
  std::optional<double> temperature;
  std::vector<std::string> class_names;  // empty or k entries
  FileRef features;
  FileRef scores;
  FileRef labels;
  std::optional<FileRef> conditionals;  // exact P(y|x), synthetic data only

  friend bool operator==(const DatasetManifest&,
                         const DatasetManifest&) = default;
};

struct Dataset {
  DatasetManifest manifest;
  Matrix<float> features;  // n x d
  Matrix<float> scores;    // n x k, logits or probabilities
  std::vector<std::uint32_t> labels;
  std::optional<Matrix<float>> conditionals;

  /// Checks dimensions, label range and class names against the manifest.
  void Validate() const;
};

std::string Crc32Checksum(std::span<const std::uint8_t> bytes);

std::vector<std::uint8_t> ReadBytes(const std::filesystem::path& path);
void WriteBytes(const std::filesystem::path& path,
                std::span<const std::uint8_t> bytes);

std::vector<std::uint8_t> EncodeMatrix(const Matrix<float>& m);
std::vector<std::uint8_t> EncodeLabels(std::span<const std::uint32_t> labels);
Matrix<float> DecodeMatrix(std::span<const std::uint8_t> bytes);
std::vector<std::uint32_t> DecodeLabels(std::span<const std::uint8_t> bytes);

std::string ManifestToJson(const DatasetManifest& manifest);
DatasetManifest ManifestFromJson(const std::string& text);

/// Writes matrix files and the manifest (with fresh checksums) under an
/// exclusive lock file. Returns the written paths, manifest last.
std::vector<std::filesystem::path> WriteDataset(
    const Dataset& dataset, const std::filesystem::path& dir);

Dataset LoadDataset(const std::filesystem::path& dir);
DatasetManifest LoadManifest(const std::filesystem::path& dir);

/// Scores as double. Probability datasets are returned as log p.
Matrix<double> ScoresAsLogits(const Dataset& dataset);

/// Builds a labelled split from the given rows. Logits go through softmax at
/// `temperature` (falling back to the manifest value, then 1). Stored
/// probabilities are used as-is unless a temperature is given.
LabeledSplit ToLabeledSplit(const Dataset& dataset,
                            std::span<const std::size_t> rows,
                            std::optional<double> temperature = std::nullopt);
LabeledSplit ToLabeledSplit(const Dataset& dataset,
                            std::optional<double> temperature = std::nullopt);

struct SplitIndices {
  std::vector<std::size_t> train;
  std::vector<std::size_t> val;
  std::vector<std::size_t> test;
};

/// Seeded shuffle then contiguous partition. The first two folds get
/// floor(n * fraction), the test fold gets the rest.
SplitIndices SplitDataset(std::size_t n, const std::array<double, 3>& fractions,
                          std::uint64_t seed);

}  // namespace cptk
