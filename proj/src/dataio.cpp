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

#include "cptk/dataio.hpp"

#include <fcntl.h>
#include <unistd.h>
#include <zlib.h>

#include <bit>
#include <cerrno>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <iterator>
#include <numeric>

#include "cptk/error.hpp"
#include "cptk/rng.hpp"
#include "cptk/tempscale.hpp"
#include "json_util.hpp"

namespace cptk {

namespace fs = std::filesystem;

namespace {

constexpr char kMagic[4] = {'C', 'P', 'T', 'K'};

void PutU32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void PutU64(std::vector<std::uint8_t>& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

std::uint32_t GetU32(const std::uint8_t* p) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(p[i]) << (8 * i);
  return v;
}

std::uint64_t GetU64(const std::uint8_t* p) {
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(p[i]) << (8 * i);
  return v;
}

std::vector<std::uint8_t> Header(std::uint64_t rows, std::uint64_t cols,
                                 std::size_t payload) {
  std::vector<std::uint8_t> out;
  out.reserve(kMatrixHeaderBytes + payload);
  out.insert(out.end(), kMagic, kMagic + 4);
  PutU32(out, kMatrixFileVersion);
  PutU64(out, rows);
  PutU64(out, cols);
  return out;
}

struct ParsedHeader {
  std::uint64_t rows;
  std::uint64_t cols;
};

ParsedHeader ParseHeader(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < kMatrixHeaderBytes) {
    if (bytes.size() >= 4 && std::memcmp(bytes.data(), kMagic, 4) != 0) {
      throw DataError(DataErrorCode::kBadMagic, "bad matrix file magic");
    }
    throw DataError(DataErrorCode::kTruncated, "matrix file header truncated");
  }
  if (std::memcmp(bytes.data(), kMagic, 4) != 0) {
    throw DataError(DataErrorCode::kBadMagic, "bad matrix file magic");
  }
  const std::uint32_t version = GetU32(bytes.data() + 4);
  if (version != kMatrixFileVersion) {
    throw DataError(DataErrorCode::kBadVersion,
                    "unsupported matrix file version " + std::to_string(version));
  }
  ParsedHeader h{GetU64(bytes.data() + 8), GetU64(bytes.data() + 16)};
  if (h.cols != 0 && h.rows > (UINT64_MAX / 4) / h.cols) {
    throw DataError(DataErrorCode::kBadDimensions, "matrix dimensions overflow");
  }
  const std::uint64_t expected = kMatrixHeaderBytes + h.rows * h.cols * 4;
  if (bytes.size() < expected) {
    throw DataError(DataErrorCode::kTruncated,
                    "matrix payload truncated: expected " +
                        std::to_string(expected) + " bytes, got " +
                        std::to_string(bytes.size()));
  }
  if (bytes.size() > expected) {
    throw DataError(DataErrorCode::kBadDimensions,
                    "matrix file has trailing bytes");
  }
  return h;
}

std::string ScoresKindName(ScoresKind kind) {
  return kind == ScoresKind::kLogits ? "logits" : "probabilities";
}

json_util::Json FileRefJson(const FileRef& f) {
  return {{"path", f.path}, {"checksum", f.checksum}};
}

FileRef FileRefFrom(const json_util::Json& j) {
  return {j.at("path").get<std::string>(), j.at("checksum").get<std::string>()};
}

// Exclusive lock file, removed on scope exit.
class DirectoryLock {
 public:
  explicit DirectoryLock(const fs::path& dir) : path_(dir / kLockName) {
    fd_ = ::open(path_.c_str(), O_CREAT | O_EXCL | O_WRONLY, 0644);
    if (fd_ < 0) {
      if (errno == EEXIST) {
        throw DataError(DataErrorCode::kLocked,
                        "dataset directory is locked: " + path_.string());
      }
      throw IoError("cannot create lock " + path_.string() + ": " +
                    std::strerror(errno));
    }
  }
  ~DirectoryLock() {
    ::close(fd_);
    std::error_code ec;
    fs::remove(path_, ec);
  }
  DirectoryLock(const DirectoryLock&) = delete;
  DirectoryLock& operator=(const DirectoryLock&) = delete;

 private:
  fs::path path_;
  int fd_ = -1;
};

std::vector<std::uint8_t> ReadChecked(const fs::path& dir, const FileRef& ref) {
  if (ref.path.empty() || fs::path(ref.path).is_absolute() ||
      ref.path.find("..") != std::string::npos) {
    throw DataError(DataErrorCode::kBadManifest,
                    "manifest file path must be relative: '" + ref.path + "'");
  }
  std::vector<std::uint8_t> bytes = ReadBytes(dir / ref.path);
  const std::string actual = Crc32Checksum(bytes);
  if (actual != ref.checksum) {
    throw DataError(DataErrorCode::kChecksumMismatch,
                    "checksum mismatch for " + ref.path + ": manifest says " +
                        ref.checksum + ", file has " + actual);
  }
  return bytes;
}

void ExpectShape(const Matrix<float>& m, std::uint64_t rows, std::uint64_t cols,
                 const std::string& what) {
  if (m.rows() != rows || m.cols() != cols) {
    throw DataError(DataErrorCode::kBadDimensions,
                    what + " is " + std::to_string(m.rows()) + "x" +
                        std::to_string(m.cols()) + ", manifest says " +
                        std::to_string(rows) + "x" + std::to_string(cols));
  }
}

}  // namespace

std::string Crc32Checksum(std::span<const std::uint8_t> bytes) {
  uLong crc = crc32(0L, Z_NULL, 0);
  std::size_t off = 0;
  while (off < bytes.size()) {
    const auto chunk = static_cast<uInt>(
        std::min<std::size_t>(bytes.size() - off, 1u << 30));
    crc = crc32(crc, bytes.data() + off, chunk);
    off += chunk;
  }
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%08lx", static_cast<unsigned long>(crc));
  return std::string("crc32:") + buf;
}

std::vector<std::uint8_t> ReadBytes(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void WriteBytes(const fs::path& path, std::span<const std::uint8_t> bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed for " + path.string());
}

std::vector<std::uint8_t> EncodeMatrix(const Matrix<float>& m) {
  auto out = Header(m.rows(), m.cols(), m.data().size() * 4);
  for (float v : m.data()) PutU32(out, std::bit_cast<std::uint32_t>(v));
  return out;
}

std::vector<std::uint8_t> EncodeLabels(std::span<const std::uint32_t> labels) {
  auto out = Header(labels.size(), 1, labels.size() * 4);
  for (std::uint32_t v : labels) PutU32(out, v);
  return out;
}

Matrix<float> DecodeMatrix(std::span<const std::uint8_t> bytes) {
  const ParsedHeader h = ParseHeader(bytes);
  std::vector<float> data(h.rows * h.cols);
  const std::uint8_t* p = bytes.data() + kMatrixHeaderBytes;
  for (std::size_t i = 0; i < data.size(); ++i, p += 4) {
    data[i] = std::bit_cast<float>(GetU32(p));
  }
  return Matrix<float>(h.rows, h.cols, std::move(data));
}

std::vector<std::uint32_t> DecodeLabels(std::span<const std::uint8_t> bytes) {
  const ParsedHeader h = ParseHeader(bytes);
  if (h.cols != 1) {
    throw DataError(DataErrorCode::kBadDimensions,
                    "label file must have one column, has " +
                        std::to_string(h.cols));
  }
  std::vector<std::uint32_t> labels(h.rows);
  const std::uint8_t* p = bytes.data() + kMatrixHeaderBytes;
  for (std::size_t i = 0; i < labels.size(); ++i, p += 4) labels[i] = GetU32(p);
  return labels;
}

std::string ManifestToJson(const DatasetManifest& m) {
  json_util::Json j;
  j["format"] = "cptk-dataset";
  j["version"] = m.version;
  j["name"] = m.name;
  j["n"] = m.n;
  j["k"] = m.k;
  j["d"] = m.d;
  j["scores_kind"] = ScoresKindName(m.scores_kind);
  if (m.temperature) {
    j["temperature"] = *m.temperature;
  } else {
    j["temperature"] = nullptr;
  }
  j["class_names"] = m.class_names;
  json_util::Json files;
  files["features"] = FileRefJson(m.features);
  files["scores"] = FileRefJson(m.scores);
  files["labels"] = FileRefJson(m.labels);
  if (m.conditionals) files["conditionals"] = FileRefJson(*m.conditionals);
  j["files"] = files;
  return j.dump(2) + "\n";
}

DatasetManifest ManifestFromJson(const std::string& text) {
  DatasetManifest m;
  try {
    const auto j = json_util::Json::parse(text);
    if (j.at("format") != "cptk-dataset") {
      throw DataError(DataErrorCode::kBadManifest, "not a cptk-dataset manifest");
    }
    m.version = j.at("version").get<std::uint32_t>();
    if (m.version != kManifestVersion) {
      throw DataError(DataErrorCode::kBadVersion,
                      "unsupported manifest version " + std::to_string(m.version));
    }
    m.name = j.at("name").get<std::string>();
    m.n = j.at("n").get<std::uint64_t>();
    m.k = j.at("k").get<std::uint32_t>();
    m.d = j.at("d").get<std::uint32_t>();
    const std::string kind = j.at("scores_kind").get<std::string>();
    if (kind == "logits") {
      m.scores_kind = ScoresKind::kLogits;
    } else if (kind == "probabilities") {
      m.scores_kind = ScoresKind::kProbabilities;
    } else {
      throw DataError(DataErrorCode::kBadManifest,
                      "scores_kind must be logits or probabilities");
    }
    if (!j.at("temperature").is_null()) {
      m.temperature = j["temperature"].get<double>();
    }
    if (j.contains("class_names")) {
      m.class_names = j["class_names"].get<std::vector<std::string>>();
    }
    const auto& files = j.at("files");
    m.features = FileRefFrom(files.at("features"));
    m.scores = FileRefFrom(files.at("scores"));
    m.labels = FileRefFrom(files.at("labels"));
    if (files.contains("conditionals")) {
      m.conditionals = FileRefFrom(files["conditionals"]);
    }
  } catch (const nlohmann::json::exception& e) {
    throw DataError(DataErrorCode::kBadManifest,
                    std::string("malformed manifest: ") + e.what());
  }
  if (m.k < 2) {
    throw DataError(DataErrorCode::kBadManifest, "manifest k must be >= 2");
  }
  if (!m.class_names.empty() && m.class_names.size() != m.k) {
    throw DataError(DataErrorCode::kBadManifest,
                    "class_names has " + std::to_string(m.class_names.size()) +
                        " entries for k=" + std::to_string(m.k));
  }
  if (m.temperature && !(*m.temperature > 0.0 && std::isfinite(*m.temperature))) {
    throw DataError(DataErrorCode::kBadManifest,
                    "manifest temperature must be positive");
  }
  return m;
}

void Dataset::Validate() const {
  const auto& m = manifest;
  if (m.k < 2) throw ValidationError("dataset needs k >= 2");
  ExpectShape(features, m.n, m.d, "features");
  ExpectShape(scores, m.n, m.k, "scores");
  if (labels.size() != m.n) {
    throw DataError(DataErrorCode::kBadDimensions,
                    "labels has " + std::to_string(labels.size()) +
                        " rows, manifest says " + std::to_string(m.n));
  }
  if (conditionals) ExpectShape(*conditionals, m.n, m.k, "conditionals");
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] >= m.k) {
      throw Error(ErrorKind::kValidation,
                  "label " + std::to_string(labels[i]) + " at row " +
                      std::to_string(i) + " out of range for k=" +
                      std::to_string(m.k),
                  DataErrorCode::kLabelOutOfRange);
    }
  }
  if (!m.class_names.empty() && m.class_names.size() != m.k) {
    throw ValidationError("class_names must have k entries");
  }
}

std::vector<fs::path> WriteDataset(const Dataset& dataset, const fs::path& dir) {
  dataset.Validate();
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
  DirectoryLock lock(dir);

  DatasetManifest m = dataset.manifest;
  std::vector<fs::path> written;
  auto put = [&](const std::string& name, const std::vector<std::uint8_t>& bytes) {
    WriteBytes(dir / name, bytes);
    written.push_back(dir / name);
    return FileRef{name, Crc32Checksum(bytes)};
  };
  m.features = put("features.cptk", EncodeMatrix(dataset.features));
  m.scores = put("scores.cptk", EncodeMatrix(dataset.scores));
  m.labels = put("labels.cptk", EncodeLabels(dataset.labels));
  if (dataset.conditionals) {
    m.conditionals = put("conditionals.cptk", EncodeMatrix(*dataset.conditionals));
  } else {
    m.conditionals.reset();
  }
  json_util::WriteText((dir / kManifestName).string(), ManifestToJson(m));
  written.push_back(dir / kManifestName);
  return written;
}

DatasetManifest LoadManifest(const fs::path& dir) {
  return ManifestFromJson(json_util::ReadText((dir / kManifestName).string()));
}

Dataset LoadDataset(const fs::path& dir) {
  Dataset ds;
  ds.manifest = LoadManifest(dir);
  const auto& m = ds.manifest;
  ds.features = DecodeMatrix(ReadChecked(dir, m.features));
  ds.scores = DecodeMatrix(ReadChecked(dir, m.scores));
  ds.labels = DecodeLabels(ReadChecked(dir, m.labels));
  if (m.conditionals) {
    ds.conditionals = DecodeMatrix(ReadChecked(dir, *m.conditionals));
  }
  ds.Validate();
  return ds;
}

Matrix<double> ScoresAsLogits(const Dataset& dataset) {
  const auto& s = dataset.scores;
  Matrix<double> out(s.rows(), s.cols());
  for (std::size_t i = 0; i < s.rows(); ++i) {
    for (std::size_t j = 0; j < s.cols(); ++j) {
      const double v = s(i, j);
      out(i, j) = dataset.manifest.scores_kind == ScoresKind::kLogits
                      ? v
                      : std::log(std::max(v, 1e-300));
    }
  }
  return out;
}

LabeledSplit ToLabeledSplit(const Dataset& dataset,
                            std::span<const std::size_t> rows,
                            std::optional<double> temperature) {
  const auto& m = dataset.manifest;
  LabeledSplit split;
  split.features = Matrix<double>(rows.size(), m.d);
  split.labels.reserve(rows.size());
  split.probs.reserve(rows.size());
  const bool logits = m.scores_kind == ScoresKind::kLogits;
  if (logits && !temperature) temperature = m.temperature;
  std::vector<double> row(m.k);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const std::size_t r = rows[i];
    if (r >= dataset.labels.size()) throw ShapeError("row index out of range");
    const auto f = dataset.features.row(r);
    std::copy(f.begin(), f.end(), split.features.row(i).begin());
    split.labels.push_back(dataset.labels[r]);
    const auto s = dataset.scores.row(r);
    if (logits || temperature) {
      for (std::size_t j = 0; j < m.k; ++j) {
        row[j] = logits ? s[j] : std::log(std::max<double>(s[j], 1e-300));
      }
      split.probs.push_back(ApplyTemperature(row, temperature.value_or(1.0)));
    } else {
      std::copy(s.begin(), s.end(), row.begin());
      try {
        split.probs.push_back(ProbabilityVector::FromValues(row));
      } catch (const Error& e) {
        throw Error(e.kind(), "row " + std::to_string(r) + ": " + e.what(),
                    e.code());
      }
    }
  }
  return split;
}

LabeledSplit ToLabeledSplit(const Dataset& dataset,
                            std::optional<double> temperature) {
  std::vector<std::size_t> rows(dataset.labels.size());
  std::iota(rows.begin(), rows.end(), std::size_t{0});
  return ToLabeledSplit(dataset, rows, temperature);
}

SplitIndices SplitDataset(std::size_t n, const std::array<double, 3>& fractions,
                          std::uint64_t seed) {
  double sum = 0.0;
  for (double f : fractions) {
    if (!(f >= 0.0) || !std::isfinite(f)) {
      throw ValidationError("split fractions must be nonnegative");
    }
    sum += f;
  }
  if (std::abs(sum - 1.0) > 1e-9) {
    throw ValidationError("split fractions must sum to 1, got " +
                          std::to_string(sum));
  }
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  Rng rng(DeriveSeed(seed, "split"));
  rng.Shuffle(std::span<std::size_t>(idx));
  const auto n_train = static_cast<std::size_t>(
      std::floor(static_cast<double>(n) * fractions[0] + 1e-9));
  const auto n_val = std::min(
      n - n_train, static_cast<std::size_t>(
                       std::floor(static_cast<double>(n) * fractions[1] + 1e-9)));
  SplitIndices out;
  out.train.assign(idx.begin(), idx.begin() + n_train);
  out.val.assign(idx.begin() + n_train, idx.begin() + n_train + n_val);
  out.test.assign(idx.begin() + n_train + n_val, idx.end());
  return out;
}

}  // namespace cptk
