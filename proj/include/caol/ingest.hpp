#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "caol/signal.hpp"

namespace caol::ingest {

/// P2 (ASCII) or P5 (binary, 16-bit big-endian when maxval > 255). Returns a
/// Grid signal with raw pixel values in [0, maxval].
Signal load_pgm(const std::filesystem::path& path);
Signal decode_pgm(const std::string& bytes);

/// Writes binary P5. Values are rounded to integers and must lie in [0, maxval].
void write_pgm(const std::filesystem::path& path, const Signal& image, unsigned maxval = 255);
std::string encode_pgm(const Signal& image, unsigned maxval = 255);

// Raw tensor layout (little-endian):
//   "CAOLTNSR" | u32 version = 1 | u32 geometry (1 = Line, 2 = Grid) |
//   u64 N, or u64 H then u64 W | N float64 values
inline constexpr char kTensorMagic[8] = {'C', 'A', 'O', 'L', 'T', 'N', 'S', 'R'};
inline constexpr std::uint32_t kTensorVersion = 1;

Signal load_raw_tensor(const std::filesystem::path& path);
Signal decode_raw_tensor(const std::string& bytes);
void write_raw_tensor(const std::filesystem::path& path, const Signal& x);
std::string encode_raw_tensor(const Signal& x);

/// Matrices travel as Grid(rows, cols) tensors in row-major order.
Matrix load_matrix(const std::filesystem::path& path);
void write_matrix(const std::filesystem::path& path, const Matrix& m);
Matrix decode_matrix(const std::string& bytes);
std::string encode_matrix(const Matrix& m);

struct PreprocessStep {
  enum class Kind { MeanSubtract, Standardize, Highpass };
  Kind kind = Kind::MeanSubtract;
  std::size_t radius = 0;  // Highpass only

  /// "mean_subtract", "standardize" or "highpass" (radius from the argument).
  static PreprocessStep parse(const std::string& name, std::size_t radius = 1);
  std::string name() const;
};

/// Applies steps in order. Standardize on a constant input is a no-op and
/// appends a note to `warnings` when provided.
Signal preprocess(const Signal& x, const std::vector<PreprocessStep>& steps,
                  std::vector<std::string>* warnings = nullptr);

/// Row-major raster of patch_h x patch_w Grid patches; partial border patches
/// are dropped. Throws PatchTooLarge if a patch exceeds the image.
std::vector<Signal> patchify(const Signal& image, std::size_t patch_h, std::size_t patch_w,
                             std::size_t stride);

std::uint32_t crc32_of_file(const std::filesystem::path& path);
std::uint32_t crc32_of(const std::string& bytes);

struct ManifestEntry {
  std::string path;  // relative to the manifest directory unless absolute
  Geometry geometry;
  std::string checksum;  // "crc32:xxxxxxxx"
};

struct PatchSpec {
  std::size_t height = 0;
  std::size_t width = 0;
  std::size_t stride = 1;
  std::size_t max_patches = 0;  // 0 keeps all
};

struct DatasetManifest {
  std::vector<ManifestEntry> entries;
  std::vector<PreprocessStep> preprocessing;
  std::string source;
  std::optional<PatchSpec> patches;  // whole samples when absent
  std::filesystem::path base_dir;
};

DatasetManifest load_manifest(const std::filesystem::path& path);
void write_manifest(const std::filesystem::path& path, const DatasetManifest& manifest);

/// Decodes every entry (by extension: .pgm or raw tensor), verifies checksums
/// (ChecksumMismatch), checks declared geometry, then preprocesses and
/// optionally patchifies.
std::vector<Signal> load_dataset(const DatasetManifest& manifest,
                                 std::vector<std::string>* warnings = nullptr);

}  // namespace caol::ingest
