#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "fediot/nn.hpp"

namespace fediot::data {

using nn::Matrix;
using nn::Vector;

inline constexpr std::size_t kFeatureCount = 115;
inline constexpr std::size_t kTrainRows = 5000;
inline constexpr std::size_t kEvalRows = 3000;
inline constexpr std::size_t kAttackRowsPerType = 500;

/// The nine N-BaIoT devices, in the order used for client assignment.
extern const std::vector<std::string> kNbaiotDevices;

struct RawDeviceData {
  std::string device_id;
  Matrix benign;
  std::map<std::string, Matrix> attacks;  // attack type id (e.g. "mirai.syn") -> rows
  std::vector<std::string> source_hashes;  // "<file>:<fnv1a>" per ingested CSV
};

struct NormalizationStats {
  Vector min_vec;
  Vector max_vec;
};

struct DeviceDataset {
  std::string device_id;
  Matrix train;
  Matrix eval;
  Matrix test_features;
  std::vector<std::uint8_t> test_labels;  // 0 benign, 1 attack
};

/// Row indices chosen for one device; kept so disjointness is checkable.
struct SplitSelection {
  std::vector<std::size_t> train;
  std::vector<std::size_t> eval;
  std::vector<std::size_t> test_benign;
  std::map<std::string, std::vector<std::size_t>> attack;
};

struct LabeledSet {
  Matrix features;
  std::vector<std::uint8_t> labels;
};

/// Parses one N-BaIoT feature CSV (header + numeric rows, `expected_cols` columns).
Matrix read_feature_csv(const std::filesystem::path& path, std::size_t expected_cols = kFeatureCount);

/// Attack type id from a CSV path: "mirai.syn.csv" -> "mirai.syn",
/// "mirai_attacks/syn.csv" -> "mirai.syn"; empty for benign files.
std::string traffic_class_of(const std::filesystem::path& path);

RawDeviceData load_device_csv(std::span<const std::filesystem::path> paths, const std::string& device_id);

/// Loads every CSV under `<root>/<device>/` (one level of subdirectories included).
RawDeviceData load_device_dir(const std::filesystem::path& root, const std::string& device_id);

NormalizationStats compute_global_minmax(std::span<const Matrix> train_sets);

/// (m - min) / (max - min) per column; constant columns map to 0. No clipping.
Matrix normalize(const Matrix& m, const NormalizationStats& stats);

/// Seeded sampling without replacement; throws DataError if benign rows fall short.
SplitSelection select_device_split(const RawDeviceData& raw, std::uint64_t seed);

/// Unnormalized training rows for a selection (feeds compute_global_minmax).
Matrix gather_rows(const Matrix& source, std::span<const std::size_t> rows);

DeviceDataset synthesize_device_split(const RawDeviceData& raw, const NormalizationStats& stats,
                                      std::uint64_t seed);

LabeledSet build_global_testset(std::span<const DeviceDataset> devices);

/// Stand-in corpus: benign rows on a shared low-rank manifold (device-specific
/// latent offsets), attacks shifted off it on a per-type coordinate subset.
std::vector<RawDeviceData> generate_synthetic_corpus(std::size_t n_devices, std::uint64_t seed);

struct PreparedData {
  NormalizationStats stats;
  std::vector<DeviceDataset> devices;
};

/// Full pipeline: select splits, min-max over train rows of all devices, normalize.
PreparedData prepare_datasets(std::span<const RawDeviceData> raws, std::uint64_t seed);

// ---- cache persistence ----

/// Binary cache: "FDDS", version, dims, stats, then row-major little-endian doubles.
void write_dataset_cache(const std::filesystem::path& path, const DeviceDataset& ds,
                         const NormalizationStats& stats);

struct CachedDataset {
  DeviceDataset dataset;
  NormalizationStats stats;
};

CachedDataset read_dataset_cache(const std::filesystem::path& path);

struct ManifestEntry {
  std::string device_id;
  std::size_t train_rows = 0;
  std::size_t eval_rows = 0;
  std::size_t test_rows = 0;
  std::string cache_file;
  std::string cache_hash;
  std::vector<std::string> source_hashes;
};

struct Manifest {
  std::string dataset;
  std::uint64_t seed = 0;
  std::vector<ManifestEntry> entries;

  /// Hash over all entry hashes; identifies the prepared corpus.
  std::string hash() const;
};

void write_manifest(const std::filesystem::path& path, const Manifest& manifest);
Manifest read_manifest(const std::filesystem::path& path);

/// Writes one cache file per device plus manifest.txt into `cache_dir`.
Manifest write_prepared(const std::filesystem::path& cache_dir, const std::string& dataset_name,
                        std::uint64_t seed, std::span<const RawDeviceData> raws,
                        const PreparedData& prepared);

/// Loads every device listed in `<cache_dir>/manifest.txt`.
std::vector<DeviceDataset> load_prepared(const std::filesystem::path& cache_dir, Manifest* manifest = nullptr);

}  // namespace fediot::data
