#include "fediot/data.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>

#include "fediot/bytes.hpp"
#include "fediot/error.hpp"
#include "fediot/hash.hpp"

namespace fediot::data {

namespace fs = std::filesystem;

const std::vector<std::string> kNbaiotDevices{
    "Danmini_Doorbell",
    "Ecobee_Thermostat",
    "Ennio_Doorbell",
    "Philips_B120N10_Baby_Monitor",
    "Provision_PT_737E_Security_Camera",
    "Provision_PT_838_Security_Camera",
    "Samsung_SNH_1011_N_Webcam",
    "SimpleHome_XCS7_1002_WHT_Security_Camera",
    "SimpleHome_XCS7_1003_WHT_Security_Camera",
};

namespace {

constexpr std::uint32_t kCacheVersion = 1;
constexpr std::string_view kCacheMagic = "FDDS";

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return std::move(ss).str();
}

std::size_t count_columns(std::string_view line) {
  return static_cast<std::size_t>(std::count(line.begin(), line.end(), ',')) + 1;
}

std::string location(const fs::path& path, std::size_t line_no) {
  return path.string() + ":" + std::to_string(line_no);
}

std::uint64_t device_salt(const std::string& device_id) {
  Fnv1a h;
  h.update(device_id);
  return h.digest();
}

std::vector<std::size_t> permutation(std::size_t n, std::mt19937_64& rng) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::shuffle(idx.begin(), idx.end(), rng);
  return idx;
}

void write_matrix(ByteWriter& w, const Matrix& m) {
  w.put_doubles(m.data(), static_cast<std::size_t>(m.size()));
}

Matrix read_matrix(ByteReader& r, std::size_t rows, std::size_t cols) {
  Matrix m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
  r.get_doubles(m.data(), rows * cols);
  return m;
}

}  // namespace

Matrix read_feature_csv(const fs::path& path, std::size_t expected_cols) {
  if (!fs::exists(path)) throw DataError("missing file " + path.string());
  const std::string text = read_file(path);

  std::vector<double> values;
  std::size_t rows = 0;
  std::size_t line_no = 0;
  bool header_seen = false;
  std::size_t pos = 0;
  while (pos < text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string::npos) end = text.size();
    std::string_view line(text.data() + pos, end - pos);
    pos = end + 1;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.empty()) continue;

    const std::size_t cols = count_columns(line);
    if (cols != expected_cols) {
      throw DataError(location(path, line_no) + ": expected " + std::to_string(expected_cols) +
                      " columns, found " + std::to_string(cols));
    }
    if (!header_seen) {
      header_seen = true;
      continue;
    }
    std::size_t start = 0;
    for (std::size_t c = 0; c < cols; ++c) {
      std::size_t comma = line.find(',', start);
      if (comma == std::string_view::npos) comma = line.size();
      std::string_view cell = line.substr(start, comma - start);
      while (!cell.empty() && cell.front() == ' ') cell.remove_prefix(1);
      while (!cell.empty() && cell.back() == ' ') cell.remove_suffix(1);
      double v = 0.0;
      auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), v);
      if (ec != std::errc() || ptr != cell.data() + cell.size() || cell.empty()) {
        throw DataError(location(path, line_no) + ": non-numeric cell '" + std::string(cell) +
                        "' in column " + std::to_string(c + 1));
      }
      values.push_back(v);
      start = comma + 1;
    }
    ++rows;
  }
  if (!header_seen) throw DataError(path.string() + ": empty file (no header row)");

  Matrix m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(expected_cols));
  std::copy(values.begin(), values.end(), m.data());
  return m;
}

std::string traffic_class_of(const fs::path& path) {
  std::string stem = path.stem().string();
  // Kaggle-style "<n>.mirai.ack" carries a numeric device prefix.
  if (auto dot = stem.find('.'); dot != std::string::npos &&
      std::all_of(stem.begin(), stem.begin() + static_cast<std::ptrdiff_t>(dot),
                  [](unsigned char ch) { return std::isdigit(ch); }) && dot > 0) {
    stem = stem.substr(dot + 1);
  }
  if (stem.find("benign") != std::string::npos) return {};
  const std::string parent = path.parent_path().filename().string();
  constexpr std::string_view kSuffix = "_attacks";
  if (parent.size() > kSuffix.size() && parent.ends_with(kSuffix)) {
    return parent.substr(0, parent.size() - kSuffix.size()) + "." + stem;
  }
  return stem;
}

RawDeviceData load_device_csv(std::span<const fs::path> paths, const std::string& device_id) {
  RawDeviceData raw;
  raw.device_id = device_id;
  std::vector<Matrix> benign_parts;
  for (const auto& p : paths) {
    Matrix m = read_feature_csv(p);
    const std::string cls = traffic_class_of(p);
    if (cls.empty()) {
      benign_parts.push_back(std::move(m));
    } else if (!raw.attacks.emplace(cls, std::move(m)).second) {
      throw DataError(device_id + ": duplicate attack type '" + cls + "' from " + p.string());
    }
    const auto bytes = read_file(p);
    raw.source_hashes.push_back(p.filename().string() + ":" +
                                hex64(fnv1a({reinterpret_cast<const std::uint8_t*>(bytes.data()), bytes.size()})));
  }
  if (benign_parts.empty()) throw DataError(device_id + ": no benign traffic file");
  Eigen::Index total = 0;
  for (const auto& b : benign_parts) total += b.rows();
  raw.benign.resize(total, static_cast<Eigen::Index>(kFeatureCount));
  Eigen::Index at = 0;
  for (const auto& b : benign_parts) {
    raw.benign.middleRows(at, b.rows()) = b;
    at += b.rows();
  }
  return raw;
}

RawDeviceData load_device_dir(const fs::path& root, const std::string& device_id) {
  const fs::path dir = root / device_id;
  if (!fs::is_directory(dir)) throw DataError("missing device directory " + dir.string());
  std::vector<fs::path> paths;
  for (const auto& entry : fs::recursive_directory_iterator(dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ".csv") paths.push_back(entry.path());
  }
  std::sort(paths.begin(), paths.end());
  if (paths.empty()) throw DataError("no CSV files under " + dir.string());
  return load_device_csv(paths, device_id);
}

NormalizationStats compute_global_minmax(std::span<const Matrix> train_sets) {
  NormalizationStats stats;
  bool any = false;
  for (const auto& m : train_sets) {
    if (m.rows() == 0) continue;
    if (!any) {
      stats.min_vec = m.colwise().minCoeff().transpose();
      stats.max_vec = m.colwise().maxCoeff().transpose();
      any = true;
      continue;
    }
    if (m.cols() != stats.min_vec.size()) throw DataError("compute_global_minmax: width mismatch");
    stats.min_vec = stats.min_vec.cwiseMin(m.colwise().minCoeff().transpose());
    stats.max_vec = stats.max_vec.cwiseMax(m.colwise().maxCoeff().transpose());
  }
  if (!any) throw DataError("compute_global_minmax: no training rows");
  return stats;
}

Matrix normalize(const Matrix& m, const NormalizationStats& stats) {
  if (m.cols() != stats.min_vec.size()) {
    throw DataError("normalize: width " + std::to_string(m.cols()) + " does not match stats width " +
                    std::to_string(stats.min_vec.size()));
  }
  Matrix out(m.rows(), m.cols());
  for (Eigen::Index c = 0; c < m.cols(); ++c) {
    const double lo = stats.min_vec[c];
    const double range = stats.max_vec[c] - lo;
    if (range > 0.0) {
      out.col(c) = (m.col(c).array() - lo) / range;
    } else {
      out.col(c).setZero();
    }
  }
  return out;
}

SplitSelection select_device_split(const RawDeviceData& raw, std::uint64_t seed) {
  std::mt19937_64 rng(mix_seed(seed, device_salt(raw.device_id)));
  SplitSelection sel;

  std::size_t attack_total = 0;
  for (const auto& [type, rows] : raw.attacks) {
    const auto n = static_cast<std::size_t>(rows.rows());
    auto perm = permutation(n, rng);
    perm.resize(std::min(n, kAttackRowsPerType));
    attack_total += perm.size();
    sel.attack.emplace(type, std::move(perm));
  }

  const auto benign_rows = static_cast<std::size_t>(raw.benign.rows());
  const std::size_t needed = kTrainRows + kEvalRows + attack_total;
  if (benign_rows < needed) {
    throw DataError(raw.device_id + ": needs " + std::to_string(needed) + " benign rows, has " +
                    std::to_string(benign_rows) + " (short by " + std::to_string(needed - benign_rows) + ")");
  }
  const auto perm = permutation(benign_rows, rng);
  const auto first = perm.begin();
  sel.train.assign(first, first + kTrainRows);
  sel.eval.assign(first + kTrainRows, first + kTrainRows + kEvalRows);
  sel.test_benign.assign(first + kTrainRows + kEvalRows,
                         first + static_cast<std::ptrdiff_t>(needed));
  return sel;
}

Matrix gather_rows(const Matrix& source, std::span<const std::size_t> rows) {
  Matrix out(static_cast<Eigen::Index>(rows.size()), source.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    out.row(static_cast<Eigen::Index>(i)) = source.row(static_cast<Eigen::Index>(rows[i]));
  }
  return out;
}

DeviceDataset synthesize_device_split(const RawDeviceData& raw, const NormalizationStats& stats,
                                      std::uint64_t seed) {
  const SplitSelection sel = select_device_split(raw, seed);
  DeviceDataset ds;
  ds.device_id = raw.device_id;
  ds.train = normalize(gather_rows(raw.benign, sel.train), stats);
  ds.eval = normalize(gather_rows(raw.benign, sel.eval), stats);

  std::size_t attack_total = 0;
  for (const auto& [type, rows] : sel.attack) attack_total += rows.size();
  const std::size_t n_test = sel.test_benign.size() + attack_total;
  Matrix test(static_cast<Eigen::Index>(n_test), raw.benign.cols());
  ds.test_labels.reserve(n_test);
  Eigen::Index at = 0;
  const Matrix benign_part = gather_rows(raw.benign, sel.test_benign);
  test.middleRows(at, benign_part.rows()) = benign_part;
  at += benign_part.rows();
  ds.test_labels.insert(ds.test_labels.end(), sel.test_benign.size(), 0);
  for (const auto& [type, rows] : sel.attack) {
    const Matrix part = gather_rows(raw.attacks.at(type), rows);
    test.middleRows(at, part.rows()) = part;
    at += part.rows();
    ds.test_labels.insert(ds.test_labels.end(), rows.size(), 1);
  }
  ds.test_features = normalize(test, stats);
  return ds;
}

LabeledSet build_global_testset(std::span<const DeviceDataset> devices) {
  LabeledSet out;
  Eigen::Index total = 0;
  Eigen::Index width = 0;
  for (const auto& d : devices) {
    total += d.test_features.rows();
    width = d.test_features.cols();
  }
  out.features.resize(total, width);
  out.labels.reserve(static_cast<std::size_t>(total));
  Eigen::Index at = 0;
  for (const auto& d : devices) {
    out.features.middleRows(at, d.test_features.rows()) = d.test_features;
    at += d.test_features.rows();
    out.labels.insert(out.labels.end(), d.test_labels.begin(), d.test_labels.end());
  }
  return out;
}

std::vector<RawDeviceData> generate_synthetic_corpus(std::size_t n_devices, std::uint64_t seed) {
  static const std::vector<std::string> kAttackTypes{
      "gafgyt.combo", "gafgyt.junk", "gafgyt.scan", "gafgyt.tcp", "gafgyt.udp",
      "mirai.ack",    "mirai.scan",  "mirai.syn",   "mirai.udp",  "mirai.udpplain"};
  // Benign rows: x = base + A z + noise with z ~ N(offset_d, I). A and base are
  // shared, offset_d differs per device, so devices are non-IID on one manifold.
  constexpr Eigen::Index kLatent = 6;
  constexpr double kCoordSigma = 0.06;  // per-coordinate spread of A z
  constexpr double kNoise = 0.005;
  constexpr double kShift = 0.4;  // > 6 kCoordSigma
  constexpr std::size_t kShiftedCoords = 12;
  constexpr std::size_t kAttackRows = 600;
  const auto width = static_cast<Eigen::Index>(kFeatureCount);

  Matrix loading(width, kLatent);
  Vector base(width);
  std::vector<std::vector<Eigen::Index>> signatures;
  {
    std::mt19937_64 rng(mix_seed(seed, 0xa77ac4));
    std::normal_distribution<double> g(0.0, kCoordSigma / std::sqrt(static_cast<double>(kLatent)));
    std::uniform_real_distribution<double> u(0.3, 0.7);
    for (Eigen::Index i = 0; i < width; ++i) {
      base[i] = u(rng);
      for (Eigen::Index j = 0; j < kLatent; ++j) loading(i, j) = g(rng);
    }
    // Each attack type perturbs its own coordinate subset, shared across devices.
    for (std::size_t t = 0; t < kAttackTypes.size(); ++t) {
      std::vector<Eigen::Index> coords(kFeatureCount);
      std::iota(coords.begin(), coords.end(), Eigen::Index{0});
      std::shuffle(coords.begin(), coords.end(), rng);
      coords.resize(kShiftedCoords);
      signatures.push_back(std::move(coords));
    }
  }

  std::vector<RawDeviceData> corpus;
  corpus.reserve(n_devices);
  for (std::size_t d = 0; d < n_devices; ++d) {
    std::mt19937_64 rng(mix_seed(seed, d + 1));
    std::uniform_real_distribution<double> offset_dist(-1.0, 1.0);
    std::normal_distribution<double> unit(0.0, 1.0);
    std::normal_distribution<double> noise(0.0, kNoise);

    RawDeviceData raw;
    char name[32];
    std::snprintf(name, sizeof name, "synthetic-%02zu", d);
    raw.device_id = name;
    raw.source_hashes.push_back("synthetic:" + std::to_string(seed) + ":" + raw.device_id);

    Vector offset(kLatent);
    for (Eigen::Index j = 0; j < kLatent; ++j) offset[j] = offset_dist(rng);

    auto sample = [&](Eigen::Index rows, const Vector& shift) {
      Matrix out(rows, width);
      Vector z(kLatent);
      for (Eigen::Index r = 0; r < rows; ++r) {
        for (Eigen::Index j = 0; j < kLatent; ++j) z[j] = offset[j] + unit(rng);
        Vector x = base + shift + loading * z;
        for (Eigen::Index i = 0; i < width; ++i) out(r, i) = x[i] + noise(rng);
      }
      return out;
    };

    // Like N-BaIoT, a couple of devices only ever see one malware family.
    const bool gafgyt_only = (d % 4 == 2);
    const std::size_t n_types = gafgyt_only ? 5 : kAttackTypes.size();

    const auto n_benign = static_cast<Eigen::Index>(kTrainRows + kEvalRows + kAttackRowsPerType * n_types + 1000);
    raw.benign = sample(n_benign, Vector::Zero(width));
    for (std::size_t t = 0; t < n_types; ++t) {
      Vector shift = Vector::Zero(width);
      for (auto c : signatures[t]) shift[c] = base[c] < 0.5 ? kShift : -kShift;
      raw.attacks.emplace(kAttackTypes[t], sample(static_cast<Eigen::Index>(kAttackRows), shift));
    }
    corpus.push_back(std::move(raw));
  }
  return corpus;
}

PreparedData prepare_datasets(std::span<const RawDeviceData> raws, std::uint64_t seed) {
  if (raws.empty()) throw DataError("prepare_datasets: no devices");
  std::vector<Matrix> train_raw;
  train_raw.reserve(raws.size());
  for (const auto& raw : raws) {
    const auto sel = select_device_split(raw, seed);
    train_raw.push_back(gather_rows(raw.benign, sel.train));
  }
  // Only training rows ever reach the normalization statistics.
  PreparedData out;
  out.stats = compute_global_minmax(train_raw);
  out.devices.reserve(raws.size());
  for (const auto& raw : raws) out.devices.push_back(synthesize_device_split(raw, out.stats, seed));
  return out;
}

void write_dataset_cache(const fs::path& path, const DeviceDataset& ds, const NormalizationStats& stats) {
  const auto width = static_cast<std::uint32_t>(stats.min_vec.size());
  if (ds.train.cols() != width || ds.eval.cols() != width || ds.test_features.cols() != width) {
    throw DataError("write_dataset_cache: width mismatch for " + ds.device_id);
  }
  ByteWriter w;
  w.put_bytes(kCacheMagic);
  w.put<std::uint8_t>(kCacheVersion);
  w.put<std::uint16_t>(static_cast<std::uint16_t>(ds.device_id.size()));
  w.put_bytes(ds.device_id);
  w.put<std::uint32_t>(width);
  w.put<std::uint32_t>(static_cast<std::uint32_t>(ds.train.rows()));
  w.put<std::uint32_t>(static_cast<std::uint32_t>(ds.eval.rows()));
  w.put<std::uint32_t>(static_cast<std::uint32_t>(ds.test_features.rows()));
  w.put_doubles(stats.min_vec.data(), width);
  w.put_doubles(stats.max_vec.data(), width);
  write_matrix(w, ds.train);
  write_matrix(w, ds.eval);
  write_matrix(w, ds.test_features);
  w.put_bytes(ds.test_labels);

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(w.bytes().data()), static_cast<std::streamsize>(w.size()));
  if (!out) throw DataError("short write to " + path.string());
}

CachedDataset read_dataset_cache(const fs::path& path) {
  const std::string blob = read_file(path);
  ByteReader r({reinterpret_cast<const std::uint8_t*>(blob.data()), blob.size()});
  CachedDataset out;
  try {
    if (r.get_string(kCacheMagic.size()) != kCacheMagic) throw DataError(path.string() + ": not a dataset cache");
    if (r.get<std::uint8_t>() != kCacheVersion) throw DataError(path.string() + ": unsupported cache version");
    out.dataset.device_id = r.get_string(r.get<std::uint16_t>());
    const auto width = r.get<std::uint32_t>();
    const auto n_train = r.get<std::uint32_t>();
    const auto n_eval = r.get<std::uint32_t>();
    const auto n_test = r.get<std::uint32_t>();
    out.stats.min_vec.resize(width);
    out.stats.max_vec.resize(width);
    r.get_doubles(out.stats.min_vec.data(), width);
    r.get_doubles(out.stats.max_vec.data(), width);
    out.dataset.train = read_matrix(r, n_train, width);
    out.dataset.eval = read_matrix(r, n_eval, width);
    out.dataset.test_features = read_matrix(r, n_test, width);
    const auto labels = r.get_bytes(n_test);
    out.dataset.test_labels.assign(labels.begin(), labels.end());
  } catch (const BufferUnderflow& e) {
    throw DataError(path.string() + ": truncated cache (" + e.what() + ")");
  }
  if (r.remaining() != 0) throw DataError(path.string() + ": trailing bytes in cache");
  return out;
}

std::string Manifest::hash() const {
  Fnv1a h;
  h.update(dataset);
  h.update_pod(seed);
  for (const auto& e : entries) {
    h.update(e.device_id);
    h.update(e.cache_hash);
  }
  return hex64(h.digest());
}

void write_manifest(const fs::path& path, const Manifest& manifest) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw DataError("cannot write " + path.string());
  out << "# fediot dataset manifest\n";
  out << "dataset " << manifest.dataset << "\n";
  out << "seed " << manifest.seed << "\n";
  for (const auto& e : manifest.entries) {
    out << "device " << e.device_id << " train=" << e.train_rows << " eval=" << e.eval_rows
        << " test=" << e.test_rows << " file=" << e.cache_file << " hash=" << e.cache_hash << " sources=";
    for (std::size_t i = 0; i < e.source_hashes.size(); ++i) out << (i ? ";" : "") << e.source_hashes[i];
    out << "\n";
  }
  out << "manifest_hash " << manifest.hash() << "\n";
}

Manifest read_manifest(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("missing manifest " + path.string());
  Manifest m;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line.front() == '#') continue;
    std::istringstream ls(line);
    std::string key;
    ls >> key;
    if (key == "dataset") {
      ls >> m.dataset;
    } else if (key == "seed") {
      ls >> m.seed;
    } else if (key == "device") {
      ManifestEntry e;
      ls >> e.device_id;
      std::string field;
      while (ls >> field) {
        const auto eq = field.find('=');
        if (eq == std::string::npos) throw DataError(location(path, line_no) + ": malformed field " + field);
        const std::string k = field.substr(0, eq);
        const std::string v = field.substr(eq + 1);
        if (k == "train") e.train_rows = std::stoul(v);
        else if (k == "eval") e.eval_rows = std::stoul(v);
        else if (k == "test") e.test_rows = std::stoul(v);
        else if (k == "file") e.cache_file = v;
        else if (k == "hash") e.cache_hash = v;
        else if (k == "sources") {
          std::istringstream ss(v);
          std::string s;
          while (std::getline(ss, s, ';')) e.source_hashes.push_back(s);
        }
      }
      m.entries.push_back(std::move(e));
    } else if (key == "manifest_hash") {
      std::string recorded;
      ls >> recorded;
      if (recorded != m.hash()) throw DataError(path.string() + ": manifest hash mismatch");
    } else {
      throw DataError(location(path, line_no) + ": unknown manifest key '" + key + "'");
    }
  }
  return m;
}

Manifest write_prepared(const fs::path& cache_dir, const std::string& dataset_name, std::uint64_t seed,
                        std::span<const RawDeviceData> raws, const PreparedData& prepared) {
  fs::create_directories(cache_dir);
  Manifest manifest;
  manifest.dataset = dataset_name;
  manifest.seed = seed;
  for (std::size_t i = 0; i < prepared.devices.size(); ++i) {
    const auto& ds = prepared.devices[i];
    ManifestEntry e;
    e.device_id = ds.device_id;
    e.train_rows = static_cast<std::size_t>(ds.train.rows());
    e.eval_rows = static_cast<std::size_t>(ds.eval.rows());
    e.test_rows = static_cast<std::size_t>(ds.test_features.rows());
    e.cache_file = ds.device_id + ".fdds";
    write_dataset_cache(cache_dir / e.cache_file, ds, prepared.stats);
    const auto blob = read_file(cache_dir / e.cache_file);
    e.cache_hash = hex64(fnv1a({reinterpret_cast<const std::uint8_t*>(blob.data()), blob.size()}));
    if (i < raws.size()) e.source_hashes = raws[i].source_hashes;
    manifest.entries.push_back(std::move(e));
  }
  write_manifest(cache_dir / "manifest.txt", manifest);
  return manifest;
}

std::vector<DeviceDataset> load_prepared(const fs::path& cache_dir, Manifest* manifest) {
  Manifest m = read_manifest(cache_dir / "manifest.txt");
  std::vector<DeviceDataset> out;
  out.reserve(m.entries.size());
  for (const auto& e : m.entries) {
    const fs::path file = cache_dir / e.cache_file;
    const auto blob = read_file(file);
    const auto h = hex64(fnv1a({reinterpret_cast<const std::uint8_t*>(blob.data()), blob.size()}));
    if (h != e.cache_hash) throw DataError(file.string() + ": cache hash " + h + " does not match manifest " + e.cache_hash);
    out.push_back(read_dataset_cache(file).dataset);
  }
  if (manifest != nullptr) *manifest = std::move(m);
  return out;
}

}  // namespace fediot::data
