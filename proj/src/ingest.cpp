#include "caol/ingest.hpp"

#include <cctype>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>

#include <json.hpp>
#include <zlib.h>

#include "caol/errors.hpp"

namespace caol::ingest {

namespace {

constexpr const char* kModule = "signal-ingest";
using nlohmann::json;

[[noreturn]] void fail(ErrorCode code, const std::string& msg) { throw Error(code, kModule, msg); }

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::Io, "cannot open " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void write_file(const std::filesystem::path& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorCode::Io, "cannot write " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) fail(ErrorCode::Io, "short write to " + path.string());
}

// PGM header tokenizer: whitespace separated, '#' starts a comment to end of line.
class HeaderReader {
 public:
  explicit HeaderReader(const std::string& bytes) : bytes_(bytes) {}

  std::string token() {
    skip();
    const std::size_t start = pos_;
    while (pos_ < bytes_.size() && !std::isspace(static_cast<unsigned char>(bytes_[pos_])) &&
           bytes_[pos_] != '#')
      ++pos_;
    return bytes_.substr(start, pos_ - start);
  }

  unsigned long number(const char* what, bool truncated_if_missing = false) {
    const std::string t = token();
    if (t.empty())
      fail(truncated_if_missing ? ErrorCode::TruncatedData : ErrorCode::MalformedHeader,
           std::string("PGM: missing ") + what);
    for (char c : t)
      if (!std::isdigit(static_cast<unsigned char>(c)))
        fail(ErrorCode::MalformedHeader, std::string("PGM: bad ") + what + " '" + t + "'");
    if (t.size() > 9) fail(ErrorCode::DimensionOverflow, std::string("PGM: ") + what + " too large");
    return std::stoul(t);
  }

  std::size_t pos() const { return pos_; }
  void advance(std::size_t n) { pos_ += n; }

 private:
  void skip() {
    while (pos_ < bytes_.size()) {
      if (bytes_[pos_] == '#') {
        while (pos_ < bytes_.size() && bytes_[pos_] != '\n') ++pos_;
      } else if (std::isspace(static_cast<unsigned char>(bytes_[pos_]))) {
        ++pos_;
      } else {
        break;
      }
    }
  }

  const std::string& bytes_;
  std::size_t pos_ = 0;
};

template <typename T>
void put_le(std::string& out, T value) {
  for (std::size_t i = 0; i < sizeof(T); ++i)
    out.push_back(static_cast<char>((static_cast<std::uint64_t>(value) >> (8 * i)) & 0xFF));
}

template <typename T>
T get_le(const std::string& in, std::size_t offset) {
  std::uint64_t v = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i)
    v |= static_cast<std::uint64_t>(static_cast<unsigned char>(in[offset + i])) << (8 * i);
  return static_cast<T>(v);
}

Vector cyclic_box_mean(const Signal& x, std::size_t radius) {
  const Geometry& g = x.geometry();
  const long h = static_cast<long>(g.height);
  const long w = static_cast<long>(g.width);
  const long rad = static_cast<long>(radius);
  const Vector& v = x.values();
  const auto wrap = [](long i, long n) { return ((i % n) + n) % n; };
  Vector out(v.size());
  if (g.is_grid()) {
    const double count = static_cast<double>((2 * rad + 1) * (2 * rad + 1));
    for (long i = 0; i < h; ++i)
      for (long j = 0; j < w; ++j) {
        double s = 0.0;
        for (long di = -rad; di <= rad; ++di)
          for (long dj = -rad; dj <= rad; ++dj) s += v(wrap(i + di, h) * w + wrap(j + dj, w));
        out(i * w + j) = s / count;
      }
  } else {
    const double count = static_cast<double>(2 * rad + 1);
    for (long i = 0; i < w; ++i) {
      double s = 0.0;
      for (long d = -rad; d <= rad; ++d) s += v(wrap(i + d, w));
      out(i) = s / count;
    }
  }
  return out;
}

json geometry_to_json(const Geometry& g) {
  if (g.is_grid()) return {{"kind", "grid"}, {"height", g.height}, {"width", g.width}};
  return {{"kind", "line"}, {"length", g.width}};
}

Geometry geometry_from_json(const json& j) {
  const std::string kind = j.at("kind").get<std::string>();
  if (kind == "grid") return Geometry::grid(j.at("height").get<std::size_t>(), j.at("width").get<std::size_t>());
  if (kind == "line") return Geometry::line(j.at("length").get<std::size_t>());
  fail(ErrorCode::MalformedHeader, "manifest: unknown geometry kind '" + kind + "'");
}

std::string format_crc(std::uint32_t crc) {
  std::ostringstream s;
  s << "crc32:" << std::hex << std::setw(8) << std::setfill('0') << crc;
  return s.str();
}

}  // namespace

Signal decode_pgm(const std::string& bytes) {
  if (bytes.size() < 2 || bytes[0] != 'P' || (bytes[1] != '2' && bytes[1] != '5'))
    fail(ErrorCode::MalformedHeader, "not a PGM file (expected P2 or P5 magic)");
  const bool binary = bytes[1] == '5';
  HeaderReader reader(bytes);
  reader.advance(2);
  const unsigned long width = reader.number("width");
  const unsigned long height = reader.number("height");
  const unsigned long maxval = reader.number("maxval");
  if (width == 0 || height == 0) fail(ErrorCode::MalformedHeader, "PGM: zero image dimension");
  if (maxval == 0 || maxval > 65535) fail(ErrorCode::MalformedHeader, "PGM: maxval must be in [1, 65535]");
  const std::size_t n = static_cast<std::size_t>(width) * height;

  Vector values(static_cast<Eigen::Index>(n));
  if (binary) {
    // exactly one whitespace byte separates the header from the raster
    std::size_t pos = reader.pos();
    if (pos >= bytes.size() || !std::isspace(static_cast<unsigned char>(bytes[pos])))
      fail(ErrorCode::MalformedHeader, "PGM: missing separator before raster");
    ++pos;
    const std::size_t depth = maxval > 255 ? 2 : 1;
    if (bytes.size() - pos < n * depth) fail(ErrorCode::TruncatedData, "PGM: raster shorter than header claims");
    for (std::size_t i = 0; i < n; ++i) {
      const auto* p = reinterpret_cast<const unsigned char*>(bytes.data() + pos + i * depth);
      const unsigned v = depth == 2 ? (unsigned{p[0]} << 8) | p[1] : p[0];
      if (v > maxval) fail(ErrorCode::MalformedHeader, "PGM: pixel exceeds maxval");
      values(static_cast<Eigen::Index>(i)) = v;
    }
  } else {
    for (std::size_t i = 0; i < n; ++i) {
      const unsigned long v = reader.number("pixel", true);
      if (v > maxval) fail(ErrorCode::MalformedHeader, "PGM: pixel exceeds maxval");
      values(static_cast<Eigen::Index>(i)) = static_cast<double>(v);
    }
  }
  return Signal(std::move(values), Geometry::grid(height, width));
}

Signal load_pgm(const std::filesystem::path& path) { return decode_pgm(read_file(path)); }

std::string encode_pgm(const Signal& image, unsigned maxval) {
  if (maxval == 0 || maxval > 65535) fail(ErrorCode::InvalidArgument, "maxval must be in [1, 65535]");
  const Geometry& g = image.geometry();
  std::string out = "P5\n" + std::to_string(g.width) + " " + std::to_string(g.height) + "\n" +
                    std::to_string(maxval) + "\n";
  const bool wide = maxval > 255;
  for (Eigen::Index i = 0; i < image.values().size(); ++i) {
    const double v = std::round(image.values()(i));
    if (v < 0.0 || v > maxval) fail(ErrorCode::InvalidArgument, "pixel value outside [0, maxval]");
    const auto p = static_cast<unsigned>(v);
    if (wide) out.push_back(static_cast<char>(p >> 8));
    out.push_back(static_cast<char>(p & 0xFF));
  }
  return out;
}

void write_pgm(const std::filesystem::path& path, const Signal& image, unsigned maxval) {
  write_file(path, encode_pgm(image, maxval));
}

Signal decode_raw_tensor(const std::string& bytes) {
  if (bytes.size() < 8 || std::memcmp(bytes.data(), kTensorMagic, 8) != 0)
    fail(ErrorCode::BadMagic, "raw tensor: bad magic");
  if (bytes.size() < 16) fail(ErrorCode::TruncatedData, "raw tensor: truncated header");
  const auto version = get_le<std::uint32_t>(bytes, 8);
  if (version != kTensorVersion)
    fail(ErrorCode::MalformedHeader, "raw tensor: unsupported version " + std::to_string(version));
  const auto tag = get_le<std::uint32_t>(bytes, 12);
  if (tag != 1 && tag != 2) fail(ErrorCode::MalformedHeader, "raw tensor: unknown geometry tag " + std::to_string(tag));

  const std::size_t header = 16 + (tag == 1 ? 8 : 16);
  if (bytes.size() < header) fail(ErrorCode::TruncatedData, "raw tensor: truncated dimensions");
  Geometry geometry;
  // values must fit in an Eigen index and their byte count in size_t
  constexpr std::uint64_t kMaxCount = static_cast<std::uint64_t>(std::numeric_limits<std::int64_t>::max()) / 8;
  std::uint64_t count = 0;
  if (tag == 1) {
    count = get_le<std::uint64_t>(bytes, 16);
    if (count > kMaxCount) fail(ErrorCode::DimensionOverflow, "raw tensor: N too large");
    geometry = Geometry::line(static_cast<std::size_t>(count));
  } else {
    const auto h = get_le<std::uint64_t>(bytes, 16);
    const auto w = get_le<std::uint64_t>(bytes, 24);
    if (h != 0 && w > kMaxCount / h) fail(ErrorCode::DimensionOverflow, "raw tensor: H x W overflows");
    count = h * w;
    geometry = Geometry::grid(static_cast<std::size_t>(h), static_cast<std::size_t>(w));
  }
  if (count == 0) fail(ErrorCode::MalformedHeader, "raw tensor: zero-sized tensor");
  if ((bytes.size() - header) / 8 < count) fail(ErrorCode::TruncatedData, "raw tensor: payload shorter than declared");
  if (bytes.size() - header != count * 8) fail(ErrorCode::MalformedHeader, "raw tensor: trailing bytes after payload");

  Vector values(static_cast<Eigen::Index>(count));
  for (std::uint64_t i = 0; i < count; ++i) {
    const auto bits = get_le<std::uint64_t>(bytes, header + 8 * i);
    double v;
    std::memcpy(&v, &bits, sizeof v);
    values(static_cast<Eigen::Index>(i)) = v;
  }
  return Signal(std::move(values), geometry);
}

std::string encode_raw_tensor(const Signal& x) {
  std::string out(kTensorMagic, 8);
  put_le<std::uint32_t>(out, kTensorVersion);
  const Geometry& g = x.geometry();
  put_le<std::uint32_t>(out, g.is_grid() ? 2u : 1u);
  if (g.is_grid()) {
    put_le<std::uint64_t>(out, g.height);
    put_le<std::uint64_t>(out, g.width);
  } else {
    put_le<std::uint64_t>(out, g.width);
  }
  out.reserve(out.size() + 8 * x.size());
  for (Eigen::Index i = 0; i < x.values().size(); ++i) {
    std::uint64_t bits;
    const double v = x.values()(i);
    std::memcpy(&bits, &v, sizeof bits);
    put_le<std::uint64_t>(out, bits);
  }
  return out;
}

Signal load_raw_tensor(const std::filesystem::path& path) { return decode_raw_tensor(read_file(path)); }

void write_raw_tensor(const std::filesystem::path& path, const Signal& x) {
  write_file(path, encode_raw_tensor(x));
}

Matrix decode_matrix(const std::string& bytes) {
  const Signal s = decode_raw_tensor(bytes);
  const Geometry& g = s.geometry();
  return Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
      s.values().data(), static_cast<Eigen::Index>(g.height), static_cast<Eigen::Index>(g.width));
}

std::string encode_matrix(const Matrix& m) {
  Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> row_major = m;
  Vector flat = Eigen::Map<const Vector>(row_major.data(), row_major.size());
  return encode_raw_tensor(Signal(std::move(flat), Geometry::grid(static_cast<std::size_t>(m.rows()),
                                                                  static_cast<std::size_t>(m.cols()))));
}

Matrix load_matrix(const std::filesystem::path& path) { return decode_matrix(read_file(path)); }

void write_matrix(const std::filesystem::path& path, const Matrix& m) { write_file(path, encode_matrix(m)); }

PreprocessStep PreprocessStep::parse(const std::string& name, std::size_t radius) {
  if (name == "mean_subtract") return {Kind::MeanSubtract, 0};
  if (name == "standardize") return {Kind::Standardize, 0};
  if (name == "highpass") return {Kind::Highpass, radius};
  fail(ErrorCode::UnknownStep, "unknown preprocessing step '" + name + "'");
}

std::string PreprocessStep::name() const {
  switch (kind) {
    case Kind::MeanSubtract: return "mean_subtract";
    case Kind::Standardize: return "standardize";
    case Kind::Highpass: return "highpass";
  }
  return "unknown";
}

Signal preprocess(const Signal& x, const std::vector<PreprocessStep>& steps,
                  std::vector<std::string>* warnings) {
  Vector v = x.values();
  for (const PreprocessStep& step : steps) {
    switch (step.kind) {
      case PreprocessStep::Kind::MeanSubtract:
        v.array() -= v.mean();
        break;
      case PreprocessStep::Kind::Standardize: {
        // unit sample (n - 1) standard deviation
        const Eigen::Index n = v.size();
        const Vector centered = v.array() - v.mean();
        const double sd = n > 1 ? std::sqrt(centered.squaredNorm() / static_cast<double>(n - 1)) : 0.0;
        if (!(sd > 0.0)) {
          if (warnings) warnings->push_back("standardize skipped: constant input");
          break;
        }
        v = centered / sd;
        break;
      }
      case PreprocessStep::Kind::Highpass:
        v -= cyclic_box_mean(Signal(v, x.geometry()), step.radius);
        break;
    }
  }
  return Signal(std::move(v), x.geometry());
}

std::vector<Signal> patchify(const Signal& image, std::size_t patch_h, std::size_t patch_w,
                             std::size_t stride) {
  const Geometry& g = image.geometry();
  if (!g.is_grid()) fail(ErrorCode::InvalidArgument, "patchify needs a grid signal");
  if (patch_h == 0 || patch_w == 0 || stride == 0)
    fail(ErrorCode::InvalidArgument, "patch dimensions and stride must be >= 1");
  if (patch_h > g.height || patch_w > g.width)
    fail(ErrorCode::PatchTooLarge, "patch " + std::to_string(patch_h) + "x" + std::to_string(patch_w) +
                                       " exceeds image " + std::to_string(g.height) + "x" +
                                       std::to_string(g.width));
  std::vector<Signal> patches;
  const Vector& v = image.values();
  for (std::size_t top = 0; top + patch_h <= g.height; top += stride)
    for (std::size_t left = 0; left + patch_w <= g.width; left += stride) {
      Vector p(static_cast<Eigen::Index>(patch_h * patch_w));
      for (std::size_t i = 0; i < patch_h; ++i)
        for (std::size_t j = 0; j < patch_w; ++j)
          p(static_cast<Eigen::Index>(i * patch_w + j)) = v(static_cast<Eigen::Index>((top + i) * g.width + left + j));
      patches.emplace_back(std::move(p), Geometry::grid(patch_h, patch_w));
    }
  return patches;
}

std::uint32_t crc32_of(const std::string& bytes) {
  uLong crc = crc32(0L, Z_NULL, 0);
  // zlib takes uInt lengths; feed in chunks
  std::size_t pos = 0;
  while (pos < bytes.size()) {
    const std::size_t chunk = std::min<std::size_t>(bytes.size() - pos, 1u << 30);
    crc = crc32(crc, reinterpret_cast<const Bytef*>(bytes.data() + pos), static_cast<uInt>(chunk));
    pos += chunk;
  }
  return static_cast<std::uint32_t>(crc);
}

std::uint32_t crc32_of_file(const std::filesystem::path& path) { return crc32_of(read_file(path)); }

DatasetManifest load_manifest(const std::filesystem::path& path) {
  json j;
  try {
    j = json::parse(read_file(path));
  } catch (const json::exception& e) {
    fail(ErrorCode::MalformedHeader, "manifest " + path.string() + ": " + e.what());
  }
  DatasetManifest m;
  m.base_dir = path.parent_path();
  try {
    m.source = j.value("source", "");
    for (const json& e : j.at("entries"))
      m.entries.push_back({e.at("path").get<std::string>(), geometry_from_json(e.at("geometry")),
                           e.at("checksum").get<std::string>()});
    if (j.contains("preprocessing"))
      for (const json& s : j.at("preprocessing"))
        m.preprocessing.push_back(PreprocessStep::parse(s.at("step").get<std::string>(), s.value("radius", std::size_t{1})));
    if (j.contains("patches")) {
      const json& p = j.at("patches");
      m.patches = PatchSpec{p.at("height").get<std::size_t>(), p.at("width").get<std::size_t>(),
                            p.value("stride", std::size_t{1}), p.value("max_patches", std::size_t{0})};
    }
  } catch (const json::exception& e) {
    fail(ErrorCode::MalformedHeader, "manifest " + path.string() + ": " + e.what());
  }
  if (m.entries.empty()) fail(ErrorCode::EmptyDataset, "manifest " + path.string() + " lists no entries");
  return m;
}

void write_manifest(const std::filesystem::path& path, const DatasetManifest& manifest) {
  json j;
  j["source"] = manifest.source;
  j["entries"] = json::array();
  for (const ManifestEntry& e : manifest.entries)
    j["entries"].push_back({{"path", e.path}, {"geometry", geometry_to_json(e.geometry)}, {"checksum", e.checksum}});
  j["preprocessing"] = json::array();
  for (const PreprocessStep& s : manifest.preprocessing) {
    json step = {{"step", s.name()}};
    if (s.kind == PreprocessStep::Kind::Highpass) step["radius"] = s.radius;
    j["preprocessing"].push_back(step);
  }
  if (manifest.patches)
    j["patches"] = {{"height", manifest.patches->height}, {"width", manifest.patches->width},
                    {"stride", manifest.patches->stride}, {"max_patches", manifest.patches->max_patches}};
  write_file(path, j.dump(2) + "\n");
}

std::vector<Signal> load_dataset(const DatasetManifest& manifest, std::vector<std::string>* warnings) {
  if (manifest.entries.empty()) fail(ErrorCode::EmptyDataset, "manifest lists no entries");
  std::vector<Signal> out;
  for (const ManifestEntry& entry : manifest.entries) {
    std::filesystem::path p(entry.path);
    if (p.is_relative()) p = manifest.base_dir / p;
    const std::string bytes = read_file(p);
    const std::string actual = format_crc(crc32_of(bytes));
    if (actual != entry.checksum)
      fail(ErrorCode::ChecksumMismatch, p.string() + ": checksum " + actual + " != manifest " + entry.checksum);
    const Signal raw = p.extension() == ".pgm" ? decode_pgm(bytes) : decode_raw_tensor(bytes);
    if (!(raw.geometry() == entry.geometry))
      fail(ErrorCode::DimensionMismatch, p.string() + ": geometry differs from manifest");
    const Signal clean = preprocess(raw, manifest.preprocessing, warnings);
    if (!manifest.patches) {
      out.push_back(clean);
      continue;
    }
    std::vector<Signal> patches = patchify(clean, manifest.patches->height, manifest.patches->width,
                                           manifest.patches->stride);
    if (manifest.patches->max_patches > 0 && patches.size() > manifest.patches->max_patches)
      patches.erase(patches.begin() + static_cast<std::ptrdiff_t>(manifest.patches->max_patches), patches.end());
    for (Signal& s : patches) out.push_back(std::move(s));
  }
  return out;
}

}  // namespace caol::ingest
