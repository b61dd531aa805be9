#include <gtest/gtest.h>

#include <algorithm>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <random>

#include "caol/errors.hpp"
#include "caol/ingest.hpp"
#include "oracles.hpp"

using namespace caol;
using namespace caol::ingest;
namespace fs = std::filesystem;

namespace {

ErrorCode code_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "no caol::Error thrown";
  return ErrorCode::InvalidArgument;
}

Signal grid_of(std::size_t h, std::size_t w, std::vector<double> v) {
  Vector values = Eigen::Map<Vector>(v.data(), static_cast<Eigen::Index>(v.size()));
  return Signal(values, Geometry::grid(h, w));
}

std::string read_bytes(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

void write_bytes(const fs::path& p, const std::string& bytes) {
  std::ofstream(p, std::ios::binary) << bytes;
}

std::string tensor_header(std::uint32_t tag, std::vector<std::uint64_t> dims) {
  std::string s(kTensorMagic, 8);
  const std::uint32_t version = kTensorVersion;
  s.append(reinterpret_cast<const char*>(&version), 4);
  s.append(reinterpret_cast<const char*>(&tag), 4);
  for (std::uint64_t d : dims) s.append(reinterpret_cast<const char*>(&d), 8);
  return s;
}

class TempDir : public ::testing::Test {
 protected:
  void SetUp() override {
    const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
    dir_ = fs::temp_directory_path() / (std::string("caol_ingest_") + info->name());
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }
  fs::path dir_;
};

}  // namespace

TEST(Pgm, AsciiTwoByTwo) {
  const Signal x = decode_pgm("P2\n# comment\n2 2\n255\n0 1\n2 3\n");
  EXPECT_EQ(x.geometry(), Geometry::grid(2, 2));
  EXPECT_EQ(x.values(), (Vector{{0.0, 1.0, 2.0, 3.0}}));
}

TEST(Pgm, BinaryRoundTripIsBitExact) {
  std::mt19937_64 rng(3);
  std::uniform_int_distribution<int> pix(0, 255);
  std::vector<double> v(7 * 5);
  for (double& p : v) p = pix(rng);
  const Signal x = grid_of(7, 5, v);
  const std::string bytes = encode_pgm(x);
  EXPECT_EQ(bytes.substr(0, 2), "P5");
  const Signal y = decode_pgm(bytes);
  EXPECT_EQ(y.geometry(), x.geometry());
  EXPECT_EQ(y.values(), x.values());
  EXPECT_EQ(encode_pgm(y), bytes);
}

TEST(Pgm, SixteenBitRoundTrip) {
  const Signal x = grid_of(1, 3, {0.0, 256.0, 65535.0});
  const std::string bytes = encode_pgm(x, 65535);
  EXPECT_EQ(static_cast<unsigned char>(bytes[bytes.size() - 4]), 0x01);  // big-endian 256
  EXPECT_EQ(decode_pgm(bytes).values(), x.values());
}

TEST(Pgm, Errors) {
  EXPECT_EQ(code_of([] { decode_pgm("P6\n1 1\n255\n\x01"); }), ErrorCode::MalformedHeader);
  EXPECT_EQ(code_of([] { decode_pgm("GIF89a"); }), ErrorCode::MalformedHeader);
  EXPECT_EQ(code_of([] { decode_pgm("P5\n2 2\n255\n\x01\x02"); }), ErrorCode::TruncatedData);
  EXPECT_EQ(code_of([] { decode_pgm("P2\n2 1\n255\n1\n"); }), ErrorCode::TruncatedData);
  EXPECT_EQ(code_of([] { decode_pgm("P2\n1 1\n70000\n1\n"); }), ErrorCode::MalformedHeader);
  EXPECT_EQ(code_of([] { decode_pgm("P2\n1 1\n10\n11\n"); }), ErrorCode::MalformedHeader);
  EXPECT_EQ(code_of([] { encode_pgm(grid_of(1, 1, {300.0})); }), ErrorCode::InvalidArgument);
}

TEST(Pgm, DecodeIsDeterministic) {
  const std::string bytes = "P2\n3 1\n9\n1 5 9\n";
  EXPECT_EQ(decode_pgm(bytes).values(), decode_pgm(bytes).values());
}

TEST(RawTensor, LineFromHandBuiltBytes) {
  std::string bytes = tensor_header(1, {4});
  for (double v : {1.0, 2.0, 3.0, 4.0}) bytes.append(reinterpret_cast<const char*>(&v), 8);
  const Signal x = decode_raw_tensor(bytes);
  EXPECT_EQ(x.geometry(), Geometry::line(4));
  EXPECT_EQ(x.values(), (Vector{{1.0, 2.0, 3.0, 4.0}}));
  EXPECT_EQ(encode_raw_tensor(x), bytes);
}

TEST(RawTensor, RoundTripIsBitExact) {
  std::mt19937_64 rng(8);
  std::normal_distribution<double> g;
  std::vector<double> v(6 * 4);
  for (double& p : v) p = g(rng) * 1e-300 + g(rng);
  v[3] = 0.1 + 0.2;
  const Signal x = grid_of(6, 4, v);
  const Signal y = decode_raw_tensor(encode_raw_tensor(x));
  EXPECT_EQ(y.geometry(), x.geometry());
  EXPECT_EQ(std::memcmp(y.values().data(), x.values().data(), v.size() * sizeof(double)), 0);
}

TEST(RawTensor, Errors) {
  std::string short_payload = tensor_header(1, {4});
  for (double v : {1.0, 2.0, 3.0}) short_payload.append(reinterpret_cast<const char*>(&v), 8);
  EXPECT_EQ(code_of([&] { decode_raw_tensor(short_payload); }), ErrorCode::TruncatedData);

  std::string bad = tensor_header(1, {1}) + std::string(8, '\0');
  bad[0] = 'X';
  EXPECT_EQ(code_of([&] { decode_raw_tensor(bad); }), ErrorCode::BadMagic);
  EXPECT_EQ(code_of([] { decode_raw_tensor("CAOL"); }), ErrorCode::BadMagic);

  EXPECT_EQ(code_of([] { decode_raw_tensor(tensor_header(2, {1ull << 40, 1ull << 40})); }),
            ErrorCode::DimensionOverflow);
  EXPECT_EQ(code_of([] { decode_raw_tensor(tensor_header(1, {~0ull})); }), ErrorCode::DimensionOverflow);
  EXPECT_EQ(code_of([] { decode_raw_tensor(tensor_header(3, {1})); }), ErrorCode::MalformedHeader);
  EXPECT_EQ(code_of([] { decode_raw_tensor(tensor_header(2, {4})); }), ErrorCode::TruncatedData);
}

TEST(RawTensor, MatrixRoundTrip) {
  const Matrix m = (Matrix(2, 3) << 1, 2, 3, 4, 5, 6).finished();
  EXPECT_EQ(decode_matrix(encode_matrix(m)), m);
}

TEST(Preprocess, MeanSubtractExample) {
  const Signal y = preprocess(Signal::line({1, 2, 3, 4}), {PreprocessStep::parse("mean_subtract")});
  EXPECT_EQ(y.values(), (Vector{{-1.5, -0.5, 0.5, 1.5}}));
}

TEST(Preprocess, MeanSubtractIsIdempotent) {
  std::mt19937_64 rng(4);
  for (int c = 0; c < 50; ++c) {
    const Signal x(oracle::gaussian(rng, 40, 1, 3.0).col(0).array() + 7.0, Geometry::line(40));
    const auto step = PreprocessStep::parse("mean_subtract");
    const Signal once = preprocess(x, {step});
    const Signal twice = preprocess(x, {step, step});
    EXPECT_LE(std::abs(once.values().mean()), 1e-12);
    EXPECT_LE((once.values() - twice.values()).cwiseAbs().maxCoeff(), 1e-12);
  }
}

TEST(Preprocess, StandardizeMoments) {
  std::mt19937_64 rng(5);
  for (int c = 0; c < 50; ++c) {
    const Vector v = oracle::gaussian(rng, 100, 1, 5.0).col(0).array() - 2.0;
    const Vector y = preprocess(Signal(v, Geometry::grid(10, 10)), {PreprocessStep::parse("standardize")}).values();
    const double mean = y.mean();
    const double var = (y.array() - mean).square().sum() / 99.0;
    EXPECT_LE(std::abs(mean), 1e-10);
    EXPECT_LE(std::abs(std::sqrt(var) - 1.0), 1e-10);
  }
}

TEST(Preprocess, StandardizeConstantWarns) {
  std::vector<std::string> warnings;
  const Signal x = Signal::line({2, 2, 2});
  const Signal y = preprocess(x, {PreprocessStep::parse("standardize")}, &warnings);
  EXPECT_EQ(warnings.size(), 1u);
  EXPECT_EQ(y.values(), x.values());
}

TEST(Preprocess, HighpassRemovesCyclicLocalMean) {
  const Signal x = Signal::line({0, 3, 0, 0, 6});
  const Vector y = preprocess(x, {PreprocessStep::parse("highpass", 1)}).values();
  // box means over {i-1, i, i+1} cyclically: (6+0+3)/3, 1, 1, 2, 2
  const Vector want{{0 - 3.0, 3 - 1.0, 0 - 1.0, 0 - 2.0, 6 - 2.0}};
  EXPECT_LE((y - want).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Preprocess, GeometryIsPreserved) {
  std::mt19937_64 rng(6);
  const Signal x(oracle::gaussian(rng, 12, 1, 1.0).col(0), Geometry::grid(3, 4));
  const std::vector<PreprocessStep> steps{PreprocessStep::parse("highpass", 1), PreprocessStep::parse("standardize"),
                                          PreprocessStep::parse("mean_subtract")};
  const Signal y = preprocess(x, steps);
  EXPECT_EQ(y.geometry(), x.geometry());
  EXPECT_EQ(y.size(), x.size());
}

TEST(Preprocess, UnknownStep) {
  EXPECT_EQ(code_of([] { PreprocessStep::parse("gamma_correct"); }), ErrorCode::UnknownStep);
  for (const char* name : {"mean_subtract", "standardize", "highpass"})
    EXPECT_EQ(PreprocessStep::parse(name).name(), name);
}

TEST(Patchify, DisjointTiling) {
  std::vector<double> v(16);
  for (std::size_t i = 0; i < 16; ++i) v[i] = static_cast<double>(i);
  const auto patches = patchify(grid_of(4, 4, v), 2, 2, 2);
  ASSERT_EQ(patches.size(), 4u);
  EXPECT_EQ(patches[0].values(), (Vector{{0, 1, 4, 5}}));
  EXPECT_EQ(patches[1].values(), (Vector{{2, 3, 6, 7}}));
  EXPECT_EQ(patches[2].values(), (Vector{{8, 9, 12, 13}}));
  EXPECT_EQ(patches[3].values(), (Vector{{10, 11, 14, 15}}));
  for (const Signal& p : patches) EXPECT_EQ(p.geometry(), Geometry::grid(2, 2));
}

TEST(Patchify, OverlappingStrideOne) {
  const auto patches = patchify(grid_of(3, 3, {1, 2, 3, 4, 5, 6, 7, 8, 9}), 2, 2, 1);
  ASSERT_EQ(patches.size(), 4u);
  EXPECT_EQ(patches[3].values(), (Vector{{5, 6, 8, 9}}));
}

TEST(Patchify, DisjointPatchesPermuteTheImage) {
  std::mt19937_64 rng(7);
  for (int c = 0; c < 20; ++c) {
    const Matrix img = oracle::gaussian(rng, 6 * 8, 1, 1.0);
    std::vector<double> pixels(img.data(), img.data() + img.size());
    std::vector<double> gathered;
    for (const Signal& p : patchify(grid_of(6, 8, pixels), 2, 2, 2))
      gathered.insert(gathered.end(), p.values().begin(), p.values().end());
    std::sort(pixels.begin(), pixels.end());
    std::sort(gathered.begin(), gathered.end());
    EXPECT_EQ(gathered, pixels);
  }
}

TEST(Patchify, Errors) {
  const Signal img = grid_of(2, 3, {1, 2, 3, 4, 5, 6});
  EXPECT_EQ(code_of([&] { patchify(img, 3, 1, 1); }), ErrorCode::PatchTooLarge);
  EXPECT_EQ(code_of([&] { patchify(img, 1, 4, 1); }), ErrorCode::PatchTooLarge);
  EXPECT_EQ(code_of([&] { patchify(img, 1, 1, 0); }), ErrorCode::InvalidArgument);
  EXPECT_EQ(code_of([] { patchify(Signal::line({1, 2}), 1, 1, 1); }), ErrorCode::InvalidArgument);
}

TEST(Crc, KnownVector) { EXPECT_EQ(crc32_of("123456789"), 0xCBF43926u); }

TEST_F(TempDir, ManifestRoundTripAndLoad) {
  const Signal a = grid_of(4, 4, {0, 1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12, 13, 14, 15});
  write_pgm(dir_ / "a.pgm", a);
  const Signal b = Signal::line({1, 2, 3, 5});
  write_raw_tensor(dir_ / "b.tnsr", b);

  DatasetManifest m;
  m.source = "unit";
  char buf[32];
  std::snprintf(buf, sizeof buf, "crc32:%08x", crc32_of_file(dir_ / "a.pgm"));
  m.entries.push_back({"a.pgm", a.geometry(), buf});
  std::snprintf(buf, sizeof buf, "crc32:%08x", crc32_of_file(dir_ / "b.tnsr"));
  m.entries.push_back({"b.tnsr", b.geometry(), buf});
  m.preprocessing = {PreprocessStep::parse("mean_subtract")};
  write_manifest(dir_ / "manifest.json", m);

  const DatasetManifest back = load_manifest(dir_ / "manifest.json");
  ASSERT_EQ(back.entries.size(), 2u);
  EXPECT_EQ(back.entries[1].checksum, m.entries[1].checksum);
  EXPECT_EQ(back.source, "unit");
  const auto xs = load_dataset(back);
  ASSERT_EQ(xs.size(), 2u);
  EXPECT_EQ(xs[0].geometry(), a.geometry());
  EXPECT_LE(std::abs(xs[1].values().mean()), 1e-12);
  EXPECT_EQ(xs[1].values(), (Vector{{-1.75, -0.75, 0.25, 2.25}}));
}

TEST_F(TempDir, ChecksumDetectsEverySingleByteCorruption) {
  const Signal a = grid_of(2, 3, {1, 2, 3, 4, 5, 6});
  write_pgm(dir_ / "a.pgm", a);
  const std::string original = read_bytes(dir_ / "a.pgm");
  char buf[32];
  std::snprintf(buf, sizeof buf, "crc32:%08x", crc32_of(original));
  DatasetManifest m;
  m.entries.push_back({"a.pgm", a.geometry(), buf});
  m.base_dir = dir_;
  EXPECT_NO_THROW(load_dataset(m));
  for (std::size_t i = 0; i < original.size(); ++i) {
    for (int flip : {0x01, 0x80}) {
      std::string bytes = original;
      bytes[i] = static_cast<char>(bytes[i] ^ flip);
      write_bytes(dir_ / "a.pgm", bytes);
      EXPECT_EQ(code_of([&] { load_dataset(m); }), ErrorCode::ChecksumMismatch) << "byte " << i;
    }
  }
}

TEST_F(TempDir, ManifestErrors) {
  write_bytes(dir_ / "empty.json", R"({"source": "x", "entries": [], "preprocessing": []})");
  EXPECT_EQ(code_of([&] { load_manifest(dir_ / "empty.json"); }), ErrorCode::EmptyDataset);
  write_bytes(dir_ / "junk.json", "{not json");
  EXPECT_EQ(code_of([&] { load_manifest(dir_ / "junk.json"); }), ErrorCode::MalformedHeader);

  const Signal a = grid_of(2, 2, {1, 2, 3, 4});
  write_pgm(dir_ / "a.pgm", a);
  char buf[32];
  std::snprintf(buf, sizeof buf, "crc32:%08x", crc32_of_file(dir_ / "a.pgm"));
  DatasetManifest m;
  m.entries.push_back({"a.pgm", Geometry::grid(4, 1), buf});
  m.base_dir = dir_;
  EXPECT_EQ(code_of([&] { load_dataset(m); }), ErrorCode::DimensionMismatch);
}

TEST_F(TempDir, PatchesWithCap) {
  std::vector<double> v(36);
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = static_cast<double>(i % 7);
  const Signal a = grid_of(6, 6, v);
  write_pgm(dir_ / "a.pgm", a);
  char buf[32];
  std::snprintf(buf, sizeof buf, "crc32:%08x", crc32_of_file(dir_ / "a.pgm"));
  DatasetManifest m;
  m.entries.push_back({"a.pgm", a.geometry(), buf});
  m.base_dir = dir_;
  m.patches = PatchSpec{3, 3, 1, 5};
  const auto xs = load_dataset(m);
  ASSERT_EQ(xs.size(), 5u);
  EXPECT_EQ(xs[4].values(), patchify(a, 3, 3, 1)[4].values());
}
