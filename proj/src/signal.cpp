#include "caol/signal.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "caol/errors.hpp"

namespace caol {

namespace {

constexpr const char* kModule = "conv-operator";

long wrap(long i, long n) {
  const long m = i % n;
  return m < 0 ? m + n : m;
}

}  // namespace

Signal::Signal(Vector values, Geometry geometry)
    : values_(std::move(values)), geometry_(geometry) {
  if (values_.size() == 0)
    throw Error(ErrorCode::InvalidArgument, kModule, "signal must have at least one value");
  if (geometry_.height == 0 || geometry_.width == 0)
    throw Error(ErrorCode::InvalidArgument, kModule, "signal geometry has a zero extent");
  if (static_cast<std::size_t>(values_.size()) != geometry_.size())
    throw Error(ErrorCode::DimensionMismatch, kModule,
                "signal has " + std::to_string(values_.size()) + " values but geometry holds " +
                    std::to_string(geometry_.size()));
  if (!values_.allFinite())
    throw Error(ErrorCode::InvalidArgument, kModule, "signal values must be finite");
}

Signal Signal::line(std::vector<double> values) {
  const auto n = values.size();
  Vector v = Eigen::Map<const Vector>(values.data(), static_cast<Eigen::Index>(n));
  return Signal(std::move(v), Geometry::line(n));
}

OffsetPattern::OffsetPattern(std::vector<Shift> offsets) : offsets_(std::move(offsets)) {
  if (offsets_.empty())
    throw Error(ErrorCode::InvalidOffset, kModule, "offset pattern must be non-empty");
  for (std::size_t i = 0; i < offsets_.size(); ++i)
    for (std::size_t j = i + 1; j < offsets_.size(); ++j)
      if (offsets_[i] == offsets_[j])
        throw Error(ErrorCode::InvalidOffset, kModule, "offset pattern has repeated offsets");
}

OffsetPattern OffsetPattern::line(std::size_t r) {
  std::vector<Shift> offsets(r);
  for (std::size_t i = 0; i < r; ++i) offsets[i] = {0, static_cast<long>(i)};
  return OffsetPattern(std::move(offsets));
}

OffsetPattern OffsetPattern::window(std::size_t h, std::size_t w) {
  std::vector<Shift> offsets;
  offsets.reserve(h * w);
  for (std::size_t dy = 0; dy < h; ++dy)
    for (std::size_t dx = 0; dx < w; ++dx)
      offsets.push_back({static_cast<long>(dy), static_cast<long>(dx)});
  return OffsetPattern(std::move(offsets));
}

void OffsetPattern::check(const Geometry& geometry) const {
  const long h = static_cast<long>(geometry.height);
  const long w = static_cast<long>(geometry.width);
  for (const Shift& s : offsets_) {
    const bool ok = geometry.is_grid() ? (s.row >= 0 && s.row < h && s.col >= 0 && s.col < w)
                                       : (s.row == 0 && s.col >= 0 && s.col < w);
    if (!ok)
      throw Error(ErrorCode::InvalidOffset, kModule,
                  "offset (" + std::to_string(s.row) + ", " + std::to_string(s.col) +
                      ") out of range for geometry " + std::to_string(geometry.height) + "x" +
                      std::to_string(geometry.width));
  }
}

Signal cyclic_shift(const Signal& x, Shift offset) {
  const Geometry& g = x.geometry();
  const long h = static_cast<long>(g.height);
  const long w = static_cast<long>(g.width);
  if (g.is_grid()) {
    if (offset.row < 0 || offset.row >= h || offset.col < 0 || offset.col >= w)
      throw Error(ErrorCode::InvalidOffset, kModule,
                  "grid offset (" + std::to_string(offset.row) + ", " +
                      std::to_string(offset.col) + ") outside [0," + std::to_string(h) +
                      ") x [0," + std::to_string(w) + ")");
  } else if (offset.row != 0) {
    throw Error(ErrorCode::InvalidOffset, kModule, "line signals only shift along columns");
  }

  const Vector& v = x.values();
  Vector out(v.size());
  if (g.is_grid()) {
    for (long i = 0; i < h; ++i) {
      const long src_row = (i + offset.row) % h;
      for (long j = 0; j < w; ++j) out(i * w + j) = v(src_row * w + (j + offset.col) % w);
    }
  } else {
    const long s = wrap(offset.col, w);
    // rotate left by s
    std::copy(v.data() + s, v.data() + w, out.data());
    std::copy(v.data(), v.data() + s, out.data() + (w - s));
  }
  return Signal(std::move(out), g);
}

Signal cyclic_shift(const Signal& x, long offset) { return cyclic_shift(x, Shift{0, offset}); }

}  // namespace caol
