#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include <Eigen/Dense>

namespace caol {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// Shape of a sample. Grid samples are stored row-major: index = row * width + col.
struct Geometry {
  enum class Kind { Line, Grid };

  Kind kind = Kind::Line;
  std::size_t height = 1;
  std::size_t width = 0;

  static Geometry line(std::size_t n) { return {Kind::Line, 1, n}; }
  static Geometry grid(std::size_t h, std::size_t w) { return {Kind::Grid, h, w}; }

  std::size_t size() const noexcept { return height * width; }
  bool is_grid() const noexcept { return kind == Kind::Grid; }

  bool operator==(const Geometry&) const = default;
};

/// A real training sample with its geometry. Immutable once built.
class Signal {
 public:
  /// Throws DimensionMismatch if values.size() != geometry.size(), and
  /// InvalidArgument for empty or non-finite input.
  Signal(Vector values, Geometry geometry);

  static Signal line(std::vector<double> values);

  const Vector& values() const noexcept { return values_; }
  const Geometry& geometry() const noexcept { return geometry_; }
  std::size_t size() const noexcept { return static_cast<std::size_t>(values_.size()); }
  double norm() const { return values_.norm(); }

 private:
  Vector values_;
  Geometry geometry_;
};

/// One cyclic displacement. Line signals use `col` only.
struct Shift {
  long row = 0;
  long col = 0;

  bool operator==(const Shift&) const = default;
};

/// Ordered, distinct set of R shifts; column r of a lifted operator is the
/// sample displaced by offsets()[r].
class OffsetPattern {
 public:
  explicit OffsetPattern(std::vector<Shift> offsets);

  /// (0, 1, ..., r-1) for Line samples.
  static OffsetPattern line(std::size_t r);
  /// Row-major h x w window of (row, col) displacements for Grid samples.
  static OffsetPattern window(std::size_t h, std::size_t w);

  std::size_t size() const noexcept { return offsets_.size(); }
  const std::vector<Shift>& offsets() const noexcept { return offsets_; }
  const Shift& operator[](std::size_t r) const { return offsets_[r]; }

  /// Throws InvalidOffset unless every offset lies in [0, N) (Line) or
  /// [0, H) x [0, W) (Grid).
  void check(const Geometry& geometry) const;

  bool operator==(const OffsetPattern&) const = default;

 private:
  std::vector<Shift> offsets_;
};

/// y_i = x_{(i + offset) mod N}, applied per axis for Grid samples.
/// Line offsets may be any integer; Grid offsets must lie in [0, H) x [0, W).
Signal cyclic_shift(const Signal& x, Shift offset);
Signal cyclic_shift(const Signal& x, long offset);

}  // namespace caol
