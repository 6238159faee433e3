#pragma once

#include <Eigen/Core>

#include <array>
#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace stemfit {

using Index = Eigen::Index;

// Row-major dense matrix; the storage order of every image and filter so that
// vectorization is a plain reinterpretation of the buffer.
template <typename Scalar>
using RowMatrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Base class of every error raised by the library.
class Error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Shape disagreement between operands, or an index outside a valid range.
class DimensionError : public Error {
public:
  using Error::Error;
};

/// Malformed or truncated file, or unreadable table.
class FormatError : public Error {
public:
  using Error::Error;
};

/// Non-finite value encountered, or a quantity that is mathematically undefined.
class NumericalError : public Error {
public:
  using Error::Error;
};

/// Invalid configuration or parameter combination.
class ConfigError : public Error {
public:
  using Error::Error;
};

/// Half-open rectangle [row_begin, row_end) x [col_begin, col_end) of scan positions.
struct ScanRegion {
  Index row_begin = 0;
  Index row_end = 0;
  Index col_begin = 0;
  Index col_end = 0;

  Index rows() const { return row_end - row_begin; }
  Index cols() const { return col_end - col_begin; }
  Index size() const { return rows() * cols(); }
  bool empty() const { return rows() <= 0 || cols() <= 0; }

  bool contains(Index i, Index j) const {
    return i >= row_begin && i < row_end && j >= col_begin && j < col_end;
  }

  static ScanRegion full(Index rows, Index cols) { return {0, rows, 0, cols}; }

  friend bool operator==(const ScanRegion&, const ScanRegion&) = default;
};

/// Throws DimensionError unless the region is non-empty and lies inside rows x cols.
void check_region(const ScanRegion& region, Index rows, Index cols);

/// 4D intensity tensor D(i, j, k, l): scan dims I x J, detector dims K x L.
///
/// Stored row-major in (i, j, k, l) so that one diffraction frame is contiguous.
/// Values are kept in single precision, which is also the on-disk precision.
class Dataset4D {
public:
  Dataset4D() = default;

  /// Zero-filled tensor.
  Dataset4D(Index scan_rows, Index scan_cols, Index det_rows, Index det_cols);

  /// Takes ownership of `values`; validates the element count and that every
  /// intensity is finite and non-negative.
  Dataset4D(Index scan_rows, Index scan_cols, Index det_rows, Index det_cols,
            std::vector<float> values);

  Index scan_rows() const { return dims_[0]; }
  Index scan_cols() const { return dims_[1]; }
  Index det_rows() const { return dims_[2]; }
  Index det_cols() const { return dims_[3]; }
  Index frame_size() const { return dims_[2] * dims_[3]; }
  Index scan_size() const { return dims_[0] * dims_[1]; }
  std::array<Index, 4> dims() const { return dims_; }

  float operator()(Index i, Index j, Index k, Index l) const {
    return values_[static_cast<std::size_t>(((i * dims_[1] + j) * dims_[2] + k) * dims_[3] + l)];
  }
  float& operator()(Index i, Index j, Index k, Index l) {
    return values_[static_cast<std::size_t>(((i * dims_[1] + j) * dims_[2] + k) * dims_[3] + l)];
  }

  /// Contiguous K*L frame recorded at scan position (i, j).
  Eigen::Map<const Eigen::VectorXf> frame(Index i, Index j) const {
    return {values_.data() + (i * dims_[1] + j) * frame_size(), frame_size()};
  }
  Eigen::Map<Eigen::VectorXf> frame(Index i, Index j) {
    return {values_.data() + (i * dims_[1] + j) * frame_size(), frame_size()};
  }

  const std::vector<float>& values() const { return values_; }

  /// Checks finiteness and non-negativity; throws NumericalError otherwise.
  void validate() const;

private:
  std::array<Index, 4> dims_{0, 0, 0, 0};
  std::vector<float> values_;
};

/// Real-space image A(i, j).
struct RealImage {
  RowMatrix<double> values;

  RealImage() = default;
  explicit RealImage(RowMatrix<double> v) : values(std::move(v)) {}
  RealImage(Index rows, Index cols) : values(RowMatrix<double>::Zero(rows, cols)) {}

  Index rows() const { return values.rows(); }
  Index cols() const { return values.cols(); }
  double operator()(Index i, Index j) const { return values(i, j); }
  double& operator()(Index i, Index j) { return values(i, j); }
};

enum class FilterGeometry : std::uint8_t { pixelated, masked, segmented_expanded };

const char* to_string(FilterGeometry g);

/// Detector-plane weights F(k, l).
struct FilterImage {
  RowMatrix<double> weights;
  FilterGeometry geometry = FilterGeometry::pixelated;

  FilterImage() = default;
  FilterImage(Index rows, Index cols, FilterGeometry g = FilterGeometry::pixelated)
      : weights(RowMatrix<double>::Zero(rows, cols)), geometry(g) {}
  explicit FilterImage(RowMatrix<double> w, FilterGeometry g = FilterGeometry::pixelated)
      : weights(std::move(w)), geometry(g) {}

  Index rows() const { return weights.rows(); }
  Index cols() const { return weights.cols(); }
};

enum class CovariateKind : std::uint8_t { pixel, segment };

/// n x p covariate matrix. Column j holds covariate column_map[j]: a flat
/// detector pixel index (k * L + l) for pixel kinds, a segment id otherwise.
///
/// Stored column-major because the solver walks columns. The storage scalar
/// is a template parameter so paper-scale designs can be held in single
/// precision; solver arithmetic is always double.
template <typename Scalar>
struct BasicDesignMatrix {
  using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

  Matrix values;
  std::vector<Index> column_map;
  CovariateKind kind = CovariateKind::pixel;
  Index det_rows = 0;
  Index det_cols = 0;
  ScanRegion region;

  Index n() const { return values.rows(); }
  Index p() const { return values.cols(); }
};

using DesignMatrix = BasicDesignMatrix<double>;
using DesignMatrixF = BasicDesignMatrix<float>;

}  // namespace stemfit
