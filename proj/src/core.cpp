#include "stemfit/core.hpp"

#include <cmath>
#include <limits>
#include <string>

namespace stemfit {

void check_region(const ScanRegion& region, Index rows, Index cols) {
  if (region.empty()) throw DimensionError("scan region is empty");
  if (region.row_begin < 0 || region.col_begin < 0 || region.row_end > rows || region.col_end > cols) {
    throw DimensionError("scan region [" + std::to_string(region.row_begin) + "," +
                         std::to_string(region.row_end) + ")x[" + std::to_string(region.col_begin) + "," +
                         std::to_string(region.col_end) + ") exceeds scan dims " + std::to_string(rows) +
                         "x" + std::to_string(cols));
  }
}

namespace {

std::size_t checked_count(Index a, Index b, Index c, Index d) {
  if (a <= 0 || b <= 0 || c <= 0 || d <= 0) throw DimensionError("dataset dims must be positive");
  const auto limit = static_cast<unsigned long long>(std::numeric_limits<std::ptrdiff_t>::max());
  unsigned long long total = 1;
  for (const Index v : {a, b, c, d}) {
    const auto u = static_cast<unsigned long long>(v);
    if (total > limit / u) throw DimensionError("dataset dims overflow");
    total *= u;
  }
  return static_cast<std::size_t>(total);
}

}  // namespace

Dataset4D::Dataset4D(Index scan_rows, Index scan_cols, Index det_rows, Index det_cols)
    : dims_{scan_rows, scan_cols, det_rows, det_cols},
      values_(checked_count(scan_rows, scan_cols, det_rows, det_cols), 0.0f) {}

Dataset4D::Dataset4D(Index scan_rows, Index scan_cols, Index det_rows, Index det_cols,
                     std::vector<float> values)
    : dims_{scan_rows, scan_cols, det_rows, det_cols}, values_(std::move(values)) {
  if (values_.size() != checked_count(scan_rows, scan_cols, det_rows, det_cols))
    throw DimensionError("dataset element count does not match dims");
  validate();
}

void Dataset4D::validate() const {
  for (const float v : values_) {
    if (!std::isfinite(v)) throw NumericalError("dataset contains a non-finite intensity");
    if (v < 0.0f) throw NumericalError("dataset contains a negative intensity");
  }
}

const char* to_string(FilterGeometry g) {
  switch (g) {
    case FilterGeometry::pixelated: return "pixelated";
    case FilterGeometry::masked: return "masked";
    case FilterGeometry::segmented_expanded: return "segmented-expanded";
  }
  return "unknown";
}

}  // namespace stemfit
