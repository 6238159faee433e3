#pragma once

#include "stemfit/core.hpp"
#include "stemfit/detector.hpp"

namespace stemfit {

/// Rows of the design follow the region in row-major order; columns follow
/// the geometry:
///  - pixelated: every detector pixel, column j is pixel j;
///  - masked: active pixels only, ascending pixel index;
///  - segmented: one column per segment (see reduce_to_segments).
///
/// `workers` splits the scan rows over threads; each row is produced by the
/// same sequential code, so the result does not depend on the worker count.
template <typename Scalar = double>
BasicDesignMatrix<Scalar> assemble_design(const Dataset4D& data, const ScanRegion& region,
                                          const DetectorGeometry& geometry, int workers = 1);

/// output(i, j) = sum_k sum_l D(i, j, k, l) * F(k, l) over `region`.
/// Per-position summation order is fixed (ascending k, then l).
RealImage apply_filter(const Dataset4D& data, const FilterImage& filter, const ScanRegion& region,
                       int workers = 1);

/// Whole-scan convenience overload.
RealImage apply_filter(const Dataset4D& data, const FilterImage& filter, int workers = 1);

/// Row-major flattening.
Eigen::VectorXd vectorize(const RealImage& image);
RealImage devectorize(const Eigen::Ref<const Eigen::VectorXd>& values, Index rows, Index cols);

/// Crops `image` to `region` (image coordinates).
RealImage crop(const RealImage& image, const ScanRegion& region);

/// Places per-covariate weights back onto the detector grid of the design.
/// Pixel covariates map one-to-one, segment covariates need the segment map.
template <typename Scalar>
FilterImage expand_weights(const BasicDesignMatrix<Scalar>& design,
                           const Eigen::Ref<const Eigen::VectorXd>& weights,
                           const SegmentMap* segments = nullptr);

/// Bytes needed to hold an n x p design in the given scalar.
constexpr double design_footprint_bytes(Index n, Index p, std::size_t scalar_bytes) {
  return static_cast<double>(n) * static_cast<double>(p) * static_cast<double>(scalar_bytes);
}

}  // namespace stemfit
