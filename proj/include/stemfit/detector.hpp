#pragma once

#include "stemfit/core.hpp"

#include <filesystem>
#include <optional>
#include <variant>

namespace stemfit {

/// Bright-field disk in detector pixel coordinates. Pixel (k, l) has its
/// center at the point (k, l).
struct BFDisk {
  double center_row = 0.0;
  double center_col = 0.0;
  double radius = 1.0;

  bool contains(Index k, Index l) const {
    const double dk = static_cast<double>(k) - center_row;
    const double dl = static_cast<double>(l) - center_col;
    return dk * dk + dl * dl <= radius * radius;
  }
};

/// Throws ConfigError unless the center lies in [0,K) x [0,L) and 0 < radius <= max(K, L).
void check_disk(const BFDisk& disk, Index det_rows, Index det_cols);

/// Active-pixel flags over the detector, row-major.
struct DetectorMask {
  Index rows = 0;
  Index cols = 0;
  std::vector<std::uint8_t> active;

  Index active_count() const;
  bool operator()(Index k, Index l) const { return active[static_cast<std::size_t>(k * cols + l)] != 0; }
};

/// Ring x sector labelling of the bright-field disk; -1 marks unlabelled pixels.
struct SegmentMap {
  Index rows = 0;
  Index cols = 0;
  std::vector<int> labels;
  int rings = 1;
  int sectors = 1;
  BFDisk disk;

  int segment_count() const { return rings * sectors; }
  int operator()(Index k, Index l) const { return labels[static_cast<std::size_t>(k * cols + l)]; }
  /// Number of pixels carrying each label 0..M-1.
  std::vector<Index> pixel_counts() const;
};

struct PixelatedGeometry {};

using DetectorGeometry = std::variant<PixelatedGeometry, DetectorMask, SegmentMap>;

enum class MaskKeep : std::uint8_t { interior, exterior };

/// Optional manual values that take precedence over the estimate.
struct DiskOverrides {
  std::optional<double> center_row;
  std::optional<double> center_col;
  std::optional<double> radius;
};

/// Bright-field disk of the scan-averaged diffraction pattern.
///
/// The center is the intensity centroid of the mean frame. The radius is the
/// smallest integer radius at which the azimuthally averaged profile (unit-width
/// bins around the center) drops below half of its plateau mean, the plateau
/// being radii 0 .. 0.2 * min(K, L) / 2.
BFDisk estimate_bf_disk(const Dataset4D& data, const DiskOverrides& overrides = {});

/// Same estimate for a single averaged frame (row-major K x L).
BFDisk estimate_bf_disk(const RowMatrix<double>& mean_frame, const DiskOverrides& overrides = {});

/// Pixel active iff inside-disk XOR (keep == exterior). Throws ConfigError when empty.
DetectorMask mask_from_disk(const BFDisk& disk, Index det_rows, Index det_cols, MaskKeep keep);

/// Partition of the disk interior into `rings` equal-width annuli times
/// `sectors` equal-angle sectors. Sector 0 starts on the +k axis and the angle
/// grows towards +l. Segment id = ring * sectors + sector.
/// Throws ConfigError if any segment ends up without pixels.
SegmentMap build_segment_map(const BFDisk& disk, Index det_rows, Index det_cols, int rings,
                             int sectors);

/// Default split used for the M-segment experiments: four azimuthal sectors
/// and M / 4 rings. Throws ConfigError unless M is a positive multiple of 4.
SegmentMap build_segment_map(const BFDisk& disk, Index det_rows, Index det_cols, int segments);

/// Sums pixel columns of `X` that share a segment label; unlabelled pixels are dropped.
/// Summation runs over pixel columns in ascending order.
template <typename Scalar>
BasicDesignMatrix<Scalar> reduce_to_segments(const BasicDesignMatrix<Scalar>& X, const SegmentMap& seg);

/// F(k, l) = weights[label(k, l)] on labelled pixels, 0 elsewhere.
FilterImage expand_segment_filter(const Eigen::Ref<const Eigen::VectorXd>& weights,
                                  const SegmentMap& seg);

void write_mask_csv(const DetectorMask& mask, const std::filesystem::path& path);
void write_segment_map_csv(const SegmentMap& seg, const std::filesystem::path& path);

}  // namespace stemfit
