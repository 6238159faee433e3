#include "stemfit/detector.hpp"

#include "stemfit/io.hpp"

#include <cmath>
#include <numbers>
#include <sstream>
#include <string>

namespace stemfit {

void check_disk(const BFDisk& disk, Index det_rows, Index det_cols) {
  if (!(disk.center_row >= 0.0 && disk.center_row < static_cast<double>(det_rows) &&
        disk.center_col >= 0.0 && disk.center_col < static_cast<double>(det_cols)))
    throw ConfigError("bright-field disk center lies outside the detector");
  if (!(disk.radius > 0.0 && disk.radius <= static_cast<double>(std::max(det_rows, det_cols))))
    throw ConfigError("bright-field disk radius must lie in (0, max(K, L)]");
}

Index DetectorMask::active_count() const {
  Index c = 0;
  for (const auto f : active) c += f != 0 ? 1 : 0;
  return c;
}

std::vector<Index> SegmentMap::pixel_counts() const {
  std::vector<Index> counts(static_cast<std::size_t>(segment_count()), 0);
  for (const int label : labels)
    if (label >= 0) ++counts[static_cast<std::size_t>(label)];
  return counts;
}

BFDisk estimate_bf_disk(const RowMatrix<double>& mean_frame, const DiskOverrides& overrides) {
  const Index K = mean_frame.rows();
  const Index L = mean_frame.cols();
  if (K == 0 || L == 0) throw DimensionError("empty detector frame");
  const double total = mean_frame.sum();
  if (!(total > 0.0)) throw NumericalError("mean diffraction pattern is zero; cannot locate the bright-field disk");

  double sk = 0.0;
  double sl = 0.0;
  for (Index k = 0; k < K; ++k)
    for (Index l = 0; l < L; ++l) {
      sk += static_cast<double>(k) * mean_frame(k, l);
      sl += static_cast<double>(l) * mean_frame(k, l);
    }
  BFDisk disk;
  disk.center_row = overrides.center_row.value_or(sk / total);
  disk.center_col = overrides.center_col.value_or(sl / total);

  if (overrides.radius) {
    disk.radius = *overrides.radius;
    check_disk(disk, K, L);
    return disk;
  }

  // Azimuthal average in unit-width bins centred on integer radii.
  const double max_dist = std::hypot(static_cast<double>(K), static_cast<double>(L));
  const auto nbins = static_cast<std::size_t>(max_dist) + 2;
  std::vector<double> sum(nbins, 0.0);
  std::vector<Index> count(nbins, 0);
  for (Index k = 0; k < K; ++k)
    for (Index l = 0; l < L; ++l) {
      const double d = std::hypot(static_cast<double>(k) - disk.center_row,
                                  static_cast<double>(l) - disk.center_col);
      const auto b = static_cast<std::size_t>(std::floor(d + 0.5));
      sum[b] += mean_frame(k, l);
      ++count[b];
    }

  const double plateau_edge = 0.2 * static_cast<double>(std::min(K, L)) / 2.0;
  double plateau = 0.0;
  Index plateau_bins = 0;
  for (std::size_t b = 0; b < nbins && static_cast<double>(b) <= plateau_edge; ++b) {
    if (count[b] == 0) continue;
    plateau += sum[b] / static_cast<double>(count[b]);
    ++plateau_bins;
  }
  if (plateau_bins == 0 || !(plateau > 0.0))
    throw NumericalError("no intensity near the pattern centroid; cannot estimate the disk radius");
  plateau /= static_cast<double>(plateau_bins);

  std::size_t radius = nbins - 1;
  for (std::size_t b = 0; b < nbins; ++b) {
    if (count[b] == 0) continue;
    if (sum[b] / static_cast<double>(count[b]) < 0.5 * plateau) {
      radius = b;
      break;
    }
  }
  disk.radius = std::max(1.0, static_cast<double>(radius));
  check_disk(disk, K, L);
  return disk;
}

BFDisk estimate_bf_disk(const Dataset4D& data, const DiskOverrides& overrides) {
  RowMatrix<double> mean = RowMatrix<double>::Zero(data.det_rows(), data.det_cols());
  Eigen::Map<Eigen::VectorXd> flat(mean.data(), mean.size());
  for (Index i = 0; i < data.scan_rows(); ++i)
    for (Index j = 0; j < data.scan_cols(); ++j) flat += data.frame(i, j).cast<double>();
  mean /= static_cast<double>(data.scan_size());
  return estimate_bf_disk(mean, overrides);
}

DetectorMask mask_from_disk(const BFDisk& disk, Index det_rows, Index det_cols, MaskKeep keep) {
  check_disk(disk, det_rows, det_cols);
  DetectorMask mask{det_rows, det_cols, std::vector<std::uint8_t>(static_cast<std::size_t>(det_rows * det_cols))};
  const bool exterior = keep == MaskKeep::exterior;
  for (Index k = 0; k < det_rows; ++k)
    for (Index l = 0; l < det_cols; ++l)
      mask.active[static_cast<std::size_t>(k * det_cols + l)] = (disk.contains(k, l) != exterior) ? 1 : 0;
  if (mask.active_count() == 0) throw ConfigError("detector mask has no active pixels");
  return mask;
}

SegmentMap build_segment_map(const BFDisk& disk, Index det_rows, Index det_cols, int rings, int sectors) {
  check_disk(disk, det_rows, det_cols);
  if (rings < 1 || sectors < 1) throw ConfigError("segment map needs at least one ring and one sector");
  SegmentMap seg;
  seg.rows = det_rows;
  seg.cols = det_cols;
  seg.rings = rings;
  seg.sectors = sectors;
  seg.disk = disk;
  seg.labels.assign(static_cast<std::size_t>(det_rows * det_cols), -1);

  constexpr double two_pi = 2.0 * std::numbers::pi;
  for (Index k = 0; k < det_rows; ++k)
    for (Index l = 0; l < det_cols; ++l) {
      if (!disk.contains(k, l)) continue;
      const double dk = static_cast<double>(k) - disk.center_row;
      const double dl = static_cast<double>(l) - disk.center_col;
      const double d = std::hypot(dk, dl);
      double angle = std::atan2(dl, dk);
      if (angle < 0.0) angle += two_pi;
      const int ring = std::min(rings - 1, static_cast<int>(std::floor(d / disk.radius * rings)));
      const int sector = std::min(sectors - 1, static_cast<int>(std::floor(angle / two_pi * sectors)));
      seg.labels[static_cast<std::size_t>(k * det_cols + l)] = ring * sectors + sector;
    }

  const auto counts = seg.pixel_counts();
  for (std::size_t m = 0; m < counts.size(); ++m)
    if (counts[m] == 0)
      throw ConfigError("segment " + std::to_string(m) + " of " + std::to_string(rings) + "x" +
                        std::to_string(sectors) + " map is empty; disk too small for this layout");
  return seg;
}

SegmentMap build_segment_map(const BFDisk& disk, Index det_rows, Index det_cols, int segments) {
  if (segments < 4 || segments % 4 != 0) throw ConfigError("segment count must be a positive multiple of 4");
  return build_segment_map(disk, det_rows, det_cols, segments / 4, 4);
}

template <typename Scalar>
BasicDesignMatrix<Scalar> reduce_to_segments(const BasicDesignMatrix<Scalar>& X, const SegmentMap& seg) {
  if (X.kind != CovariateKind::pixel) throw DimensionError("reduce_to_segments needs a pixel design");
  if (X.det_rows != seg.rows || X.det_cols != seg.cols)
    throw DimensionError("segment map dims differ from the design's detector dims");
  const int M = seg.segment_count();
  BasicDesignMatrix<Scalar> out;
  out.kind = CovariateKind::segment;
  out.det_rows = X.det_rows;
  out.det_cols = X.det_cols;
  out.region = X.region;
  out.column_map.resize(static_cast<std::size_t>(M));
  for (int m = 0; m < M; ++m) out.column_map[static_cast<std::size_t>(m)] = m;

  // Accumulate in double, pixel columns in ascending order.
  Eigen::MatrixXd acc = Eigen::MatrixXd::Zero(X.n(), M);
  for (Index c = 0; c < X.p(); ++c) {
    const Index pixel = X.column_map[static_cast<std::size_t>(c)];
    if (pixel < 0 || pixel >= seg.rows * seg.cols) throw DimensionError("design column maps outside the detector");
    const int label = seg.labels[static_cast<std::size_t>(pixel)];
    if (label < 0) continue;
    acc.col(label) += X.values.col(c).template cast<double>();
  }
  out.values = acc.cast<Scalar>();
  return out;
}

template BasicDesignMatrix<double> reduce_to_segments(const BasicDesignMatrix<double>&, const SegmentMap&);
template BasicDesignMatrix<float> reduce_to_segments(const BasicDesignMatrix<float>&, const SegmentMap&);

FilterImage expand_segment_filter(const Eigen::Ref<const Eigen::VectorXd>& weights, const SegmentMap& seg) {
  if (weights.size() != seg.segment_count())
    throw DimensionError("segment weight count differs from the segment map's M");
  FilterImage f(seg.rows, seg.cols, FilterGeometry::segmented_expanded);
  for (Index k = 0; k < seg.rows; ++k)
    for (Index l = 0; l < seg.cols; ++l) {
      const int label = seg(k, l);
      if (label >= 0) f.weights(k, l) = weights[label];
    }
  return f;
}

namespace {

template <typename Get>
std::string int_grid_csv(Index rows, Index cols, Get get) {
  std::ostringstream os;
  for (Index k = 0; k < rows; ++k) {
    for (Index l = 0; l < cols; ++l) {
      if (l > 0) os << ',';
      os << get(k, l);
    }
    os << '\n';
  }
  return os.str();
}

}  // namespace

void write_mask_csv(const DetectorMask& mask, const std::filesystem::path& path) {
  write_file_atomic(path, int_grid_csv(mask.rows, mask.cols, [&](Index k, Index l) { return mask(k, l) ? 1 : 0; }));
}

void write_segment_map_csv(const SegmentMap& seg, const std::filesystem::path& path) {
  write_file_atomic(path, int_grid_csv(seg.rows, seg.cols, [&](Index k, Index l) { return seg(k, l); }));
}

}  // namespace stemfit
