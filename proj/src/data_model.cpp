#include "stemfit/data_model.hpp"

#include "parallel.hpp"

#include <type_traits>

namespace stemfit {

namespace {

void check_geometry(const DetectorGeometry& geometry, Index K, Index L) {
  if (const auto* mask = std::get_if<DetectorMask>(&geometry)) {
    if (mask->rows != K || mask->cols != L) throw DimensionError("mask dims differ from detector dims");
    if (mask->active_count() == 0) throw ConfigError("mask has no active pixels");
  } else if (const auto* seg = std::get_if<SegmentMap>(&geometry)) {
    if (seg->rows != K || seg->cols != L) throw DimensionError("segment map dims differ from detector dims");
  }
}

}  // namespace

template <typename Scalar>
BasicDesignMatrix<Scalar> assemble_design(const Dataset4D& data, const ScanRegion& region,
                                          const DetectorGeometry& geometry, int workers) {
  check_region(region, data.scan_rows(), data.scan_cols());
  const Index K = data.det_rows();
  const Index L = data.det_cols();
  check_geometry(geometry, K, L);

  BasicDesignMatrix<Scalar> X;
  X.det_rows = K;
  X.det_cols = L;
  X.region = region;
  const Index n = region.size();
  const Index rcols = region.cols();

  if (const auto* seg = std::get_if<SegmentMap>(&geometry)) {
    // Same accumulation order as reduce_to_segments on the pixel design.
    const int M = seg->segment_count();
    X.kind = CovariateKind::segment;
    X.column_map.resize(static_cast<std::size_t>(M));
    for (int m = 0; m < M; ++m) X.column_map[static_cast<std::size_t>(m)] = m;
    X.values.resize(n, M);
    detail::parallel_chunks(n, workers, [&](Index begin, Index end) {
      std::vector<double> acc(static_cast<std::size_t>(M));
      for (Index r = begin; r < end; ++r) {
        std::fill(acc.begin(), acc.end(), 0.0);
        const auto frame = data.frame(region.row_begin + r / rcols, region.col_begin + r % rcols);
        for (Index q = 0; q < K * L; ++q) {
          const int label = seg->labels[static_cast<std::size_t>(q)];
          if (label >= 0) acc[static_cast<std::size_t>(label)] += static_cast<double>(frame[q]);
        }
        for (int m = 0; m < M; ++m) X.values(r, m) = static_cast<Scalar>(acc[static_cast<std::size_t>(m)]);
      }
    });
    return X;
  }

  X.kind = CovariateKind::pixel;
  if (const auto* mask = std::get_if<DetectorMask>(&geometry)) {
    for (Index q = 0; q < K * L; ++q)
      if (mask->active[static_cast<std::size_t>(q)] != 0) X.column_map.push_back(q);
  } else {
    X.column_map.resize(static_cast<std::size_t>(K * L));
    for (Index q = 0; q < K * L; ++q) X.column_map[static_cast<std::size_t>(q)] = q;
  }
  const auto p = static_cast<Index>(X.column_map.size());
  X.values.resize(n, p);
  const bool identity = p == K * L;
  detail::parallel_chunks(n, workers, [&](Index begin, Index end) {
    for (Index r = begin; r < end; ++r) {
      const auto frame = data.frame(region.row_begin + r / rcols, region.col_begin + r % rcols);
      if (identity) {
        X.values.row(r) = frame.transpose().template cast<Scalar>();
      } else {
        for (Index c = 0; c < p; ++c)
          X.values(r, c) = static_cast<Scalar>(frame[X.column_map[static_cast<std::size_t>(c)]]);
      }
    }
  });
  return X;
}

template BasicDesignMatrix<double> assemble_design(const Dataset4D&, const ScanRegion&, const DetectorGeometry&, int);
template BasicDesignMatrix<float> assemble_design(const Dataset4D&, const ScanRegion&, const DetectorGeometry&, int);

RealImage apply_filter(const Dataset4D& data, const FilterImage& filter, const ScanRegion& region, int workers) {
  if (filter.rows() != data.det_rows() || filter.cols() != data.det_cols())
    throw DimensionError("filter dims differ from detector dims");
  check_region(region, data.scan_rows(), data.scan_cols());
  RealImage out(region.rows(), region.cols());
  const Index KL = data.frame_size();
  const double* w = filter.weights.data();
  detail::parallel_chunks(region.rows(), workers, [&](Index begin, Index end) {
    for (Index r = begin; r < end; ++r)
      for (Index c = 0; c < region.cols(); ++c) {
        const auto frame = data.frame(region.row_begin + r, region.col_begin + c);
        double acc = 0.0;
        for (Index q = 0; q < KL; ++q) acc += static_cast<double>(frame[q]) * w[q];
        out(r, c) = acc;
      }
  });
  return out;
}

RealImage apply_filter(const Dataset4D& data, const FilterImage& filter, int workers) {
  return apply_filter(data, filter, ScanRegion::full(data.scan_rows(), data.scan_cols()), workers);
}

Eigen::VectorXd vectorize(const RealImage& image) {
  return Eigen::Map<const Eigen::VectorXd>(image.values.data(), image.values.size());
}

RealImage devectorize(const Eigen::Ref<const Eigen::VectorXd>& values, Index rows, Index cols) {
  if (rows <= 0 || cols <= 0 || values.size() != rows * cols)
    throw DimensionError("vector length does not match image dims");
  RealImage out(rows, cols);
  Eigen::Map<Eigen::VectorXd>(out.values.data(), out.values.size()) = values;
  return out;
}

RealImage crop(const RealImage& image, const ScanRegion& region) {
  check_region(region, image.rows(), image.cols());
  return RealImage(RowMatrix<double>(
      image.values.block(region.row_begin, region.col_begin, region.rows(), region.cols())));
}

template <typename Scalar>
FilterImage expand_weights(const BasicDesignMatrix<Scalar>& design, const Eigen::Ref<const Eigen::VectorXd>& weights,
                           const SegmentMap* segments) {
  if (weights.size() != design.p()) throw DimensionError("weight count differs from design columns");
  if (design.kind == CovariateKind::segment) {
    if (segments == nullptr) throw ConfigError("segment design needs its segment map to expand weights");
    return expand_segment_filter(weights, *segments);
  }
  const bool full = design.p() == design.det_rows * design.det_cols;
  FilterImage f(design.det_rows, design.det_cols, full ? FilterGeometry::pixelated : FilterGeometry::masked);
  double* out = f.weights.data();
  for (Index c = 0; c < design.p(); ++c) out[design.column_map[static_cast<std::size_t>(c)]] = weights[c];
  return f;
}

template FilterImage expand_weights(const BasicDesignMatrix<double>&, const Eigen::Ref<const Eigen::VectorXd>&,
                                    const SegmentMap*);
template FilterImage expand_weights(const BasicDesignMatrix<float>&, const Eigen::Ref<const Eigen::VectorXd>&,
                                    const SegmentMap*);

}  // namespace stemfit
