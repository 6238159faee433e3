#include "stemfit/data_model.hpp"

#include "test_util.hpp"

#include <doctest.h>

using namespace stemfit;

namespace {

// Straight quadruple loop, accumulated in double.
RealImage brute_force_apply(const Dataset4D& d, const FilterImage& f) {
  RealImage out(d.scan_rows(), d.scan_cols());
  for (Index i = 0; i < d.scan_rows(); ++i)
    for (Index j = 0; j < d.scan_cols(); ++j) {
      double acc = 0.0;
      for (Index k = 0; k < d.det_rows(); ++k)
        for (Index l = 0; l < d.det_cols(); ++l) acc += static_cast<double>(d(i, j, k, l)) * f.weights(k, l);
      out(i, j) = acc;
    }
  return out;
}

}  // namespace

TEST_SUITE("data_model") {

TEST_CASE("design dimensions follow the region and the detector") {
  const Dataset4D d(20, 64, 4, 5);
  CHECK(assemble_design(d, ScanRegion{0, 17, 0, 64}, PixelatedGeometry{}).n() == 1088);
  CHECK(assemble_design(d, ScanRegion{0, 17, 0, 64}, PixelatedGeometry{}).p() == 20);
  CHECK(design_footprint_bytes(4096, 65536, 8) == 4096.0 * 65536.0 * 8.0);
}

TEST_CASE("a 1x1 region gives the vectorized frame as the only row") {
  const auto d = testutil::random_dataset(3, 4, 5, 6, 1);
  const auto X = assemble_design(d, ScanRegion{2, 3, 1, 2}, PixelatedGeometry{});
  REQUIRE(X.n() == 1);
  REQUIRE(X.p() == 30);
  for (Index q = 0; q < 30; ++q) CHECK(X.values(0, q) == static_cast<double>(d.frame(2, 1)[q]));
  CHECK(X.column_map[7] == 7);
  CHECK(X.kind == CovariateKind::pixel);
}

TEST_CASE("zero, delta and uniform filters") {
  const auto d = testutil::random_dataset(5, 7, 6, 4, 2);
  CHECK(apply_filter(d, FilterImage(6, 4)).values.isZero(0.0));

  FilterImage delta(6, 4);
  delta.weights(3, 2) = 1.0;
  const RealImage slice = apply_filter(d, delta);
  for (Index i = 0; i < 5; ++i)
    for (Index j = 0; j < 7; ++j) CHECK(slice(i, j) == static_cast<double>(d(i, j, 3, 2)));

  FilterImage ones(6, 4);
  ones.weights.setOnes();
  const RealImage total = apply_filter(d, ones);
  const RealImage oracle = brute_force_apply(d, ones);
  CHECK((total.values - oracle.values).cwiseAbs().maxCoeff() <= 1e-12 * oracle.values.cwiseAbs().maxCoeff());
}

TEST_CASE("apply_filter matches the brute-force sum and is linear") {
  const auto d = testutil::random_dataset(6, 5, 7, 8, 3);
  const auto f1 = testutil::random_filter(7, 8, 4);
  const auto f2 = testutil::random_filter(7, 8, 5);
  const RealImage a = apply_filter(d, f1);
  CHECK((a.values - brute_force_apply(d, f1).values).cwiseAbs().maxCoeff() <= 1e-12);

  FilterImage mix(RowMatrix<double>(2.5 * f1.weights - 0.75 * f2.weights));
  const RealImage lhs = apply_filter(d, mix);
  const RealImage rhs(RowMatrix<double>(2.5 * a.values - 0.75 * apply_filter(d, f2).values));
  CHECK((lhs.values - rhs.values).cwiseAbs().maxCoeff() <= 1e-11);
}

TEST_CASE("design times vectorized filter equals apply_filter over the region") {
  const auto d = testutil::random_dataset(9, 8, 5, 6, 6);
  const auto f = testutil::random_filter(5, 6, 7);
  const ScanRegion region{2, 7, 1, 6};
  const auto X = assemble_design(d, region, PixelatedGeometry{});
  const Eigen::VectorXd wvec = Eigen::Map<const Eigen::VectorXd>(f.weights.data(), f.weights.size());
  const Eigen::VectorXd lhs = X.values * wvec;
  const Eigen::VectorXd rhs = vectorize(apply_filter(d, f, region));
  CHECK((lhs - rhs).cwiseAbs().maxCoeff() <= 1e-12);
  CHECK(vectorize(crop(apply_filter(d, f), region)) == rhs);
}

TEST_CASE("masked and segmented designs") {
  const auto d = testutil::random_dataset(4, 6, 12, 12, 8);
  const BFDisk disk{5.5, 5.5, 4.0};
  const auto mask = mask_from_disk(disk, 12, 12, MaskKeep::interior);
  const auto full = ScanRegion::full(4, 6);
  const auto Xm = assemble_design(d, full, mask);
  const auto Xp = assemble_design(d, full, PixelatedGeometry{});
  REQUIRE(Xm.p() == mask.active_count());
  for (Index c = 0; c < Xm.p(); ++c) {
    const Index pixel = Xm.column_map[static_cast<std::size_t>(c)];
    CHECK(mask.active[static_cast<std::size_t>(pixel)] == 1);
    CHECK(Xm.values.col(c) == Xp.values.col(pixel));
  }

  const auto seg = build_segment_map(disk, 12, 12, 2, 4);
  const auto Xs = assemble_design(d, full, seg);
  const auto reduced = reduce_to_segments(Xp, seg);
  CHECK(Xs.kind == CovariateKind::segment);
  CHECK(Xs.values == reduced.values);
}

TEST_CASE("design assembly does not depend on the worker count") {
  const auto d = testutil::random_dataset(11, 7, 6, 6, 9);
  const auto region = ScanRegion::full(11, 7);
  const auto one = assemble_design<float>(d, region, PixelatedGeometry{}, 1);
  const auto four = assemble_design<float>(d, region, PixelatedGeometry{}, 4);
  CHECK(one.values == four.values);
  const auto f = testutil::random_filter(6, 6, 10);
  CHECK(apply_filter(d, f, 1).values == apply_filter(d, f, 3).values);
}

TEST_CASE("vectorize is row-major and devectorize inverts it") {
  RealImage img(2, 2);
  img(0, 0) = 1;
  img(0, 1) = 2;
  img(1, 0) = 3;
  img(1, 1) = 4;
  CHECK(vectorize(img) == Eigen::Vector4d(1, 2, 3, 4));
  CHECK(devectorize(vectorize(img), 2, 2).values == img.values);
  CHECK_THROWS_AS(devectorize(Eigen::Vector3d(1, 2, 3), 2, 2), DimensionError);
  RealImage wide(17, 64);
  CHECK(vectorize(wide).size() == 1088);
}

TEST_CASE("expand_weights puts covariates back on the detector") {
  const auto d = testutil::random_dataset(3, 3, 8, 8, 11);
  const BFDisk disk{3.5, 3.5, 3.0};
  const auto mask = mask_from_disk(disk, 8, 8, MaskKeep::exterior);
  const auto X = assemble_design(d, ScanRegion::full(3, 3), mask);
  Eigen::VectorXd w = Eigen::VectorXd::LinSpaced(X.p(), 1.0, static_cast<double>(X.p()));
  const FilterImage f = expand_weights(X, w);
  CHECK(f.geometry == FilterGeometry::masked);
  for (Index k = 0; k < 8; ++k)
    for (Index l = 0; l < 8; ++l)
      if (!mask(k, l)) CHECK(f.weights(k, l) == 0.0);
  const Eigen::VectorXd pred = X.values * w;
  CHECK((pred - vectorize(apply_filter(d, f))).cwiseAbs().maxCoeff() <= 1e-10);

  const auto seg = build_segment_map(disk, 8, 8, 1, 4);
  const auto Xs = assemble_design(d, ScanRegion::full(3, 3), seg);
  CHECK_THROWS_AS(expand_weights(Xs, Eigen::Vector4d(1, 2, 3, 4)), Error);
  const FilterImage fs = expand_weights(Xs, Eigen::Vector4d(1, 2, 3, 4), &seg);
  CHECK(fs.geometry == FilterGeometry::segmented_expanded);
  CHECK_THROWS_AS(expand_weights(Xs, Eigen::Vector3d(1, 2, 3), &seg), DimensionError);
}

TEST_CASE("bad shapes and regions are rejected") {
  const auto d = testutil::random_dataset(4, 4, 5, 5, 12);
  CHECK_THROWS_AS(apply_filter(d, FilterImage(5, 4)), DimensionError);
  CHECK_THROWS(assemble_design(d, ScanRegion{0, 5, 0, 4}, PixelatedGeometry{}));
  CHECK_THROWS(assemble_design(d, ScanRegion{2, 2, 0, 4}, PixelatedGeometry{}));
  CHECK_THROWS(crop(RealImage(3, 3), ScanRegion{0, 4, 0, 1}));
  CHECK_THROWS_AS(Dataset4D(2, 2, 2, 2, std::vector<float>(15)), DimensionError);
  std::vector<float> bad(16, 1.0f);
  bad[3] = -1.0f;
  CHECK_THROWS(Dataset4D(2, 2, 2, 2, bad));
}

}  // TEST_SUITE
