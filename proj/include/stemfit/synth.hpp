#pragma once

// Synthetic training targets and a declared linear forward model for 4D data.
//
// The forward model is not an electron-scattering simulation. Each frame is a
// bright-field disk plus one smooth bump per nearby atom site, weighted by a
// Gaussian of the probe-site distance and displaced on the detector in
// proportion to the probe-site offset. Every response stays inside the disk.

#include "stemfit/core.hpp"
#include "stemfit/detector.hpp"

#include <array>
#include <cstdint>
#include <span>
#include <optional>
#include <string>
#include <utility>
#include <variant>
#include <vector>

namespace stemfit {

enum class SiteClass : std::uint8_t { a = 0, b = 1, dopant = 2 };

struct Site {
  double row = 0.0;
  double col = 0.0;
  SiteClass cls = SiteClass::a;
  SiteClass sublattice = SiteClass::a;  ///< a or b, kept for the dopant too.
  double amplitude = 1.0;
};

/// Honeycomb lattice over the scan plane, in scan-pixel units.
struct LatticeSpec {
  double constant = 6.0;       ///< a, distance between equivalent sites.
  double rotation = 0.2;       ///< radians, relative to the scan rows.
  double origin_row = 0.37;
  double origin_col = 0.81;
  double amplitude = 1.0;
  double sigma = 0.9;          ///< Gaussian width used when rendering targets.
  /// Index into the sites lying inside the scan, in lattice_sites() order;
  /// the site nearest the scan center when unset.
  std::optional<Index> dopant_site;
  double dopant_multiplier = 1.6;     ///< Must exceed 1.
  bool dopant = true;

  void validate() const;
};

/// Sites covering [-margin, rows+margin) x [-margin, cols+margin), in a fixed
/// order (unit cells row by row, A before B). The dopant, if any, is re-tagged.
std::vector<Site> lattice_sites(const LatticeSpec& spec, Index rows, Index cols, double margin);

/// Index, as counted by LatticeSpec::dopant_site, of the in-scan site nearest
/// the scan-plane point (row, col).
Index nearest_site_index(const LatticeSpec& spec, Index rows, Index cols, double row, double col);

struct LatticeHighRes {};
struct RandomSites {
  int count = 40;
  std::uint64_t seed = 1;
};
struct Rings {
  double spacing = 8.0;
};
struct GlyphText {
  std::string text = "caveat";
};
struct ComplementOfLattice {};
struct Sublattice {
  SiteClass which = SiteClass::a;
};

using PatternSpec = std::variant<LatticeHighRes, RandomSites, Rings, GlyphText, ComplementOfLattice, Sublattice>;

/// Renders a training target with values in [0, 1], snapped to multiples of
/// 2^-53 so that complement() is an exact involution.
///
/// Lattice-derived targets (lattice, sublattice, complement) share the scale
/// of the full lattice image, so sublattice(A) + sublattice(B) equals the
/// lattice up to rounding.
RealImage gen_training_image(const PatternSpec& spec, const LatticeSpec& lattice, Index rows, Index cols);

/// 1 - image, for images with values in [0, 1].
RealImage complement(const RealImage& image);

struct BumpSpec {
  double amplitude = 1.0;
  double width = 2.0;       ///< Gaussian sigma on the detector, pixels.
  double offset_row = 0.0;  ///< Rest position relative to the disk center.
  double offset_col = 0.0;
  double shift_gain = 1.0;  ///< Detector pixels of displacement per scan pixel of probe-site offset.
};

enum class NoiseKind : std::uint8_t { gaussian, poisson };

enum class TruthRegion : std::uint8_t { disk, detector };

struct ForwardModelSpec {
  Index det_rows = 64;
  Index det_cols = 64;
  BFDisk disk{31.5, 31.5, 16.0};
  double bf_level = 1.0;        ///< Constant disk intensity.
  double proximity_sigma = 1.2; ///< Gaussian probe-site proximity kernel, scan pixels.
  /// Response of sub-lattice A and B sites. A dopant uses the bump of its
  /// sub-lattice, scaled by its boosted amplitude.
  std::array<BumpSpec, 2> bumps{{
      {1.0, 2.5, -5.0, 3.0, 1.5},
      {1.0, 2.5, 5.0, -3.0, 1.5},
  }};

  int truth_support = 20;
  double truth_min = 0.5;       ///< Planted weight magnitudes are drawn in [truth_min, truth_max].
  double truth_max = 1.5;
  bool truth_signed = false;
  TruthRegion truth_region = TruthRegion::disk;
  std::uint64_t truth_seed = 7;

  NoiseKind noise = NoiseKind::gaussian;
  double noise_sigma = 0.0;
  std::optional<double> noise_snr_db;  ///< When set, overrides noise_sigma from the clean signal power.
  double poisson_dose = 100.0;         ///< Counts per unit intensity for Poisson noise.
  std::uint64_t noise_seed = 11;

  void validate() const;
};

struct SyntheticData {
  Dataset4D data;
  RealImage ground_truth;   ///< Exactly the planted filter applied to `data`.
  FilterImage planted;
  double noise_sigma = 0.0; ///< Effective sigma used.
};

/// Planted filter for the spec: `truth_support` distinct pixels, seeded.
/// Weights are float32 values, so the stored filter file is exact.
FilterImage planted_filter(const ForwardModelSpec& fm);

/// Noise-free intensity of frame (i, j) per the forward model, row-major K*L.
void render_clean_frame(const std::vector<Site>& sites, const ForwardModelSpec& fm, Index i, Index j,
                        std::span<double> frame);

SyntheticData gen_synthetic_4d(const LatticeSpec& lattice, const ForwardModelSpec& fm, Index scan_rows,
                               Index scan_cols, int workers = 1);

/// Same as above with an externally supplied planted filter.
SyntheticData gen_synthetic_4d(const LatticeSpec& lattice, const ForwardModelSpec& fm, Index scan_rows,
                               Index scan_cols, const FilterImage& planted, int workers = 1);

/// Top rows for training, the rest for testing. Exactly one of the two
/// overloads is used per call; both require non-empty halves.
std::pair<ScanRegion, ScanRegion> split_region(Index scan_rows, Index scan_cols, double train_fraction);
std::pair<ScanRegion, ScanRegion> split_region_rows(Index scan_rows, Index scan_cols, Index train_rows);

/// Seed for an indexed sub-stream (splitmix64 of the pair).
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t index);

}  // namespace stemfit
