#include "stemfit/synth.hpp"

#include "stemfit/data_model.hpp"

#include "font5x7.hpp"
#include "parallel.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numbers>
#include <random>

namespace stemfit {

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t index) {
  auto mix = [](std::uint64_t z) {
    z += 0x9E3779B97F4A7C15ull;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
  };
  return mix(seed ^ mix(index));
}

void LatticeSpec::validate() const {
  if (!(constant > 0.0)) throw ConfigError("lattice constant must be positive");
  if (!(sigma > 0.0)) throw ConfigError("lattice sigma must be positive");
  if (!(amplitude > 0.0)) throw ConfigError("lattice amplitude must be positive");
  if (dopant && !(dopant_multiplier > 1.0)) throw ConfigError("dopant amplitude multiplier must exceed 1");
}

std::vector<Site> lattice_sites(const LatticeSpec& spec, Index rows, Index cols, double margin) {
  spec.validate();
  const double a = spec.constant;
  const double c0 = std::cos(spec.rotation);
  const double s0 = std::sin(spec.rotation);
  const double c1 = std::cos(spec.rotation + std::numbers::pi / 3.0);
  const double s1 = std::sin(spec.rotation + std::numbers::pi / 3.0);
  // Lattice vectors as (row, col).
  const double a1r = a * s0, a1c = a * c0;
  const double a2r = a * s1, a2c = a * c1;
  const double br = (a1r + a2r) / 3.0, bc = (a1c + a2c) / 3.0;

  const double extent = static_cast<double>(rows + cols) + 2.0 * margin + 2.0 * a;
  const int reach = static_cast<int>(std::ceil(2.0 * extent / a)) + 1;
  const double lo_r = -margin, hi_r = static_cast<double>(rows) + margin;
  const double lo_c = -margin, hi_c = static_cast<double>(cols) + margin;

  std::vector<Site> sites;
  for (int u = -reach; u <= reach; ++u)
    for (int v = -reach; v <= reach; ++v) {
      const double r0 = spec.origin_row + u * a1r + v * a2r;
      const double col0 = spec.origin_col + u * a1c + v * a2c;
      for (const auto sub : {SiteClass::a, SiteClass::b}) {
        const double r = sub == SiteClass::a ? r0 : r0 + br;
        const double c = sub == SiteClass::a ? col0 : col0 + bc;
        if (r < lo_r || r >= hi_r || c < lo_c || c >= hi_c) continue;
        sites.push_back({r, c, sub, sub, spec.amplitude});
      }
    }

  if (spec.dopant && !sites.empty()) {
    // Only in-scan sites are counted, so the index does not depend on the margin.
    const auto inside = [&](const Site& s) {
      return s.row >= 0.0 && s.row < static_cast<double>(rows) && s.col >= 0.0 && s.col < static_cast<double>(cols);
    };
    std::optional<std::size_t> idx;
    if (spec.dopant_site) {
      if (*spec.dopant_site < 0) throw ConfigError("dopant site index must be >= 0");
      Index seen = 0;
      for (std::size_t s = 0; s < sites.size() && !idx; ++s)
        if (inside(sites[s]) && seen++ == *spec.dopant_site) idx = s;
      if (!idx) throw ConfigError("dopant site index out of range");
    } else {
      const double cr = static_cast<double>(rows) / 2.0, cc = static_cast<double>(cols) / 2.0;
      double best = std::numeric_limits<double>::infinity();
      for (std::size_t s = 0; s < sites.size(); ++s) {
        const double d = std::hypot(sites[s].row - cr, sites[s].col - cc);
        if (inside(sites[s]) && d < best) {
          best = d;
          idx = s;
        }
      }
    }
    if (idx) {
      sites[*idx].cls = SiteClass::dopant;
      sites[*idx].amplitude *= spec.dopant_multiplier;
    }
  }
  return sites;
}

Index nearest_site_index(const LatticeSpec& spec, Index rows, Index cols, double row, double col) {
  LatticeSpec plain = spec;
  plain.dopant = false;
  const auto sites = lattice_sites(plain, rows, cols, 0.0);
  if (sites.empty()) throw ConfigError("lattice has no sites in the scan");
  Index best = 0;
  double dist = std::numeric_limits<double>::infinity();
  for (std::size_t s = 0; s < sites.size(); ++s) {
    const double d = std::hypot(sites[s].row - row, sites[s].col - col);
    if (d < dist) {
      dist = d;
      best = static_cast<Index>(s);
    }
  }
  return best;
}

namespace {

constexpr double kGrid = 9007199254740992.0;  // 2^53

// Snap to multiples of 2^-53; for v in [0, 1] this makes 1 - v exact.
double snap(double v) { return std::round(v * kGrid) / kGrid; }

void render_gaussians(RowMatrix<double>& img, const std::vector<Site>& sites, double sigma,
                      const std::function<bool(const Site&)>& keep) {
  const double reach = 5.0 * sigma;
  const double inv = 1.0 / (2.0 * sigma * sigma);
  for (const auto& s : sites) {
    if (!keep(s)) continue;
    const Index r0 = std::max<Index>(0, static_cast<Index>(std::floor(s.row - reach)));
    const Index r1 = std::min<Index>(img.rows() - 1, static_cast<Index>(std::ceil(s.row + reach)));
    const Index c0 = std::max<Index>(0, static_cast<Index>(std::floor(s.col - reach)));
    const Index c1 = std::min<Index>(img.cols() - 1, static_cast<Index>(std::ceil(s.col + reach)));
    for (Index i = r0; i <= r1; ++i)
      for (Index j = c0; j <= c1; ++j) {
        const double dr = static_cast<double>(i) - s.row;
        const double dc = static_cast<double>(j) - s.col;
        img(i, j) += s.amplitude * std::exp(-(dr * dr + dc * dc) * inv);
      }
  }
}

RealImage finish(RowMatrix<double> img, double scale) {
  img = (img / scale).unaryExpr([](double v) { return snap(std::clamp(v, 0.0, 1.0)); });
  return RealImage(std::move(img));
}

RealImage normalize_range(RowMatrix<double> img) {
  const double lo = img.minCoeff();
  const double hi = img.maxCoeff();
  if (!(hi > lo)) throw NumericalError("rendered pattern is constant");
  img = img.array() - lo;
  return finish(std::move(img), hi - lo);
}

RowMatrix<double> render_lattice(const LatticeSpec& lattice, Index rows, Index cols,
                                 const std::function<bool(const Site&)>& keep) {
  const auto sites = lattice_sites(lattice, rows, cols, 5.0 * lattice.sigma);
  if (sites.empty()) throw ConfigError("lattice has no sites in the image");
  RowMatrix<double> img = RowMatrix<double>::Zero(rows, cols);
  render_gaussians(img, sites, lattice.sigma, keep);
  return img;
}

RealImage render_text(const std::string& text, Index rows, Index cols) {
  if (text.empty()) throw ConfigError("glyph text is empty");
  for (const char ch : text)
    if (ch < 0x20 || ch > 0x7E) throw ConfigError("glyph text must be printable ASCII");
  const auto n = static_cast<Index>(text.size());
  const Index natural_w = 6 * n - 1;
  const Index scale = std::min(cols / natural_w, rows / 7);
  if (scale < 1) throw ConfigError("glyph text is wider than the image");
  const Index top = (rows - 7 * scale) / 2;
  const Index left = (cols - natural_w * scale) / 2;
  RowMatrix<double> img = RowMatrix<double>::Zero(rows, cols);
  for (Index g = 0; g < n; ++g) {
    const auto& glyph = detail::kFont5x7[static_cast<std::size_t>(text[static_cast<std::size_t>(g)] - 0x20)];
    for (Index gc = 0; gc < 5; ++gc)
      for (Index gr = 0; gr < 7; ++gr) {
        if (((glyph[static_cast<std::size_t>(gc)] >> gr) & 1u) == 0) continue;
        for (Index dy = 0; dy < scale; ++dy)
          for (Index dx = 0; dx < scale; ++dx) img(top + gr * scale + dy, left + (g * 6 + gc) * scale + dx) = 1.0;
      }
  }
  return RealImage(std::move(img));
}

}  // namespace

RealImage complement(const RealImage& image) {
  if (image.values.size() > 0 && (image.values.minCoeff() < 0.0 || image.values.maxCoeff() > 1.0))
    throw ConfigError("complement expects values in [0, 1]");
  return RealImage(RowMatrix<double>(1.0 - image.values.array()));
}

RealImage gen_training_image(const PatternSpec& spec, const LatticeSpec& lattice, Index rows, Index cols) {
  if (rows <= 0 || cols <= 0) throw DimensionError("image dims must be positive");
  auto all = [](const Site&) { return true; };
  auto lattice_scale = [&] {
    const double m = render_lattice(lattice, rows, cols, all).maxCoeff();
    if (!(m > 0.0)) throw NumericalError("lattice image is empty");
    return m;
  };

  return std::visit(
      [&](const auto& v) -> RealImage {
        using T = std::decay_t<decltype(v)>;
        if constexpr (std::is_same_v<T, LatticeHighRes>) {
          return finish(render_lattice(lattice, rows, cols, all), lattice_scale());
        } else if constexpr (std::is_same_v<T, Sublattice>) {
          if (v.which == SiteClass::dopant) throw ConfigError("sublattice must be A or B");
          const auto which = v.which;
          return finish(render_lattice(lattice, rows, cols, [which](const Site& s) { return s.sublattice == which; }),
                        lattice_scale());
        } else if constexpr (std::is_same_v<T, ComplementOfLattice>) {
          return complement(finish(render_lattice(lattice, rows, cols, all), lattice_scale()));
        } else if constexpr (std::is_same_v<T, RandomSites>) {
          if (v.count < 1) throw ConfigError("random_sites needs at least one site");
          std::mt19937_64 rng(derive_seed(v.seed, 0));
          std::uniform_real_distribution<double> ur(0.0, static_cast<double>(rows));
          std::uniform_real_distribution<double> uc(0.0, static_cast<double>(cols));
          std::vector<Site> sites;
          for (int s = 0; s < v.count; ++s) {
            const double r = ur(rng);
            const double c = uc(rng);
            sites.push_back({r, c, SiteClass::a, SiteClass::a, lattice.amplitude});
          }
          RowMatrix<double> img = RowMatrix<double>::Zero(rows, cols);
          render_gaussians(img, sites, lattice.sigma, all);
          const double peak = img.maxCoeff();
          return finish(std::move(img), peak);
        } else if constexpr (std::is_same_v<T, Rings>) {
          if (!(v.spacing > 0.0)) throw ConfigError("ring spacing must be positive");
          RowMatrix<double> img(rows, cols);
          const double cr = static_cast<double>(rows - 1) / 2.0, cc = static_cast<double>(cols - 1) / 2.0;
          for (Index i = 0; i < rows; ++i)
            for (Index j = 0; j < cols; ++j) {
              const double d = std::hypot(static_cast<double>(i) - cr, static_cast<double>(j) - cc);
              img(i, j) = 0.5 * (1.0 + std::cos(2.0 * std::numbers::pi * d / v.spacing));
            }
          return normalize_range(std::move(img));
        } else {
          static_assert(std::is_same_v<T, GlyphText>);
          return render_text(v.text, rows, cols);
        }
      },
      spec);
}

void ForwardModelSpec::validate() const {
  if (det_rows <= 0 || det_cols <= 0) throw ConfigError("detector dims must be positive");
  check_disk(disk, det_rows, det_cols);
  if (!(bf_level >= 0.0)) throw ConfigError("bf_level must be >= 0");
  if (!(proximity_sigma > 0.0)) throw ConfigError("proximity sigma must be positive");
  for (const auto& b : bumps) {
    if (!(b.width > 0.0)) throw ConfigError("bump width must be positive");
    if (!(b.amplitude >= 0.0)) throw ConfigError("bump amplitude must be >= 0");
  }
  if (truth_support < 0) throw ConfigError("truth support must be >= 0");
  if (!(truth_min >= 0.0 && truth_max >= truth_min)) throw ConfigError("truth value range is invalid");
  if (!(noise_sigma >= 0.0)) throw ConfigError("noise sigma must be >= 0");
  if (noise_snr_db && !std::isfinite(*noise_snr_db)) throw ConfigError("noise SNR must be finite");
  if (noise == NoiseKind::poisson && !(poisson_dose > 0.0)) throw ConfigError("poisson dose must be positive");
}

FilterImage planted_filter(const ForwardModelSpec& fm) {
  fm.validate();
  std::vector<Index> candidates;
  for (Index k = 0; k < fm.det_rows; ++k)
    for (Index l = 0; l < fm.det_cols; ++l)
      if (fm.truth_region == TruthRegion::detector || fm.disk.contains(k, l)) candidates.push_back(k * fm.det_cols + l);
  if (static_cast<std::size_t>(fm.truth_support) > candidates.size())
    throw ConfigError("truth support exceeds the number of candidate pixels");

  std::mt19937_64 rng(derive_seed(fm.truth_seed, 0));
  std::uniform_real_distribution<double> mag(fm.truth_min, fm.truth_max);
  FilterImage f(fm.det_rows, fm.det_cols);
  double* w = f.weights.data();
  for (int s = 0; s < fm.truth_support; ++s) {
    const auto remaining = candidates.size() - static_cast<std::size_t>(s);
    std::uniform_int_distribution<std::size_t> pick(0, remaining - 1);
    const std::size_t at = static_cast<std::size_t>(s) + pick(rng);
    std::swap(candidates[static_cast<std::size_t>(s)], candidates[at]);
    double value = static_cast<float>(mag(rng));
    if (fm.truth_signed && (rng() & 1u)) value = -value;
    w[candidates[static_cast<std::size_t>(s)]] = value;
  }
  return f;
}

void render_clean_frame(const std::vector<Site>& sites, const ForwardModelSpec& fm, Index i, Index j,
                        std::span<double> frame) {
  const Index K = fm.det_rows;
  const Index L = fm.det_cols;
  for (Index k = 0; k < K; ++k)
    for (Index l = 0; l < L; ++l)
      frame[static_cast<std::size_t>(k * L + l)] = fm.disk.contains(k, l) ? fm.bf_level : 0.0;

  const double reach = 4.0 * fm.proximity_sigma;
  const double inv_prox = 1.0 / (2.0 * fm.proximity_sigma * fm.proximity_sigma);
  std::vector<double> gk(static_cast<std::size_t>(K));
  std::vector<double> gl(static_cast<std::size_t>(L));
  for (const auto& s : sites) {
    const double dr = s.row - static_cast<double>(i);
    const double dc = s.col - static_cast<double>(j);
    const double d2 = dr * dr + dc * dc;
    if (d2 > reach * reach) continue;
    const auto& bump = fm.bumps[static_cast<std::size_t>(s.sublattice)];
    const double weight = s.amplitude * bump.amplitude * std::exp(-d2 * inv_prox);
    const double ck = fm.disk.center_row + bump.offset_row + bump.shift_gain * dr;
    const double cl = fm.disk.center_col + bump.offset_col + bump.shift_gain * dc;
    const double inv_w = 1.0 / (2.0 * bump.width * bump.width);
    for (Index k = 0; k < K; ++k) gk[static_cast<std::size_t>(k)] = std::exp(-(k - ck) * (k - ck) * inv_w);
    for (Index l = 0; l < L; ++l) gl[static_cast<std::size_t>(l)] = std::exp(-(l - cl) * (l - cl) * inv_w);
    for (Index k = 0; k < K; ++k)
      for (Index l = 0; l < L; ++l)
        if (fm.disk.contains(k, l))
          frame[static_cast<std::size_t>(k * L + l)] += weight * gk[static_cast<std::size_t>(k)] * gl[static_cast<std::size_t>(l)];
  }
}

SyntheticData gen_synthetic_4d(const LatticeSpec& lattice, const ForwardModelSpec& fm, Index scan_rows,
                               Index scan_cols, const FilterImage& planted, int workers) {
  fm.validate();
  if (planted.rows() != fm.det_rows || planted.cols() != fm.det_cols)
    throw DimensionError("planted filter dims differ from detector dims");
  const auto sites = lattice_sites(lattice, scan_rows, scan_cols, 4.0 * fm.proximity_sigma);

  SyntheticData out;
  out.data = Dataset4D(scan_rows, scan_cols, fm.det_rows, fm.det_cols);
  out.planted = planted;
  const Index KL = fm.det_rows * fm.det_cols;

  // Clean frames, with per-row partial power sums combined in row order.
  std::vector<double> row_power(static_cast<std::size_t>(scan_rows), 0.0);
  detail::parallel_chunks(scan_rows, workers, [&](Index begin, Index end) {
    std::vector<double> frame(static_cast<std::size_t>(KL));
    for (Index i = begin; i < end; ++i)
      for (Index j = 0; j < scan_cols; ++j) {
        render_clean_frame(sites, fm, i, j, frame);
        auto dst = out.data.frame(i, j);
        double acc = 0.0;
        for (Index q = 0; q < KL; ++q) {
          dst[q] = static_cast<float>(frame[static_cast<std::size_t>(q)]);
          acc += static_cast<double>(dst[q]) * static_cast<double>(dst[q]);
        }
        row_power[static_cast<std::size_t>(i)] += acc;
      }
  });

  double sigma = fm.noise_sigma;
  if (fm.noise_snr_db) {
    double power = 0.0;
    for (const double p : row_power) power += p;
    power /= static_cast<double>(scan_rows * scan_cols * KL);
    sigma = std::sqrt(power / std::pow(10.0, *fm.noise_snr_db / 10.0));
  }
  out.noise_sigma = fm.noise == NoiseKind::gaussian ? sigma : 0.0;

  const bool add_noise = fm.noise == NoiseKind::poisson || sigma > 0.0;
  if (add_noise) {
    detail::parallel_chunks(scan_rows, workers, [&](Index begin, Index end) {
      for (Index i = begin; i < end; ++i)
        for (Index j = 0; j < scan_cols; ++j) {
          std::mt19937_64 rng(derive_seed(fm.noise_seed, static_cast<std::uint64_t>(i * scan_cols + j)));
          auto dst = out.data.frame(i, j);
          if (fm.noise == NoiseKind::gaussian) {
            std::normal_distribution<double> gauss(0.0, sigma);
            for (Index q = 0; q < KL; ++q)
              dst[q] = static_cast<float>(std::max(0.0, static_cast<double>(dst[q]) + gauss(rng)));
          } else {
            for (Index q = 0; q < KL; ++q) {
              const double mean = static_cast<double>(dst[q]) * fm.poisson_dose;
              if (mean <= 0.0) {
                dst[q] = 0.0f;
                continue;
              }
              std::poisson_distribution<long long> pois(mean);
              dst[q] = static_cast<float>(static_cast<double>(pois(rng)) / fm.poisson_dose);
            }
          }
        }
    });
  }

  out.ground_truth = apply_filter(out.data, planted, workers);
  return out;
}

SyntheticData gen_synthetic_4d(const LatticeSpec& lattice, const ForwardModelSpec& fm, Index scan_rows,
                               Index scan_cols, int workers) {
  return gen_synthetic_4d(lattice, fm, scan_rows, scan_cols, planted_filter(fm), workers);
}

std::pair<ScanRegion, ScanRegion> split_region_rows(Index scan_rows, Index scan_cols, Index train_rows) {
  if (scan_cols <= 0) throw DimensionError("scan must have columns");
  if (train_rows <= 0 || train_rows >= scan_rows)
    throw ConfigError("split leaves an empty training or test region");
  return {ScanRegion{0, train_rows, 0, scan_cols}, ScanRegion{train_rows, scan_rows, 0, scan_cols}};
}

std::pair<ScanRegion, ScanRegion> split_region(Index scan_rows, Index scan_cols, double train_fraction) {
  if (!(train_fraction > 0.0 && train_fraction < 1.0))
    throw ConfigError("training fraction must lie strictly between 0 and 1");
  const auto rows = static_cast<Index>(std::floor(train_fraction * static_cast<double>(scan_rows) + 0.5));
  return split_region_rows(scan_rows, scan_cols, rows);
}

}  // namespace stemfit
