#include "stemfit/pipeline.hpp"

#include "stemfit/data_model.hpp"
#include "stemfit/io.hpp"

#include <cmath>
#include <cstdio>
#include <iomanip>
#include <ostream>
#include <sstream>

namespace stemfit {

namespace fs = std::filesystem;

GeometrySelection GeometrySelection::parse(const std::string& name) {
  GeometrySelection g;
  if (name == "pixelated") g.kind = Kind::pixelated;
  else if (name == "interior") g.kind = Kind::interior;
  else if (name == "exterior") g.kind = Kind::exterior;
  else if (name == "segments" || name == "segmented") g.kind = Kind::segments;
  else throw ConfigError("unknown geometry '" + name + "' (pixelated | interior | exterior | segments)");
  return g;
}

DetectorGeometry resolve_geometry(const GeometrySelection& sel, const Dataset4D& data) {
  using Kind = GeometrySelection::Kind;
  if (sel.kind == Kind::pixelated) return PixelatedGeometry{};
  const BFDisk disk = estimate_bf_disk(data, sel.disk);
  const Index K = data.det_rows(), L = data.det_cols();
  if (sel.kind == Kind::interior) return mask_from_disk(disk, K, L, MaskKeep::interior);
  if (sel.kind == Kind::exterior) return mask_from_disk(disk, K, L, MaskKeep::exterior);
  if (sel.rings > 0 || sel.sectors > 0) {
    if (sel.rings < 1 || sel.sectors < 1) throw ConfigError("segments need both rings and sectors");
    if (sel.segments > 0 && sel.segments != sel.rings * sel.sectors)
      throw ConfigError("segment count must equal rings * sectors");
    return build_segment_map(disk, K, L, sel.rings, sel.sectors);
  }
  return build_segment_map(disk, K, L, sel.segments);
}

DesignPrecision choose_precision(Index n, Index p, double budget_bytes, std::ostream* warn) {
  const double f64 = design_footprint_bytes(n, p, 8);
  if (f64 <= budget_bytes) return DesignPrecision::f64;
  const double f32 = design_footprint_bytes(n, p, 4);
  if (f32 <= budget_bytes) {
    if (warn != nullptr)
      *warn << "warning: " << n << "x" << p << " design needs " << std::setprecision(3) << f64 / 1e9
            << " GB at float64; holding it in float32 (" << f32 / 1e9 << " GB)\n";
    return DesignPrecision::f32;
  }
  std::ostringstream msg;
  msg << n << "x" << p << " design needs " << std::setprecision(3) << f32 / 1e9
      << " GB even at float32, above the memory budget of " << budget_bytes / 1e9 << " GB";
  throw ConfigError(msg.str());
}

double rmse(const RealImage& a, const RealImage& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) throw DimensionError("rmse: image dims differ");
  if (a.values.size() == 0) throw DimensionError("rmse: empty images");
  return std::sqrt((a.values - b.values).squaredNorm() / static_cast<double>(a.values.size()));
}

namespace {

const SegmentMap* segments_of(const DetectorGeometry& g) { return std::get_if<SegmentMap>(&g); }

RealImage predict(const Dataset4D& data, const FilterImage& filter, double intercept, int workers) {
  RealImage img = apply_filter(data, filter, workers);
  if (intercept != 0.0) img.values.array() += intercept;
  return img;
}

template <typename Scalar>
PathRun run_impl(const Dataset4D& data, const RealImage& target, const ScanRegion& train, const ScanRegion& test,
                 const DetectorGeometry& geometry, const PathOptions& options, std::optional<double> single_lambda) {
  if (target.rows() != data.scan_rows() || target.cols() != data.scan_cols())
    throw DimensionError("target image dims differ from the dataset scan dims");
  check_region(train, data.scan_rows(), data.scan_cols());
  check_region(test, data.scan_rows(), data.scan_cols());
  if (options.transfer) {
    const auto& t = *options.transfer;
    if (t.data == nullptr || t.target == nullptr) throw ConfigError("transfer set needs a dataset and a target");
    if (t.data->det_rows() != data.det_rows() || t.data->det_cols() != data.det_cols())
      throw DimensionError("transfer dataset detector dims differ");
    if (t.target->rows() != t.data->scan_rows() || t.target->cols() != t.data->scan_cols())
      throw DimensionError("transfer target dims differ from the transfer scan dims");
  }

  const auto X = assemble_design<Scalar>(data, train, geometry, options.workers);
  const Eigen::VectorXd y = vectorize(crop(target, train));
  const ElasticNetSolver<Scalar> solver(X.values, y, options.solver);

  PathRun run;
  run.geometry = geometry;
  run.precision = std::is_same_v<Scalar, double> ? DesignPrecision::f64 : DesignPrecision::f32;
  if (single_lambda) {
    run.path.entries.push_back(solver.fit(*single_lambda));
  } else {
    run.path = solver.fit_path(options.path);
  }

  const RealImage target_train = crop(target, train);
  const RealImage target_test = crop(target, test);
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t e = 0; e < run.path.entries.size(); ++e) {
    const auto& fr = run.path.entries[e];
    FilterImage filter = quantize_to_f32(expand_weights(X, fr.weights, segments_of(geometry)));
    RealImage recon = predict(data, filter, fr.intercept, options.workers);

    ValidationRow row;
    row.lambda = fr.lambda;
    row.sweeps = fr.sweeps_used;
    row.objective = fr.objective_value;
    row.intercept = fr.intercept;
    row.filling_ratio = fr.filling_ratio;
    row.kkt_violation = fr.kkt_max_violation;
    row.train_rmse = rmse(crop(recon, train), target_train);
    row.test_rmse = rmse(crop(recon, test), target_test);
    if (options.transfer) {
      const RealImage other = predict(*options.transfer->data, filter, fr.intercept, options.workers);
      row.transfer_rmse = rmse(other, *options.transfer->target);
    }
    if (!std::isfinite(row.train_rmse) || !std::isfinite(row.test_rmse))
      throw NumericalError("reconstruction produced non-finite values");
    if (row.test_rmse < best) {
      best = row.test_rmse;
      run.report.selected = e;
    }
    run.report.rows.push_back(row);
    run.filters.push_back(std::move(filter));
    run.reconstructions.push_back(std::move(recon));
  }
  return run;
}

PathRun dispatch(const Dataset4D& data, const RealImage& target, const ScanRegion& train, const ScanRegion& test,
                 const DetectorGeometry& geometry, const PathOptions& options, std::optional<double> lambda) {
  Index p = data.frame_size();
  if (const auto* m = std::get_if<DetectorMask>(&geometry)) p = m->active_count();
  if (const auto* s = std::get_if<SegmentMap>(&geometry)) p = s->segment_count();
  const auto precision = choose_precision(train.size(), p, options.memory_budget_bytes, nullptr);
  if (precision == DesignPrecision::f64) return run_impl<double>(data, target, train, test, geometry, options, lambda);
  return run_impl<float>(data, target, train, test, geometry, options, lambda);
}

}  // namespace

PathRun run_path(const Dataset4D& data, const RealImage& target, const ScanRegion& train, const ScanRegion& test,
                 const DetectorGeometry& geometry, const PathOptions& options) {
  return dispatch(data, target, train, test, geometry, options, std::nullopt);
}

PathRun run_fit(const Dataset4D& data, const RealImage& target, const ScanRegion& train, const ScanRegion& test,
                const DetectorGeometry& geometry, double lambda, const PathOptions& options) {
  return dispatch(data, target, train, test, geometry, options, lambda);
}

std::vector<double> line_trace(const RealImage& image, const TraceBox& box, int width) {
  if (width < 1 || width % 2 == 0) throw ConfigError("line trace width must be odd and >= 1");
  if (box.x0 > box.x1 || box.y0 > box.y1) throw ConfigError("line trace box corners are out of order");
  if (box.x0 < 0 || box.y0 < 0 || box.x1 >= image.cols() || box.y1 >= image.rows())
    throw DimensionError("line trace box lies outside the image");
  const Index half = (width - 1) / 2;
  const bool horizontal = (box.x1 - box.x0) >= (box.y1 - box.y0);
  const Index mid = horizontal ? (box.y0 + box.y1) / 2 : (box.x0 + box.x1) / 2;
  const Index across = horizontal ? image.rows() : image.cols();
  if (mid - half < 0 || mid + half >= across) throw DimensionError("line trace band extends past the image");

  std::vector<double> trace;
  const Index a0 = horizontal ? box.x0 : box.y0;
  const Index a1 = horizontal ? box.x1 : box.y1;
  for (Index a = a0; a <= a1; ++a) {
    double acc = 0.0;
    for (Index o = mid - half; o <= mid + half; ++o) acc += horizontal ? image(o, a) : image(a, o);
    trace.push_back(acc / static_cast<double>(width));
  }
  const double floor_value = image.values.minCoeff();
  const auto [lo, hi] = std::minmax_element(trace.begin(), trace.end());
  if (!(*hi > *lo)) throw NumericalError("line trace is constant; cannot normalize");
  const double peak = *hi - floor_value;
  for (auto& v : trace) v = (v - floor_value) / peak;
  return trace;
}

CsvTable fill_curve(const CsvTable& diagnostics) {
  const auto lc = diagnostics.column("lambda");
  const auto fc = diagnostics.column("filling_ratio");
  CsvTable out;
  out.header = {"lambda", "filling_ratio"};
  double prev = std::numeric_limits<double>::infinity();
  for (const auto& row : diagnostics.rows) {
    const double lambda = parse_double(row[lc]);
    const double fill = parse_double(row[fc]);
    if (!(lambda < prev)) throw FormatError("diagnostics lambda column is not strictly descending");
    if (!(fill >= 0.0 && fill <= 1.0)) throw FormatError("filling ratio outside [0, 1]");
    prev = lambda;
    out.rows.push_back({row[lc], row[fc]});
  }
  return out;
}

CsvTable diagnostics_table(const RegPath& path) {
  CsvTable t;
  t.header = {"lambda", "sweeps", "objective", "filling_ratio", "kkt_violation"};
  for (const auto& e : path.entries)
    t.rows.push_back({format_double(e.lambda), std::to_string(e.sweeps_used), format_double(e.objective_value),
                      format_double(e.filling_ratio), format_double(e.kkt_max_violation)});
  return t;
}

CsvTable validation_table(const ValidationReport& report) {
  const bool transfer = !report.rows.empty() && report.rows.front().transfer_rmse.has_value();
  CsvTable t;
  t.header = {"index", "lambda", "train_rmse", "test_rmse"};
  if (transfer) t.header.emplace_back("transfer_rmse");
  for (const char* h : {"filling_ratio", "kkt_violation", "intercept", "selected"}) t.header.emplace_back(h);
  for (std::size_t e = 0; e < report.rows.size(); ++e) {
    const auto& r = report.rows[e];
    std::vector<std::string> row{std::to_string(e), format_double(r.lambda), format_double(r.train_rmse),
                                 format_double(r.test_rmse)};
    if (transfer) row.push_back(format_double(r.transfer_rmse.value_or(std::nan(""))));
    row.push_back(format_double(r.filling_ratio));
    row.push_back(format_double(r.kkt_violation));
    row.push_back(format_double(r.intercept));
    row.push_back(e == report.selected ? "1" : "0");
    t.rows.push_back(std::move(row));
  }
  return t;
}

// ---------------------------------------------------------------------------
// Configuration

const std::vector<std::string>& known_config_keys() {
  static const std::vector<std::string> keys = [] {
    std::vector<std::string> k = {
        "out", "threads", "allow_large", "large.threshold_gb", "memory.budget_gb",
        "scan.rows", "scan.cols",
        "lattice.a", "lattice.rotation", "lattice.origin_row", "lattice.origin_col", "lattice.amplitude",
        "lattice.sigma", "lattice.dopant", "lattice.dopant_site", "lattice.dopant_multiplier",
        "detector.rows", "detector.cols", "disk.row", "disk.col", "disk.radius", "bf.level", "proximity.sigma",
        "truth.support", "truth.min", "truth.max", "truth.signed", "truth.region", "truth.seed",
        "noise.kind", "noise.sigma", "noise.snr_db", "noise.dose", "noise.seed",
        "targets", "target.random.count", "target.random.seed", "target.rings.spacing", "target.glyph.text",
        "transfer", "transfer.dopant_site", "transfer.dopant_multiplier", "transfer.noise_seed",
        "dataset", "target", "filter", "reference", "train.rows", "train.fraction",
        "geometry", "segments.count", "segments.rings", "segments.sectors",
        "solver.r", "solver.tol", "solver.max_sweeps", "solver.center_y", "solver.center_x",
        "path.n_lambda", "path.min_ratio", "path.lambdas", "lambda",
        "transfer.dataset", "transfer.target", "write.recon", "write.filters",
        "region", "format", "image", "box", "width", "diagnostics"};
    for (const char* cls : {"a", "b"})
      for (const char* f : {"amplitude", "width", "offset_row", "offset_col", "gain"})
        k.push_back(std::string("bump.") + cls + "." + f);
    return k;
  }();
  return keys;
}

LatticeSpec lattice_from_config(const KeyValueConfig& cfg) {
  LatticeSpec s;
  s.constant = cfg.get_double("lattice.a", s.constant);
  s.rotation = cfg.get_double("lattice.rotation", s.rotation);
  s.origin_row = cfg.get_double("lattice.origin_row", s.origin_row);
  s.origin_col = cfg.get_double("lattice.origin_col", s.origin_col);
  s.amplitude = cfg.get_double("lattice.amplitude", s.amplitude);
  s.sigma = cfg.get_double("lattice.sigma", s.sigma);
  s.dopant = cfg.get_bool("lattice.dopant", s.dopant);
  if (cfg.has("lattice.dopant_site")) s.dopant_site = cfg.get_int("lattice.dopant_site", 0);
  s.dopant_multiplier = cfg.get_double("lattice.dopant_multiplier", s.dopant_multiplier);
  s.validate();
  return s;
}

ForwardModelSpec forward_model_from_config(const KeyValueConfig& cfg) {
  ForwardModelSpec fm;
  fm.det_rows = cfg.get_int("detector.rows", fm.det_rows);
  fm.det_cols = cfg.get_int("detector.cols", fm.det_cols);
  fm.disk.center_row = cfg.get_double("disk.row", static_cast<double>(fm.det_rows - 1) / 2.0);
  fm.disk.center_col = cfg.get_double("disk.col", static_cast<double>(fm.det_cols - 1) / 2.0);
  fm.disk.radius = cfg.get_double("disk.radius", static_cast<double>(std::min(fm.det_rows, fm.det_cols)) / 4.0);
  fm.bf_level = cfg.get_double("bf.level", fm.bf_level);
  fm.proximity_sigma = cfg.get_double("proximity.sigma", fm.proximity_sigma);
  const char* names[] = {"a", "b"};
  for (std::size_t c = 0; c < fm.bumps.size(); ++c) {
    auto& b = fm.bumps[c];
    const std::string pre = std::string("bump.") + names[c] + ".";
    b.amplitude = cfg.get_double(pre + "amplitude", b.amplitude);
    b.width = cfg.get_double(pre + "width", b.width);
    b.offset_row = cfg.get_double(pre + "offset_row", b.offset_row);
    b.offset_col = cfg.get_double(pre + "offset_col", b.offset_col);
    b.shift_gain = cfg.get_double(pre + "gain", b.shift_gain);
  }
  fm.truth_support = static_cast<int>(cfg.get_int("truth.support", fm.truth_support));
  fm.truth_min = cfg.get_double("truth.min", fm.truth_min);
  fm.truth_max = cfg.get_double("truth.max", fm.truth_max);
  fm.truth_signed = cfg.get_bool("truth.signed", fm.truth_signed);
  const auto region = cfg.get_string("truth.region", "disk");
  if (region == "disk") fm.truth_region = TruthRegion::disk;
  else if (region == "detector") fm.truth_region = TruthRegion::detector;
  else throw ConfigError("truth.region must be disk or detector");
  fm.truth_seed = static_cast<std::uint64_t>(cfg.get_int("truth.seed", static_cast<long long>(fm.truth_seed)));
  const auto kind = cfg.get_string("noise.kind", "gaussian");
  if (kind == "gaussian") fm.noise = NoiseKind::gaussian;
  else if (kind == "poisson") fm.noise = NoiseKind::poisson;
  else throw ConfigError("noise.kind must be gaussian or poisson");
  fm.noise_sigma = cfg.get_double("noise.sigma", fm.noise_sigma);
  fm.noise_snr_db = cfg.get_optional_double("noise.snr_db");
  fm.poisson_dose = cfg.get_double("noise.dose", fm.poisson_dose);
  fm.noise_seed = static_cast<std::uint64_t>(cfg.get_int("noise.seed", static_cast<long long>(fm.noise_seed)));
  fm.validate();
  return fm;
}

ElasticNetConfig solver_from_config(const KeyValueConfig& cfg) {
  ElasticNetConfig s;
  s.mixing = cfg.get_double("solver.r", s.mixing);
  s.tol = cfg.get_double("solver.tol", s.tol);
  s.max_sweeps = static_cast<int>(cfg.get_int("solver.max_sweeps", s.max_sweeps));
  s.center_y = cfg.get_bool("solver.center_y", s.center_y);
  s.center_X = cfg.get_bool("solver.center_x", s.center_X);
  s.validate();
  return s;
}

PathConfig path_from_config(const KeyValueConfig& cfg) {
  PathConfig p;
  p.n_lambda = static_cast<int>(cfg.get_int("path.n_lambda", p.n_lambda));
  p.lambda_min_ratio = cfg.get_double("path.min_ratio", p.lambda_min_ratio);
  p.explicit_lambdas = cfg.get_double_list("path.lambdas");
  p.validate();
  return p;
}

namespace {

fs::path out_dir(const KeyValueConfig& cfg) {
  const fs::path out = cfg.get_string("out", ".");
  fs::create_directories(out);
  return out;
}

int workers_of(const KeyValueConfig& cfg) {
  const auto t = cfg.get_int("threads", 1);
  if (t < 1) throw ConfigError("threads must be >= 1");
  return static_cast<int>(t);
}

std::pair<ScanRegion, ScanRegion> split_from_config(const KeyValueConfig& cfg, Index rows, Index cols) {
  if (cfg.has("train.rows")) return split_region_rows(rows, cols, cfg.get_int("train.rows", 0));
  return split_region(rows, cols, cfg.get_double("train.fraction", 0.5));
}

GeometrySelection geometry_from_config(const KeyValueConfig& cfg) {
  auto g = GeometrySelection::parse(cfg.get_string("geometry", "pixelated"));
  g.segments = static_cast<int>(cfg.get_int("segments.count", 0));
  g.rings = static_cast<int>(cfg.get_int("segments.rings", 0));
  g.sectors = static_cast<int>(cfg.get_int("segments.sectors", 0));
  g.disk.center_row = cfg.get_optional_double("disk.row");
  g.disk.center_col = cfg.get_optional_double("disk.col");
  g.disk.radius = cfg.get_optional_double("disk.radius");
  if (g.kind == GeometrySelection::Kind::segments && g.segments == 0 && g.rings == 0)
    throw ConfigError("segments geometry needs segments.count or segments.rings/sectors");
  return g;
}

std::string index_name(std::size_t e) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%03zu", e);
  return buf;
}

ScanRegion region_from_string(const std::string& s, Index rows, Index cols) {
  KeyValueConfig tmp;
  tmp.set("region", s);
  const auto v = tmp.get_double_list("region");
  if (v.size() != 4) throw ConfigError("region must be row_begin,row_end,col_begin,col_end");
  ScanRegion r{static_cast<Index>(v[0]), static_cast<Index>(v[1]), static_cast<Index>(v[2]), static_cast<Index>(v[3])};
  check_region(r, rows, cols);
  return r;
}

void write_run(const PathRun& run, const KeyValueConfig& cfg, const fs::path& out, std::ostream& log) {
  write_file_atomic(out / "path.csv", diagnostics_table(run.path).to_string());
  write_file_atomic(out / "validation.csv", validation_table(run.report).to_string());
  const bool filters = cfg.get_bool("write.filters", true);
  const bool recon = cfg.get_bool("write.recon", true);
  for (std::size_t e = 0; e < run.filters.size(); ++e) {
    if (filters) store_filter(run.filters[e], out / "filters" / ("filter_" + index_name(e) + ".f4dm"));
    if (recon) export_image(run.reconstructions[e], ImageFormat::csv, out / "recon" / ("recon_" + index_name(e) + ".csv"));
  }
  const auto sel = run.report.selected;
  store_filter(run.filters[sel], out / "selected_filter.f4dm");
  export_image(run.reconstructions[sel], ImageFormat::csv, out / "selected_recon.csv");
  const auto& row = run.report.rows[sel];
  log << "selected entry " << sel << ": lambda=" << format_double(row.lambda)
      << " train_rmse=" << format_double(row.train_rmse) << " test_rmse=" << format_double(row.test_rmse)
      << " filling_ratio=" << format_double(row.filling_ratio) << '\n';
}

PathOptions options_from_config(const KeyValueConfig& cfg) {
  PathOptions o;
  o.solver = solver_from_config(cfg);
  o.path = path_from_config(cfg);
  o.memory_budget_bytes = cfg.get_double("memory.budget_gb", 4.0) * 1e9;
  o.workers = workers_of(cfg);
  return o;
}

void run_and_write(const KeyValueConfig& cfg, std::ostream& log, std::optional<double> lambda) {
  const fs::path out = out_dir(cfg);
  const Dataset4D data = load_s4dm(cfg.require_string("dataset"));
  const RealImage target = read_image_csv(cfg.require_string("target"));
  const auto [train, test] = split_from_config(cfg, data.scan_rows(), data.scan_cols());
  const DetectorGeometry geometry = resolve_geometry(geometry_from_config(cfg), data);
  PathOptions opts = options_from_config(cfg);

  Index p = data.frame_size();
  if (const auto* m = std::get_if<DetectorMask>(&geometry)) p = m->active_count();
  if (const auto* s = std::get_if<SegmentMap>(&geometry)) p = s->segment_count();
  choose_precision(train.size(), p, opts.memory_budget_bytes, &log);

  std::optional<Dataset4D> tdata;
  std::optional<RealImage> ttarget;
  if (cfg.has("transfer.dataset")) {
    tdata = load_s4dm(cfg.require_string("transfer.dataset"));
    ttarget = read_image_csv(cfg.require_string("transfer.target"));
    opts.transfer = TransferSet{&*tdata, &*ttarget};
  }
  if (const auto* seg = std::get_if<SegmentMap>(&geometry)) write_segment_map_csv(*seg, out / "segments.csv");
  if (const auto* mask = std::get_if<DetectorMask>(&geometry)) write_mask_csv(*mask, out / "mask.csv");

  log << "design: n=" << train.size() << " p=" << p << '\n';
  const PathRun run = lambda ? run_fit(data, target, train, test, geometry, *lambda, opts)
                             : run_path(data, target, train, test, geometry, opts);
  if (run.path.lambda_max) log << "lambda_max=" << format_double(*run.path.lambda_max) << '\n';
  write_run(run, cfg, out, log);
}

}  // namespace

void cmd_synth(const KeyValueConfig& cfg, std::ostream& log) {
  const Index rows = cfg.get_int("scan.rows", 64);
  const Index cols = cfg.get_int("scan.cols", 64);
  if (rows <= 0 || cols <= 0) throw ConfigError("scan dims must be positive");
  const LatticeSpec lattice = lattice_from_config(cfg);
  const ForwardModelSpec fm = forward_model_from_config(cfg);
  const int workers = workers_of(cfg);

  const double footprint = design_footprint_bytes(rows * cols, fm.det_rows * fm.det_cols, 8);
  const double gate = cfg.get_double("large.threshold_gb", 1.0) * 1e9;
  if (footprint > gate) {
    std::ostringstream msg;
    msg << "a full-scan design for " << rows << "x" << cols << " positions and a " << fm.det_rows << "x"
        << fm.det_cols << " detector needs " << std::setprecision(3) << footprint / 1e9
        << " GB at float64 (dataset file " << design_footprint_bytes(rows * cols, fm.det_rows * fm.det_cols, 4) / 1e9
        << " GB)";
    if (!cfg.get_bool("allow_large", false)) throw ConfigError(msg.str() + "; set allow_large to proceed");
    log << "warning: " << msg.str() << '\n';
  }

  const fs::path out = out_dir(cfg);
  const SyntheticData syn = gen_synthetic_4d(lattice, fm, rows, cols, workers);
  store_s4dm(syn.data, out / "dataset.s4dm");
  store_filter(syn.planted, out / "planted.f4dm");
  export_image(syn.ground_truth, ImageFormat::csv, out / "ground_truth.csv");
  export_image(syn.ground_truth, ImageFormat::pgm16, out / "ground_truth.pgm");
  log << "dataset " << rows << "x" << cols << "x" << fm.det_rows << "x" << fm.det_cols
      << " truth.seed=" << fm.truth_seed << " noise.seed=" << fm.noise_seed
      << " noise.sigma=" << format_double(syn.noise_sigma) << '\n';

  auto render_targets = [&](const LatticeSpec& lat, const std::string& prefix) {
    const auto names = cfg.has("targets") ? cfg.get_string_list("targets")
                                          : std::vector<std::string>{"lattice", "random_sites", "rings", "glyph",
                                                                     "complement", "sublattice_a", "sublattice_b"};
    for (const auto& name : names) {
      PatternSpec spec;
      if (name == "lattice") spec = LatticeHighRes{};
      else if (name == "random_sites") {
        RandomSites r;
        r.count = static_cast<int>(cfg.get_int("target.random.count", r.count));
        r.seed = static_cast<std::uint64_t>(cfg.get_int("target.random.seed", static_cast<long long>(r.seed)));
        spec = r;
        log << prefix << "random_sites seed=" << r.seed << '\n';
      } else if (name == "rings") spec = Rings{cfg.get_double("target.rings.spacing", 8.0)};
      else if (name == "glyph") spec = GlyphText{cfg.get_string("target.glyph.text", "caveat")};
      else if (name == "complement") spec = ComplementOfLattice{};
      else if (name == "sublattice_a") spec = Sublattice{SiteClass::a};
      else if (name == "sublattice_b") spec = Sublattice{SiteClass::b};
      else throw ConfigError("unknown target '" + name + "'");
      export_image(gen_training_image(spec, lat, rows, cols), ImageFormat::csv, out / (prefix + "target_" + name + ".csv"));
    }
  };
  render_targets(lattice, "");

  if (cfg.get_bool("transfer", false)) {
    LatticeSpec other = lattice;
    other.dopant_site = cfg.has("transfer.dopant_site")
                            ? cfg.get_int("transfer.dopant_site", 0)
                            : nearest_site_index(lattice, rows, cols, 0.75 * static_cast<double>(rows),
                                                 0.25 * static_cast<double>(cols));
    other.dopant_multiplier = cfg.get_double("transfer.dopant_multiplier", lattice.dopant_multiplier);
    ForwardModelSpec fm2 = fm;
    fm2.noise_seed = static_cast<std::uint64_t>(cfg.get_int("transfer.noise_seed", static_cast<long long>(fm.noise_seed + 1)));
    const SyntheticData syn2 = gen_synthetic_4d(other, fm2, rows, cols, syn.planted, workers);
    store_s4dm(syn2.data, out / "transfer.s4dm");
    export_image(syn2.ground_truth, ImageFormat::csv, out / "transfer_ground_truth.csv");
    log << "transfer dataset noise.seed=" << fm2.noise_seed << '\n';
    render_targets(other, "transfer_");
  }
}

void cmd_fit(const KeyValueConfig& cfg, std::ostream& log) {
  const auto lambda = cfg.get_optional_double("lambda");
  if (!lambda) throw ConfigError("fit needs a lambda");
  run_and_write(cfg, log, *lambda);
}

void cmd_path(const KeyValueConfig& cfg, std::ostream& log) { run_and_write(cfg, log, std::nullopt); }

void cmd_reconstruct(const KeyValueConfig& cfg, std::ostream& log) {
  const fs::path out = out_dir(cfg);
  const Dataset4D data = load_s4dm(cfg.require_string("dataset"));
  const FilterImage filter = load_filter(cfg.require_string("filter"));
  const ScanRegion region = cfg.has("region")
                                ? region_from_string(cfg.require_string("region"), data.scan_rows(), data.scan_cols())
                                : ScanRegion::full(data.scan_rows(), data.scan_cols());
  const RealImage img = apply_filter(data, filter, region, workers_of(cfg));
  const auto format = cfg.get_string("format", "csv");
  if (format == "csv" || format == "both") export_image(img, ImageFormat::csv, out / "reconstruction.csv");
  if (format == "pgm16" || format == "both") export_image(img, ImageFormat::pgm16, out / "reconstruction.pgm");
  if (format != "csv" && format != "pgm16" && format != "both") throw ConfigError("format must be csv, pgm16 or both");
  if (cfg.has("reference")) {
    const RealImage ref = read_image_csv(cfg.require_string("reference"));
    const RealImage ref_region = (ref.rows() == img.rows() && ref.cols() == img.cols()) ? ref : crop(ref, region);
    log << "rmse=" << format_double(rmse(img, ref_region)) << '\n';
  }
}

void cmd_validate(const KeyValueConfig& cfg, std::ostream& log) {
  const fs::path out = out_dir(cfg);
  const Dataset4D data = load_s4dm(cfg.require_string("dataset"));
  const FilterImage filter = load_filter(cfg.require_string("filter"));
  const RealImage target = read_image_csv(cfg.require_string("target"));
  if (target.rows() != data.scan_rows() || target.cols() != data.scan_cols())
    throw DimensionError("target image dims differ from the dataset scan dims");
  const auto [train, test] = split_from_config(cfg, data.scan_rows(), data.scan_cols());
  const RealImage recon = apply_filter(data, filter, workers_of(cfg));
  CsvTable t;
  t.header = {"region", "rmse"};
  const double full = rmse(recon, target);
  const double tr = rmse(crop(recon, train), crop(target, train));
  const double te = rmse(crop(recon, test), crop(target, test));
  t.rows = {{"train", format_double(tr)}, {"test", format_double(te)}, {"full", format_double(full)}};
  write_file_atomic(out / "validate.csv", t.to_string());
  log << "train_rmse=" << format_double(tr) << " test_rmse=" << format_double(te) << '\n';
}

void cmd_linetrace(const KeyValueConfig& cfg, std::ostream& log) {
  const fs::path out = out_dir(cfg);
  const RealImage img = read_image_csv(cfg.require_string("image"));
  const auto b = cfg.get_double_list("box");
  if (b.size() != 4) throw ConfigError("box must be x0,y0,x1,y1");
  const TraceBox box{static_cast<Index>(b[0]), static_cast<Index>(b[1]), static_cast<Index>(b[2]),
                     static_cast<Index>(b[3])};
  const auto trace = line_trace(img, box, static_cast<int>(cfg.get_int("width", 3)));
  CsvTable t;
  t.header = {"position", "value"};
  for (std::size_t q = 0; q < trace.size(); ++q) t.rows.push_back({std::to_string(q), format_double(trace[q])});
  write_file_atomic(out / "linetrace.csv", t.to_string());
  log << "trace of " << trace.size() << " samples\n";
}

void cmd_fillcurve(const KeyValueConfig& cfg, std::ostream& log) {
  const fs::path out = out_dir(cfg);
  const CsvTable curve = fill_curve(read_csv_table(cfg.require_string("diagnostics")));
  write_file_atomic(out / "fillcurve.csv", curve.to_string());
  log << curve.rows.size() << " rows\n";
}

}  // namespace stemfit
