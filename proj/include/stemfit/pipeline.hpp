#pragma once

// Experiment orchestration behind the command-line tool: synthesis, path
// sweeps with train/test validation, reconstruction, line traces and
// filling-ratio curves. Each cmd_* function reads a KeyValueConfig and writes
// its outputs atomically; the lower-level run_* functions work in memory.

#include "stemfit/config.hpp"
#include "stemfit/core.hpp"
#include "stemfit/detector.hpp"
#include "stemfit/elastic_net.hpp"
#include "stemfit/io.hpp"
#include "stemfit/synth.hpp"

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace stemfit {

struct GeometrySelection {
  enum class Kind { pixelated, interior, exterior, segments };
  Kind kind = Kind::pixelated;
  int segments = 0;  ///< M; with rings/sectors unset, S = 4 and R = M / 4.
  int rings = 0;
  int sectors = 0;
  DiskOverrides disk;

  static GeometrySelection parse(const std::string& name);
};

/// Concrete geometry for a dataset; estimates the disk when one is needed.
DetectorGeometry resolve_geometry(const GeometrySelection& selection, const Dataset4D& data);

/// Storage precision chosen for the design under a memory budget.
enum class DesignPrecision { f64, f32 };

/// f64 if n*p*8 fits the budget, f32 if n*p*4 does, else throws ConfigError.
DesignPrecision choose_precision(Index n, Index p, double budget_bytes, std::ostream* warn = nullptr);

double rmse(const RealImage& a, const RealImage& b);

struct ValidationRow {
  double lambda = 0.0;
  int sweeps = 0;
  double objective = 0.0;
  double intercept = 0.0;
  double train_rmse = 0.0;
  double test_rmse = 0.0;
  double filling_ratio = 0.0;
  double kkt_violation = 0.0;
  std::optional<double> transfer_rmse;
};

struct ValidationReport {
  std::vector<ValidationRow> rows;  ///< Descending lambda.
  std::size_t selected = 0;         ///< argmin test RMSE.
};

struct TransferSet {
  const Dataset4D* data = nullptr;
  const RealImage* target = nullptr;
};

struct PathOptions {
  ElasticNetConfig solver;
  PathConfig path;
  double memory_budget_bytes = 4.0 * 1024 * 1024 * 1024;
  int workers = 1;
  std::optional<TransferSet> transfer;
};

struct PathRun {
  RegPath path;
  ValidationReport report;
  std::vector<FilterImage> filters;       ///< Detector-plane filters, float32-rounded as stored.
  std::vector<RealImage> reconstructions; ///< Full-scan predictions per entry.
  DetectorGeometry geometry;
  DesignPrecision precision = DesignPrecision::f64;
};

/// Fits the path on `train`, reconstructs the whole scan per lambda and
/// scores train/test RMSE against `target` (full-scan image). Scores use the
/// float32-rounded filters, so they can be recomputed from stored files.
PathRun run_path(const Dataset4D& data, const RealImage& target, const ScanRegion& train, const ScanRegion& test,
                 const DetectorGeometry& geometry, const PathOptions& options);

/// Single-lambda variant of run_path.
PathRun run_fit(const Dataset4D& data, const RealImage& target, const ScanRegion& train, const ScanRegion& test,
                const DetectorGeometry& geometry, double lambda, const PathOptions& options);

/// Pixel box, inclusive corners; x is the column, y the row.
struct TraceBox {
  Index x0 = 0, y0 = 0, x1 = 0, y1 = 0;
};

/// Averages `width` parallel lines along the long axis of the box, centred
/// on its mid-line, subtracts the image minimum and scales the trace max to 1.
std::vector<double> line_trace(const RealImage& image, const TraceBox& box, int width = 3);

/// (lambda, filling_ratio) columns of a diagnostics table, checked for
/// strictly descending lambda.
CsvTable fill_curve(const CsvTable& diagnostics);

CsvTable diagnostics_table(const RegPath& path);
CsvTable validation_table(const ValidationReport& report);

/// Lattice and forward-model specs from `lattice.*`, `detector.*`, `disk.*`,
/// `bump.*`, `truth.*` and `noise.*` keys.
LatticeSpec lattice_from_config(const KeyValueConfig& cfg);
ForwardModelSpec forward_model_from_config(const KeyValueConfig& cfg);
ElasticNetConfig solver_from_config(const KeyValueConfig& cfg);
PathConfig path_from_config(const KeyValueConfig& cfg);

/// Every key understood by the subcommands.
const std::vector<std::string>& known_config_keys();

// Subcommands. Each writes into `out` (created if missing) and logs to `log`.
void cmd_synth(const KeyValueConfig& cfg, std::ostream& log);
void cmd_fit(const KeyValueConfig& cfg, std::ostream& log);
void cmd_path(const KeyValueConfig& cfg, std::ostream& log);
void cmd_reconstruct(const KeyValueConfig& cfg, std::ostream& log);
void cmd_validate(const KeyValueConfig& cfg, std::ostream& log);
void cmd_linetrace(const KeyValueConfig& cfg, std::ostream& log);
void cmd_fillcurve(const KeyValueConfig& cfg, std::ostream& log);

}  // namespace stemfit
