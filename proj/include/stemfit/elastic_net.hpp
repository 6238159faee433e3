#pragma once

// Pathwise elastic net by cyclical coordinate descent.
//
//   minimize_w  (1/2n) ||y - X w||^2 + lambda * ( r ||w||_1 + (1 - r)/2 ||w||_2^2 )
//
// The full residual y - X w is maintained across coordinate updates, so one
// update costs O(n) and the p x p Gram matrix is never formed.

#include "stemfit/core.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <type_traits>
#include <vector>

namespace stemfit {

struct ElasticNetConfig {
  double mixing = 5e-5;  ///< r: 1 is the lasso, 0 is ridge.
  double tol = 1e-7;     ///< On max |dw_j| per sweep, relative to max(1, max |w|).
  int max_sweeps = 100000;
  bool center_y = false;
  bool center_X = false;
  bool trace_objective = false;  ///< Record the objective after every sweep.

  void validate() const {
    if (!(mixing >= 0.0 && mixing <= 1.0)) throw ConfigError("mixing weight r must lie in [0, 1]");
    if (!(tol > 0.0)) throw ConfigError("tolerance must be positive");
    if (max_sweeps < 1) throw ConfigError("max_sweeps must be at least 1");
  }
};

struct PathConfig {
  int n_lambda = 100;
  double lambda_min_ratio = 1e-3;
  std::vector<double> explicit_lambdas;  ///< Strictly descending, positive; overrides the grid.

  void validate() const {
    if (!explicit_lambdas.empty()) {
      for (std::size_t k = 0; k < explicit_lambdas.size(); ++k) {
        if (!(explicit_lambdas[k] > 0.0) || !std::isfinite(explicit_lambdas[k]))
          throw ConfigError("explicit lambdas must be positive and finite");
        if (k > 0 && !(explicit_lambdas[k] < explicit_lambdas[k - 1]))
          throw ConfigError("explicit lambdas must be strictly descending");
      }
      return;
    }
    if (n_lambda < 1) throw ConfigError("n_lambda must be at least 1");
    if (!(lambda_min_ratio > 0.0 && lambda_min_ratio < 1.0))
      throw ConfigError("lambda_min_ratio must lie in (0, 1)");
  }
};

struct FitResult {
  Eigen::VectorXd weights;
  double lambda = 0.0;
  double intercept = 0.0;  ///< Nonzero only when centering is enabled.
  int sweeps_used = 0;
  bool converged = false;
  double objective_value = 0.0;
  double filling_ratio = 0.0;
  double kkt_max_violation = 0.0;
  std::vector<double> objective_trace;  ///< Initial value, then one entry per sweep.
};

struct RegPath {
  std::vector<FitResult> entries;              ///< Strictly descending lambda.
  std::optional<double> lambda_max;            ///< Unset when an explicit list was used.
};

/// S_gamma(z) = max(0, 1 - gamma/|z|) z, written as a shrink towards zero so
/// that exact inputs give exact outputs.
template <typename Scalar>
constexpr Scalar soft_threshold(Scalar z, Scalar gamma) {
  if (z > gamma) return z - gamma;
  if (z < -gamma) return z + gamma;
  return Scalar(0);
}

/// Fraction of exactly nonzero entries.
inline double filling_ratio(const Eigen::Ref<const Eigen::VectorXd>& w) {
  if (w.size() == 0) return 0.0;
  const auto nnz = (w.array() != 0.0).count();
  return static_cast<double>(nnz) / static_cast<double>(w.size());
}

/// Coordinate-descent engine bound to one design and one response.
///
/// Holds per-column statistics computed once: c_j = (1/n) ||x_j - m_j||^2 with
/// m_j the column mean when centering X, else 0. The coordinate update is the
/// exact minimizer of the one-dimensional subproblem,
///
///   w_j <- S_{lambda r}(u_j) / (c_j + lambda (1 - r)),   u_j = (1/n) x_j' rho + c_j w_j,
///
/// which is the textbook update when every c_j = 1.
template <typename Scalar>
class ElasticNetSolver {
public:
  using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  using MatrixRef = Eigen::Ref<const Matrix>;

  ElasticNetSolver(const MatrixRef& X, const Eigen::Ref<const Eigen::VectorXd>& y,
                   ElasticNetConfig config = {}, bool check_finite = true)
      : X_(X), config_(config) {
    config_.validate();
    if (X_.rows() != y.size()) throw DimensionError("design rows and response length differ");
    if (X_.rows() == 0) throw DimensionError("design has no rows");
    if (check_finite) {
      if (!X_.allFinite()) throw NumericalError("design matrix contains non-finite values");
      if (!y.allFinite()) throw NumericalError("response contains non-finite values");
    }
    const Index n = X_.rows();
    const Index p = X_.cols();
    inv_n_ = 1.0 / static_cast<double>(n);

    y_offset_ = config_.center_y ? y.mean() : 0.0;
    y_ = y.array() - y_offset_;

    means_ = Eigen::VectorXd::Zero(p);
    scale_.resize(p);
    for (Index j = 0; j < p; ++j) {
      if (config_.center_X) means_[j] = X_.col(j).template cast<double>().mean();
      if (means_[j] == 0.0) {
        scale_[j] = X_.col(j).template cast<double>().squaredNorm() * inv_n_;
      } else {
        scale_[j] = (X_.col(j).template cast<double>().array() - means_[j]).square().sum() * inv_n_;
      }
    }
    // Sum of the residual is invariant under updates of centered columns.
    residual_sum_ = y_.sum();
  }

  Index n() const { return X_.rows(); }
  Index p() const { return X_.cols(); }
  const ElasticNetConfig& config() const { return config_; }
  const Eigen::VectorXd& column_scale() const { return scale_; }
  const Eigen::VectorXd& response() const { return y_; }

  /// Smallest lambda at which w = 0 satisfies the optimality conditions,
  /// max_j |(1/n) x_j' y| / r. Unavailable for r = 0.
  ///
  /// Rounded up until lambda * r is no smaller than the largest correlation
  /// as the update computes it, so a fit at this value from zero stays at
  /// exactly zero.
  std::optional<double> lambda_max() const {
    const double r = config_.mixing;
    if (r == 0.0) return std::nullopt;
    double peak = 0.0;
    for (Index j = 0; j < p(); ++j) {
      if (scale_[j] == 0.0) continue;
      peak = std::max(peak, std::abs(correlation(j, y_) * inv_n_));
    }
    double lm = peak / r;
    while (lm * r < peak) lm = std::nextafter(lm, std::numeric_limits<double>::infinity());
    return lm;
  }

  /// One cyclic pass over `coords` (ascending) updating w and the residual.
  /// Returns the largest absolute coordinate change.
  double sweep(Eigen::VectorXd& w, Eigen::VectorXd& rho, double lambda,
               const std::vector<Index>& coords) const {
    const double l1 = lambda * config_.mixing;
    const double l2 = lambda * (1.0 - config_.mixing);
    double max_change = 0.0;
    for (const Index j : coords) {
      if (scale_[j] == 0.0) {
        if (w[j] != 0.0) {
          update_residual(rho, j, -w[j]);
          w[j] = 0.0;
        }
        continue;
      }
      const double old = w[j];
      const double u = correlation(j, rho) * inv_n_ + scale_[j] * old;
      const double updated = soft_threshold(u, l1) / (scale_[j] + l2);
      const double delta = updated - old;
      if (delta != 0.0) {
        w[j] = updated;
        update_residual(rho, j, delta);
        max_change = std::max(max_change, std::abs(delta));
      }
    }
    return max_change;
  }

  /// Full pass in ascending coordinate order.
  double sweep(Eigen::VectorXd& w, Eigen::VectorXd& rho, double lambda) const {
    return sweep(w, rho, lambda, all_coords());
  }

  /// Objective evaluated from a maintained residual.
  double objective_from_residual(const Eigen::VectorXd& w, const Eigen::VectorXd& rho,
                                 double lambda) const {
    const double r = config_.mixing;
    return 0.5 * inv_n_ * rho.squaredNorm() +
           lambda * (r * w.template lpNorm<1>() + 0.5 * (1.0 - r) * w.squaredNorm());
  }

  /// Largest violation of the stationarity conditions, using a residual
  /// recomputed from scratch.
  double kkt_violation(const Eigen::VectorXd& w, double lambda) const {
    return kkt_from_residual(w, fresh_residual(w), lambda);
  }

  double kkt_from_residual(const Eigen::VectorXd& w, const Eigen::VectorXd& rho,
                           double lambda) const {
    const double l1 = lambda * config_.mixing;
    const double l2 = lambda * (1.0 - config_.mixing);
    double worst = 0.0;
    for (Index j = 0; j < p(); ++j) {
      if (scale_[j] == 0.0) continue;
      const double g = -correlation(j, rho) * inv_n_ + l2 * w[j];
      double v;
      if (w[j] > 0.0) {
        v = std::abs(g + l1);
      } else if (w[j] < 0.0) {
        v = std::abs(g - l1);
      } else {
        v = std::max(0.0, std::abs(g) - l1);
      }
      worst = std::max(worst, v);
    }
    return worst;
  }

  Eigen::VectorXd fresh_residual(const Eigen::VectorXd& w) const {
    Eigen::VectorXd rho = y_;
    rho.noalias() -= X_.template cast<double>() * w;
    if (config_.center_X) rho.array() += means_.dot(w);
    return rho;
  }

  double intercept(const Eigen::VectorXd& w) const { return y_offset_ - means_.dot(w); }

  /// Coordinate descent at one lambda, optionally warm-started.
  ///
  /// After each full sweep the active set (nonzero weights) is iterated alone
  /// until it settles; the fit ends when a full sweep moves no coordinate by
  /// more than the tolerance.
  FitResult fit(double lambda, const Eigen::VectorXd* warm_start = nullptr) const {
    if (!(lambda >= 0.0) || !std::isfinite(lambda)) throw ConfigError("lambda must be finite and >= 0");
    Eigen::VectorXd w = Eigen::VectorXd::Zero(p());
    if (warm_start != nullptr) {
      if (warm_start->size() != p()) throw DimensionError("warm start length differs from p");
      w = *warm_start;
    }
    Eigen::VectorXd rho = warm_start != nullptr ? fresh_residual(w) : y_;

    FitResult out;
    out.lambda = lambda;
    if (config_.trace_objective) out.objective_trace.push_back(objective_from_residual(w, rho, lambda));

    const auto everything = all_coords();
    std::vector<Index> active;
    int sweeps = 0;
    bool converged = false;
    while (sweeps < config_.max_sweeps) {
      const double change = sweep(w, rho, lambda, everything);
      ++sweeps;
      record(out, w, rho, lambda);
      if (change < threshold(w)) {
        converged = true;
        break;
      }
      active.clear();
      for (Index j = 0; j < p(); ++j)
        if (w[j] != 0.0) active.push_back(j);
      while (sweeps < config_.max_sweeps) {
        const double inner = sweep(w, rho, lambda, active);
        ++sweeps;
        record(out, w, rho, lambda);
        if (inner < threshold(w)) break;
      }
    }

    out.weights = std::move(w);
    out.sweeps_used = sweeps;
    out.converged = converged;
    out.intercept = intercept(out.weights);
    const Eigen::VectorXd fresh = fresh_residual(out.weights);
    out.objective_value = objective_from_residual(out.weights, fresh, lambda);
    if (!std::isfinite(out.objective_value)) throw NumericalError("objective became non-finite");
    out.filling_ratio = filling_ratio(out.weights);
    out.kkt_max_violation = kkt_from_residual(out.weights, fresh, lambda);
    return out;
  }

  /// Lambda sequence of a path: explicit list, or geometric from lambda_max
  /// down to lambda_min_ratio * lambda_max.
  std::vector<double> lambda_grid(const PathConfig& path) const {
    path.validate();
    if (!path.explicit_lambdas.empty()) return path.explicit_lambdas;
    const auto lm = lambda_max();
    if (!lm) throw ConfigError("lambda_max is unavailable for r = 0; supply explicit lambdas");
    if (!(*lm > 0.0)) throw NumericalError("lambda_max is zero: the response is orthogonal to every covariate");
    std::vector<double> grid(static_cast<std::size_t>(path.n_lambda));
    grid[0] = *lm;
    if (path.n_lambda == 1) return grid;
    const double step = std::log(path.lambda_min_ratio) / static_cast<double>(path.n_lambda - 1);
    for (int k = 1; k < path.n_lambda; ++k)
      grid[static_cast<std::size_t>(k)] = *lm * std::exp(step * static_cast<double>(k));
    return grid;
  }

  /// Warm-started fits along the lambda grid.
  RegPath fit_path(const PathConfig& path) const {
    RegPath out;
    const auto grid = lambda_grid(path);
    if (path.explicit_lambdas.empty()) out.lambda_max = grid.front();
    out.entries.reserve(grid.size());
    for (const double lambda : grid) {
      const Eigen::VectorXd* warm = out.entries.empty() ? nullptr : &out.entries.back().weights;
      out.entries.push_back(fit(lambda, warm));
    }
    return out;
  }

private:
  double correlation(Index j, const Eigen::VectorXd& rho) const {
    double dot = X_.col(j).template cast<double>().dot(rho);
    if (means_[j] != 0.0) dot -= means_[j] * residual_sum_;
    return dot;
  }

  // rho -= delta * (x_j - m_j), in one pass.
  void update_residual(Eigen::VectorXd& rho, Index j, double delta) const {
    if (means_[j] == 0.0) {
      rho.noalias() -= delta * X_.col(j).template cast<double>();
    } else {
      rho.array() -= delta * (X_.col(j).template cast<double>().array() - means_[j]);
    }
  }

  double threshold(const Eigen::VectorXd& w) const {
    const double peak = w.size() == 0 ? 0.0 : w.cwiseAbs().maxCoeff();
    return config_.tol * std::max(1.0, peak);
  }

  void record(FitResult& out, const Eigen::VectorXd& w, const Eigen::VectorXd& rho, double lambda) const {
    if (config_.trace_objective) out.objective_trace.push_back(objective_from_residual(w, rho, lambda));
  }

  std::vector<Index> all_coords() const {
    std::vector<Index> c(static_cast<std::size_t>(p()));
    for (Index j = 0; j < p(); ++j) c[static_cast<std::size_t>(j)] = j;
    return c;
  }

  MatrixRef X_;
  ElasticNetConfig config_;
  Eigen::VectorXd y_;
  Eigen::VectorXd means_;
  Eigen::VectorXd scale_;
  double y_offset_ = 0.0;
  double residual_sum_ = 0.0;
  double inv_n_ = 1.0;
};

// Free-function surface. Each accepts any dense Eigen matrix expression, or a
// BasicDesignMatrix. Expressions other than plain column-major matrices are
// evaluated once into a temporary.

/// Solver bound to `X`, which must outlive it.
template <typename Scalar>
ElasticNetSolver<Scalar> make_solver(const Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>& X,
                                     const Eigen::Ref<const Eigen::VectorXd>& y,
                                     const ElasticNetConfig& config, bool check_finite = true) {
  return ElasticNetSolver<Scalar>(X, y, config, check_finite);
}

namespace detail {

template <typename Derived, typename F>
decltype(auto) with_dense(const Eigen::MatrixBase<Derived>& X, F&& f) {
  using Scalar = typename Derived::Scalar;
  using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  if constexpr (std::is_same_v<Derived, Matrix>) {
    return f(X.derived());
  } else {
    const Matrix dense = X;
    return f(dense);
  }
}

}  // namespace detail

/// (1/2n) ||y - X w||^2 + lambda (r ||w||_1 + (1-r)/2 ||w||_2^2), no centering.
template <typename Derived>
double objective(const Eigen::MatrixBase<Derived>& X, const Eigen::Ref<const Eigen::VectorXd>& y,
                 const Eigen::Ref<const Eigen::VectorXd>& w, double lambda, double r) {
  if (X.rows() != y.size() || X.cols() != w.size()) throw DimensionError("objective: shape mismatch");
  if (X.rows() == 0) throw DimensionError("objective: empty design");
  const Eigen::VectorXd resid = y - X.template cast<double>() * w;
  const double n = static_cast<double>(X.rows());
  return resid.squaredNorm() / (2.0 * n) +
         lambda * (r * w.template lpNorm<1>() + 0.5 * (1.0 - r) * w.squaredNorm());
}

/// max_j |(1/n) x_j' y| / r; nullopt when r = 0.
template <typename Derived>
std::optional<double> lambda_max(const Eigen::MatrixBase<Derived>& X,
                                 const Eigen::Ref<const Eigen::VectorXd>& y, double r) {
  ElasticNetConfig cfg;
  cfg.mixing = r;
  return detail::with_dense(X, [&](const auto& dense) { return make_solver(dense, y, cfg, false).lambda_max(); });
}

/// Weights and full residual carried between sweeps.
struct SweepState {
  Eigen::VectorXd weights;
  Eigen::VectorXd residual;  ///< y - X w

  /// Zero weights, residual = y.
  static SweepState zero(Index p, const Eigen::Ref<const Eigen::VectorXd>& y) {
    return {Eigen::VectorXd::Zero(p), y};
  }
};

/// One cyclic pass in ascending order on an uncentered problem. Returns the
/// largest absolute coordinate change.
template <typename Derived>
double coordinate_sweep(SweepState& state, const Eigen::MatrixBase<Derived>& X,
                        const Eigen::Ref<const Eigen::VectorXd>& y, double lambda, double r) {
  if (state.weights.size() != X.cols() || state.residual.size() != X.rows())
    throw DimensionError("coordinate_sweep: state shape mismatch");
  ElasticNetConfig cfg;
  cfg.mixing = r;
  return detail::with_dense(X, [&](const auto& dense) {
    return make_solver(dense, y, cfg, false).sweep(state.weights, state.residual, lambda);
  });
}

template <typename Derived>
FitResult fit(const Eigen::MatrixBase<Derived>& X, const Eigen::Ref<const Eigen::VectorXd>& y,
              double lambda, const ElasticNetConfig& config,
              const Eigen::VectorXd* warm_start = nullptr) {
  return detail::with_dense(X, [&](const auto& dense) { return make_solver(dense, y, config).fit(lambda, warm_start); });
}

template <typename Derived>
RegPath fit_path(const Eigen::MatrixBase<Derived>& X, const Eigen::Ref<const Eigen::VectorXd>& y,
                 const ElasticNetConfig& config, const PathConfig& path) {
  return detail::with_dense(X, [&](const auto& dense) { return make_solver(dense, y, config).fit_path(path); });
}

/// Largest violation of the optimality conditions of the uncentered problem:
/// g_j = -(1/n) x_j'(y - X w) + lambda (1-r) w_j must equal -lambda r sign(w_j)
/// where w_j != 0 and satisfy |g_j| <= lambda r where w_j = 0.
template <typename Derived>
double kkt_check(const Eigen::MatrixBase<Derived>& X, const Eigen::Ref<const Eigen::VectorXd>& y,
                 const Eigen::Ref<const Eigen::VectorXd>& w, double lambda, double r) {
  if (X.rows() != y.size() || X.cols() != w.size()) throw DimensionError("kkt_check: shape mismatch");
  ElasticNetConfig cfg;
  cfg.mixing = r;
  return detail::with_dense(X, [&](const auto& dense) { return make_solver(dense, y, cfg, false).kkt_violation(w, lambda); });
}

// DesignMatrix overloads: the solver works directly on the stored matrix.

template <typename Scalar>
FitResult fit(const BasicDesignMatrix<Scalar>& X, const Eigen::Ref<const Eigen::VectorXd>& y,
              double lambda, const ElasticNetConfig& config,
              const Eigen::VectorXd* warm_start = nullptr) {
  return ElasticNetSolver<Scalar>(X.values, y, config).fit(lambda, warm_start);
}

template <typename Scalar>
RegPath fit_path(const BasicDesignMatrix<Scalar>& X, const Eigen::Ref<const Eigen::VectorXd>& y,
                 const ElasticNetConfig& config, const PathConfig& path) {
  return ElasticNetSolver<Scalar>(X.values, y, config).fit_path(path);
}

}  // namespace stemfit
