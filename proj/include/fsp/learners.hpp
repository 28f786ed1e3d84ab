#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <limits>
#include <numeric>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "fsp/dataset.hpp"

namespace fsp {

/// Penalty on the weight vector: L1 (lasso), L2 (ridge), or their convex
/// combination rho*|w|_1 + (1-rho)*0.5*|w|_2^2 (elastic net).
struct Regularizer {
  enum class Kind { lasso, ridge, elastic_net };

  Kind kind = Kind::lasso;
  double rho = 0.5;  // only meaningful for elastic_net, in (0,1)

  static Regularizer lasso() { return {Kind::lasso, 0.0}; }
  static Regularizer ridge() { return {Kind::ridge, 0.0}; }
  static Regularizer elastic_net(double rho) {
    if (!(rho > 0.0 && rho < 1.0))
      throw std::invalid_argument("elastic_net: rho must be strictly inside (0,1)");
    return {Kind::elastic_net, rho};
  }

  // coefficient of |w|_1 and of 0.5*|w|_2^2 in Omega
  double l1() const {
    switch (kind) {
      case Kind::lasso: return 1.0;
      case Kind::ridge: return 0.0;
      default: return rho;
    }
  }
  double l2() const {
    switch (kind) {
      case Kind::lasso: return 0.0;
      case Kind::ridge: return 1.0;
      default: return 1.0 - rho;
    }
  }

  const char* name() const {
    switch (kind) {
      case Kind::lasso: return "lasso";
      case Kind::ridge: return "ridge";
      default: return "elastic_net";
    }
  }
};

inline Regularizer regularizer_from_name(const std::string& name, double rho = 0.5) {
  if (name == "lasso") return Regularizer::lasso();
  if (name == "ridge") return Regularizer::ridge();
  if (name == "elastic_net" || name == "en") return Regularizer::elastic_net(rho);
  throw std::invalid_argument("unknown regularizer '" + name + "'");
}

namespace detail {

// The solver itself is plain regression: it accepts any finite targets
// (the hand-check instances use 0/1), while the pipeline-level Dataset
// invariant of -1/+1 labels is enforced at the data boundary.
inline void check_regression_shapes(const Dataset& data) {
  if (data.features.rows() < 1 || data.features.cols() < 1)
    throw std::invalid_argument("learner: need n >= 1 and d >= 1");
  if (data.labels.size() != data.features.rows())
    throw std::invalid_argument("learner: labels/features length mismatch");
  if (!data.features.allFinite() || !data.labels.allFinite())
    throw std::invalid_argument("learner: non-finite inputs");
}

}  // namespace detail

struct LearnerConfig {
  Regularizer reg;
  double lambda = 0.01;
  int max_iterations = 10000;
  double tolerance = 1e-8;  // max-norm change of (w, b) per sweep

  void validate() const {
    if (!(lambda > 0.0)) throw std::invalid_argument("LearnerConfig: lambda must be > 0");
    if (max_iterations < 1) throw std::invalid_argument("LearnerConfig: max_iterations >= 1");
    if (!(tolerance > 0.0)) throw std::invalid_argument("LearnerConfig: tolerance must be > 0");
  }
};

struct LinearModel {
  Eigen::VectorXd weights;
  double bias = 0.0;

  void validate() const {
    if (!weights.allFinite() || !std::isfinite(bias))
      throw std::invalid_argument("LinearModel: non-finite entries");
  }
};

/// Raised when coordinate descent runs out of sweeps; carries the best
/// iterate so callers can inspect how close it got.
class non_convergence_error : public std::runtime_error {
 public:
  non_convergence_error(LinearModel best, double residual, int iterations)
      : std::runtime_error("learner did not converge in " + std::to_string(iterations) +
                           " sweeps (KKT residual " + std::to_string(residual) + ")"),
        best_iterate(std::move(best)),
        residual(residual),
        iterations(iterations) {}

  LinearModel best_iterate;
  double residual;
  int iterations;
};

inline double decision(const LinearModel& model, const Eigen::VectorXd& x) {
  if (x.size() != model.weights.size())
    throw std::invalid_argument("decision: dimension mismatch");
  return model.weights.dot(x) + model.bias;
}

// sign with ties going to +1
inline double classify(const LinearModel& model, const Eigen::VectorXd& x) {
  return decision(model, x) >= 0.0 ? 1.0 : -1.0;
}

/// Value of (1/n) sum_i 0.5 (w.x_i + b - y_i)^2 + lambda * Omega(w).
inline double objective(const Dataset& data, const LinearModel& model,
                        const LearnerConfig& config) {
  if (data.d() != model.weights.size())
    throw std::invalid_argument("objective: dimension mismatch");
  if (data.n() < 1) throw std::invalid_argument("objective: empty dataset");
  Eigen::VectorXd resid =
      data.features * model.weights + Eigen::VectorXd::Constant(data.n(), model.bias) -
      data.labels;
  double loss = 0.5 * resid.squaredNorm() / static_cast<double>(data.n());
  double omega = config.reg.l1() * model.weights.lpNorm<1>() +
                 config.reg.l2() * 0.5 * model.weights.squaredNorm();
  return loss + config.lambda * omega;
}

/// Max-norm violation of the stationarity conditions. For an L1 term a
/// zero weight only needs |smooth gradient| <= lambda * l1, so its
/// residual is the amount by which that bound is exceeded.
inline double kkt_residual(const Dataset& data, const LinearModel& model,
                           const LearnerConfig& config) {
  if (data.d() != model.weights.size())
    throw std::invalid_argument("kkt_residual: dimension mismatch");
  const double n = static_cast<double>(data.n());
  const double l1 = config.reg.l1(), l2 = config.reg.l2();
  Eigen::VectorXd resid =
      data.features * model.weights + Eigen::VectorXd::Constant(data.n(), model.bias) -
      data.labels;
  Eigen::VectorXd grad_smooth = data.features.transpose() * resid / n;
  double worst = std::abs(resid.mean());
  for (Eigen::Index j = 0; j < model.weights.size(); ++j) {
    double wj = model.weights[j];
    double r;
    if (wj != 0.0 || l1 == 0.0) {
      double sgn = wj > 0.0 ? 1.0 : (wj < 0.0 ? -1.0 : 0.0);
      r = std::abs(grad_smooth[j] + config.lambda * (l1 * sgn + l2 * wj));
    } else {
      r = std::max(0.0, std::abs(grad_smooth[j]) - config.lambda * l1);
    }
    worst = std::max(worst, r);
  }
  return worst;
}

/// Smallest lambda at which L1 shrinkage zeroes every weight (with the
/// bias at the label mean). For ridge the same quantity is returned as a
/// scale anchor for grids; ridge itself never reaches exact zero.
inline double lambda_max(const Dataset& data, const Regularizer& reg) {
  detail::check_regression_shapes(data);
  double ybar = data.labels.mean();
  Eigen::VectorXd corr =
      data.features.transpose() * (data.labels - Eigen::VectorXd::Constant(data.n(), ybar)) /
      static_cast<double>(data.n());
  double lm = corr.cwiseAbs().maxCoeff();
  if (reg.l1() > 0.0 && reg.kind != Regularizer::Kind::lasso) lm /= reg.l1();
  return lm;
}

struct TrainDiagnostics {
  std::vector<double> objective_history;  // one entry per sweep
  int sweeps = 0;
};

/// Trains the Eq.-2 criterion. Pure ridge is solved directly through its
/// normal equations (unpenalized bias included). With an L1 term the
/// solver is cyclic coordinate descent with exact soft-threshold updates
/// and glmnet-style active-set sweeps between full passes; the bias is
/// minimized exactly each sweep. Convergence needs a full sweep whose
/// (w,b) max-norm step is below tolerance and a KKT residual within
/// 10x tolerance.
inline LinearModel train(const Dataset& data, const LearnerConfig& config,
                         std::optional<LinearModel> warm_start = {},
                         TrainDiagnostics* diag = nullptr) {
  detail::check_regression_shapes(data);
  config.validate();
  const Eigen::Index n = data.n(), d = data.d();
  const double l1 = config.reg.l1(), l2 = config.reg.l2();
  const double lam = config.lambda;
  if (diag) {
    diag->objective_history.clear();
    diag->sweeps = 0;
  }

  if (l1 == 0.0) {
    // ridge: one symmetric solve; warm starts are irrelevant here
    Eigen::MatrixXd sys(d + 1, d + 1);
    sys.topLeftCorner(d, d) =
        data.features.transpose() * data.features / static_cast<double>(n);
    sys.topLeftCorner(d, d).diagonal().array() += lam * l2;
    Eigen::VectorXd mu = data.features.colwise().mean().transpose();
    sys.block(0, d, d, 1) = mu;
    sys.block(d, 0, 1, d) = mu.transpose();
    sys(d, d) = 1.0;
    Eigen::VectorXd rhs(d + 1);
    rhs.head(d) = data.features.transpose() * data.labels / static_cast<double>(n);
    rhs[d] = data.labels.mean();
    Eigen::VectorXd sol = sys.ldlt().solve(rhs);
    LinearModel m;
    m.weights = sol.head(d);
    m.bias = sol[d];
    m.validate();
    if (diag) {
      diag->objective_history.push_back(objective(data, m, config));
      diag->sweeps = 1;
    }
    double res = kkt_residual(data, m, config);
    if (res > 10.0 * config.tolerance) throw non_convergence_error(m, res, 1);
    return m;
  }

  LinearModel m;
  if (warm_start) {
    if (warm_start->weights.size() != d)
      throw std::invalid_argument("train: warm start dimension mismatch");
    warm_start->validate();
    m = *warm_start;
  } else {
    m.weights = Eigen::VectorXd::Zero(d);
    m.bias = 0.0;
  }

  // per-coordinate curvature (1/n)|x_j|^2
  Eigen::VectorXd curv(d);
  for (Eigen::Index j = 0; j < d; ++j)
    curv[j] = data.features.col(j).squaredNorm() / static_cast<double>(n);

  Eigen::VectorXd resid = data.labels - data.features * m.weights -
                          Eigen::VectorXd::Constant(n, m.bias);

  auto sweep_over = [&](const std::vector<Eigen::Index>& coords) {
    double step = 0.0;
    for (Eigen::Index j : coords) {
      double wj = m.weights[j];
      double g = data.features.col(j).dot(resid) / static_cast<double>(n) + curv[j] * wj;
      double denom = curv[j] + lam * l2;
      double nw;
      if (denom <= 0.0) {
        nw = 0.0;  // all-zero feature column
      } else {
        double t = std::abs(g) - lam * l1;
        nw = t > 0.0 ? (g > 0.0 ? t : -t) / denom : 0.0;
      }
      if (nw != wj) {
        step = std::max(step, std::abs(nw - wj));
        resid -= data.features.col(j) * (nw - wj);
        m.weights[j] = nw;
      }
    }
    double db = resid.mean();
    step = std::max(step, std::abs(db));
    if (db != 0.0) {
      resid.array() -= db;
      m.bias += db;
    }
    if (diag) {
      diag->objective_history.push_back(objective(data, m, config));
      ++diag->sweeps;
    }
    return step;
  };

  std::vector<Eigen::Index> all(static_cast<size_t>(d));
  std::iota(all.begin(), all.end(), 0);
  std::vector<Eigen::Index> active;

  int sweeps_left = config.max_iterations;
  while (sweeps_left > 0) {
    double step = sweep_over(all);
    --sweeps_left;
    if (step < config.tolerance &&
        kkt_residual(data, m, config) <= 10.0 * config.tolerance)
      return m;
    // iterate the current support until it settles, then re-check in full
    active.clear();
    for (Eigen::Index j = 0; j < d; ++j)
      if (m.weights[j] != 0.0) active.push_back(j);
    while (sweeps_left > 0 && !active.empty()) {
      double inner = sweep_over(active);
      --sweeps_left;
      if (inner < config.tolerance) break;
    }
  }
  throw non_convergence_error(m, kkt_residual(data, m, config), config.max_iterations);
}

struct LambdaSelection {
  double lambda_best = 0.0;
  std::vector<std::pair<double, double>> path;  // (lambda, mean cv error)
};

/// Fraction of points whose sign prediction disagrees with the label.
/// (Shared by metrics; defined here so select_lambda can use it.)
inline double classification_error(const LinearModel& model, const Dataset& data) {
  if (data.n() < 1) throw std::invalid_argument("classification_error: empty dataset");
  if (data.d() != model.weights.size())
    throw std::invalid_argument("classification_error: dimension mismatch");
  Eigen::VectorXd dec =
      data.features * model.weights + Eigen::VectorXd::Constant(data.n(), model.bias);
  Eigen::Index wrong = 0;
  for (Eigen::Index i = 0; i < data.n(); ++i) {
    double pred = dec[i] >= 0.0 ? 1.0 : -1.0;
    if (pred != data.labels[i]) ++wrong;
  }
  return static_cast<double>(wrong) / static_cast<double>(data.n());
}

/// k-fold cross validation over a descending lambda grid, warm starting
/// each fold's model along the path. Ties go to the larger lambda
/// (the sparser model). Folds are assigned round-robin: sample i lands
/// in fold i % folds.
inline LambdaSelection select_lambda(const Dataset& data, const Regularizer& reg,
                                     const std::vector<double>& grid, int folds,
                                     const LearnerConfig& base = {}) {
  data.validate();
  if (grid.empty()) throw std::invalid_argument("select_lambda: grid must be nonempty");
  for (size_t i = 0; i < grid.size(); ++i) {
    if (!(grid[i] > 0.0))
      throw std::invalid_argument("select_lambda: grid values must be > 0");
    if (i > 0 && !(grid[i] < grid[i - 1]))
      throw std::invalid_argument("select_lambda: grid must be strictly descending");
  }
  if (folds < 2) throw std::invalid_argument("select_lambda: folds must be >= 2");
  if (static_cast<Eigen::Index>(folds) > data.n())
    throw std::invalid_argument("select_lambda: more folds than samples");

  struct Fold {
    Dataset fit;
    Dataset holdout;
    std::optional<LinearModel> warm;
  };
  std::vector<Fold> parts(static_cast<size_t>(folds));
  for (int fidx = 0; fidx < folds; ++fidx) {
    std::vector<Eigen::Index> in, out;
    for (Eigen::Index i = 0; i < data.n(); ++i)
      (i % folds == fidx ? out : in).push_back(i);
    auto gather = [&](const std::vector<Eigen::Index>& rows) {
      Dataset ds;
      ds.features.resize(static_cast<Eigen::Index>(rows.size()), data.d());
      ds.labels.resize(static_cast<Eigen::Index>(rows.size()));
      for (size_t i = 0; i < rows.size(); ++i) {
        ds.features.row(static_cast<Eigen::Index>(i)) = data.features.row(rows[i]);
        ds.labels[static_cast<Eigen::Index>(i)] = data.labels[rows[i]];
      }
      return ds;
    };
    parts[static_cast<size_t>(fidx)].fit = gather(in);
    parts[static_cast<size_t>(fidx)].holdout = gather(out);
  }

  LambdaSelection sel;
  double best_err = std::numeric_limits<double>::infinity();
  for (double lam : grid) {
    LearnerConfig cfg = base;
    cfg.reg = reg;
    cfg.lambda = lam;
    double err_sum = 0.0;
    for (auto& fold : parts) {
      LinearModel m = train(fold.fit, cfg, fold.warm);
      fold.warm = m;
      err_sum += classification_error(m, fold.holdout);
    }
    double err = err_sum / folds;
    sel.path.emplace_back(lam, err);
    if (err < best_err) {  // strict: equal error keeps the larger lambda
      best_err = err;
      sel.lambda_best = lam;
    }
  }
  return sel;
}

/// 50 log-spaced values from lambda_max down to lambda_max * 1e-3.
inline std::vector<double> default_lambda_grid(const Dataset& data, const Regularizer& reg,
                                               int count = 50, double min_ratio = 1e-3) {
  if (count < 1) throw std::invalid_argument("default_lambda_grid: count >= 1");
  if (!(min_ratio > 0.0 && min_ratio < 1.0))
    throw std::invalid_argument("default_lambda_grid: min_ratio in (0,1)");
  double top = lambda_max(data, reg);
  if (top <= 0.0) top = 1e-3;  // constant labels; any small grid will do
  std::vector<double> grid(static_cast<size_t>(count));
  if (count == 1) {
    grid[0] = top;
    return grid;
  }
  double logtop = std::log(top), logbot = std::log(top * min_ratio);
  for (int i = 0; i < count; ++i)
    grid[static_cast<size_t>(i)] =
        std::exp(logtop + (logbot - logtop) * static_cast<double>(i) / (count - 1));
  return grid;
}

}  // namespace fsp
