#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

#include "fsp/dataset.hpp"
#include "fsp/learners.hpp"

namespace fsp {

/// Per-feature feasible interval for attack points.
struct Box {
  Eigen::VectorXd lower;
  Eigen::VectorXd upper;

  static Box uniform(double lo, double hi, Eigen::Index d) {
    Box b;
    b.lower = Eigen::VectorXd::Constant(d, lo);
    b.upper = Eigen::VectorXd::Constant(d, hi);
    return b;
  }

  void validate(Eigen::Index d) const {
    if (lower.size() != d || upper.size() != d)
      throw std::invalid_argument("Box: dimension mismatch");
    for (Eigen::Index j = 0; j < d; ++j)
      if (!(lower[j] <= upper[j]))
        throw std::invalid_argument("Box: lower > upper at feature " + std::to_string(j));
  }

  bool contains(const Eigen::VectorXd& x, double slack = 0.0) const {
    for (Eigen::Index j = 0; j < x.size(); ++j)
      if (x[j] < lower[j] - slack || x[j] > upper[j] + slack) return false;
    return true;
  }
};

/// Componentwise clamp onto the box; identity on interior points.
inline Eigen::VectorXd project_box(const Eigen::VectorXd& x, const Box& box) {
  box.validate(x.size());
  return x.cwiseMax(box.lower).cwiseMin(box.upper);
}

struct AttackConfig {
  int q = 1;                        // number of attack points
  double beta = 0.5;                // line-search backoff, in (0,1)
  double sigma = 1e-4;              // sufficient-increase constant
  double epsilon = 1e-6;            // outer convergence on |W_p - W_{p-1}|
  Box box;                          // empty -> [0,1]^d at run time
  int max_outer_iterations = 500;
  int max_linesearch_steps = 30;
  bool warm_start = true;           // reuse (w,b) across inner retrains
  bool discrete = false;
  double discrete_step = 0.05;      // grid increment in discrete mode
  int discrete_top_t = 0;           // candidate features per move; 0 -> all d

  void validate() const {
    if (q < 1) throw std::invalid_argument("AttackConfig: q must be >= 1");
    if (!(beta > 0.0 && beta < 1.0))
      throw std::invalid_argument("AttackConfig: beta must be in (0,1)");
    if (!(sigma > 0.0)) throw std::invalid_argument("AttackConfig: sigma must be > 0");
    if (!(epsilon > 0.0)) throw std::invalid_argument("AttackConfig: epsilon must be > 0");
    if (max_outer_iterations < 1 || max_linesearch_steps < 1)
      throw std::invalid_argument("AttackConfig: iteration caps must be >= 1");
    if (discrete && !(discrete_step > 0.0))
      throw std::invalid_argument("AttackConfig: discrete_step must be > 0");
  }
};

/// The attack points, their fixed labels, the attacker's current inner
/// solution, and the W trace of the run.
struct AttackState {
  Eigen::MatrixXd points;                  // q x d
  Eigen::VectorXd labels;                  // q entries, -1/+1
  LinearModel model;                       // attacker-side (w, b)
  std::vector<double> objective_history;   // W per outer iteration, [0] = initial
  std::vector<Eigen::MatrixXd> trajectory; // points snapshot per outer iteration
  bool stalled = false;                    // line search failed for every moving point
  int damped_solves = 0;                   // times the KKT solve needed damping
  std::string stopped_reason;

  Eigen::Index q() const { return points.rows(); }
  Eigen::Index d() const { return points.cols(); }

  void validate() const {
    if (points.rows() < 1) throw std::invalid_argument("AttackState: no attack points");
    if (labels.size() != points.rows())
      throw std::invalid_argument("AttackState: labels/points mismatch");
    for (Eigen::Index c = 0; c < labels.size(); ++c)
      if (labels[c] != 1.0 && labels[c] != -1.0)
        throw std::invalid_argument("AttackState: attack label not in {-1,+1}");
  }
};

/// The attacker's objective W: the learner criterion evaluated on the
/// surrogate data with the attack points excluded from the loss.
inline double attacker_objective(const Dataset& surrogate, const LinearModel& model,
                                 const LearnerConfig& config) {
  return objective(surrogate, model, config);
}

/// The regularizer (sub)gradient r = dOmega/dw pinned down by stationarity
/// at the optimum: r = -(1/(lambda n)) sum_i (f(x_i) - y_i) x_i. For ridge
/// this reduces to w itself, which is returned exactly.
inline Eigen::VectorXd optimal_subgradient(const Dataset& poisoned, const LinearModel& model,
                                           const LearnerConfig& config,
                                           double residual_threshold = 1e-5) {
  double res = kkt_residual(poisoned, model, config);
  if (res > residual_threshold)
    throw std::runtime_error("optimal_subgradient: model is not at an optimum (KKT residual " +
                             std::to_string(res) + " > " +
                             std::to_string(residual_threshold) + ")");
  if (config.reg.kind == Regularizer::Kind::ridge) return model.weights;
  Eigen::VectorXd resid = poisoned.features * model.weights +
                          Eigen::VectorXd::Constant(poisoned.n(), model.bias) -
                          poisoned.labels;
  return -(poisoned.features.transpose() * resid) /
         (config.lambda * static_cast<double>(poisoned.n()));
}

/// Derivatives of the trained solution with respect to one attack point,
/// from differentiating the stationarity conditions.
struct KktDerivatives {
  Eigen::MatrixXd dw_dxc;     // d x d, entry (j,k) = dw_j / dx_c^k
  Eigen::RowVectorXd db_dxc;  // 1 x d
  bool damped = false;        // solve needed ridge damping
  double residual = 0.0;      // relative residual of the linear solve
};

/// Solve the differentiated-KKT linear system for (dw/dx_c, db/dx_c).
/// The block matrix pairs the second-moment matrix of the poisoned data
/// (plus lambda*v from the smooth part of Omega) with its mean vector;
/// the right-hand side is -(1/n) [x_c w^T + (f(x_c)-y_c) I ; w^T].
///
/// When Omega has an L1 part, weights at exactly zero sit strictly inside
/// the subdifferential and stay zero under small perturbations of x_c, so
/// the system is restricted to the active weights (plus the bias) and the
/// inactive rows of dw/dx_c are zero. Rank-deficient systems fall back to
/// a damped solve (1e-9 on the diagonal) and are flagged.
inline KktDerivatives solve_kkt_system(const Dataset& poisoned, const LinearModel& model,
                                       const LearnerConfig& config,
                                       const Eigen::VectorXd& attack_point,
                                       double attack_label) {
  const Eigen::Index d = poisoned.d();
  const double n = static_cast<double>(poisoned.n());
  if (attack_point.size() != d || model.weights.size() != d)
    throw std::invalid_argument("solve_kkt_system: dimension mismatch");

  std::vector<Eigen::Index> active;
  if (config.reg.l1() > 0.0) {
    for (Eigen::Index j = 0; j < d; ++j)
      if (model.weights[j] != 0.0) active.push_back(j);
  } else {
    active.resize(static_cast<size_t>(d));
    std::iota(active.begin(), active.end(), 0);
  }
  const Eigen::Index a = static_cast<Eigen::Index>(active.size());

  Eigen::MatrixXd xa(poisoned.n(), a);
  for (Eigen::Index i = 0; i < a; ++i)
    xa.col(i) = poisoned.features.col(active[static_cast<size_t>(i)]);

  Eigen::MatrixXd sys(a + 1, a + 1);
  sys.topLeftCorner(a, a) = xa.transpose() * xa / n;
  sys.topLeftCorner(a, a).diagonal().array() += config.lambda * config.reg.l2();
  Eigen::VectorXd mu = xa.colwise().mean().transpose();
  sys.block(0, a, a, 1) = mu;
  sys.block(a, 0, 1, a) = mu.transpose();
  sys(a, a) = 1.0;

  double fc = model.weights.dot(attack_point) + model.bias;
  Eigen::MatrixXd rhs(a + 1, d);
  for (Eigen::Index i = 0; i < a; ++i) {
    Eigen::Index j = active[static_cast<size_t>(i)];
    rhs.row(i) = attack_point[j] * model.weights.transpose();
    rhs(i, j) += fc - attack_label;
  }
  rhs.row(a) = model.weights.transpose();
  rhs /= -n;

  Eigen::MatrixXd sol = sys.ldlt().solve(rhs);
  double rhs_norm = std::max(rhs.norm(), 1e-300);
  double rel = (sys * sol - rhs).norm() / rhs_norm;

  KktDerivatives out;
  if (!sol.allFinite() || rel > 1e-8) {
    Eigen::MatrixXd damped = sys;
    damped.diagonal().array() += 1e-9;
    sol = damped.ldlt().solve(rhs);
    rel = (damped * sol - rhs).norm() / rhs_norm;
    out.damped = true;
  }
  out.residual = rel;
  out.dw_dxc = Eigen::MatrixXd::Zero(d, d);
  for (Eigen::Index i = 0; i < a; ++i)
    out.dw_dxc.row(active[static_cast<size_t>(i)]) = sol.row(i);
  out.db_dxc = sol.row(a);
  return out;
}

/// Gradient of W with respect to the attack point:
/// (1/m) sum_j (f(x_j) - y_j) (x_j^T dw/dx_c + db/dx_c) + lambda r dw/dx_c.
inline Eigen::VectorXd gradient_W(const Dataset& surrogate, const LinearModel& model,
                                  const LearnerConfig& config, const KktDerivatives& kkt,
                                  const Eigen::VectorXd& r) {
  const Eigen::Index d = surrogate.d();
  if (kkt.dw_dxc.rows() != d || kkt.dw_dxc.cols() != d || kkt.db_dxc.size() != d ||
      r.size() != d || model.weights.size() != d)
    throw std::invalid_argument("gradient_W: dimension mismatch");
  Eigen::VectorXd resid = surrogate.features * model.weights +
                          Eigen::VectorXd::Constant(surrogate.n(), model.bias) -
                          surrogate.labels;
  Eigen::RowVectorXd g =
      resid.transpose() * (surrogate.features * kkt.dw_dxc) / static_cast<double>(surrogate.n());
  g += resid.mean() * kkt.db_dxc;
  g += config.lambda * (r.transpose() * kkt.dw_dxc);
  return g.transpose();
}

namespace detail {

// Shared plumbing for the two poisoning loops: keeps the stacked
// surrogate-plus-attack-points dataset and retrains in place.
class PoisonRun {
 public:
  PoisonRun(const Dataset& surrogate, const AttackState& init, const LearnerConfig& learner,
            const AttackConfig& config)
      : surrogate_(surrogate), learner_(learner), config_(config), state_(init) {
    surrogate.validate();
    init.validate();
    learner.validate();
    config.validate();
    if (init.d() != surrogate.d())
      throw std::invalid_argument("poison: attack point dimension mismatch");

    box_ = config.box;
    if (box_.lower.size() == 0) box_ = Box::uniform(0.0, 1.0, surrogate.d());
    box_.validate(surrogate.d());

    const Eigen::Index n0 = surrogate.n(), q = init.q();
    poisoned_.features.resize(n0 + q, surrogate.d());
    poisoned_.features.topRows(n0) = surrogate.features;
    poisoned_.features.bottomRows(q) = state_.points;
    poisoned_.labels.resize(n0 + q);
    poisoned_.labels.head(n0) = surrogate.labels;
    poisoned_.labels.tail(q) = state_.labels;
    poisoned_.role = surrogate.role;

    state_.objective_history.clear();
    state_.trajectory.clear();
    state_.stalled = false;
    state_.damped_solves = 0;
    state_.stopped_reason.clear();
  }

  const Box& box() const { return box_; }
  AttackState& state() { return state_; }
  const Dataset& poisoned() const { return poisoned_; }

  void set_point(Eigen::Index c, const Eigen::VectorXd& x) {
    state_.points.row(c) = x.transpose();
    poisoned_.features.row(surrogate_.n() + c) = x.transpose();
  }

  // retrain on the poisoned set; returns W on the clean surrogate
  double retrain(int outer, Eigen::Index c) {
    std::optional<LinearModel> warm;
    if (config_.warm_start && state_.model.weights.size() == surrogate_.d())
      warm = state_.model;
    try {
      state_.model = train(poisoned_, learner_, warm);
    } catch (const non_convergence_error& e) {
      throw std::runtime_error("poison: learner did not converge (outer iteration " +
                               std::to_string(outer) + ", attack point " + std::to_string(c) +
                               "): " + e.what());
    }
    return attacker_objective(surrogate_, state_.model, learner_);
  }

  Eigen::VectorXd gradient(Eigen::Index c) {
    Eigen::VectorXd r =
        optimal_subgradient(poisoned_, state_.model, learner_,
                            std::max(1e3 * learner_.tolerance, 1e-6));
    KktDerivatives kkt = solve_kkt_system(poisoned_, state_.model, learner_,
                                          state_.points.row(c).transpose(), state_.labels[c]);
    if (kkt.damped) ++state_.damped_solves;
    return gradient_W(surrogate_, state_.model, learner_, kkt, r);
  }

  void record(double w_value) {
    state_.objective_history.push_back(w_value);
    state_.trajectory.push_back(state_.points);
  }

 private:
  const Dataset& surrogate_;
  LearnerConfig learner_;
  AttackConfig config_;
  AttackState state_;
  Dataset poisoned_;
  Box box_;
};

}  // namespace detail

/// Multi-point poisoning: cycle over the attack points, for each one take
/// the feasible ascent direction d = project(x + grad W) - x and backtrack
/// eta = beta^k until W(x + eta d) >= W(x) + sigma eta |d|^2. Stops when a
/// full cycle changes W by less than epsilon, when every moving point's
/// line search fails (stalled), or at the iteration cap.
inline AttackState poison(const Dataset& train_or_surrogate, const AttackState& initial_attacks,
                          const LearnerConfig& learner, const AttackConfig& config) {
  detail::PoisonRun run(train_or_surrogate, initial_attacks, learner, config);
  for (Eigen::Index c = 0; c < initial_attacks.q(); ++c) {
    if (!run.box().contains(initial_attacks.points.row(c).transpose()))
      throw std::invalid_argument("poison: initial attack point " + std::to_string(c) +
                                  " outside the box");
  }

  const Eigen::Index q = initial_attacks.q();
  double w_prev = run.retrain(0, 0);
  run.record(w_prev);

  for (int outer = 0; outer < config.max_outer_iterations; ++outer) {
    bool any_direction = false;
    bool any_accept = false;
    for (Eigen::Index c = 0; c < q; ++c) {
      double w_base = run.retrain(outer, c);
      Eigen::VectorXd x = run.state().points.row(c).transpose();
      Eigen::VectorXd grad = run.gradient(c);
      Eigen::VectorXd dir = project_box(x + grad, run.box()) - x;
      double dir_sq = dir.squaredNorm();
      if (dir_sq <= 1e-30) continue;
      any_direction = true;

      LinearModel kept = run.state().model;
      bool accepted = false;
      for (int k = 0; k < config.max_linesearch_steps; ++k) {
        double eta = std::pow(config.beta, k);
        run.set_point(c, x + eta * dir);
        double w_try = run.retrain(outer, c);
        if (w_try >= w_base + config.sigma * eta * dir_sq) {
          accepted = true;
          break;
        }
        run.state().model = kept;  // warm start from the accepted solution
      }
      if (!accepted) {
        run.set_point(c, x);
        run.state().model = kept;
      }
      any_accept = any_accept || accepted;
    }

    double w_now = run.retrain(outer, 0);
    run.record(w_now);
    if (any_direction && !any_accept) {
      run.state().stalled = true;
      run.state().stopped_reason = "stalled";
      return run.state();
    }
    if (std::abs(w_now - w_prev) < config.epsilon) {
      run.state().stopped_reason = "converged";
      return run.state();
    }
    w_prev = w_now;
  }
  run.state().stopped_reason = "max_iterations";
  return run.state();
}

/// Discrete-space variant: the gradient ranks candidate features, each
/// candidate neighbor perturbs one feature by one grid step in the
/// sign-correct direction, and the point moves to the neighbor with the
/// largest W. Converges when no neighbor improves W.
inline AttackState poison_discrete(const Dataset& train_or_surrogate,
                                   const AttackState& initial_attacks,
                                   const LearnerConfig& learner, const AttackConfig& config) {
  if (!config.discrete)
    throw std::invalid_argument("poison_discrete: config.discrete must be true");
  detail::PoisonRun run(train_or_surrogate, initial_attacks, learner, config);
  const Box& box = run.box();
  const double step = config.discrete_step;
  const Eigen::Index d = train_or_surrogate.d(), q = initial_attacks.q();

  for (Eigen::Index j = 0; j < d; ++j) {
    double extent = box.upper[j] - box.lower[j];
    double cells = extent / step;
    if (extent > 0.0 && std::abs(cells - std::round(cells)) > 1e-9 * std::max(1.0, cells))
      throw std::invalid_argument("poison_discrete: discrete_step does not divide the box "
                                  "extent of feature " + std::to_string(j));
  }

  // snap starting points onto the grid
  for (Eigen::Index c = 0; c < q; ++c) {
    Eigen::VectorXd x = run.state().points.row(c).transpose();
    for (Eigen::Index j = 0; j < d; ++j) {
      double k = std::round((x[j] - box.lower[j]) / step);
      x[j] = box.lower[j] + k * step;
    }
    run.set_point(c, project_box(x, box));
  }

  double w_prev = run.retrain(0, 0);
  run.record(w_prev);

  int top_t = config.discrete_top_t > 0
                  ? std::min<int>(config.discrete_top_t, static_cast<int>(d))
                  : static_cast<int>(d);

  for (int outer = 0; outer < config.max_outer_iterations; ++outer) {
    bool moved = false;
    for (Eigen::Index c = 0; c < q; ++c) {
      double w_base = run.retrain(outer, c);
      Eigen::VectorXd x = run.state().points.row(c).transpose();
      Eigen::VectorXd grad = run.gradient(c);

      std::vector<Eigen::Index> order(static_cast<size_t>(d));
      std::iota(order.begin(), order.end(), 0);
      std::stable_sort(order.begin(), order.end(), [&](Eigen::Index a, Eigen::Index b) {
        return std::abs(grad[a]) > std::abs(grad[b]);
      });

      double w_best = w_base;
      Eigen::VectorXd x_best = x;
      LinearModel current = run.state().model;
      LinearModel m_best = current;
      for (int t = 0; t < top_t; ++t) {
        Eigen::Index j = order[static_cast<size_t>(t)];
        if (grad[j] == 0.0) continue;
        Eigen::VectorXd cand = x;
        cand[j] += (grad[j] > 0.0 ? step : -step);
        if (cand[j] < box.lower[j] - 1e-12 || cand[j] > box.upper[j] + 1e-12) continue;
        cand[j] = std::clamp(cand[j], box.lower[j], box.upper[j]);
        run.set_point(c, cand);
        run.state().model = current;
        double w_cand = run.retrain(outer, c);
        if (w_cand > w_best) {
          w_best = w_cand;
          x_best = cand;
          m_best = run.state().model;
        }
      }
      run.set_point(c, x_best);
      run.state().model = m_best;
      if (w_best > w_base) moved = true;
    }
    double w_now = run.retrain(outer, 0);
    run.record(w_now);
    if (!moved) {
      run.state().stopped_reason = "converged";
      return run.state();
    }
    w_prev = w_now;
  }
  run.state().stopped_reason = "max_iterations";
  return run.state();
}

}  // namespace fsp
