// Command-line front end: train a model, craft attack points, run the
// full experiment protocol, or compute the stability index between two
// saved feature subsets.

#include <CLI11.hpp>

#include <cstdio>
#include <cstdlib>
#include <exception>
#include <iostream>
#include <optional>
#include <string>

#include "fsp/fsp.hpp"

namespace {

struct CommonLearnerFlags {
  std::string method = "lasso";
  double rho = 0.5;
  double lambda = 0.0;  // 0 -> cross-validated
  double tolerance = 1e-8;
  int max_iterations = 10000;
  int folds = 5;
};

void add_learner_flags(CLI::App* cmd, CommonLearnerFlags& f) {
  cmd->add_option("--method", f.method, "lasso | ridge | elastic_net")
      ->default_val("lasso");
  cmd->add_option("--rho", f.rho, "elastic net mixing parameter in (0,1)");
  cmd->add_option("--lambda", f.lambda,
                  "regularization trade-off; omit to select by cross validation");
  cmd->add_option("--tolerance", f.tolerance, "solver convergence tolerance");
  cmd->add_option("--max-iter", f.max_iterations, "solver sweep cap");
  cmd->add_option("--folds", f.folds, "cross-validation folds");
}

fsp::LearnerConfig resolve_learner(const CommonLearnerFlags& f, const fsp::Dataset& data,
                                   bool verbose) {
  fsp::LearnerConfig cfg;
  cfg.reg = fsp::regularizer_from_name(f.method, f.rho);
  cfg.tolerance = f.tolerance;
  cfg.max_iterations = f.max_iterations;
  if (f.lambda > 0.0) {
    cfg.lambda = f.lambda;
  } else {
    auto grid = fsp::default_lambda_grid(data, cfg.reg);
    auto sel = fsp::select_lambda(data, cfg.reg, grid, f.folds, cfg);
    cfg.lambda = sel.lambda_best;
    if (verbose) std::fprintf(stderr, "selected lambda = %.6g\n", cfg.lambda);
  }
  return cfg;
}

int cmd_train(const std::string& data_path, double cap, const CommonLearnerFlags& flags,
              const std::string& subset_out, int subset_k, bool verbose) {
  fsp::Dataset data = fsp::normalize(fsp::load_csv(data_path), cap);
  fsp::LearnerConfig cfg = resolve_learner(flags, data, verbose);
  fsp::LinearModel model = fsp::train(data, cfg);
  auto selected = fsp::selected_features(model);

  std::printf("method        %s\n", cfg.reg.name());
  std::printf("lambda        %.10g\n", cfg.lambda);
  std::printf("n             %ld\n", static_cast<long>(data.n()));
  std::printf("d             %ld\n", static_cast<long>(data.d()));
  std::printf("bias          %.10g\n", model.bias);
  std::printf("n_selected    %ld\n", static_cast<long>(selected.k));
  std::printf("objective     %.10g\n", fsp::objective(data, model, cfg));
  std::printf("kkt_residual  %.3g\n", fsp::kkt_residual(data, model, cfg));
  std::printf("train_error   %.10g\n", fsp::classification_error(model, data));
  for (Eigen::Index j = 0; j < model.weights.size(); ++j) {
    if (model.weights[j] == 0.0) continue;
    std::string name = data.feature_names.empty() ? "f" + std::to_string(j)
                                                  : data.feature_names[static_cast<size_t>(j)];
    std::printf("w[%s]  %.10g\n", name.c_str(), model.weights[j]);
  }

  if (!subset_out.empty()) {
    fsp::FeatureSubset sub = subset_k > 0 ? fsp::top_k(model, subset_k) : selected;
    fsp::write_subset_csv(sub, subset_out);
    if (verbose) std::fprintf(stderr, "wrote subset to %s\n", subset_out.c_str());
  }
  return 0;
}

int cmd_attack(const std::string& data_path, const std::string& surrogate_path, double cap,
               const CommonLearnerFlags& flags, double fraction, int q, std::uint64_t seed,
               const fsp::AttackConfig& attack_flags, double box_lo, double box_hi,
               const std::string& out_path, bool verbose) {
  fsp::Dataset data = fsp::normalize(fsp::load_csv(data_path), cap);
  data.role = fsp::DataRole::train;
  fsp::Dataset craft = data;
  if (!surrogate_path.empty()) {
    craft = fsp::normalize(fsp::load_csv(surrogate_path), cap);
    craft.role = fsp::DataRole::surrogate;
    if (craft.d() != data.d())
      throw std::invalid_argument("attack: surrogate dimensionality differs from data");
  }
  fsp::LearnerConfig cfg = resolve_learner(flags, data, verbose);

  if (q <= 0) {
    if (!(fraction > 0.0))
      throw std::invalid_argument("attack: give either --q or a positive --fraction");
    q = fsp::fraction_to_count(fraction, data.n());
    if (q < 1) throw std::invalid_argument("attack: fraction yields zero attack points");
  }

  fsp::AttackConfig acfg = attack_flags;
  acfg.q = q;
  acfg.box = fsp::Box::uniform(box_lo, box_hi, craft.d());
  fsp::AttackState init = fsp::random_label_flip(craft, q, seed);
  for (Eigen::Index c = 0; c < init.q(); ++c)
    init.points.row(c) = fsp::project_box(init.points.row(c).transpose(), acfg.box).transpose();

  fsp::AttackState state = acfg.discrete ? fsp::poison_discrete(craft, init, cfg, acfg)
                                         : fsp::poison(craft, init, cfg, acfg);
  fsp::write_attack_points_csv({state}, craft.feature_names, out_path);

  std::printf("q                 %d\n", q);
  std::printf("outer_iterations  %zu\n", state.objective_history.size() - 1);
  std::printf("initial_W         %.10g\n", state.objective_history.front());
  std::printf("final_W           %.10g\n", state.objective_history.back());
  std::printf("stopped           %s\n", state.stopped_reason.c_str());
  if (verbose && state.damped_solves > 0)
    std::fprintf(stderr, "note: %d damped KKT solves\n", state.damped_solves);
  return 0;
}

int cmd_stability(const std::string& a_path, const std::string& b_path) {
  fsp::FeatureSubset a = fsp::load_subset_csv(a_path);
  fsp::FeatureSubset b = fsp::load_subset_csv(b_path);
  std::printf("%.10g\n", fsp::kuncheva_index(a, b));
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"poisoning attacks against embedded feature selection"};
  app.require_subcommand(1);

  // train ------------------------------------------------------------
  auto* train_cmd = app.add_subcommand("train", "fit a model and print a summary");
  std::string train_data, train_subset_out;
  double train_cap = 20.0;
  int train_subset_k = 0;
  CommonLearnerFlags train_flags;
  bool train_verbose = false;
  train_cmd->add_option("--data", train_data, "CSV with a 'label' column")->required();
  train_cmd->add_option("--cap", train_cap, "normalization cap (use 1 for already-normalized data)");
  add_learner_flags(train_cmd, train_flags);
  train_cmd->add_option("--subset-out", train_subset_out, "write the selected feature subset here");
  train_cmd->add_option("--top-k", train_subset_k, "subset size for --subset-out (0 = all nonzero)");
  train_cmd->add_flag("--verbose", train_verbose);

  // attack -----------------------------------------------------------
  auto* attack_cmd = app.add_subcommand("attack", "craft poisoning points and write them to CSV");
  std::string attack_data, attack_surrogate, attack_out;
  double attack_cap = 20.0, attack_fraction = 0.0, attack_box_lo = 0.0, attack_box_hi = 1.0;
  int attack_q = 0;
  std::uint64_t attack_seed = 0;
  CommonLearnerFlags attack_flags;
  fsp::AttackConfig attack_acfg;
  bool attack_verbose = false;
  attack_cmd->add_option("--data", attack_data, "training CSV")->required();
  attack_cmd->add_option("--surrogate", attack_surrogate,
                         "surrogate CSV; when given, points are crafted on it (LK)");
  attack_cmd->add_option("--cap", attack_cap, "normalization cap");
  add_learner_flags(attack_cmd, attack_flags);
  attack_cmd->add_option("--fraction", attack_fraction, "poisoning fraction q/(n+q)");
  attack_cmd->add_option("--q", attack_q, "number of attack points (overrides --fraction)");
  attack_cmd->add_option("--seed", attack_seed, "seed for the initial cloned points");
  attack_cmd->add_option("--beta", attack_acfg.beta, "line-search backoff in (0,1)");
  attack_cmd->add_option("--sigma", attack_acfg.sigma, "sufficient-increase constant");
  attack_cmd->add_option("--epsilon", attack_acfg.epsilon, "outer convergence threshold");
  attack_cmd->add_option("--max-outer", attack_acfg.max_outer_iterations);
  attack_cmd->add_option("--max-linesearch", attack_acfg.max_linesearch_steps);
  attack_cmd->add_option("--box-lo", attack_box_lo, "feasible-box lower bound");
  attack_cmd->add_option("--box-hi", attack_box_hi, "feasible-box upper bound");
  attack_cmd->add_flag("--discrete", attack_acfg.discrete, "use the discrete-space heuristic");
  attack_cmd->add_option("--discrete-step", attack_acfg.discrete_step);
  attack_cmd->add_option("--out", attack_out, "attack-points CSV path")
      ->envname("FSPOISON_OUT")
      ->required();
  attack_cmd->add_flag("--verbose", attack_verbose);

  // experiment / baseline ---------------------------------------------
  std::string exp_spec, exp_out;
  std::optional<std::uint64_t> exp_seed;
  std::optional<int> exp_threads;
  bool exp_verbose = false;
  auto add_experiment_flags = [&](CLI::App* cmd) {
    cmd->add_option("--spec", exp_spec, "experiment spec (JSON)")->required();
    cmd->add_option("--out", exp_out, "output directory")
        ->envname("FSPOISON_OUT")
        ->required();
    cmd->add_option("--seed", exp_seed, "override the spec seed");
    cmd->add_option("--threads", exp_threads, "parallel (method, run) cells");
    cmd->add_flag("--verbose", exp_verbose);
  };
  auto* exp_cmd = app.add_subcommand("experiment", "run the poisoning protocol from a JSON spec");
  add_experiment_flags(exp_cmd);
  auto* base_cmd = app.add_subcommand("baseline", "same protocol with random label flips");
  add_experiment_flags(base_cmd);

  // demo-fig1 ----------------------------------------------------------
  auto* demo_cmd = app.add_subcommand("demo-fig1",
                                      "2-D single-point demo with W and error surfaces");
  std::string demo_out;
  std::uint64_t demo_seed = 7;
  double demo_lambda = 0.02;
  demo_cmd->add_option("--out", demo_out, "output directory")
      ->envname("FSPOISON_OUT")
      ->required();
  demo_cmd->add_option("--seed", demo_seed);
  demo_cmd->add_option("--lambda", demo_lambda);

  // stability ----------------------------------------------------------
  auto* stab_cmd = app.add_subcommand("stability",
                                      "Kuncheva index between two saved subsets");
  std::string stab_a, stab_b;
  stab_cmd->add_option("--a", stab_a, "first subset CSV")->required();
  stab_cmd->add_option("--b", stab_b, "second subset CSV")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (train_cmd->parsed())
      return cmd_train(train_data, train_cap, train_flags, train_subset_out, train_subset_k,
                       train_verbose);
    if (attack_cmd->parsed())
      return cmd_attack(attack_data, attack_surrogate, attack_cap, attack_flags,
                        attack_fraction, attack_q, attack_seed, attack_acfg, attack_box_lo,
                        attack_box_hi, attack_out, attack_verbose);
    if (exp_cmd->parsed() || base_cmd->parsed()) {
      fsp::ExperimentSpec spec = fsp::load_experiment_spec(exp_spec);
      if (exp_seed) spec.seed = *exp_seed;
      if (exp_threads) spec.threads = *exp_threads;
      spec.verbose = exp_verbose;
      fsp::ExperimentResult result =
          exp_cmd->parsed() ? fsp::run_experiment(spec) : fsp::run_baseline(spec);
      fsp::write_result_files(result, exp_out);
      std::printf("wrote %zu rows to %s\n", result.rows.size(), exp_out.c_str());
      return 0;
    }
    if (demo_cmd->parsed()) {
      auto demo = fsp::demo_fig1(demo_out, demo_seed, demo_lambda);
      std::printf("pre_attack_error  %.6g\n", demo.pre_attack_error);
      std::printf("post_attack_error %.6g\n", demo.post_attack_error);
      std::printf("final_W           %.10g\n", demo.state.objective_history.back());
      return 0;
    }
    if (stab_cmd->parsed()) return cmd_stability(stab_a, stab_b);
  } catch (const std::exception& e) {
    std::string msg = e.what();
    std::fprintf(stderr, "error: %s\n", msg.c_str());
    // malformed specs and bad arguments are usage errors
    if (msg.rfind("spec:", 0) == 0) {
      std::fprintf(stderr, "%s\n", app.help().c_str());
      return 2;
    }
    return 1;
  }
  return 0;
}
