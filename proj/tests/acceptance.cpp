// Acceptance suite: one pass/fail line per criterion. Exit code is the
// number of failed criteria. Pass --cli <path-to-fspoison> so the
// determinism criterion can drive the real binary; a subset of criterion
// numbers can be given to run only those.

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "fsp/fsp.hpp"
#include "oracles.hpp"

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

double rel_error(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  return (a - b).norm() / std::max(b.norm(), 1e-8);
}

fsp::LearnerConfig cfg(fsp::Regularizer reg, double lambda) {
  fsp::LearnerConfig c;
  c.reg = reg;
  c.lambda = lambda;
  return c;
}

fsp::Dataset stack_one(const fsp::Dataset& base, const Eigen::VectorXd& xc, double yc) {
  fsp::Dataset out;
  out.features.resize(base.n() + 1, base.d());
  out.features.topRows(base.n()) = base.features;
  out.features.bottomRows(1) = xc.transpose();
  out.labels.resize(base.n() + 1);
  out.labels.head(base.n()) = base.labels;
  out.labels[base.n()] = yc;
  return out;
}

// criterion 1: analytic attack gradient vs. central finite differences
Outcome criterion_gradient_oracle() {
  std::mt19937 rng(101);
  double worst_ridge = 0.0;

  for (int instance = 0; instance < 10; ++instance) {
    Eigen::Index n = 5 + static_cast<Eigen::Index>(rng() % 26);  // <= 30
    Eigen::Index d = 1 + static_cast<Eigen::Index>(rng() % 5);   // <= 5
    fsp::Dataset surr = oracle::random_dataset(rng, n, d);
    Eigen::VectorXd xc = oracle::random_dataset(rng, 1, d).features.row(0).transpose();
    double yc = (rng() % 2 == 0) ? 1.0 : -1.0;
    auto c = cfg(fsp::Regularizer::ridge(), 0.02 + 0.1 * (instance % 3));

    fsp::Dataset poisoned = stack_one(surr, xc, yc);
    fsp::LearnerConfig tight = c;
    tight.tolerance = 1e-12;
    tight.max_iterations = 500000;
    fsp::LinearModel m = fsp::train(poisoned, tight);
    Eigen::VectorXd r = fsp::optimal_subgradient(poisoned, m, c);
    auto kkt = fsp::solve_kkt_system(poisoned, m, c, xc, yc);
    Eigen::VectorXd ga = fsp::gradient_W(surr, m, c, kkt, r);
    Eigen::VectorXd gf = oracle::fd_gradient_W(surr, xc, yc, c, 1e-5);
    worst_ridge = std::max(worst_ridge, rel_error(ga, gf));
  }

  double worst_lasso = 0.0;
  int lasso_checked = 0, attempts = 0;
  while (lasso_checked < 10 && attempts < 200) {
    ++attempts;
    Eigen::Index n = 8 + static_cast<Eigen::Index>(rng() % 23);
    Eigen::Index d = 2 + static_cast<Eigen::Index>(rng() % 4);
    fsp::Dataset surr = oracle::random_dataset(rng, n, d);
    Eigen::VectorXd xc =
        0.05 * Eigen::VectorXd::Ones(d) +
        0.9 * oracle::random_dataset(rng, 1, d).features.row(0).transpose();
    double yc = (rng() % 2 == 0) ? 1.0 : -1.0;
    auto c = cfg(fsp::Regularizer::lasso(), 0.01 + 0.02 * (attempts % 3));
    if (!oracle::support_stable(surr, xc, yc, c)) continue;
    ++lasso_checked;

    fsp::Dataset poisoned = stack_one(surr, xc, yc);
    fsp::LearnerConfig tight = c;
    tight.tolerance = 1e-12;
    tight.max_iterations = 500000;
    fsp::LinearModel m = fsp::train(poisoned, tight);
    Eigen::VectorXd r = fsp::optimal_subgradient(poisoned, m, c);
    auto kkt = fsp::solve_kkt_system(poisoned, m, c, xc, yc);
    Eigen::VectorXd ga = fsp::gradient_W(surr, m, c, kkt, r);
    Eigen::VectorXd gf = oracle::fd_gradient_W(surr, xc, yc, c, 1e-5);
    worst_lasso = std::max(worst_lasso, rel_error(ga, gf));
  }

  std::ostringstream ss;
  ss << "ridge max rel err " << worst_ridge << " (tol 1e-4) over 10 instances; "
     << "lasso max rel err " << worst_lasso << " (tol 1e-3) over " << lasso_checked
     << " stable-support instances";
  return {worst_ridge <= 1e-4 && worst_lasso <= 1e-3 && lasso_checked >= 10, ss.str()};
}

// criterion 2: KKT residuals of trained models and of the linear solves
Outcome criterion_kkt_suite() {
  std::mt19937 rng(202);
  double worst_train = 0.0, worst_solve = 0.0;
  int count = 0;
  for (int trial = 0; trial < 30; ++trial) {
    Eigen::Index n = 5 + static_cast<Eigen::Index>(rng() % 36);
    Eigen::Index d = 1 + static_cast<Eigen::Index>(rng() % 10);
    fsp::Dataset data = oracle::random_dataset(rng, n, d);
    auto reg = trial % 3 == 0   ? fsp::Regularizer::lasso()
               : trial % 3 == 1 ? fsp::Regularizer::ridge()
                                : fsp::Regularizer::elastic_net(0.5);
    auto c = cfg(reg, 0.005 + 0.05 * (trial % 5));
    fsp::LinearModel m = fsp::train(data, c);
    worst_train = std::max(worst_train, fsp::kkt_residual(data, m, c) / (10.0 * c.tolerance));

    Eigen::VectorXd xc = oracle::random_dataset(rng, 1, d).features.row(0).transpose();
    double yc = (rng() % 2 == 0) ? 1.0 : -1.0;
    fsp::Dataset poisoned = stack_one(data, xc, yc);
    fsp::LinearModel mp = fsp::train(poisoned, c);
    auto kkt = fsp::solve_kkt_system(poisoned, mp, c, xc, yc);
    worst_solve = std::max(worst_solve, kkt.residual);
    ++count;
  }
  std::ostringstream ss;
  ss << count << " instances; worst residual/(10 tol) " << worst_train
     << "; worst linear-system rel residual " << worst_solve << " (tol 1e-8)";
  return {worst_train <= 1.0 && worst_solve <= 1e-8, ss.str()};
}

// criterion 3: gradient ascent vs. exhaustive grid maximization (d = 1, 2)
Outcome criterion_brute_force() {
  std::ostringstream ss;
  bool ok = true;

  {  // 1-D, all three regularizers, grid step 1e-3
    fsp::Dataset data;
    data.features.resize(4, 1);
    data.features << 0.1, 0.35, 0.65, 0.9;
    data.labels.resize(4);
    data.labels << -1.0, -1.0, 1.0, 1.0;
    for (auto reg : {fsp::Regularizer::lasso(), fsp::Regularizer::ridge(),
                     fsp::Regularizer::elastic_net(0.5)}) {
      auto c = cfg(reg, 0.05);
      fsp::AttackState init;
      init.points = Eigen::MatrixXd::Constant(1, 1, 0.1);
      init.labels = Eigen::VectorXd::Constant(1, 1.0);
      fsp::AttackConfig acfg;
      acfg.box = fsp::Box::uniform(0.0, 1.0, 1);
      acfg.epsilon = 1e-10;
      acfg.max_outer_iterations = 5000;
      acfg.max_linesearch_steps = 40;
      auto state = fsp::poison(data, init, c, acfg);
      auto grid = oracle::grid_maximize_1d(data, 1.0, c, 0.0, 1.0, 1e-3);
      double gap = grid.w - state.objective_history.back();
      ss << "1d/" << reg.name() << " gap " << gap << "; ";
      ok = ok && gap <= 1e-3;
    }
  }

  {  // 2-D, grid step 1e-2
    std::mt19937 rng(42);
    fsp::Dataset data = oracle::random_dataset(rng, 8, 2);
    data.labels << -1.0, -1.0, -1.0, -1.0, 1.0, 1.0, 1.0, 1.0;
    data.features.col(0).head(4).array() *= 0.45;  // separate the classes a little
    data.features.col(0).tail(4).array() = 0.55 + 0.45 * data.features.col(0).tail(4).array();
    for (auto reg : {fsp::Regularizer::lasso(), fsp::Regularizer::ridge(),
                     fsp::Regularizer::elastic_net(0.5)}) {
      auto c = cfg(reg, 0.04);
      fsp::AttackState init;
      init.points = data.features.row(0);
      init.labels = Eigen::VectorXd::Constant(1, 1.0);
      fsp::AttackConfig acfg;
      acfg.box = fsp::Box::uniform(0.0, 1.0, 2);
      acfg.epsilon = 1e-10;
      acfg.max_outer_iterations = 5000;
      acfg.max_linesearch_steps = 40;
      auto state = fsp::poison(data, init, c, acfg);
      auto grid = oracle::grid_maximize_2d(data, 1.0, c, 0.0, 1.0, 1e-2);
      double gap = grid.w - state.objective_history.back();
      ss << "2d/" << reg.name() << " gap " << gap << "; ";
      ok = ok && gap <= 1e-3;
    }
  }
  return {ok, ss.str()};
}

// criterion 4: Kuncheva index identities, bounds, and chance level
Outcome criterion_kuncheva() {
  bool ok = true;
  std::ostringstream ss;

  for (Eigen::Index d = 4; d <= 8; ++d) {
    for (Eigen::Index k = 1; k < d; ++k) {
      std::vector<fsp::FeatureSubset> subsets;
      std::vector<bool> mask(static_cast<size_t>(d), false);
      std::fill(mask.begin(), mask.begin() + k, true);
      std::sort(mask.begin(), mask.end());
      do {
        subsets.push_back(fsp::FeatureSubset::from_mask(mask));
      } while (std::next_permutation(mask.begin(), mask.end()));
      for (const auto& a : subsets) {
        if (fsp::kuncheva_index(a, a) != 1.0) ok = false;
        for (const auto& b : subsets) {
          double ab = fsp::kuncheva_index(a, b);
          if (!(ab >= -1.0 && ab <= 1.0)) ok = false;
          if (ab != fsp::kuncheva_index(b, a)) ok = false;
          Eigen::Index r = 0;
          for (Eigen::Index j = 0; j < d; ++j)
            if (a.mask[static_cast<size_t>(j)] && b.mask[static_cast<size_t>(j)]) ++r;
          if (r * d == k * k && ab != 0.0) ok = false;
        }
      }
    }
  }
  ss << "identity/symmetry/bounds/chance over all pairs d<=8; ";

  std::mt19937 rng(404);
  const Eigen::Index d = 50, k = 10;
  std::vector<Eigen::Index> idx(static_cast<size_t>(d));
  std::iota(idx.begin(), idx.end(), 0);
  auto random_subset = [&]() {
    std::shuffle(idx.begin(), idx.end(), rng);
    std::vector<bool> m(static_cast<size_t>(d), false);
    for (Eigen::Index i = 0; i < k; ++i) m[static_cast<size_t>(idx[static_cast<size_t>(i)])] = true;
    return fsp::FeatureSubset::from_mask(m);
  };
  double sum = 0.0;
  for (int pair = 0; pair < 2000; ++pair)
    sum += fsp::kuncheva_index(random_subset(), random_subset());
  double mc_mean = sum / 2000.0;
  ss << "Monte Carlo |mean| " << std::abs(mc_mean) << " (tol 0.05) over 2000 pairs";
  return {ok && std::abs(mc_mean) <= 0.05, ss.str()};
}

// criterion 5: the paper's 20% <-> 75-of-300 arithmetic
Outcome criterion_fraction_arithmetic() {
  int q = fsp::fraction_to_count(0.2, 300);
  std::ostringstream ss;
  ss << "fraction_to_count(0.2, 300) = " << q << " (expect 75)";
  return {q == 75, ss.str()};
}

fsp::ExperimentSpec trend_spec() {
  fsp::ExperimentSpec spec;
  fsp::SparseLinearSource src;
  src.d = 114;
  src.k_relevant = 30;
  src.noise = 0.15;
  src.n_train = 300;
  src.n_surrogate = 300;
  src.n_test = 1000;
  spec.dataset = src;
  spec.methods = {fsp::Regularizer::lasso(), fsp::Regularizer::ridge(),
                  fsp::Regularizer::elastic_net(0.5)};
  spec.fractions = {0.0, 0.1, 0.2};
  spec.knowledge = fsp::Knowledge::PK;
  spec.runs = 5;
  spec.stability_k = {30, 50};
  spec.seed = 20150707;
  spec.lambda_grid_size = 25;
  spec.cv_folds = 5;
  spec.attack.max_outer_iterations = 60;
  spec.attack.epsilon = 1e-6;
  return spec;
}

// criterion 6: qualitative trend reproduction on the synthetic stand-in
Outcome criterion_trends() {
  auto spec = trend_spec();
  auto poisoning = fsp::run_experiment(spec);
  auto flips = fsp::run_baseline(spec);

  auto mean_error = [&](const fsp::ExperimentResult& res, const std::string& method,
                        double fraction) {
    double sum = 0.0;
    int count = 0;
    for (const auto& row : res.rows)
      if (row.method == method && row.fraction == fraction) {
        sum += row.error;
        ++count;
      }
    return sum / std::max(count, 1);
  };
  auto run_error = [&](const fsp::ExperimentResult& res, const std::string& method,
                       double fraction, int run) {
    for (const auto& row : res.rows)
      if (row.method == method && row.fraction == fraction && row.run == run)
        return row.error;
    return std::numeric_limits<double>::quiet_NaN();
  };
  auto pair_mean = [&](const std::string& method, double fraction, Eigen::Index k) {
    for (const auto& pr : poisoning.stability_pairs)
      if (pr.method == method && pr.fraction == fraction && pr.k == k) return pr.mean;
    return std::numeric_limits<double>::quiet_NaN();
  };

  std::ostringstream ss;
  bool ok = true;

  // (a) strictly increasing mean error for every method
  for (const auto& method : {"lasso", "ridge", "elastic_net"}) {
    double e0 = mean_error(poisoning, method, 0.0);
    double e2 = mean_error(poisoning, method, 0.2);
    ss << method << " err " << e0 << "->" << e2 << "; ";
    if (!(e2 > e0)) ok = false;
  }

  // (b) lasso top-30 stability drops by at least 0.3 below clean-vs-clean
  double clean_stab = pair_mean("lasso", 0.0, 30);
  double attacked_stab = pair_mean("lasso", 0.2, 30);
  ss << "lasso k30 stability " << clean_stab << "->" << attacked_stab << "; ";
  if (!(attacked_stab <= clean_stab - 0.3)) ok = false;

  // (c) poisoning beats random flips in at least 4 of 5 runs, every method
  for (const auto& method : {"lasso", "ridge", "elastic_net"}) {
    int wins = 0;
    for (int run = 0; run < spec.runs; ++run)
      if (run_error(poisoning, method, 0.2, run) >= run_error(flips, method, 0.2, run))
        ++wins;
    ss << method << " beats flips " << wins << "/5; ";
    if (wins < 4) ok = false;
  }

  // (d) ridge degrades no more than lasso
  double lasso_deg = mean_error(poisoning, "lasso", 0.2) - mean_error(poisoning, "lasso", 0.0);
  double ridge_deg = mean_error(poisoning, "ridge", 0.2) - mean_error(poisoning, "ridge", 0.0);
  ss << "degradation ridge " << ridge_deg << " vs lasso " << lasso_deg;
  if (!(ridge_deg <= lasso_deg)) ok = false;

  return {ok, ss.str()};
}

// criterion 7: the 2-D demo
Outcome criterion_demo() {
  auto dir = std::filesystem::temp_directory_path() / "fsp_acceptance_demo";
  std::filesystem::remove_all(dir);
  auto demo = fsp::demo_fig1(dir.string(), 7, 0.02, 51);

  bool monotone = true;
  for (size_t p = 1; p < demo.state.objective_history.size(); ++p)
    if (demo.state.objective_history[p] < demo.state.objective_history[p - 1] - 1e-10)
      monotone = false;

  const Eigen::Index nodes = demo.grid_x1.size();
  double cell = demo.grid_x1[1] - demo.grid_x1[0];
  bool near_local_max = false;
  for (Eigen::Index i = 0; i < nodes && !near_local_max; ++i)
    for (Eigen::Index j = 0; j < nodes && !near_local_max; ++j) {
      bool is_max = true;
      for (Eigen::Index di = -1; di <= 1 && is_max; ++di)
        for (Eigen::Index dj = -1; dj <= 1 && is_max; ++dj) {
          Eigen::Index ni = i + di, nj = j + dj;
          if (ni < 0 || nj < 0 || ni >= nodes || nj >= nodes) continue;
          if (demo.surface_w(ni, nj) > demo.surface_w(i, j)) is_max = false;
        }
      if (is_max && std::abs(demo.state.points(0, 0) - demo.grid_x1[i]) <= cell &&
          std::abs(demo.state.points(0, 1) - demo.grid_x2[j]) <= cell)
        near_local_max = true;
    }

  std::ostringstream ss;
  ss << "monotone W " << (monotone ? "yes" : "NO") << "; near grid-local max "
     << (near_local_max ? "yes" : "NO") << "; error " << demo.pre_attack_error << "->"
     << demo.post_attack_error;
  std::filesystem::remove_all(dir);
  return {monotone && near_local_max && demo.post_attack_error > demo.pre_attack_error,
          ss.str()};
}

std::string slurp(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

bool same_dir_bytes(const std::filesystem::path& a, const std::filesystem::path& b,
                    std::string& what) {
  std::vector<std::string> names;
  for (const auto& entry : std::filesystem::directory_iterator(a))
    names.push_back(entry.path().filename().string());
  if (names.empty()) {
    what = "no files produced";
    return false;
  }
  for (const auto& name : names) {
    if (!std::filesystem::exists(b / name)) {
      what = name + " missing in rerun";
      return false;
    }
    if (slurp(a / name) != slurp(b / name)) {
      what = name + " differs between reruns";
      return false;
    }
  }
  return true;
}

// criterion 8: CLI reruns reproduce result files byte for byte
Outcome criterion_determinism(const std::string& cli) {
  if (cli.empty()) return {false, "no --cli binary provided"};
  namespace fs = std::filesystem;
  auto root = fs::temp_directory_path() / "fsp_acceptance_cli";
  fs::remove_all(root);
  fs::create_directories(root);

  auto spec_path = root / "spec.json";
  {
    std::ofstream out(spec_path);
    out << R"({
      "dataset": {"type": "sparse_linear", "d": 12, "k_relevant": 4, "noise": 0.1,
                  "n_train": 40, "n_surrogate": 40, "n_test": 80},
      "methods": ["lasso", "ridge"],
      "fractions": [0, 0.2],
      "runs": 2,
      "stability_k": [4],
      "seed": 9,
      "learner": {"lambda_grid_size": 10, "cv_folds": 3},
      "attack": {"max_outer_iterations": 15}
    })";
  }

  auto run = [&](const std::string& args) {
    std::string cmd = "\"" + cli + "\" " + args + " > /dev/null 2>&1";
    return std::system(cmd.c_str());
  };

  std::ostringstream ss;
  bool ok = true;
  std::string what;

  for (int rep = 1; rep <= 2; ++rep) {
    if (run("experiment --spec \"" + spec_path.string() + "\" --out \"" +
            (root / ("exp" + std::to_string(rep))).string() + "\"") != 0) {
      return {false, "experiment invocation failed"};
    }
  }
  if (!same_dir_bytes(root / "exp1", root / "exp2", what)) {
    ok = false;
    ss << "experiment: " << what << "; ";
  } else {
    ss << "experiment reproducible; ";
  }

  for (int rep = 1; rep <= 2; ++rep) {
    if (run("demo-fig1 --seed 7 --out \"" +
            (root / ("demo" + std::to_string(rep))).string() + "\"") != 0)
      return {false, "demo-fig1 invocation failed"};
  }
  if (!same_dir_bytes(root / "demo1", root / "demo2", what)) {
    ok = false;
    ss << "demo-fig1: " << what << "; ";
  } else {
    ss << "demo-fig1 reproducible; ";
  }

  // attack command on a small CSV written by the harness itself
  auto csv_path = root / "data.csv";
  {
    auto [data, support] = fsp::synthetic_sparse_linear(30, 6, 2, 0.1, 21);
    (void)support;
    fsp::save_csv(data, csv_path.string());
  }
  for (int rep = 1; rep <= 2; ++rep) {
    if (run("attack --data \"" + csv_path.string() +
            "\" --cap 1 --method lasso --lambda 0.02 --q 3 --seed 4 --max-outer 10 --out \"" +
            (root / ("atk" + std::to_string(rep) + ".csv")).string() + "\"") != 0)
      return {false, "attack invocation failed"};
  }
  if (slurp(root / "atk1.csv") != slurp(root / "atk2.csv")) {
    ok = false;
    ss << "attack points differ between reruns";
  } else {
    ss << "attack points reproducible";
  }

  fs::remove_all(root);
  return {ok, ss.str()};
}

}  // namespace

int main(int argc, char** argv) {
  std::string cli;
  std::vector<int> only;
  for (int i = 1; i < argc; ++i) {
    std::string arg = argv[i];
    if (arg == "--cli" && i + 1 < argc)
      cli = argv[++i];
    else
      only.push_back(std::atoi(arg.c_str()));
  }

  struct Criterion {
    int number;
    const char* name;
    std::function<Outcome()> run;
  };
  std::vector<Criterion> criteria = {
      {1, "gradient oracle", criterion_gradient_oracle},
      {2, "KKT suite", criterion_kkt_suite},
      {3, "brute-force equivalence", criterion_brute_force},
      {4, "Kuncheva suite", criterion_kuncheva},
      {5, "fraction arithmetic", criterion_fraction_arithmetic},
      {6, "trend reproduction", criterion_trends},
      {7, "2-D demo", criterion_demo},
      {8, "determinism", [&]() { return criterion_determinism(cli); }},
  };

  int failures = 0;
  for (const auto& criterion : criteria) {
    if (!only.empty() &&
        std::find(only.begin(), only.end(), criterion.number) == only.end())
      continue;
    auto start = std::chrono::steady_clock::now();
    Outcome outcome;
    try {
      outcome = criterion.run();
    } catch (const std::exception& e) {
      outcome = {false, std::string("exception: ") + e.what()};
    }
    double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    std::printf("[%s] criterion %d: %s (%.1fs) %s\n", outcome.pass ? "PASS" : "FAIL",
                criterion.number, criterion.name, secs, outcome.detail.c_str());
    std::fflush(stdout);
    if (!outcome.pass) ++failures;
  }
  return failures;
}
