#pragma once

#include <atomic>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <mutex>
#include <optional>
#include <stdexcept>
#include <string>
#include <thread>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

#include "fsp/attack.hpp"
#include "fsp/baselines.hpp"
#include "fsp/dataset.hpp"
#include "fsp/learners.hpp"
#include "fsp/metrics.hpp"

namespace fsp {

enum class Knowledge { PK, LK };

inline const char* to_string(Knowledge k) { return k == Knowledge::PK ? "pk" : "lk"; }

/// Attack points as a share of the final training set: q = round(p*n/(1-p)),
/// so that q / (n + q) = p. At p = 0.2 and n = 300 this is 75 points.
inline int fraction_to_count(double fraction, Eigen::Index n_train) {
  if (!(fraction >= 0.0 && fraction < 1.0))
    throw std::invalid_argument("fraction_to_count: fraction must be in [0,1)");
  return static_cast<int>(
      std::llround(fraction * static_cast<double>(n_train) / (1.0 - fraction)));
}

struct CsvSource {
  std::string path;
  double cap = 20.0;
  Eigen::Index train_size = 300;
  Eigen::Index surrogate_size = 300;
  Eigen::Index test_size = 5000;
};

struct SparseLinearSource {
  Eigen::Index d = 114;
  Eigen::Index k_relevant = 30;
  double noise = 0.1;
  Eigen::Index n_train = 300;
  Eigen::Index n_surrogate = 300;
  Eigen::Index n_test = 1000;
};

struct ExperimentSpec {
  std::variant<CsvSource, SparseLinearSource> dataset = SparseLinearSource{};
  std::vector<Regularizer> methods = {Regularizer::lasso(), Regularizer::ridge(),
                                      Regularizer::elastic_net(0.5)};
  std::vector<double> fractions = {0.0, 0.1, 0.2};
  Knowledge knowledge = Knowledge::PK;
  int runs = 5;
  std::vector<Eigen::Index> stability_k = {30, 50};
  std::uint64_t seed = 0;

  LearnerConfig learner;  // lambda is ignored; selected per (method, run)
  int lambda_grid_size = 50;
  double lambda_min_ratio = 1e-3;
  int cv_folds = 5;
  AttackConfig attack;

  int threads = 1;
  bool verbose = false;

  void validate() const {
    if (methods.empty()) throw std::invalid_argument("spec: methods must be nonempty");
    if (fractions.empty() || fractions.front() != 0.0)
      throw std::invalid_argument("spec: fractions must start at 0");
    for (size_t i = 0; i < fractions.size(); ++i) {
      if (!(fractions[i] >= 0.0 && fractions[i] <= 0.5))
        throw std::invalid_argument("spec: fractions must lie in [0, 0.5]");
      if (i > 0 && !(fractions[i] > fractions[i - 1]))
        throw std::invalid_argument("spec: fractions must be strictly ascending");
    }
    if (runs < 1) throw std::invalid_argument("spec: runs must be >= 1");
    if (stability_k.empty()) throw std::invalid_argument("spec: stability_k must be nonempty");
    if (cv_folds < 2) throw std::invalid_argument("spec: cv_folds must be >= 2");
    if (lambda_grid_size < 1) throw std::invalid_argument("spec: lambda_grid_size >= 1");
    if (threads < 1) throw std::invalid_argument("spec: threads must be >= 1");
  }
};

/// One measured cell of the sweep. wall_time_s is informational only and
/// never written to result files (they must be byte-reproducible).
struct ResultRow {
  std::string method;
  std::string knowledge;
  double fraction = 0.0;
  int run = 0;
  double error = 0.0;
  Eigen::Index n_selected = 0;
  std::vector<double> stability;  // same-run clean-vs-attacked I_C, per stability_k
  double attack_objective_final = 0.0;
  double wall_time_s = 0.0;
  std::string crafted_on = "none";
  bool stalled = false;
  int q = 0;
  double lambda = 0.0;
  std::vector<Eigen::Index> padded;  // attacked-subset zero-weight fill, per stability_k
  std::string note;                  // nonempty if the cell failed
};

/// Cross-run pairing in the style used for the stability plots: at
/// fraction 0 all C(runs,2) clean pairs, otherwise clean x attacked.
struct StabilityPairRow {
  std::string method;
  std::string knowledge;
  double fraction = 0.0;
  Eigen::Index k = 0;
  double mean = 0.0;
  double stddev = 0.0;
  Eigen::Index pairs = 0;
  Eigen::Index padded = 0;
};

struct ExperimentResult {
  std::vector<ResultRow> rows;
  std::vector<StabilityPairRow> stability_pairs;
  std::vector<Eigen::Index> stability_k;
  std::vector<double> fractions;
  std::vector<std::string> methods;
  std::string knowledge;
};

// ---------------------------------------------------------------------------
// JSON spec

inline ExperimentSpec parse_experiment_spec(const nlohmann::json& j) {
  ExperimentSpec spec;
  double rho = j.value("rho", 0.5);

  if (j.contains("dataset")) {
    const auto& ds = j.at("dataset");
    std::string type = ds.value("type", "sparse_linear");
    if (type == "csv") {
      CsvSource src;
      src.path = ds.at("path").get<std::string>();
      src.cap = ds.value("cap", 20.0);
      src.train_size = ds.value("train_size", 300);
      src.surrogate_size = ds.value("surrogate_size", 300);
      src.test_size = ds.value("test_size", 5000);
      spec.dataset = src;
    } else if (type == "sparse_linear") {
      SparseLinearSource src;
      src.d = ds.value("d", 114);
      src.k_relevant = ds.value("k_relevant", 30);
      src.noise = ds.value("noise", 0.1);
      src.n_train = ds.value("n_train", 300);
      src.n_surrogate = ds.value("n_surrogate", 300);
      src.n_test = ds.value("n_test", 1000);
      spec.dataset = src;
    } else {
      throw std::invalid_argument("spec: unknown dataset type '" + type + "'");
    }
  }

  if (j.contains("methods")) {
    spec.methods.clear();
    for (const auto& m : j.at("methods"))
      spec.methods.push_back(regularizer_from_name(m.get<std::string>(), rho));
  }
  if (j.contains("fractions"))
    spec.fractions = j.at("fractions").get<std::vector<double>>();
  if (j.contains("knowledge")) {
    std::string k = j.at("knowledge").get<std::string>();
    if (k == "PK" || k == "pk")
      spec.knowledge = Knowledge::PK;
    else if (k == "LK" || k == "lk")
      spec.knowledge = Knowledge::LK;
    else
      throw std::invalid_argument("spec: knowledge must be PK or LK");
  }
  spec.runs = j.value("runs", spec.runs);
  if (j.contains("stability_k")) {
    spec.stability_k.clear();
    for (const auto& k : j.at("stability_k")) spec.stability_k.push_back(k.get<Eigen::Index>());
  }
  spec.seed = j.value("seed", spec.seed);

  if (j.contains("learner")) {
    const auto& l = j.at("learner");
    spec.learner.tolerance = l.value("tolerance", spec.learner.tolerance);
    spec.learner.max_iterations = l.value("max_iterations", spec.learner.max_iterations);
    spec.lambda_grid_size = l.value("lambda_grid_size", spec.lambda_grid_size);
    spec.lambda_min_ratio = l.value("lambda_min_ratio", spec.lambda_min_ratio);
    spec.cv_folds = l.value("cv_folds", spec.cv_folds);
  }
  if (j.contains("attack")) {
    const auto& a = j.at("attack");
    spec.attack.beta = a.value("beta", spec.attack.beta);
    spec.attack.sigma = a.value("sigma", spec.attack.sigma);
    spec.attack.epsilon = a.value("epsilon", spec.attack.epsilon);
    spec.attack.max_outer_iterations =
        a.value("max_outer_iterations", spec.attack.max_outer_iterations);
    spec.attack.max_linesearch_steps =
        a.value("max_linesearch_steps", spec.attack.max_linesearch_steps);
    spec.attack.warm_start = a.value("warm_start", spec.attack.warm_start);
    spec.attack.discrete = a.value("discrete", spec.attack.discrete);
    spec.attack.discrete_step = a.value("discrete_step", spec.attack.discrete_step);
    spec.attack.discrete_top_t = a.value("discrete_top_t", spec.attack.discrete_top_t);
    if (a.contains("box_lower") || a.contains("box_upper")) {
      // dimension resolved at run time; store scalars for later expansion
      spec.attack.box.lower = Eigen::VectorXd::Constant(1, a.value("box_lower", 0.0));
      spec.attack.box.upper = Eigen::VectorXd::Constant(1, a.value("box_upper", 1.0));
    }
  }

  spec.threads = j.value("threads", spec.threads);
  spec.validate();
  return spec;
}

inline ExperimentSpec load_experiment_spec(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("spec: cannot open '" + path + "'");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error("spec: malformed JSON in '" + path + "': " + e.what());
  }
  try {
    return parse_experiment_spec(j);
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error("spec: invalid experiment spec in '" + path + "': " + e.what());
  }
}

// ---------------------------------------------------------------------------
// Experiment pipeline

namespace detail {

inline std::vector<SplitTriple> materialize_runs(const ExperimentSpec& spec) {
  std::vector<SplitTriple> triples;
  if (std::holds_alternative<CsvSource>(spec.dataset)) {
    const auto& src = std::get<CsvSource>(spec.dataset);
    RawDataset raw = load_csv(src.path);
    SplitSpec split{src.train_size, src.surrogate_size, src.test_size, spec.runs, spec.seed};
    triples = sample_splits(raw, split, src.cap);
  } else {
    const auto& src = std::get<SparseLinearSource>(spec.dataset);
    for (int run = 0; run < spec.runs; ++run) {
      Eigen::Index total = src.n_train + src.n_surrogate + src.n_test;
      auto [pool, support] = synthetic_sparse_linear(
          total, src.d, src.k_relevant, src.noise,
          derive_seed(spec.seed, 0xda7aULL, static_cast<std::uint64_t>(run)));
      (void)support;
      auto slice = [&](Eigen::Index offset, Eigen::Index count, DataRole role) {
        Dataset part;
        part.features = pool.features.middleRows(offset, count);
        part.labels = pool.labels.segment(offset, count);
        part.role = role;
        return part;
      };
      SplitTriple t;
      t.train = slice(0, src.n_train, DataRole::train);
      t.surrogate = slice(src.n_train, src.n_surrogate, DataRole::surrogate);
      t.test = slice(src.n_train + src.n_surrogate, src.n_test, DataRole::test);
      triples.push_back(std::move(t));
    }
  }
  return triples;
}

inline Box resolve_box(const AttackConfig& cfg, Eigen::Index d) {
  if (cfg.box.lower.size() == 0) return Box::uniform(0.0, 1.0, d);
  if (cfg.box.lower.size() == 1 && d != 1)
    return Box::uniform(cfg.box.lower[0], cfg.box.upper[0], d);
  Box b = cfg.box;
  b.validate(d);
  return b;
}

struct RunOutput {
  std::vector<ResultRow> rows;  // one per fraction
  // per stability_k entry: clean subset and per-fraction attacked subsets
  std::vector<FeatureSubset> clean_subsets;
  std::vector<std::vector<FeatureSubset>> attacked_subsets;  // [fraction>0][k]
  std::string error;
};

// the full pipeline for one (method, run) cell
inline RunOutput run_cell(const ExperimentSpec& spec, const Regularizer& method,
                          int run, const SplitTriple& triple, bool optimize_attacks) {
  RunOutput out;
  const Dataset& victim_train = triple.train;
  const Dataset& craft =
      spec.knowledge == Knowledge::PK ? triple.train : triple.surrogate;
  if (spec.knowledge == Knowledge::LK && craft.role != DataRole::surrogate)
    throw std::logic_error("harness: LK crafting data must be the surrogate split");
  if (spec.knowledge == Knowledge::PK && craft.role != DataRole::train)
    throw std::logic_error("harness: PK crafting data must be the training split");

  for (Eigen::Index k : spec.stability_k)
    if (k <= 0 || k >= victim_train.d())
      throw std::invalid_argument("spec: stability_k entry " + std::to_string(k) +
                                  " out of range for d = " + std::to_string(victim_train.d()));

  // lambda fixed at its clean-data CV choice for every poisoned retrain
  LearnerConfig cfg = spec.learner;
  cfg.reg = method;
  auto grid = default_lambda_grid(victim_train, method, spec.lambda_grid_size,
                                  spec.lambda_min_ratio);
  auto sel = select_lambda(victim_train, method, grid, spec.cv_folds, cfg);
  cfg.lambda = sel.lambda_best;

  LinearModel clean = train(victim_train, cfg);
  for (Eigen::Index k : spec.stability_k) out.clean_subsets.push_back(top_k(clean, k));

  Box box = resolve_box(spec.attack, victim_train.d());

  for (size_t fi = 0; fi < spec.fractions.size(); ++fi) {
    double fraction = spec.fractions[fi];
    ResultRow row;
    row.method = method.name();
    row.knowledge = to_string(spec.knowledge);
    row.fraction = fraction;
    row.run = run;
    row.lambda = cfg.lambda;
    auto t0 = std::chrono::steady_clock::now();

    try {
      if (fraction == 0.0) {
        row.error = classification_error(clean, triple.test);
        row.n_selected = selected_features(clean).k;
        for (size_t ki = 0; ki < spec.stability_k.size(); ++ki) {
          row.stability.push_back(1.0);
          row.padded.push_back(out.clean_subsets[ki].padded);
        }
        row.attack_objective_final = attacker_objective(craft, clean, cfg);
        row.q = 0;
      } else {
        int q = fraction_to_count(fraction, victim_train.n());
        row.q = q;
        row.crafted_on = to_string(craft.role);
        std::uint64_t cell_seed =
            derive_seed(spec.seed, 0xa77acdULL ^ static_cast<std::uint64_t>(fi),
                        static_cast<std::uint64_t>(run),
                        static_cast<std::uint64_t>(method.kind) * 131 + 7);

        AttackState init = random_label_flip(craft, q, cell_seed);
        for (Eigen::Index c = 0; c < init.q(); ++c)
          init.points.row(c) =
              project_box(init.points.row(c).transpose(), box).transpose();

        AttackConfig acfg = spec.attack;
        acfg.q = q;
        acfg.box = box;
        AttackState state;
        if (optimize_attacks) {
          state = acfg.discrete ? poison_discrete(craft, init, cfg, acfg)
                                : poison(craft, init, cfg, acfg);
        } else {
          state = std::move(init);
          LinearModel atk_model;
          {
            Dataset poisoned;
            poisoned.features.resize(craft.n() + state.q(), craft.d());
            poisoned.features.topRows(craft.n()) = craft.features;
            poisoned.features.bottomRows(state.q()) = state.points;
            poisoned.labels.resize(craft.n() + state.q());
            poisoned.labels.head(craft.n()) = craft.labels;
            poisoned.labels.tail(state.q()) = state.labels;
            atk_model = train(poisoned, cfg);
          }
          state.objective_history.push_back(attacker_objective(craft, atk_model, cfg));
        }
        row.stalled = state.stalled;
        row.attack_objective_final = state.objective_history.back();

        // the victim always trains on its own data plus the attack points
        Dataset poisoned_victim;
        poisoned_victim.features.resize(victim_train.n() + state.q(), victim_train.d());
        poisoned_victim.features.topRows(victim_train.n()) = victim_train.features;
        poisoned_victim.features.bottomRows(state.q()) = state.points;
        poisoned_victim.labels.resize(victim_train.n() + state.q());
        poisoned_victim.labels.head(victim_train.n()) = victim_train.labels;
        poisoned_victim.labels.tail(state.q()) = state.labels;
        LinearModel victim = train(poisoned_victim, cfg);

        row.error = classification_error(victim, triple.test);
        row.n_selected = selected_features(victim).k;
        std::vector<FeatureSubset> attacked;
        for (size_t ki = 0; ki < spec.stability_k.size(); ++ki) {
          FeatureSubset sub = top_k(victim, spec.stability_k[ki]);
          row.stability.push_back(kuncheva_index(out.clean_subsets[ki], sub));
          row.padded.push_back(sub.padded);
          attacked.push_back(std::move(sub));
        }
        out.attacked_subsets.push_back(std::move(attacked));
      }
    } catch (const std::exception& e) {
      row.note = e.what();
      row.error = std::numeric_limits<double>::quiet_NaN();
      row.stability.assign(spec.stability_k.size(),
                           std::numeric_limits<double>::quiet_NaN());
      row.padded.assign(spec.stability_k.size(), 0);
      if (fraction > 0.0)
        out.attacked_subsets.emplace_back();  // keep fraction indexing aligned
    }
    row.wall_time_s =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    out.rows.push_back(std::move(row));
  }
  return out;
}

inline ExperimentResult run_pipeline(const ExperimentSpec& spec, bool optimize_attacks) {
  spec.validate();
  auto triples = materialize_runs(spec);

  const size_t cells = spec.methods.size() * static_cast<size_t>(spec.runs);
  std::vector<RunOutput> outputs(cells);
  std::atomic<size_t> next{0};
  std::atomic<bool> failed{false};
  std::string failure;
  std::mutex failure_mutex;

  auto worker = [&]() {
    while (true) {
      size_t i = next.fetch_add(1);
      if (i >= cells || failed.load()) break;
      size_t mi = i / static_cast<size_t>(spec.runs);
      int run = static_cast<int>(i % static_cast<size_t>(spec.runs));
      try {
        outputs[i] = run_cell(spec, spec.methods[mi], run,
                              triples[static_cast<size_t>(run)], optimize_attacks);
        if (spec.verbose)
          std::fprintf(stderr, "[fspoison] %s run %d done\n",
                       spec.methods[mi].name(), run);
      } catch (const std::exception& e) {
        std::lock_guard<std::mutex> lock(failure_mutex);
        failure = e.what();
        failed.store(true);
      }
    }
  };

  if (spec.threads <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int t = 0; t < spec.threads; ++t) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }
  if (failed.load()) throw std::runtime_error("experiment failed: " + failure);

  ExperimentResult result;
  result.stability_k = spec.stability_k;
  result.fractions = spec.fractions;
  result.knowledge = to_string(spec.knowledge);
  for (const auto& m : spec.methods) result.methods.push_back(m.name());

  for (size_t mi = 0; mi < spec.methods.size(); ++mi) {
    for (int run = 0; run < spec.runs; ++run) {
      auto& cell = outputs[mi * static_cast<size_t>(spec.runs) + static_cast<size_t>(run)];
      for (auto& row : cell.rows) result.rows.push_back(std::move(row));
    }
    // cross-run stability pairing per fraction and k
    for (size_t ki = 0; ki < spec.stability_k.size(); ++ki) {
      std::vector<FeatureSubset> clean;
      for (int run = 0; run < spec.runs; ++run)
        clean.push_back(outputs[mi * spec.runs + static_cast<size_t>(run)].clean_subsets[ki]);

      for (size_t fi = 0; fi < spec.fractions.size(); ++fi) {
        StabilityPairRow pr;
        pr.method = spec.methods[mi].name();
        pr.knowledge = to_string(spec.knowledge);
        pr.fraction = spec.fractions[fi];
        pr.k = spec.stability_k[ki];
        if (spec.fractions[fi] == 0.0) {
          if (spec.runs >= 2) {
            auto rep = average_within_stability(clean);
            pr.mean = rep.mean_index;
            pr.stddev = rep.std_index;
            pr.pairs = rep.pair_count;
          } else {
            pr.mean = 1.0;
            pr.pairs = 0;
          }
          for (const auto& s : clean) pr.padded += s.padded;
        } else {
          std::vector<FeatureSubset> attacked;
          for (int run = 0; run < spec.runs; ++run) {
            auto& cell = outputs[mi * spec.runs + static_cast<size_t>(run)];
            auto& subs = cell.attacked_subsets[fi - 1];
            if (!subs.empty()) attacked.push_back(subs[ki]);
          }
          if (!attacked.empty()) {
            auto rep = average_pairwise_stability(clean, attacked);
            pr.mean = rep.mean_index;
            pr.stddev = rep.std_index;
            pr.pairs = rep.pair_count;
            for (const auto& s : attacked) pr.padded += s.padded;
          }
        }
        result.stability_pairs.push_back(std::move(pr));
      }
    }
  }
  return result;
}

}  // namespace detail

/// The paper protocol: per run, select lambda on the clean training set,
/// craft poisoning points on the training (PK) or surrogate (LK) data,
/// retrain the victim on train + attacks, and measure error, selected
/// features, and top-k stability against the clean run.
inline ExperimentResult run_experiment(const ExperimentSpec& spec) {
  return detail::run_pipeline(spec, /*optimize_attacks=*/true);
}

/// Same pipeline with the gradient attack replaced by random label flips.
inline ExperimentResult run_baseline(const ExperimentSpec& spec) {
  return detail::run_pipeline(spec, /*optimize_attacks=*/false);
}

// ---------------------------------------------------------------------------
// Writers (all output is deterministic given the result)

namespace detail {

inline void require_dir(const std::string& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw std::runtime_error("cannot create output directory '" + dir + "'");
}

inline std::ofstream open_out(const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write '" + path + "'");
  return out;
}

}  // namespace detail

inline void write_results_csv(const ExperimentResult& result, const std::string& path) {
  auto out = detail::open_out(path);
  out << "method,knowledge,fraction,run,error,n_selected";
  for (Eigen::Index k : result.stability_k) out << ",stability_k" << k;
  out << '\n';
  for (const auto& row : result.rows) {
    out << row.method << ',' << row.knowledge << ',' << detail::format_double(row.fraction)
        << ',' << row.run << ',' << detail::format_double(row.error) << ',' << row.n_selected;
    for (double s : row.stability) out << ',' << detail::format_double(s);
    out << '\n';
  }
}

inline void write_aggregates_csv(const ExperimentResult& result, const std::string& path) {
  auto out = detail::open_out(path);
  out << "method,knowledge,fraction,error_mean,error_std,n_selected_mean,n_selected_std";
  for (Eigen::Index k : result.stability_k)
    out << ",stability_k" << k << "_mean,stability_k" << k << "_std";
  out << '\n';

  auto stats = [](const std::vector<double>& v) {
    double mean = 0.0;
    for (double x : v) mean += x;
    mean /= v.empty() ? 1.0 : static_cast<double>(v.size());
    double var = 0.0;
    for (double x : v) var += (x - mean) * (x - mean);
    if (!v.empty()) var /= static_cast<double>(v.size());
    return std::pair<double, double>(mean, std::sqrt(var));
  };

  for (const auto& method : result.methods) {
    for (double fraction : result.fractions) {
      std::vector<double> errs, nsel;
      std::vector<std::vector<double>> stabs(result.stability_k.size());
      for (const auto& row : result.rows) {
        if (row.method != method || row.fraction != fraction) continue;
        errs.push_back(row.error);
        nsel.push_back(static_cast<double>(row.n_selected));
        for (size_t ki = 0; ki < stabs.size(); ++ki) stabs[ki].push_back(row.stability[ki]);
      }
      if (errs.empty()) continue;
      auto [em, es] = stats(errs);
      auto [nm, ns] = stats(nsel);
      out << method << ',' << result.knowledge << ',' << detail::format_double(fraction)
          << ',' << detail::format_double(em) << ',' << detail::format_double(es) << ','
          << detail::format_double(nm) << ',' << detail::format_double(ns);
      for (auto& sv : stabs) {
        auto [sm, ss] = stats(sv);
        out << ',' << detail::format_double(sm) << ',' << detail::format_double(ss);
      }
      out << '\n';
    }
  }
}

inline void write_stability_csv(const ExperimentResult& result, const std::string& path) {
  auto out = detail::open_out(path);
  out << "method,knowledge,fraction,k,mean,std,pairs,padded\n";
  for (const auto& pr : result.stability_pairs) {
    out << pr.method << ',' << pr.knowledge << ',' << detail::format_double(pr.fraction) << ','
        << pr.k << ',' << detail::format_double(pr.mean) << ','
        << detail::format_double(pr.stddev) << ',' << pr.pairs << ',' << pr.padded << '\n';
  }
}

inline void write_attack_details_csv(const ExperimentResult& result, const std::string& path) {
  auto out = detail::open_out(path);
  out << "method,knowledge,fraction,run,q,lambda,attack_objective_final,stalled,crafted_on";
  for (Eigen::Index k : result.stability_k) out << ",padded_k" << k;
  out << ",note\n";
  for (const auto& row : result.rows) {
    out << row.method << ',' << row.knowledge << ',' << detail::format_double(row.fraction)
        << ',' << row.run << ',' << row.q << ',' << detail::format_double(row.lambda) << ','
        << detail::format_double(row.attack_objective_final) << ','
        << (row.stalled ? 1 : 0) << ',' << row.crafted_on;
    for (Eigen::Index p : row.padded) out << ',' << p;
    std::string note = row.note;
    for (char& c : note)
      if (c == ',' || c == '\n') c = ';';
    out << ',' << note << '\n';
  }
}

/// One file per (metric, method): rows of "fraction mean std", ready for
/// any plotting tool.
inline void write_plot_data(const ExperimentResult& result, const std::string& dir) {
  auto stats = [](const std::vector<double>& v) {
    double mean = 0.0;
    for (double x : v) mean += x;
    mean /= v.empty() ? 1.0 : static_cast<double>(v.size());
    double var = 0.0;
    for (double x : v) var += (x - mean) * (x - mean);
    if (!v.empty()) var /= static_cast<double>(v.size());
    return std::pair<double, double>(mean, std::sqrt(var));
  };

  for (const auto& method : result.methods) {
    auto curve = [&](const std::string& name,
                     auto&& value_of_row) {
      auto out = detail::open_out(dir + "/plot_" + name + "_" + method + "_" +
                                  result.knowledge + ".txt");
      out << "# fraction mean std\n";
      for (double fraction : result.fractions) {
        std::vector<double> vals;
        for (const auto& row : result.rows)
          if (row.method == method && row.fraction == fraction)
            vals.push_back(value_of_row(row));
        if (vals.empty()) continue;
        auto [m, s] = stats(vals);
        out << detail::format_double(fraction) << ' ' << detail::format_double(m) << ' '
            << detail::format_double(s) << '\n';
      }
    };
    curve("error", [](const ResultRow& r) { return r.error; });
    curve("nselected", [](const ResultRow& r) { return static_cast<double>(r.n_selected); });
    for (size_t ki = 0; ki < result.stability_k.size(); ++ki) {
      // cross-run pairing, from the stability_pairs table
      auto out = detail::open_out(dir + "/plot_stability_k" +
                                  std::to_string(result.stability_k[ki]) + "_" + method +
                                  "_" + result.knowledge + ".txt");
      out << "# fraction mean std\n";
      for (const auto& pr : result.stability_pairs)
        if (pr.method == method && pr.k == result.stability_k[ki])
          out << detail::format_double(pr.fraction) << ' ' << detail::format_double(pr.mean)
              << ' ' << detail::format_double(pr.stddev) << '\n';
    }
  }
}

inline void write_result_files(const ExperimentResult& result, const std::string& dir) {
  detail::require_dir(dir);
  write_results_csv(result, dir + "/results.csv");
  write_aggregates_csv(result, dir + "/aggregates.csv");
  write_stability_csv(result, dir + "/stability_pairs.csv");
  write_attack_details_csv(result, dir + "/attack_details.csv");
  write_plot_data(result, dir);
}

/// Attack-points file: one row per point, "run,index,label,<features>".
inline void write_attack_points_csv(const std::vector<AttackState>& states,
                                    const std::vector<std::string>& feature_names,
                                    const std::string& path) {
  auto out = detail::open_out(path);
  out << "run,index,label";
  if (!states.empty()) {
    for (Eigen::Index j = 0; j < states.front().d(); ++j) {
      out << ',';
      if (!feature_names.empty())
        out << feature_names[static_cast<size_t>(j)];
      else
        out << 'f' << j;
    }
  }
  out << '\n';
  for (size_t run = 0; run < states.size(); ++run) {
    const auto& st = states[run];
    for (Eigen::Index c = 0; c < st.q(); ++c) {
      out << run << ',' << c << ',' << (st.labels[c] > 0 ? "1" : "-1");
      for (Eigen::Index j = 0; j < st.d(); ++j)
        out << ',' << detail::format_double(st.points(c, j));
      out << '\n';
    }
  }
}

/// Feature-subset file: "index,selected" with selected in {0,1}.
inline void write_subset_csv(const FeatureSubset& subset, const std::string& path) {
  auto out = detail::open_out(path);
  out << "index,selected\n";
  for (Eigen::Index j = 0; j < subset.d(); ++j)
    out << j << ',' << (subset.mask[static_cast<size_t>(j)] ? 1 : 0) << '\n';
}

inline FeatureSubset load_subset_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("subset: cannot open '" + path + "'");
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error("subset: empty file '" + path + "'");
  std::vector<bool> mask;
  Eigen::Index row = 0;
  while (std::getline(in, line)) {
    if (line.empty() || (line.size() == 1 && line[0] == '\r')) continue;
    auto cells = detail::split_csv_line(line);
    if (cells.size() != 2)
      throw std::runtime_error("subset: bad row " + std::to_string(row) + " in '" + path + "'");
    double sel = detail::parse_double(cells[1], row, "selected");
    if (sel != 0.0 && sel != 1.0)
      throw std::runtime_error("subset: selected must be 0 or 1 at row " + std::to_string(row));
    mask.push_back(sel == 1.0);
    ++row;
  }
  return FeatureSubset::from_mask(std::move(mask));
}

// ---------------------------------------------------------------------------
// Bi-dimensional demo

struct DemoFig1Result {
  Dataset data;
  AttackState state;
  double lambda = 0.0;
  double pre_attack_error = 0.0;
  double post_attack_error = 0.0;
  Eigen::VectorXd grid_x1, grid_x2;     // surface node coordinates
  Eigen::MatrixXd surface_w;            // W(x_c) at each node
  Eigen::MatrixXd surface_error;        // victim test error at each node
};

/// Single-point LASSO poisoning on a two-Gaussian plane: evaluates the
/// W(x_c) and error surfaces on a grid and records the ascent path,
/// emitting everything as plain-text tables for contour plotting.
inline DemoFig1Result demo_fig1(const std::string& output_dir, std::uint64_t seed = 7,
                                double lambda = 0.02, Eigen::Index grid_nodes = 51) {
  detail::require_dir(output_dir);
  const double lo = -2.5, hi = 2.5;

  DemoFig1Result demo;
  demo.lambda = lambda;
  Eigen::Vector2d mean_pos(0.9, 0.9), mean_neg(-0.9, -0.9);
  Eigen::Matrix2d cov = 0.5 * Eigen::Matrix2d::Identity();
  demo.data = synthetic_gaussians_2d(15, mean_pos, mean_neg, cov, cov, seed);
  demo.data.role = DataRole::train;
  Dataset test = synthetic_gaussians_2d(1000, mean_pos, mean_neg, cov, cov,
                                        detail::mix64(seed) + 1);

  LearnerConfig cfg;
  cfg.reg = Regularizer::lasso();
  cfg.lambda = lambda;
  LinearModel clean = train(demo.data, cfg);
  demo.pre_attack_error = classification_error(clean, test);

  AttackConfig acfg;
  acfg.q = 1;
  acfg.box = Box::uniform(lo, hi, 2);
  acfg.epsilon = 1e-8;
  acfg.max_outer_iterations = 2000;
  AttackState init = random_label_flip(demo.data, 1, seed);
  init.points.row(0) = project_box(init.points.row(0).transpose(), acfg.box).transpose();
  demo.state = poison(demo.data, init, cfg, acfg);

  Dataset poisoned;
  poisoned.features.resize(demo.data.n() + 1, 2);
  poisoned.features.topRows(demo.data.n()) = demo.data.features;
  poisoned.features.bottomRows(1) = demo.state.points;
  poisoned.labels.resize(demo.data.n() + 1);
  poisoned.labels.head(demo.data.n()) = demo.data.labels;
  poisoned.labels.tail(1) = demo.state.labels;
  LinearModel victim = train(poisoned, cfg);
  demo.post_attack_error = classification_error(victim, test);

  // W and error surfaces over the box; one retrain per node, warm-started
  // along each scan row
  demo.grid_x1.setLinSpaced(grid_nodes, lo, hi);
  demo.grid_x2.setLinSpaced(grid_nodes, lo, hi);
  demo.surface_w.resize(grid_nodes, grid_nodes);
  demo.surface_error.resize(grid_nodes, grid_nodes);
  Dataset probe = poisoned;
  for (Eigen::Index i = 0; i < grid_nodes; ++i) {
    std::optional<LinearModel> warm;
    for (Eigen::Index j = 0; j < grid_nodes; ++j) {
      probe.features(demo.data.n(), 0) = demo.grid_x1[i];
      probe.features(demo.data.n(), 1) = demo.grid_x2[j];
      LinearModel m = train(probe, cfg, warm);
      warm = m;
      demo.surface_w(i, j) = attacker_objective(demo.data, m, cfg);
      demo.surface_error(i, j) = classification_error(m, test);
    }
  }

  save_csv(demo.data, output_dir + "/dataset.csv");
  {
    auto out = detail::open_out(output_dir + "/trajectory.txt");
    out << "# iteration x1 x2 W\n";
    for (size_t p = 0; p < demo.state.trajectory.size(); ++p)
      out << p << ' ' << detail::format_double(demo.state.trajectory[p](0, 0)) << ' '
          << detail::format_double(demo.state.trajectory[p](0, 1)) << ' '
          << detail::format_double(demo.state.objective_history[p]) << '\n';
  }
  auto write_surface = [&](const Eigen::MatrixXd& surface, const std::string& name) {
    auto out = detail::open_out(output_dir + "/" + name);
    out << "# x1 x2 value\n";
    for (Eigen::Index i = 0; i < grid_nodes; ++i)
      for (Eigen::Index j = 0; j < grid_nodes; ++j)
        out << detail::format_double(demo.grid_x1[i]) << ' '
            << detail::format_double(demo.grid_x2[j]) << ' '
            << detail::format_double(surface(i, j)) << '\n';
  };
  write_surface(demo.surface_w, "surface_w.txt");
  write_surface(demo.surface_error, "surface_error.txt");
  {
    auto out = detail::open_out(output_dir + "/summary.txt");
    out << "lambda " << detail::format_double(lambda) << '\n'
        << "attack_label " << (demo.state.labels[0] > 0 ? "1" : "-1") << '\n'
        << "pre_attack_error " << detail::format_double(demo.pre_attack_error) << '\n'
        << "post_attack_error " << detail::format_double(demo.post_attack_error) << '\n'
        << "final_point " << detail::format_double(demo.state.points(0, 0)) << ' '
        << detail::format_double(demo.state.points(0, 1)) << '\n'
        << "final_W " << detail::format_double(demo.state.objective_history.back()) << '\n';
  }
  return demo;
}

}  // namespace fsp
