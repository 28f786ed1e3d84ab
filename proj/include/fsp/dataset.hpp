#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace fsp {

/// Where a dataset sits in the experiment pipeline. Only used for
/// bookkeeping (the harness asserts the attacker never sees victim data
/// in limited-knowledge mode); the math ignores it.
enum class DataRole { unspecified, train, surrogate, test };

inline const char* to_string(DataRole r) {
  switch (r) {
    case DataRole::train: return "train";
    case DataRole::surrogate: return "surrogate";
    case DataRole::test: return "test";
    default: return "unspecified";
  }
}

/// Labeled feature matrix. Rows are samples, columns are features.
/// Labels are -1/+1. Values are expected in [0,1] once they have been
/// through normalize(), but the type itself does not force a range
/// (the 2-D demo works on [-2.5, 2.5]).
struct Dataset {
  Eigen::MatrixXd features;                // n x d
  Eigen::VectorXd labels;                  // n entries, each -1 or +1
  std::vector<std::string> feature_names;  // empty or size d
  DataRole role = DataRole::unspecified;

  Eigen::Index n() const { return features.rows(); }
  Eigen::Index d() const { return features.cols(); }

  void validate() const {
    if (features.rows() < 1 || features.cols() < 1)
      throw std::invalid_argument("Dataset: need n >= 1 and d >= 1");
    if (labels.size() != features.rows())
      throw std::invalid_argument("Dataset: labels/features length mismatch");
    if (!features.allFinite())
      throw std::invalid_argument("Dataset: non-finite feature value");
    for (Eigen::Index i = 0; i < labels.size(); ++i)
      if (labels[i] != 1.0 && labels[i] != -1.0)
        throw std::invalid_argument("Dataset: label not in {-1,+1} at row " +
                                    std::to_string(i));
    if (!feature_names.empty() &&
        feature_names.size() != static_cast<size_t>(features.cols()))
      throw std::invalid_argument("Dataset: feature_names size mismatch");
  }
};

/// Un-normalized data as it comes off disk: nonnegative counts or
/// measurements plus -1/+1 labels.
struct RawDataset {
  Eigen::MatrixXd features;
  Eigen::VectorXd labels;
  std::vector<std::string> feature_names;

  Eigen::Index n() const { return features.rows(); }
  Eigen::Index d() const { return features.cols(); }

  void validate() const {
    if (features.rows() < 1 || features.cols() < 1)
      throw std::invalid_argument("RawDataset: need n >= 1 and d >= 1");
    if (labels.size() != features.rows())
      throw std::invalid_argument("RawDataset: labels/features length mismatch");
    if (!features.allFinite() || features.minCoeff() < 0.0)
      throw std::invalid_argument("RawDataset: features must be finite and >= 0");
    for (Eigen::Index i = 0; i < labels.size(); ++i)
      if (labels[i] != 1.0 && labels[i] != -1.0)
        throw std::invalid_argument("RawDataset: label not in {-1,+1} at row " +
                                    std::to_string(i));
  }
};

/// Cap each value at `cap`, then divide by it: x -> min(x, cap)/cap.
inline Dataset normalize(const RawDataset& raw, double cap = 20.0) {
  if (cap <= 0.0) throw std::invalid_argument("normalize: cap must be > 0");
  raw.validate();
  Dataset out;
  out.features = raw.features.cwiseMin(cap) / cap;
  out.labels = raw.labels;
  out.feature_names = raw.feature_names;
  return out;
}

namespace detail {

// splitmix64; used to derive independent per-run / per-cell seeds.
inline std::uint64_t mix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

inline std::uint32_t derive_seed(std::uint64_t base, std::uint64_t a,
                                 std::uint64_t b = 0, std::uint64_t c = 0) {
  std::uint64_t h = mix64(base);
  h = mix64(h ^ a);
  h = mix64(h ^ b);
  h = mix64(h ^ c);
  return static_cast<std::uint32_t>(h >> 32);
}

// shortest decimal form that parses back to exactly the same double
inline std::string format_double(double v) {
  char buf[40];
  for (int precision = 15; precision <= 17; ++precision) {
    std::snprintf(buf, sizeof(buf), "%.*g", precision, v);
    double back = 0.0;
    std::from_chars(buf, buf + std::char_traits<char>::length(buf), back);
    if (back == v) break;
  }
  return buf;
}

inline double parse_double(const std::string& tok, Eigen::Index row,
                           const std::string& col) {
  double v = 0.0;
  const char* first = tok.data();
  const char* last = tok.data() + tok.size();
  auto res = std::from_chars(first, last, v);
  if (res.ec != std::errc{} || res.ptr != last || !std::isfinite(v))
    throw std::runtime_error("csv: non-numeric cell '" + tok + "' at data row " +
                             std::to_string(row) + ", column '" + col + "'");
  return v;
}

inline std::vector<std::string> split_csv_line(std::string line) {
  if (!line.empty() && line.back() == '\r') line.pop_back();
  std::vector<std::string> out;
  size_t start = 0;
  while (true) {
    size_t pos = line.find(',', start);
    if (pos == std::string::npos) {
      out.push_back(line.substr(start));
      break;
    }
    out.push_back(line.substr(start, pos - start));
    start = pos + 1;
  }
  return out;
}

}  // namespace detail

/// Load a comma-separated file with a header row. One column must be named
/// "label" and hold -1/+1; every other column is a numeric feature.
inline RawDataset load_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("csv: cannot open '" + path + "'");
  std::string line;
  if (!std::getline(in, line))
    throw std::runtime_error("csv: '" + path + "' is empty (no header row)");
  auto header = detail::split_csv_line(line);
  Eigen::Index label_col = -1;
  std::vector<std::string> names;
  for (size_t j = 0; j < header.size(); ++j) {
    if (header[j] == "label") {
      if (label_col >= 0)
        throw std::runtime_error("csv: duplicate 'label' column in '" + path + "'");
      label_col = static_cast<Eigen::Index>(j);
    } else {
      names.push_back(header[j]);
    }
  }
  if (label_col < 0)
    throw std::runtime_error("csv: missing 'label' column in '" + path + "'");

  std::vector<std::vector<double>> rows;
  std::vector<double> labels;
  Eigen::Index row = 0;
  while (std::getline(in, line)) {
    if (line.empty() || (line.size() == 1 && line[0] == '\r')) continue;
    auto cells = detail::split_csv_line(line);
    if (cells.size() != header.size())
      throw std::runtime_error("csv: data row " + std::to_string(row) + " has " +
                               std::to_string(cells.size()) + " cells, expected " +
                               std::to_string(header.size()));
    std::vector<double> feats;
    feats.reserve(header.size() - 1);
    for (size_t j = 0; j < cells.size(); ++j) {
      double v = detail::parse_double(cells[j], row, header[j]);
      if (static_cast<Eigen::Index>(j) == label_col) {
        if (v != 1.0 && v != -1.0)
          throw std::runtime_error("csv: label must be -1 or +1, got '" + cells[j] +
                                   "' at data row " + std::to_string(row));
        labels.push_back(v);
      } else {
        feats.push_back(v);
      }
    }
    rows.push_back(std::move(feats));
    ++row;
  }
  if (rows.empty()) throw std::runtime_error("csv: '" + path + "' has no data rows");

  RawDataset out;
  out.features.resize(static_cast<Eigen::Index>(rows.size()),
                      static_cast<Eigen::Index>(names.size()));
  out.labels.resize(static_cast<Eigen::Index>(labels.size()));
  for (size_t i = 0; i < rows.size(); ++i) {
    for (size_t j = 0; j < names.size(); ++j)
      out.features(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];
    out.labels[static_cast<Eigen::Index>(i)] = labels[i];
  }
  out.feature_names = std::move(names);
  out.validate();
  return out;
}

namespace detail {

inline void save_table(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                       const std::vector<std::string>& names,
                       const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("csv: cannot write '" + path + "'");
  for (Eigen::Index j = 0; j < X.cols(); ++j) {
    if (j) out << ',';
    if (!names.empty())
      out << names[static_cast<size_t>(j)];
    else
      out << 'f' << j;
  }
  out << ",label\n";
  for (Eigen::Index i = 0; i < X.rows(); ++i) {
    for (Eigen::Index j = 0; j < X.cols(); ++j) {
      if (j) out << ',';
      out << format_double(X(i, j));
    }
    out << ',' << (y[i] > 0 ? "1" : "-1") << '\n';
  }
}

}  // namespace detail

/// Deterministic writer (doubles at full precision, so save -> load is the
/// identity up to the nonnegativity check of RawDataset).
inline void save_csv(const RawDataset& raw, const std::string& path) {
  detail::save_table(raw.features, raw.labels, raw.feature_names, path);
}

inline void save_csv(const Dataset& data, const std::string& path) {
  detail::save_table(data.features, data.labels, data.feature_names, path);
}

/// Per-run disjoint sampling plan.
struct SplitSpec {
  Eigen::Index train_size = 0;
  Eigen::Index surrogate_size = 0;
  Eigen::Index test_size = 0;
  int runs = 1;
  std::uint64_t seed = 0;
};

struct SplitTriple {
  Dataset train;
  Dataset surrogate;
  Dataset test;
};

/// Draw `runs` independent (train, surrogate, test) triples. Within a run
/// the three index sets are disjoint; across runs they are sampled
/// independently. Values are normalized with `cap` on the way out.
inline std::vector<SplitTriple> sample_splits(const RawDataset& raw,
                                              const SplitSpec& spec,
                                              double cap = 20.0) {
  raw.validate();
  if (spec.runs < 1) throw std::invalid_argument("sample_splits: runs must be >= 1");
  if (spec.train_size < 1 || spec.surrogate_size < 0 || spec.test_size < 1)
    throw std::invalid_argument("sample_splits: sizes must be positive");
  Eigen::Index need = spec.train_size + spec.surrogate_size + spec.test_size;
  if (need > raw.n())
    throw std::invalid_argument(
        "sample_splits: train+surrogate+test = " + std::to_string(need) +
        " exceeds available n = " + std::to_string(raw.n()));

  Dataset all = normalize(raw, cap);
  std::vector<SplitTriple> out;
  out.reserve(static_cast<size_t>(spec.runs));
  for (int run = 0; run < spec.runs; ++run) {
    std::vector<Eigen::Index> idx(static_cast<size_t>(raw.n()));
    std::iota(idx.begin(), idx.end(), 0);
    std::mt19937 rng(detail::derive_seed(spec.seed, 0x5eedULL, static_cast<std::uint64_t>(run)));
    std::shuffle(idx.begin(), idx.end(), rng);

    auto take = [&](Eigen::Index offset, Eigen::Index count, DataRole role) {
      Dataset part;
      part.features.resize(count, all.d());
      part.labels.resize(count);
      for (Eigen::Index i = 0; i < count; ++i) {
        part.features.row(i) = all.features.row(idx[static_cast<size_t>(offset + i)]);
        part.labels[i] = all.labels[idx[static_cast<size_t>(offset + i)]];
      }
      part.feature_names = all.feature_names;
      part.role = role;
      return part;
    };

    SplitTriple triple;
    triple.train = take(0, spec.train_size, DataRole::train);
    triple.surrogate = take(spec.train_size, spec.surrogate_size, DataRole::surrogate);
    triple.test = take(spec.train_size + spec.surrogate_size, spec.test_size, DataRole::test);
    out.push_back(std::move(triple));
  }
  return out;
}

/// Two-class bi-dimensional Gaussian sample (the 2-D demo data).
/// Positive class labeled +1, negative -1. Points can optionally be
/// clipped to [clip_lo, clip_hi] per coordinate.
inline Dataset synthetic_gaussians_2d(Eigen::Index n_per_class,
                                      const Eigen::Vector2d& mean_pos,
                                      const Eigen::Vector2d& mean_neg,
                                      const Eigen::Matrix2d& cov_pos,
                                      const Eigen::Matrix2d& cov_neg,
                                      std::uint64_t seed,
                                      std::optional<std::pair<double, double>> clip = {}) {
  auto chol = [](const Eigen::Matrix2d& c) {
    Eigen::LLT<Eigen::Matrix2d> llt(c);
    if (llt.info() != Eigen::Success)
      throw std::invalid_argument("synthetic_gaussians_2d: covariance not positive definite");
    return Eigen::Matrix2d(llt.matrixL());
  };
  Eigen::Matrix2d lp = chol(cov_pos), ln = chol(cov_neg);

  Dataset out;
  out.features.resize(2 * n_per_class, 2);
  out.labels.resize(2 * n_per_class);
  out.feature_names = {"x1", "x2"};
  std::mt19937 rng(detail::derive_seed(seed, 0x2dULL));
  std::normal_distribution<double> gauss(0.0, 1.0);
  for (Eigen::Index i = 0; i < 2 * n_per_class; ++i) {
    bool pos = i < n_per_class;
    Eigen::Vector2d z(gauss(rng), gauss(rng));
    Eigen::Vector2d x = (pos ? mean_pos + lp * z : mean_neg + ln * z);
    if (clip) {
      x = x.cwiseMax(clip->first).cwiseMin(clip->second);
    }
    out.features.row(i) = x.transpose();
    out.labels[i] = pos ? 1.0 : -1.0;
  }
  return out;
}

/// Sparse-linear ground-truth generator: features uniform on [0,1]^d,
/// labels sign(w*.(x - 1/2) + noise * eps) with w* supported on
/// k_relevant coordinates. Stands in for the keyword-count corpus at
/// desk scale; the true support comes back for diagnostics.
inline std::pair<Dataset, std::vector<bool>> synthetic_sparse_linear(
    Eigen::Index n, Eigen::Index d, Eigen::Index k_relevant, double noise,
    std::uint64_t seed) {
  if (n < 1 || d < 1) throw std::invalid_argument("synthetic_sparse_linear: n, d >= 1");
  if (k_relevant < 1 || k_relevant > d)
    throw std::invalid_argument("synthetic_sparse_linear: need 1 <= k_relevant <= d");
  if (noise < 0.0) throw std::invalid_argument("synthetic_sparse_linear: noise >= 0");

  std::mt19937 rng(detail::derive_seed(seed, 0x51ULL));
  std::vector<Eigen::Index> idx(static_cast<size_t>(d));
  std::iota(idx.begin(), idx.end(), 0);
  std::shuffle(idx.begin(), idx.end(), rng);

  Eigen::VectorXd w_true = Eigen::VectorXd::Zero(d);
  std::vector<bool> support(static_cast<size_t>(d), false);
  std::uniform_real_distribution<double> mag(0.75, 1.25);
  for (Eigen::Index k = 0; k < k_relevant; ++k) {
    Eigen::Index j = idx[static_cast<size_t>(k)];
    support[static_cast<size_t>(j)] = true;
    w_true[j] = (k % 2 == 0 ? 1.0 : -1.0) * mag(rng);
  }

  Dataset out;
  out.features.resize(n, d);
  out.labels.resize(n);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::normal_distribution<double> gauss(0.0, 1.0);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < d; ++j) out.features(i, j) = unif(rng);
    double z = w_true.dot(out.features.row(i).transpose() -
                          Eigen::VectorXd::Constant(d, 0.5));
    if (noise > 0.0) z += noise * gauss(rng);
    out.labels[i] = z >= 0.0 ? 1.0 : -1.0;
  }
  return {std::move(out), std::move(support)};
}

}  // namespace fsp
