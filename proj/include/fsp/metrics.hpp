#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <vector>

#include "fsp/learners.hpp"

namespace fsp {

/// A selected feature subset: boolean mask over the d features plus the
/// cached cardinality. `padded` counts members that were included only to
/// fill a top-k request while having exactly zero weight.
struct FeatureSubset {
  std::vector<bool> mask;
  Eigen::Index k = 0;
  Eigen::Index padded = 0;

  Eigen::Index d() const { return static_cast<Eigen::Index>(mask.size()); }

  static FeatureSubset from_mask(std::vector<bool> m) {
    FeatureSubset s;
    s.k = static_cast<Eigen::Index>(std::count(m.begin(), m.end(), true));
    s.mask = std::move(m);
    return s;
  }
};

/// mask_j = (|w_j| > threshold); the embedded selector's output.
inline FeatureSubset selected_features(const LinearModel& model, double threshold = 1e-8) {
  FeatureSubset s;
  s.mask.resize(static_cast<size_t>(model.weights.size()));
  for (Eigen::Index j = 0; j < model.weights.size(); ++j) {
    bool on = std::abs(model.weights[j]) > threshold;
    s.mask[static_cast<size_t>(j)] = on;
    if (on) ++s.k;
  }
  return s;
}

/// The k features of largest |w|, ties broken toward the lower index.
/// When fewer than k weights are nonzero the subset is padded with
/// zero-weight features (again by index order) and `padded` records
/// how many.
inline FeatureSubset top_k(const LinearModel& model, Eigen::Index k) {
  const Eigen::Index d = model.weights.size();
  if (k <= 0 || k >= d) throw std::invalid_argument("top_k: need 0 < k < d");
  std::vector<Eigen::Index> order(static_cast<size_t>(d));
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](Eigen::Index a, Eigen::Index b) {
    return std::abs(model.weights[a]) > std::abs(model.weights[b]);
  });
  FeatureSubset s;
  s.mask.assign(static_cast<size_t>(d), false);
  s.k = k;
  for (Eigen::Index i = 0; i < k; ++i) {
    Eigen::Index j = order[static_cast<size_t>(i)];
    s.mask[static_cast<size_t>(j)] = true;
    if (model.weights[j] == 0.0) ++s.padded;
  }
  return s;
}

/// Kuncheva consistency index I_C(A,B) = (r*d - k^2) / (k * (d-k)) with
/// r = |A intersect B|. 1 means identical subsets, 0 chance-level overlap,
/// negative anti-correlation.
inline double kuncheva_index(const FeatureSubset& a, const FeatureSubset& b) {
  if (a.d() != b.d()) throw std::invalid_argument("kuncheva_index: dimension mismatch");
  if (a.k != b.k) throw std::invalid_argument("kuncheva_index: subsets must share k");
  const Eigen::Index d = a.d(), k = a.k;
  if (k <= 0 || k >= d)
    throw std::invalid_argument("kuncheva_index: need 0 < k < d");
  Eigen::Index r = 0;
  for (Eigen::Index j = 0; j < d; ++j)
    if (a.mask[static_cast<size_t>(j)] && b.mask[static_cast<size_t>(j)]) ++r;
  return (static_cast<double>(r) * d - static_cast<double>(k) * k) /
         (static_cast<double>(k) * (d - k));
}

struct StabilityReport {
  Eigen::Index k = 0;
  double mean_index = 0.0;
  double std_index = 0.0;  // population standard deviation
  Eigen::Index pair_count = 0;
};

namespace detail {

inline StabilityReport summarize_pairs(const std::vector<double>& vals, Eigen::Index k) {
  StabilityReport rep;
  rep.k = k;
  rep.pair_count = static_cast<Eigen::Index>(vals.size());
  if (vals.empty()) return rep;
  double mean = std::accumulate(vals.begin(), vals.end(), 0.0) / vals.size();
  double var = 0.0;
  for (double v : vals) var += (v - mean) * (v - mean);
  rep.mean_index = mean;
  rep.std_index = std::sqrt(var / vals.size());
  return rep;
}

}  // namespace detail

/// Average I_C over the cross product of two subset lists (clean runs
/// against runs under attack). Within-list pairs are excluded.
inline StabilityReport average_pairwise_stability(const std::vector<FeatureSubset>& clean,
                                                  const std::vector<FeatureSubset>& attacked) {
  if (clean.empty() || attacked.empty())
    throw std::invalid_argument("average_pairwise_stability: both lists must be nonempty");
  std::vector<double> vals;
  vals.reserve(clean.size() * attacked.size());
  for (const auto& a : clean)
    for (const auto& b : attacked) vals.push_back(kuncheva_index(a, b));
  return detail::summarize_pairs(vals, clean.front().k);
}

/// Average I_C over the C(m,2) unordered pairs of one list; the
/// clean-vs-clean reference level.
inline StabilityReport average_within_stability(const std::vector<FeatureSubset>& subsets) {
  if (subsets.size() < 2)
    throw std::invalid_argument("average_within_stability: need at least two subsets");
  std::vector<double> vals;
  for (size_t i = 0; i < subsets.size(); ++i)
    for (size_t j = i + 1; j < subsets.size(); ++j)
      vals.push_back(kuncheva_index(subsets[i], subsets[j]));
  return detail::summarize_pairs(vals, subsets.front().k);
}

}  // namespace fsp
