#pragma once

#include <random>
#include <stdexcept>

#include "fsp/attack.hpp"
#include "fsp/dataset.hpp"

namespace fsp {

/// Random label-flip attack: each attack point clones a uniformly drawn
/// training point (with replacement) and negates its label. Also serves
/// as the initializer for the gradient attack.
inline AttackState random_label_flip(const Dataset& data, int q, std::uint64_t seed) {
  data.validate();
  if (q < 1) throw std::invalid_argument("random_label_flip: q must be >= 1");
  AttackState state;
  state.points.resize(q, data.d());
  state.labels.resize(q);
  std::mt19937 rng(detail::derive_seed(seed, 0xf11bULL));
  std::uniform_int_distribution<Eigen::Index> pick(0, data.n() - 1);
  for (int c = 0; c < q; ++c) {
    Eigen::Index i = pick(rng);
    state.points.row(c) = data.features.row(i);
    state.labels[c] = -data.labels[i];
  }
  return state;
}

}  // namespace fsp
