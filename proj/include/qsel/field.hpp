#pragma once

#include <cmath>
#include <stdexcept>

#include "qsel/hermitian.hpp"
#include "qsel/rng.hpp"

namespace qsel {

// Uniform grid on [0, T] with M piecewise-constant control intervals.
struct TimeGrid {
  double T = 0.0;
  int M = 0;

  TimeGrid() = default;
  TimeGrid(double horizon, int steps) : T(horizon), M(steps) {
    if (!(T > 0.0) || !std::isfinite(T)) throw std::invalid_argument("grid: T must be positive and finite");
    if (M < 1) throw std::invalid_argument("grid: M must be at least 1");
  }

  double dt() const { return T / M; }

  bool operator==(const TimeGrid& o) const { return T == o.T && M == o.M; }
};

// One control amplitude per interval, eps_j held on [j dt, (j+1) dt).
struct ControlField {
  TimeGrid grid;
  RealVector samples;

  ControlField() = default;
  ControlField(const TimeGrid& g, RealVector s) : grid(g), samples(std::move(s)) {
    if (samples.size() != grid.M) throw std::invalid_argument("field: sample count must equal M");
    if (!samples.allFinite()) throw std::invalid_argument("field: samples must be finite");
  }

  static ControlField zero(const TimeGrid& g) { return ControlField(g, RealVector::Zero(g.M)); }
};

inline ControlField noise_field(const TimeGrid& grid, double amplitude, std::uint64_t seed) {
  Rng rng(seed);
  RealVector s(grid.M);
  for (int j = 0; j < grid.M; ++j) s[j] = amplitude * rng.next_gaussian();
  return ControlField(grid, std::move(s));
}

// sqrt(dt * sum eps_j^2)
inline double l2_norm(const ControlField& f) {
  return std::sqrt(f.grid.dt() * f.samples.squaredNorm());
}

}  // namespace qsel
