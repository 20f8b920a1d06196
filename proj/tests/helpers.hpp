#pragma once

#include "dmpopt/dmp.hpp"
#include "dmpopt/rng.hpp"

namespace testing_util {

// Controls drawn uniformly from [0, cap) for both mechanisms.
inline dmpopt::ControlSchedule random_controls(std::size_t n, int horizon, double nu_cap, double mu_cap,
                                               std::uint64_t seed) {
  dmpopt::ControlSchedule c(n, horizon);
  dmpopt::SeededStream rng(seed);
  for (int t = 0; t < horizon; ++t) {
    for (std::size_t i = 0; i < n; ++i) {
      c.set_nu(static_cast<dmpopt::NodeId>(i), t, nu_cap * rng.uniform());
      c.set_mu(static_cast<dmpopt::NodeId>(i), t, mu_cap * rng.uniform());
    }
  }
  return c;
}

// Random probabilistic start: each node gets a random (s, i, r) triple.
inline dmpopt::InitialCondition random_init(std::size_t n, std::uint64_t seed) {
  dmpopt::SeededStream rng(seed);
  std::vector<dmpopt::InitialCondition::Triple> v(n);
  for (auto& x : v) {
    const double a = rng.uniform(), b = rng.uniform();
    x.i = 0.4 * a;
    x.r = 0.2 * b;
    x.s = 1.0 - x.i - x.r;
  }
  return dmpopt::InitialCondition(v);
}

}  // namespace testing_util
