#pragma once

#include <vector>

namespace pcbct {

// Cosine noise schedule. Tables are indexed by timestep: entry 0 holds the
// noiseless state (beta 0, gamma 1, alpha_bar 1) and entries 1..T the steps.
struct NoiseSchedule {
  int steps = 0;
  double delta = 0.999;  // upper clip for beta
  double tau = 0.008;    // offset of the cosine argument
  std::vector<double> beta;
  std::vector<double> gamma;      // cumulative product of (1 - beta)
  std::vector<double> alpha_bar;  // f(t) / f(0)

  double beta_at(int t) const { return beta.at(t); }
  double gamma_at(int t) const { return gamma.at(t); }
};

// Throws ParameterError unless steps >= 1, 0 < delta <= 1 and tau > 0.
NoiseSchedule build_schedule(int steps, double delta = 0.999, double tau = 0.008);

}  // namespace pcbct
