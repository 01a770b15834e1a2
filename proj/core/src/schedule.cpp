#include "pcbct/schedule.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "pcbct/errors.hpp"

namespace pcbct {

NoiseSchedule build_schedule(int steps, double delta, double tau) {
  if (steps < 1) throw ParameterError("schedule needs at least one step, got " + std::to_string(steps));
  if (!(delta > 0.0 && delta <= 1.0)) throw ParameterError("delta must lie in (0, 1]");
  if (!(tau > 0.0)) throw ParameterError("tau must be positive");

  auto f = [&](int t) {
    const double c = std::cos((static_cast<double>(t) / steps + tau) / (1.0 + tau) * std::numbers::pi / 2.0);
    return c * c;
  };
  NoiseSchedule s;
  s.steps = steps;
  s.delta = delta;
  s.tau = tau;
  s.alpha_bar.resize(steps + 1);
  s.beta.assign(steps + 1, 0.0);
  s.gamma.assign(steps + 1, 1.0);
  const double f0 = f(0);
  s.alpha_bar[0] = 1.0;
  for (int t = 1; t <= steps; ++t) s.alpha_bar[t] = f(t) / f0;
  for (int t = 1; t <= steps; ++t) {
    s.beta[t] = std::min(1.0 - s.alpha_bar[t] / s.alpha_bar[t - 1], delta);
    s.gamma[t] = s.gamma[t - 1] * (1.0 - s.beta[t]);
  }
  return s;
}

}  // namespace pcbct
