#include "promo/diffusion/schedule.hpp"

#include <algorithm>
#include <cmath>

#include "promo/core/error.hpp"

namespace promo::diffusion {
namespace {

DiffusionSchedule from_betas(ScheduleKind kind, std::vector<double> beta) {
  DiffusionSchedule s;
  s.kind = kind;
  s.T = static_cast<int>(beta.size()) - 1;
  s.beta = std::move(beta);
  s.alpha.resize(s.T + 1);
  s.alpha_bar.resize(s.T + 1);
  s.posterior_variance.resize(s.T + 1);
  s.alpha[0] = 1.0;
  s.alpha_bar[0] = 1.0;
  s.posterior_variance[0] = 0.0;
  for (int t = 1; t <= s.T; ++t) {
    s.alpha[t] = 1.0 - s.beta[t];
    s.alpha_bar[t] = s.alpha_bar[t - 1] * s.alpha[t];
    s.posterior_variance[t] = (1.0 - s.alpha_bar[t - 1]) / (1.0 - s.alpha_bar[t]) * s.beta[t];
  }
  return s;
}

}  // namespace

std::string to_string(ScheduleKind k) { return k == ScheduleKind::linear ? "linear" : "cosine"; }

ScheduleKind schedule_kind_from_string(const std::string& s) {
  if (s == "linear") return ScheduleKind::linear;
  if (s == "cosine") return ScheduleKind::cosine;
  throw DomainError("unknown schedule kind: " + s);
}

void DiffusionSchedule::check_step(int t) const {
  if (t < 1 || t > T) throw DomainError("timestep " + std::to_string(t) + " outside [1, " + std::to_string(T) + "]");
}

DiffusionSchedule linear_schedule(int T) {
  if (T < 1) throw DomainError("schedule needs T >= 1");
  constexpr double start = 0.00085, end = 0.012;
  std::vector<double> beta(T + 1, 0.0);
  for (int t = 1; t <= T; ++t) beta[t] = T == 1 ? start : start + (end - start) * (t - 1) / static_cast<double>(T - 1);
  return from_betas(ScheduleKind::linear, std::move(beta));
}

DiffusionSchedule cosine_schedule(int T) {
  if (T < 1) throw DomainError("schedule needs T >= 1");
  constexpr double s = 0.008;
  auto f = [&](double t) {
    const double c = std::cos((t / T + s) / (1.0 + s) * M_PI / 2.0);
    return c * c;
  };
  const double f0 = f(0.0);
  std::vector<double> beta(T + 1, 0.0);
  for (int t = 1; t <= T; ++t) beta[t] = std::min(1.0 - (f(t) / f0) / (f(t - 1) / f0), 0.999);
  return from_betas(ScheduleKind::cosine, std::move(beta));
}

DiffusionSchedule make_schedule(ScheduleKind kind, int T) {
  return kind == ScheduleKind::linear ? linear_schedule(T) : cosine_schedule(T);
}

}  // namespace promo::diffusion
