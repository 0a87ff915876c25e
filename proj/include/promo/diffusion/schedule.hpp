#pragma once

#include <string>
#include <vector>

namespace promo::diffusion {

enum class ScheduleKind { linear, cosine };

std::string to_string(ScheduleKind k);
ScheduleKind schedule_kind_from_string(const std::string& s);

/// Arrays are indexed by timestep 0..T; index 0 is the clean reference with
/// beta = 0 and alpha_bar = 1.
struct DiffusionSchedule {
  ScheduleKind kind = ScheduleKind::linear;
  int T = 0;
  std::vector<double> beta;
  std::vector<double> alpha;
  std::vector<double> alpha_bar;
  std::vector<double> posterior_variance;

  void check_step(int t) const;
};

/// beta linearly spaced from 0.00085 to 0.012 inclusive.
DiffusionSchedule linear_schedule(int T);
/// alpha_bar(t) = f(t)/f(0), f(t) = cos^2(((t/T + s)/(1 + s)) * pi/2), s = 0.008,
/// with beta clipped to 0.999.
DiffusionSchedule cosine_schedule(int T);
DiffusionSchedule make_schedule(ScheduleKind kind, int T);

}  // namespace promo::diffusion
