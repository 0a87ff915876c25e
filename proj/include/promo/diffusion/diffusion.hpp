#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <memory>
#include <vector>

#include "promo/core/error.hpp"
#include "promo/core/rng.hpp"
#include "promo/diffusion/schedule.hpp"
#include "promo/nn/tape.hpp"

namespace promo::diffusion {

using nn::Shape;
using nn::Tensor;

struct GuidanceConfig {
  double w = 2.0;
  double condition_dropout = 0.1;

  void validate() const {
    if (!std::isfinite(w)) throw DomainError("guidance weight must be finite");
    if (!(condition_dropout >= 0.0 && condition_dropout <= 1.0))
      throw DomainError("condition dropout must lie in [0, 1]");
  }
};

/// Inference contract: predicts x0 from x_t. A null condition pointer selects
/// the unconditional branch.
template <class Cond>
class Denoiser {
 public:
  virtual ~Denoiser() = default;

  class Session {
   public:
    virtual ~Session() = default;
    /// x_t is [batch, ...]; every sample in the batch is at timestep t.
    virtual Tensor<float> predict(const Tensor<float>& x_t, int t) = 0;
  };

  /// Prepares per-condition state that stays fixed across timesteps.
  virtual std::unique_ptr<Session> session(const std::vector<const Cond*>& conditions) const = 0;
};

/// Training contract: differentiable x0 prediction on a tape.
template <class T, class Cond>
class TrainableDenoiser {
 public:
  virtual ~TrainableDenoiser() = default;
  virtual nn::Var forward(nn::Tape<T>& tape, nn::Var x_t, const std::vector<int>& steps,
                          const std::vector<const Cond*>& conditions) const = 0;
  virtual nn::ParameterStore<T>& parameters() = 0;
};

/// x_t = sqrt(abar_t) x0 + sqrt(1 - abar_t) noise.
template <class T>
Tensor<T> q_sample(const Tensor<T>& x0, int t, const DiffusionSchedule& s, const Tensor<T>& noise) {
  s.check_step(t);
  if (noise.size() != x0.size()) throw ShapeError("q_sample: noise shape differs from x0");
  const double a = std::sqrt(s.alpha_bar[t]), b = std::sqrt(1.0 - s.alpha_bar[t]);
  Tensor<T> out(x0.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = static_cast<T>(a * x0[i] + b * noise[i]);
  return out;
}

/// f_uncond + w (f_cond - f_uncond); w = 0 and w = 1 return the branch unchanged.
template <class T>
Tensor<T> cfg_combine(const Tensor<T>& uncond, const Tensor<T>& cond, double w) {
  if (uncond.shape() != cond.shape()) throw ShapeError("cfg_combine: shape mismatch");
  if (w == 0.0) return uncond;
  if (w == 1.0) return cond;
  Tensor<T> out(uncond.shape());
  for (std::size_t i = 0; i < out.size(); ++i)
    out[i] = static_cast<T>(uncond[i] + w * (static_cast<double>(cond[i]) - uncond[i]));
  return out;
}

struct PosteriorCoefficients {
  double x0_coef;
  double xt_coef;
  double variance;
};

inline PosteriorCoefficients posterior_coefficients(int t, const DiffusionSchedule& s) {
  s.check_step(t);
  const double ab = s.alpha_bar[t], ab_prev = s.alpha_bar[t - 1];
  return {std::sqrt(ab_prev) * s.beta[t] / (1.0 - ab), std::sqrt(s.alpha[t]) * (1.0 - ab_prev) / (1.0 - ab),
          s.posterior_variance[t]};
}

/// One reverse step from the posterior q(x_{t-1} | x_t, x0_hat); no noise at t = 1.
template <class T>
Tensor<T> posterior_step(const Tensor<T>& x_t, const Tensor<T>& x0_hat, int t, const DiffusionSchedule& s,
                         const Tensor<T>& noise) {
  const PosteriorCoefficients c = posterior_coefficients(t, s);
  if (x0_hat.size() != x_t.size() || noise.size() != x_t.size()) throw ShapeError("posterior_step: shape mismatch");
  const double sd = t > 1 ? std::sqrt(c.variance) : 0.0;
  Tensor<T> out(x_t.shape());
  for (std::size_t i = 0; i < out.size(); ++i)
    out[i] = static_cast<T>(c.x0_coef * x0_hat[i] + c.xt_coef * x_t[i] + sd * noise[i]);
  return out;
}

/// Reverse diffusion for a batch. Sample b starts from and draws its noise
/// from the stream seeded by seeds[b], so results do not depend on how samples
/// are grouped into batches beyond floating-point kernel effects.
template <class Cond>
Tensor<float> sample(const Denoiser<Cond>& denoiser, const DiffusionSchedule& schedule,
                     const std::vector<const Cond*>& conditions, const GuidanceConfig& guidance,
                     const Shape& sample_shape, const std::vector<std::uint64_t>& seeds, double clip = 3.0) {
  guidance.validate();
  const std::size_t batch = seeds.size();
  if (conditions.size() != batch) throw ShapeError("sample: one condition per seed required");
  if (batch == 0) throw ShapeError("sample: empty batch");
  Shape shape{batch};
  shape.insert(shape.end(), sample_shape.begin(), sample_shape.end());
  const std::size_t per = nn::shape_size(sample_shape);
  std::vector<Rng> streams;
  streams.reserve(batch);
  for (std::uint64_t s : seeds) streams.emplace_back(s);
  auto draw = [&](Tensor<float>& t) {
    for (std::size_t b = 0; b < batch; ++b)
      for (std::size_t i = 0; i < per; ++i) t[b * per + i] = static_cast<float>(streams[b].normal());
  };
  Tensor<float> x(shape);
  draw(x);

  const bool need_uncond = guidance.w != 1.0;
  const bool need_cond = guidance.w != 0.0;
  std::unique_ptr<typename Denoiser<Cond>::Session> uncond_session, cond_session;
  if (need_uncond) uncond_session = denoiser.session(std::vector<const Cond*>(batch, nullptr));
  if (need_cond) cond_session = denoiser.session(conditions);

  Tensor<float> noise(shape);
  for (int t = schedule.T; t >= 1; --t) {
    Tensor<float> u, c;
    if (need_uncond) u = uncond_session->predict(x, t);
    if (need_cond) c = cond_session->predict(x, t);
    const Tensor<float>& ref = need_uncond ? u : c;
    if (ref.shape() != x.shape()) throw ShapeError("denoiser output shape differs from its input");
    if (need_uncond && need_cond && c.shape() != x.shape()) throw ShapeError("denoiser output shape differs from its input");
    Tensor<float> x0 = need_uncond && need_cond ? cfg_combine(u, c, guidance.w) : ref;
    if (clip > 0.0)
      for (auto& v : x0.values()) v = std::clamp(v, static_cast<float>(-clip), static_cast<float>(clip));
    draw(noise);
    x = posterior_step(x, x0, t, schedule, noise);
    if (!x.all_finite()) throw NumericError("non-finite value during sampling at t=" + std::to_string(t));
  }
  return x;
}

struct TrainStepResult {
  double loss = 0.0;
  std::vector<int> steps;
  std::vector<bool> dropped;
};

/// One x0-prediction step: uniform t per sample, closed-form noising, condition
/// replaced by null with probability condition_dropout, loss = mean squared
/// error over all elements. Gradients are accumulated into the denoiser's
/// parameters after zeroing them.
template <class T, class Cond>
TrainStepResult train_step(TrainableDenoiser<T, Cond>& denoiser, const Tensor<T>& x0,
                           const std::vector<const Cond*>& conditions, const DiffusionSchedule& schedule,
                           double condition_dropout, std::uint64_t seed) {
  const std::size_t batch = x0.rank() == 0 ? 0 : x0.shape()[0];
  if (batch == 0) throw ShapeError("train_step: empty batch");
  if (conditions.size() != batch) throw ShapeError("train_step: one condition per sample required");
  if (!(condition_dropout >= 0.0 && condition_dropout <= 1.0)) throw DomainError("condition dropout must lie in [0, 1]");
  const std::size_t per = x0.size() / batch;
  TrainStepResult r;
  Tensor<T> x_t(x0.shape());
  std::vector<const Cond*> used(batch);
  for (std::size_t b = 0; b < batch; ++b) {
    Rng rng(derive_seed(seed, {b}));
    const int t = static_cast<int>(rng.integer(1, schedule.T));
    const double a = std::sqrt(schedule.alpha_bar[t]), s = std::sqrt(1.0 - schedule.alpha_bar[t]);
    for (std::size_t i = 0; i < per; ++i) x_t[b * per + i] = static_cast<T>(a * x0[b * per + i] + s * rng.normal());
    const bool drop = rng.bernoulli(condition_dropout);
    used[b] = drop ? nullptr : conditions[b];
    r.steps.push_back(t);
    r.dropped.push_back(drop);
  }
  typename nn::Tape<T>::Options opt;
  opt.train = true;
  opt.seed = derive_seed(seed, {0xd1ce});
  nn::Tape<T> tape(opt);
  nn::Var pred = denoiser.forward(tape, tape.constant(std::move(x_t)), r.steps, used);
  if (tape.value(pred).size() != x0.size()) throw ShapeError("denoiser output shape differs from its input");
  nn::Var loss = tape.mse(pred, tape.constant(x0));
  r.loss = static_cast<double>(tape.value(loss)[0]);
  if (!std::isfinite(r.loss)) throw NumericError("non-finite training loss");
  denoiser.parameters().zero_grad();
  tape.backward(loss);
  return r;
}

}  // namespace promo::diffusion
