#pragma once

// Small-scale DDPM machinery: variance schedules, the forward noising process
// z_t = sqrt(abar_t) z_0 + sqrt(1 - abar_t) eps, the noise-prediction MSE
// objective, and ancestral sampling. Steps are 1-based (t in [1, T]).

#include <cmath>
#include <cstddef>
#include <functional>
#include <vector>

#include "apcap/error.hpp"
#include "apcap/random.hpp"

namespace apcap::diffusion {

struct Schedule {
  std::vector<double> beta;       // beta[t-1]
  std::vector<double> alpha_bar;  // alpha_bar[t-1] = prod_{s<=t} (1 - beta_s)

  std::size_t steps() const noexcept { return beta.size(); }
  double beta_at(std::size_t t) const { return beta.at(t - 1); }
  double alpha_at(std::size_t t) const { return 1.0 - beta.at(t - 1); }
  double alpha_bar_at(std::size_t t) const { return alpha_bar.at(t - 1); }

  static Schedule from_betas(std::vector<double> betas) {
    if (betas.empty()) throw Error(ErrorKind::BadRange, "schedule needs at least one step");
    Schedule s;
    s.alpha_bar.reserve(betas.size());
    double prod = 1.0;
    for (double b : betas) {
      if (!(b > 0.0 && b < 1.0)) throw Error(ErrorKind::BadRange, "beta must lie in (0, 1)");
      prod *= 1.0 - b;
      s.alpha_bar.push_back(prod);
    }
    s.beta = std::move(betas);
    return s;
  }
};

inline constexpr double kDefaultBetaStart = 1e-4;
inline constexpr double kDefaultBetaEnd = 0.02;

/// Betas linearly interpolated from beta_start to beta_end, both inclusive.
inline Schedule linear_schedule(std::size_t steps, double beta_start = kDefaultBetaStart,
                                double beta_end = kDefaultBetaEnd) {
  if (steps < 1) throw Error(ErrorKind::BadRange, "T must be >= 1");
  if (!(beta_start > 0.0 && beta_start <= beta_end && beta_end < 1.0)) {
    throw Error(ErrorKind::BadRange, "need 0 < beta_start <= beta_end < 1");
  }
  std::vector<double> betas(steps);
  for (std::size_t i = 0; i < steps; ++i) {
    const double frac = steps == 1 ? 0.0 : static_cast<double>(i) / static_cast<double>(steps - 1);
    betas[i] = beta_start + (beta_end - beta_start) * frac;
  }
  return Schedule::from_betas(std::move(betas));
}

struct Latent {
  std::vector<double> values;
  std::vector<std::size_t> dims;

  static Latent flat(std::vector<double> v) {
    Latent l;
    l.dims = {v.size()};
    l.values = std::move(v);
    return l;
  }

  static Latent gaussian(std::vector<std::size_t> dims, Rng& rng) {
    std::size_t n = 1;
    for (auto d : dims) n *= d;
    Latent l{std::vector<double>(n), std::move(dims)};
    for (auto& x : l.values) x = standard_normal(rng);
    return l;
  }

  std::size_t size() const noexcept { return values.size(); }
};

inline void check_same_shape(const Latent& a, const Latent& b) {
  if (a.values.size() != b.values.size() || a.dims != b.dims) {
    throw Error(ErrorKind::DimMismatch, "latent shapes differ");
  }
}

inline Latent forward_diffuse(const Latent& z0, std::size_t t, const Schedule& sched, const Latent& noise) {
  if (t < 1 || t > sched.steps()) throw Error(ErrorKind::StepOutOfRange, "step " + std::to_string(t) + " outside [1, T]");
  check_same_shape(z0, noise);
  const double signal = std::sqrt(sched.alpha_bar_at(t));
  const double spread = std::sqrt(1.0 - sched.alpha_bar_at(t));
  Latent zt{std::vector<double>(z0.size()), z0.dims};
  for (std::size_t i = 0; i < z0.size(); ++i) zt.values[i] = signal * z0.values[i] + spread * noise.values[i];
  return zt;
}

/// Mean of squared elementwise differences.
inline double mse_objective(const Latent& pred_noise, const Latent& true_noise) {
  check_same_shape(pred_noise, true_noise);
  if (pred_noise.size() == 0) return 0.0;
  double sum = 0.0;
  for (std::size_t i = 0; i < pred_noise.size(); ++i) {
    const double d = pred_noise.values[i] - true_noise.values[i];
    sum += d * d;
  }
  return sum / static_cast<double>(pred_noise.size());
}

using Denoiser = std::function<Latent(const Latent& z, std::size_t t)>;

/// Ancestral DDPM sampling from step T down to 1:
///   mean = (z_t - beta_t / sqrt(1 - abar_t) * eps) / sqrt(alpha_t)
///   z_{t-1} = mean + sqrt(beta_tilde_t) * n,  beta_tilde_t = (1 - abar_{t-1}) / (1 - abar_t) * beta_t
/// with no noise added on the final step.
inline Latent toy_denoise(const Latent& zT, const Schedule& sched, const Denoiser& denoiser, Rng& rng) {
  Latent z = zT;
  for (std::size_t t = sched.steps(); t >= 1; --t) {
    const Latent eps = denoiser(z, t);
    check_same_shape(z, eps);
    const double beta = sched.beta_at(t);
    const double abar = sched.alpha_bar_at(t);
    const double inv_sqrt_alpha = 1.0 / std::sqrt(sched.alpha_at(t));
    const double eps_coef = beta / std::sqrt(1.0 - abar);
    const double sigma = t > 1 ? std::sqrt((1.0 - sched.alpha_bar_at(t - 1)) / (1.0 - abar) * beta) : 0.0;
    for (std::size_t i = 0; i < z.size(); ++i) {
      const double mean = inv_sqrt_alpha * (z.values[i] - eps_coef * eps.values[i]);
      z.values[i] = t > 1 ? mean + sigma * standard_normal(rng) : mean;
    }
  }
  return z;
}

/// Denoiser steering towards a target clean latent:
/// eps = strength * (z_t - sqrt(abar_t) target) / sqrt(1 - abar_t).
/// The schedule is captured by value.
inline Denoiser target_denoiser(Latent target, Schedule sched, double strength = 1.0) {
  return [z0 = std::move(target), sched = std::move(sched), strength](const Latent& z, std::size_t t) {
    const double signal = std::sqrt(sched.alpha_bar_at(t));
    const double spread = std::sqrt(1.0 - sched.alpha_bar_at(t));
    Latent eps{std::vector<double>(z.size()), z.dims};
    for (std::size_t i = 0; i < z.size(); ++i) eps.values[i] = strength * (z.values[i] - signal * z0.values[i]) / spread;
    return eps;
  };
}

}  // namespace apcap::diffusion
