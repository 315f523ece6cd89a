#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>

#include "poe/features.hpp"
#include "poe/pcc.hpp"

namespace poe {

/// splitmix64 finaliser; used to derive independent per-sample streams.
inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t id) { return splitmix64(splitmix64(seed) ^ id); }

/// Synthetic stand-in for the finger's acoustic response. Features of
/// microphone c in the lower band are Gaussian bumps over the bend
/// coordinates (theta cos phi, theta sin phi), theta = curvature * length;
/// the upper band responds to contact through bumps over (axial position,
/// direction) scaled by depth. Everything is scaled by the microphone gain,
/// and the response of the straight, untouched finger is subtracted, as
/// background subtraction would.
struct AcousticModelConfig {
  SpectrogramConfig spectrum;     ///< fixes the bin count F
  double length = 110.0;          ///< mm, converts curvature to bend angle
  double max_bend = std::numbers::pi / 2;  ///< rad, extent of the centre grid
  double kernel_width = 0.35;     ///< rad
  /// Fraction of the bins that respond to bending; the rest respond to contact.
  double bend_band = 0.75;
  double contact_gain = 0.5;
  double contact_depth_ref = 3.0;   ///< mm
  double contact_axial_width = 0.15;  ///< fraction of length
  double contact_angular_focus = 2.0;
  /// Distance of each microphone from the speaker (mm) and the decay length
  /// of its gain.
  std::array<double, kNumMicrophones> mic_distance{10.0, 25.0, 40.0, 55.0, 70.0, 85.0};
  double gain_decay = 100.0;  ///< mm
  double noise_sigma = 0.01;
  /// Servo-encoder proxy: hysteresis offset along the bend direction and
  /// Gaussian jitter, both in rad of bend angle.
  double servo_hysteresis = 0.03;
  double servo_noise = 0.01;

  int bins() const { return spectrum.bins(); }
  int bend_bins() const { return std::clamp(static_cast<int>(std::lround(bend_band * bins())), 1, bins()); }
  int feature_dim() const { return spectrum.feature_dim(); }

  double gain(int mic) const { return std::exp(-mic_distance.at(static_cast<std::size_t>(mic)) / gain_decay); }

  void validate() const {
    spectrum.validate();
    if (!(length > 0.0) || !(max_bend > 0.0) || !(kernel_width > 0.0)) {
      throw ParameterError("length, max_bend and kernel_width must be > 0");
    }
    if (!(gain_decay > 0.0) || !(contact_depth_ref > 0.0) || !(contact_axial_width > 0.0)) {
      throw ParameterError("decay lengths must be > 0");
    }
    if (!(bend_band > 0.0 && bend_band <= 1.0)) throw ParameterError("bend_band must be in (0, 1]");
    if (!(contact_gain >= 0.0) || !(noise_sigma >= 0.0) || !(servo_hysteresis >= 0.0) || !(servo_noise >= 0.0)) {
      throw ParameterError("gains and noise levels must be >= 0");
    }
  }
};

namespace detail {

struct KernelCentre {
  double x, y;        ///< bend coordinates, rad
  double axial;       ///< contact position, fraction of length
  double direction;   ///< contact azimuth, rad
};

/// Bend bins: Vogel (sunflower) spiral over the bend disk, turned per
/// microphone so the six channels sample the workspace differently.
/// Contact bins: a low-discrepancy cover of (axial position, direction).
inline KernelCentre kernel_centre(const AcousticModelConfig& cfg, int mic, int bin) {
  const double golden = std::numbers::pi * (3.0 - std::sqrt(5.0));
  const int nb = cfg.bend_bins();
  if (bin < nb) {
    const double r = 1.1 * cfg.max_bend * std::sqrt((bin + 0.5) / nb);
    const double a = bin * golden + mic * (2.0 * std::numbers::pi / kNumMicrophones) / 3.0;
    return {r * std::cos(a), r * std::sin(a), 0.0, 0.0};
  }
  const int j = bin - nb;
  const double axial = 0.1 + 0.85 * std::fmod((j + 0.5) * std::numbers::inv_sqrt3 + 0.17 * mic, 1.0);
  const double dir = std::fmod(j * golden + mic * 1.1, 2.0 * std::numbers::pi);
  return {0.0, 0.0, axial, dir};
}

inline double kernel_response(const AcousticModelConfig& cfg, int bin, const KernelCentre& k, const BendState& s) {
  if (bin < cfg.bend_bins()) {
    const double theta = s.curvature * cfg.length;
    const double dx = theta * std::cos(s.plane_angle) - k.x;
    const double dy = theta * std::sin(s.plane_angle) - k.y;
    return std::exp(-(dx * dx + dy * dy) / (2.0 * cfg.kernel_width * cfg.kernel_width));
  }
  if (!s.contact || s.contact->depth == 0.0) return 0.0;
  const double da = s.contact->axial_position / cfg.length - k.axial;
  return cfg.contact_gain * (s.contact->depth / cfg.contact_depth_ref) *
         std::exp(-da * da / (2.0 * cfg.contact_axial_width * cfg.contact_axial_width)) *
         std::exp(cfg.contact_angular_focus * (std::cos(s.contact->direction - k.direction) - 1.0));
}

}  // namespace detail

/// Noise-free feature vector of `state`, relative to the rest state.
inline FeatureVector acoustic_response(const BendState& state, const AcousticModelConfig& config) {
  config.validate();
  const int f = config.bins();
  const BendState rest{};
  FeatureVector out(config.feature_dim());
  for (int c = 0; c < kNumMicrophones; ++c) {
    const double g = config.gain(c);
    for (int b = 0; b < f; ++b) {
      const auto k = detail::kernel_centre(config, c, b);
      out(c * f + b) = g * (detail::kernel_response(config, b, k, state) - detail::kernel_response(config, b, k, rest));
    }
  }
  return out;
}

/// acoustic_response plus i.i.d. Gaussian noise of config.noise_sigma.
template <typename Rng>
FeatureVector forward_acoustic(const BendState& state, const AcousticModelConfig& config, Rng& rng) {
  FeatureVector out = acoustic_response(state, config);
  if (config.noise_sigma > 0.0) {
    std::normal_distribution<double> noise(0.0, config.noise_sigma);
    for (Eigen::Index i = 0; i < out.size(); ++i) out(i) += noise(rng);
  }
  return out;
}

/// Two-value stand-in for the tendon servo encoders: (kappa cos phi,
/// kappa sin phi) in 1/mm, offset by hysteresis along the bend direction and
/// jitter. Blind to contact by construction.
template <typename Rng>
Eigen::Vector2d servo_proxy(const BendState& state, const AcousticModelConfig& config, Rng& rng) {
  std::uniform_int_distribution<int> side(0, 1);
  std::normal_distribution<double> jitter(0.0, 1.0);
  const double theta = state.curvature * config.length;
  const double h = (side(rng) == 0 ? -0.5 : 0.5) * config.servo_hysteresis;
  const double c = std::cos(state.plane_angle), s = std::sin(state.plane_angle);
  Eigen::Vector2d v((theta + h) * c, (theta + h) * s);
  v.x() += config.servo_noise * jitter(rng);
  v.y() += config.servo_noise * jitter(rng);
  return v / config.length;
}

}  // namespace poe
