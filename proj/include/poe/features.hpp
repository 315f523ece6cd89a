#pragma once

#include <array>
#include <cmath>
#include <complex>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <unsupported/Eigen/FFT>

#include "poe/errors.hpp"

namespace poe {

inline constexpr int kNumMicrophones = 6;

/// Concatenated per-microphone features, channel-major.
using FeatureVector = Eigen::VectorXd;

enum class SpectrumScale { magnitude, power };

struct SpectrogramConfig {
  int segment_length = 256;  ///< samples per frame
  int hop = 128;             ///< samples between frame starts
  double tukey_alpha = 0.25;
  SpectrumScale scale = SpectrumScale::magnitude;

  int bins() const noexcept { return segment_length / 2 + 1; }
  int feature_dim() const noexcept { return kNumMicrophones * bins(); }

  void validate() const {
    if (segment_length < 2) throw ParameterError("segment_length must be >= 2");
    if (hop <= 0 || hop > segment_length) throw ParameterError("hop must be in (0, segment_length]");
    if (!(tukey_alpha >= 0.0 && tukey_alpha <= 1.0)) throw ParameterError("tukey_alpha must be in [0, 1]");
  }
};

/// Six equal-length channels sampled at `sample_rate` Hz.
class AudioClip {
 public:
  AudioClip(std::array<std::vector<double>, kNumMicrophones> channels, double sample_rate)
      : channels_(std::move(channels)), sample_rate_(sample_rate) {
    if (!(sample_rate_ > 0.0)) throw ParameterError("sample rate must be > 0");
    for (const auto& c : channels_) {
      if (c.size() != channels_[0].size()) throw DimensionError("audio channels differ in length");
    }
  }

  std::span<const double> channel(int c) const { return channels_.at(static_cast<std::size_t>(c)); }
  std::size_t samples() const noexcept { return channels_[0].size(); }
  double sample_rate() const noexcept { return sample_rate_; }
  double duration() const noexcept { return static_cast<double>(samples()) / sample_rate_; }

 private:
  std::array<std::vector<double>, kNumMicrophones> channels_;
  double sample_rate_;
};

/// Tukey (tapered cosine) window. alpha = 0 is rectangular, alpha = 1 is
/// Hann. The periodic form (default) is the symmetric window of length
/// n + 1 with the last sample dropped, as used for spectral analysis.
inline std::vector<double> tukey_window(int n, double alpha, bool periodic = true) {
  if (n < 1) throw ParameterError("window length must be >= 1");
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw ParameterError("tukey alpha must be in [0, 1]");
  const int m = periodic ? n + 1 : n;
  std::vector<double> w(static_cast<std::size_t>(n), 1.0);
  if (m == 1 || alpha == 0.0) return w;
  for (int i = 0; i < n; ++i) {
    const double x = static_cast<double>(i) / (m - 1);
    if (x < alpha / 2.0) {
      w[i] = 0.5 * (1.0 - std::cos(2.0 * std::numbers::pi * x / alpha));
    } else if (x > 1.0 - alpha / 2.0) {
      w[i] = 0.5 * (1.0 - std::cos(2.0 * std::numbers::pi * (1.0 - x) / alpha));
    }
  }
  return w;
}

/// Frames x bins array of windowed DFT magnitudes (or powers).
inline Eigen::MatrixXd spectrogram(std::span<const double> samples, double sample_rate, const SpectrogramConfig& config) {
  config.validate();
  if (!(sample_rate > 0.0)) throw ParameterError("sample rate must be > 0");
  const auto n = static_cast<std::size_t>(config.segment_length);
  if (samples.size() < n) {
    throw InputError("clip has " + std::to_string(samples.size()) + " samples, one segment needs " + std::to_string(n));
  }
  const auto frames = static_cast<Eigen::Index>((samples.size() - n) / static_cast<std::size_t>(config.hop) + 1);
  const int bins = config.bins();
  const std::vector<double> window = tukey_window(config.segment_length, config.tukey_alpha);

  Eigen::FFT<double> fft;
  std::vector<double> seg(n);
  std::vector<std::complex<double>> spec;
  Eigen::MatrixXd out(frames, bins);
  for (Eigen::Index f = 0; f < frames; ++f) {
    const std::size_t start = static_cast<std::size_t>(f) * static_cast<std::size_t>(config.hop);
    for (std::size_t i = 0; i < n; ++i) seg[i] = samples[start + i] * window[i];
    fft.fwd(spec, seg);
    for (int b = 0; b < bins; ++b) {
      const double mag = std::abs(spec[static_cast<std::size_t>(b)]);
      out(f, b) = config.scale == SpectrumScale::power ? mag * mag : mag;
    }
  }
  return out;
}

/// Per-channel time-mean of the spectrogram rows.
inline Eigen::MatrixXd time_averaged_spectra(const AudioClip& clip, const SpectrogramConfig& config) {
  Eigen::MatrixXd out(kNumMicrophones, config.bins());
  for (int c = 0; c < kNumMicrophones; ++c) {
    out.row(c) = spectrogram(clip.channel(c), clip.sample_rate(), config).colwise().mean();
  }
  return out;
}

/// Time-averaged spectrum of each channel of the quiescent recording.
struct BackgroundProfile {
  Eigen::MatrixXd spectra;  ///< kNumMicrophones x bins

  int bins() const noexcept { return static_cast<int>(spectra.cols()); }
};

inline constexpr double kBackgroundSeconds = 1.0;

inline BackgroundProfile capture_background(const AudioClip& clip, const SpectrogramConfig& config) {
  if (clip.duration() < kBackgroundSeconds) {
    throw InputError("background clip must cover at least 1.0 s, got " + std::to_string(clip.duration()) + " s");
  }
  return {time_averaged_spectra(clip, config)};
}

/// Background-subtracted time-averaged spectra of the six microphones,
/// concatenated mic1..mic6.
inline FeatureVector extract_features(const AudioClip& clip, const BackgroundProfile& background,
                                      const SpectrogramConfig& config) {
  config.validate();
  if (background.spectra.rows() != kNumMicrophones || background.bins() != config.bins()) {
    throw DimensionError("background has " + std::to_string(background.bins()) + " bins, config expects " +
                         std::to_string(config.bins()));
  }
  const Eigen::MatrixXd avg = time_averaged_spectra(clip, config);
  const int bins = config.bins();
  FeatureVector out(config.feature_dim());
  for (int c = 0; c < kNumMicrophones; ++c) {
    out.segment(c * bins, bins) = (avg.row(c) - background.spectra.row(c)).transpose();
  }
  return out;
}

}  // namespace poe
