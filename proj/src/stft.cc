// Copyright 2026 The vaenmf Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include <cmath>

#include <unsupported/Eigen/FFT>

#include "vaenmf/dsp.h"

namespace vaenmf {

Eigen::Index StftConfig::NumFrames(size_t n) const {
  if (n == 0) return 0;
  const auto h = static_cast<size_t>(hop);
  return static_cast<Eigen::Index>((n + h - 1) / h + window_len / hop - 1);
}

void StftConfig::Validate() const {
  if (window_len <= 0 || hop <= 0)
    throw ValidationError("stft: window and hop must be positive");
  if (window_len % hop != 0)
    throw ValidationError("stft: hop must divide the window length");
  if (window_len % 2 != 0)
    throw ValidationError("stft: window length must be even");
  if (window != "hann")
    throw ValidationError("stft: unsupported window '" + window + "'");
}

Vector HannWindow(int n) {
  Vector w(n);
  for (int i = 0; i < n; ++i)
    w(i) = 0.5 - 0.5 * std::cos(2.0 * 3.14159265358979323846 * i / n);
  return w;
}

ComplexSpectrogram Stft(const WaveformBuffer& buffer, const StftConfig& config) {
  config.Validate();
  RequirePipelineRate(buffer, "stft");
  const int n_win = config.window_len;
  const size_t n = buffer.samples.size();
  const Eigen::Index frames = config.NumFrames(n);

  ComplexSpectrogram spec;
  spec.config = config;
  spec.num_samples = n;
  spec.data = ComplexMatrix::Zero(config.bins(), frames);
  if (frames == 0) return spec;

  const Vector window = HannWindow(n_win);
  Eigen::FFT<double> fft;
  fft.SetFlag(Eigen::FFT<double>::HalfSpectrum);
  std::vector<double> frame(static_cast<size_t>(n_win));
  std::vector<Complex> bins;
  const int64_t pad = config.pad();
  for (Eigen::Index t = 0; t < frames; ++t) {
    const int64_t start = t * config.hop - pad;
    for (int i = 0; i < n_win; ++i) {
      const int64_t idx = start + i;
      const double x = (idx >= 0 && idx < static_cast<int64_t>(n))
                           ? buffer.samples[static_cast<size_t>(idx)]
                           : 0.0;
      frame[static_cast<size_t>(i)] = window(i) * x;
    }
    fft.fwd(bins, frame);
    for (Eigen::Index f = 0; f < spec.data.rows(); ++f)
      spec.data(f, t) = bins[static_cast<size_t>(f)];
  }
  return spec;
}

WaveformBuffer Istft(const ComplexSpectrogram& spec) {
  const StftConfig& config = spec.config;
  config.Validate();
  if (spec.bins() != config.bins())
    throw Error("istft: spectrogram has " + std::to_string(spec.bins()) +
                " bins, config expects " + std::to_string(config.bins()));
  if (spec.frames() != config.NumFrames(spec.num_samples))
    throw Error("istft: frame count does not match the recorded signal length");

  WaveformBuffer out;
  out.sample_rate_hz = kPipelineRate;
  out.samples.assign(spec.num_samples, 0.0);
  if (spec.frames() == 0) return out;

  const int n_win = config.window_len;
  const int64_t pad = config.pad();
  const int64_t padded_len = (spec.frames() - 1) * config.hop + n_win;
  std::vector<double> acc(static_cast<size_t>(padded_len), 0.0);
  std::vector<double> norm(static_cast<size_t>(padded_len), 0.0);

  const Vector window = HannWindow(n_win);
  Eigen::FFT<double> fft;
  fft.SetFlag(Eigen::FFT<double>::HalfSpectrum);
  std::vector<Complex> bins(static_cast<size_t>(config.bins()));
  std::vector<double> frame;
  for (Eigen::Index t = 0; t < spec.frames(); ++t) {
    for (Eigen::Index f = 0; f < spec.bins(); ++f)
      bins[static_cast<size_t>(f)] = spec.data(f, t);
    fft.inv(frame, bins, n_win);
    const int64_t start = t * config.hop;
    for (int i = 0; i < n_win; ++i) {
      acc[static_cast<size_t>(start + i)] += window(i) * frame[static_cast<size_t>(i)];
      norm[static_cast<size_t>(start + i)] += window(i) * window(i);
    }
  }
  for (size_t i = 0; i < out.samples.size(); ++i) {
    const size_t j = i + static_cast<size_t>(pad);
    out.samples[i] = norm[j] > 1e-12 ? acc[j] / norm[j] : 0.0;
  }
  return out;
}

PowerSpectrogram Power(const ComplexSpectrogram& spec) {
  return spec.data.cwiseAbs2();
}

}  // namespace vaenmf
