// Copyright 2026 The vaenmf Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include <cmath>
#include <numeric>

#include "vaenmf/dsp.h"

namespace vaenmf {
namespace {

constexpr double kPi = 3.14159265358979323846;
constexpr double kKaiserBeta = 8.0;
// Half-width of the kernel, in periods of the lower rate.
constexpr int kHalfTaps = 32;
// Cutoff as a fraction of the lower Nyquist frequency.
constexpr double kCutoff = 0.97;

double BesselI0(double x) {
  double sum = 1.0, term = 1.0;
  const double q = 0.25 * x * x;
  for (int k = 1; k < 64; ++k) {
    term *= q / (static_cast<double>(k) * k);
    sum += term;
    if (term < 1e-17 * sum) break;
  }
  return sum;
}

double Sinc(double x) {
  if (std::abs(x) < 1e-12) return 1.0;
  return std::sin(kPi * x) / (kPi * x);
}

}  // namespace

WaveformBuffer ResampleTo16k(const WaveformBuffer& buffer) {
  return Resample(buffer, kPipelineRate);
}

WaveformBuffer Resample(const WaveformBuffer& buffer, int target_rate_hz) {
  if (buffer.sample_rate_hz <= 0 || target_rate_hz <= 0)
    throw ValidationError("resample: sample rates must be positive");
  if (buffer.sample_rate_hz == target_rate_hz) return buffer;

  const int64_t in_rate = buffer.sample_rate_hz;
  const int64_t out_rate = target_rate_hz;
  const int64_t g = std::gcd(in_rate, out_rate);
  const int64_t up = out_rate / g;    // output samples per period
  const int64_t down = in_rate / g;   // input samples per period

  // Kernel in units of input samples.
  const double ratio = static_cast<double>(std::min(in_rate, out_rate)) /
                       static_cast<double>(in_rate);  // <= 1
  const double fc = 0.5 * kCutoff * ratio;             // cycles / input sample
  const double half_width = kHalfTaps / ratio;         // input samples
  const int taps = 2 * static_cast<int>(std::ceil(half_width)) + 1;
  const double i0_beta = BesselI0(kKaiserBeta);

  // One normalized tap set per output phase; each phase sums to 1 so a DC
  // input maps to the same DC output.
  std::vector<std::vector<double>> phases(static_cast<size_t>(up));
  const int left = static_cast<int>(std::ceil(half_width));
  for (int64_t p = 0; p < up; ++p) {
    const double frac = static_cast<double>(p * down % up) / up;
    auto& h = phases[static_cast<size_t>(p)];
    h.resize(static_cast<size_t>(taps));
    double sum = 0.0;
    for (int k = 0; k < taps; ++k) {
      // Tap k multiplies input sample (base - left + k); distance from the
      // output instant is (left - k) + frac.
      const double tau = frac + left - k;
      double w = 0.0;
      if (std::abs(tau) < half_width) {
        const double r = tau / half_width;
        w = BesselI0(kKaiserBeta * std::sqrt(1.0 - r * r)) / i0_beta;
      }
      h[static_cast<size_t>(k)] = 2.0 * fc * Sinc(2.0 * fc * tau) * w;
      sum += h[static_cast<size_t>(k)];
    }
    for (double& v : h) v /= sum;
  }

  const int64_t n_in = static_cast<int64_t>(buffer.samples.size());
  const int64_t n_out = (n_in * up + down - 1) / down;
  WaveformBuffer out;
  out.sample_rate_hz = target_rate_hz;
  out.samples.resize(static_cast<size_t>(n_out));
  for (int64_t n = 0; n < n_out; ++n) {
    const int64_t base = n * down / up;
    const auto& h = phases[static_cast<size_t>(n % up)];
    double acc = 0.0;
    for (int k = 0; k < taps; ++k) {
      const int64_t idx = base - left + k;
      if (idx < 0 || idx >= n_in) continue;
      acc += h[static_cast<size_t>(k)] * buffer.samples[static_cast<size_t>(idx)];
    }
    out.samples[static_cast<size_t>(n)] = acc;
  }
  return out;
}

}  // namespace vaenmf
