// Copyright 2026 The vaenmf Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)
//
// Audio I/O and the STFT front end shared by training and inference.

#ifndef VAENMF_DSP_H_
#define VAENMF_DSP_H_

#include <filesystem>
#include <string>
#include <vector>

#include "vaenmf/common.h"

namespace vaenmf {

inline constexpr int kPipelineRate = 16000;

struct WaveformBuffer {
  std::vector<double> samples;  // linear amplitude, nominally in [-1, 1]
  int sample_rate_hz = kPipelineRate;

  size_t size() const { return samples.size(); }
  double duration_s() const {
    return static_cast<double>(samples.size()) / sample_rate_hz;
  }
};

// Throws ValidationError unless the buffer is at the pipeline rate.
void RequirePipelineRate(const WaveformBuffer& buffer, std::string_view what);

// Reads a mono RIFF/WAVE file (PCM 16-bit or IEEE float 32-bit).
WaveformBuffer ReadWav(const std::filesystem::path& path);

// Writes 16-bit PCM. Samples outside [-1, 1] are clipped; the number of
// clipped samples is returned.
size_t WriteWav(const WaveformBuffer& buffer, const std::filesystem::path& path);

// Windowed-sinc polyphase resampler (Kaiser beta 8). The kernel spans 64
// periods of the lower of the two rates. Returns the input unchanged when it
// is already at 16 kHz.
WaveformBuffer ResampleTo16k(const WaveformBuffer& buffer);
WaveformBuffer Resample(const WaveformBuffer& buffer, int target_rate_hz);

struct StftConfig {
  int window_len = 1024;  // 64 ms at 16 kHz
  int hop = 256;          // 16 ms
  std::string window = "hann";

  int bins() const { return window_len / 2 + 1; }
  // Zeros added on each side before framing. With this much padding every
  // input sample is covered by window_len / hop frames.
  int pad() const { return window_len - hop; }
  // Frame count for a signal of n samples: ceil(n / hop) + window_len/hop - 1.
  Eigen::Index NumFrames(size_t n) const;
  void Validate() const;

  bool operator==(const StftConfig&) const = default;
};

struct ComplexSpectrogram {
  ComplexMatrix data;  // bins x frames
  StftConfig config;
  size_t num_samples = 0;  // length of the analysed signal

  Eigen::Index bins() const { return data.rows(); }
  Eigen::Index frames() const { return data.cols(); }
};

// Non-negative power, bins x frames.
using PowerSpectrogram = Matrix;

// Periodic Hann window of length n.
Vector HannWindow(int n);

ComplexSpectrogram Stft(const WaveformBuffer& buffer,
                        const StftConfig& config = {});

// Weighted overlap-add with the Hann synthesis window; the output is divided
// by the summed squared window, so analysis followed by synthesis is exact.
WaveformBuffer Istft(const ComplexSpectrogram& spec);

PowerSpectrogram Power(const ComplexSpectrogram& spec);

}  // namespace vaenmf

#endif  // VAENMF_DSP_H_
