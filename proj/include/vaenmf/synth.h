// Copyright 2026 The vaenmf Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)
//
// Synthetic speech and noise for tests, fixtures and the toy corpus.
// Speech is a source-filter model: a jittered harmonic source plus
// aspiration noise, shaped by per-syllable vowel formants and a speaker tilt.

#ifndef VAENMF_SYNTH_H_
#define VAENMF_SYNTH_H_

#include <array>
#include <filesystem>
#include <string>

#include "vaenmf/corpus.h"

namespace vaenmf {

struct SpeakerProfile {
  std::string speaker_id;
  SpeakerGroup group = SpeakerGroup::kNeurotypical;
  double f0_hz = 120.0;
  double f0_range = 0.15;       // relative excursion of the pitch contour
  double formant_scale = 1.0;   // vocal tract length factor
  double centralization = 0.0;  // 0: full vowel space, 1: every vowel is schwa
  double tilt_db_per_octave = -9.0;
  double breathiness = 0.05;    // aspiration to voicing amplitude ratio
  double jitter = 0.005;        // relative per-period pitch perturbation
  double shimmer = 0.03;        // relative per-period amplitude perturbation
  double syllable_rate_hz = 4.5;
  double level = 0.1;           // peak-ish amplitude
};

// Draws a speaker; population B (pathological) gets reduced vowel space,
// more aspiration, jitter and shimmer, flatter pitch, and larger spread
// between speakers.
SpeakerProfile MakeSpeaker(const std::string& speaker_id, SpeakerGroup group,
                           Rng& rng);

WaveformBuffer SynthesizeSpeech(const SpeakerProfile& speaker, double seconds,
                                Rng& rng);

WaveformBuffer SynthesizeNoise(NoiseKind kind, double seconds, Rng& rng);

// White Gaussian noise with unit variance.
WaveformBuffer WhiteNoise(size_t samples, Rng& rng);

struct ToyCorpusConfig {
  int speakers_a = 3;  // neurotypical
  int speakers_b = 0;  // pathological
  int sentences = 10;
  double sentence_s = 2.0;
  double read_text_s = 8.0;
  double monologue_s = 12.0;
  int noises_per_kind = 1;
  double noise_s = 20.0;
  std::string language = "synthetic";
  std::string speaker_prefix = "spk";
  uint64_t seed = 1;
};

struct ToyCorpus {
  std::filesystem::path manifest_path;
  std::filesystem::path noise_manifest_path;
  Manifest manifest;
  NoiseManifest noises;
};

// Writes wav files plus manifest.tsv and noise.tsv under dir. Every
// utterance is a deterministic function of (seed, utterance id).
ToyCorpus WriteToyCorpus(const ToyCorpusConfig& config,
                         const std::filesystem::path& dir);

}  // namespace vaenmf

#endif  // VAENMF_SYNTH_H_
