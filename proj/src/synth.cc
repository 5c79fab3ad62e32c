// Copyright 2026 The vaenmf Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "vaenmf/synth.h"

#include <algorithm>
#include <cmath>

namespace vaenmf {
namespace {

constexpr double kPi = 3.14159265358979323846;
constexpr double kFs = kPipelineRate;
constexpr int kBlock = 80;  // 5 ms control rate

struct Vowel {
  double f1, f2, f3;
};
constexpr Vowel kVowels[] = {
    {730, 1090, 2440}, {270, 2290, 3010}, {300, 870, 2240},
    {530, 1840, 2480}, {570, 840, 2410}};
constexpr Vowel kSchwa = {500, 1500, 2500};

double Uniform(Rng& rng, double lo, double hi) {
  return lo + (hi - lo) * NormalSampler::Uniform(rng);
}

// Magnitude of a cascade of two-pole resonators.
double Envelope(double f, const std::array<double, 4>& formants,
                const std::array<double, 4>& bandwidths) {
  double g = 1.0;
  for (size_t k = 0; k < formants.size(); ++k) {
    const double fk = formants[k], bk = bandwidths[k];
    g *= fk * fk / std::sqrt((fk * fk - f * f) * (fk * fk - f * f) + bk * bk * f * f);
  }
  return g;
}

// One-pole filters applied in place.
void Lowpass(std::vector<double>& x, double a) {
  double y = 0.0;
  for (double& v : x) v = y = a * y + (1.0 - a) * v;
}

void Highpass(std::vector<double>& x) {
  double prev = 0.0;
  for (double& v : x) {
    const double cur = v;
    v = cur - 0.95 * prev;
    prev = cur;
  }
}

std::vector<double> Gaussian(size_t n, Rng& rng) {
  NormalSampler normal;
  std::vector<double> x(n);
  for (double& v : x) v = normal(rng);
  return x;
}

std::vector<double> Pink(size_t n, Rng& rng) {
  // Paul Kellet's economy filter.
  std::vector<double> x = Gaussian(n, rng);
  double b0 = 0, b1 = 0, b2 = 0;
  for (double& v : x) {
    b0 = 0.99765 * b0 + v * 0.0990460;
    b1 = 0.96300 * b1 + v * 0.2965164;
    b2 = 0.57000 * b2 + v * 1.0526913;
    v = b0 + b1 + b2 + v * 0.1848;
  }
  return x;
}

std::vector<double> Brown(size_t n, Rng& rng) {
  std::vector<double> x = Gaussian(n, rng);
  double y = 0.0;
  for (double& v : x) v = y = 0.998 * y + 0.05 * v;
  return x;
}

void Normalize(std::vector<double>& x, double rms) {
  double acc = 0.0;
  for (double v : x) acc += v * v;
  const double cur = std::sqrt(acc / std::max<size_t>(1, x.size()));
  if (cur > 0.0)
    for (double& v : x) v *= rms / cur;
}

// Decaying noise bursts at random times.
void AddTransients(std::vector<double>& x, double rate_hz, double level, Rng& rng) {
  NormalSampler normal;
  const double seconds = x.size() / kFs;
  const int count = static_cast<int>(rate_hz * seconds);
  for (int i = 0; i < count; ++i) {
    const size_t start = static_cast<size_t>(Uniform(rng, 0.0, 1.0) * x.size());
    const double tau = Uniform(rng, 0.005, 0.04) * kFs;
    const double amp = level * Uniform(rng, 0.3, 1.0);
    for (size_t j = 0; start + j < x.size() && j < static_cast<size_t>(6 * tau); ++j)
      x[start + j] += amp * std::exp(-static_cast<double>(j) / tau) * normal(rng);
  }
}

void AddTone(std::vector<double>& x, double f0, int harmonics, double level,
             double drift, Rng& rng) {
  double phase = 0.0, f = f0;
  for (size_t i = 0; i < x.size(); ++i) {
    if (i % kBlock == 0) f = std::clamp(f * (1.0 + drift * NormalSampler()(rng)),
                                        0.7 * f0, 1.5 * f0);
    phase += 2.0 * kPi * f / kFs;
    double s = 0.0;
    for (int h = 1; h <= harmonics; ++h) s += std::sin(h * phase) / h;
    x[i] += level * s;
  }
}

}  // namespace

SpeakerProfile MakeSpeaker(const std::string& speaker_id, SpeakerGroup group,
                           Rng& rng) {
  NormalSampler normal;
  SpeakerProfile p;
  p.speaker_id = speaker_id;
  p.group = group;
  const bool male = NormalSampler::Uniform(rng) < 0.5;
  if (group == SpeakerGroup::kNeurotypical) {
    p.f0_hz = (male ? 115.0 : 205.0) * std::exp(0.1 * normal(rng));
    p.f0_range = Uniform(rng, 0.12, 0.22);
    p.formant_scale = (male ? 1.0 : 1.15) * std::exp(0.04 * normal(rng));
    p.centralization = Uniform(rng, 0.0, 0.15);
    p.tilt_db_per_octave = Uniform(rng, -4.0, -2.0);
    p.breathiness = Uniform(rng, 0.02, 0.06);
    p.jitter = Uniform(rng, 0.002, 0.006);
    p.shimmer = Uniform(rng, 0.02, 0.05);
    p.syllable_rate_hz = Uniform(rng, 4.0, 5.5);
  } else {
    p.f0_hz = (male ? 130.0 : 215.0) * std::exp(0.2 * normal(rng));
    p.f0_range = Uniform(rng, 0.03, 0.1);
    p.formant_scale = (male ? 1.0 : 1.15) * std::exp(0.1 * normal(rng));
    p.centralization = Uniform(rng, 0.35, 0.75);
    p.tilt_db_per_octave = Uniform(rng, -8.0, -1.0);
    p.breathiness = Uniform(rng, 0.15, 0.5);
    p.jitter = Uniform(rng, 0.01, 0.03);
    p.shimmer = Uniform(rng, 0.08, 0.2);
    p.syllable_rate_hz = Uniform(rng, 2.5, 4.5);
  }
  p.level = 0.1 * std::exp(0.2 * normal(rng));
  return p;
}

WaveformBuffer SynthesizeSpeech(const SpeakerProfile& sp, double seconds, Rng& rng) {
  if (!(seconds > 0.0)) throw ValidationError("synth: duration must be positive");
  NormalSampler normal;
  const size_t n = static_cast<size_t>(std::lround(seconds * kFs));
  std::vector<double> out(n, 0.0);

  size_t cursor = static_cast<size_t>(Uniform(rng, 0.05, 0.2) * kFs);
  double phase = 0.0;
  double f0 = sp.f0_hz * (1.0 + sp.f0_range * 0.5);
  while (cursor + static_cast<size_t>(0.2 * kFs) < n) {
    const int syllables = 1 + static_cast<int>(NormalSampler::Uniform(rng) * 3);
    for (int s = 0; s < syllables && cursor < n; ++s) {
      const size_t len = std::min(
          n - cursor,
          static_cast<size_t>(kFs / sp.syllable_rate_hz * Uniform(rng, 0.7, 1.3)));
      const Vowel& v = kVowels[rng() % 5];
      const double c = sp.centralization;
      std::array<double, 4> formants = {
          sp.formant_scale * ((1 - c) * v.f1 + c * kSchwa.f1) * (1 + 0.03 * normal(rng)),
          sp.formant_scale * ((1 - c) * v.f2 + c * kSchwa.f2) * (1 + 0.03 * normal(rng)),
          sp.formant_scale * ((1 - c) * v.f3 + c * kSchwa.f3) * (1 + 0.02 * normal(rng)),
          sp.formant_scale * 3600.0};
      const std::array<double, 4> bandwidths = {70.0, 100.0, 140.0, 220.0};
      const double f0_target =
          sp.f0_hz * std::exp(sp.f0_range * std::clamp(normal(rng), -2.0, 2.0));
      const bool fricative = NormalSampler::Uniform(rng) < 0.4;
      const size_t onset = fricative ? std::min(len / 3, static_cast<size_t>(0.05 * kFs)) : 0;

      std::vector<double> amps;
      std::vector<double> aspiration = Gaussian(len, rng);
      Highpass(aspiration);
      double voiced_rms = 0.0;
      std::vector<double> seg(len, 0.0);
      for (size_t i = onset; i < len; ++i) {
        const size_t k = i - onset;
        if (k % kBlock == 0) {
          const double glide = static_cast<double>(k) / (len - onset);
          f0 = (1.0 - 0.02 * glide) * (f0 + 0.15 * (f0_target - f0));
          const double f = f0 * (1.0 + sp.jitter * normal(rng));
          const double shimmer = 1.0 + sp.shimmer * normal(rng);
          const int harmonics = static_cast<int>(7600.0 / f);
          amps.assign(static_cast<size_t>(harmonics), 0.0);
          for (int h = 1; h <= harmonics; ++h)
            amps[static_cast<size_t>(h - 1)] =
                shimmer * Envelope(h * f, formants, bandwidths) *
                std::pow(h, sp.tilt_db_per_octave / 6.02);
          phase = std::fmod(phase, 2.0 * kPi);
          const double step = 2.0 * kPi * f / kFs;
          // Phasor recurrences for each harmonic over the block.
          const size_t end = std::min(len, i + kBlock);
          for (int h = 1; h <= harmonics; ++h) {
            Complex z = std::polar(1.0, h * phase), w = std::polar(1.0, h * step);
            const double a = amps[static_cast<size_t>(h - 1)];
            for (size_t j = i; j < end; ++j) {
              z *= w;
              seg[j] += a * z.imag();
            }
          }
          phase += step * static_cast<double>(end - i);
        }
      }
      for (size_t i = onset; i < len; ++i) voiced_rms += seg[i] * seg[i];
      voiced_rms = std::sqrt(voiced_rms / std::max<size_t>(1, len - onset));
      // Amplitude envelope, aspiration and fricative onset.
      for (size_t i = 0; i < len; ++i) {
        double env = 1.0;
        if (i < onset) {
          seg[i] = 0.6 * voiced_rms * aspiration[i];
          env = std::sin(kPi * i / std::max<size_t>(1, onset));
        } else {
          const double x = static_cast<double>(i - onset) / (len - onset);
          env = x < 0.2 ? std::sin(0.5 * kPi * x / 0.2)
                        : (x > 0.7 ? std::cos(0.5 * kPi * (x - 0.7) / 0.3) : 1.0);
          seg[i] += sp.breathiness * voiced_rms * aspiration[i];
        }
        out[cursor + i] += env * seg[i];
      }
      cursor += len;
    }
    cursor += static_cast<size_t>(
        (NormalSampler::Uniform(rng) < 0.2 ? Uniform(rng, 0.3, 0.6) : Uniform(rng, 0.04, 0.15)) * kFs);
  }

  double peak = 0.0;
  for (double v : out) peak = std::max(peak, std::abs(v));
  const double gain = peak > 0.0 ? sp.level * 3.0 / peak : 0.0;
  for (double& v : out) v = v * gain + 1e-5 * normal(rng);
  return {std::move(out), kPipelineRate};
}

WaveformBuffer WhiteNoise(size_t samples, Rng& rng) {
  return {Gaussian(samples, rng), kPipelineRate};
}

WaveformBuffer SynthesizeNoise(NoiseKind kind, double seconds, Rng& rng) {
  if (!(seconds > 0.0)) throw ValidationError("synth: duration must be positive");
  const size_t n = static_cast<size_t>(std::lround(seconds * kFs));
  std::vector<double> x(n, 0.0);
  switch (kind) {
    case NoiseKind::kCafe: {
      for (int k = 0; k < 6; ++k) {
        const auto group = SpeakerGroup::kNeurotypical;
        const SpeakerProfile talker = MakeSpeaker("babble", group, rng);
        std::vector<double> s = SynthesizeSpeech(talker, seconds, rng).samples;
        Normalize(s, 1.0);
        for (size_t i = 0; i < n; ++i) x[i] += s[i];
      }
      std::vector<double> bed = Pink(n, rng);
      Normalize(bed, 0.5);
      for (size_t i = 0; i < n; ++i) x[i] += bed[i];
      AddTransients(x, 1.5, 3.0, rng);
      break;
    }
    case NoiseKind::kCar: {
      x = Brown(n, rng);
      Lowpass(x, 0.9);
      Normalize(x, 1.0);
      AddTone(x, Uniform(rng, 25.0, 45.0), 8, 0.4, 0.002, rng);
      break;
    }
    case NoiseKind::kHome: {
      x = Pink(n, rng);
      Normalize(x, 0.3);
      AddTone(x, 50.0, 6, 0.2, 0.0, rng);
      AddTransients(x, 0.8, 4.0, rng);
      const SpeakerProfile tv = MakeSpeaker("tv", SpeakerGroup::kNeurotypical, rng);
      std::vector<double> s = SynthesizeSpeech(tv, seconds, rng).samples;
      Normalize(s, 0.5);
      for (size_t i = 0; i < n; ++i) x[i] += s[i];
      break;
    }
    case NoiseKind::kStreet: {
      std::vector<double> pink = Pink(n, rng), brown = Brown(n, rng);
      Normalize(pink, 0.6);
      Normalize(brown, 1.0);
      double mod = 1.0, phase = Uniform(rng, 0.0, 2.0 * kPi);
      const double rate = Uniform(rng, 0.08, 0.25);
      for (size_t i = 0; i < n; ++i) {
        mod = 1.0 + 0.7 * std::sin(phase + 2.0 * kPi * rate * i / kFs);
        x[i] = pink[i] + mod * brown[i];
      }
      AddTransients(x, 0.5, 2.0, rng);
      break;
    }
  }
  Normalize(x, 0.05);
  return {std::move(x), kPipelineRate};
}

ToyCorpus WriteToyCorpus(const ToyCorpusConfig& config,
                         const std::filesystem::path& dir) {
  if (config.speakers_a < 0 || config.speakers_b < 0 ||
      config.speakers_a + config.speakers_b == 0)
    throw ValidationError("toy corpus: need at least one speaker");
  namespace fs = std::filesystem;
  fs::create_directories(dir / "clean");
  ToyCorpus corpus;
  corpus.manifest.base_dir = dir;
  corpus.noises.base_dir = dir;

  auto add = [&](const SpeakerProfile& sp, const std::string& utt,
                 RecordingType type, double seconds) {
    Rng rng(DeriveSeed(config.seed, Fnv1a64(utt)));
    const WaveformBuffer wav = SynthesizeSpeech(sp, seconds, rng);
    const std::string rel = "clean/" + sp.speaker_id + "/" + utt + ".wav";
    fs::create_directories(dir / "clean" / sp.speaker_id);
    WriteWav(wav, dir / rel);
    corpus.manifest.records.push_back(
        {utt, sp.speaker_id, sp.group, type, config.language, rel, wav.duration_s()});
  };

  for (int g = 0; g < 2; ++g) {
    const int count = g == 0 ? config.speakers_a : config.speakers_b;
    const SpeakerGroup group = g == 0 ? SpeakerGroup::kNeurotypical : SpeakerGroup::kPathological;
    for (int i = 1; i <= count; ++i) {
      char id[64];
      std::snprintf(id, sizeof(id), "%s%c%02d", config.speaker_prefix.c_str(),
                    g == 0 ? 'a' : 'b', i);
      Rng rng(DeriveSeed(config.seed, Fnv1a64(id)));
      const SpeakerProfile sp = MakeSpeaker(id, group, rng);
      for (int s = 1; s <= config.sentences; ++s) {
        char utt[96];
        std::snprintf(utt, sizeof(utt), "%s_s%02d", id, s);
        add(sp, utt, RecordingType::kSentence, config.sentence_s);
      }
      if (config.read_text_s > 0.0)
        add(sp, std::string(id) + "_read", RecordingType::kReadText, config.read_text_s);
      if (config.monologue_s > 0.0)
        add(sp, std::string(id) + "_mono", RecordingType::kMonologue, config.monologue_s);
    }
  }

  if (config.noises_per_kind > 0) {
    fs::create_directories(dir / "noise");
    for (auto kind : {NoiseKind::kCafe, NoiseKind::kCar, NoiseKind::kHome,
                      NoiseKind::kStreet}) {
      for (int i = 1; i <= config.noises_per_kind; ++i) {
        const std::string id = std::string(ToString(kind)) + std::to_string(i);
        Rng rng(DeriveSeed(config.seed, Fnv1a64("noise/" + id)));
        const WaveformBuffer wav = SynthesizeNoise(kind, config.noise_s, rng);
        const std::string rel = "noise/" + id + ".wav";
        WriteWav(wav, dir / rel);
        corpus.noises.records.push_back({id, kind, rel});
      }
    }
  }

  corpus.manifest_path = dir / "manifest.tsv";
  corpus.noise_manifest_path = dir / "noise.tsv";
  SaveManifest(corpus.manifest, corpus.manifest_path);
  SaveNoiseManifest(corpus.noises, corpus.noise_manifest_path);
  return corpus;
}

}  // namespace vaenmf
