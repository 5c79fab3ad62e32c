// Copyright 2026 The vaenmf Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)
//
// Dataset manifests, noisy-mixture synthesis and the split plans used for
// cross-database, cross-validation and per-speaker experiments.
//
// Manifest files are tab-separated text:
//   # vaenmf-manifest v1
//   utterance_id  speaker_id  group  recording_type  language  path  duration_s
//   <one record per line>
// Noise manifests:
//   # vaenmf-noise v1
//   noise_id  kind  path
// Mixture lists:
//   # vaenmf-mixtures v1
//   mixture_id  clean_utterance_id  noise_id  snr_db  offset_seed  noisy_path
// Relative audio paths are resolved against the directory of the file that
// lists them.

#ifndef VAENMF_CORPUS_H_
#define VAENMF_CORPUS_H_

#include <array>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "vaenmf/dsp.h"

namespace vaenmf {

enum class SpeakerGroup { kNeurotypical, kPathological };
enum class RecordingType { kSentence, kReadText, kMonologue };
enum class NoiseKind { kCafe, kCar, kHome, kStreet };

std::string_view ToString(SpeakerGroup g);
std::string_view ToString(RecordingType r);
std::string_view ToString(NoiseKind k);
SpeakerGroup ParseSpeakerGroup(std::string_view s);
RecordingType ParseRecordingType(std::string_view s);
NoiseKind ParseNoiseKind(std::string_view s);

struct UtteranceRecord {
  std::string utterance_id;
  std::string speaker_id;
  SpeakerGroup group = SpeakerGroup::kNeurotypical;
  RecordingType recording_type = RecordingType::kSentence;
  std::string language;
  std::string path;  // as written in the manifest
  double duration_s = 0.0;

  bool operator==(const UtteranceRecord&) const = default;
};

struct Manifest {
  std::vector<UtteranceRecord> records;
  std::filesystem::path base_dir;  // for resolving relative paths

  const UtteranceRecord& Find(std::string_view utterance_id) const;
  std::filesystem::path ResolvePath(const UtteranceRecord& r) const;
  // Sorted, unique speaker ids.
  std::vector<std::string> Speakers() const;
  std::optional<SpeakerGroup> GroupOf(std::string_view speaker_id) const;
  // Records of the given utterance ids, in the given order.
  std::vector<const UtteranceRecord*> Select(const std::vector<std::string>& ids) const;
  // Checks unique ids and field sanity; throws ValidationError.
  void Validate() const;
};

Manifest LoadManifest(const std::filesystem::path& path);
void SaveManifest(const Manifest& manifest, const std::filesystem::path& path);

// Reads an utterance and resamples it to 16 kHz if needed.
WaveformBuffer LoadUtterance(const Manifest& manifest, const UtteranceRecord& r);

struct NoiseRecord {
  std::string noise_id;
  NoiseKind kind = NoiseKind::kCafe;
  std::string path;

  bool operator==(const NoiseRecord&) const = default;
};

struct NoiseManifest {
  std::vector<NoiseRecord> records;
  std::filesystem::path base_dir;

  const NoiseRecord& Find(std::string_view noise_id) const;
  std::filesystem::path ResolvePath(const NoiseRecord& r) const;
};

NoiseManifest LoadNoiseManifest(const std::filesystem::path& path);
void SaveNoiseManifest(const NoiseManifest& manifest,
                       const std::filesystem::path& path);

inline constexpr std::array<double, 3> kMixtureSnrsDb = {-5.0, 0.0, 5.0};

struct MixtureSpec {
  std::string mixture_id;
  std::string clean_utterance_id;
  std::string noise_id;
  double snr_db = 0.0;
  uint64_t offset_seed = 0;
  std::string noisy_path;  // empty when the mixture is only held in memory

  bool operator==(const MixtureSpec&) const = default;
};

struct Mixture {
  WaveformBuffer noisy;
  WaveformBuffer scaled_noise;
  double noise_scale = 1.0;
  size_t noise_offset = 0;
};

// Mean squared sample value.
double SignalPower(const WaveformBuffer& x);

// Crops (tiling if shorter) a contiguous noise segment at a uniform random
// offset and scales it so 10 log10(P_clean / P_noise) == snr_db, with powers
// measured over the whole utterance.
Mixture SynthesizeMixture(const WaveformBuffer& clean, const WaveformBuffer& noise,
                          double snr_db, Rng& rng);

// Picks noise and SNR for an utterance from a seed derived from
// (global_seed, utterance_id), so every model sees the same test mixtures.
MixtureSpec PlanMixture(const UtteranceRecord& clean, const NoiseManifest& noises,
                        uint64_t global_seed);

Mixture RealizeMixture(const MixtureSpec& spec, const WaveformBuffer& clean,
                       const WaveformBuffer& noise);

std::vector<MixtureSpec> LoadMixtureList(const std::filesystem::path& path);
void SaveMixtureList(const std::vector<MixtureSpec>& mixtures,
                     const std::filesystem::path& path);

enum class SplitKind { kCrossDatabase, kCvFold, kPersonal };
std::string_view ToString(SplitKind k);
SplitKind ParseSplitKind(std::string_view s);

struct SplitPlan {
  SplitKind kind = SplitKind::kCvFold;
  std::string name;
  int fold = -1;
  std::string speaker_id;  // personal plans only
  std::vector<std::string> train;
  std::vector<std::string> validation;
  std::vector<std::string> test;
  // Personal plans carry no validation utterances: the last fraction of each
  // adaptation utterance's frames is held out instead.
  double validation_frame_fraction = 0.0;
};

struct SplitFractions {
  double train = 0.8;
  double validation = 0.1;
  double test = 0.1;
};

// Speaker-independent k-fold plans, stratified by group. Fold i tests the
// i-th of k speaker partitions; validation speakers are drawn from the rest.
std::vector<SplitPlan> MakeCvFolds(const Manifest& manifest, int k,
                                   const SplitFractions& fractions,
                                   uint64_t seed);

// One speaker-disjoint train/validation/test split of a whole database.
SplitPlan MakeDatabaseSplit(const Manifest& manifest,
                            const SplitFractions& fractions, uint64_t seed);

// Plan A adapts on the monologue and tests on sentences + read text; plan B
// is the reverse. Adaptation frames are split 90/10 into train/validation.
std::array<SplitPlan, 2> MakePersonalSplits(const Manifest& manifest,
                                            std::string_view speaker_id);

// Frames whose total power is below this are dropped from training streams.
inline constexpr double kSilenceFloor = 1e-10;

PowerSpectrogram DropSilentFrames(const PowerSpectrogram& frames,
                                  double floor = kSilenceFloor);

// Concatenated power frames of the listed utterances, in list order, with
// silent frames dropped.
PowerSpectrogram FramesDataset(const Manifest& manifest,
                               const std::vector<std::string>& utterance_ids,
                               const StftConfig& config);

struct FrameStreams {
  PowerSpectrogram train;
  PowerSpectrogram validation;
};

FrameStreams BuildFrameStreams(const Manifest& manifest, const SplitPlan& plan,
                               const StftConfig& config);

}  // namespace vaenmf

#endif  // VAENMF_CORPUS_H_
