// Copyright 2026 The vaenmf Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)
//
// Experiment configuration and the command implementations behind the
// `vaenmf` tool.
//
// Config files are JSON. Relative paths are resolved against the directory
// of the config file. Example:
//   {
//     "seed": 7,
//     "output_dir": "runs/cv",
//     "manifest": "corpus/manifest.tsv",
//     "noise_manifest": "corpus/noise.tsv",
//     "split": {"kind": "cv-fold", "folds": 10},
//     "train": {"max_epochs": 50},
//     "mcem": {"n_em_iters": 100},
//     "model_init": "scratch"
//   }

#ifndef VAENMF_EXPERIMENT_H_
#define VAENMF_EXPERIMENT_H_

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "vaenmf/corpus.h"
#include "vaenmf/mcem.h"
#include "vaenmf/metrics.h"
#include "vaenmf/train.h"

namespace vaenmf {

struct ModelInit {
  enum class Kind { kScratch, kFinetune, kPersonalize };
  Kind kind = Kind::kScratch;
  std::filesystem::path checkpoint;  // empty for scratch

  // "scratch", "finetune:<ckpt>" or "personalize:<ckpt>".
  static ModelInit Parse(const std::string& text, const std::filesystem::path& base);
  // Mode name only; checkpoint paths stay out of model provenance.
  std::string ToString() const;
};

struct DatabaseEntry {
  std::string name;
  std::filesystem::path manifest;
};

struct ExperimentConfig {
  uint64_t seed = 0;
  std::filesystem::path output_dir;
  std::filesystem::path manifest;
  std::vector<DatabaseEntry> databases;  // cross-database protocol
  std::filesystem::path noise_manifest;
  std::filesystem::path mixtures;  // optional mixture list for `evaluate`
  StftConfig stft;
  TrainConfig train;
  McemConfig mcem;
  SplitKind split_kind = SplitKind::kCvFold;
  int folds = 10;
  int max_folds = 0;  // run only the first n folds; 0 runs all
  SplitFractions fractions;
  std::vector<std::string> speakers;  // personal protocol; empty: see group
  std::optional<SpeakerGroup> speaker_group;
  ModelInit model_init;
  std::string pesq_command;
  int jobs = 1;
  int max_test_utterances = 0;  // per condition; 0 keeps all

  // Checks values and that every referenced input file exists.
  void Validate() const;
};

struct ConfigOverrides {
  std::optional<uint64_t> seed;
  std::optional<std::filesystem::path> output_dir;
  std::optional<int> jobs;
};

// Parses and validates; throws ValidationError on any problem.
ExperimentConfig LoadExperimentConfig(const std::filesystem::path& path,
                                      const ConfigOverrides& overrides = {});

// Stderr logging. Verbose lines are printed only with --diagnostics.
void SetVerbose(bool verbose);
void Log(const std::string& line);
void LogVerbose(const std::string& line);

// Enhances one noisy waveform end to end (STFT, MCEM, Wiener, iSTFT).
struct EnhanceResult {
  WaveformBuffer enhanced;
  std::vector<double> loglik_trace;
  double acceptance_rate = 0.0;
};
EnhanceResult EnhanceWaveform(const WaveformBuffer& noisy, const Checkpoint& model,
                              const McemConfig& config);

// Mixes, enhances and scores the given clean utterances. Mixtures and MCEM
// seeds depend only on (seed, utterance id), so different models see the
// same inputs. Rows come back in input order.
std::vector<MetricRow> EvaluateUtterances(const Manifest& manifest,
                                          const NoiseManifest& noises,
                                          const std::vector<std::string>& utterance_ids,
                                          const Checkpoint& model,
                                          const ExperimentConfig& config,
                                          const std::string& condition);

// Same as above for explicit mixture specs.
std::vector<MetricRow> EvaluateMixtures(const Manifest& manifest,
                                        const NoiseManifest& noises,
                                        const std::vector<MixtureSpec>& mixtures,
                                        const Checkpoint& model,
                                        const ExperimentConfig& config,
                                        const std::string& condition);

// Trains on a plan's train subset (validation per the plan) starting from
// `init` when given. Model seed is derived from the config seed and `tag`.
Checkpoint TrainOnPlan(const Manifest& manifest, const SplitPlan& plan,
                       const ExperimentConfig& config, const Checkpoint* init,
                       const std::string& tag);

// Commands. Each returns after writing its outputs under config.output_dir.
void RunTrain(const ExperimentConfig& config);
void RunPersonalize(const ExperimentConfig& config);
void RunMix(const ExperimentConfig& config);
void RunEnhance(const ExperimentConfig& config, const std::filesystem::path& checkpoint,
                const std::filesystem::path& input, const std::filesystem::path& output,
                const std::optional<std::filesystem::path>& reference,
                bool diagnostics);
void RunEvaluate(const ExperimentConfig& config, const std::filesystem::path& checkpoint);
void RunExperiment(const ExperimentConfig& config);

}  // namespace vaenmf

#endif  // VAENMF_EXPERIMENT_H_
