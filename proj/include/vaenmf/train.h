// Copyright 2026 The vaenmf Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)
//
// ELBO training of the VAE prior, checkpoint-initialized fine-tuning, and the
// versioned checkpoint file format.

#ifndef VAENMF_TRAIN_H_
#define VAENMF_TRAIN_H_

#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "vaenmf/dsp.h"
#include "vaenmf/vae.h"

namespace vaenmf {

struct TrainConfig {
  int batch_size = 128;
  double learning_rate = 1e-4;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_epsilon = 1e-8;
  int lr_patience = 10;        // epochs without improvement before halving
  double lr_factor = 0.5;
  int early_stop_patience = 20;
  int max_epochs = 500;
  // An epoch "improves" when val < best * (1 - plateau_rel_tol) (for
  // positive best; the tolerance is applied to |best| in general).
  double plateau_rel_tol = 1e-6;
  uint64_t seed = 0;
  VaeShape shape;  // used only for random initialization

  void Validate() const;
};

struct EpochRecord {
  int epoch = 0;  // 1-based
  double train_loss = 0.0;       // mean negative ELBO per frame
  double validation_loss = 0.0;  // mean negative ELBO per frame
  double learning_rate = 0.0;    // rate used during this epoch
  bool improved = false;
  bool lr_halved = false;        // halving takes effect from the next epoch
};

struct TrainHistory {
  std::vector<EpochRecord> epochs;
  int best_epoch = 0;  // 0 when no epoch ran
  std::string stop_reason;  // "max_epochs" | "early_stop" | "diverged" | "none"
};

// Reduce-on-plateau learning-rate schedule combined with early stopping.
class PlateauScheduler {
 public:
  struct Event {
    bool improved = false;
    bool halve_lr = false;
    bool stop = false;
  };

  explicit PlateauScheduler(const TrainConfig& config);

  Event Observe(double validation_loss);
  double best() const { return best_; }

 private:
  int lr_patience_;
  int stop_patience_;
  double rel_tol_;
  double best_;
  int since_improvement_ = 0;
  int since_lr_change_ = 0;
};

// Adam with bias correction over all VaeParams blocks.
class AdamOptimizer {
 public:
  AdamOptimizer(const VaeShape& shape, const TrainConfig& config);

  void Step(VaeParams& params, const VaeParams& gradient, double learning_rate);

 private:
  double beta1_, beta2_, epsilon_;
  long step_ = 0;
  VaeParams m_, v_;
};

struct Checkpoint {
  VaeParams params;
  TrainConfig train_config;
  StftConfig stft;
  TrainHistory history;
  std::string provenance = "scratch";
};

class TrainingDiverged : public Error {
 public:
  TrainingDiverged(const std::string& what, TrainHistory history)
      : Error(what), history_(std::move(history)) {}
  const TrainHistory& history() const { return history_; }

 private:
  TrainHistory history_;
};

using EpochCallback = std::function<void(const EpochRecord&)>;

// Minibatch ELBO training. Frames are columns of power spectra. With `init`
// the weights start from that checkpoint (fine-tuning and personalization);
// otherwise they are Glorot-initialized from config.seed. Returns the
// parameters from the epoch with the lowest validation loss.
Checkpoint Train(const PowerSpectrogram& train_frames,
                 const PowerSpectrogram& validation_frames,
                 const TrainConfig& config, const StftConfig& stft,
                 const Checkpoint* init, std::string provenance,
                 const EpochCallback& on_epoch = {});

// Mean negative ELBO per frame with one fixed-seed sample per frame.
double ValidationLoss(const VaeParams& params, const PowerSpectrogram& frames,
                      uint64_t seed);

inline constexpr char kCheckpointMagic[8] = {'V', 'A', 'E', 'N',
                                             'M', 'F', 'C', 'K'};
inline constexpr uint32_t kCheckpointVersion = 1;

void SaveCheckpoint(const Checkpoint& checkpoint,
                    const std::filesystem::path& path);
Checkpoint LoadCheckpoint(const std::filesystem::path& path);

// Writes the epoch history as JSON.
void SaveHistory(const TrainHistory& history, const std::filesystem::path& path);

// Content id of the weights (16 hex digits), used in provenance tags.
std::string CheckpointId(const Checkpoint& checkpoint);

}  // namespace vaenmf

#endif  // VAENMF_TRAIN_H_
