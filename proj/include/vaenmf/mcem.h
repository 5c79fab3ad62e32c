// Copyright 2026 The vaenmf Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)
//
// Per-utterance inference for the mixture model
//   y_ft | z_t ~ CN(0, g_t * sigma2_s,ft(z_t) + (W H)_ft)
// by Monte Carlo EM, followed by Wiener reconstruction of the clean speech.

#ifndef VAENMF_MCEM_H_
#define VAENMF_MCEM_H_

#include <functional>
#include <vector>

#include "vaenmf/dsp.h"
#include "vaenmf/nmf.h"
#include "vaenmf/vae.h"

namespace vaenmf {

struct McemConfig {
  int n_em_iters = 200;
  int mh_iters_per_estep = 40;
  int burn_in = 30;
  int n_samples = 10;  // retained chain states per E-step (the last ones)
  double proposal_std = 0.05;
  int nmf_rank = 8;
  uint64_t seed = 0;

  void Validate() const;
};

// Floor applied to mixture variances and gains before division.
inline constexpr double kVarianceFloor = 1e-12;

struct InferenceState {
  Vector gain;          // g_t, length T
  NmfParams nmf;
  Matrix z_chain;       // D x T, current Metropolis-Hastings state
  Matrix chain_speech;  // decoded speech variance of z_chain, F x T
};

struct EStepResult {
  std::vector<Matrix> samples;         // retained z, each D x T
  std::vector<Matrix> speech_variance; // decoded samples, each F x T
  double acceptance_rate = 0.0;
};

struct EnhancementOutput {
  ComplexSpectrogram enhanced;
  Matrix wiener_gain;  // F x T, in [0, 1]
  InferenceState final_state;
  std::vector<double> loglik_trace;  // one value per EM iteration
  double acceptance_rate = 0.0;      // over all E-steps
};

// Mixture variance V = g_t * speech + W H, floored at kVarianceFloor.
Matrix MixtureVariance(const Vector& gain, const Matrix& speech_variance,
                       const Matrix& noise_variance);

// sum_{f,t} [-ln(pi) - ln V_ft - |y_ft|^2 / V_ft] with V from the decoded z;
// with include_prior, adds the standard normal log density of z.
double MixtureLogLik(const PowerSpectrogram& y_pow, const Matrix& z,
                     const InferenceState& state, const VaeParams& vae,
                     bool include_prior = false);
double MixtureLogLik(const ComplexSpectrogram& y, const Matrix& z,
                     const InferenceState& state, const VaeParams& vae,
                     bool include_prior = false);

// Warm start: z from the encoder mean of |y|^2, unit gain, random NMF.
InferenceState InitState(const ComplexSpectrogram& y, const VaeParams& vae,
                         const McemConfig& config);

// Advances every frame's random-walk chain config.mh_iters_per_estep steps
// (target p(y_t | z_t) p(z_t)) and returns the last n_samples states. Each
// frame draws from its own stream seeded by (config.seed, iteration, frame).
EStepResult EStep(InferenceState& state, const PowerSpectrogram& y_pow,
                  const VaeParams& vae, const McemConfig& config,
                  uint64_t iteration);

// Updates H, then W, then the gain from one set of sample statistics:
//   g_t <- g_t [ sum_f |y|^2 avg(s V^-2) / sum_f avg(s V^-1) ]^(1/2)
InferenceState MStep(const InferenceState& state, const PowerSpectrogram& y_pow,
                     const std::vector<Matrix>& speech_variance);
InferenceState MStep(const InferenceState& state, const ComplexSpectrogram& y,
                     const std::vector<Matrix>& samples, const VaeParams& vae);

// Monte Carlo average of g s / (g s + W H) over the speech variance samples.
Matrix WienerGain(const Vector& gain, const std::vector<Matrix>& speech_variance,
                  const Matrix& noise_variance);

using IterationCallback = std::function<void(int iteration, double loglik)>;

// Alternates E and M steps config.n_em_iters times, draws a final sample set
// under the converged parameters, and applies the averaged Wiener gain.
EnhancementOutput RunMcem(const ComplexSpectrogram& y, const VaeParams& vae,
                          const McemConfig& config,
                          const IterationCallback& on_iteration = {});

}  // namespace vaenmf

#endif  // VAENMF_MCEM_H_
