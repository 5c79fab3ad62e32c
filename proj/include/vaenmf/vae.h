// Copyright 2026 The vaenmf Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)
//
// Clean-speech prior: a one-hidden-layer Gaussian VAE over power spectra.
// The encoder maps a power frame x_t to q(z_t | x_t) = N(mean, diag(exp(logvar)));
// the decoder maps z_t to a strictly positive variance vector, and the
// likelihood of the clean STFT frame is a zero-mean circular complex Gaussian
// with that variance.

#ifndef VAENMF_VAE_H_
#define VAENMF_VAE_H_

#include <array>
#include <string_view>

#include "vaenmf/common.h"
#include "vaenmf/dsp.h"

namespace vaenmf {

struct VaeShape {
  int input_dim = 513;
  int latent_dim = 16;
  int hidden_dim = 128;

  bool operator==(const VaeShape&) const = default;
};

// y = weight * x + bias, weight is (out x in).
struct DenseLayer {
  Matrix weight;
  Vector bias;

  Matrix Apply(const Matrix& x) const {
    return (weight * x).colwise() + bias;
  }
};

struct VaeParams {
  DenseLayer encoder_hidden;      // F -> hidden, tanh
  DenseLayer encoder_mean;        // hidden -> D
  DenseLayer encoder_logvar;      // hidden -> D
  DenseLayer decoder_hidden;      // D -> hidden, tanh
  DenseLayer decoder_logvar_out;  // hidden -> F, exponentiated

  static constexpr std::array<std::string_view, 5> kLayerNames = {
      "encoder_hidden", "encoder_mean", "encoder_logvar", "decoder_hidden",
      "decoder_logvar_out"};

  VaeShape shape() const;

  static VaeParams Zeros(const VaeShape& shape);
  // Glorot-uniform weights, zero biases.
  static VaeParams GlorotUniform(const VaeShape& shape, Rng& rng);

  std::array<DenseLayer*, 5> layers() {
    return {&encoder_hidden, &encoder_mean, &encoder_logvar, &decoder_hidden,
            &decoder_logvar_out};
  }
  std::array<const DenseLayer*, 5> layers() const {
    return {&encoder_hidden, &encoder_mean, &encoder_logvar, &decoder_hidden,
            &decoder_logvar_out};
  }

  bool AllFinite() const;
};

// Posterior parameters, one column per frame (D x T).
struct LatentBatch {
  Matrix mean;
  Matrix logvar;
};

LatentBatch Encode(const VaeParams& params, const PowerSpectrogram& frames);

// z = mean + exp(logvar / 2) * eps, eps ~ N(0, I).
Matrix SampleLatent(const LatentBatch& batch, Rng& rng);

// Speech variance exp(decoder(z)), F x T, strictly positive.
PowerSpectrogram Decode(const VaeParams& params, const Matrix& z);

struct ElboTerms {
  bool reconstruction = true;
  bool kl = true;
};

struct ElboResult {
  double loss = 0.0;            // reconstruction + kl (selected terms only)
  double reconstruction = 0.0;  // sum_t sum_f x/sigma2 + ln sigma2
  double kl = 0.0;              // sum_t KL(q(z_t|x_t) || N(0, I))
  VaeParams gradient;           // d loss / d params
};

// Negative ELBO (up to constants) summed over frames, with one
// reparameterized sample per frame drawn from `noise` (D x T standard normal)
// and gradients by backpropagation. Throws Error naming the first frame whose
// loss is non-finite.
ElboResult ElboLoss(const VaeParams& params, const PowerSpectrogram& frames,
                    const Matrix& noise, ElboTerms terms = {});
ElboResult ElboLoss(const VaeParams& params, const PowerSpectrogram& frames,
                    Rng& rng, ElboTerms terms = {});

// Value only, no gradient.
double ElboValue(const VaeParams& params, const PowerSpectrogram& frames,
                 const Matrix& noise, ElboTerms terms = {});

// Closed-form KL(N(mean, exp(logvar)) || N(0, 1)) summed over all entries.
double GaussianKl(const Matrix& mean, const Matrix& logvar);

}  // namespace vaenmf

#endif  // VAENMF_VAE_H_
