// Copyright 2026 The vaenmf Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "vaenmf/vae.h"

#include <cmath>

namespace vaenmf {
namespace {

DenseLayer ZeroLayer(int out, int in) {
  return {Matrix::Zero(out, in), Vector::Zero(out)};
}

DenseLayer GlorotLayer(int out, int in, Rng& rng) {
  const double limit = std::sqrt(6.0 / (in + out));
  DenseLayer layer = ZeroLayer(out, in);
  // Column-major fill order is part of the reproducibility contract.
  for (Eigen::Index j = 0; j < layer.weight.cols(); ++j)
    for (Eigen::Index i = 0; i < layer.weight.rows(); ++i)
      layer.weight(i, j) = limit * (2.0 * NormalSampler::Uniform(rng) - 1.0);
  return layer;
}

void CheckInput(const VaeParams& params, const PowerSpectrogram& frames) {
  if (frames.rows() != params.encoder_hidden.weight.cols())
    throw Error("vae: input has " + std::to_string(frames.rows()) +
                " rows, model expects " +
                std::to_string(params.encoder_hidden.weight.cols()));
}

void CheckLatent(const VaeParams& params, const Matrix& z) {
  if (z.rows() != params.decoder_hidden.weight.cols())
    throw Error("vae: latent has " + std::to_string(z.rows()) +
                " rows, model expects " +
                std::to_string(params.decoder_hidden.weight.cols()));
}

// Forward activations kept for backpropagation.
struct Forward {
  Matrix hidden;     // tanh(encoder_hidden(x))
  Matrix mean;
  Matrix logvar;
  Matrix z;
  Matrix dec_hidden; // tanh(decoder_hidden(z))
  Matrix out;        // log speech variance
};

Forward RunForward(const VaeParams& p, const PowerSpectrogram& x,
                   const Matrix& noise) {
  Forward f;
  f.hidden = p.encoder_hidden.Apply(x).array().tanh();
  f.mean = p.encoder_mean.Apply(f.hidden);
  f.logvar = p.encoder_logvar.Apply(f.hidden);
  f.z = f.mean.array() + (0.5 * f.logvar.array()).exp() * noise.array();
  f.dec_hidden = p.decoder_hidden.Apply(f.z).array().tanh();
  f.out = p.decoder_logvar_out.Apply(f.dec_hidden);
  return f;
}

void AccumulateLayer(DenseLayer& grad, const Matrix& delta, const Matrix& input) {
  grad.weight.noalias() += delta * input.transpose();
  grad.bias += delta.rowwise().sum();
}

}  // namespace

VaeShape VaeParams::shape() const {
  return {static_cast<int>(encoder_hidden.weight.cols()),
          static_cast<int>(encoder_mean.weight.rows()),
          static_cast<int>(encoder_hidden.weight.rows())};
}

VaeParams VaeParams::Zeros(const VaeShape& s) {
  VaeParams p;
  p.encoder_hidden = ZeroLayer(s.hidden_dim, s.input_dim);
  p.encoder_mean = ZeroLayer(s.latent_dim, s.hidden_dim);
  p.encoder_logvar = ZeroLayer(s.latent_dim, s.hidden_dim);
  p.decoder_hidden = ZeroLayer(s.hidden_dim, s.latent_dim);
  p.decoder_logvar_out = ZeroLayer(s.input_dim, s.hidden_dim);
  return p;
}

VaeParams VaeParams::GlorotUniform(const VaeShape& s, Rng& rng) {
  if (s.input_dim <= 0 || s.latent_dim <= 0 || s.hidden_dim <= 0)
    throw ValidationError("vae: dimensions must be positive");
  VaeParams p;
  p.encoder_hidden = GlorotLayer(s.hidden_dim, s.input_dim, rng);
  p.encoder_mean = GlorotLayer(s.latent_dim, s.hidden_dim, rng);
  p.encoder_logvar = GlorotLayer(s.latent_dim, s.hidden_dim, rng);
  p.decoder_hidden = GlorotLayer(s.hidden_dim, s.latent_dim, rng);
  p.decoder_logvar_out = GlorotLayer(s.input_dim, s.hidden_dim, rng);
  return p;
}

bool VaeParams::AllFinite() const {
  for (const DenseLayer* l : layers())
    if (!l->weight.allFinite() || !l->bias.allFinite()) return false;
  return true;
}

LatentBatch Encode(const VaeParams& params, const PowerSpectrogram& frames) {
  CheckInput(params, frames);
  const Matrix hidden = params.encoder_hidden.Apply(frames).array().tanh();
  return {params.encoder_mean.Apply(hidden), params.encoder_logvar.Apply(hidden)};
}

Matrix SampleLatent(const LatentBatch& batch, Rng& rng) {
  const Matrix eps = RandomNormal(batch.mean.rows(), batch.mean.cols(), rng);
  return batch.mean.array() + (0.5 * batch.logvar.array()).exp() * eps.array();
}

PowerSpectrogram Decode(const VaeParams& params, const Matrix& z) {
  CheckLatent(params, z);
  const Matrix hidden = params.decoder_hidden.Apply(z).array().tanh();
  return params.decoder_logvar_out.Apply(hidden).array().exp();
}

double GaussianKl(const Matrix& mean, const Matrix& logvar) {
  return 0.5 * (logvar.array().exp() + mean.array().square() - 1.0 -
                logvar.array())
                   .sum();
}

ElboResult ElboLoss(const VaeParams& params, const PowerSpectrogram& frames,
                    const Matrix& noise, ElboTerms terms) {
  CheckInput(params, frames);
  if (noise.rows() != params.encoder_mean.weight.rows() ||
      noise.cols() != frames.cols())
    throw Error("vae: noise matrix shape does not match latent batch");

  const Forward f = RunForward(params, frames, noise);
  const Matrix inv_var = (-f.out.array()).exp();
  const Eigen::RowVectorXd recon_cols =
      (frames.array() * inv_var.array() + f.out.array()).colwise().sum();
  const Eigen::RowVectorXd kl_cols =
      0.5 * (f.logvar.array().exp() + f.mean.array().square() - 1.0 -
             f.logvar.array())
                .colwise()
                .sum();

  ElboResult r;
  for (Eigen::Index t = 0; t < frames.cols(); ++t) {
    const double frame_loss = (terms.reconstruction ? recon_cols(t) : 0.0) +
                              (terms.kl ? kl_cols(t) : 0.0);
    if (!std::isfinite(frame_loss))
      throw Error("vae: non-finite loss at frame " + std::to_string(t));
  }
  r.reconstruction = recon_cols.sum();
  r.kl = kl_cols.sum();
  r.loss = (terms.reconstruction ? r.reconstruction : 0.0) +
           (terms.kl ? r.kl : 0.0);

  r.gradient = VaeParams::Zeros(params.shape());
  VaeParams& g = r.gradient;
  Matrix d_mean = Matrix::Zero(f.mean.rows(), f.mean.cols());
  Matrix d_logvar = Matrix::Zero(f.logvar.rows(), f.logvar.cols());

  if (terms.reconstruction) {
    const Matrix d_out = 1.0 - frames.array() * inv_var.array();
    AccumulateLayer(g.decoder_logvar_out, d_out, f.dec_hidden);
    const Matrix d_dec_pre =
        (params.decoder_logvar_out.weight.transpose() * d_out).array() *
        (1.0 - f.dec_hidden.array().square());
    AccumulateLayer(g.decoder_hidden, d_dec_pre, f.z);
    const Matrix d_z = params.decoder_hidden.weight.transpose() * d_dec_pre;
    d_mean += d_z;
    d_logvar.array() +=
        d_z.array() * noise.array() * 0.5 * (0.5 * f.logvar.array()).exp();
  }
  if (terms.kl) {
    d_mean += f.mean;
    d_logvar.array() += 0.5 * (f.logvar.array().exp() - 1.0);
  }

  AccumulateLayer(g.encoder_mean, d_mean, f.hidden);
  AccumulateLayer(g.encoder_logvar, d_logvar, f.hidden);
  const Matrix d_hidden_pre =
      (params.encoder_mean.weight.transpose() * d_mean +
       params.encoder_logvar.weight.transpose() * d_logvar)
          .array() *
      (1.0 - f.hidden.array().square());
  AccumulateLayer(g.encoder_hidden, d_hidden_pre, frames);
  return r;
}

ElboResult ElboLoss(const VaeParams& params, const PowerSpectrogram& frames,
                    Rng& rng, ElboTerms terms) {
  const Matrix noise =
      RandomNormal(params.encoder_mean.weight.rows(), frames.cols(), rng);
  return ElboLoss(params, frames, noise, terms);
}

double ElboValue(const VaeParams& params, const PowerSpectrogram& frames,
                 const Matrix& noise, ElboTerms terms) {
  CheckInput(params, frames);
  const Forward f = RunForward(params, frames, noise);
  double loss = 0.0;
  if (terms.reconstruction)
    loss += (frames.array() * (-f.out.array()).exp() + f.out.array()).sum();
  if (terms.kl) loss += GaussianKl(f.mean, f.logvar);
  return loss;
}

}  // namespace vaenmf
