// Copyright 2026 The vaenmf Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "vaenmf/mcem.h"

#include <algorithm>
#include <cmath>

namespace vaenmf {
namespace {

constexpr double kLogPi = 1.14472988584940017414;
constexpr double kLog2Pi = 1.83787706640934548356;
constexpr uint64_t kNmfInitSalt = 0x6e6d66;  // "nmf"

// Per-frame log target up to a constant: -sum_f (ln V + P / V) - |z|^2 / 2.
Eigen::RowVectorXd LogTarget(const Vector& gain, const Matrix& speech,
                             const Matrix& noise, const PowerSpectrogram& y_pow,
                             const Matrix& z) {
  const Matrix v = MixtureVariance(gain, speech, noise);
  Eigen::RowVectorXd lt =
      -(v.array().log() + y_pow.array() / v.array()).colwise().sum();
  lt -= 0.5 * z.colwise().squaredNorm();
  return lt;
}

void CheckShapes(const PowerSpectrogram& y_pow, const VaeParams& vae) {
  if (y_pow.rows() != vae.shape().input_dim)
    throw Error("mcem: spectrogram has " + std::to_string(y_pow.rows()) +
                " bins, model expects " + std::to_string(vae.shape().input_dim));
}

}  // namespace

void McemConfig::Validate() const {
  if (n_em_iters <= 0 || mh_iters_per_estep <= 0 || n_samples <= 0 ||
      nmf_rank <= 0)
    throw ValidationError("mcem: iteration counts, samples and rank must be positive");
  if (burn_in < 0) throw ValidationError("mcem: burn_in must be >= 0");
  if (burn_in + n_samples > mh_iters_per_estep)
    throw ValidationError("mcem: burn_in + n_samples exceeds mh_iters_per_estep");
  if (!(proposal_std > 0.0) || !std::isfinite(proposal_std))
    throw ValidationError("mcem: proposal_std must be positive");
}

Matrix MixtureVariance(const Vector& gain, const Matrix& speech_variance,
                       const Matrix& noise_variance) {
  Matrix v = (speech_variance.array().rowwise() * gain.transpose().array() +
              noise_variance.array())
                 .max(kVarianceFloor);
  return v;
}

double MixtureLogLik(const PowerSpectrogram& y_pow, const Matrix& z,
                     const InferenceState& state, const VaeParams& vae,
                     bool include_prior) {
  CheckShapes(y_pow, vae);
  if (z.cols() != y_pow.cols() || state.gain.size() != y_pow.cols())
    throw Error("mcem: frame count mismatch");
  const Matrix v =
      MixtureVariance(state.gain, Decode(vae, z), NoiseVariance(state.nmf));
  double ll = -static_cast<double>(v.size()) * kLogPi -
              (v.array().log() + y_pow.array() / v.array()).sum();
  if (include_prior)
    ll += -0.5 * z.squaredNorm() - 0.5 * static_cast<double>(z.size()) * kLog2Pi;
  return ll;
}

double MixtureLogLik(const ComplexSpectrogram& y, const Matrix& z,
                     const InferenceState& state, const VaeParams& vae,
                     bool include_prior) {
  return MixtureLogLik(Power(y), z, state, vae, include_prior);
}

InferenceState InitState(const ComplexSpectrogram& y, const VaeParams& vae,
                         const McemConfig& config) {
  config.Validate();
  const PowerSpectrogram y_pow = Power(y);
  CheckShapes(y_pow, vae);
  InferenceState s;
  s.gain = Vector::Ones(y_pow.cols());
  Rng rng(DeriveSeed(config.seed, kNmfInitSalt));
  s.nmf = InitNmf(y_pow.rows(), y_pow.cols(), config.nmf_rank, rng);
  s.z_chain = Encode(vae, y_pow).mean;
  s.chain_speech = Decode(vae, s.z_chain);
  return s;
}

EStepResult EStep(InferenceState& state, const PowerSpectrogram& y_pow,
                  const VaeParams& vae, const McemConfig& config,
                  uint64_t iteration) {
  CheckShapes(y_pow, vae);
  const Eigen::Index frames = y_pow.cols();
  const Eigen::Index dim = state.z_chain.rows();
  std::vector<Rng> rngs;
  std::vector<NormalSampler> normals(static_cast<size_t>(frames));
  rngs.reserve(static_cast<size_t>(frames));
  for (Eigen::Index t = 0; t < frames; ++t)
    rngs.emplace_back(DeriveSeed(config.seed, iteration, t));

  const Matrix noise = NoiseVariance(state.nmf);
  Eigen::RowVectorXd current =
      LogTarget(state.gain, state.chain_speech, noise, y_pow, state.z_chain);

  EStepResult out;
  long accepted = 0;
  Matrix proposal(dim, frames);
  const int first_kept = config.mh_iters_per_estep - config.n_samples;
  for (int step = 0; step < config.mh_iters_per_estep; ++step) {
    for (Eigen::Index t = 0; t < frames; ++t) {
      auto& rng = rngs[static_cast<size_t>(t)];
      auto& normal = normals[static_cast<size_t>(t)];
      for (Eigen::Index d = 0; d < dim; ++d)
        proposal(d, t) = state.z_chain(d, t) + config.proposal_std * normal(rng);
    }
    const Matrix speech = Decode(vae, proposal);
    const Eigen::RowVectorXd candidate =
        LogTarget(state.gain, speech, noise, y_pow, proposal);
    for (Eigen::Index t = 0; t < frames; ++t) {
      if (std::isnan(candidate(t)))
        throw Error("mcem: non-finite target at frame " + std::to_string(t));
      const double u = NormalSampler::Uniform(rngs[static_cast<size_t>(t)]);
      if (std::log(u) < candidate(t) - current(t)) {
        state.z_chain.col(t) = proposal.col(t);
        state.chain_speech.col(t) = speech.col(t);
        current(t) = candidate(t);
        ++accepted;
      }
    }
    if (step >= first_kept) {
      out.samples.push_back(state.z_chain);
      out.speech_variance.push_back(state.chain_speech);
    }
  }
  if (!current.allFinite())
    throw Error("mcem: chain reached a non-finite target");
  out.acceptance_rate =
      frames == 0 ? 0.0
                  : static_cast<double>(accepted) /
                        (static_cast<double>(frames) * config.mh_iters_per_estep);
  return out;
}

InferenceState MStep(const InferenceState& state, const PowerSpectrogram& y_pow,
                     const std::vector<Matrix>& speech_variance) {
  if (speech_variance.empty()) throw Error("mcem: M-step needs samples");
  const Eigen::Index f = y_pow.rows(), t = y_pow.cols();
  const Matrix noise = NoiseVariance(state.nmf);
  Matrix vinv = Matrix::Zero(f, t), vinv2 = Matrix::Zero(f, t);
  Matrix s_vinv = Matrix::Zero(f, t), s_vinv2 = Matrix::Zero(f, t);
  for (const Matrix& s : speech_variance) {
    if (s.rows() != f || s.cols() != t)
      throw Error("mcem: speech variance sample has the wrong shape");
    const Matrix inv = MixtureVariance(state.gain, s, noise).cwiseInverse();
    vinv += inv;
    vinv2.array() += inv.array().square();
    s_vinv.array() += s.array() * inv.array();
    s_vinv2.array() += s.array() * inv.array().square();
  }
  const double m = static_cast<double>(speech_variance.size());
  vinv /= m;
  vinv2 /= m;
  s_vinv /= m;
  s_vinv2 /= m;

  InferenceState out = state;
  out.nmf = UpdateH(state.nmf, y_pow, vinv, vinv2);
  out.nmf = UpdateW(out.nmf, y_pow, vinv, vinv2);
  const Vector num = (y_pow.array() * s_vinv2.array()).colwise().sum().transpose();
  const Vector den = s_vinv.colwise().sum().transpose();
  out.gain = (state.gain.array() *
              (num.array() / den.array().max(kVarianceFloor)).sqrt())
                 .max(kVarianceFloor);
  if (!out.gain.allFinite()) throw Error("mcem: non-finite gain update");
  return out;
}

InferenceState MStep(const InferenceState& state, const ComplexSpectrogram& y,
                     const std::vector<Matrix>& samples, const VaeParams& vae) {
  std::vector<Matrix> speech;
  speech.reserve(samples.size());
  for (const Matrix& z : samples) speech.push_back(Decode(vae, z));
  return MStep(state, Power(y), speech);
}

Matrix WienerGain(const Vector& gain, const std::vector<Matrix>& speech_variance,
                  const Matrix& noise_variance) {
  if (speech_variance.empty()) throw Error("wiener: no speech variance samples");
  Matrix acc = Matrix::Zero(noise_variance.rows(), noise_variance.cols());
  for (const Matrix& s : speech_variance) {
    const Matrix speech = s.array().rowwise() * gain.transpose().array();
    const Matrix total = (speech + noise_variance).cwiseMax(kVarianceFloor);
    acc.array() += speech.array() / total.array();
  }
  acc /= static_cast<double>(speech_variance.size());
  // Guard: anything non-finite is treated as fully suppressed.
  return acc.unaryExpr([](double v) {
    return std::isfinite(v) ? std::clamp(v, 0.0, 1.0) : 0.0;
  });
}

EnhancementOutput RunMcem(const ComplexSpectrogram& y, const VaeParams& vae,
                          const McemConfig& config,
                          const IterationCallback& on_iteration) {
  config.Validate();
  const PowerSpectrogram y_pow = Power(y);
  CheckShapes(y_pow, vae);

  EnhancementOutput out;
  InferenceState state = InitState(y, vae, config);
  double acceptance = 0.0;
  for (int it = 0; it < config.n_em_iters; ++it) {
    const EStepResult e = EStep(state, y_pow, vae, config, static_cast<uint64_t>(it));
    acceptance += e.acceptance_rate;
    state = MStep(state, y_pow, e.speech_variance);

    Matrix z_mean = Matrix::Zero(state.z_chain.rows(), state.z_chain.cols());
    for (const Matrix& z : e.samples) z_mean += z;
    z_mean /= static_cast<double>(e.samples.size());
    const double ll = MixtureLogLik(y_pow, z_mean, state, vae);
    out.loglik_trace.push_back(ll);
    if (on_iteration) on_iteration(it, ll);
  }
  const EStepResult last = EStep(state, y_pow, vae, config,
                                 static_cast<uint64_t>(config.n_em_iters));
  acceptance += last.acceptance_rate;
  out.acceptance_rate = acceptance / (config.n_em_iters + 1);

  out.wiener_gain =
      WienerGain(state.gain, last.speech_variance, NoiseVariance(state.nmf));
  out.enhanced = y;
  out.enhanced.data = y.data.cwiseProduct(out.wiener_gain.cast<Complex>());
  out.final_state = std::move(state);
  return out;
}

}  // namespace vaenmf
