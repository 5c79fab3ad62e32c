// Copyright 2026 The vaenmf Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)
//
// Non-negative factorized noise variance, sigma2_noise = W H, and the
// multiplicative updates applied inside the MCEM M-step.

#ifndef VAENMF_NMF_H_
#define VAENMF_NMF_H_

#include "vaenmf/common.h"

namespace vaenmf {

inline constexpr double kNmfFloor = 1e-12;

struct NmfParams {
  Matrix w;  // F x K spectral basis
  Matrix h;  // K x T activations

  Eigen::Index rank() const { return w.cols(); }
};

// Entries drawn i.i.d. uniform on [kNmfFloor, 1).
NmfParams InitNmf(Eigen::Index bins, Eigen::Index frames, Eigen::Index rank,
                  Rng& rng);

Matrix NoiseVariance(const NmfParams& params);

// The statistics are Monte Carlo averages over latent samples of the inverse
// (avg_vinv) and squared inverse (avg_vinv2) mixture variance, F x T.
//   H <- H * [ W^T (Y .* avg_vinv2) / W^T avg_vinv ]^(1/2)
//   W <- W * [ (Y .* avg_vinv2) H^T / avg_vinv H^T ]^(1/2)
// Entries are clamped at kNmfFloor afterwards.
NmfParams UpdateH(const NmfParams& params, const Matrix& y_pow,
                  const Matrix& avg_vinv, const Matrix& avg_vinv2);
NmfParams UpdateW(const NmfParams& params, const Matrix& y_pow,
                  const Matrix& avg_vinv, const Matrix& avg_vinv2);

// Itakura-Saito divergence summed over entries: x/v - ln(x/v) - 1.
double ItakuraSaito(const Matrix& x, const Matrix& v);

}  // namespace vaenmf

#endif  // VAENMF_NMF_H_
