// Copyright 2026 The vaenmf Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "vaenmf/nmf.h"

namespace vaenmf {
namespace {

void CheckStats(const NmfParams& p, const Matrix& y_pow, const Matrix& avg_vinv,
                const Matrix& avg_vinv2) {
  const Eigen::Index f = p.w.rows(), t = p.h.cols();
  if (p.w.cols() != p.h.rows())
    throw Error("nmf: W has " + std::to_string(p.w.cols()) +
                " columns but H has " + std::to_string(p.h.rows()) + " rows");
  for (const Matrix* m : {&y_pow, &avg_vinv, &avg_vinv2})
    if (m->rows() != f || m->cols() != t)
      throw Error("nmf: statistics must be " + std::to_string(f) + "x" +
                  std::to_string(t));
  if (!avg_vinv.allFinite() || !avg_vinv2.allFinite() || !y_pow.allFinite())
    throw Error("nmf: non-finite statistics");
}

Matrix Ratio(const Matrix& num, const Matrix& den) {
  return (num.array() / den.array().max(kNmfFloor)).sqrt();
}

Matrix Uniform(Eigen::Index rows, Eigen::Index cols, Rng& rng) {
  Matrix m(rows, cols);
  for (Eigen::Index j = 0; j < cols; ++j)
    for (Eigen::Index i = 0; i < rows; ++i)
      m(i, j) = kNmfFloor + (1.0 - kNmfFloor) * NormalSampler::Uniform(rng);
  return m;
}

}  // namespace

NmfParams InitNmf(Eigen::Index bins, Eigen::Index frames, Eigen::Index rank,
                  Rng& rng) {
  if (bins <= 0 || frames < 0 || rank <= 0)
    throw ValidationError("nmf: dimensions must be positive");
  NmfParams p;
  p.w = Uniform(bins, rank, rng);
  p.h = Uniform(rank, frames, rng);
  return p;
}

Matrix NoiseVariance(const NmfParams& params) { return params.w * params.h; }

NmfParams UpdateH(const NmfParams& params, const Matrix& y_pow,
                  const Matrix& avg_vinv, const Matrix& avg_vinv2) {
  CheckStats(params, y_pow, avg_vinv, avg_vinv2);
  const Matrix num = params.w.transpose() * y_pow.cwiseProduct(avg_vinv2);
  const Matrix den = params.w.transpose() * avg_vinv;
  NmfParams out = params;
  out.h = params.h.cwiseProduct(Ratio(num, den)).cwiseMax(kNmfFloor);
  return out;
}

NmfParams UpdateW(const NmfParams& params, const Matrix& y_pow,
                  const Matrix& avg_vinv, const Matrix& avg_vinv2) {
  CheckStats(params, y_pow, avg_vinv, avg_vinv2);
  const Matrix num = y_pow.cwiseProduct(avg_vinv2) * params.h.transpose();
  const Matrix den = avg_vinv * params.h.transpose();
  NmfParams out = params;
  out.w = params.w.cwiseProduct(Ratio(num, den)).cwiseMax(kNmfFloor);
  return out;
}

double ItakuraSaito(const Matrix& x, const Matrix& v) {
  if (x.rows() != v.rows() || x.cols() != v.cols())
    throw Error("itakura-saito: shape mismatch");
  const auto r = x.array() / v.array();
  return (r - r.log() - 1.0).sum();
}

}  // namespace vaenmf
