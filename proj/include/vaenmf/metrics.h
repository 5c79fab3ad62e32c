// Copyright 2026 The vaenmf Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)
//
// Objective speech quality measures and per-group delta reports.

#ifndef VAENMF_METRICS_H_
#define VAENMF_METRICS_H_

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "vaenmf/dsp.h"

namespace vaenmf {

// Scale-invariant SDR in dB. Returns +infinity when the estimate is an exact
// multiple of the reference.
double SiSdr(const WaveformBuffer& reference, const WaveformBuffer& estimate);

struct FwssnrConfig {
  int frame_len = 512;  // 32 ms
  int hop = 256;        // 16 ms
  int nfft = 1024;
  double gamma = 0.2;
  double min_db = -10.0;
  double max_db = 35.0;
  // Band filters over the first nfft/2 bins, one row per band. Empty means
  // the 25 Gaussian critical-band filters.
  Matrix filters;
};

// 25 x nfft/2 critical-band weighting filters for the given sample rate.
Matrix CriticalBandFilters(int nfft, int sample_rate_hz);

// Per-frame value from magnitude band energies:
//   sum_j W_j clip(10 log10(B_ref^2 / (B_ref - B_est)^2)) / sum_j W_j,
// W_j = B_ref^gamma.
double FwssnrFrame(const Vector& ref_bands, const Vector& est_bands,
                   const FwssnrConfig& config);

// Frequency-weighted segmental SNR in dB, averaged over frames whose
// reference is not silent. Always within [min_db, max_db].
double Fwssnr(const WaveformBuffer& reference, const WaveformBuffer& estimate,
              const FwssnrConfig& config = {});

// Runs an external scorer. "{ref}" and "{est}" in the template are replaced
// by the quoted paths; the output must be a single number. Any failure
// yields nullopt.
std::optional<double> PesqExternal(const std::filesystem::path& reference,
                                   const std::filesystem::path& estimate,
                                   const std::string& command_template);

// enhanced - noisy, with equal values (including infinities) giving 0.
double MetricDelta(double noisy, double enhanced);

struct MetricRow {
  std::string utterance_id;
  std::string speaker_id;
  std::string group;
  std::string condition;  // free label, e.g. model or split name
  double si_sdr_noisy = 0.0;
  double si_sdr_enhanced = 0.0;
  double fwssnr_noisy = 0.0;
  double fwssnr_enhanced = 0.0;
  std::optional<double> pesq_noisy;
  std::optional<double> pesq_enhanced;

  double delta_si_sdr() const { return MetricDelta(si_sdr_noisy, si_sdr_enhanced); }
  double delta_fwssnr() const { return MetricDelta(fwssnr_noisy, fwssnr_enhanced); }
  std::optional<double> delta_pesq() const;
};

struct MeanSem {
  double mean = 0.0;
  double sem = 0.0;  // sample sd / sqrt(n); 0 for a single value
  size_t n = 0;
};

MeanSem ComputeMeanSem(const std::vector<double>& values);

struct GroupAggregate {
  std::string group;  // a speaker group, or "overall"
  MeanSem si_sdr_noisy, si_sdr_enhanced, delta_si_sdr;
  MeanSem fwssnr_noisy, fwssnr_enhanced, delta_fwssnr;
  std::optional<MeanSem> delta_pesq;  // present when any row has PESQ
};

struct MetricsReport {
  std::vector<MetricRow> rows;
  std::vector<GroupAggregate> aggregates;  // sorted groups, then "overall"
  bool has_pesq = false;

  const GroupAggregate* Find(std::string_view group) const;
};

MetricsReport BuildReport(std::vector<MetricRow> rows);

// Comma-separated rows followed by an aggregate block.
void WriteReportCsv(const MetricsReport& report, const std::filesystem::path& path);
// JSON summary of the aggregates; infinities are written as "inf".
void WriteReportJson(const MetricsReport& report, const std::filesystem::path& path);

}  // namespace vaenmf

#endif  // VAENMF_METRICS_H_
