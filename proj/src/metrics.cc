// Copyright 2026 The vaenmf Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "vaenmf/metrics.h"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <limits>
#include <map>
#include <sys/wait.h>

#include <unsupported/Eigen/FFT>

#include "json.hpp"

namespace vaenmf {
namespace {

using nlohmann::json;

constexpr double kPi = 3.14159265358979323846;

// Critical band centres and widths in Hz.
constexpr double kBandCentres[25] = {
    50.0,     120.0,    190.0,    260.0,    330.0,    400.0,    470.0,
    540.0,    617.372,  703.378,  798.717,  904.128,  1020.38,  1148.30,
    1288.72,  1442.54,  1610.70,  1794.16,  1993.93,  2211.08,  2446.71,
    2701.97,  2978.04,  3276.17,  3597.63};
constexpr double kBandWidths[25] = {
    70.0,     70.0,     70.0,     70.0,     70.0,     70.0,     70.0,
    77.3724,  86.0056,  95.3398,  105.411,  116.256,  127.914,  140.423,
    153.823,  168.154,  183.457,  199.776,  217.153,  235.631,  255.255,
    276.072,  298.126,  321.465,  346.136};

void CheckPair(const WaveformBuffer& a, const WaveformBuffer& b, const char* what) {
  if (a.size() != b.size())
    throw ValidationError(std::string(what) + ": reference has " +
                          std::to_string(a.size()) + " samples, estimate has " +
                          std::to_string(b.size()));
  if (a.sample_rate_hz != b.sample_rate_hz)
    throw ValidationError(std::string(what) + ": sample rates differ");
}

// Magnitude spectrum of one windowed frame over the first nfft/2 bins,
// normalized to unit area (left at zero when the frame is silent).
Vector FrameSpectrum(const std::vector<double>& x, size_t start,
                     const Vector& window, int nfft, Eigen::FFT<double>& fft) {
  std::vector<double> buf(static_cast<size_t>(nfft), 0.0);
  for (Eigen::Index i = 0; i < window.size(); ++i) {
    const size_t at = start + static_cast<size_t>(i);
    buf[static_cast<size_t>(i)] = at < x.size() ? x[at] * window(i) : 0.0;
  }
  std::vector<Complex> spec;
  fft.fwd(spec, buf);
  Vector mag(nfft / 2);
  for (int k = 0; k < nfft / 2; ++k) mag(k) = std::abs(spec[static_cast<size_t>(k)]);
  const double area = mag.sum();
  if (area > 0.0) mag /= area;
  return mag;
}

std::string Quote(const std::string& s) {
  std::string out = "'";
  for (char c : s) {
    if (c == '\'') out += "'\\''";
    else out += c;
  }
  return out + "'";
}

void ReplaceAll(std::string& s, const std::string& from, const std::string& to) {
  for (size_t at = s.find(from); at != std::string::npos;
       at = s.find(from, at + to.size()))
    s.replace(at, from.size(), to);
}

json Number(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  if (std::isnan(v)) return "nan";
  return v;
}

json ToJson(const MeanSem& m) {
  return json{{"mean", Number(m.mean)}, {"sem", Number(m.sem)}, {"n", m.n}};
}

std::string Cell(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  if (std::isnan(v)) return "nan";
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::string Cell(const std::optional<double>& v) { return v ? Cell(*v) : ""; }

}  // namespace

double SiSdr(const WaveformBuffer& reference, const WaveformBuffer& estimate) {
  CheckPair(reference, estimate, "si-sdr");
  double ss = 0.0, es = 0.0;
  for (size_t i = 0; i < reference.size(); ++i) {
    ss += reference.samples[i] * reference.samples[i];
    es += estimate.samples[i] * reference.samples[i];
  }
  if (!(ss > 0.0)) throw ValidationError("si-sdr: reference is all zeros");
  const double alpha = es / ss;
  double target = 0.0, residual = 0.0;
  for (size_t i = 0; i < reference.size(); ++i) {
    const double t = alpha * reference.samples[i];
    const double r = estimate.samples[i] - t;
    target += t * t;
    residual += r * r;
  }
  if (residual == 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(target / residual);
}

Matrix CriticalBandFilters(int nfft, int sample_rate_hz) {
  const int half = nfft / 2;
  const double max_freq = sample_rate_hz / 2.0;
  const double min_factor = std::exp(-30.0 / (2.0 * 2.303));
  Matrix filters(25, half);
  for (int i = 0; i < 25; ++i) {
    const double f0 = std::floor(kBandCentres[i] / max_freq * half);
    const double bw = kBandWidths[i] / max_freq * half;
    const double norm = std::log(kBandWidths[0]) - std::log(kBandWidths[i]);
    for (int j = 0; j < half; ++j) {
      const double d = (j - f0) / bw;
      const double v = std::exp(-11.0 * d * d + norm);
      filters(i, j) = v > min_factor ? v : 0.0;
    }
  }
  return filters;
}

double FwssnrFrame(const Vector& ref_bands, const Vector& est_bands,
                   const FwssnrConfig& config) {
  double num = 0.0, den = 0.0;
  for (Eigen::Index j = 0; j < ref_bands.size(); ++j) {
    const double diff = ref_bands(j) - est_bands(j);
    double snr = 10.0 * std::log10(ref_bands(j) * ref_bands(j) / (diff * diff));
    if (std::isnan(snr)) snr = config.min_db;
    snr = std::clamp(snr, config.min_db, config.max_db);
    const double w = std::pow(ref_bands(j), config.gamma);
    num += w * snr;
    den += w;
  }
  return den > 0.0 ? num / den : config.min_db;
}

double Fwssnr(const WaveformBuffer& reference, const WaveformBuffer& estimate,
              const FwssnrConfig& config) {
  CheckPair(reference, estimate, "fwssnr");
  if (config.frame_len <= 0 || config.hop <= 0 || config.nfft < config.frame_len)
    throw ValidationError("fwssnr: invalid framing");
  const Matrix filters = config.filters.size() > 0
                             ? config.filters
                             : CriticalBandFilters(config.nfft, reference.sample_rate_hz);
  if (filters.cols() != config.nfft / 2)
    throw ValidationError("fwssnr: filters must span nfft/2 bins");

  Vector window(config.frame_len);
  for (int n = 0; n < config.frame_len; ++n)
    window(n) = 0.5 * (1.0 - std::cos(2.0 * kPi * (n + 1) / (config.frame_len + 1)));

  const size_t len = reference.size(), frame = static_cast<size_t>(config.frame_len);
  const size_t frames = len <= frame ? 1 : (len - frame) / static_cast<size_t>(config.hop) + 1;
  Eigen::FFT<double> fft;
  double total = 0.0;
  size_t used = 0;
  for (size_t k = 0; k < frames; ++k) {
    const size_t start = k * static_cast<size_t>(config.hop);
    const Vector ref = FrameSpectrum(reference.samples, start, window, config.nfft, fft);
    if (!(ref.sum() > 0.0)) continue;  // silent reference frame
    const Vector est = FrameSpectrum(estimate.samples, start, window, config.nfft, fft);
    total += FwssnrFrame(filters * ref, filters * est, config);
    ++used;
  }
  if (used == 0) throw ValidationError("fwssnr: reference is silent");
  return total / static_cast<double>(used);
}

std::optional<double> PesqExternal(const std::filesystem::path& reference,
                                   const std::filesystem::path& estimate,
                                   const std::string& command_template) {
  if (command_template.empty()) return std::nullopt;
  std::string cmd = command_template;
  ReplaceAll(cmd, "{ref}", Quote(reference.string()));
  ReplaceAll(cmd, "{est}", Quote(estimate.string()));
  cmd += " 2>/dev/null";
  FILE* pipe = popen(cmd.c_str(), "r");
  if (!pipe) return std::nullopt;
  std::string output;
  char buf[256];
  while (size_t n = std::fread(buf, 1, sizeof(buf), pipe)) output.append(buf, n);
  const int status = pclose(pipe);
  if (status == -1 || !WIFEXITED(status) || WEXITSTATUS(status) != 0)
    return std::nullopt;
  const auto first = output.find_first_not_of(" \t\r\n");
  if (first == std::string::npos) return std::nullopt;
  const auto last = output.find_last_not_of(" \t\r\n");
  const std::string token = output.substr(first, last - first + 1);
  char* end = nullptr;
  const double v = std::strtod(token.c_str(), &end);
  if (end != token.c_str() + token.size() || !std::isfinite(v)) return std::nullopt;
  return v;
}

double MetricDelta(double noisy, double enhanced) {
  if (noisy == enhanced) return 0.0;
  return enhanced - noisy;
}

std::optional<double> MetricRow::delta_pesq() const {
  if (!pesq_noisy || !pesq_enhanced) return std::nullopt;
  return MetricDelta(*pesq_noisy, *pesq_enhanced);
}

MeanSem ComputeMeanSem(const std::vector<double>& values) {
  MeanSem m;
  m.n = values.size();
  if (values.empty()) return m;
  double sum = 0.0;
  for (double v : values) sum += v;
  m.mean = sum / static_cast<double>(m.n);
  if (m.n < 2 || !std::isfinite(m.mean)) return m;
  double ss = 0.0;
  for (double v : values) ss += (v - m.mean) * (v - m.mean);
  const double sd = std::sqrt(ss / static_cast<double>(m.n - 1));
  m.sem = sd / std::sqrt(static_cast<double>(m.n));
  return m;
}

const GroupAggregate* MetricsReport::Find(std::string_view group) const {
  for (const auto& a : aggregates)
    if (a.group == group) return &a;
  return nullptr;
}

MetricsReport BuildReport(std::vector<MetricRow> rows) {
  if (rows.empty()) throw ValidationError("report: no rows");
  MetricsReport report;
  report.rows = std::move(rows);
  for (const auto& r : report.rows)
    if (r.delta_pesq()) report.has_pesq = true;

  std::map<std::string, std::vector<const MetricRow*>> groups;
  for (const auto& r : report.rows) {
    groups[r.group].push_back(&r);
    groups["\x7f"].push_back(&r);  // sorts last
  }
  for (const auto& [name, members] : groups) {
    auto stat = [&](auto get) {
      std::vector<double> v;
      for (auto* r : members) v.push_back(get(*r));
      return ComputeMeanSem(v);
    };
    GroupAggregate a;
    a.group = name == "\x7f" ? "overall" : name;
    a.si_sdr_noisy = stat([](const MetricRow& r) { return r.si_sdr_noisy; });
    a.si_sdr_enhanced = stat([](const MetricRow& r) { return r.si_sdr_enhanced; });
    a.delta_si_sdr = stat([](const MetricRow& r) { return r.delta_si_sdr(); });
    a.fwssnr_noisy = stat([](const MetricRow& r) { return r.fwssnr_noisy; });
    a.fwssnr_enhanced = stat([](const MetricRow& r) { return r.fwssnr_enhanced; });
    a.delta_fwssnr = stat([](const MetricRow& r) { return r.delta_fwssnr(); });
    if (report.has_pesq) {
      std::vector<double> v;
      for (auto* r : members)
        if (auto d = r->delta_pesq()) v.push_back(*d);
      if (!v.empty()) a.delta_pesq = ComputeMeanSem(v);
    }
    report.aggregates.push_back(std::move(a));
  }
  return report;
}

void WriteReportCsv(const MetricsReport& report, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot create " + path.string());
  out << "utterance_id,speaker_id,group,condition,si_sdr_noisy,si_sdr_enhanced,"
         "delta_si_sdr,fwssnr_noisy,fwssnr_enhanced,delta_fwssnr";
  if (report.has_pesq) out << ",pesq_noisy,pesq_enhanced,delta_pesq";
  out << '\n';
  for (const auto& r : report.rows) {
    out << r.utterance_id << ',' << r.speaker_id << ',' << r.group << ','
        << r.condition << ',' << Cell(r.si_sdr_noisy) << ','
        << Cell(r.si_sdr_enhanced) << ',' << Cell(r.delta_si_sdr()) << ','
        << Cell(r.fwssnr_noisy) << ',' << Cell(r.fwssnr_enhanced) << ','
        << Cell(r.delta_fwssnr());
    if (report.has_pesq)
      out << ',' << Cell(r.pesq_noisy) << ',' << Cell(r.pesq_enhanced) << ','
          << Cell(r.delta_pesq());
    out << '\n';
  }
  out << "\ngroup,metric,n,mean,standard_error\n";
  for (const auto& a : report.aggregates) {
    auto line = [&](const char* metric, const MeanSem& m) {
      out << a.group << ',' << metric << ',' << m.n << ',' << Cell(m.mean) << ','
          << Cell(m.sem) << '\n';
    };
    line("si_sdr_noisy", a.si_sdr_noisy);
    line("si_sdr_enhanced", a.si_sdr_enhanced);
    line("delta_si_sdr", a.delta_si_sdr);
    line("fwssnr_noisy", a.fwssnr_noisy);
    line("fwssnr_enhanced", a.fwssnr_enhanced);
    line("delta_fwssnr", a.delta_fwssnr);
    if (a.delta_pesq) line("delta_pesq", *a.delta_pesq);
  }
  if (!out) throw Error("write failed for " + path.string());
}

void WriteReportJson(const MetricsReport& report, const std::filesystem::path& path) {
  json groups = json::array();
  for (const auto& a : report.aggregates) {
    json g{{"group", a.group},
           {"si_sdr_noisy", ToJson(a.si_sdr_noisy)},
           {"si_sdr_enhanced", ToJson(a.si_sdr_enhanced)},
           {"delta_si_sdr", ToJson(a.delta_si_sdr)},
           {"fwssnr_noisy", ToJson(a.fwssnr_noisy)},
           {"fwssnr_enhanced", ToJson(a.fwssnr_enhanced)},
           {"delta_fwssnr", ToJson(a.delta_fwssnr)}};
    if (a.delta_pesq) g["delta_pesq"] = ToJson(*a.delta_pesq);
    groups.push_back(std::move(g));
  }
  const json doc{{"rows", report.rows.size()},
                 {"dispersion", "standard_error_of_mean"},
                 {"groups", std::move(groups)}};
  std::ofstream out(path);
  if (!out) throw Error("cannot create " + path.string());
  out << doc.dump(2) << '\n';
  if (!out) throw Error("write failed for " + path.string());
}

}  // namespace vaenmf
