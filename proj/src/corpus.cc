// Copyright 2026 The vaenmf Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "vaenmf/corpus.h"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <set>
#include <sstream>

namespace vaenmf {
namespace {

constexpr std::string_view kManifestHeader = "# vaenmf-manifest v1";
constexpr std::string_view kNoiseHeader = "# vaenmf-noise v1";
constexpr std::string_view kMixtureHeader = "# vaenmf-mixtures v1";
constexpr std::string_view kManifestColumns =
    "utterance_id\tspeaker_id\tgroup\trecording_type\tlanguage\tpath\tduration_s";
constexpr std::string_view kNoiseColumns = "noise_id\tkind\tpath";
constexpr std::string_view kMixtureColumns =
    "mixture_id\tclean_utterance_id\tnoise_id\tsnr_db\toffset_seed\tnoisy_path";

std::vector<std::string> SplitTabs(const std::string& line) {
  std::vector<std::string> out;
  size_t start = 0;
  while (true) {
    const size_t tab = line.find('\t', start);
    out.push_back(line.substr(start, tab - start));
    if (tab == std::string::npos) break;
    start = tab + 1;
  }
  return out;
}

std::string FormatDouble(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

double ParseDouble(const std::string& s, const std::string& where) {
  double v = 0.0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size())
    throw ValidationError(where + ": cannot parse number '" + s + "'");
  return v;
}

uint64_t ParseU64(const std::string& s, const std::string& where) {
  uint64_t v = 0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size())
    throw ValidationError(where + ": cannot parse integer '" + s + "'");
  return v;
}

// Reads a versioned table: header line, column line, then rows. An empty
// file yields no rows.
std::vector<std::vector<std::string>> ReadTable(const std::filesystem::path& path,
                                                std::string_view header,
                                                std::string_view columns) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open " + path.string());
  const std::string name = path.string();
  const size_t n_cols = SplitTabs(std::string(columns)).size();
  std::vector<std::vector<std::string>> rows;
  std::string line;
  int line_no = 0;
  bool seen_header = false, seen_columns = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const std::string where = name + ":" + std::to_string(line_no);
    if (!seen_header) {
      if (line != header)
        throw ValidationError(where + ": expected header '" + std::string(header) + "'");
      seen_header = true;
      continue;
    }
    if (!seen_columns) {
      if (line != columns)
        throw ValidationError(where + ": unexpected column line");
      seen_columns = true;
      continue;
    }
    if (line[0] == '#') continue;
    auto fields = SplitTabs(line);
    if (fields.size() != n_cols)
      throw ValidationError(where + ": expected " + std::to_string(n_cols) +
                            " fields, found " + std::to_string(fields.size()));
    for (const auto& f : fields)
      if (f.empty()) throw ValidationError(where + ": empty field");
    fields.push_back(where);
    rows.push_back(std::move(fields));
  }
  return rows;
}

std::ofstream OpenForWrite(const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot create " + path.string());
  return out;
}

void ShuffleInPlace(std::vector<std::string>& v, Rng& rng) {
  for (size_t i = v.size(); i > 1; --i) {
    const size_t j = static_cast<size_t>(rng() % i);
    std::swap(v[i - 1], v[j]);
  }
}

// Speaker ids grouped by group, sorted, then shuffled per group.
std::map<SpeakerGroup, std::vector<std::string>> ShuffledSpeakersByGroup(
    const Manifest& manifest, uint64_t seed) {
  std::map<SpeakerGroup, std::vector<std::string>> by_group;
  for (const auto& s : manifest.Speakers())
    by_group[*manifest.GroupOf(s)].push_back(s);
  Rng rng(seed);
  for (auto& [group, speakers] : by_group) ShuffleInPlace(speakers, rng);
  return by_group;
}

std::vector<std::string> UtterancesOf(const Manifest& manifest,
                                      const std::set<std::string>& speakers) {
  std::vector<const UtteranceRecord*> recs;
  for (const auto& r : manifest.records)
    if (speakers.count(r.speaker_id)) recs.push_back(&r);
  std::sort(recs.begin(), recs.end(), [](auto* a, auto* b) {
    return a->utterance_id < b->utterance_id;
  });
  std::vector<std::string> ids;
  for (auto* r : recs) ids.push_back(r->utterance_id);
  return ids;
}

Matrix ConcatColumns(const std::vector<Matrix>& parts, Eigen::Index rows) {
  Eigen::Index cols = 0;
  for (const auto& p : parts) cols += p.cols();
  Matrix out(rows, cols);
  Eigen::Index at = 0;
  for (const auto& p : parts) {
    out.middleCols(at, p.cols()) = p;
    at += p.cols();
  }
  return out;
}

}  // namespace

std::string_view ToString(SpeakerGroup g) {
  return g == SpeakerGroup::kNeurotypical ? "neurotypical" : "pathological";
}

std::string_view ToString(RecordingType r) {
  switch (r) {
    case RecordingType::kSentence: return "sentence";
    case RecordingType::kReadText: return "read_text";
    case RecordingType::kMonologue: return "monologue";
  }
  return "";
}

std::string_view ToString(NoiseKind k) {
  switch (k) {
    case NoiseKind::kCafe: return "cafe";
    case NoiseKind::kCar: return "car";
    case NoiseKind::kHome: return "home";
    case NoiseKind::kStreet: return "street";
  }
  return "";
}

SpeakerGroup ParseSpeakerGroup(std::string_view s) {
  if (s == "neurotypical") return SpeakerGroup::kNeurotypical;
  if (s == "pathological") return SpeakerGroup::kPathological;
  throw ValidationError("unknown speaker group '" + std::string(s) + "'");
}

RecordingType ParseRecordingType(std::string_view s) {
  if (s == "sentence") return RecordingType::kSentence;
  if (s == "read_text") return RecordingType::kReadText;
  if (s == "monologue") return RecordingType::kMonologue;
  throw ValidationError("unknown recording type '" + std::string(s) + "'");
}

NoiseKind ParseNoiseKind(std::string_view s) {
  for (auto k : {NoiseKind::kCafe, NoiseKind::kCar, NoiseKind::kHome,
                 NoiseKind::kStreet})
    if (ToString(k) == s) return k;
  throw ValidationError("unknown noise kind '" + std::string(s) + "'");
}

const UtteranceRecord& Manifest::Find(std::string_view utterance_id) const {
  for (const auto& r : records)
    if (r.utterance_id == utterance_id) return r;
  throw ValidationError("unknown utterance '" + std::string(utterance_id) + "'");
}

std::filesystem::path Manifest::ResolvePath(const UtteranceRecord& r) const {
  const std::filesystem::path p(r.path);
  return p.is_absolute() ? p : base_dir / p;
}

std::vector<std::string> Manifest::Speakers() const {
  std::set<std::string> s;
  for (const auto& r : records) s.insert(r.speaker_id);
  return {s.begin(), s.end()};
}

std::optional<SpeakerGroup> Manifest::GroupOf(std::string_view speaker_id) const {
  for (const auto& r : records)
    if (r.speaker_id == speaker_id) return r.group;
  return std::nullopt;
}

std::vector<const UtteranceRecord*> Manifest::Select(
    const std::vector<std::string>& ids) const {
  std::map<std::string_view, const UtteranceRecord*> index;
  for (const auto& r : records) index[r.utterance_id] = &r;
  std::vector<const UtteranceRecord*> out;
  for (const auto& id : ids) {
    auto it = index.find(id);
    if (it == index.end())
      throw ValidationError("unknown utterance '" + id + "'");
    out.push_back(it->second);
  }
  return out;
}

void Manifest::Validate() const {
  std::set<std::string_view> ids;
  std::map<std::string_view, SpeakerGroup> groups;
  for (const auto& r : records) {
    if (!ids.insert(r.utterance_id).second)
      throw ValidationError("duplicate utterance_id '" + r.utterance_id + "'");
    if (!(r.duration_s > 0.0) || !std::isfinite(r.duration_s))
      throw ValidationError("utterance '" + r.utterance_id +
                            "' has a non-positive duration");
    auto [it, fresh] = groups.emplace(r.speaker_id, r.group);
    if (!fresh && it->second != r.group)
      throw ValidationError("speaker '" + r.speaker_id +
                            "' is listed in both groups");
  }
}

Manifest LoadManifest(const std::filesystem::path& path) {
  Manifest m;
  m.base_dir = path.parent_path();
  for (const auto& f : ReadTable(path, kManifestHeader, kManifestColumns)) {
    const std::string& where = f[7];
    UtteranceRecord r;
    r.utterance_id = f[0];
    r.speaker_id = f[1];
    try {
      r.group = ParseSpeakerGroup(f[2]);
      r.recording_type = ParseRecordingType(f[3]);
    } catch (const ValidationError& e) {
      throw ValidationError(where + ": " + e.what());
    }
    r.language = f[4];
    r.path = f[5];
    r.duration_s = ParseDouble(f[6], where);
    m.records.push_back(std::move(r));
  }
  m.Validate();
  return m;
}

void SaveManifest(const Manifest& manifest, const std::filesystem::path& path) {
  auto out = OpenForWrite(path);
  out << kManifestHeader << '\n' << kManifestColumns << '\n';
  for (const auto& r : manifest.records)
    out << r.utterance_id << '\t' << r.speaker_id << '\t' << ToString(r.group)
        << '\t' << ToString(r.recording_type) << '\t' << r.language << '\t'
        << r.path << '\t' << FormatDouble(r.duration_s) << '\n';
  if (!out) throw Error("write failed for " + path.string());
}

WaveformBuffer LoadUtterance(const Manifest& manifest, const UtteranceRecord& r) {
  return ResampleTo16k(ReadWav(manifest.ResolvePath(r)));
}

const NoiseRecord& NoiseManifest::Find(std::string_view noise_id) const {
  for (const auto& r : records)
    if (r.noise_id == noise_id) return r;
  throw ValidationError("unknown noise '" + std::string(noise_id) + "'");
}

std::filesystem::path NoiseManifest::ResolvePath(const NoiseRecord& r) const {
  const std::filesystem::path p(r.path);
  return p.is_absolute() ? p : base_dir / p;
}

NoiseManifest LoadNoiseManifest(const std::filesystem::path& path) {
  NoiseManifest m;
  m.base_dir = path.parent_path();
  std::set<std::string> ids;
  for (const auto& f : ReadTable(path, kNoiseHeader, kNoiseColumns)) {
    if (!ids.insert(f[0]).second)
      throw ValidationError(f[3] + ": duplicate noise_id '" + f[0] + "'");
    NoiseRecord r;
    r.noise_id = f[0];
    try {
      r.kind = ParseNoiseKind(f[1]);
    } catch (const ValidationError& e) {
      throw ValidationError(f[3] + ": " + e.what());
    }
    r.path = f[2];
    m.records.push_back(std::move(r));
  }
  return m;
}

void SaveNoiseManifest(const NoiseManifest& manifest,
                       const std::filesystem::path& path) {
  auto out = OpenForWrite(path);
  out << kNoiseHeader << '\n' << kNoiseColumns << '\n';
  for (const auto& r : manifest.records)
    out << r.noise_id << '\t' << ToString(r.kind) << '\t' << r.path << '\n';
  if (!out) throw Error("write failed for " + path.string());
}

double SignalPower(const WaveformBuffer& x) {
  if (x.samples.empty()) return 0.0;
  double acc = 0.0;
  for (double v : x.samples) acc += v * v;
  return acc / static_cast<double>(x.samples.size());
}

Mixture SynthesizeMixture(const WaveformBuffer& clean, const WaveformBuffer& noise,
                          double snr_db, Rng& rng) {
  RequirePipelineRate(clean, "mixture clean signal");
  RequirePipelineRate(noise, "mixture noise signal");
  if (!std::isfinite(snr_db)) throw ValidationError("mixture: SNR must be finite");
  const double p_clean = SignalPower(clean);
  if (!(p_clean > 0.0)) throw ValidationError("mixture: clean signal has zero power");
  if (noise.samples.empty() || !(SignalPower(noise) > 0.0))
    throw ValidationError("mixture: noise signal has zero power");

  const size_t n = clean.samples.size();
  const size_t m = noise.samples.size();
  Mixture mix;
  mix.noise_offset = m >= n ? static_cast<size_t>(rng() % (m - n + 1))
                            : static_cast<size_t>(rng() % m);
  mix.scaled_noise.sample_rate_hz = kPipelineRate;
  mix.scaled_noise.samples.resize(n);
  for (size_t i = 0; i < n; ++i)
    mix.scaled_noise.samples[i] = noise.samples[(mix.noise_offset + i) % m];
  const double p_noise = SignalPower(mix.scaled_noise);
  if (!(p_noise > 0.0))
    throw ValidationError("mixture: selected noise segment has zero power");

  mix.noise_scale = std::sqrt(p_clean / (p_noise * std::pow(10.0, snr_db / 10.0)));
  mix.noisy = clean;
  for (size_t i = 0; i < n; ++i) {
    mix.scaled_noise.samples[i] *= mix.noise_scale;
    mix.noisy.samples[i] += mix.scaled_noise.samples[i];
  }
  return mix;
}

MixtureSpec PlanMixture(const UtteranceRecord& clean, const NoiseManifest& noises,
                        uint64_t global_seed) {
  if (noises.records.empty()) throw ValidationError("noise manifest is empty");
  Rng rng(DeriveSeed(global_seed, Fnv1a64(clean.utterance_id)));
  std::vector<NoiseKind> kinds;
  for (const auto& r : noises.records)
    if (std::find(kinds.begin(), kinds.end(), r.kind) == kinds.end())
      kinds.push_back(r.kind);
  std::sort(kinds.begin(), kinds.end());
  const NoiseKind kind = kinds[rng() % kinds.size()];
  std::vector<const NoiseRecord*> pool;
  for (const auto& r : noises.records)
    if (r.kind == kind) pool.push_back(&r);

  MixtureSpec spec;
  spec.mixture_id = clean.utterance_id;
  spec.clean_utterance_id = clean.utterance_id;
  spec.noise_id = pool[rng() % pool.size()]->noise_id;
  spec.snr_db = kMixtureSnrsDb[rng() % kMixtureSnrsDb.size()];
  spec.offset_seed = rng();
  return spec;
}

Mixture RealizeMixture(const MixtureSpec& spec, const WaveformBuffer& clean,
                       const WaveformBuffer& noise) {
  Rng rng(spec.offset_seed);
  return SynthesizeMixture(clean, noise, spec.snr_db, rng);
}

std::vector<MixtureSpec> LoadMixtureList(const std::filesystem::path& path) {
  std::vector<MixtureSpec> out;
  for (const auto& f : ReadTable(path, kMixtureHeader, kMixtureColumns)) {
    MixtureSpec s;
    s.mixture_id = f[0];
    s.clean_utterance_id = f[1];
    s.noise_id = f[2];
    s.snr_db = ParseDouble(f[3], f[6]);
    s.offset_seed = ParseU64(f[4], f[6]);
    s.noisy_path = f[5] == "-" ? "" : f[5];
    out.push_back(std::move(s));
  }
  return out;
}

void SaveMixtureList(const std::vector<MixtureSpec>& mixtures,
                     const std::filesystem::path& path) {
  auto out = OpenForWrite(path);
  out << kMixtureHeader << '\n' << kMixtureColumns << '\n';
  for (const auto& s : mixtures)
    out << s.mixture_id << '\t' << s.clean_utterance_id << '\t' << s.noise_id
        << '\t' << FormatDouble(s.snr_db) << '\t' << s.offset_seed << '\t'
        << (s.noisy_path.empty() ? "-" : s.noisy_path) << '\n';
  if (!out) throw Error("write failed for " + path.string());
}

std::string_view ToString(SplitKind k) {
  switch (k) {
    case SplitKind::kCrossDatabase: return "cross-database";
    case SplitKind::kCvFold: return "cv-fold";
    case SplitKind::kPersonal: return "personal";
  }
  return "";
}

SplitKind ParseSplitKind(std::string_view s) {
  for (auto k : {SplitKind::kCrossDatabase, SplitKind::kCvFold, SplitKind::kPersonal})
    if (ToString(k) == s) return k;
  throw ValidationError("unknown split kind '" + std::string(s) + "'");
}

std::vector<SplitPlan> MakeCvFolds(const Manifest& manifest, int k,
                                   const SplitFractions& fractions,
                                   uint64_t seed) {
  if (k < 2) throw ValidationError("cv: need at least 2 folds");
  if (!(fractions.train > 0.0 && fractions.validation >= 0.0))
    throw ValidationError("cv: invalid split fractions");
  const auto by_group = ShuffledSpeakersByGroup(manifest, seed);
  for (const auto& [group, speakers] : by_group)
    if (static_cast<int>(speakers.size()) < k)
      throw ValidationError("cv: group '" + std::string(ToString(group)) +
                            "' has " + std::to_string(speakers.size()) +
                            " speakers, fewer than " + std::to_string(k) +
                            " folds");

  // Round-robin partition over the group-ordered list keeps every part
  // balanced across groups.
  std::vector<std::pair<std::string, SpeakerGroup>> ordered;
  for (const auto& [group, speakers] : by_group)
    for (const auto& s : speakers) ordered.emplace_back(s, group);

  const double val_share = fractions.validation / (fractions.train + fractions.validation);
  std::vector<SplitPlan> plans;
  for (int fold = 0; fold < k; ++fold) {
    std::set<std::string> test, val, train;
    // Remaining speakers per group, ordered by how soon their part would be
    // tested after this fold.
    std::map<SpeakerGroup, std::vector<std::pair<int, std::string>>> rest;
    for (size_t i = 0; i < ordered.size(); ++i) {
      const int part = static_cast<int>(i % static_cast<size_t>(k));
      if (part == fold) {
        test.insert(ordered[i].first);
      } else {
        const int distance = (part - fold - 1 + k) % k;
        rest[ordered[i].second].emplace_back(distance, ordered[i].first);
      }
    }
    std::map<SpeakerGroup, size_t> n_val;
    size_t total_rest = 0, total_val = 0;
    for (auto& [group, list] : rest) {
      std::stable_sort(list.begin(), list.end(),
                       [](auto& a, auto& b) { return a.first < b.first; });
      n_val[group] = static_cast<size_t>(std::lround(val_share * list.size()));
      total_rest += list.size();
      total_val += n_val[group];
    }
    if (val_share > 0.0 && total_val == 0 && total_rest >= 2) {
      auto largest = std::max_element(rest.begin(), rest.end(), [](auto& a, auto& b) {
        return a.second.size() < b.second.size();
      });
      n_val[largest->first] = 1;
    }
    for (auto& [group, list] : rest)
      for (size_t i = 0; i < list.size(); ++i)
        (i < n_val[group] ? val : train).insert(list[i].second);

    SplitPlan plan;
    plan.kind = SplitKind::kCvFold;
    plan.fold = fold;
    plan.name = "fold" + std::to_string(fold);
    plan.train = UtterancesOf(manifest, train);
    plan.validation = UtterancesOf(manifest, val);
    plan.test = UtterancesOf(manifest, test);
    plans.push_back(std::move(plan));
  }
  return plans;
}

SplitPlan MakeDatabaseSplit(const Manifest& manifest,
                            const SplitFractions& fractions, uint64_t seed) {
  const auto by_group = ShuffledSpeakersByGroup(manifest, seed);
  std::vector<std::string> speakers;
  for (const auto& [group, list] : by_group)
    speakers.insert(speakers.end(), list.begin(), list.end());
  const double total = fractions.train + fractions.validation + fractions.test;
  const size_t n = speakers.size();
  if (n < 3) throw ValidationError("database split needs at least 3 speakers");
  size_t n_test = std::max<size_t>(1, std::lround(n * fractions.test / total));
  size_t n_val = std::max<size_t>(1, std::lround(n * fractions.validation / total));
  if (n_test + n_val >= n) n_test = n_val = 1;

  // Interleave so that groups are represented in every subset.
  std::vector<std::string> order;
  {
    std::vector<const std::vector<std::string>*> lists;
    for (const auto& [group, list] : by_group) lists.push_back(&list);
    for (size_t i = 0; order.size() < n; ++i)
      for (auto* l : lists)
        if (i < l->size()) order.push_back((*l)[i]);
  }
  SplitPlan plan;
  plan.kind = SplitKind::kCrossDatabase;
  plan.name = "database";
  plan.test = UtterancesOf(manifest, {order.begin(), order.begin() + n_test});
  plan.validation = UtterancesOf(
      manifest, {order.begin() + n_test, order.begin() + n_test + n_val});
  plan.train = UtterancesOf(manifest, {order.begin() + n_test + n_val, order.end()});
  return plan;
}

std::array<SplitPlan, 2> MakePersonalSplits(const Manifest& manifest,
                                            std::string_view speaker_id) {
  std::vector<const UtteranceRecord*> recs;
  for (const auto& r : manifest.records)
    if (r.speaker_id == speaker_id) recs.push_back(&r);
  std::sort(recs.begin(), recs.end(), [](auto* a, auto* b) {
    return a->utterance_id < b->utterance_id;
  });
  std::vector<std::string> monologue, read;
  for (auto* r : recs)
    (r->recording_type == RecordingType::kMonologue ? monologue : read)
        .push_back(r->utterance_id);
  const std::string who(speaker_id);
  if (recs.empty()) throw ValidationError("unknown speaker '" + who + "'");
  if (monologue.empty())
    throw ValidationError("speaker '" + who + "' has no monologue recording");
  if (read.empty())
    throw ValidationError("speaker '" + who +
                          "' has no sentence or read-text recordings");

  std::array<SplitPlan, 2> plans;
  for (int i = 0; i < 2; ++i) {
    SplitPlan& p = plans[static_cast<size_t>(i)];
    p.kind = SplitKind::kPersonal;
    p.speaker_id = who;
    p.name = who + (i == 0 ? "/adapt-monologue" : "/adapt-read");
    p.train = i == 0 ? monologue : read;
    p.test = i == 0 ? read : monologue;
    p.validation_frame_fraction = 0.1;
  }
  return plans;
}

PowerSpectrogram DropSilentFrames(const PowerSpectrogram& frames, double floor) {
  std::vector<Eigen::Index> keep;
  for (Eigen::Index t = 0; t < frames.cols(); ++t)
    if (frames.col(t).sum() >= floor) keep.push_back(t);
  PowerSpectrogram out(frames.rows(), static_cast<Eigen::Index>(keep.size()));
  for (size_t j = 0; j < keep.size(); ++j)
    out.col(static_cast<Eigen::Index>(j)) = frames.col(keep[j]);
  return out;
}

PowerSpectrogram FramesDataset(const Manifest& manifest,
                               const std::vector<std::string>& utterance_ids,
                               const StftConfig& config) {
  std::vector<Matrix> parts;
  for (const auto* r : manifest.Select(utterance_ids))
    parts.push_back(DropSilentFrames(Power(Stft(LoadUtterance(manifest, *r), config))));
  return ConcatColumns(parts, config.bins());
}

FrameStreams BuildFrameStreams(const Manifest& manifest, const SplitPlan& plan,
                               const StftConfig& config) {
  FrameStreams out;
  if (plan.validation_frame_fraction <= 0.0) {
    out.train = FramesDataset(manifest, plan.train, config);
    out.validation = FramesDataset(manifest, plan.validation, config);
    return out;
  }
  std::vector<Matrix> train, val;
  for (const auto* r : manifest.Select(plan.train)) {
    const Matrix p = Power(Stft(LoadUtterance(manifest, *r), config));
    const Eigen::Index n = p.cols();
    Eigen::Index n_val = std::lround(plan.validation_frame_fraction * n);
    if (n >= 2) n_val = std::clamp<Eigen::Index>(n_val, 1, n - 1);
    train.push_back(DropSilentFrames(p.leftCols(n - n_val)));
    val.push_back(DropSilentFrames(p.rightCols(n_val)));
  }
  out.train = ConcatColumns(train, config.bins());
  out.validation = ConcatColumns(val, config.bins());
  return out;
}

}  // namespace vaenmf
