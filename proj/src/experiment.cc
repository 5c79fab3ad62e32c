// Copyright 2026 The vaenmf Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "vaenmf/experiment.h"

#include <algorithm>
#include <atomic>
#include <exception>
#include <fstream>
#include <iostream>
#include <map>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>

#include "json.hpp"

namespace vaenmf {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

constexpr uint64_t kMcemSalt = 0x6d63656d;  // "mcem"

std::mutex g_log_mutex;
bool g_verbose = false;

void CheckKeys(const json& j, const std::string& where,
               std::initializer_list<const char*> allowed) {
  if (!j.is_object()) throw ValidationError(where + ": expected an object");
  for (const auto& [key, value] : j.items()) {
    bool ok = false;
    for (const char* a : allowed) ok = ok || key == a;
    if (!ok) throw ValidationError(where + ": unknown key '" + key + "'");
  }
}

template <typename T>
void Read(const json& j, const char* key, T& out, const std::string& where) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const json::exception&) {
    throw ValidationError(where + "." + key + ": wrong type");
  }
}

fs::path Resolve(const fs::path& base, const std::string& p) {
  const fs::path path(p);
  return path.is_absolute() ? path : base / path;
}

void RequireFile(const fs::path& p, const std::string& what) {
  if (p.empty()) throw ValidationError(what + " is not configured");
  if (!fs::is_regular_file(p))
    throw ValidationError(what + " not found: " + p.string());
}

json ReadJsonFile(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open config " + path.string());
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw ValidationError("config " + path.string() + ": " + e.what());
  }
}

void WriteJson(const json& j, const fs::path& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot create " + path.string());
  out << j.dump(2) << '\n';
  if (!out) throw Error("write failed for " + path.string());
}

// Runs fn(i) for i in [0, n) on up to `jobs` threads; rethrows the first
// failure.
template <typename Fn>
void ParallelFor(size_t n, int jobs, Fn fn) {
  const size_t workers = std::min<size_t>(n, static_cast<size_t>(std::max(1, jobs)));
  if (workers <= 1) {
    for (size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  std::vector<std::thread> pool;
  for (size_t w = 0; w < workers; ++w)
    pool.emplace_back([&] {
      for (size_t i = next++; i < n; i = next++) {
        try {
          fn(i);
        } catch (...) {
          std::lock_guard<std::mutex> lock(failure_mutex);
          if (!failure) failure = std::current_exception();
          next = n;
        }
      }
    });
  for (auto& t : pool) t.join();
  if (failure) std::rethrow_exception(failure);
}

std::vector<std::string> Limit(std::vector<std::string> ids, int max) {
  if (max > 0 && ids.size() > static_cast<size_t>(max)) ids.resize(static_cast<size_t>(max));
  return ids;
}

json PlanToJson(const SplitPlan& p) {
  json j{{"kind", ToString(p.kind)},
         {"name", p.name},
         {"train", p.train},
         {"validation", p.validation},
         {"test", p.test}};
  if (p.fold >= 0) j["fold"] = p.fold;
  if (!p.speaker_id.empty()) j["speaker_id"] = p.speaker_id;
  if (p.validation_frame_fraction > 0.0)
    j["validation_frame_fraction"] = p.validation_frame_fraction;
  return j;
}

std::optional<Checkpoint> LoadInit(const ExperimentConfig& config) {
  if (config.model_init.kind == ModelInit::Kind::kScratch) return std::nullopt;
  return LoadCheckpoint(config.model_init.checkpoint);
}

void SaveModel(const Checkpoint& ck, const fs::path& dir) {
  fs::create_directories(dir);
  SaveCheckpoint(ck, dir / "model.ckpt");
  SaveHistory(ck.history, dir / "history.json");
}

void SaveReport(const std::vector<MetricRow>& rows, const fs::path& dir) {
  fs::create_directories(dir);
  const MetricsReport report = BuildReport(rows);
  WriteReportCsv(report, dir / "report.csv");
  WriteReportJson(report, dir / "report.json");
}

std::string Fixed(double v, int digits = 2) {
  std::ostringstream s;
  s.setf(std::ios::fixed);
  s.precision(digits);
  s << v;
  return s.str();
}

std::vector<std::string> PersonalSpeakers(const Manifest& manifest,
                                          const ExperimentConfig& config) {
  if (!config.speakers.empty()) {
    for (const auto& s : config.speakers)
      if (!manifest.GroupOf(s))
        throw ValidationError("speaker '" + s + "' is not in the manifest");
    return config.speakers;
  }
  std::vector<std::string> out;
  for (const auto& s : manifest.Speakers())
    if (!config.speaker_group || manifest.GroupOf(s) == config.speaker_group)
      out.push_back(s);
  if (out.empty()) throw ValidationError("personal protocol: no speakers selected");
  return out;
}

}  // namespace

ModelInit ModelInit::Parse(const std::string& text, const fs::path& base) {
  ModelInit m;
  if (text == "scratch") return m;
  const auto colon = text.find(':');
  const std::string kind = text.substr(0, colon);
  if (colon == std::string::npos || colon + 1 == text.size() ||
      (kind != "finetune" && kind != "personalize"))
    throw ValidationError("model_init must be scratch, finetune:<ckpt> or "
                          "personalize:<ckpt>, got '" + text + "'");
  m.kind = kind == "finetune" ? Kind::kFinetune : Kind::kPersonalize;
  m.checkpoint = Resolve(base, text.substr(colon + 1));
  return m;
}

std::string ModelInit::ToString() const {
  switch (kind) {
    case Kind::kScratch: return "scratch";
    case Kind::kFinetune: return "finetune";
    case Kind::kPersonalize: return "personalize";
  }
  return "";
}

void ExperimentConfig::Validate() const {
  if (output_dir.empty()) throw ValidationError("output_dir is not configured");
  stft.Validate();
  train.Validate();
  mcem.Validate();
  if (train.shape.input_dim != stft.bins())
    throw ValidationError("vae input size must equal the STFT bin count");
  if (folds < 2) throw ValidationError("split.folds must be >= 2");
  if (max_folds < 0) throw ValidationError("split.max_folds must be >= 0");
  if (jobs < 1) throw ValidationError("jobs must be >= 1");
  if (max_test_utterances < 0)
    throw ValidationError("max_test_utterances must be >= 0");
  if (!(fractions.train > 0.0) || fractions.validation < 0.0 || fractions.test < 0.0)
    throw ValidationError("split.fractions must be non-negative with train > 0");
  if (!manifest.empty()) RequireFile(manifest, "manifest");
  if (!noise_manifest.empty()) RequireFile(noise_manifest, "noise_manifest");
  if (!mixtures.empty()) RequireFile(mixtures, "mixtures");
  std::set<std::string> names;
  for (const auto& db : databases) {
    if (db.name.empty() || !names.insert(db.name).second)
      throw ValidationError("databases need unique, non-empty names");
    RequireFile(db.manifest, "manifest of database '" + db.name + "'");
  }
  if (model_init.kind != ModelInit::Kind::kScratch)
    RequireFile(model_init.checkpoint, "model_init checkpoint");
}

ExperimentConfig LoadExperimentConfig(const fs::path& path,
                                      const ConfigOverrides& overrides) {
  const json j = ReadJsonFile(path);
  const fs::path base = path.parent_path().empty() ? fs::path(".") : path.parent_path();
  CheckKeys(j, "config",
            {"seed", "output_dir", "manifest", "databases", "noise_manifest",
             "mixtures", "stft", "vae", "train", "mcem", "split", "model_init",
             "pesq_command", "jobs", "max_test_utterances"});
  ExperimentConfig c;

  if (overrides.seed) {
    c.seed = *overrides.seed;
  } else if (j.contains("seed")) {
    Read(j, "seed", c.seed, "config");
  } else {
    throw ValidationError("config: seed is mandatory");
  }
  if (overrides.output_dir) {
    c.output_dir = *overrides.output_dir;
  } else if (j.contains("output_dir")) {
    c.output_dir = Resolve(base, j.at("output_dir").get<std::string>());
  }
  std::string text;
  if (j.contains("manifest")) {
    Read(j, "manifest", text, "config");
    c.manifest = Resolve(base, text);
  }
  if (j.contains("noise_manifest")) {
    Read(j, "noise_manifest", text, "config");
    c.noise_manifest = Resolve(base, text);
  }
  if (j.contains("mixtures")) {
    Read(j, "mixtures", text, "config");
    c.mixtures = Resolve(base, text);
  }
  if (j.contains("databases")) {
    if (!j["databases"].is_array()) throw ValidationError("config.databases: expected a list");
    for (const auto& d : j["databases"]) {
      CheckKeys(d, "config.databases[]", {"name", "manifest"});
      DatabaseEntry e;
      Read(d, "name", e.name, "config.databases[]");
      Read(d, "manifest", text, "config.databases[]");
      e.manifest = Resolve(base, text);
      c.databases.push_back(std::move(e));
    }
  }
  if (j.contains("stft")) {
    const json& s = j["stft"];
    CheckKeys(s, "config.stft", {"window_len", "hop", "window"});
    Read(s, "window_len", c.stft.window_len, "config.stft");
    Read(s, "hop", c.stft.hop, "config.stft");
    Read(s, "window", c.stft.window, "config.stft");
  }
  c.stft.Validate();
  c.train.shape.input_dim = c.stft.bins();
  if (j.contains("vae")) {
    const json& v = j["vae"];
    CheckKeys(v, "config.vae", {"latent_dim", "hidden_dim"});
    Read(v, "latent_dim", c.train.shape.latent_dim, "config.vae");
    Read(v, "hidden_dim", c.train.shape.hidden_dim, "config.vae");
  }
  if (j.contains("train")) {
    const json& t = j["train"];
    CheckKeys(t, "config.train",
              {"batch_size", "learning_rate", "adam_beta1", "adam_beta2",
               "adam_epsilon", "lr_patience", "lr_factor", "early_stop_patience",
               "max_epochs", "plateau_rel_tol"});
    Read(t, "batch_size", c.train.batch_size, "config.train");
    Read(t, "learning_rate", c.train.learning_rate, "config.train");
    Read(t, "adam_beta1", c.train.adam_beta1, "config.train");
    Read(t, "adam_beta2", c.train.adam_beta2, "config.train");
    Read(t, "adam_epsilon", c.train.adam_epsilon, "config.train");
    Read(t, "lr_patience", c.train.lr_patience, "config.train");
    Read(t, "lr_factor", c.train.lr_factor, "config.train");
    Read(t, "early_stop_patience", c.train.early_stop_patience, "config.train");
    Read(t, "max_epochs", c.train.max_epochs, "config.train");
    Read(t, "plateau_rel_tol", c.train.plateau_rel_tol, "config.train");
  }
  c.train.seed = c.seed;
  if (j.contains("mcem")) {
    const json& m = j["mcem"];
    CheckKeys(m, "config.mcem",
              {"n_em_iters", "mh_iters_per_estep", "burn_in", "n_samples",
               "proposal_std", "nmf_rank"});
    Read(m, "n_em_iters", c.mcem.n_em_iters, "config.mcem");
    Read(m, "mh_iters_per_estep", c.mcem.mh_iters_per_estep, "config.mcem");
    Read(m, "burn_in", c.mcem.burn_in, "config.mcem");
    Read(m, "n_samples", c.mcem.n_samples, "config.mcem");
    Read(m, "proposal_std", c.mcem.proposal_std, "config.mcem");
    Read(m, "nmf_rank", c.mcem.nmf_rank, "config.mcem");
  }
  c.mcem.seed = c.seed;
  if (j.contains("split")) {
    const json& s = j["split"];
    CheckKeys(s, "config.split",
              {"kind", "folds", "max_folds", "fractions", "speakers", "group"});
    if (s.contains("kind")) {
      Read(s, "kind", text, "config.split");
      c.split_kind = ParseSplitKind(text);
    }
    Read(s, "folds", c.folds, "config.split");
    Read(s, "max_folds", c.max_folds, "config.split");
    if (s.contains("fractions")) {
      std::vector<double> f;
      Read(s, "fractions", f, "config.split");
      if (f.size() != 3)
        throw ValidationError("config.split.fractions: expected [train, validation, test]");
      c.fractions = {f[0], f[1], f[2]};
    }
    Read(s, "speakers", c.speakers, "config.split");
    if (s.contains("group")) {
      Read(s, "group", text, "config.split");
      c.speaker_group = ParseSpeakerGroup(text);
    }
  }
  if (j.contains("model_init")) {
    Read(j, "model_init", text, "config");
    c.model_init = ModelInit::Parse(text, base);
  }
  Read(j, "pesq_command", c.pesq_command, "config");
  Read(j, "jobs", c.jobs, "config");
  if (overrides.jobs) c.jobs = *overrides.jobs;
  Read(j, "max_test_utterances", c.max_test_utterances, "config");
  c.Validate();
  return c;
}

void SetVerbose(bool verbose) { g_verbose = verbose; }

void Log(const std::string& line) {
  std::lock_guard<std::mutex> lock(g_log_mutex);
  std::cerr << "vaenmf: " << line << '\n';
}

void LogVerbose(const std::string& line) {
  if (g_verbose) Log(line);
}

EnhanceResult EnhanceWaveform(const WaveformBuffer& noisy, const Checkpoint& model,
                              const McemConfig& config) {
  RequirePipelineRate(noisy, "enhance input");
  EnhanceResult r;
  const bool silent = std::all_of(noisy.samples.begin(), noisy.samples.end(),
                                  [](double v) { return v == 0.0; });
  if (silent) {
    r.enhanced = noisy;
    return r;
  }
  const ComplexSpectrogram y = Stft(noisy, model.stft);
  const EnhancementOutput out = RunMcem(y, model.params, config);
  r.enhanced = Istft(out.enhanced);
  r.loglik_trace = out.loglik_trace;
  r.acceptance_rate = out.acceptance_rate;
  return r;
}

std::vector<MetricRow> EvaluateMixtures(const Manifest& manifest,
                                        const NoiseManifest& noises,
                                        const std::vector<MixtureSpec>& mixtures,
                                        const Checkpoint& model,
                                        const ExperimentConfig& config,
                                        const std::string& condition) {
  std::map<std::string, WaveformBuffer> noise_audio;
  for (const auto& m : mixtures)
    if (!noise_audio.count(m.noise_id))
      noise_audio[m.noise_id] =
          ResampleTo16k(ReadWav(noises.ResolvePath(noises.Find(m.noise_id))));

  const fs::path pesq_dir = config.output_dir / "pesq_tmp";
  if (!config.pesq_command.empty()) fs::create_directories(pesq_dir);

  std::vector<MetricRow> rows(mixtures.size());
  std::atomic<size_t> done{0};
  ParallelFor(mixtures.size(), config.jobs, [&](size_t i) {
    const MixtureSpec& spec = mixtures[i];
    const UtteranceRecord& rec = manifest.Find(spec.clean_utterance_id);
    const WaveformBuffer clean = LoadUtterance(manifest, rec);
    const Mixture mix = RealizeMixture(spec, clean, noise_audio.at(spec.noise_id));
    McemConfig mcem = config.mcem;
    mcem.seed = DeriveSeed(config.seed, Fnv1a64(rec.utterance_id), kMcemSalt);
    const EnhanceResult enhanced = EnhanceWaveform(mix.noisy, model, mcem);

    MetricRow& row = rows[i];
    row.utterance_id = rec.utterance_id;
    row.speaker_id = rec.speaker_id;
    row.group = std::string(ToString(rec.group));
    row.condition = condition;
    row.si_sdr_noisy = SiSdr(clean, mix.noisy);
    row.si_sdr_enhanced = SiSdr(clean, enhanced.enhanced);
    row.fwssnr_noisy = Fwssnr(clean, mix.noisy);
    row.fwssnr_enhanced = Fwssnr(clean, enhanced.enhanced);
    if (!config.pesq_command.empty()) {
      const std::string stem = std::to_string(i) + "_" + rec.utterance_id;
      const fs::path ref = pesq_dir / (stem + "_ref.wav");
      const fs::path noisy = pesq_dir / (stem + "_noisy.wav");
      const fs::path est = pesq_dir / (stem + "_est.wav");
      WriteWav(clean, ref);
      WriteWav(mix.noisy, noisy);
      WriteWav(enhanced.enhanced, est);
      row.pesq_noisy = PesqExternal(ref, noisy, config.pesq_command);
      row.pesq_enhanced = PesqExternal(ref, est, config.pesq_command);
      if (!row.pesq_noisy || !row.pesq_enhanced)
        Log("pesq unavailable for " + rec.utterance_id);
      fs::remove(ref);
      fs::remove(noisy);
      fs::remove(est);
    }
    LogVerbose(condition + " " + rec.utterance_id + " snr " + Fixed(spec.snr_db, 0) +
               " dB: si-sdr " + Fixed(row.si_sdr_noisy) + " -> " +
               Fixed(row.si_sdr_enhanced) + ", acceptance " +
               Fixed(enhanced.acceptance_rate) + " (" + std::to_string(++done) + "/" +
               std::to_string(mixtures.size()) + ")");
  });
  if (!config.pesq_command.empty()) fs::remove_all(pesq_dir);
  return rows;
}

std::vector<MetricRow> EvaluateUtterances(const Manifest& manifest,
                                          const NoiseManifest& noises,
                                          const std::vector<std::string>& utterance_ids,
                                          const Checkpoint& model,
                                          const ExperimentConfig& config,
                                          const std::string& condition) {
  std::vector<MixtureSpec> specs;
  for (const auto* rec : manifest.Select(utterance_ids))
    specs.push_back(PlanMixture(*rec, noises, config.seed));
  return EvaluateMixtures(manifest, noises, specs, model, config, condition);
}

Checkpoint TrainOnPlan(const Manifest& manifest, const SplitPlan& plan,
                       const ExperimentConfig& config, const Checkpoint* init,
                       const std::string& tag) {
  const FrameStreams streams = BuildFrameStreams(manifest, plan, config.stft);
  TrainConfig tc = config.train;
  tc.seed = DeriveSeed(config.seed, Fnv1a64(tag));
  std::string provenance = "scratch";
  if (init) {
    // Library callers may pass an init with a scratch config; label it as a fine-tune.
    const std::string mode = config.model_init.kind == ModelInit::Kind::kScratch
                                 ? std::string("finetune")
                                 : config.model_init.ToString();
    provenance = mode + ":" + CheckpointId(*init);
  }
  Log(tag + ": training on " + std::to_string(streams.train.cols()) + " frames, " +
      std::to_string(streams.validation.cols()) + " validation frames (" +
      provenance + ")");
  Checkpoint ck = Train(streams.train, streams.validation, tc, config.stft, init,
                        provenance, [&](const EpochRecord& e) {
                          LogVerbose(tag + " epoch " + std::to_string(e.epoch) +
                                     " train " + Fixed(e.train_loss) + " val " +
                                     Fixed(e.validation_loss) +
                                     (e.lr_halved ? " (lr halved)" : ""));
                        });
  Log(tag + ": stopped (" + ck.history.stop_reason + ") after " +
      std::to_string(ck.history.epochs.size()) + " epochs, best epoch " +
      std::to_string(ck.history.best_epoch));
  return ck;
}

void RunTrain(const ExperimentConfig& config) {
  RequireFile(config.manifest, "manifest");
  const Manifest manifest = LoadManifest(config.manifest);
  const std::optional<Checkpoint> init = LoadInit(config);
  const SplitPlan plan = MakeDatabaseSplit(manifest, config.fractions, config.seed);
  Checkpoint ck = TrainOnPlan(manifest, plan, config, init ? &*init : nullptr, "train");
  fs::create_directories(config.output_dir);
  SaveModel(ck, config.output_dir);
  WriteJson(PlanToJson(plan), config.output_dir / "split.json");
  Log("wrote " + (config.output_dir / "model.ckpt").string());
}

void RunPersonalize(const ExperimentConfig& config) {
  RequireFile(config.manifest, "manifest");
  if (config.model_init.kind == ModelInit::Kind::kScratch)
    throw ValidationError("personalize needs model_init finetune:<ckpt> or "
                          "personalize:<ckpt>");
  const Manifest manifest = LoadManifest(config.manifest);
  const std::vector<std::string> speakers = PersonalSpeakers(manifest, config);
  std::vector<std::array<SplitPlan, 2>> plans;
  for (const auto& s : speakers) plans.push_back(MakePersonalSplits(manifest, s));
  const Checkpoint init = *LoadInit(config);
  for (const auto& pair : plans)
    for (size_t i = 0; i < pair.size(); ++i) {
      const Checkpoint ck = TrainOnPlan(manifest, pair[i], config, &init, pair[i].name);
      const fs::path dir = config.output_dir / "personal" / pair[i].speaker_id /
                           (i == 0 ? "A" : "B");
      SaveModel(ck, dir);
      WriteJson(PlanToJson(pair[i]), dir / "split.json");
    }
}

void RunMix(const ExperimentConfig& config) {
  RequireFile(config.manifest, "manifest");
  RequireFile(config.noise_manifest, "noise_manifest");
  const Manifest manifest = LoadManifest(config.manifest);
  const NoiseManifest noises = LoadNoiseManifest(config.noise_manifest);
  if (noises.records.empty()) throw ValidationError("noise manifest is empty");
  std::map<std::string, WaveformBuffer> noise_audio;
  for (const auto& r : noises.records)
    noise_audio[r.noise_id] = ResampleTo16k(ReadWav(noises.ResolvePath(r)));

  fs::create_directories(config.output_dir / "noisy");
  std::vector<MixtureSpec> specs;
  size_t clipped = 0;
  for (const auto& rec : manifest.records) {
    MixtureSpec spec = PlanMixture(rec, noises, config.seed);
    spec.noisy_path = "noisy/" + rec.utterance_id + ".wav";
    const Mixture mix = RealizeMixture(spec, LoadUtterance(manifest, rec),
                                       noise_audio.at(spec.noise_id));
    clipped += WriteWav(mix.noisy, config.output_dir / spec.noisy_path);
    specs.push_back(std::move(spec));
  }
  SaveMixtureList(specs, config.output_dir / "mixtures.tsv");
  if (clipped > 0) Log("warning: " + std::to_string(clipped) + " samples clipped");
  Log("wrote " + std::to_string(specs.size()) + " mixtures");
}

void RunEnhance(const ExperimentConfig& config, const fs::path& checkpoint,
                const fs::path& input, const fs::path& output,
                const std::optional<fs::path>& reference, bool diagnostics) {
  RequireFile(checkpoint, "checkpoint");
  RequireFile(input, "input");
  if (reference) RequireFile(*reference, "reference");
  if (output.empty()) throw ValidationError("output path is empty");
  const fs::path out_path = output.is_absolute() ? output : config.output_dir / output;
  const fs::path rel = out_path.lexically_normal().lexically_relative(
      config.output_dir.lexically_normal());
  if (rel.empty() || *rel.begin() == "..")
    throw ValidationError("output must be inside the output directory " +
                          config.output_dir.string());

  const Checkpoint model = LoadCheckpoint(checkpoint);
  const WaveformBuffer noisy = ResampleTo16k(ReadWav(input));
  std::optional<WaveformBuffer> clean;
  if (reference) {
    clean = ResampleTo16k(ReadWav(*reference));
    if (clean->size() != noisy.size())
      throw ValidationError("reference and input lengths differ");
  }
  McemConfig mcem = config.mcem;
  mcem.seed = DeriveSeed(config.seed, Fnv1a64(input.filename().string()), kMcemSalt);
  const EnhanceResult r = EnhanceWaveform(noisy, model, mcem);

  fs::create_directories(out_path.parent_path());
  const size_t clipped = WriteWav(r.enhanced, out_path);
  if (clipped > 0) Log("warning: " + std::to_string(clipped) + " samples clipped");
  if (diagnostics) {
    json d{{"input", input.string()},
           {"checkpoint", CheckpointId(model)},
           {"acceptance_rate", r.acceptance_rate},
           {"loglik_trace", r.loglik_trace}};
    if (clean) {
      const double s0 = SiSdr(*clean, noisy), s1 = SiSdr(*clean, r.enhanced);
      const double f0 = Fwssnr(*clean, noisy), f1 = Fwssnr(*clean, r.enhanced);
      auto num = [](double v) -> json {
        if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
        return v;
      };
      d["si_sdr_noisy"] = num(s0);
      d["si_sdr_enhanced"] = num(s1);
      d["delta_si_sdr"] = num(MetricDelta(s0, s1));
      d["fwssnr_noisy"] = f0;
      d["fwssnr_enhanced"] = f1;
      d["delta_fwssnr"] = MetricDelta(f0, f1);
      Log("delta si-sdr " + Fixed(MetricDelta(s0, s1)) + " dB, delta fwssnr " +
          Fixed(MetricDelta(f0, f1)) + " dB");
    }
    fs::path dpath = out_path;
    dpath += ".diagnostics.json";
    WriteJson(d, dpath);
  }
}

void RunEvaluate(const ExperimentConfig& config, const fs::path& checkpoint) {
  RequireFile(checkpoint, "checkpoint");
  RequireFile(config.manifest, "manifest");
  RequireFile(config.noise_manifest, "noise_manifest");
  const Manifest manifest = LoadManifest(config.manifest);
  const NoiseManifest noises = LoadNoiseManifest(config.noise_manifest);
  const Checkpoint model = LoadCheckpoint(checkpoint);
  std::vector<MixtureSpec> specs;
  if (!config.mixtures.empty()) {
    specs = LoadMixtureList(config.mixtures);
  } else {
    for (const auto& r : manifest.records)
      specs.push_back(PlanMixture(r, noises, config.seed));
  }
  if (config.max_test_utterances > 0 &&
      specs.size() > static_cast<size_t>(config.max_test_utterances))
    specs.resize(static_cast<size_t>(config.max_test_utterances));
  for (const auto& s : specs) {
    manifest.Find(s.clean_utterance_id);
    noises.Find(s.noise_id);
  }
  fs::create_directories(config.output_dir);
  SaveReport(EvaluateMixtures(manifest, noises, specs, model, config, "evaluate"),
             config.output_dir);
}

void RunExperiment(const ExperimentConfig& config) {
  const std::optional<Checkpoint> init = LoadInit(config);
  const Checkpoint* init_ptr = init ? &*init : nullptr;
  RequireFile(config.noise_manifest, "noise_manifest");
  const NoiseManifest noises = LoadNoiseManifest(config.noise_manifest);

  switch (config.split_kind) {
    case SplitKind::kCvFold: {
      RequireFile(config.manifest, "manifest");
      const Manifest manifest = LoadManifest(config.manifest);
      const auto folds = MakeCvFolds(manifest, config.folds, config.fractions, config.seed);
      const size_t n = config.max_folds > 0
                           ? std::min(folds.size(), static_cast<size_t>(config.max_folds))
                           : folds.size();
      std::vector<MetricRow> all;
      for (size_t i = 0; i < n; ++i) {
        const SplitPlan& plan = folds[i];
        const fs::path dir = config.output_dir / plan.name;
        const Checkpoint ck = TrainOnPlan(manifest, plan, config, init_ptr, plan.name);
        SaveModel(ck, dir);
        WriteJson(PlanToJson(plan), dir / "split.json");
        auto rows = EvaluateUtterances(manifest, noises,
                                       Limit(plan.test, config.max_test_utterances),
                                       ck, config, plan.name);
        SaveReport(rows, dir);
        all.insert(all.end(), rows.begin(), rows.end());
      }
      SaveReport(all, config.output_dir);
      break;
    }
    case SplitKind::kPersonal: {
      RequireFile(config.manifest, "manifest");
      const Manifest manifest = LoadManifest(config.manifest);
      std::vector<std::array<SplitPlan, 2>> plans;
      for (const auto& s : PersonalSpeakers(manifest, config))
        plans.push_back(MakePersonalSplits(manifest, s));
      std::vector<MetricRow> all;
      for (const auto& pair : plans)
        for (size_t i = 0; i < pair.size(); ++i) {
          const SplitPlan& plan = pair[i];
          const fs::path dir = config.output_dir / "personal" / plan.speaker_id /
                               (i == 0 ? "A" : "B");
          const Checkpoint ck = TrainOnPlan(manifest, plan, config, init_ptr, plan.name);
          SaveModel(ck, dir);
          WriteJson(PlanToJson(plan), dir / "split.json");
          auto rows = EvaluateUtterances(manifest, noises,
                                         Limit(plan.test, config.max_test_utterances),
                                         ck, config, plan.name);
          all.insert(all.end(), rows.begin(), rows.end());
        }
      SaveReport(all, config.output_dir);
      break;
    }
    case SplitKind::kCrossDatabase: {
      if (config.databases.empty())
        throw ValidationError("cross-database protocol needs a databases list");
      std::vector<Manifest> manifests;
      std::vector<SplitPlan> splits;
      for (const auto& db : config.databases) {
        manifests.push_back(LoadManifest(db.manifest));
        splits.push_back(MakeDatabaseSplit(manifests.back(), config.fractions, config.seed));
        splits.back().name = db.name;
      }
      json grid = json::array();
      std::ofstream csv;
      fs::create_directories(config.output_dir);
      csv.open(config.output_dir / "grid.csv");
      csv << "train_set,test_set,n,delta_si_sdr_mean,delta_si_sdr_sem,"
             "delta_fwssnr_mean,delta_fwssnr_sem\n";
      for (size_t a = 0; a < manifests.size(); ++a) {
        const std::string& train_name = config.databases[a].name;
        const Checkpoint ck =
            TrainOnPlan(manifests[a], splits[a], config, init_ptr, "train:" + train_name);
        SaveModel(ck, config.output_dir / train_name);
        WriteJson(PlanToJson(splits[a]), config.output_dir / train_name / "split.json");
        for (size_t b = 0; b < manifests.size(); ++b) {
          const std::string& test_name = config.databases[b].name;
          const std::string cell = train_name + "__" + test_name;
          auto rows = EvaluateUtterances(manifests[b], noises,
                                         Limit(splits[b].test, config.max_test_utterances),
                                         ck, config, cell);
          const MetricsReport report = BuildReport(rows);
          SaveReport(rows, config.output_dir / cell);
          const GroupAggregate& o = *report.Find("overall");
          json entry{{"train_set", train_name},
                     {"test_set", test_name},
                     {"n", o.delta_si_sdr.n},
                     {"delta_si_sdr", {{"mean", o.delta_si_sdr.mean}, {"sem", o.delta_si_sdr.sem}}},
                     {"delta_fwssnr", {{"mean", o.delta_fwssnr.mean}, {"sem", o.delta_fwssnr.sem}}}};
          if (o.delta_pesq)
            entry["delta_pesq"] = {{"mean", o.delta_pesq->mean}, {"sem", o.delta_pesq->sem}};
          grid.push_back(entry);
          csv << train_name << ',' << test_name << ',' << o.delta_si_sdr.n << ','
              << o.delta_si_sdr.mean << ',' << o.delta_si_sdr.sem << ','
              << o.delta_fwssnr.mean << ',' << o.delta_fwssnr.sem << '\n';
        }
      }
      WriteJson(grid, config.output_dir / "grid.json");
      break;
    }
  }
  Log("experiment finished; reports under " + config.output_dir.string());
}

}  // namespace vaenmf
