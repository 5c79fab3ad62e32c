// Copyright 2026 The vaenmf Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)
//
// Acceptance suite. Prints one PASS/FAIL line per criterion and exits
// nonzero if any criterion fails. Pass criterion numbers as arguments to run
// a subset, e.g. `acceptance 6 7`.

#include <sys/wait.h>

#include <chrono>
#include <cstdarg>
#include <cstdio>
#include <functional>
#include <map>
#include <set>
#include <sstream>

#include "test_support.h"
#include "vaenmf/experiment.h"
#include "vaenmf/synth.h"

using namespace vaenmf;
using namespace vaenmf::testing;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string Fmt(const char* format, ...) __attribute__((format(printf, 1, 2)));
std::string Fmt(const char* format, ...) {
  char buf[512];
  va_list args;
  va_start(args, format);
  std::vsnprintf(buf, sizeof(buf), format, args);
  va_end(args);
  return buf;
}

fs::path WorkDir() {
  static ScratchDir dir("acceptance");
  return dir.path();
}

// ---------------------------------------------------------------------------
// Shared toy fixture: three synthetic speakers with about five minutes of
// audio, and a VAE trained on it. The last sentence of every speaker is held
// out and used as the enhancement fixture.

struct ToyFixture {
  ToyCorpus corpus;
  SplitPlan plan;
  std::vector<std::string> held_out;
  Checkpoint model;
  double train_seconds = 0.0;
};

ExperimentConfig ToyExperiment() {
  ExperimentConfig c;
  c.seed = 20;
  c.output_dir = WorkDir() / "runs";
  c.train.max_epochs = 200;
  return c;
}

const ToyFixture& Toy() {
  static const ToyFixture fixture = [] {
    ToyFixture f;
    ToyCorpusConfig cc;
    cc.speakers_a = 3;
    cc.sentences = 10;
    cc.sentence_s = 2.0;
    cc.read_text_s = 30.0;
    cc.monologue_s = 50.0;
    cc.speaker_prefix = "toy";
    cc.seed = 7;
    f.corpus = WriteToyCorpus(cc, WorkDir() / "toy");
    f.plan.kind = SplitKind::kCvFold;
    f.plan.name = "toy";
    f.plan.validation_frame_fraction = 0.1;
    for (const auto& r : f.corpus.manifest.records) {
      if (r.utterance_id.ends_with("_s10"))
        f.held_out.push_back(r.utterance_id);
      else
        f.plan.train.push_back(r.utterance_id);
    }
    const auto start = std::chrono::steady_clock::now();
    f.model = TrainOnPlan(f.corpus.manifest, f.plan, ToyExperiment(), nullptr, "toy");
    f.train_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return f;
  }();
  return fixture;
}

struct NoisyFixture {
  WaveformBuffer clean, noise, noisy;
};

// Held-out toy sentence plus white noise at 0 dB.
NoisyFixture WhiteNoiseFixture(const std::string& utterance_id) {
  const ToyFixture& toy = Toy();
  NoisyFixture f;
  f.clean = LoadUtterance(toy.corpus.manifest, toy.corpus.manifest.Find(utterance_id));
  Rng rng(DeriveSeed(99, Fnv1a64(utterance_id)));
  const Mixture m = SynthesizeMixture(f.clean, WhiteNoise(f.clean.size(), rng), 0.0, rng);
  f.noise = m.scaled_noise;
  f.noisy = m.noisy;
  return f;
}

// ---------------------------------------------------------------------------

Outcome StftRoundTrip() {
  const WaveformBuffer x = RandomSignal(16000, 1);
  const WaveformBuffer y = Istft(Stft(x));
  double num = 0.0, den = 0.0;
  for (size_t i = 0; i < x.size(); ++i) {
    num += (y.samples[i] - x.samples[i]) * (y.samples[i] - x.samples[i]);
    den += x.samples[i] * x.samples[i];
  }
  const double err = std::sqrt(num / den);
  return {y.size() == x.size() && err < 1e-10, Fmt("relative rms error %.3g", err)};
}

Outcome GradientCheck() {
  Rng rng(5);
  VaeParams p = VaeParams::GlorotUniform({8, 2, 4}, rng);
  for (DenseLayer* l : p.layers()) l->bias = 0.1 * RandomNormal(l->bias.size(), 1, rng);
  const Matrix x = RandomNormal(8, 6, rng).array().exp();
  const Matrix eps = RandomNormal(2, 6, rng);
  const auto errors = GradientErrors(p, x, eps);
  const double worst = *std::max_element(errors.begin(), errors.end());
  return {worst < 1e-4, Fmt("worst block relative error %.3g", worst)};
}

Outcome TrainingSanity() {
  const ToyFixture& toy = Toy();
  const auto& h = toy.model.history.epochs;
  double best = h.front().validation_loss;
  for (const auto& e : h) best = std::min(best, e.validation_loss);
  const bool improves = best < h.front().validation_loss;
  double audio_s = 0.0;
  for (const auto& r : toy.corpus.manifest.records) audio_s += r.duration_s;

  // Crafted plateau: with a vanishing learning rate the validation loss is
  // flat after epoch 1, so the 11th non-improving epoch halves the rate and
  // the 20th stops training.
  Rng rng(8);
  const Matrix frames = RandomNormal(16, 200, rng).array().exp();
  TrainConfig c;
  c.shape = {16, 2, 8};
  c.learning_rate = 1e-300;
  c.max_epochs = 100;
  const Checkpoint flat = Train(frames.leftCols(160), frames.rightCols(40), c, {}, nullptr,
                                "scratch");
  std::vector<int> halved;
  for (const auto& e : flat.history.epochs)
    if (e.lr_halved) halved.push_back(e.epoch);
  const bool schedule = halved == std::vector<int>{1 + c.lr_patience + 1} &&
                        flat.history.epochs.size() ==
                            static_cast<size_t>(1 + c.early_stop_patience) &&
                        flat.history.stop_reason == "early_stop";

  // The scheduler on its own: five improving epochs, then flat.
  PlateauScheduler s(c);
  int halve_at = 0, stop_at = 0;
  for (int epoch = 1; epoch <= 60 && stop_at == 0; ++epoch) {
    const auto e = s.Observe(epoch <= 5 ? 100.0 - epoch : 95.0);
    if (e.halve_lr && halve_at == 0) halve_at = epoch;
    if (e.stop) stop_at = epoch;
  }
  const bool direct = halve_at == 16 && stop_at == 25;

  return {improves && schedule && direct,
          Fmt("%zu epochs (%s), val %.1f -> best %.1f, %.0f s of audio, trained in %.0f s; "
              "plateau: halved at epoch %d, stopped after %zu epochs",
              h.size(), toy.model.history.stop_reason.c_str(), h.front().validation_loss, best,
              audio_s,
              toy.train_seconds, halved.empty() ? -1 : halved.front(),
              flat.history.epochs.size())};
}

// One full EM iteration whose E-step cannot move (vanishing proposal), on a
// mixture whose power equals the model variance exactly.
Outcome MStepFixedPoint() {
  Rng rng(4);
  const Eigen::Index t = 40;
  const VaeParams vae = VaeParams::GlorotUniform({513, 16, 128}, rng);
  InferenceState s;
  s.nmf = InitNmf(513, t, 8, rng);
  s.gain = (RandomNormal(t, 1, rng).array() * 0.3).exp();
  s.z_chain = RandomNormal(16, t, rng);
  s.chain_speech = Decode(vae, s.z_chain);
  const PowerSpectrogram y = MixtureVariance(s.gain, s.chain_speech, NoiseVariance(s.nmf));
  McemConfig c;
  c.mh_iters_per_estep = 1;
  c.burn_in = 0;
  c.n_samples = 1;
  c.proposal_std = 1e-300;
  InferenceState chain = s;
  const EStepResult e = EStep(chain, y, vae, c, 0);
  const InferenceState out = MStep(chain, y, e.speech_variance);
  const double change = std::max({MaxRelDiff(out.gain, s.gain), MaxRelDiff(out.nmf.w, s.nmf.w),
                                  MaxRelDiff(out.nmf.h, s.nmf.h)});
  return {change < 1e-12, Fmt("max relative change %.3g", change)};
}

Outcome NmfMonotonicity() {
  Rng rng(6);
  const Eigen::Index f = 513, t = 60;
  // Power of complex white gaussian noise shaped by a smooth envelope.
  PowerSpectrogram y(f, t);
  NormalSampler normal;
  for (Eigen::Index j = 0; j < t; ++j)
    for (Eigen::Index i = 0; i < f; ++i) {
      const double env = 1.0 + std::cos(0.01 * static_cast<double>(i));
      const double re = normal(rng), im = normal(rng);
      y(i, j) = env * (re * re + im * im);
    }
  InferenceState s;
  s.gain = Vector::Ones(t);
  s.nmf = InitNmf(f, t, 8, rng);
  const std::vector<Matrix> zero_speech = {Matrix::Zero(f, t)};
  double prev = ItakuraSaito(y, NoiseVariance(s.nmf));
  const double first = prev;
  double worst = -1e300;
  for (int it = 0; it < 50; ++it) {
    s = MStep(s, y, zero_speech);
    const double d = ItakuraSaito(y, NoiseVariance(s.nmf));
    worst = std::max(worst, (d - prev) / prev);
    prev = d;
  }
  return {worst <= 1e-8, Fmt("divergence %.1f -> %.1f, worst relative step %+.3g", first, prev, worst)};
}

Outcome McemTrend() {
  const ToyFixture& toy = Toy();
  const NoisyFixture fx = WhiteNoiseFixture(toy.held_out.front());
  McemConfig c;
  c.n_em_iters = 50;
  c.seed = 61;
  const EnhancementOutput out = RunMcem(Stft(fx.noisy, toy.model.stft), toy.model.params, c);
  const auto& tr = out.loglik_trace;
  const double range = *std::max_element(tr.begin(), tr.end()) - *std::min_element(tr.begin(), tr.end());
  double worst_drop = 0.0;
  for (size_t i = 1; i < tr.size(); ++i) worst_drop = std::max(worst_drop, tr[i - 1] - tr[i]);
  const bool trend = tr.size() == 50 && worst_drop <= 0.005 * range;
  const bool acceptance = out.acceptance_rate > 0.1 && out.acceptance_rate < 0.9;
  return {trend && acceptance,
          Fmt("loglik %.1f -> %.1f, worst drop %.3g (%.3g%% of range), acceptance %.3f",
              tr.front(), tr.back(), worst_drop, 100.0 * worst_drop / range, out.acceptance_rate)};
}

Outcome EnhancementFloor() {
  const ToyFixture& toy = Toy();
  bool pass = true;
  std::ostringstream detail;
  for (const auto& id : toy.held_out) {
    const NoisyFixture fx = WhiteNoiseFixture(id);
    const StftConfig& stft = toy.model.stft;
    const ComplexSpectrogram y = Stft(fx.noisy, stft);
    const PowerSpectrogram ps = Power(Stft(fx.clean, stft));
    const PowerSpectrogram pn = Power(Stft(fx.noise, stft));
    ComplexSpectrogram oracle = y;
    oracle.data = y.data.cwiseProduct(
        (ps.array() / (ps.array() + pn.array()).max(kVarianceFloor)).matrix().cast<Complex>());
    const double noisy_sdr = SiSdr(fx.clean, fx.noisy);
    const double oracle_gain = SiSdr(fx.clean, Istft(oracle)) - noisy_sdr;

    McemConfig c;
    c.seed = DeriveSeed(71, Fnv1a64(id));
    const WaveformBuffer enhanced = EnhanceWaveform(fx.noisy, toy.model, c).enhanced;
    const double d_sdr = SiSdr(fx.clean, enhanced) - noisy_sdr;
    const double d_fw = Fwssnr(fx.clean, enhanced) - Fwssnr(fx.clean, fx.noisy);
    pass = pass && oracle_gain >= 5.0 && d_sdr > 0.0 && d_fw > 0.0;
    detail << id << ": oracle " << Fmt("%+.2f", oracle_gain) << " dB, mcem SI-SDR "
           << Fmt("%+.2f", d_sdr) << " dB, fwSSNR " << Fmt("%+.2f", d_fw) << " dB";
    if (&id != &toy.held_out.back()) detail << "; ";
  }
  return {pass, detail.str()};
}

// Two-population study. P is pretrained on population A only. M_S is
// trained from scratch and M_F fine-tuned from P on a smaller corpus mixing
// both populations. M_P is fine-tuned from P per target speaker on that
// speaker's own recordings (two plans each). All three are scored on the
// same held-out mixtures of unseen population-B target speakers.
Outcome PersonalizationTrend() {
  ExperimentConfig cfg;
  cfg.seed = 80;
  cfg.output_dir = WorkDir() / "trend";
  cfg.train.max_epochs = 200;

  ToyCorpusConfig pre;
  pre.speakers_a = 6;
  pre.speaker_prefix = "pre";
  pre.seed = 81;
  ToyCorpusConfig mixed;
  mixed.speakers_a = 3;
  mixed.speakers_b = 3;
  mixed.speaker_prefix = "mix";
  mixed.seed = 82;
  ToyCorpusConfig target;
  target.speakers_a = 0;
  target.speakers_b = 3;
  target.sentences = 4;
  target.read_text_s = 6.0;
  target.monologue_s = 10.0;
  target.speaker_prefix = "tgt";
  target.seed = 83;
  const ToyCorpus c_pre = WriteToyCorpus(pre, cfg.output_dir / "pre");
  const ToyCorpus c_mix = WriteToyCorpus(mixed, cfg.output_dir / "mixed");
  const ToyCorpus c_tgt = WriteToyCorpus(target, cfg.output_dir / "target");

  auto whole = [](const Manifest& m, const std::string& name) {
    SplitPlan p;
    p.name = name;
    p.validation_frame_fraction = 0.1;
    for (const auto& r : m.records) p.train.push_back(r.utterance_id);
    return p;
  };
  const Checkpoint pretrained =
      TrainOnPlan(c_pre.manifest, whole(c_pre.manifest, "pre"), cfg, nullptr, "pretrain");
  const Checkpoint scratch =
      TrainOnPlan(c_mix.manifest, whole(c_mix.manifest, "mixed"), cfg, nullptr, "scratch");
  const Checkpoint finetuned =
      TrainOnPlan(c_mix.manifest, whole(c_mix.manifest, "mixed"), cfg, &pretrained, "finetune");

  std::map<std::string, std::vector<double>> deltas;
  for (const auto& spk : c_tgt.manifest.Speakers()) {
    for (const SplitPlan& plan : MakePersonalSplits(c_tgt.manifest, spk)) {
      const Checkpoint personal =
          TrainOnPlan(c_tgt.manifest, plan, cfg, &pretrained, plan.name);
      for (const auto& [name, model] :
           {std::pair<std::string, const Checkpoint*>{"scratch", &scratch},
            {"finetuned", &finetuned},
            {"personalized", &personal}}) {
        for (const auto& row :
             EvaluateUtterances(c_tgt.manifest, c_tgt.noises, plan.test, *model, cfg, name))
          deltas[name].push_back(row.delta_si_sdr());
      }
    }
  }
  const double ms = ComputeMeanSem(deltas["scratch"]).mean;
  const double mf = ComputeMeanSem(deltas["finetuned"]).mean;
  const double mp = ComputeMeanSem(deltas["personalized"]).mean;
  return {mp >= mf && mf >= ms,
          Fmt("population B mean delta SI-SDR over %zu mixtures: personalized %+.2f, "
              "fine-tuned %+.2f, scratch %+.2f dB",
              deltas["scratch"].size(), mp, mf, ms)};
}

Outcome MixtureSnr() {
  Rng rng(90);
  double worst = 0.0;
  for (int i = 0; i < 100; ++i) {
    const size_t n = 1000 + rng() % 30000;
    const WaveformBuffer clean = RandomSignal(n, 500 + i, 0.05 + NormalSampler::Uniform(rng));
    const WaveformBuffer noise =
        RandomSignal(500 + rng() % 40000, 900 + i, 0.05 + NormalSampler::Uniform(rng));
    const double snr = -10.0 + 25.0 * NormalSampler::Uniform(rng);
    const Mixture m = SynthesizeMixture(clean, noise, snr, rng);
    WaveformBuffer residual = m.noisy;
    for (size_t k = 0; k < n; ++k) residual.samples[k] -= clean.samples[k];
    const double measured = 10.0 * std::log10(SignalPower(clean) / SignalPower(residual));
    worst = std::max(worst, std::abs(measured - snr));
  }
  return {worst < 0.01, Fmt("worst deviation %.3g dB", worst)};
}

Outcome MetricOracles() {
  // SI-SDR: s + 0.1 u with u orthogonal to s and |u| = |s| is 20 dB.
  const WaveformBuffer s = RandomSignal(16000, 11);
  WaveformBuffer u = RandomSignal(16000, 12);
  double su = 0.0, ss = 0.0;
  for (size_t i = 0; i < s.size(); ++i) {
    su += s.samples[i] * u.samples[i];
    ss += s.samples[i] * s.samples[i];
  }
  for (size_t i = 0; i < s.size(); ++i) u.samples[i] -= su / ss * s.samples[i];
  double uu = 0.0;
  for (double v : u.samples) uu += v * v;
  WaveformBuffer e = s;
  for (size_t i = 0; i < s.size(); ++i) e.samples[i] += 0.1 * std::sqrt(ss / uu) * u.samples[i];
  const double sdr_err = std::abs(SiSdr(s, e) - 20.0);

  // fwSSNR on one 512-sample frame with two bands, evaluated directly.
  const WaveformBuffer ref = RandomSignal(512, 13);
  WaveformBuffer est = RandomSignal(512, 14, 0.1);
  for (size_t i = 0; i < 512; ++i) est.samples[i] += 0.9 * ref.samples[i];
  FwssnrConfig c;
  c.filters = Matrix::Zero(2, 512);
  for (int j = 0; j < 512; ++j) {
    c.filters(0, j) = std::exp(-0.5 * std::pow((j - 60.0) / 25.0, 2));
    c.filters(1, j) = j >= 200 && j < 400 ? 1.0 : 0.0;
  }
  auto bands = [&](const WaveformBuffer& x) {
    std::vector<double> frame(1024, 0.0);
    for (int n = 0; n < 512; ++n)
      frame[static_cast<size_t>(n)] = x.samples[static_cast<size_t>(n)] * 0.5 *
                                      (1.0 - std::cos(2.0 * kPi * (n + 1) / 513.0));
    std::vector<double> mag(512);
    double area = 0.0;
    for (size_t k = 0; k < 512; ++k) area += mag[k] = std::abs(DirectDft(frame, k));
    std::array<double, 2> b{};
    for (size_t k = 0; k < 512; ++k)
      for (int j = 0; j < 2; ++j)
        b[static_cast<size_t>(j)] += c.filters(j, static_cast<Eigen::Index>(k)) * mag[k] / area;
    return b;
  };
  const auto rb = bands(ref), eb = bands(est);
  double num = 0.0, den = 0.0;
  for (size_t j = 0; j < 2; ++j) {
    const double snr = std::clamp(
        10.0 * std::log10(rb[j] * rb[j] / ((rb[j] - eb[j]) * (rb[j] - eb[j]))), -10.0, 35.0);
    num += std::pow(rb[j], 0.2) * snr;
    den += std::pow(rb[j], 0.2);
  }
  const double fw_err = std::abs(Fwssnr(ref, est, c) - num / den);

  const double inf = std::numeric_limits<double>::infinity();
  const bool deltas = MetricDelta(4.2, 4.2) == 0.0 && MetricDelta(inf, inf) == 0.0 &&
                      MetricDelta(-3.0, -3.0) == 0.0;
  return {sdr_err < 1e-9 && fw_err < 1e-9 && deltas,
          Fmt("SI-SDR error %.3g dB, fwSSNR error %.3g dB", sdr_err, fw_err)};
}

int RunCli(const std::string& args) {
  const std::string cmd = std::string(VAENMF_CLI) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

Outcome Determinism() {
  const fs::path dir = WorkDir() / "determinism";
  ToyCorpusConfig cc;
  cc.speakers_a = 2;
  cc.speakers_b = 1;
  cc.sentences = 3;
  cc.read_text_s = 3.0;
  cc.monologue_s = 4.0;
  cc.speaker_prefix = "det";
  const ToyCorpus corpus = WriteToyCorpus(cc, dir / "corpus");
  {
    std::ofstream cfg(dir / "config.json");
    cfg << "{\"seed\": 31, \"output_dir\": \"out\", \"manifest\": \"corpus/manifest.tsv\", "
           "\"noise_manifest\": \"corpus/noise.tsv\", \"train\": {\"max_epochs\": 5}}";
  }
  const std::string cfg = "--config '" + (dir / "config.json").string() + "'";
  bool ran = true;
  for (const char* out : {"a", "b"}) {
    const std::string o = " --out '" + (dir / out).string() + "'";
    ran = ran && RunCli("train " + cfg + o) == 0 && RunCli("mix " + cfg + o) == 0;
  }
  if (!ran) return {false, "a command failed"};
  const bool ckpt = ReadBytes(dir / "a" / "model.ckpt") == ReadBytes(dir / "b" / "model.ckpt");
  const bool mixes =
      ReadBytes(dir / "a" / "mixtures.tsv") == ReadBytes(dir / "b" / "mixtures.tsv");
  return {ckpt && mixes, Fmt("checkpoint %s, mixture list %s", ckpt ? "identical" : "differs",
                             mixes ? "identical" : "differs")};
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria = {
      {"STFT round trip", StftRoundTrip},
      {"VAE gradient check", GradientCheck},
      {"training sanity and plateau schedule", TrainingSanity},
      {"M-step fixed point", MStepFixedPoint},
      {"IS-NMF monotonicity", NmfMonotonicity},
      {"MCEM likelihood trend and acceptance rate", McemTrend},
      {"oracle and MCEM enhancement floor", EnhancementFloor},
      {"personalized >= fine-tuned >= scratch on population B", PersonalizationTrend},
      {"mixture SNR exactness", MixtureSnr},
      {"metric oracles", MetricOracles},
      {"determinism of train and mix", Determinism},
  };
  std::set<int> selected;
  for (int i = 1; i < argc; ++i) selected.insert(std::atoi(argv[i]));

  int failures = 0;
  for (size_t i = 0; i < criteria.size(); ++i) {
    const int number = static_cast<int>(i) + 1;
    if (!selected.empty() && !selected.count(number)) continue;
    const auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    std::printf("criterion %2d %s: %s (%s) [%.1f s]\n", number, o.pass ? "PASS" : "FAIL",
                criteria[i].first, o.detail.c_str(), secs);
    std::fflush(stdout);
    failures += o.pass ? 0 : 1;
  }
  return failures == 0 ? 0 : 1;
}
