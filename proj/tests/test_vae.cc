// Copyright 2026 The vaenmf Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "doctest.h"
#include "test_support.h"
#include "vaenmf/train.h"
#include "vaenmf/vae.h"

using namespace vaenmf;
using namespace vaenmf::testing;

namespace {

Matrix PositiveFrames(int f, int t, uint64_t seed) {
  Rng rng(seed);
  return RandomNormal(f, t, rng).array().exp();
}

VaeParams SmallNet(uint64_t seed, const VaeShape& shape = {8, 2, 4}) {
  Rng rng(seed);
  VaeParams p = VaeParams::GlorotUniform(shape, rng);
  // Non-zero biases so their gradients are exercised too.
  for (DenseLayer* l : p.layers()) l->bias = 0.1 * RandomNormal(l->bias.size(), 1, rng);
  return p;
}

TrainConfig TinyConfig(int epochs) {
  TrainConfig c;
  c.shape = {8, 2, 4};
  c.batch_size = 16;
  c.learning_rate = 1e-2;
  c.max_epochs = epochs;
  c.seed = 11;
  return c;
}

}  // namespace

TEST_CASE("analytic gradients match central differences") {
  const VaeParams p = SmallNet(1);
  const Matrix x = PositiveFrames(8, 5, 2);
  Rng rng(3);
  const Matrix noise = RandomNormal(2, 5, rng);
  for (double e : GradientErrors(p, x, noise)) CHECK(e < 1e-4);
  for (double e : GradientErrors(p, x, noise, {true, false})) CHECK(e < 1e-4);
}

TEST_CASE("gradients accumulate over frames") {
  const VaeParams p = SmallNet(4);
  const Matrix x = PositiveFrames(8, 6, 5);
  Rng rng(6);
  const Matrix noise = RandomNormal(2, 6, rng);
  const ElboResult all = ElboLoss(p, x, noise);
  const ElboResult a = ElboLoss(p, x.leftCols(2), noise.leftCols(2));
  const ElboResult b = ElboLoss(p, x.rightCols(4), noise.rightCols(4));
  CHECK(all.loss == doctest::Approx(a.loss + b.loss).epsilon(1e-12));
  for (size_t l = 0; l < 5; ++l) {
    const Matrix sum = a.gradient.layers()[l]->weight + b.gradient.layers()[l]->weight;
    CHECK((all.gradient.layers()[l]->weight - sum).norm() <=
          1e-10 * (1.0 + sum.norm()));
  }
}

TEST_CASE("loss decomposition and itakura-saito identity") {
  const VaeParams p = SmallNet(7);
  const Matrix x = PositiveFrames(8, 4, 8);
  Rng rng(9);
  const Matrix noise = RandomNormal(2, 4, rng);
  const ElboResult r = ElboLoss(p, x, noise);
  CHECK(r.loss == doctest::Approx(r.reconstruction + r.kl).epsilon(1e-14));

  // Recompute the reconstruction through the public pieces.
  const LatentBatch q = Encode(p, x);
  const Matrix z = q.mean.array() + (0.5 * q.logvar.array()).exp() * noise.array();
  const Matrix v = Decode(p, z);
  const double rec = (x.array() / v.array() + v.array().log()).sum();
  CHECK(r.reconstruction == doctest::Approx(rec).epsilon(1e-12));
  // x/v + ln v = IS(x, v) + ln x + 1.
  double is = 0.0;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const double ratio = x.data()[i] / v.data()[i];
    is += ratio - std::log(ratio) - 1.0 + std::log(x.data()[i]) + 1.0;
  }
  CHECK(rec == doctest::Approx(is).epsilon(1e-12));
  CHECK(r.kl == doctest::Approx(GaussianKl(q.mean, q.logvar)).epsilon(1e-12));
}

TEST_CASE("gaussian kl matches quadrature and is non-negative") {
  const double mu = 0.7, logvar = -0.4;
  const double s2 = std::exp(logvar);
  // Trapezoid integral of q ln(q / p) on a wide grid.
  double kl = 0.0;
  const double step = 1e-4;
  for (double z = -12.0; z <= 12.0; z += step) {
    const double lq = -0.5 * std::log(2 * kPi * s2) - (z - mu) * (z - mu) / (2 * s2);
    const double lp = -0.5 * std::log(2 * kPi) - z * z / 2;
    kl += std::exp(lq) * (lq - lp) * step;
  }
  Matrix m(1, 1), lv(1, 1);
  m << mu;
  lv << logvar;
  CHECK(GaussianKl(m, lv) == doctest::Approx(kl).epsilon(1e-8));
  CHECK(GaussianKl(Matrix::Zero(3, 4), Matrix::Zero(3, 4)) == 0.0);
  Rng rng(1);
  for (int i = 0; i < 20; ++i)
    CHECK(GaussianKl(RandomNormal(2, 3, rng), RandomNormal(2, 3, rng)) >= 0.0);
}

TEST_CASE("shapes, positivity and glorot bounds") {
  const VaeShape shape{513, 16, 128};
  Rng rng(5);
  const VaeParams p = VaeParams::GlorotUniform(shape, rng);
  CHECK(p.shape() == shape);
  for (const DenseLayer* l : p.layers()) {
    const double bound = std::sqrt(6.0 / (l->weight.rows() + l->weight.cols()));
    CHECK(l->weight.cwiseAbs().maxCoeff() <= bound);
    CHECK(l->weight.cwiseAbs().maxCoeff() > 0.9 * bound);
    CHECK(l->bias.isZero());
  }
  const Matrix x = PositiveFrames(513, 7, 1);
  const LatentBatch q = Encode(p, x);
  CHECK(q.mean.rows() == 16);
  CHECK(q.mean.cols() == 7);
  const Matrix v = Decode(p, q.mean);
  CHECK(v.rows() == 513);
  CHECK((v.array() > 0.0).all());
  Rng a(9), b(9);
  CHECK(VaeParams::GlorotUniform(shape, a).encoder_hidden.weight ==
        VaeParams::GlorotUniform(shape, b).encoder_hidden.weight);
}

TEST_CASE("non-finite loss names the frame") {
  VaeParams p = SmallNet(2);
  Matrix x = PositiveFrames(8, 3, 3);
  x(4, 2) = std::numeric_limits<double>::infinity();
  Rng rng(1);
  try {
    ElboLoss(p, x, rng);
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(std::string(e.what()).find("frame 2") != std::string::npos);
  }
}

TEST_CASE("plateau scheduler fires halving and stop at the configured epochs") {
  TrainConfig c;  // patience 10, stop 20
  PlateauScheduler s(c);
  std::vector<int> halved, stopped;
  for (int epoch = 1; epoch <= 40; ++epoch) {
    const double loss = epoch <= 5 ? 100.0 - epoch : 95.0;
    const auto e = s.Observe(loss);
    CHECK(e.improved == (epoch <= 5));
    if (e.halve_lr) halved.push_back(epoch);
    if (e.stop) {
      stopped.push_back(epoch);
      break;
    }
  }
  // 11th non-improving epoch halves, 20th stops.
  CHECK(halved == std::vector<int>{16});
  CHECK(stopped == std::vector<int>{25});

  PlateauScheduler tol(c);
  tol.Observe(1000.0);
  CHECK_FALSE(tol.Observe(1000.0 - 1e-4).improved);  // within 1e-6 relative
  CHECK(tol.Observe(1000.0 - 2e-3).improved);

  PlateauScheduler improving(c);
  for (int epoch = 1; epoch <= 100; ++epoch) {
    const auto e = improving.Observe(1.0 / epoch);
    CHECK(e.improved);
    CHECK_FALSE(e.stop);
  }
}

TEST_CASE("adam first step moves each weight by about the learning rate") {
  TrainConfig c;
  const VaeShape shape{3, 1, 2};
  VaeParams p = VaeParams::Zeros(shape);
  VaeParams g = VaeParams::Zeros(shape);
  g.encoder_hidden.weight(0, 0) = 0.5;
  g.encoder_hidden.weight(1, 2) = -3.0;
  AdamOptimizer adam(shape, c);
  adam.Step(p, g, 1e-3);
  CHECK(p.encoder_hidden.weight(0, 0) == doctest::Approx(-1e-3 * 0.5 / (0.5 + 1e-8)));
  CHECK(p.encoder_hidden.weight(1, 2) == doctest::Approx(1e-3 * 3.0 / (3.0 + 1e-8)));
  CHECK(p.encoder_hidden.weight(0, 1) == 0.0);
}

TEST_CASE("training improves validation loss and is deterministic") {
  const Matrix train = PositiveFrames(8, 400, 21);
  const Matrix val = PositiveFrames(8, 80, 22);
  const Checkpoint a = Train(train, val, TinyConfig(15), {}, nullptr, "scratch");
  const Checkpoint b = Train(train, val, TinyConfig(15), {}, nullptr, "scratch");
  REQUIRE(a.history.epochs.size() == 15);
  CHECK(a.history.stop_reason == "max_epochs");
  double best = a.history.epochs[0].validation_loss;
  for (const auto& e : a.history.epochs) best = std::min(best, e.validation_loss);
  CHECK(best < a.history.epochs[0].validation_loss);
  CHECK(a.history.epochs[static_cast<size_t>(a.history.best_epoch - 1)].validation_loss == best);
  // Returned parameters are those of the best epoch.
  CHECK(ValidationLoss(a.params, val, DeriveSeed(TinyConfig(15).seed, 2)) ==
        doctest::Approx(best).epsilon(1e-12));
  for (size_t l = 0; l < 5; ++l)
    CHECK(a.params.layers()[l]->weight == b.params.layers()[l]->weight);
  TrainConfig other = TinyConfig(15);
  other.seed = 12;
  const Checkpoint c = Train(train, val, other, {}, nullptr, "scratch");
  CHECK(c.params.encoder_hidden.weight != a.params.encoder_hidden.weight);
}

TEST_CASE("training on a frozen plateau halves the rate and stops early") {
  const Matrix train = PositiveFrames(8, 64, 31);
  const Matrix val = PositiveFrames(8, 16, 32);
  TrainConfig c = TinyConfig(100);
  c.learning_rate = 1e-300;  // weights never move, so validation is flat
  const Checkpoint ck = Train(train, val, c, {}, nullptr, "scratch");
  const auto& h = ck.history.epochs;
  REQUIRE(h.size() == 21);
  CHECK(ck.history.stop_reason == "early_stop");
  CHECK(ck.history.best_epoch == 1);
  for (const auto& e : h) CHECK(e.lr_halved == (e.epoch == 12));
  CHECK(h[11].learning_rate == 1e-300);
  CHECK(h[12].learning_rate == 1e-300 * 0.5);
}

TEST_CASE("fine-tuning with zero epochs returns the initial weights") {
  const Matrix train = PositiveFrames(8, 64, 41);
  const Matrix val = PositiveFrames(8, 16, 42);
  const Checkpoint base = Train(train, val, TinyConfig(2), {}, nullptr, "scratch");
  const Checkpoint ft = Train(train, val, TinyConfig(0), {}, &base, "finetune:x");
  CHECK(ft.history.epochs.empty());
  CHECK(ft.provenance == "finetune:x");
  for (size_t l = 0; l < 5; ++l) {
    CHECK(ft.params.layers()[l]->weight == base.params.layers()[l]->weight);
    CHECK(ft.params.layers()[l]->bias == base.params.layers()[l]->bias);
  }
  TrainConfig wrong = TinyConfig(1);
  const Matrix other = PositiveFrames(9, 16, 1);
  CHECK_THROWS_AS(Train(other, other, wrong, {}, &base, "finetune"), ValidationError);
}

TEST_CASE("training rejects empty sets and bad configs") {
  const Matrix x = PositiveFrames(8, 10, 1);
  CHECK_THROWS_AS(Train(Matrix(8, 0), x, TinyConfig(1), {}, nullptr, ""), ValidationError);
  CHECK_THROWS_AS(Train(x, Matrix(8, 0), TinyConfig(1), {}, nullptr, ""), ValidationError);
  TrainConfig c = TinyConfig(1);
  c.batch_size = 0;
  CHECK_THROWS_AS(c.Validate(), ValidationError);
  c = TinyConfig(1);
  c.lr_factor = 1.0;
  CHECK_THROWS_AS(c.Validate(), ValidationError);
}

TEST_CASE("checkpoint round trip is exact and ids are stable") {
  ScratchDir dir("ckpt");
  const Matrix train = PositiveFrames(8, 64, 51);
  const Checkpoint ck = Train(train, train, TinyConfig(3), {}, nullptr, "scratch");
  SaveCheckpoint(ck, dir / "a.ckpt");
  const Checkpoint back = LoadCheckpoint(dir / "a.ckpt");
  for (size_t l = 0; l < 5; ++l) {
    CHECK(back.params.layers()[l]->weight == ck.params.layers()[l]->weight);
    CHECK(back.params.layers()[l]->bias == ck.params.layers()[l]->bias);
  }
  CHECK(back.stft == ck.stft);
  CHECK(back.provenance == "scratch");
  CHECK(back.train_config.seed == ck.train_config.seed);
  CHECK(back.train_config.learning_rate == ck.train_config.learning_rate);
  CHECK(back.history.epochs.size() == 3);
  CHECK(back.history.epochs[1].validation_loss == ck.history.epochs[1].validation_loss);
  CHECK(CheckpointId(back) == CheckpointId(ck));
  CHECK(CheckpointId(ck).size() == 16);
  SaveCheckpoint(back, dir / "b.ckpt");
  CHECK(ReadBytes(dir / "a.ckpt") == ReadBytes(dir / "b.ckpt"));
}

TEST_CASE("corrupt checkpoints are rejected") {
  ScratchDir dir("ckptbad");
  const Matrix train = PositiveFrames(8, 32, 61);
  const Checkpoint ck = Train(train, train, TinyConfig(1), {}, nullptr, "scratch");
  SaveCheckpoint(ck, dir / "good.ckpt");
  std::string bytes = ReadBytes(dir / "good.ckpt");

  std::string bad_magic = bytes;
  bad_magic[0] = 'X';
  std::ofstream(dir / "magic.ckpt", std::ios::binary) << bad_magic;
  try {
    LoadCheckpoint(dir / "magic.ckpt");
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(std::string(e.what()).find("magic") != std::string::npos);
  }

  std::string bad_version = bytes;
  bad_version[8] = 99;
  std::ofstream(dir / "version.ckpt", std::ios::binary) << bad_version;
  try {
    LoadCheckpoint(dir / "version.ckpt");
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(std::string(e.what()).find("version") != std::string::npos);
  }

  std::ofstream(dir / "short.ckpt", std::ios::binary) << bytes.substr(0, bytes.size() / 2);
  CHECK_THROWS_AS(LoadCheckpoint(dir / "short.ckpt"), Error);
  CHECK_THROWS_AS(LoadCheckpoint(dir / "missing.ckpt"), Error);
}
