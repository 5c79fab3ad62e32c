// Copyright 2026 The vaenmf Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)
//
// Layout (little endian):
//   8 bytes magic "VAENMFCK", u32 version,
//   u32 input_dim F, u32 latent_dim D, u32 hidden_dim,
//   for each layer in VaeParams::kLayerNames order: weight (row-major f64),
//   bias (f64),
//   u64 trailer length, trailer (JSON: train config, stft config, history,
//   provenance).

#include <cstring>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "json.hpp"
#include "vaenmf/train.h"

namespace vaenmf {
namespace {

using nlohmann::json;

template <typename T>
void Put(std::ostream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T Get(std::istream& in, const std::string& name) {
  T v;
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!in) throw Error(name + ": truncated checkpoint");
  return v;
}

template <typename M>
void PutMatrix(std::ostream& out, const M& m) {
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j) Put<double>(out, m(i, j));
}

template <typename M>
void GetMatrix(std::istream& in, M& m, const std::string& name) {
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j) m(i, j) = Get<double>(in, name);
}

json ToJson(const TrainConfig& c) {
  return {{"batch_size", c.batch_size},
          {"learning_rate", c.learning_rate},
          {"adam_beta1", c.adam_beta1},
          {"adam_beta2", c.adam_beta2},
          {"adam_epsilon", c.adam_epsilon},
          {"lr_patience", c.lr_patience},
          {"lr_factor", c.lr_factor},
          {"early_stop_patience", c.early_stop_patience},
          {"max_epochs", c.max_epochs},
          {"plateau_rel_tol", c.plateau_rel_tol},
          {"seed", c.seed},
          {"hidden_dim", c.shape.hidden_dim},
          {"latent_dim", c.shape.latent_dim}};
}

TrainConfig TrainConfigFromJson(const json& j, const VaeShape& shape) {
  TrainConfig c;
  c.batch_size = j.at("batch_size").get<int>();
  c.learning_rate = j.at("learning_rate").get<double>();
  c.adam_beta1 = j.at("adam_beta1").get<double>();
  c.adam_beta2 = j.at("adam_beta2").get<double>();
  c.adam_epsilon = j.at("adam_epsilon").get<double>();
  c.lr_patience = j.at("lr_patience").get<int>();
  c.lr_factor = j.at("lr_factor").get<double>();
  c.early_stop_patience = j.at("early_stop_patience").get<int>();
  c.max_epochs = j.at("max_epochs").get<int>();
  c.plateau_rel_tol = j.at("plateau_rel_tol").get<double>();
  c.seed = j.at("seed").get<uint64_t>();
  c.shape = shape;
  return c;
}

json HistoryToJson(const TrainHistory& h) {
  json epochs = json::array();
  for (const auto& e : h.epochs)
    epochs.push_back({{"epoch", e.epoch},
                      {"train_loss", e.train_loss},
                      {"validation_loss", e.validation_loss},
                      {"learning_rate", e.learning_rate},
                      {"improved", e.improved},
                      {"lr_halved", e.lr_halved}});
  return {{"best_epoch", h.best_epoch},
          {"stop_reason", h.stop_reason},
          {"epochs", epochs}};
}

TrainHistory HistoryFromJson(const json& j) {
  TrainHistory h;
  h.best_epoch = j.at("best_epoch").get<int>();
  h.stop_reason = j.at("stop_reason").get<std::string>();
  for (const auto& e : j.at("epochs"))
    h.epochs.push_back({e.at("epoch").get<int>(),
                        e.at("train_loss").get<double>(),
                        e.at("validation_loss").get<double>(),
                        e.at("learning_rate").get<double>(),
                        e.at("improved").get<bool>(),
                        e.at("lr_halved").get<bool>()});
  return h;
}

void WriteWeights(std::ostream& out, const VaeParams& params) {
  for (const DenseLayer* l : params.layers()) {
    PutMatrix(out, l->weight);
    PutMatrix(out, l->bias);
  }
}

}  // namespace

void SaveCheckpoint(const Checkpoint& ck, const std::filesystem::path& path) {
  const VaeShape s = ck.params.shape();
  std::ostringstream buf(std::ios::binary);
  buf.write(kCheckpointMagic, sizeof(kCheckpointMagic));
  Put<uint32_t>(buf, kCheckpointVersion);
  Put<uint32_t>(buf, static_cast<uint32_t>(s.input_dim));
  Put<uint32_t>(buf, static_cast<uint32_t>(s.latent_dim));
  Put<uint32_t>(buf, static_cast<uint32_t>(s.hidden_dim));
  WriteWeights(buf, ck.params);

  const json meta = {{"train_config", ToJson(ck.train_config)},
                     {"stft",
                      {{"window_len", ck.stft.window_len},
                       {"hop", ck.stft.hop},
                       {"window", ck.stft.window}}},
                     {"history", HistoryToJson(ck.history)},
                     {"provenance", ck.provenance}};
  const std::string text = meta.dump(1);
  Put<uint64_t>(buf, text.size());
  buf.write(text.data(), static_cast<std::streamsize>(text.size()));

  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot create checkpoint " + path.string());
  const std::string bytes = buf.str();
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error("write failed for " + path.string());
}

Checkpoint LoadCheckpoint(const std::filesystem::path& path) {
  const std::string name = path.string();
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open checkpoint " + name);
  char magic[sizeof(kCheckpointMagic)];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kCheckpointMagic, sizeof(magic)) != 0)
    throw Error(name + ": unrecognized checkpoint format (bad magic bytes)");
  const auto version = Get<uint32_t>(in, name);
  if (version != kCheckpointVersion)
    throw Error(name + ": unsupported checkpoint version " +
                std::to_string(version) + " (expected " +
                std::to_string(kCheckpointVersion) + ")");
  VaeShape s;
  s.input_dim = static_cast<int>(Get<uint32_t>(in, name));
  s.latent_dim = static_cast<int>(Get<uint32_t>(in, name));
  s.hidden_dim = static_cast<int>(Get<uint32_t>(in, name));
  if (s.input_dim <= 0 || s.latent_dim <= 0 || s.hidden_dim <= 0 ||
      s.input_dim > (1 << 20) || s.latent_dim > (1 << 16) ||
      s.hidden_dim > (1 << 20))
    throw Error(name + ": corrupt checkpoint dimensions");

  Checkpoint ck;
  ck.params = VaeParams::Zeros(s);
  for (DenseLayer* l : ck.params.layers()) {
    GetMatrix(in, l->weight, name);
    GetMatrix(in, l->bias, name);
  }
  const auto len = Get<uint64_t>(in, name);
  if (len > (1ULL << 30)) throw Error(name + ": corrupt metadata length");
  std::string text(len, '\0');
  in.read(text.data(), static_cast<std::streamsize>(len));
  if (!in) throw Error(name + ": truncated checkpoint metadata");
  try {
    const json meta = json::parse(text);
    ck.train_config = TrainConfigFromJson(meta.at("train_config"), s);
    const auto& st = meta.at("stft");
    ck.stft.window_len = st.at("window_len").get<int>();
    ck.stft.hop = st.at("hop").get<int>();
    ck.stft.window = st.at("window").get<std::string>();
    ck.history = HistoryFromJson(meta.at("history"));
    ck.provenance = meta.at("provenance").get<std::string>();
  } catch (const json::exception& e) {
    throw Error(name + ": corrupt checkpoint metadata: " + e.what());
  }
  if (!ck.params.AllFinite()) throw Error(name + ": non-finite weights");
  return ck;
}

void SaveHistory(const TrainHistory& history, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot create " + path.string());
  out << HistoryToJson(history).dump(2) << '\n';
  if (!out) throw Error("write failed for " + path.string());
}

std::string CheckpointId(const Checkpoint& checkpoint) {
  std::ostringstream buf(std::ios::binary);
  WriteWeights(buf, checkpoint.params);
  std::ostringstream hex;
  hex << std::hex << std::setw(16) << std::setfill('0') << Fnv1a64(buf.str());
  return hex.str();
}

}  // namespace vaenmf
