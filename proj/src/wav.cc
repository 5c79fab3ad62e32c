// Copyright 2026 The vaenmf Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>

#include "vaenmf/dsp.h"

namespace vaenmf {
namespace {

static_assert(std::endian::native == std::endian::little,
              "WAV I/O assumes a little-endian host");

constexpr uint16_t kFormatPcm = 1;
constexpr uint16_t kFormatFloat = 3;
constexpr uint16_t kFormatExtensible = 0xFFFE;

template <typename T>
T Load(const std::vector<char>& bytes, size_t offset) {
  T v;
  std::memcpy(&v, bytes.data() + offset, sizeof(T));
  return v;
}

template <typename T>
void Store(std::ofstream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

}  // namespace

void RequirePipelineRate(const WaveformBuffer& buffer, std::string_view what) {
  if (buffer.sample_rate_hz != kPipelineRate)
    throw ValidationError(std::string(what) + ": expected " +
                          std::to_string(kPipelineRate) + " Hz audio, got " +
                          std::to_string(buffer.sample_rate_hz) +
                          " Hz (resample first)");
}

WaveformBuffer ReadWav(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open wav file " + path.string());
  std::vector<char> bytes((std::istreambuf_iterator<char>(in)),
                          std::istreambuf_iterator<char>());
  const std::string name = path.string();
  if (bytes.size() < 12 || std::memcmp(bytes.data(), "RIFF", 4) != 0 ||
      std::memcmp(bytes.data() + 8, "WAVE", 4) != 0)
    throw Error(name + ": not a RIFF/WAVE file");

  uint16_t format = 0, channels = 0, bits = 0;
  uint32_t rate = 0;
  bool have_fmt = false;
  size_t pos = 12;
  while (pos + 8 <= bytes.size()) {
    const std::string id(bytes.data() + pos, 4);
    const uint32_t len = Load<uint32_t>(bytes, pos + 4);
    const size_t body = pos + 8;
    if (id == "fmt ") {
      if (len < 16 || body + 16 > bytes.size())
        throw Error(name + ": truncated fmt chunk");
      format = Load<uint16_t>(bytes, body);
      channels = Load<uint16_t>(bytes, body + 2);
      rate = Load<uint32_t>(bytes, body + 4);
      bits = Load<uint16_t>(bytes, body + 14);
      if (format == kFormatExtensible && len >= 26 && body + 26 <= bytes.size())
        format = Load<uint16_t>(bytes, body + 24);
      have_fmt = true;
    } else if (id == "data") {
      if (!have_fmt) throw Error(name + ": data chunk before fmt chunk");
      if (channels != 1)
        throw Error(name + ": " + std::to_string(channels) +
                    " channels, only mono is supported");
      if (rate == 0) throw Error(name + ": zero sample rate");
      if (body + len > bytes.size()) throw Error(name + ": truncated data chunk");
      WaveformBuffer buf;
      buf.sample_rate_hz = static_cast<int>(rate);
      if (format == kFormatPcm && bits == 16) {
        if (len % 2) throw Error(name + ": odd data length for 16-bit PCM");
        buf.samples.resize(len / 2);
        for (size_t i = 0; i < buf.samples.size(); ++i)
          buf.samples[i] = Load<int16_t>(bytes, body + 2 * i) / 32768.0;
      } else if (format == kFormatFloat && bits == 32) {
        if (len % 4) throw Error(name + ": ragged data length for float32");
        buf.samples.resize(len / 4);
        for (size_t i = 0; i < buf.samples.size(); ++i) {
          const float v = Load<float>(bytes, body + 4 * i);
          if (!std::isfinite(v)) throw Error(name + ": non-finite sample");
          buf.samples[i] = v;
        }
      } else {
        throw Error(name + ": unsupported encoding (format " +
                    std::to_string(format) + ", " + std::to_string(bits) +
                    " bits)");
      }
      return buf;
    }
    pos = body + len + (len & 1);
  }
  throw Error(name + (have_fmt ? ": missing data chunk" : ": missing fmt chunk"));
}

size_t WriteWav(const WaveformBuffer& buffer,
                const std::filesystem::path& path) {
  if (buffer.sample_rate_hz <= 0) throw Error("invalid sample rate");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot create wav file " + path.string());
  const uint32_t data_len = static_cast<uint32_t>(buffer.samples.size() * 2);
  out.write("RIFF", 4);
  Store<uint32_t>(out, 36 + data_len);
  out.write("WAVEfmt ", 8);
  Store<uint32_t>(out, 16);
  Store<uint16_t>(out, kFormatPcm);
  Store<uint16_t>(out, 1);
  Store<uint32_t>(out, static_cast<uint32_t>(buffer.sample_rate_hz));
  Store<uint32_t>(out, static_cast<uint32_t>(buffer.sample_rate_hz) * 2);
  Store<uint16_t>(out, 2);
  Store<uint16_t>(out, 16);
  out.write("data", 4);
  Store<uint32_t>(out, data_len);

  size_t clipped = 0;
  std::vector<int16_t> pcm(buffer.samples.size());
  for (size_t i = 0; i < pcm.size(); ++i) {
    double v = buffer.samples[i];
    if (!std::isfinite(v)) throw Error("non-finite sample at index " +
                                       std::to_string(i));
    if (v > 1.0 || v < -1.0) {
      ++clipped;
      v = std::clamp(v, -1.0, 1.0);
    }
    pcm[i] = static_cast<int16_t>(
        std::clamp(std::lround(v * 32768.0), -32768L, 32767L));
  }
  out.write(reinterpret_cast<const char*>(pcm.data()),
            static_cast<std::streamsize>(pcm.size() * 2));
  if (!out) throw Error("write failed for " + path.string());
  return clipped;
}

}  // namespace vaenmf
