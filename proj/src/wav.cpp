// convoice/wav.cpp
//
// Minimal RIFF/WAVE reader and PCM-16 writer.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>

#include "convoice/audio.hpp"

namespace convoice {
namespace {

constexpr std::uint16_t kFormatPcm = 1;
constexpr std::uint16_t kFormatFloat = 3;
constexpr std::uint16_t kFormatExtensible = 0xFFFE;

std::uint16_t ReadU16(const unsigned char* p) {
  return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
}
std::uint32_t ReadU32(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}
void PutU16(std::vector<unsigned char>& out, std::uint16_t v) {
  out.push_back(static_cast<unsigned char>(v & 0xFF));
  out.push_back(static_cast<unsigned char>(v >> 8));
}
void PutU32(std::vector<unsigned char>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<unsigned char>((v >> (8 * i)) & 0xFF));
}
void PutTag(std::vector<unsigned char>& out, const char* tag) { out.insert(out.end(), tag, tag + 4); }

}  // namespace

Waveform DecodeWav(const std::vector<unsigned char>& bytes) {
  if (bytes.size() < 12 || std::memcmp(bytes.data(), "RIFF", 4) != 0) {
    throw FormatError("wav: missing RIFF chunk");
  }
  if (std::memcmp(bytes.data() + 8, "WAVE", 4) != 0) throw FormatError("wav: RIFF form is not WAVE");

  bool have_fmt = false;
  std::uint16_t format = 0, channels = 0, bits = 0;
  std::uint32_t rate = 0;
  const unsigned char* data = nullptr;
  std::size_t data_size = 0;

  std::size_t pos = 12;
  while (pos + 8 <= bytes.size()) {
    const std::string id(reinterpret_cast<const char*>(bytes.data() + pos), 4);
    std::size_t size = ReadU32(bytes.data() + pos + 4);
    const std::size_t body = pos + 8;
    if (id == "data" && body + size > bytes.size()) size = bytes.size() - body;  // tolerate streamed size
    if (body + size > bytes.size()) throw FormatError("wav: chunk '" + id + "' is truncated");
    if (id == "fmt ") {
      if (size < 16) throw FormatError("wav: chunk 'fmt ' shorter than 16 bytes");
      const unsigned char* f = bytes.data() + body;
      format = ReadU16(f);
      channels = ReadU16(f + 2);
      rate = ReadU32(f + 4);
      bits = ReadU16(f + 14);
      if (format == kFormatExtensible) {
        if (size < 26) throw FormatError("wav: chunk 'fmt ' extensible header truncated");
        format = ReadU16(f + 24);
      }
      have_fmt = true;
    } else if (id == "data") {
      data = bytes.data() + body;
      data_size = size;
    }
    pos = body + size + (size & 1);
  }
  if (!have_fmt) throw FormatError("wav: missing chunk 'fmt '");
  if (!data) throw FormatError("wav: missing chunk 'data'");
  if (channels != 1 && channels != 2) {
    throw FormatError("wav: chunk 'fmt ' has unsupported channel count " + std::to_string(channels));
  }
  if (rate == 0) throw FormatError("wav: chunk 'fmt ' has zero sample rate");
  const bool pcm16 = format == kFormatPcm && bits == 16;
  const bool float32 = format == kFormatFloat && bits == 32;
  if (!pcm16 && !float32) {
    throw FormatError("wav: chunk 'fmt ' codec " + std::to_string(format) + " with " +
                      std::to_string(bits) + " bits is unsupported");
  }

  const std::size_t sample_bytes = bits / 8;
  const std::size_t frames = data_size / (sample_bytes * channels);
  Waveform wave;
  wave.sample_rate_hz = static_cast<int>(rate);
  wave.samples.resize(frames);
  for (std::size_t i = 0; i < frames; ++i) {
    double acc = 0.0;
    for (std::size_t c = 0; c < channels; ++c) {
      const unsigned char* p = data + (i * channels + c) * sample_bytes;
      if (pcm16) {
        acc += static_cast<std::int16_t>(ReadU16(p)) / 32768.0;
      } else {
        const std::uint32_t u = ReadU32(p);
        float f;
        std::memcpy(&f, &u, sizeof f);
        if (!std::isfinite(f)) throw FormatError("wav: chunk 'data' holds a non-finite sample");
        acc += std::clamp(static_cast<double>(f), -1.0, 1.0);
      }
    }
    wave.samples[i] = static_cast<float>(acc / channels);
  }
  return wave;
}

Waveform LoadWav(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open '" + path.string() + "'");
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return DecodeWav(bytes);
}

std::vector<unsigned char> EncodeWav(const Waveform& wave) {
  const std::uint32_t data_size = static_cast<std::uint32_t>(wave.samples.size() * 2);
  std::vector<unsigned char> out;
  out.reserve(44 + data_size);
  PutTag(out, "RIFF");
  PutU32(out, 36 + data_size);
  PutTag(out, "WAVE");
  PutTag(out, "fmt ");
  PutU32(out, 16);
  PutU16(out, kFormatPcm);
  PutU16(out, 1);
  PutU32(out, static_cast<std::uint32_t>(wave.sample_rate_hz));
  PutU32(out, static_cast<std::uint32_t>(wave.sample_rate_hz) * 2);
  PutU16(out, 2);
  PutU16(out, 16);
  PutTag(out, "data");
  PutU32(out, data_size);
  for (float s : wave.samples) {
    const double scaled = std::round(static_cast<double>(s) * 32768.0);
    const auto v = static_cast<std::int16_t>(std::clamp(scaled, -32768.0, 32767.0));
    PutU16(out, static_cast<std::uint16_t>(v));
  }
  return out;
}

void SaveWav(const Waveform& wave, const std::filesystem::path& path) {
  const std::vector<unsigned char> bytes = EncodeWav(wave);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot write '" + path.string() + "'");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

}  // namespace convoice
