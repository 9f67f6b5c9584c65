#pragma once

// Minimal RIFF/WAVE reader and writer for mono 16 kHz audio.

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "pssep/dsp_core.hpp"
#include "pssep/error.hpp"

namespace pssep::wav {

enum class SampleFormat { pcm16, float32 };

namespace detail {

inline std::uint32_t read_u32(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}
inline std::uint16_t read_u16(const unsigned char* p) {
  return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
}
inline void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}
inline void put_u16(std::string& out, std::uint16_t v) {
  out.push_back(static_cast<char>(v & 0xff));
  out.push_back(static_cast<char>((v >> 8) & 0xff));
}

}  // namespace detail

// Reads a mono WAV file. Only PCM16 and IEEE float32 at `expected_rate` are
// accepted; anything else is rejected rather than converted.
inline AudioBuffer read(const std::filesystem::path& path, double expected_rate = 16000.0) {
  std::ifstream in(path, std::ios::binary);
  require(static_cast<bool>(in), "cannot open WAV file: " + path.string());
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  const std::string name = path.string();
  require(bytes.size() >= 12 && std::memcmp(bytes.data(), "RIFF", 4) == 0 &&
              std::memcmp(bytes.data() + 8, "WAVE", 4) == 0,
          name + ": not a RIFF/WAVE file");

  std::uint16_t format = 0, channels = 0, bits = 0;
  std::uint32_t rate = 0;
  const unsigned char* data = nullptr;
  std::size_t data_size = 0;
  bool have_fmt = false;
  std::size_t pos = 12;
  while (pos + 8 <= bytes.size()) {
    const unsigned char* chunk = bytes.data() + pos;
    const std::uint32_t size = detail::read_u32(chunk + 4);
    const std::size_t body = pos + 8;
    require(body + size <= bytes.size(), name + ": truncated chunk");
    if (std::memcmp(chunk, "fmt ", 4) == 0) {
      require(size >= 16, name + ": malformed fmt chunk");
      format = detail::read_u16(bytes.data() + body);
      channels = detail::read_u16(bytes.data() + body + 2);
      rate = detail::read_u32(bytes.data() + body + 4);
      bits = detail::read_u16(bytes.data() + body + 14);
      if (format == 0xFFFE && size >= 40) format = detail::read_u16(bytes.data() + body + 24);
      have_fmt = true;
    } else if (std::memcmp(chunk, "data", 4) == 0) {
      data = bytes.data() + body;
      data_size = size;
    }
    pos = body + size + (size & 1u);
  }
  require(have_fmt && data != nullptr, name + ": missing fmt or data chunk");
  require(channels == 1, name + ": expected mono audio, got " + std::to_string(channels) + " channels");
  require(static_cast<double>(rate) == expected_rate,
          name + ": expected sample rate " + std::to_string(static_cast<long>(expected_rate)) + " Hz, got " +
              std::to_string(rate) + " Hz (resample externally)");

  AudioBuffer audio;
  audio.sample_rate = rate;
  if (format == 1 && bits == 16) {
    audio.samples.resize(data_size / 2);
    for (std::size_t i = 0; i < audio.samples.size(); ++i) {
      const auto v = static_cast<std::int16_t>(detail::read_u16(data + 2 * i));
      audio.samples[i] = static_cast<double>(v) / 32768.0;
    }
  } else if (format == 3 && bits == 32) {
    audio.samples.resize(data_size / 4);
    for (std::size_t i = 0; i < audio.samples.size(); ++i) {
      const std::uint32_t raw = detail::read_u32(data + 4 * i);
      float f;
      std::memcpy(&f, &raw, sizeof f);
      audio.samples[i] = f;
    }
  } else {
    throw Error(name + ": unsupported sample format (need PCM16 or float32)");
  }
  audio.validate();
  return audio;
}

inline void write(const std::filesystem::path& path, const AudioBuffer& audio,
                  SampleFormat fmt = SampleFormat::float32) {
  audio.validate();
  const std::uint16_t bits = fmt == SampleFormat::pcm16 ? 16 : 32;
  const std::uint16_t block = bits / 8;
  const auto rate = static_cast<std::uint32_t>(audio.sample_rate);
  const auto data_size = static_cast<std::uint32_t>(audio.samples.size() * block);

  std::string out;
  out.reserve(44 + data_size);
  out += "RIFF";
  detail::put_u32(out, 36 + data_size);
  out += "WAVEfmt ";
  detail::put_u32(out, 16);
  detail::put_u16(out, fmt == SampleFormat::pcm16 ? 1 : 3);
  detail::put_u16(out, 1);
  detail::put_u32(out, rate);
  detail::put_u32(out, rate * block);
  detail::put_u16(out, block);
  detail::put_u16(out, bits);
  out += "data";
  detail::put_u32(out, data_size);
  for (double s : audio.samples) {
    if (fmt == SampleFormat::pcm16) {
      const double c = std::clamp(s, -1.0, 32767.0 / 32768.0);
      detail::put_u16(out, static_cast<std::uint16_t>(static_cast<std::int16_t>(std::lround(c * 32768.0))));
    } else {
      const auto f = static_cast<float>(s);
      std::uint32_t raw;
      std::memcpy(&raw, &f, sizeof raw);
      detail::put_u32(out, raw);
    }
  }
  std::ofstream file(path, std::ios::binary);
  require(static_cast<bool>(file), "cannot write WAV file: " + path.string());
  file.write(out.data(), static_cast<std::streamsize>(out.size()));
}

}  // namespace pssep::wav
