#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <span>
#include <string>
#include <unordered_set>
#include <vector>

#include "uap/error.hpp"

namespace uap {

inline constexpr int kSampleRate = 16000;
inline constexpr double kInt16Min = -32768.0;
inline constexpr double kInt16Max = 32767.0;

// Mono audio in signed-16-bit amplitude scale, kept as doubles so that
// perturbed signals need not be quantized.
struct Waveform {
  std::vector<double> samples;
  int sample_rate = kSampleRate;

  std::size_t size() const noexcept { return samples.size(); }
};

// Ordered character set; the CTC blank is implicit and never a member.
using Alphabet = std::string;

struct CorpusItem {
  std::filesystem::path audio_path;
  std::string transcript;
  Waveform audio;  // loaded eagerly by load_manifest / synth_corpus
};

struct Corpus {
  std::vector<CorpusItem> items;
  Alphabet alphabet;

  std::size_t size() const noexcept { return items.size(); }
  bool empty() const noexcept { return items.empty(); }

  // Leading `count` items, alphabet preserved.
  Corpus prefix(std::size_t count) const {
    Corpus out{{}, alphabet};
    count = std::min(count, items.size());
    out.items.assign(items.begin(), items.begin() + static_cast<std::ptrdiff_t>(count));
    return out;
  }
};

namespace detail {

inline std::uint32_t read_le32(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

inline std::uint16_t read_le16(const unsigned char* p) {
  return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
}

inline void put_le32(std::vector<unsigned char>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<unsigned char>((v >> (8 * i)) & 0xFF));
}

inline void put_le16(std::vector<unsigned char>& out, std::uint16_t v) {
  out.push_back(static_cast<unsigned char>(v & 0xFF));
  out.push_back(static_cast<unsigned char>((v >> 8) & 0xFF));
}

}  // namespace detail

// Round half away from zero, then clamp into int16 range.
inline std::int16_t quantize_sample(double value) {
  const double rounded = std::round(value);
  return static_cast<std::int16_t>(std::clamp(rounded, kInt16Min, kInt16Max));
}

inline Waveform read_wav(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw Error(std::filesystem::exists(path) ? ErrorCode::IoError : ErrorCode::NotFound,
                path.string());
  }
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)),
                                   std::istreambuf_iterator<char>());
  if (bytes.size() < 12 || std::memcmp(bytes.data(), "RIFF", 4) != 0 ||
      std::memcmp(bytes.data() + 8, "WAVE", 4) != 0) {
    throw Error(ErrorCode::CorruptFile, path.string() + ": missing RIFF/WAVE header");
  }

  bool have_fmt = false;
  const unsigned char* data = nullptr;
  std::size_t data_size = 0;
  std::size_t pos = 12;
  while (pos + 8 <= bytes.size()) {
    const unsigned char* chunk = bytes.data() + pos;
    const std::size_t chunk_size = detail::read_le32(chunk + 4);
    const std::size_t body = pos + 8;
    if (body + chunk_size > bytes.size()) {
      throw Error(ErrorCode::CorruptFile, path.string() + ": truncated chunk");
    }
    if (std::memcmp(chunk, "fmt ", 4) == 0) {
      if (chunk_size < 16) throw Error(ErrorCode::CorruptFile, path.string() + ": short fmt chunk");
      const auto format_tag = detail::read_le16(chunk + 8);
      const auto channels = detail::read_le16(chunk + 10);
      const auto rate = detail::read_le32(chunk + 12);
      const auto bits = detail::read_le16(chunk + 22);
      if (format_tag != 1 || channels != 1 || rate != kSampleRate || bits != 16) {
        throw Error(ErrorCode::UnsupportedFormat,
                    path.string() + ": need PCM16 mono 16 kHz (tag=" + std::to_string(format_tag) +
                        " channels=" + std::to_string(channels) + " rate=" + std::to_string(rate) +
                        " bits=" + std::to_string(bits) + ")");
      }
      have_fmt = true;
    } else if (std::memcmp(chunk, "data", 4) == 0) {
      data = bytes.data() + body;
      data_size = chunk_size;
    }
    pos = body + chunk_size + (chunk_size & 1);
  }
  if (!have_fmt || data == nullptr) {
    throw Error(ErrorCode::CorruptFile, path.string() + ": missing fmt or data chunk");
  }
  if (data_size % 2 != 0) throw Error(ErrorCode::CorruptFile, path.string() + ": odd data size");

  Waveform w;
  w.samples.resize(data_size / 2);
  for (std::size_t i = 0; i < w.samples.size(); ++i) {
    w.samples[i] = static_cast<std::int16_t>(detail::read_le16(data + 2 * i));
  }
  return w;
}

inline void write_wav(const std::filesystem::path& path, const Waveform& w) {
  const auto n = static_cast<std::uint32_t>(w.samples.size());
  std::vector<unsigned char> out;
  out.reserve(44 + 2 * static_cast<std::size_t>(n));
  out.insert(out.end(), {'R', 'I', 'F', 'F'});
  detail::put_le32(out, 36 + 2 * n);
  out.insert(out.end(), {'W', 'A', 'V', 'E', 'f', 'm', 't', ' '});
  detail::put_le32(out, 16);
  detail::put_le16(out, 1);
  detail::put_le16(out, 1);
  detail::put_le32(out, kSampleRate);
  detail::put_le32(out, kSampleRate * 2);
  detail::put_le16(out, 2);
  detail::put_le16(out, 16);
  out.insert(out.end(), {'d', 'a', 't', 'a'});
  detail::put_le32(out, 2 * n);
  for (double s : w.samples) detail::put_le16(out, static_cast<std::uint16_t>(quantize_sample(s)));

  std::ofstream file(path, std::ios::binary | std::ios::trunc);
  if (!file) throw Error(ErrorCode::IoError, "cannot open " + path.string() + " for writing");
  file.write(reinterpret_cast<const char*>(out.data()), static_cast<std::streamsize>(out.size()));
  if (!file) throw Error(ErrorCode::IoError, "write failed: " + path.string());
}

namespace detail {

// Splits one CSV record; supports double-quoted fields with "" escapes.
inline std::vector<std::string> split_csv_line(const std::string& line, std::size_t line_no) {
  std::vector<std::string> fields(1);
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        fields.back() += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        fields.back() += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      fields.emplace_back();
    } else {
      fields.back() += c;
    }
  }
  if (quoted) {
    throw Error(ErrorCode::MalformedManifest,
                "unterminated quote on line " + std::to_string(line_no));
  }
  return fields;
}

}  // namespace detail

inline void validate_transcript(const std::string& transcript, const Alphabet& alphabet) {
  for (char c : transcript) {
    if (alphabet.find(c) == std::string::npos) {
      throw Error(ErrorCode::InvalidTranscript,
                  "character '" + std::string(1, c) + "' not in alphabet (\"" + transcript + "\")");
    }
  }
}

// CSV `path,transcript` with header; paths are relative to the manifest's
// directory. Audio is read and validated here.
inline Corpus load_manifest(const std::filesystem::path& path, const Alphabet& alphabet) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::NotFound, "manifest " + path.string());
  const auto base = path.parent_path();

  std::string line;
  std::size_t line_no = 0;
  auto next_line = [&]() -> bool {
    if (!std::getline(in, line)) return false;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    return true;
  };

  if (!next_line()) throw Error(ErrorCode::MalformedManifest, "empty manifest " + path.string());
  if (line.rfind("\xEF\xBB\xBF", 0) == 0) line.erase(0, 3);
  if (detail::split_csv_line(line, line_no) != std::vector<std::string>{"path", "transcript"}) {
    throw Error(ErrorCode::MalformedManifest, "header must be `path,transcript`");
  }

  Corpus corpus{{}, alphabet};
  std::unordered_set<std::string> seen;
  while (next_line()) {
    if (line.empty()) continue;
    auto fields = detail::split_csv_line(line, line_no);
    if (fields.size() != 2 || fields[0].empty()) {
      throw Error(ErrorCode::MalformedManifest, "bad row on line " + std::to_string(line_no));
    }
    validate_transcript(fields[1], alphabet);
    std::filesystem::path audio = fields[0];
    if (audio.is_relative()) audio = base / audio;
    if (!std::filesystem::exists(audio)) throw Error(ErrorCode::MissingAudio, audio.string());
    if (!seen.insert(audio.lexically_normal().string()).second) {
      throw Error(ErrorCode::MalformedManifest, "duplicate path " + audio.string());
    }
    CorpusItem item{audio, std::move(fields[1]), read_wav(audio)};
    corpus.items.push_back(std::move(item));
  }
  return corpus;
}

// Crop or zero-pad the perturbation at the end to exactly n samples.
inline std::vector<double> fit_perturbation(std::span<const double> v, std::size_t n) {
  std::vector<double> out(n, 0.0);
  const std::size_t keep = std::min(n, v.size());
  std::copy_n(v.begin(), keep, out.begin());
  return out;
}

}  // namespace uap
