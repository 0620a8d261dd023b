#pragma once

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <string>
#include <tuple>

#include "uap/audio.hpp"
#include "uap/error.hpp"
#include "uap/rng.hpp"

namespace uap {

// Toy "speech": each symbol is a tone at its own frequency followed by a
// short silence, over Gaussian background noise.
struct SynthConfig {
  Alphabet alphabet = "abcdefghij";
  int tone_ms = 120;
  int gap_ms = 20;
  double base_freq = 400.0;
  double freq_step = 150.0;
  double amplitude = 20000.0;
  double noise_db = -40.0;  // noise power relative to tone power (A^2 / 2)
  int min_symbols = 3;
  int max_symbols = 8;
  std::size_t n_train = 500;
  std::size_t n_val = 100;
  std::size_t n_test = 200;
  std::uint64_t seed = 7;

  double frequency(std::size_t symbol) const { return base_freq + freq_step * static_cast<double>(symbol); }
  std::size_t samples_per_symbol() const {
    return static_cast<std::size_t>(tone_ms + gap_ms) * kSampleRate / 1000;
  }

  void validate() const {
    if (alphabet.empty()) throw Error(ErrorCode::InvalidConfig, "alphabet must be non-empty");
    if (frequency(alphabet.size() - 1) >= kSampleRate / 2.0) {
      throw Error(ErrorCode::InvalidConfig, "symbol frequencies must stay below Nyquist");
    }
    if (amplitude > kInt16Max || !(amplitude > 0.0)) throw Error(ErrorCode::InvalidConfig, "amplitude out of range");
    if (tone_ms <= 0 || gap_ms < 0) throw Error(ErrorCode::InvalidConfig, "bad tone/gap duration");
    if (min_symbols < 1 || max_symbols < min_symbols) throw Error(ErrorCode::InvalidConfig, "bad symbol count range");
  }
};

// Quantized (integer-valued) samples, identical to what write_wav stores.
inline Waveform synth_utterance(const SynthConfig& cfg, const std::string& text, Rng& rng) {
  const std::size_t tone = static_cast<std::size_t>(cfg.tone_ms) * kSampleRate / 1000;
  const std::size_t per_symbol = cfg.samples_per_symbol();
  const double sigma = cfg.amplitude / std::numbers::sqrt2 * std::pow(10.0, cfg.noise_db / 20.0);
  Waveform w;
  w.samples.assign(per_symbol * text.size(), 0.0);
  for (std::size_t k = 0; k < text.size(); ++k) {
    const double freq = cfg.frequency(cfg.alphabet.find(text[k]));
    const double phase = rng.uniform(0.0, 2.0 * std::numbers::pi);
    for (std::size_t n = 0; n < tone; ++n) {
      w.samples[k * per_symbol + n] =
          cfg.amplitude * std::sin(2.0 * std::numbers::pi * freq * static_cast<double>(n) / kSampleRate + phase);
    }
  }
  for (auto& s : w.samples) s = quantize_sample(s + sigma * rng.normal());
  return w;
}

struct SynthCorpora {
  Corpus train, val, test;
};

// Writes <out>/<split>/<split>_NNNNN.wav and <out>/<split>.csv for each split.
inline SynthCorpora synth_corpus(const SynthConfig& cfg, const std::filesystem::path& out_dir) {
  cfg.validate();
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) throw Error(ErrorCode::IoError, "cannot create " + out_dir.string() + ": " + ec.message());

  Rng rng(cfg.seed);
  SynthCorpora out;
  for (auto [name, count, corpus] : {std::tuple{"train", cfg.n_train, &out.train},
                                     std::tuple{"val", cfg.n_val, &out.val},
                                     std::tuple{"test", cfg.n_test, &out.test}}) {
    corpus->alphabet = cfg.alphabet;
    const auto split_dir = out_dir / name;
    std::filesystem::create_directories(split_dir, ec);
    if (ec) throw Error(ErrorCode::IoError, "cannot create " + split_dir.string());
    std::ofstream manifest(out_dir / (std::string(name) + ".csv"), std::ios::binary | std::ios::trunc);
    if (!manifest) throw Error(ErrorCode::IoError, "cannot write manifest in " + out_dir.string());
    manifest << "path,transcript\n";
    for (std::size_t i = 0; i < count; ++i) {
      const auto length = rng.uniform_int(cfg.min_symbols, cfg.max_symbols);
      std::string text;
      for (std::int64_t k = 0; k < length; ++k) {
        text += cfg.alphabet[static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(cfg.alphabet.size()) - 1))];
      }
      char file[64];
      std::snprintf(file, sizeof file, "%s_%05zu.wav", name, i);
      const auto relative = std::filesystem::path(name) / file;
      CorpusItem item{out_dir / relative, text, synth_utterance(cfg, text, rng)};
      write_wav(item.audio_path, item.audio);
      manifest << relative.generic_string() << ',' << text << '\n';
      corpus->items.push_back(std::move(item));
    }
    if (!manifest) throw Error(ErrorCode::IoError, "manifest write failed");
  }
  return out;
}

}  // namespace uap
