#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "uap/audio.hpp"
#include "uap/ctc.hpp"
#include "uap/error.hpp"
#include "uap/nn.hpp"

namespace uap {

inline constexpr double kDefaultThreshold = 0.5;

// Levenshtein distance, unit costs, two-row DP.
inline std::size_t edit_distance(std::string_view a, std::string_view b) {
  std::vector<std::size_t> prev(b.size() + 1), cur(b.size() + 1);
  for (std::size_t j = 0; j <= b.size(); ++j) prev[j] = j;
  for (std::size_t i = 1; i <= a.size(); ++i) {
    cur[0] = i;
    for (std::size_t j = 1; j <= b.size(); ++j) {
      const std::size_t sub = prev[j - 1] + (a[i - 1] != b[j - 1]);
      cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, sub});
    }
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

// Normalized by the first (original) argument; may exceed 1.
inline double cer(std::string_view original, std::string_view adversarial) {
  if (original.empty()) throw Error(ErrorCode::EmptyOriginal, "CER of an empty original transcription");
  return static_cast<double>(edit_distance(original, adversarial)) / static_cast<double>(original.size());
}

// Peak level 20 log10(max |v_i|).
inline double db(std::span<const double> v) {
  double peak = 0.0;
  for (double s : v) peak = std::max(peak, std::abs(s));
  if (peak == 0.0) throw Error(ErrorCode::SilentSignal, "dB of an all-zero signal");
  return 20.0 * std::log10(peak);
}

inline double db_relative(const Waveform& x, std::span<const double> v) { return db(v) - db(x.samples); }

inline std::vector<double> add_signals(std::span<const double> x, std::span<const double> v) {
  std::vector<double> out(x.begin(), x.end());
  for (std::size_t i = 0; i < out.size() && i < v.size(); ++i) out[i] += v[i];
  return out;
}

struct EvalRecord {
  std::string item_id;
  Transcript clean_transcript;
  Transcript adv_transcript;
  double cer = 0.0;
  bool success = false;
  // Empty when the fitted perturbation is silent over this signal.
  std::optional<double> db_rel;
};

struct EvalSummary {
  double success_rate = 0.0;
  double mean_cer = 0.0;
  std::optional<double> mean_db_rel;  // empty when every fitted perturbation is silent
  std::size_t n_items = 0;            // included in the aggregates
  std::size_t n_excluded_empty = 0;   // clean transcript empty
  std::vector<EvalRecord> records;    // included items only, corpus order
};

// Arithmetic means over included records, in record order.
inline void summarize(EvalSummary& s) {
  s.n_items = s.records.size();
  if (s.records.empty()) return;
  double successes = 0.0, cer_sum = 0.0, db_sum = 0.0;
  std::size_t db_count = 0;
  for (const auto& r : s.records) {
    successes += r.success ? 1.0 : 0.0;
    cer_sum += r.cer;
    if (r.db_rel) {
      db_sum += *r.db_rel;
      ++db_count;
    }
  }
  const auto n = static_cast<double>(s.records.size());
  s.success_rate = successes / n;
  s.mean_cer = cer_sum / n;
  s.mean_db_rel = db_count ? std::optional<double>(db_sum / static_cast<double>(db_count)) : std::nullopt;
}

inline EvalRecord evaluate_item(const AcousticModel& m, const CorpusItem& item, const Transcript& clean,
                                std::span<const double> v, double threshold) {
  const auto fitted = fit_perturbation(v, item.audio.size());
  Waveform perturbed{add_signals(item.audio.samples, fitted), item.audio.sample_rate};
  EvalRecord r;
  r.item_id = item.audio_path.filename().string();
  r.clean_transcript = clean;
  r.adv_transcript = transcribe(m, perturbed);
  r.cer = cer(clean, r.adv_transcript);
  r.success = r.cer > threshold;
  if (std::any_of(fitted.begin(), fitted.end(), [](double s) { return s != 0.0; })) {
    r.db_rel = db_relative(item.audio, fitted);
  }
  return r;
}

// Same as evaluate_universal but with clean transcriptions supplied by the
// caller (they depend only on the unperturbed signal).
inline EvalSummary evaluate_with_clean(const AcousticModel& m, const Corpus& corpus,
                                       std::span<const Transcript> clean, std::span<const double> v,
                                       double threshold) {
  if (corpus.empty()) throw Error(ErrorCode::EmptyCorpus, "evaluation corpus is empty");
  EvalSummary s;
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    if (clean[i].empty()) {
      ++s.n_excluded_empty;
      continue;
    }
    s.records.push_back(evaluate_item(m, corpus.items[i], clean[i], v, threshold));
  }
  if (s.records.empty()) throw Error(ErrorCode::AllTranscriptsEmpty, "every clean transcription is empty");
  summarize(s);
  return s;
}

inline std::vector<Transcript> clean_transcripts(const AcousticModel& m, const Corpus& corpus) {
  std::vector<Transcript> out;
  out.reserve(corpus.size());
  for (const auto& item : corpus.items) out.push_back(transcribe(m, item.audio));
  return out;
}

inline EvalSummary evaluate_universal(const AcousticModel& m, const Corpus& corpus, std::span<const double> v,
                                      double threshold = kDefaultThreshold) {
  if (corpus.empty()) throw Error(ErrorCode::EmptyCorpus, "evaluation corpus is empty");
  return evaluate_with_clean(m, corpus, clean_transcripts(m, corpus), v, threshold);
}

// Mean CER of the model's transcriptions against the manifest labels.
inline double label_cer(const AcousticModel& m, const Corpus& corpus) {
  if (corpus.empty()) throw Error(ErrorCode::EmptyCorpus, "corpus is empty");
  double total = 0.0;
  for (const auto& item : corpus.items) total += cer(item.transcript, transcribe(m, item.audio));
  return total / static_cast<double>(corpus.size());
}

}  // namespace uap
