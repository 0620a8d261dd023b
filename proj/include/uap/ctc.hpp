#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "uap/audio.hpp"
#include "uap/error.hpp"
#include "uap/tensor.hpp"

namespace uap {

using Transcript = std::string;

// Unnormalized per-frame scores; column alphabet.size() is the blank.
struct Logits {
  Matrix values;

  int frames() const { return static_cast<int>(values.rows()); }
  int classes() const { return static_cast<int>(values.cols()); }
  int blank() const { return classes() - 1; }
};

struct CtcResult {
  double loss = 0.0;
  Matrix grad_logits;
};

namespace ctc_detail {

// Stand-in for log(0); kept finite so that sums stay algebraic.
inline constexpr double kLogZero = -1e30;

inline double log_add(double a, double b) {
  if (a < b) std::swap(a, b);
  if (b <= kLogZero) return a;
  return a + std::log1p(std::exp(b - a));
}

inline Matrix log_softmax(const Matrix& logits) {
  Matrix out(logits.rows(), logits.cols());
  for (Eigen::Index t = 0; t < logits.rows(); ++t) {
    const double peak = logits.row(t).maxCoeff();
    const double lse = peak + std::log((logits.row(t).array() - peak).exp().sum());
    out.row(t) = logits.row(t).array() - lse;
  }
  return out;
}

}  // namespace ctc_detail

inline Matrix softmax(const Matrix& logits) {
  return ctc_detail::log_softmax(logits).array().exp().matrix();
}

inline std::vector<int> encode_labels(const Transcript& text, const Alphabet& alphabet) {
  std::vector<int> labels;
  labels.reserve(text.size());
  for (char c : text) {
    const auto pos = alphabet.find(c);
    if (pos == std::string::npos) {
      throw Error(ErrorCode::InvalidTranscript, "character '" + std::string(1, c) + "' not in alphabet");
    }
    labels.push_back(static_cast<int>(pos));
  }
  return labels;
}

// Minimum frames needed: one per label plus one blank between each repeat.
inline int ctc_min_frames(std::span<const int> labels) {
  int needed = static_cast<int>(labels.size());
  for (std::size_t i = 1; i < labels.size(); ++i) needed += labels[i] == labels[i - 1];
  return needed;
}

// Negative log-likelihood of `labels` under CTC, and its gradient with respect
// to the logits: softmax minus the per-frame symbol posterior.
inline CtcResult ctc_loss(const Logits& logits, std::span<const int> labels) {
  using namespace ctc_detail;
  const int frames = logits.frames();
  const int blank = logits.blank();
  for (int label : labels) {
    if (label < 0 || label >= blank) throw Error(ErrorCode::ShapeMismatch, "label index out of range");
  }
  if (frames < ctc_min_frames(labels)) {
    throw Error(ErrorCode::InfeasibleTarget, std::to_string(frames) + " frames cannot emit " +
                                                 std::to_string(labels.size()) + " labels");
  }

  const int states = 2 * static_cast<int>(labels.size()) + 1;
  std::vector<int> ext(states, blank);
  for (std::size_t i = 0; i < labels.size(); ++i) ext[2 * i + 1] = labels[i];
  auto can_skip = [&](int s) { return s >= 2 && ext[s] != blank && ext[s] != ext[s - 2]; };

  const Matrix logp = log_softmax(logits.values);
  Matrix alpha = Matrix::Constant(frames, states, kLogZero);
  Matrix beta = Matrix::Constant(frames, states, kLogZero);

  alpha(0, 0) = logp(0, ext[0]);
  if (states > 1) alpha(0, 1) = logp(0, ext[1]);
  for (int t = 1; t < frames; ++t) {
    for (int s = 0; s < states; ++s) {
      double acc = alpha(t - 1, s);
      if (s >= 1) acc = log_add(acc, alpha(t - 1, s - 1));
      if (can_skip(s)) acc = log_add(acc, alpha(t - 1, s - 2));
      alpha(t, s) = acc <= kLogZero ? kLogZero : acc + logp(t, ext[s]);
    }
  }

  // beta(t, s): log-probability of emitting the remainder after frame t,
  // given state s at frame t (excludes frame t's own emission).
  beta(frames - 1, states - 1) = 0.0;
  if (states > 1) beta(frames - 1, states - 2) = 0.0;
  for (int t = frames - 2; t >= 0; --t) {
    for (int s = 0; s < states; ++s) {
      double acc = beta(t + 1, s) + logp(t + 1, ext[s]);
      if (s + 1 < states) acc = log_add(acc, beta(t + 1, s + 1) + logp(t + 1, ext[s + 1]));
      if (s + 2 < states && can_skip(s + 2)) {
        acc = log_add(acc, beta(t + 1, s + 2) + logp(t + 1, ext[s + 2]));
      }
      beta(t, s) = acc < kLogZero ? kLogZero : acc;
    }
  }

  double log_prob = alpha(frames - 1, states - 1);
  if (states > 1) log_prob = log_add(log_prob, alpha(frames - 1, states - 2));

  CtcResult result;
  result.loss = -log_prob;
  result.grad_logits = logp.array().exp().matrix();
  for (int t = 0; t < frames; ++t) {
    for (int s = 0; s < states; ++s) {
      const double occupancy = alpha(t, s) + beta(t, s);
      if (occupancy <= kLogZero / 2) continue;
      result.grad_logits(t, ext[s]) -= std::exp(occupancy - log_prob);
    }
  }
  return result;
}

inline CtcResult ctc_loss(const Logits& logits, const Transcript& target, const Alphabet& alphabet) {
  return ctc_loss(logits, encode_labels(target, alphabet));
}

// Best path: per-frame argmax (lowest index wins ties), collapse runs, drop blanks.
inline std::vector<int> greedy_path_labels(const Logits& logits) {
  std::vector<int> out;
  int previous = -1;
  for (int t = 0; t < logits.frames(); ++t) {
    int best = 0;
    for (int k = 1; k < logits.classes(); ++k) {
      if (logits.values(t, k) > logits.values(t, best)) best = k;
    }
    if (best != previous && best != logits.blank()) out.push_back(best);
    previous = best;
  }
  return out;
}

inline Transcript greedy_decode(const Logits& logits, const Alphabet& alphabet) {
  if (static_cast<int>(alphabet.size()) + 1 != logits.classes()) {
    throw Error(ErrorCode::ShapeMismatch, "logit width does not match alphabet + blank");
  }
  Transcript text;
  for (int label : greedy_path_labels(logits)) text += alphabet[static_cast<std::size_t>(label)];
  return text;
}

// Exhaustive path enumeration; test oracle only.
inline double ctc_loss_bruteforce(const Logits& logits, std::span<const int> labels) {
  const int frames = logits.frames();
  const int classes = logits.classes();
  if (frames > 8 || classes > 4) {
    throw Error(ErrorCode::TooLargeForOracle, "bruteforce needs T <= 8 and |alphabet| <= 3");
  }
  const Matrix prob = softmax(logits.values);
  std::vector<int> path(static_cast<std::size_t>(frames), 0);
  double total = 0.0;
  for (;;) {
    std::vector<int> collapsed;
    int previous = -1;
    double p = 1.0;
    for (int t = 0; t < frames; ++t) {
      const int k = path[static_cast<std::size_t>(t)];
      p *= prob(t, k);
      if (k != previous && k != logits.blank()) collapsed.push_back(k);
      previous = k;
    }
    if (std::equal(collapsed.begin(), collapsed.end(), labels.begin(), labels.end())) total += p;

    int t = 0;
    while (t < frames && ++path[static_cast<std::size_t>(t)] == classes) path[static_cast<std::size_t>(t++)] = 0;
    if (t == frames) break;
  }
  return -std::log(total);
}

}  // namespace uap
