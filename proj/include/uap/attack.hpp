#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "uap/audio.hpp"
#include "uap/ctc.hpp"
#include "uap/dsp.hpp"
#include "uap/error.hpp"
#include "uap/metrics.hpp"
#include "uap/nn.hpp"
#include "uap/rng.hpp"

namespace uap {

struct AttackConfig {
  double epsilon = 300.0;  // l-inf budget, int16 sample units
  double delta = 0.9;      // desired validation success rate
  double threshold = kDefaultThreshold;
  double alpha = 5.0;      // sign-step size, sample units
  double reg_c = 0.5;      // weight of the squared l2 penalty on r
  int inner_max_iters = 50;
  int max_epochs = 20;
  std::size_t perturbation_len = 150000;
  std::uint64_t seed = 0;

  void validate() const {
    if (!(epsilon > 0.0)) throw Error(ErrorCode::InvalidConfig, "epsilon must be positive");
    if (!(delta >= 0.0 && delta <= 1.0)) throw Error(ErrorCode::InvalidConfig, "delta must be in [0, 1]");
    if (!(alpha > 0.0)) throw Error(ErrorCode::InvalidConfig, "alpha must be positive");
    if (!(reg_c >= 0.0)) throw Error(ErrorCode::InvalidConfig, "reg_c must be non-negative");
    if (!(threshold >= 0.0)) throw Error(ErrorCode::InvalidConfig, "threshold must be non-negative");
    if (inner_max_iters < 0 || max_epochs < 0) throw Error(ErrorCode::InvalidConfig, "iteration caps must be >= 0");
    if (perturbation_len < 1) throw Error(ErrorCode::InvalidConfig, "perturbation_len must be >= 1");
  }
};

struct UniversalPerturbation {
  std::vector<double> samples;
  double epsilon = 0.0;
  std::string model_id;
  AttackConfig config;
  std::vector<double> history;  // validation success rate after each epoch
  int epochs_run = 0;
};

// Optional observers, used by tests to check the budget invariants.
struct AttackHooks {
  // After each sign step of the inner attack: the fitted universal
  // perturbation and the current r.
  std::function<void(int, std::span<const double>, std::span<const double>)> on_inner_step;
  // After each update of the universal perturbation: item index and new v.
  std::function<void(std::size_t, std::span<const double>)> on_update;
};

inline std::vector<double> clip_inf(std::span<const double> u, double epsilon) {
  std::vector<double> out(u.size());
  std::transform(u.begin(), u.end(), out.begin(), [epsilon](double s) { return std::clamp(s, -epsilon, epsilon); });
  return out;
}

inline double sign(double value) { return static_cast<double>((0.0 < value) - (value < 0.0)); }

struct InnerResult {
  std::vector<double> r;
  double achieved_cer = 0.0;
  int iterations_used = 0;
};

// Gradient of CTCLoss(f(samples), target) with respect to the samples,
// through the network and the MFCC front-end. Also returns the greedy
// transcription of the same forward pass.
struct SampleGradient {
  double loss = 0.0;
  std::vector<double> grad;
  Transcript transcription;
};

inline SampleGradient ctc_sample_gradient(const AcousticModel& m, std::span<const double> samples,
                                          std::span<const int> target_labels) {
  const auto plan = mfcc_plan(m.feature_config);
  auto [features, mfcc_tape] = plan->forward(samples);
  auto [logits, tape] = model_forward(m, features);
  SampleGradient out;
  out.transcription = greedy_decode(logits, m.alphabet);
  const auto ctc = ctc_loss(logits, target_labels);
  out.loss = ctc.loss;
  const auto grads = model_backward(m, tape, ctc.grad_logits, /*want_params=*/false);
  out.grad = plan->backward(mfcc_tape, grads.features);
  return out;
}

// Iterative sign-gradient minimization of c*|r|^2 - CTCLoss(f(x + v + r), target),
// projected so that |v + r|_inf <= epsilon. Stops once the CER against the
// target exceeds the threshold. Only the first cfg.perturbation_len samples of
// r may move; v_current must already be fitted to x.
inline InnerResult inner_attack(const AcousticModel& m, const Waveform& x, std::span<const double> v_current,
                                const Transcript& target, const AttackConfig& cfg,
                                const AttackHooks* hooks = nullptr) {
  cfg.validate();
  if (v_current.size() != x.size()) throw Error(ErrorCode::ShapeMismatch, "v_current must be fitted to x");
  const auto labels = encode_labels(target, m.alphabet);
  const std::size_t n = x.size();
  const std::size_t support = std::min(n, cfg.perturbation_len);

  InnerResult result;
  result.r.assign(n, 0.0);
  std::vector<double> input(n);
  for (int iter = 0;; ++iter) {
    for (std::size_t i = 0; i < n; ++i) input[i] = x.samples[i] + v_current[i] + result.r[i];
    const bool last = iter == cfg.inner_max_iters;
    // The gradient is not needed on the final evaluation.
    if (last) {
      Waveform probe{input, x.sample_rate};
      result.achieved_cer = cer(target, transcribe(m, probe));
      result.iterations_used = iter;
      return result;
    }
    const auto g = ctc_sample_gradient(m, input, labels);
    result.achieved_cer = cer(target, g.transcription);
    if (result.achieved_cer > cfg.threshold) {
      result.iterations_used = iter;
      return result;
    }
    for (std::size_t i = 0; i < support; ++i) {
      // L = -CTCLoss, so dJ/dr = 2c r - dCTC/dr.
      const double grad_j = 2.0 * cfg.reg_c * result.r[i] - g.grad[i];
      if (!std::isfinite(grad_j)) throw Error(ErrorCode::GradientNonFinite, "non-finite attack gradient");
      const double stepped = result.r[i] - cfg.alpha * sign(grad_j);
      double r = std::clamp(v_current[i] + stepped, -cfg.epsilon, cfg.epsilon) - v_current[i];
      // The subtraction can round so that v + r lands one ulp outside the budget.
      while (v_current[i] + r > cfg.epsilon) r = std::nextafter(r, -HUGE_VAL);
      while (v_current[i] + r < -cfg.epsilon) r = std::nextafter(r, HUGE_VAL);
      result.r[i] = r;
    }
    if (hooks && hooks->on_inner_step) hooks->on_inner_step(iter + 1, v_current, result.r);
  }
}

// Accumulates one perturbation over the training set, one pass per epoch in a
// seeded shuffled order, until the validation success rate reaches delta or
// the epoch cap is hit. Clean transcriptions are computed once.
inline UniversalPerturbation universal_train(const AcousticModel& m, const Corpus& train, const Corpus& val,
                                             const AttackConfig& cfg, std::string model_id = {},
                                             const AttackHooks* hooks = nullptr) {
  cfg.validate();
  if (train.empty() || val.empty()) throw Error(ErrorCode::EmptyCorpus, "train and val must be non-empty");

  UniversalPerturbation up;
  up.samples.assign(cfg.perturbation_len, 0.0);
  up.epsilon = cfg.epsilon;
  up.model_id = model_id.empty() ? std::string(arch_name(m.arch)) : std::move(model_id);
  up.config = cfg;

  const auto clean_train = clean_transcripts(m, train);
  const auto clean_val = clean_transcripts(m, val);
  double success = evaluate_with_clean(m, val, clean_val, up.samples, cfg.threshold).success_rate;

  Rng rng(cfg.seed);
  std::vector<std::size_t> order(train.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  while (success < cfg.delta && up.epochs_run < cfg.max_epochs) {
    rng.shuffle(order);
    for (std::size_t i : order) {
      const auto& clean = clean_train[i];
      if (clean.empty()) continue;
      const Waveform& x = train.items[i].audio;
      const auto fitted = fit_perturbation(up.samples, x.size());
      const Waveform perturbed{add_signals(x.samples, fitted), x.sample_rate};
      if (!(cer(clean, transcribe(m, perturbed)) < cfg.threshold)) continue;

      const auto inner = inner_attack(m, x, fitted, clean, cfg, hooks);
      const std::size_t span = std::min(x.size(), up.samples.size());
      for (std::size_t j = 0; j < span; ++j) {
        up.samples[j] = std::clamp(up.samples[j] + inner.r[j], -cfg.epsilon, cfg.epsilon);
      }
      if (hooks && hooks->on_update) hooks->on_update(i, up.samples);
    }
    ++up.epochs_run;
    success = evaluate_with_clean(m, val, clean_val, up.samples, cfg.threshold).success_rate;
    up.history.push_back(success);
  }
  return up;
}

// I.i.d. uniform noise on [-epsilon, epsilon].
inline std::vector<double> random_perturbation(double epsilon, std::size_t length, std::uint64_t seed) {
  if (!(epsilon > 0.0)) throw Error(ErrorCode::InvalidConfig, "epsilon must be positive");
  Rng rng(seed);
  std::vector<double> out(length);
  for (auto& s : out) s = rng.uniform(-epsilon, epsilon);
  return out;
}

}  // namespace uap
