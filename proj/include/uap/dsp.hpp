#pragma once

#include <cmath>
#include <map>
#include <memory>
#include <mutex>
#include <numbers>
#include <span>
#include <tuple>
#include <vector>

#include "uap/audio.hpp"
#include "uap/error.hpp"
#include "uap/tensor.hpp"

namespace uap {

struct MfccConfig {
  int frame_len = 512;
  int hop = 256;
  int n_mels = 26;
  int n_coeffs = 13;
  double mel_fmin = 0.0;
  double mel_fmax = 8000.0;
  double log_floor = 1e-10;
  int sample_rate = kSampleRate;

  int n_fft_bins() const { return frame_len / 2 + 1; }

  auto key() const {
    return std::make_tuple(frame_len, hop, n_mels, n_coeffs, mel_fmin, mel_fmax, log_floor, sample_rate);
  }
  bool operator==(const MfccConfig& other) const { return key() == other.key(); }

  void validate() const {
    if (frame_len < 2 || frame_len % 2 != 0) throw Error(ErrorCode::InvalidConfig, "frame_len must be even and >= 2");
    if (hop < 1 || hop > frame_len) throw Error(ErrorCode::InvalidConfig, "hop must be in [1, frame_len]");
    if (n_mels < 1 || n_coeffs < 1 || n_coeffs > n_mels) throw Error(ErrorCode::InvalidConfig, "need 1 <= n_coeffs <= n_mels");
    if (!(mel_fmin >= 0.0) || !(mel_fmax > mel_fmin) || mel_fmax > sample_rate / 2.0) {
      throw Error(ErrorCode::InvalidConfig, "need 0 <= mel_fmin < mel_fmax <= sample_rate/2");
    }
    if (!(log_floor > 0.0)) throw Error(ErrorCode::InvalidConfig, "log_floor must be positive");
  }
};

inline double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
inline double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

// Centers (in Hz) of the n_mels filters; edges are the first and last of the
// n_mels + 2 equally mel-spaced points.
inline std::vector<double> mel_points_hz(const MfccConfig& cfg) {
  const double lo = hz_to_mel(cfg.mel_fmin);
  const double hi = hz_to_mel(cfg.mel_fmax);
  std::vector<double> points(static_cast<std::size_t>(cfg.n_mels) + 2);
  for (std::size_t i = 0; i < points.size(); ++i) {
    points[i] = mel_to_hz(lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(cfg.n_mels + 1));
  }
  return points;
}

// Triangular filters with unit peak, evaluated at the exact bin frequencies.
inline Matrix mel_filterbank(const MfccConfig& cfg) {
  cfg.validate();
  const auto points = mel_points_hz(cfg);
  const int bins = cfg.n_fft_bins();
  Matrix fb = Matrix::Zero(cfg.n_mels, bins);
  for (int m = 0; m < cfg.n_mels; ++m) {
    const double left = points[m], center = points[m + 1], right = points[m + 2];
    for (int k = 0; k < bins; ++k) {
      const double f = static_cast<double>(k) * cfg.sample_rate / cfg.frame_len;
      if (f > left && f <= center) {
        fb(m, k) = (f - left) / (center - left);
      } else if (f > center && f < right) {
        fb(m, k) = (right - f) / (right - center);
      }
    }
  }
  return fb;
}

inline int frame_count(std::size_t n_samples, const MfccConfig& cfg) {
  if (n_samples < static_cast<std::size_t>(cfg.frame_len)) return 0;
  return static_cast<int>((n_samples - cfg.frame_len) / cfg.hop) + 1;
}

struct FeatureMatrix {
  Matrix values;  // frames x n_coeffs
  MfccConfig config;

  int frames() const { return static_cast<int>(values.rows()); }
};

// Intermediates of one forward call; enough to run the adjoint.
struct MfccTape {
  MfccConfig config;
  std::size_t n_samples = 0;
  Matrix frames;      // windowed frames, T x frame_len
  Matrix re, im;      // DFT, T x bins
  Matrix power;       // T x bins
  Matrix mel_energy;  // T x n_mels, before the floor
};

// Precomputed linear maps for one MfccConfig. The DFT is an explicit matrix
// so that its adjoint is its transpose.
class MfccPlan {
 public:
  explicit MfccPlan(const MfccConfig& cfg) : cfg_(cfg) {
    cfg.validate();
    const int n = cfg.frame_len;
    const int bins = cfg.n_fft_bins();
    window_.resize(n);
    for (int i = 0; i < n; ++i) window_(i) = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * i / n);

    cos_.resize(n, bins);
    sin_.resize(n, bins);
    for (int i = 0; i < n; ++i) {
      for (int k = 0; k < bins; ++k) {
        // Reduce the index product mod n before scaling for accuracy.
        const auto phase_index = static_cast<long long>(i) * k % n;
        const double phase = 2.0 * std::numbers::pi * static_cast<double>(phase_index) / n;
        cos_(i, k) = std::cos(phase);
        sin_(i, k) = -std::sin(phase);
      }
    }

    mel_t_ = mel_filterbank(cfg).transpose();

    const int m = cfg.n_mels;
    dct_t_.resize(m, cfg.n_coeffs);
    for (int j = 0; j < m; ++j) {
      for (int k = 0; k < cfg.n_coeffs; ++k) {
        const double scale = k == 0 ? std::sqrt(1.0 / m) : std::sqrt(2.0 / m);
        dct_t_(j, k) = scale * std::cos(std::numbers::pi * k * (j + 0.5) / m);
      }
    }
  }

  const MfccConfig& config() const { return cfg_; }

  std::pair<FeatureMatrix, MfccTape> forward(std::span<const double> samples) const {
    const int frames = frame_count(samples.size(), cfg_);
    if (frames == 0) {
      throw Error(ErrorCode::TooShort, std::to_string(samples.size()) + " samples < frame_len " +
                                           std::to_string(cfg_.frame_len));
    }
    MfccTape tape;
    tape.config = cfg_;
    tape.n_samples = samples.size();
    tape.frames.resize(frames, cfg_.frame_len);
    for (int t = 0; t < frames; ++t) {
      const double* src = samples.data() + static_cast<std::size_t>(t) * cfg_.hop;
      for (int i = 0; i < cfg_.frame_len; ++i) tape.frames(t, i) = src[i] * window_(i);
    }
    tape.re.noalias() = tape.frames * cos_;
    tape.im.noalias() = tape.frames * sin_;
    tape.power = tape.re.cwiseAbs2() + tape.im.cwiseAbs2();
    tape.mel_energy.noalias() = tape.power * mel_t_;
    const Matrix log_mel = tape.mel_energy.cwiseMax(cfg_.log_floor).array().log().matrix();
    FeatureMatrix features{log_mel * dct_t_, cfg_};
    return {std::move(features), std::move(tape)};
  }

  std::vector<double> backward(const MfccTape& tape, const Matrix& grad_features) const {
    if (!(tape.config == cfg_) || grad_features.rows() != tape.mel_energy.rows() ||
        grad_features.cols() != cfg_.n_coeffs) {
      throw Error(ErrorCode::ShapeMismatch, "feature gradient does not match tape");
    }
    const Matrix grad_log = grad_features * dct_t_.transpose();
    // d log(max(u, floor)) / du is 1/u above the floor and 0 on the floored branch.
    Matrix grad_mel = grad_log;
    for (Eigen::Index t = 0; t < grad_mel.rows(); ++t) {
      for (Eigen::Index j = 0; j < grad_mel.cols(); ++j) {
        const double u = tape.mel_energy(t, j);
        grad_mel(t, j) = u > cfg_.log_floor ? grad_mel(t, j) / u : 0.0;
      }
    }
    const Matrix grad_power = grad_mel * mel_t_.transpose();
    const Matrix grad_re = 2.0 * tape.re.cwiseProduct(grad_power);
    const Matrix grad_im = 2.0 * tape.im.cwiseProduct(grad_power);
    Matrix grad_frames = grad_re * cos_.transpose();
    grad_frames.noalias() += grad_im * sin_.transpose();

    std::vector<double> grad(tape.n_samples, 0.0);
    for (Eigen::Index t = 0; t < grad_frames.rows(); ++t) {
      double* dst = grad.data() + static_cast<std::size_t>(t) * cfg_.hop;
      for (int i = 0; i < cfg_.frame_len; ++i) dst[i] += grad_frames(t, i) * window_(i);
    }
    return grad;
  }

 private:
  MfccConfig cfg_;
  RowVector window_;
  Matrix cos_, sin_;  // frame_len x bins
  Matrix mel_t_;      // bins x n_mels
  Matrix dct_t_;      // n_mels x n_coeffs
};

// Shared, immutable plan per distinct config.
inline std::shared_ptr<const MfccPlan> mfcc_plan(const MfccConfig& cfg) {
  static std::mutex mutex;
  static std::map<decltype(cfg.key()), std::shared_ptr<const MfccPlan>> cache;
  std::lock_guard lock(mutex);
  auto& slot = cache[cfg.key()];
  if (!slot) slot = std::make_shared<const MfccPlan>(cfg);
  return slot;
}

inline std::pair<FeatureMatrix, MfccTape> mfcc_forward(std::span<const double> samples,
                                                       const MfccConfig& cfg = {}) {
  return mfcc_plan(cfg)->forward(samples);
}

inline std::vector<double> mfcc_backward(const MfccTape& tape, const Matrix& grad_features) {
  return mfcc_plan(tape.config)->backward(tape, grad_features);
}

}  // namespace uap
