#pragma once

#include <cmath>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "uap/audio.hpp"
#include "uap/ctc.hpp"
#include "uap/dsp.hpp"
#include "uap/error.hpp"
#include "uap/rng.hpp"
#include "uap/tensor.hpp"

namespace uap {

enum class Arch { DS_LITE, WN_LITE };

constexpr std::string_view arch_name(Arch arch) {
  return arch == Arch::DS_LITE ? "DS_LITE" : "WN_LITE";
}

inline Arch parse_arch(std::string_view name) {
  if (name == "DS_LITE" || name == "ds_lite") return Arch::DS_LITE;
  if (name == "WN_LITE" || name == "wn_lite") return Arch::WN_LITE;
  throw Error(ErrorCode::InvalidConfig, "unknown architecture '" + std::string(name) + "'");
}

// Layer sizes. DS_LITE uses hidden/context, WN_LITE uses channels/kernel/dilations.
struct ArchSpec {
  int hidden = 256;
  int context = 4;
  int channels = 64;
  int kernel = 3;
  std::vector<int> dilations{1, 2, 4, 8};

  bool operator==(const ArchSpec&) const = default;
};

struct Param {
  std::string name;
  Matrix value;
};

struct AcousticModel {
  Arch arch = Arch::DS_LITE;
  ArchSpec spec;
  std::vector<Param> params;
  Alphabet alphabet;
  MfccConfig feature_config;

  int classes() const { return static_cast<int>(alphabet.size()) + 1; }

  const Matrix& param(std::size_t index) const { return params[index].value; }

  const Param* find(std::string_view name) const {
    for (const auto& p : params) {
      if (p.name == name) return &p;
    }
    return nullptr;
  }
};

using ParamGrads = std::vector<Matrix>;  // parallel to AcousticModel::params

// Names and shapes in canonical order for an architecture.
inline std::vector<std::pair<std::string, std::pair<int, int>>> param_layout(
    Arch arch, const ArchSpec& spec, int n_coeffs, int classes) {
  std::vector<std::pair<std::string, std::pair<int, int>>> layout;
  if (arch == Arch::DS_LITE) {
    const int in = (2 * spec.context + 1) * n_coeffs;
    layout.push_back({"fc1.w", {in, spec.hidden}});
    layout.push_back({"fc1.b", {1, spec.hidden}});
    layout.push_back({"fc2.w", {spec.hidden, spec.hidden}});
    layout.push_back({"fc2.b", {1, spec.hidden}});
    layout.push_back({"out.w", {spec.hidden, classes}});
    layout.push_back({"out.b", {1, classes}});
  } else {
    layout.push_back({"in.w", {n_coeffs, spec.channels}});
    layout.push_back({"in.b", {1, spec.channels}});
    for (std::size_t l = 0; l < spec.dilations.size(); ++l) {
      const auto prefix = "conv" + std::to_string(l);
      layout.push_back({prefix + ".w", {spec.kernel * spec.channels, spec.channels}});
      layout.push_back({prefix + ".b", {1, spec.channels}});
    }
    layout.push_back({"out.w", {spec.channels, classes}});
    layout.push_back({"out.b", {1, classes}});
  }
  return layout;
}

// Seeded uniform(-s, s) initialization with s = 1/sqrt(fan_in), where fan_in
// is the input width of the layer the tensor belongs to.
inline AcousticModel init_model(Arch arch, const Alphabet& alphabet, std::uint64_t seed,
                                const ArchSpec& spec = {}, const MfccConfig& mfcc = {}) {
  mfcc.validate();
  if (arch == Arch::WN_LITE && (spec.kernel < 1 || spec.kernel % 2 == 0)) {
    throw Error(ErrorCode::InvalidConfig, "WN_LITE kernel must be odd");
  }
  AcousticModel m{arch, spec, {}, alphabet, mfcc};
  Rng rng(seed);
  Eigen::Index fan_in = 1;
  for (const auto& [name, shape] : param_layout(arch, spec, mfcc.n_coeffs, m.classes())) {
    Param p{name, Matrix::Zero(shape.first, shape.second)};
    if (name.ends_with(".w")) fan_in = p.value.rows();
    const double s = 1.0 / std::sqrt(static_cast<double>(fan_in));
    for (Eigen::Index i = 0; i < p.value.size(); ++i) p.value.data()[i] = rng.uniform(-s, s);
    m.params.push_back(std::move(p));
  }
  return m;
}

namespace nn_detail {

inline constexpr double kReluCap = 20.0;

inline void add_bias(Matrix& x, const Matrix& bias) { x.rowwise() += bias.row(0); }

// Stacks, for every frame, the frames at the given offsets (zero outside).
inline Matrix gather_offsets(const Matrix& x, std::span<const int> offsets) {
  const auto frames = x.rows();
  const auto width = x.cols();
  Matrix out = Matrix::Zero(frames, width * static_cast<Eigen::Index>(offsets.size()));
  for (Eigen::Index t = 0; t < frames; ++t) {
    for (std::size_t j = 0; j < offsets.size(); ++j) {
      const Eigen::Index src = t + offsets[j];
      if (src < 0 || src >= frames) continue;
      out.block(t, static_cast<Eigen::Index>(j) * width, 1, width) = x.row(src);
    }
  }
  return out;
}

// Adjoint of gather_offsets.
inline Matrix scatter_offsets(const Matrix& grad, std::span<const int> offsets, Eigen::Index width) {
  const auto frames = grad.rows();
  Matrix out = Matrix::Zero(frames, width);
  for (Eigen::Index t = 0; t < frames; ++t) {
    for (std::size_t j = 0; j < offsets.size(); ++j) {
      const Eigen::Index dst = t + offsets[j];
      if (dst < 0 || dst >= frames) continue;
      out.row(dst) += grad.block(t, static_cast<Eigen::Index>(j) * width, 1, width);
    }
  }
  return out;
}

inline std::vector<int> context_offsets(int context) {
  std::vector<int> offsets;
  for (int j = -context; j <= context; ++j) offsets.push_back(j);
  return offsets;
}

inline std::vector<int> conv_offsets(int kernel, int dilation) {
  std::vector<int> offsets;
  for (int j = 0; j < kernel; ++j) offsets.push_back((j - (kernel - 1) / 2) * dilation);
  return offsets;
}

}  // namespace nn_detail

struct ModelTape {
  Arch arch = Arch::DS_LITE;
  Matrix features;                   // T x n_coeffs
  std::vector<Matrix> inputs;        // per layer: the matrix multiplied by that layer's weight
  std::vector<Matrix> activations;   // per hidden layer: post-nonlinearity output
  std::vector<Matrix> preacts;       // DS_LITE: pre-clip values
};

inline std::pair<Logits, ModelTape> model_forward(const AcousticModel& m, const FeatureMatrix& feats) {
  using namespace nn_detail;
  const int n_coeffs = m.feature_config.n_coeffs;
  if (feats.values.cols() != n_coeffs || !(feats.config == m.feature_config)) {
    throw Error(ErrorCode::ShapeMismatch, "features do not match the model's front-end config");
  }
  ModelTape tape;
  tape.arch = m.arch;
  tape.features = feats.values;

  Logits logits;
  if (m.arch == Arch::DS_LITE) {
    const auto offsets = context_offsets(m.spec.context);
    Matrix x = gather_offsets(tape.features, offsets);
    for (std::size_t layer = 0; layer < 2; ++layer) {
      Matrix pre = x * m.param(2 * layer);
      add_bias(pre, m.param(1 + 2 * layer));
      Matrix act = pre.cwiseMax(0.0).cwiseMin(kReluCap);
      tape.inputs.push_back(std::move(x));
      tape.preacts.push_back(std::move(pre));
      tape.activations.push_back(act);
      x = std::move(act);
    }
    logits.values = x * m.param(4);
    add_bias(logits.values, m.param(5));
    tape.inputs.push_back(std::move(x));
  } else {
    Matrix h = tape.features * m.param(0);
    add_bias(h, m.param(1));
    tape.inputs.push_back(tape.features);
    for (std::size_t l = 0; l < m.spec.dilations.size(); ++l) {
      const auto offsets = conv_offsets(m.spec.kernel, m.spec.dilations[l]);
      Matrix u = gather_offsets(h, offsets);
      Matrix a = u * m.param(2 + 2 * l);
      add_bias(a, m.param(3 + 2 * l));
      a = a.array().tanh().matrix();
      h += a;
      tape.inputs.push_back(std::move(u));
      tape.activations.push_back(std::move(a));
    }
    const std::size_t out = 2 + 2 * m.spec.dilations.size();
    logits.values = h * m.param(out);
    add_bias(logits.values, m.param(out + 1));
    tape.inputs.push_back(std::move(h));
  }
  return {std::move(logits), std::move(tape)};
}

struct ModelGrads {
  Matrix features;  // T x n_coeffs
  ParamGrads params;
};

// Reverse pass. Parameter gradients are skipped when want_params is false,
// which is the attack's hot path.
inline ModelGrads model_backward(const AcousticModel& m, const ModelTape& tape, const Matrix& grad_logits,
                                 bool want_params = true) {
  using namespace nn_detail;
  if (tape.arch != m.arch || grad_logits.rows() != tape.features.rows() ||
      grad_logits.cols() != m.classes()) {
    throw Error(ErrorCode::ShapeMismatch, "logit gradient does not match tape");
  }
  const int n_coeffs = m.feature_config.n_coeffs;
  ModelGrads g;
  if (want_params) {
    g.params.reserve(m.params.size());
    for (const auto& p : m.params) g.params.push_back(Matrix::Zero(p.value.rows(), p.value.cols()));
  }
  auto accumulate = [&](std::size_t index, const Matrix& input, const Matrix& grad_out) {
    if (!want_params) return;
    g.params[index].noalias() += input.transpose() * grad_out;
    g.params[index + 1] += grad_out.colwise().sum();
  };

  if (m.arch == Arch::DS_LITE) {
    Matrix grad = grad_logits;
    accumulate(4, tape.inputs[2], grad);
    Matrix grad_x = grad * m.param(4).transpose();
    for (int layer = 1; layer >= 0; --layer) {
      const Matrix& pre = tape.preacts[static_cast<std::size_t>(layer)];
      for (Eigen::Index i = 0; i < grad_x.size(); ++i) {
        const double z = pre.data()[i];
        if (!(z > 0.0 && z < kReluCap)) grad_x.data()[i] = 0.0;
      }
      accumulate(2 * static_cast<std::size_t>(layer), tape.inputs[static_cast<std::size_t>(layer)], grad_x);
      grad_x = grad_x * m.param(2 * static_cast<std::size_t>(layer)).transpose();
    }
    g.features = scatter_offsets(grad_x, context_offsets(m.spec.context), n_coeffs);
  } else {
    const std::size_t layers = m.spec.dilations.size();
    const std::size_t out = 2 + 2 * layers;
    accumulate(out, tape.inputs.back(), grad_logits);
    Matrix grad_h = grad_logits * m.param(out).transpose();
    for (std::size_t l = layers; l-- > 0;) {
      const Matrix& a = tape.activations[l];
      const Matrix grad_pre = grad_h.cwiseProduct((1.0 - a.array().square()).matrix());
      accumulate(2 + 2 * l, tape.inputs[l + 1], grad_pre);
      const Matrix grad_u = grad_pre * m.param(2 + 2 * l).transpose();
      grad_h += scatter_offsets(grad_u, conv_offsets(m.spec.kernel, m.spec.dilations[l]), m.spec.channels);
    }
    accumulate(0, tape.inputs[0], grad_h);
    g.features = grad_h * m.param(0).transpose();
  }
  return g;
}

inline Logits model_logits(const AcousticModel& m, const Waveform& w) {
  auto [features, tape] = mfcc_forward(w.samples, m.feature_config);
  return model_forward(m, features).first;
}

inline Transcript transcribe(const AcousticModel& m, const Waveform& w) {
  return greedy_decode(model_logits(m, w), m.alphabet);
}

struct TrainConfig {
  int epochs = 30;
  int batch_size = 8;
  double learning_rate = 1e-4;
  double momentum = 0.9;
  std::uint64_t seed = 1;
};

// Mini-batch SGD with classical momentum on the mean CTC loss. Sequential and
// deterministic for a given seed.
inline AcousticModel train_model(const Corpus& corpus, Arch arch, const TrainConfig& tc,
                                 const ArchSpec& spec = {}, const MfccConfig& mfcc = {},
                                 std::vector<double>* epoch_losses = nullptr) {
  if (corpus.empty()) throw Error(ErrorCode::EmptyCorpus, "training corpus is empty");
  if (tc.epochs < 0 || !(tc.learning_rate > 0.0) || tc.batch_size < 1) {
    throw Error(ErrorCode::InvalidConfig, "need epochs >= 0, learning_rate > 0, batch_size >= 1");
  }
  AcousticModel m = init_model(arch, corpus.alphabet, tc.seed, spec, mfcc);

  std::vector<FeatureMatrix> features;
  std::vector<std::vector<int>> labels;
  features.reserve(corpus.size());
  for (const auto& item : corpus.items) {
    features.push_back(mfcc_forward(item.audio.samples, mfcc).first);
    labels.push_back(encode_labels(item.transcript, corpus.alphabet));
  }

  ParamGrads velocity;
  for (const auto& p : m.params) velocity.push_back(Matrix::Zero(p.value.rows(), p.value.cols()));

  Rng rng(tc.seed ^ 0x9E3779B97F4A7C15ULL);
  std::vector<std::size_t> order(corpus.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  for (int epoch = 0; epoch < tc.epochs; ++epoch) {
    rng.shuffle(order);
    double epoch_loss = 0.0;
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(tc.batch_size)) {
      const std::size_t stop = std::min(order.size(), start + static_cast<std::size_t>(tc.batch_size));
      ParamGrads batch;
      for (const auto& p : m.params) batch.push_back(Matrix::Zero(p.value.rows(), p.value.cols()));
      for (std::size_t b = start; b < stop; ++b) {
        const std::size_t i = order[b];
        auto [logits, tape] = model_forward(m, features[i]);
        const auto ctc = ctc_loss(logits, labels[i]);
        if (!std::isfinite(ctc.loss)) {
          throw Error(ErrorCode::DivergedTraining, "non-finite loss in epoch " + std::to_string(epoch));
        }
        epoch_loss += ctc.loss;
        auto grads = model_backward(m, tape, ctc.grad_logits);
        for (std::size_t k = 0; k < batch.size(); ++k) batch[k] += grads.params[k];
      }
      const double scale = 1.0 / static_cast<double>(stop - start);
      for (std::size_t k = 0; k < m.params.size(); ++k) {
        velocity[k] = tc.momentum * velocity[k] - (tc.learning_rate * scale) * batch[k];
        m.params[k].value += velocity[k];
        if (!m.params[k].value.allFinite()) {
          throw Error(ErrorCode::DivergedTraining, "non-finite parameter " + m.params[k].name);
        }
      }
    }
    if (epoch_losses) epoch_losses->push_back(epoch_loss / static_cast<double>(corpus.size()));
  }
  return m;
}

}  // namespace uap
