#include <set>

#include "test_support.hpp"

using namespace uap;
using uap::testing::random_matrix;
using uap::testing::rel_err;

namespace {

const Alphabet kAlphabet = "abc";

FeatureMatrix random_features(std::mt19937_64& gen, const AcousticModel& m, int frames, double scale = 1.0) {
  return FeatureMatrix{random_matrix(gen, frames, m.feature_config.n_coeffs, scale), m.feature_config};
}

ArchSpec small_spec(Arch arch) {
  ArchSpec s;
  if (arch == Arch::DS_LITE) {
    s.hidden = 2;
  } else {
    s.channels = 3;
    s.dilations = {1, 2};
  }
  return s;
}

// Scalar objective <W, logits> so that the upstream gradient is W itself.
double objective(const AcousticModel& m, const FeatureMatrix& f, const Matrix& w) {
  return (model_forward(m, f).first.values.array() * w.array()).sum();
}

void check_feature_gradients(Arch arch, int instances) {
  std::mt19937_64 gen(arch == Arch::DS_LITE ? 21 : 22);
  for (int trial = 0; trial < instances; ++trial) {
    const auto m = init_model(arch, kAlphabet, 100 + trial, small_spec(arch));
    const auto f = random_features(gen, m, 5, 3.0);
    const Matrix w = random_matrix(gen, 5, m.classes());
    const auto [logits, tape] = model_forward(m, f);
    const auto g = model_backward(m, tape, w);
    const Matrix dir = random_matrix(gen, 5, m.feature_config.n_coeffs);
    const double analytic = (g.features.array() * dir.array()).sum();
    const double h = 1e-6;
    const double numeric = (objective(m, FeatureMatrix{f.values + h * dir, f.config}, w) -
                            objective(m, FeatureMatrix{f.values - h * dir, f.config}, w)) /
                           (2.0 * h);
    EXPECT_LT(rel_err(analytic, numeric), 1e-3) << arch_name(arch) << " trial " << trial;
  }
}

void check_param_gradients(Arch arch) {
  std::mt19937_64 gen(arch == Arch::DS_LITE ? 31 : 32);
  for (int trial = 0; trial < 10; ++trial) {
    const auto m = init_model(arch, kAlphabet, 200 + trial, small_spec(arch));
    const auto f = random_features(gen, m, 7, 3.0);
    const Matrix w = random_matrix(gen, 7, m.classes());
    const auto [logits, tape] = model_forward(m, f);
    const auto g = model_backward(m, tape, w);
    ASSERT_EQ(g.params.size(), m.params.size());
    for (std::size_t p = 0; p < m.params.size(); ++p) {
      const Matrix dir = random_matrix(gen, m.param(p).rows(), m.param(p).cols());
      auto shifted = [&](double h) {
        AcousticModel copy = m;
        copy.params[p].value += h * dir;
        return objective(copy, f, w);
      };
      const double h = 1e-6;
      const double numeric = (shifted(h) - shifted(-h)) / (2.0 * h);
      const double analytic = (g.params[p].array() * dir.array()).sum();
      EXPECT_LT(rel_err(analytic, numeric), 1e-3) << m.params[p].name << " trial " << trial;
    }
  }
}

}  // namespace

TEST(Arch, NamesRoundTrip) {
  EXPECT_EQ(parse_arch("DS_LITE"), Arch::DS_LITE);
  EXPECT_EQ(parse_arch(arch_name(Arch::WN_LITE)), Arch::WN_LITE);
  EXPECT_THROW(parse_arch("LSTM"), Error);
}

TEST(Model, ForwardShapesAndSoftmax) {
  std::mt19937_64 gen(1);
  for (Arch arch : {Arch::DS_LITE, Arch::WN_LITE}) {
    const auto m = init_model(arch, "abcdefghij", 3);
    const auto f = random_features(gen, m, 40, 5.0);
    const auto [logits, tape] = model_forward(m, f);
    EXPECT_EQ(logits.frames(), 40);
    EXPECT_EQ(logits.classes(), 11);
    const Matrix p = softmax(logits.values);
    for (int t = 0; t < 40; ++t) EXPECT_NEAR(p.row(t).sum(), 1.0, 1e-6);
    EXPECT_EQ(model_forward(m, f).first.values, logits.values);
  }
}

TEST(Model, RejectsForeignFeatures) {
  const auto m = init_model(Arch::DS_LITE, kAlphabet, 1);
  MfccConfig other;
  other.n_mels = 20;
  try {
    model_forward(m, FeatureMatrix{Matrix::Zero(4, 13), other});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::ShapeMismatch);
  }
  EXPECT_THROW(model_forward(m, FeatureMatrix{Matrix::Zero(4, 12), m.feature_config}), Error);
  const auto [logits, tape] = model_forward(m, FeatureMatrix{Matrix::Zero(4, 13), m.feature_config});
  EXPECT_THROW(model_backward(m, tape, Matrix::Zero(5, 4)), Error);
}

TEST(Model, ZeroUpstreamGivesZeroGradients) {
  std::mt19937_64 gen(2);
  for (Arch arch : {Arch::DS_LITE, Arch::WN_LITE}) {
    const auto m = init_model(arch, kAlphabet, 4);
    const auto f = random_features(gen, m, 9);
    const auto [logits, tape] = model_forward(m, f);
    const auto g = model_backward(m, tape, Matrix::Zero(9, m.classes()));
    EXPECT_TRUE(g.features.isZero(0.0));
    for (const auto& p : g.params) EXPECT_TRUE(p.isZero(0.0));
  }
}

TEST(Model, FeatureGradientsDsLite) { check_feature_gradients(Arch::DS_LITE, 50); }
TEST(Model, FeatureGradientsWnLite) { check_feature_gradients(Arch::WN_LITE, 50); }
TEST(Model, ParamGradientsDsLite) { check_param_gradients(Arch::DS_LITE); }
TEST(Model, ParamGradientsWnLite) { check_param_gradients(Arch::WN_LITE); }

TEST(Model, ClippedUnitPassesNoGradient) {
  // One hidden unit per layer; fc1 drives the unit far above the cap.
  ArchSpec spec;
  spec.hidden = 1;
  auto m = init_model(Arch::DS_LITE, "a", 5, spec);
  m.params[0].value.setConstant(10.0);
  m.params[1].value.setConstant(0.0);
  const FeatureMatrix f{Matrix::Constant(3, 13, 1.0), m.feature_config};
  const auto [logits, tape] = model_forward(m, f);
  ASSERT_GT(tape.preacts[0].minCoeff(), nn_detail::kReluCap);
  const auto g = model_backward(m, tape, Matrix::Ones(3, 2));
  EXPECT_TRUE(g.features.isZero(0.0));
  EXPECT_TRUE(g.params[0].isZero(0.0));
  EXPECT_TRUE(g.params[1].isZero(0.0));
  EXPECT_EQ(tape.activations[0].maxCoeff(), 20.0);
}

TEST(Model, ArchitecturesHaveDisjointWeightShapes) {
  const auto ds = init_model(Arch::DS_LITE, "abcdefghij", 1);
  const auto wn = init_model(Arch::WN_LITE, "abcdefghij", 1);
  std::set<std::pair<Eigen::Index, Eigen::Index>> ds_shapes;
  for (const auto& p : ds.params) {
    if (p.name.ends_with(".w")) ds_shapes.insert({p.value.rows(), p.value.cols()});
  }
  for (const auto& p : wn.params) {
    if (p.name.ends_with(".w")) {
      EXPECT_FALSE(ds_shapes.contains({p.value.rows(), p.value.cols()})) << p.name;
    }
  }
  EXPECT_EQ(ds.params.size(), 6u);
  EXPECT_EQ(wn.params.size(), 12u);
}

TEST(Model, TranscribeComposesPipeline) {
  const auto& toy = uap::testing::toy_setup();
  for (std::size_t i = 0; i < 10; ++i) {
    const auto& w = toy.corpora.test.items[i].audio;
    const auto logits = model_forward(toy.model, mfcc_forward(w.samples, toy.model.feature_config).first).first;
    EXPECT_EQ(transcribe(toy.model, w), greedy_decode(logits, toy.model.alphabet));
  }
  try {
    transcribe(toy.model, Waveform{std::vector<double>(100, 0.0)});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::TooShort);
  }
}

TEST(Train, ZeroEpochsReturnsInitialization) {
  const auto& toy = uap::testing::toy_setup();
  TrainConfig tc;
  tc.epochs = 0;
  const auto m = train_model(toy.corpora.val, Arch::WN_LITE, tc);
  const auto init = init_model(Arch::WN_LITE, toy.corpora.val.alphabet, tc.seed);
  ASSERT_EQ(m.params.size(), init.params.size());
  for (std::size_t i = 0; i < m.params.size(); ++i) EXPECT_EQ(m.param(i), init.param(i));
}

TEST(Train, DeterministicPerSeed) {
  const auto& toy = uap::testing::toy_setup();
  TrainConfig tc;
  tc.epochs = 2;
  const auto a = train_model(toy.corpora.val, Arch::DS_LITE, tc);
  const auto b = train_model(toy.corpora.val, Arch::DS_LITE, tc);
  for (std::size_t i = 0; i < a.params.size(); ++i) EXPECT_EQ(a.param(i), b.param(i));
  tc.seed = 2;
  const auto c = train_model(toy.corpora.val, Arch::DS_LITE, tc);
  EXPECT_NE(a.param(0), c.param(0));
}

TEST(Train, LossDecreasesAndErrors) {
  const auto& toy = uap::testing::toy_setup();
  TrainConfig tc;
  tc.epochs = 5;
  std::vector<double> losses;
  train_model(toy.corpora.train.prefix(64), Arch::DS_LITE, tc, {}, {}, &losses);
  ASSERT_EQ(losses.size(), 5u);
  EXPECT_LT(losses.back(), losses.front());
  try {
    train_model(Corpus{{}, "abc"}, Arch::DS_LITE, tc);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::EmptyCorpus);
  }
  auto poisoned = toy.corpora.train.prefix(4);
  poisoned.items[2].audio.samples[700] = std::nan("");
  try {
    train_model(poisoned, Arch::DS_LITE, tc);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::DivergedTraining);
  }
}

TEST(Train, SmallVictimLearnsTheToyTask) {
  const auto& toy = uap::testing::toy_setup();
  std::size_t exact = 0;
  for (const auto& item : toy.corpora.train.items) exact += transcribe(toy.model, item.audio) == item.transcript;
  EXPECT_GE(static_cast<double>(exact) / toy.corpora.train.size(), 0.95);
  EXPECT_LE(label_cer(toy.model, toy.corpora.test), 0.05);
}
