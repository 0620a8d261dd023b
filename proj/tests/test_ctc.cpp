#include <chrono>
#include <numbers>

#include "test_support.hpp"

using namespace uap;
using uap::testing::random_matrix;
using uap::testing::rel_err;

namespace {

Logits uniform(int frames, int classes) { return Logits{Matrix::Zero(frames, classes)}; }

// Logits whose argmax path is `path` (class indices).
Logits path_logits(const std::vector<int>& path, int classes) {
  Logits l{Matrix::Zero(static_cast<Eigen::Index>(path.size()), classes)};
  for (std::size_t t = 0; t < path.size(); ++t) l.values(static_cast<Eigen::Index>(t), path[t]) = 3.0;
  return l;
}

std::vector<int> random_labels(std::mt19937_64& gen, int frames, int symbols) {
  for (;;) {
    std::vector<int> labels(gen() % (frames + 1));
    for (auto& l : labels) l = static_cast<int>(gen() % symbols);
    if (ctc_min_frames(labels) <= frames) return labels;
  }
}

}  // namespace

TEST(CtcLoss, SingleFrameUniform) {
  const auto r = ctc_loss(uniform(1, 2), std::vector<int>{0});
  EXPECT_NEAR(r.loss, std::numbers::ln2, 1e-12);
  EXPECT_NEAR(ctc_loss_bruteforce(uniform(1, 2), std::vector<int>{0}), std::numbers::ln2, 1e-12);
}

TEST(CtcLoss, TwoFramesUniform) {
  // Paths a.a, a.-, -.a each with probability 1/4.
  EXPECT_NEAR(ctc_loss(uniform(2, 2), std::vector<int>{0}).loss, -std::log(0.75), 1e-12);
}

TEST(CtcLoss, InfeasibleTarget) {
  try {
    ctc_loss(uniform(1, 2), "aa", "a");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::InfeasibleTarget);
  }
  EXPECT_NO_THROW(ctc_loss(uniform(3, 2), "aa", "a"));
  EXPECT_EQ(ctc_min_frames(std::vector<int>{0, 0, 1, 1}), 6);
}

TEST(CtcLoss, EmptyTargetIsAllBlank) {
  std::mt19937_64 gen(1);
  const Logits l{random_matrix(gen, 4, 3)};
  const Matrix logp = ctc_detail::log_softmax(l.values);
  EXPECT_NEAR(ctc_loss(l, std::vector<int>{}).loss, -logp.col(2).sum(), 1e-12);
}

TEST(CtcLoss, NormalizesOverAllLabelings) {
  std::mt19937_64 gen(2);
  for (int trial = 0; trial < 20; ++trial) {
    const Logits l{trial == 0 ? Matrix::Zero(2, 2) : random_matrix(gen, 2, 2, 2.0)};
    double total = 0.0;
    for (const char* target : {"", "a", "aa"}) {
      // "aa" needs three frames; its probability is exactly zero.
      if (ctc_min_frames(encode_labels(target, "a")) > 2) {
        EXPECT_THROW(ctc_loss(l, target, "a"), Error);
        continue;
      }
      const auto r = ctc_loss(l, target, "a");
      EXPECT_GT(std::exp(-r.loss), 0.0);
      EXPECT_LE(std::exp(-r.loss), 1.0);
      total += std::exp(-r.loss);
    }
    EXPECT_NEAR(total, 1.0, 1e-6);
  }
}

TEST(CtcLoss, MatchesBruteForce) {
  std::mt19937_64 gen(3);
  const auto start = std::chrono::steady_clock::now();
  for (int trial = 0; trial < 200; ++trial) {
    const int frames = 1 + static_cast<int>(gen() % 6);
    const int symbols = 1 + static_cast<int>(gen() % 3);
    const Logits l{random_matrix(gen, frames, symbols + 1, 1.5)};
    const auto labels = random_labels(gen, frames, symbols);
    EXPECT_NEAR(ctc_loss(l, labels).loss, ctc_loss_bruteforce(l, labels), 1e-4) << "trial " << trial;
  }
  EXPECT_LT(std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count(), 10.0);
}

TEST(CtcLoss, BruteForceRefusesLargeInputs) {
  try {
    ctc_loss_bruteforce(uniform(9, 3), std::vector<int>{0});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::TooLargeForOracle);
  }
  EXPECT_THROW(ctc_loss_bruteforce(uniform(3, 5), std::vector<int>{0}), Error);
}

TEST(CtcLoss, GradientMatchesCentralDifferences) {
  std::mt19937_64 gen(4);
  for (int trial = 0; trial < 100; ++trial) {
    const int frames = trial == 0 ? 5 : 2 + static_cast<int>(gen() % 10);
    const int symbols = trial == 0 ? 3 : 1 + static_cast<int>(gen() % 4);
    const Logits l{random_matrix(gen, frames, symbols + 1)};
    const auto labels = random_labels(gen, frames, symbols);
    const auto r = ctc_loss(l, labels);
    const Matrix dir = random_matrix(gen, frames, symbols + 1);
    const double analytic = (r.grad_logits.array() * dir.array()).sum();
    const double h = 1e-5;
    const double numeric =
        (ctc_loss(Logits{l.values + h * dir}, labels).loss - ctc_loss(Logits{l.values - h * dir}, labels).loss) /
        (2.0 * h);
    EXPECT_LT(rel_err(analytic, numeric), 1e-3) << "trial " << trial;
  }
}

TEST(CtcLoss, LongSequenceStaysFinite) {
  std::mt19937_64 gen(5);
  const Logits l{random_matrix(gen, 600, 11, 4.0)};
  const auto r = ctc_loss(l, "abcdefghijabcdefghij", "abcdefghij");
  EXPECT_TRUE(std::isfinite(r.loss));
  EXPECT_TRUE(r.grad_logits.allFinite());
  // Each row of softmax - posterior sums to zero.
  for (int t = 0; t < 600; ++t) EXPECT_NEAR(r.grad_logits.row(t).sum(), 0.0, 1e-9);
}

TEST(GreedyDecode, CollapseRules) {
  const Alphabet ab = "ab";
  EXPECT_EQ(greedy_decode(path_logits({2, 0, 0, 2, 1}, 3), ab), "ab");
  EXPECT_EQ(greedy_decode(path_logits({0, 2, 0}, 3), ab), "aa");
  EXPECT_EQ(greedy_decode(path_logits({2, 2, 2}, 3), ab), "");
  EXPECT_EQ(greedy_decode(uniform(4, 3), ab), "a");  // ties go to the lowest index
  EXPECT_THROW(greedy_decode(uniform(4, 3), "abc"), Error);
}

TEST(GreedyDecode, NeverEmitsBlankOrRunDuplicates) {
  std::mt19937_64 gen(6);
  const Alphabet ab = "abc";
  for (int trial = 0; trial < 200; ++trial) {
    const Logits l{random_matrix(gen, 1 + gen() % 20, 4)};
    const auto path = greedy_path_labels(l);
    const auto text = greedy_decode(l, ab);
    EXPECT_EQ(text.size(), path.size());
    EXPECT_TRUE(std::all_of(text.begin(), text.end(), [&](char c) { return ab.find(c) != std::string::npos; }));
    // Reference collapse of the raw argmax path.
    std::string ref;
    int prev = -1;
    for (int t = 0; t < l.frames(); ++t) {
      Eigen::Index best = 0;
      l.values.row(t).maxCoeff(&best);
      if (best != prev && best != 3) ref.push_back(ab[static_cast<std::size_t>(best)]);
      prev = static_cast<int>(best);
    }
    EXPECT_EQ(text, ref);
  }
}
