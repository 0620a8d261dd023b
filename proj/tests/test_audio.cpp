#include <fstream>

#include "test_support.hpp"

using namespace uap;
using uap::testing::TempDir;

namespace {

std::vector<unsigned char> wav_bytes(std::uint16_t format, std::uint16_t channels, std::uint32_t rate,
                                     std::uint16_t bits, std::uint32_t frames) {
  std::vector<unsigned char> out;
  auto put32 = [&](std::uint32_t v) { for (int i = 0; i < 4; ++i) out.push_back((v >> (8 * i)) & 0xFF); };
  auto put16 = [&](std::uint16_t v) { out.push_back(v & 0xFF); out.push_back(v >> 8); };
  const std::uint32_t data = frames * channels * bits / 8;
  out.insert(out.end(), {'R', 'I', 'F', 'F'});
  put32(36 + data);
  out.insert(out.end(), {'W', 'A', 'V', 'E', 'f', 'm', 't', ' '});
  put32(16);
  put16(format);
  put16(channels);
  put32(rate);
  put32(rate * channels * bits / 8);
  put16(static_cast<std::uint16_t>(channels * bits / 8));
  put16(bits);
  out.insert(out.end(), {'d', 'a', 't', 'a'});
  put32(data);
  for (std::uint32_t i = 0; i < data; ++i) out.push_back(static_cast<unsigned char>(i * 7));
  return out;
}

void dump(const std::filesystem::path& p, const std::vector<unsigned char>& bytes) {
  std::ofstream out(p, std::ios::binary);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

ErrorCode code_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "expected uap::Error";
  return ErrorCode::IoError;
}

}  // namespace

TEST(Wav, ReadsPcm16MonoFile) {
  TempDir dir;
  dump(dir / "a.wav", wav_bytes(1, 1, 16000, 16, 1600));
  const auto w = read_wav(dir / "a.wav");
  ASSERT_EQ(w.size(), 1600u);
  EXPECT_EQ(w.sample_rate, 16000);
  for (double s : w.samples) {
    EXPECT_GE(s, -32768.0);
    EXPECT_LE(s, 32767.0);
    EXPECT_EQ(s, std::round(s));
  }
}

TEST(Wav, RoundTripMatchesRoundedSamples) {
  TempDir dir;
  Waveform w;
  std::mt19937_64 gen(3);
  std::uniform_real_distribution<double> u(-33000.0, 33000.0);
  for (int i = 0; i < 4000; ++i) w.samples.push_back(u(gen));
  w.samples.push_back(2.5);
  w.samples.push_back(-2.5);
  write_wav(dir / "rt.wav", w);
  const auto back = read_wav(dir / "rt.wav");
  ASSERT_EQ(back.size(), w.size());
  for (std::size_t i = 0; i < w.size(); ++i) {
    const double expected = std::clamp(std::round(w.samples[i]), -32768.0, 32767.0);
    ASSERT_EQ(back.samples[i], expected) << i;
  }
  EXPECT_EQ(back.samples[4000], 3.0);
  EXPECT_EQ(back.samples[4001], -3.0);
}

TEST(Wav, IntegerSamplesAreIdentity) {
  TempDir dir;
  Waveform w;
  for (int v = -32768; v <= 32767; v += 97) w.samples.push_back(v);
  w.samples.push_back(32767);
  write_wav(dir / "id.wav", w);
  EXPECT_EQ(read_wav(dir / "id.wav").samples, w.samples);
}

TEST(Wav, ZeroWaveform) {
  TempDir dir;
  write_wav(dir / "z.wav", Waveform{std::vector<double>(100, 0.0)});
  EXPECT_EQ(std::filesystem::file_size(dir / "z.wav"), 44u + 200u);
  const auto w = read_wav(dir / "z.wav");
  EXPECT_EQ(w.samples, std::vector<double>(100, 0.0));
}

TEST(Wav, ClampRules) {
  EXPECT_EQ(quantize_sample(32767.6), 32767);
  EXPECT_EQ(quantize_sample(-40000.0), -32768);
  EXPECT_EQ(quantize_sample(0.5), 1);
  EXPECT_EQ(quantize_sample(-0.5), -1);
  TempDir dir;
  write_wav(dir / "c.wav", Waveform{{32767.6, -40000.0}});
  EXPECT_EQ(read_wav(dir / "c.wav").samples, (std::vector<double>{32767.0, -32768.0}));
}

TEST(Wav, Errors) {
  TempDir dir;
  dump(dir / "stereo.wav", wav_bytes(1, 2, 44100, 16, 100));
  dump(dir / "float.wav", wav_bytes(3, 1, 16000, 32, 100));
  dump(dir / "rate.wav", wav_bytes(1, 1, 8000, 16, 100));
  auto truncated = wav_bytes(1, 1, 16000, 16, 100);
  truncated.resize(truncated.size() - 50);
  dump(dir / "trunc.wav", truncated);
  dump(dir / "junk.wav", {'n', 'o', 'p', 'e'});
  EXPECT_EQ(code_of([&] { read_wav(dir / "stereo.wav"); }), ErrorCode::UnsupportedFormat);
  EXPECT_EQ(code_of([&] { read_wav(dir / "float.wav"); }), ErrorCode::UnsupportedFormat);
  EXPECT_EQ(code_of([&] { read_wav(dir / "rate.wav"); }), ErrorCode::UnsupportedFormat);
  EXPECT_EQ(code_of([&] { read_wav(dir / "trunc.wav"); }), ErrorCode::CorruptFile);
  EXPECT_EQ(code_of([&] { read_wav(dir / "junk.wav"); }), ErrorCode::CorruptFile);
  EXPECT_EQ(code_of([&] { read_wav(dir / "absent.wav"); }), ErrorCode::NotFound);
  EXPECT_EQ(code_of([&] { write_wav(dir / "no" / "such" / "dir.wav", Waveform{{1.0}}); }), ErrorCode::IoError);
}

class Manifest : public ::testing::Test {
 protected:
  void SetUp() override {
    write_wav(dir_ / "one.wav", Waveform{std::vector<double>(600, 1.0)});
    write_wav(dir_ / "two.wav", Waveform{std::vector<double>(700, 2.0)});
  }
  std::filesystem::path write(const std::string& text) {
    const auto p = dir_ / "m.csv";
    std::ofstream(p) << text;
    return p;
  }
  TempDir dir_;
  const Alphabet alphabet_ = "abcdefghij ";
};

TEST_F(Manifest, LoadsRowsInOrder) {
  const auto c = load_manifest(write("path,transcript\ntwo.wav,ab c\none.wav,\"j,a\"\n"), "abcdefghij ,");
  ASSERT_EQ(c.size(), 2u);
  EXPECT_EQ(c.items[0].transcript, "ab c");
  EXPECT_EQ(c.items[0].audio.size(), 700u);
  EXPECT_EQ(c.items[1].transcript, "j,a");
  EXPECT_EQ(c.items[1].audio.samples.front(), 1.0);
  const auto again = load_manifest(dir_ / "m.csv", "abcdefghij ,");
  EXPECT_EQ(again.items[0].audio_path, c.items[0].audio_path);
  EXPECT_EQ(again.items[1].transcript, c.items[1].transcript);
}

TEST_F(Manifest, Errors) {
  EXPECT_EQ(code_of([&] { load_manifest(write("path,transcript\none.wav,ab#\n"), alphabet_); }),
            ErrorCode::InvalidTranscript);
  EXPECT_EQ(code_of([&] { load_manifest(write("path,transcript\nmissing.wav,ab\n"), alphabet_); }),
            ErrorCode::MissingAudio);
  EXPECT_EQ(code_of([&] { load_manifest(write("file,text\none.wav,ab\n"), alphabet_); }),
            ErrorCode::MalformedManifest);
  EXPECT_EQ(code_of([&] { load_manifest(write("path,transcript\none.wav\n"), alphabet_); }),
            ErrorCode::MalformedManifest);
  EXPECT_EQ(code_of([&] { load_manifest(write("path,transcript\n\"one.wav,ab\n"), alphabet_); }),
            ErrorCode::MalformedManifest);
  EXPECT_EQ(code_of([&] { load_manifest(dir_ / "absent.csv", alphabet_); }), ErrorCode::NotFound);
}

TEST(FitPerturbation, CropPadIdentity) {
  std::vector<double> v(150000);
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = static_cast<double>(i % 401) - 200.0;
  const auto cropped = fit_perturbation(v, 100000);
  ASSERT_EQ(cropped.size(), 100000u);
  EXPECT_TRUE(std::equal(cropped.begin(), cropped.end(), v.begin()));
  const auto padded = fit_perturbation(v, 200000);
  ASSERT_EQ(padded.size(), 200000u);
  EXPECT_TRUE(std::equal(v.begin(), v.end(), padded.begin()));
  EXPECT_TRUE(std::all_of(padded.begin() + 150000, padded.end(), [](double s) { return s == 0.0; }));
  EXPECT_EQ(fit_perturbation(v, v.size()), v);
}

TEST(FitPerturbation, PrefixProperty) {
  std::mt19937_64 gen(11);
  for (int trial = 0; trial < 50; ++trial) {
    const auto v = uap::testing::random_signal(gen, 1 + gen() % 300, 50.0);
    const std::size_t n = 1 + gen() % 400;
    const auto out = fit_perturbation(v, n);
    ASSERT_EQ(out.size(), n);
    const std::size_t keep = std::min(n, v.size());
    for (std::size_t i = 0; i < n; ++i) ASSERT_EQ(out[i], i < keep ? v[i] : 0.0);
  }
}
