#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "uap/attack.hpp"
#include "uap/error.hpp"
#include "uap/nn.hpp"

namespace uap {

using Json = nlohmann::json;

static_assert(std::endian::native == std::endian::little, "float blocks are written in native little-endian order");

namespace io_detail {

inline void write_f32(std::ofstream& out, std::span<const double> values) {
  std::vector<float> buffer(values.begin(), values.end());
  out.write(reinterpret_cast<const char*>(buffer.data()), static_cast<std::streamsize>(buffer.size() * sizeof(float)));
}

inline std::vector<double> read_f32(std::ifstream& in, std::size_t count, const std::filesystem::path& path) {
  std::vector<float> buffer(count);
  in.read(reinterpret_cast<char*>(buffer.data()), static_cast<std::streamsize>(count * sizeof(float)));
  if (static_cast<std::size_t>(in.gcount()) != count * sizeof(float)) {
    throw Error(ErrorCode::CorruptFile, path.string() + ": truncated float block");
  }
  return {buffer.begin(), buffer.end()};
}

inline Json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::NotFound, path.string());
  try {
    return Json::parse(in);
  } catch (const Json::exception& e) {
    throw Error(ErrorCode::CorruptFile, path.string() + ": " + e.what());
  }
}

inline void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::IoError, "cannot write " + path.string());
  out << text;
  if (!out) throw Error(ErrorCode::IoError, "write failed: " + path.string());
}

}  // namespace io_detail

inline Json to_json(const MfccConfig& c) {
  return {{"frame_len", c.frame_len}, {"hop", c.hop},           {"n_mels", c.n_mels},
          {"n_coeffs", c.n_coeffs},   {"mel_fmin", c.mel_fmin}, {"mel_fmax", c.mel_fmax},
          {"log_floor", c.log_floor}, {"sample_rate", c.sample_rate}};
}

inline MfccConfig mfcc_from_json(const Json& j) {
  MfccConfig c;
  c.frame_len = j.at("frame_len");
  c.hop = j.at("hop");
  c.n_mels = j.at("n_mels");
  c.n_coeffs = j.at("n_coeffs");
  c.mel_fmin = j.at("mel_fmin");
  c.mel_fmax = j.at("mel_fmax");
  c.log_floor = j.at("log_floor");
  c.sample_rate = j.at("sample_rate");
  c.validate();
  return c;
}

inline Json to_json(const ArchSpec& s) {
  return {{"hidden", s.hidden}, {"context", s.context}, {"channels", s.channels},
          {"kernel", s.kernel}, {"dilations", s.dilations}};
}

inline ArchSpec arch_spec_from_json(const Json& j) {
  ArchSpec s;
  s.hidden = j.at("hidden");
  s.context = j.at("context");
  s.channels = j.at("channels");
  s.kernel = j.at("kernel");
  s.dilations = j.at("dilations").get<std::vector<int>>();
  return s;
}

// Model file: one line of JSON header, then each parameter as row-major
// little-endian float32, in header order.
inline void save_model(const std::filesystem::path& path, const AcousticModel& m) {
  Json header = {{"format", "uap-acoustic-model"},
                 {"version", 1},
                 {"arch", arch_name(m.arch)},
                 {"alphabet", m.alphabet},
                 {"arch_spec", to_json(m.spec)},
                 {"feature_config", to_json(m.feature_config)},
                 {"params", Json::array()}};
  for (const auto& p : m.params) {
    header["params"].push_back({{"name", p.name}, {"shape", {p.value.rows(), p.value.cols()}}});
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::IoError, "cannot write " + path.string());
  out << header.dump() << '\n';
  for (const auto& p : m.params) io_detail::write_f32(out, {p.value.data(), static_cast<std::size_t>(p.value.size())});
  if (!out) throw Error(ErrorCode::IoError, "write failed: " + path.string());
}

inline AcousticModel load_model(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::NotFound, path.string());
  std::string line;
  if (!std::getline(in, line)) throw Error(ErrorCode::CorruptFile, path.string() + ": missing header");
  AcousticModel m;
  Json header;
  try {
    header = Json::parse(line);
    if (header.at("format") != "uap-acoustic-model") throw Error(ErrorCode::UnsupportedFormat, path.string());
    m.arch = parse_arch(header.at("arch").get<std::string>());
    m.alphabet = header.at("alphabet").get<std::string>();
    m.spec = arch_spec_from_json(header.at("arch_spec"));
    m.feature_config = mfcc_from_json(header.at("feature_config"));
  } catch (const Json::exception& e) {
    throw Error(ErrorCode::CorruptFile, path.string() + ": " + e.what());
  }

  const auto layout = param_layout(m.arch, m.spec, m.feature_config.n_coeffs, m.classes());
  const auto& entries = header.at("params");
  if (entries.size() != layout.size()) throw Error(ErrorCode::CorruptFile, path.string() + ": parameter count mismatch");
  for (std::size_t i = 0; i < layout.size(); ++i) {
    const auto& [name, shape] = layout[i];
    const auto rows = entries[i].at("shape").at(0).get<int>();
    const auto cols = entries[i].at("shape").at(1).get<int>();
    if (entries[i].at("name") != name || rows != shape.first || cols != shape.second) {
      throw Error(ErrorCode::CorruptFile, path.string() + ": unexpected parameter " + entries[i].dump());
    }
    const auto values = io_detail::read_f32(in, static_cast<std::size_t>(rows) * cols, path);
    Param p{name, Matrix(rows, cols)};
    std::copy(values.begin(), values.end(), p.value.data());
    if (!p.value.allFinite()) throw Error(ErrorCode::CorruptFile, path.string() + ": non-finite parameter " + name);
    m.params.push_back(std::move(p));
  }
  if (in.peek() != std::char_traits<char>::eof()) throw Error(ErrorCode::CorruptFile, path.string() + ": trailing bytes");
  return m;
}

inline std::filesystem::path sidecar_path(const std::filesystem::path& path) {
  return path.string() + ".json";
}

inline Json perturbation_metadata(const UniversalPerturbation& up) {
  return {{"epsilon", up.epsilon},
          {"alpha", up.config.alpha},
          {"reg_c", up.config.reg_c},
          {"threshold", up.config.threshold},
          {"delta", up.config.delta},
          {"inner_max_iters", up.config.inner_max_iters},
          {"max_epochs", up.config.max_epochs},
          {"length", up.samples.size()},
          {"model_id", up.model_id},
          {"seed", up.config.seed},
          {"epochs_run", up.epochs_run},
          {"val_success_history", up.history}};
}

// Raw float32 samples at `path`, metadata in `path`.json.
inline void save_perturbation(const std::filesystem::path& path, const UniversalPerturbation& up) {
  {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::IoError, "cannot write " + path.string());
    io_detail::write_f32(out, up.samples);
    if (!out) throw Error(ErrorCode::IoError, "write failed: " + path.string());
  }
  io_detail::write_text(sidecar_path(path), perturbation_metadata(up).dump(2) + "\n");
}

inline UniversalPerturbation load_perturbation(const std::filesystem::path& path) {
  const Json meta = io_detail::read_json_file(sidecar_path(path));
  UniversalPerturbation up;
  try {
    up.epsilon = meta.at("epsilon");
    up.config.epsilon = up.epsilon;
    up.config.alpha = meta.at("alpha");
    up.config.reg_c = meta.at("reg_c");
    up.config.threshold = meta.at("threshold");
    up.config.delta = meta.value("delta", up.config.delta);
    up.config.inner_max_iters = meta.value("inner_max_iters", up.config.inner_max_iters);
    up.config.max_epochs = meta.value("max_epochs", up.config.max_epochs);
    up.config.seed = meta.at("seed");
    up.model_id = meta.at("model_id");
    up.epochs_run = meta.at("epochs_run");
    up.history = meta.at("val_success_history").get<std::vector<double>>();
  } catch (const Json::exception& e) {
    throw Error(ErrorCode::CorruptFile, sidecar_path(path).string() + ": " + e.what());
  }
  const auto bytes = std::filesystem::file_size(path);
  if (bytes % sizeof(float) != 0) throw Error(ErrorCode::CorruptFile, path.string() + ": size not a multiple of 4");
  std::ifstream in(path, std::ios::binary);
  up.samples = io_detail::read_f32(in, bytes / sizeof(float), path);
  up.config.perturbation_len = up.samples.size();
  // float32 rounding is monotone, so in-budget samples stay within float(epsilon).
  const double bound = static_cast<float>(up.epsilon);
  for (double s : up.samples) {
    if (!std::isfinite(s) || std::abs(s) > bound) {
      throw Error(ErrorCode::CorruptFile, path.string() + ": sample outside the stated budget");
    }
  }
  return up;
}

}  // namespace uap
