#pragma once

#include <filesystem>
#include <fstream>
#include <set>
#include <string>
#include <vector>

#include "json.hpp"
#include "uap/attack.hpp"
#include "uap/error.hpp"
#include "uap/nn.hpp"
#include "uap/synth.hpp"

namespace uap {

// Everything the CLI needs, read from one flat JSON object. Attack keys keep
// their AttackConfig names; the other seeds are prefixed.
struct ExperimentConfig {
  SynthConfig synth;
  Arch arch = Arch::DS_LITE;
  Arch transfer_arch = Arch::WN_LITE;
  TrainConfig train;
  AttackConfig attack;
  std::vector<double> epsilon_grid{100, 150, 200, 300, 400};
  std::vector<std::size_t> sizes{10, 50, 100, 500};
  double size_epsilon = 200;
  std::uint64_t noise_seed = 12345;
  std::string val_manifest;   // empty: sibling val.csv of the train manifest
  std::string test_manifest;  // empty: sibling test.csv
};

inline nlohmann::json to_json(const ExperimentConfig& c) {
  return {
      {"alphabet", c.synth.alphabet},
      {"tone_ms", c.synth.tone_ms},
      {"gap_ms", c.synth.gap_ms},
      {"base_freq", c.synth.base_freq},
      {"freq_step", c.synth.freq_step},
      {"amplitude", c.synth.amplitude},
      {"noise_db", c.synth.noise_db},
      {"min_symbols", c.synth.min_symbols},
      {"max_symbols", c.synth.max_symbols},
      {"n_train", c.synth.n_train},
      {"n_val", c.synth.n_val},
      {"n_test", c.synth.n_test},
      {"synth_seed", c.synth.seed},
      {"arch", arch_name(c.arch)},
      {"transfer_arch", arch_name(c.transfer_arch)},
      {"epochs", c.train.epochs},
      {"batch_size", c.train.batch_size},
      {"learning_rate", c.train.learning_rate},
      {"momentum", c.train.momentum},
      {"train_seed", c.train.seed},
      {"epsilon", c.attack.epsilon},
      {"delta", c.attack.delta},
      {"threshold", c.attack.threshold},
      {"alpha", c.attack.alpha},
      {"reg_c", c.attack.reg_c},
      {"inner_max_iters", c.attack.inner_max_iters},
      {"max_epochs", c.attack.max_epochs},
      {"perturbation_len", c.attack.perturbation_len},
      {"seed", c.attack.seed},
      {"epsilon_grid", c.epsilon_grid},
      {"sizes", c.sizes},
      {"size_epsilon", c.size_epsilon},
      {"noise_seed", c.noise_seed},
      {"val_manifest", c.val_manifest},
      {"test_manifest", c.test_manifest},
  };
}

// Keys absent from `j` keep their defaults; unknown keys are rejected.
inline ExperimentConfig config_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw Error(ErrorCode::InvalidConfig, "config must be a JSON object");
  ExperimentConfig c;
  const auto known = to_json(c);
  for (const auto& [key, value] : j.items()) {
    if (!known.contains(key)) throw Error(ErrorCode::InvalidConfig, "unknown config key '" + key + "'");
  }
  try {
    auto get = [&](const char* key, auto& field) {
      if (j.contains(key)) field = j.at(key).get<std::decay_t<decltype(field)>>();
    };
    get("alphabet", c.synth.alphabet);
    get("tone_ms", c.synth.tone_ms);
    get("gap_ms", c.synth.gap_ms);
    get("base_freq", c.synth.base_freq);
    get("freq_step", c.synth.freq_step);
    get("amplitude", c.synth.amplitude);
    get("noise_db", c.synth.noise_db);
    get("min_symbols", c.synth.min_symbols);
    get("max_symbols", c.synth.max_symbols);
    get("n_train", c.synth.n_train);
    get("n_val", c.synth.n_val);
    get("n_test", c.synth.n_test);
    get("synth_seed", c.synth.seed);
    if (j.contains("arch")) c.arch = parse_arch(j.at("arch").get<std::string>());
    if (j.contains("transfer_arch")) c.transfer_arch = parse_arch(j.at("transfer_arch").get<std::string>());
    get("epochs", c.train.epochs);
    get("batch_size", c.train.batch_size);
    get("learning_rate", c.train.learning_rate);
    get("momentum", c.train.momentum);
    get("train_seed", c.train.seed);
    get("epsilon", c.attack.epsilon);
    get("delta", c.attack.delta);
    get("threshold", c.attack.threshold);
    get("alpha", c.attack.alpha);
    get("reg_c", c.attack.reg_c);
    get("inner_max_iters", c.attack.inner_max_iters);
    get("max_epochs", c.attack.max_epochs);
    get("perturbation_len", c.attack.perturbation_len);
    get("seed", c.attack.seed);
    get("epsilon_grid", c.epsilon_grid);
    get("sizes", c.sizes);
    get("size_epsilon", c.size_epsilon);
    get("noise_seed", c.noise_seed);
    get("val_manifest", c.val_manifest);
    get("test_manifest", c.test_manifest);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::InvalidConfig, e.what());
  }
  c.synth.validate();
  c.attack.validate();
  return c;
}

inline ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::NotFound, "config " + path.string());
  try {
    return config_from_json(nlohmann::json::parse(in));
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(ErrorCode::InvalidConfig, path.string() + ": " + e.what());
  }
}

}  // namespace uap
