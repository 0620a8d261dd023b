#pragma once

#include <charconv>
#include <filesystem>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "uap/attack.hpp"
#include "uap/config.hpp"
#include "uap/io.hpp"
#include "uap/metrics.hpp"
#include "uap/nn.hpp"
#include "uap/rng.hpp"
#include "uap/synth.hpp"

namespace uap {

struct ExperimentRow {
  double epsilon = 0.0;
  std::string split;
  std::string perturbation_kind;  // "universal" or "random"
  std::string model_id;
  std::optional<double> mean_db_rel;
  double success_rate = 0.0;
  double mean_cer = 0.0;
  std::size_t n_items = 0;
  std::size_t n_excluded_empty = 0;
  std::optional<std::size_t> train_size;  // size sweep only
};

struct ExperimentReport {
  Json meta = Json::object();
  std::vector<ExperimentRow> rows;
};

inline ExperimentRow make_row(double epsilon, std::string split, std::string kind, std::string model_id,
                              const EvalSummary& s) {
  return {epsilon,       std::move(split), std::move(kind), std::move(model_id), s.mean_db_rel,
          s.success_rate, s.mean_cer,      s.n_items,       s.n_excluded_empty,  std::nullopt};
}

inline Json to_json(const ExperimentRow& r) {
  Json j = {{"epsilon", r.epsilon},
            {"split", r.split},
            {"perturbation_kind", r.perturbation_kind},
            {"model_id", r.model_id},
            {"mean_db_rel", r.mean_db_rel ? Json(*r.mean_db_rel) : Json(nullptr)},
            {"success_rate", r.success_rate},
            {"mean_cer", r.mean_cer},
            {"n_items", r.n_items},
            {"n_excluded_empty", r.n_excluded_empty}};
  if (r.train_size) j["train_size"] = *r.train_size;
  return j;
}

inline Json to_json(const ExperimentReport& report) {
  Json rows = Json::array();
  for (const auto& r : report.rows) rows.push_back(to_json(r));
  return {{"meta", report.meta}, {"rows", rows}};
}

inline ExperimentReport report_from_json(const Json& j) {
  ExperimentReport report;
  try {
    report.meta = j.at("meta");
    for (const auto& r : j.at("rows")) {
      ExperimentRow row;
      row.epsilon = r.at("epsilon");
      row.split = r.at("split");
      row.perturbation_kind = r.at("perturbation_kind");
      row.model_id = r.at("model_id");
      if (!r.at("mean_db_rel").is_null()) row.mean_db_rel = r.at("mean_db_rel").get<double>();
      row.success_rate = r.at("success_rate");
      row.mean_cer = r.at("mean_cer");
      row.n_items = r.at("n_items");
      row.n_excluded_empty = r.at("n_excluded_empty");
      if (r.contains("train_size")) row.train_size = r.at("train_size").get<std::size_t>();
      report.rows.push_back(std::move(row));
    }
  } catch (const Json::exception& e) {
    throw Error(ErrorCode::CorruptFile, std::string("report: ") + e.what());
  }
  return report;
}

// Shortest representation that parses back to the same double.
inline std::string format_double(double value) {
  char buffer[64];
  const auto result = std::to_chars(buffer, buffer + sizeof buffer, value);
  return std::string(buffer, result.ptr);
}

inline std::string to_csv(const ExperimentReport& report) {
  std::ostringstream out;
  out << "epsilon,split,perturbation_kind,model_id,mean_db_rel,success_rate,mean_cer,n_items,n_excluded_empty,train_size\n";
  for (const auto& r : report.rows) {
    out << format_double(r.epsilon) << ',' << r.split << ',' << r.perturbation_kind << ',' << r.model_id << ','
        << (r.mean_db_rel ? format_double(*r.mean_db_rel) : "") << ',' << format_double(r.success_rate) << ','
        << format_double(r.mean_cer) << ',' << r.n_items << ',' << r.n_excluded_empty << ','
        << (r.train_size ? std::to_string(*r.train_size) : "") << '\n';
  }
  return out.str();
}

// Writes <base>.json and <base>.csv.
inline void write_report(const std::filesystem::path& base, const ExperimentReport& report) {
  if (base.has_parent_path()) std::filesystem::create_directories(base.parent_path());
  io_detail::write_text(base.string() + ".json", to_json(report).dump(2) + "\n");
  io_detail::write_text(base.string() + ".csv", to_csv(report));
}

inline ExperimentReport read_report(const std::filesystem::path& path) {
  return report_from_json(io_detail::read_json_file(path));
}

inline Json attack_meta(const AttackConfig& c) {
  return {{"epsilon", c.epsilon},     {"delta", c.delta},
          {"threshold", c.threshold}, {"alpha", c.alpha},
          {"reg_c", c.reg_c},         {"inner_max_iters", c.inner_max_iters},
          {"max_epochs", c.max_epochs}, {"perturbation_len", c.perturbation_len},
          {"seed", c.seed}};
}

struct SweepResult {
  ExperimentReport report;
  std::vector<UniversalPerturbation> perturbations;  // one per grid value
};

// One universal perturbation per budget; each is evaluated on train and test.
inline SweepResult run_epsilon_sweep(const AcousticModel& model, const Corpus& train, const Corpus& val,
                                     const Corpus& test, const std::vector<double>& grid, const AttackConfig& cfg,
                                     const std::string& model_id) {
  SweepResult out;
  out.report.meta = {{"experiment", "epsilon_sweep"},
                     {"model_id", model_id},
                     {"epsilon_grid", grid},
                     {"attack", attack_meta(cfg)},
                     {"corpus_sizes", {{"train", train.size()}, {"val", val.size()}, {"test", test.size()}}}};
  const auto clean_train = clean_transcripts(model, train);
  const auto clean_test = clean_transcripts(model, test);
  for (double epsilon : grid) {
    AttackConfig cell = cfg;
    cell.epsilon = epsilon;
    auto up = universal_train(model, train, val, cell, model_id);
    out.report.rows.push_back(make_row(epsilon, "train", "universal", model_id,
                                       evaluate_with_clean(model, train, clean_train, up.samples, cfg.threshold)));
    out.report.rows.push_back(make_row(epsilon, "test", "universal", model_id,
                                       evaluate_with_clean(model, test, clean_test, up.samples, cfg.threshold)));
    out.perturbations.push_back(std::move(up));
  }
  return out;
}

// The trained perturbation against uniform noise with the same l-inf norm.
inline ExperimentReport run_baseline_comparison(const AcousticModel& model, const Corpus& test,
                                                const UniversalPerturbation& v, double epsilon, std::uint64_t seed,
                                                const std::string& model_id, double threshold = kDefaultThreshold) {
  ExperimentReport report;
  report.meta = {{"experiment", "baseline"},
                 {"model_id", model_id},
                 {"epsilon", epsilon},
                 {"noise_seed", seed},
                 {"threshold", threshold},
                 {"perturbation_len", v.samples.size()},
                 {"corpus_sizes", {{"test", test.size()}}}};
  const auto clean = clean_transcripts(model, test);
  const auto noise = random_perturbation(epsilon, v.samples.size(), seed);
  report.rows.push_back(make_row(epsilon, "test", "universal", model_id,
                                 evaluate_with_clean(model, test, clean, v.samples, threshold)));
  report.rows.push_back(make_row(epsilon, "test", "random", model_id,
                                 evaluate_with_clean(model, test, clean, noise, threshold)));
  return report;
}

// Trains on growing prefixes of one seeded shuffle of the training set.
inline ExperimentReport run_size_sweep(const AcousticModel& model, const Corpus& train, const Corpus& val,
                                       const Corpus& test, const std::vector<std::size_t>& sizes, double epsilon,
                                       const AttackConfig& cfg, const std::string& model_id) {
  for (std::size_t s : sizes) {
    if (s > train.size()) {
      throw Error(ErrorCode::InvalidConfig, "size " + std::to_string(s) + " exceeds training set of " +
                                                std::to_string(train.size()));
    }
  }
  AttackConfig cell = cfg;
  cell.epsilon = epsilon;
  ExperimentReport report;
  report.meta = {{"experiment", "size_sweep"},
                 {"model_id", model_id},
                 {"sizes", sizes},
                 {"attack", attack_meta(cell)},
                 {"corpus_sizes", {{"train", train.size()}, {"val", val.size()}, {"test", test.size()}}}};

  Corpus shuffled = train;
  Rng rng(cfg.seed);
  rng.shuffle(shuffled.items);
  const auto clean_test = clean_transcripts(model, test);
  for (std::size_t s : sizes) {
    std::vector<double> v(cell.perturbation_len, 0.0);
    if (s > 0) v = universal_train(model, shuffled.prefix(s), val, cell, model_id).samples;
    auto row = make_row(epsilon, "test", "universal", model_id,
                        evaluate_with_clean(model, test, clean_test, v, cell.threshold));
    row.train_size = s;
    report.rows.push_back(std::move(row));
  }
  return report;
}

// One perturbation, two victims.
inline ExperimentReport run_transfer(const AcousticModel& model_a, const std::string& id_a,
                                     const AcousticModel& model_b, const std::string& id_b, const Corpus& test,
                                     const UniversalPerturbation& v, double threshold = kDefaultThreshold) {
  if (id_a == id_b) throw Error(ErrorCode::InvalidConfig, "transfer needs two distinct model ids");
  ExperimentReport report;
  report.meta = {{"experiment", "transfer"},
                 {"source_model", v.model_id},
                 {"models", {id_a, id_b}},
                 {"epsilon", v.epsilon},
                 {"threshold", threshold},
                 {"corpus_sizes", {{"test", test.size()}}}};
  report.rows.push_back(make_row(v.epsilon, "test", "universal", id_a, evaluate_universal(model_a, test, v.samples, threshold)));
  report.rows.push_back(make_row(v.epsilon, "test", "universal", id_b, evaluate_universal(model_b, test, v.samples, threshold)));
  return report;
}

// Series for plotting: success rate per epsilon and kind (baseline shape)
// or per training-set size (size-sweep shape).
inline std::string plot_data_csv(const ExperimentReport& report) {
  std::ostringstream out;
  const bool by_size = !report.rows.empty() && report.rows.front().train_size.has_value();
  out << (by_size ? "train_size" : "epsilon") << ",perturbation_kind,model_id,split,success_rate,mean_cer\n";
  for (const auto& r : report.rows) {
    out << (by_size ? std::to_string(*r.train_size) : format_double(r.epsilon)) << ',' << r.perturbation_kind << ','
        << r.model_id << ',' << r.split << ',' << format_double(r.success_rate) << ',' << format_double(r.mean_cer)
        << '\n';
  }
  return out.str();
}

}  // namespace uap
