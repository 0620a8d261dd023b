// Command-line front end: corpus synthesis, victim training, attacks and the
// experiment drivers. Every subcommand reads the same flat JSON config.

#include <chrono>
#include <cstdio>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "uap/uap.hpp"

namespace fs = std::filesystem;
using namespace uap;

namespace {

struct Options {
  std::string config;
  std::optional<double> epsilon, delta, threshold, alpha, reg_c;
  std::string epsilon_grid;
  std::optional<std::uint64_t> seed;
  std::string model, transfer_model, perturbation, manifest, out, report, arch, wav;
};

std::vector<double> parse_grid(const std::string& text) {
  std::vector<double> grid;
  std::stringstream in(text);
  std::string cell;
  while (std::getline(in, cell, ',')) {
    try {
      std::size_t used = 0;
      grid.push_back(std::stod(cell, &used));
      if (used != cell.size()) throw std::invalid_argument(cell);
    } catch (const std::exception&) {
      throw Error(ErrorCode::InvalidConfig, "bad --epsilon-grid entry '" + cell + "'");
    }
  }
  if (grid.empty()) throw Error(ErrorCode::InvalidConfig, "--epsilon-grid is empty");
  return grid;
}

ExperimentConfig resolve_config(const Options& o) {
  ExperimentConfig c = o.config.empty() ? ExperimentConfig{} : load_config(o.config);
  if (o.epsilon) c.attack.epsilon = *o.epsilon;
  if (o.delta) c.attack.delta = *o.delta;
  if (o.threshold) c.attack.threshold = *o.threshold;
  if (o.alpha) c.attack.alpha = *o.alpha;
  if (o.reg_c) c.attack.reg_c = *o.reg_c;
  if (o.seed) c.attack.seed = *o.seed;
  if (!o.epsilon_grid.empty()) c.epsilon_grid = parse_grid(o.epsilon_grid);
  if (!o.arch.empty()) c.arch = parse_arch(o.arch);
  c.attack.validate();
  return c;
}

const std::string& require(const std::string& value, const char* flag) {
  if (value.empty()) throw Error(ErrorCode::InvalidConfig, std::string("missing required flag ") + flag);
  return value;
}

fs::path sibling_manifest(const fs::path& train, const std::string& configured, const char* name) {
  if (!configured.empty()) return configured;
  return train.parent_path() / (std::string(name) + ".csv");
}

// Strips a trailing .json/.csv so that --out report.json and --out report agree.
fs::path report_base(const std::string& out) {
  fs::path base = require(out, "--out");
  if (base.extension() == ".json" || base.extension() == ".csv") base.replace_extension();
  return base;
}

std::string model_id_for(const AcousticModel& m) { return std::string(arch_name(m.arch)); }

Json run_config_meta(const ExperimentConfig& c) { return to_json(c); }

void emit(const Json& summary) { std::cout << summary.dump() << '\n'; }

int cmd_synth(const Options& o) {
  const auto c = resolve_config(o);
  auto corpora = synth_corpus(c.synth, require(o.out, "--out"));
  emit({{"train", corpora.train.size()}, {"val", corpora.val.size()}, {"test", corpora.test.size()}, {"out", o.out}});
  return 0;
}

int cmd_train(const Options& o) {
  const auto c = resolve_config(o);
  const auto corpus = load_manifest(require(o.manifest, "--manifest"), c.synth.alphabet);
  std::vector<double> losses;
  const auto model = train_model(corpus, c.arch, c.train, {}, {}, &losses);
  save_model(require(o.out, "--out"), model);
  emit({{"arch", arch_name(c.arch)},
        {"items", corpus.size()},
        {"final_loss", losses.empty() ? Json(nullptr) : Json(losses.back())},
        {"train_label_cer", label_cer(model, corpus)},
        {"out", o.out}});
  return 0;
}

int cmd_attack(const Options& o) {
  const auto c = resolve_config(o);
  const auto model = load_model(require(o.model, "--model"));
  const fs::path train_path = require(o.manifest, "--manifest");
  const auto train = load_manifest(train_path, model.alphabet);
  const auto val = load_manifest(sibling_manifest(train_path, c.val_manifest, "val"), model.alphabet);
  const auto up = universal_train(model, train, val, c.attack, model_id_for(model));
  save_perturbation(require(o.out, "--out"), up);
  if (!o.wav.empty()) write_wav(o.wav, Waveform{up.samples, kSampleRate});
  emit({{"epsilon", up.epsilon}, {"epochs_run", up.epochs_run}, {"val_success_history", up.history}, {"out", o.out}});
  return 0;
}

int cmd_eval(const Options& o) {
  const auto c = resolve_config(o);
  const auto model = load_model(require(o.model, "--model"));
  const auto up = load_perturbation(require(o.perturbation, "--perturbation"));
  const fs::path manifest = require(o.manifest, "--manifest");
  const auto corpus = load_manifest(manifest, model.alphabet);
  const auto summary = evaluate_universal(model, corpus, up.samples, c.attack.threshold);
  ExperimentReport report;
  report.meta = {{"experiment", "eval"}, {"model_id", model_id_for(model)}, {"perturbation", perturbation_metadata(up)},
                 {"threshold", c.attack.threshold}, {"corpus_sizes", {{manifest.stem().string(), corpus.size()}}}};
  report.rows.push_back(make_row(up.epsilon, manifest.stem().string(), "universal", model_id_for(model), summary));
  write_report(report_base(o.out), report);
  emit(to_json(report.rows.front()));
  return 0;
}

int cmd_sweep(const Options& o) {
  const auto c = resolve_config(o);
  const auto model = load_model(require(o.model, "--model"));
  const fs::path train_path = require(o.manifest, "--manifest");
  const auto train = load_manifest(train_path, model.alphabet);
  const auto val = load_manifest(sibling_manifest(train_path, c.val_manifest, "val"), model.alphabet);
  const auto test = load_manifest(sibling_manifest(train_path, c.test_manifest, "test"), model.alphabet);
  auto result = run_epsilon_sweep(model, train, val, test, c.epsilon_grid, c.attack, model_id_for(model));
  result.report.meta["config"] = run_config_meta(c);
  const auto base = report_base(o.out);
  write_report(base, result.report);
  for (const auto& up : result.perturbations) {
    save_perturbation(base.string() + "_eps" + format_double(up.epsilon) + ".f32", up);
  }
  emit({{"rows", result.report.rows.size()}, {"report", base.string() + ".json"}});
  return 0;
}

int cmd_baseline(const Options& o) {
  const auto c = resolve_config(o);
  const auto model = load_model(require(o.model, "--model"));
  const auto up = load_perturbation(require(o.perturbation, "--perturbation"));
  const auto test = load_manifest(require(o.manifest, "--manifest"), model.alphabet);
  const double epsilon = o.epsilon ? *o.epsilon : up.epsilon;
  const auto noise_seed = o.seed ? *o.seed : c.noise_seed;
  auto report = run_baseline_comparison(model, test, up, epsilon, noise_seed, model_id_for(model), c.attack.threshold);
  report.meta["config"] = run_config_meta(c);
  write_report(report_base(o.out), report);
  emit(to_json(report)["rows"]);
  return 0;
}

int cmd_size_sweep(const Options& o) {
  const auto c = resolve_config(o);
  const auto model = load_model(require(o.model, "--model"));
  const fs::path train_path = require(o.manifest, "--manifest");
  const auto train = load_manifest(train_path, model.alphabet);
  const auto val = load_manifest(sibling_manifest(train_path, c.val_manifest, "val"), model.alphabet);
  const auto test = load_manifest(sibling_manifest(train_path, c.test_manifest, "test"), model.alphabet);
  const double epsilon = o.epsilon ? *o.epsilon : c.size_epsilon;
  auto report = run_size_sweep(model, train, val, test, c.sizes, epsilon, c.attack, model_id_for(model));
  report.meta["config"] = run_config_meta(c);
  write_report(report_base(o.out), report);
  emit(to_json(report)["rows"]);
  return 0;
}

int cmd_transfer(const Options& o) {
  const auto c = resolve_config(o);
  const auto model_a = load_model(require(o.model, "--model"));
  const auto model_b = load_model(require(o.transfer_model, "--transfer-model"));
  const auto up = load_perturbation(require(o.perturbation, "--perturbation"));
  const auto test = load_manifest(require(o.manifest, "--manifest"), model_a.alphabet);
  auto id_a = model_id_for(model_a), id_b = model_id_for(model_b);
  if (id_a == id_b) {
    id_a = fs::path(o.model).stem().string();
    id_b = fs::path(o.transfer_model).stem().string();
  }
  auto report = run_transfer(model_a, id_a, model_b, id_b, test, up, c.attack.threshold);
  report.meta["config"] = run_config_meta(c);
  write_report(report_base(o.out), report);
  emit(to_json(report)["rows"]);
  return 0;
}

int cmd_plot_data(const Options& o) {
  const auto report = read_report(require(o.report, "--report"));
  const auto csv = plot_data_csv(report);
  if (o.out.empty()) {
    std::cout << csv;
  } else {
    io_detail::write_text(o.out, csv);
  }
  return 0;
}

void print_error(std::string_view code, std::string_view message) {
  std::cerr << Json{{"error", code}, {"message", message}}.dump() << '\n';
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Universal adversarial perturbations against CTC speech recognizers"};
  app.require_subcommand(1);
  Options o;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", o.config, "Flat JSON config file");
    sub->add_option("--epsilon", o.epsilon, "l-inf budget in int16 sample units");
    sub->add_option("--epsilon-grid", o.epsilon_grid, "Comma-separated budgets, e.g. 100,200,300");
    sub->add_option("--delta", o.delta, "Desired validation success rate");
    sub->add_option("--threshold", o.threshold, "CER above which an item counts as fooled");
    sub->add_option("--alpha", o.alpha, "Sign-step size");
    sub->add_option("--reg-c", o.reg_c, "Weight of the l2 penalty");
    sub->add_option("--seed", o.seed, "Attack seed (noise seed for `baseline`)");
    sub->add_option("--model", o.model, "Model file");
    sub->add_option("--perturbation", o.perturbation, "Perturbation file (float32 + .json sidecar)");
    sub->add_option("--manifest", o.manifest, "Corpus manifest (CSV path,transcript)");
    sub->add_option("--out", o.out, "Output path");
  };

  struct Command {
    const char* name;
    const char* help;
    int (*run)(const Options&);
  };
  const Command commands[] = {
      {"synth", "Write the synthetic tone corpus and its manifests", cmd_synth},
      {"train", "Train a victim acoustic model", cmd_train},
      {"attack", "Train a universal perturbation", cmd_attack},
      {"eval", "Evaluate a perturbation on a corpus", cmd_eval},
      {"sweep", "Budget sweep: one perturbation per epsilon", cmd_sweep},
      {"baseline", "Universal perturbation vs uniform noise", cmd_baseline},
      {"size-sweep", "Success rate vs training-set size", cmd_size_sweep},
      {"transfer", "Evaluate one perturbation on two models", cmd_transfer},
      {"plot-data", "Plot-ready CSV from a report", cmd_plot_data},
  };
  std::vector<std::pair<CLI::App*, const Command*>> subs;
  for (const auto& command : commands) {
    auto* sub = app.add_subcommand(command.name, command.help);
    add_common(sub);
    subs.emplace_back(sub, &command);
  }
  for (auto& [sub, command] : subs) {
    const std::string name = command->name;
    if (name == "train") sub->add_option("--arch", o.arch, "DS_LITE or WN_LITE");
    if (name == "attack") sub->add_option("--wav", o.wav, "Also export the perturbation as PCM16 WAV");
    if (name == "transfer") sub->add_option("--transfer-model", o.transfer_model, "Second victim model");
    if (name == "plot-data") sub->add_option("--report", o.report, "Report JSON");
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  const auto start = std::chrono::steady_clock::now();
  try {
    for (auto& [sub, command] : subs) {
      if (!sub->parsed()) continue;
      const int code = command->run(o);
      const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
      std::fprintf(stderr, "[uap] %s finished in %.1f s\n", command->name, seconds);
      return code;
    }
  } catch (const Error& e) {
    print_error(to_string(e.code()), e.detail());
    return 2;
  } catch (const std::exception& e) {
    print_error("Internal", e.what());
    return 1;
  }
  return 1;
}
