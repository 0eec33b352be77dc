// Copyright 2026 The fbde Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// fbde_cli: synth | fit | eval | guarantees

#include <chrono>
#include <cstdint>
#include <cstdlib>
#include <exception>
#include <filesystem>
#include <fstream>
#include <future>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <openssl/evp.h>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "fbde/fbde.hpp"

#ifndef FBDE_VERSION
#define FBDE_VERSION "0.0.0"
#endif

namespace fs = std::filesystem;
using fbde::json;

namespace {

std::string sha256_hex(const std::string& bytes) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(), nullptr) != 1) {
    throw fbde::Error("sha256 failed");
  }
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out;
  for (unsigned int i = 0; i < len; ++i) {
    out.push_back(kHex[digest[i] >> 4]);
    out.push_back(kHex[digest[i] & 15]);
  }
  return out;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) {
    throw fbde::Error("cannot write '" + path.string() + "'");
  }
  out << text;
  if (!out) {
    throw fbde::Error("write failed for '" + path.string() + "'");
  }
}

std::string dump(const json& j) { return j.dump(2) + "\n"; }

/// model.json, 2 -> model.fold2.json
fs::path with_suffix(const fs::path& path, const std::string& tag) {
  return path.parent_path() / (path.stem().string() + "." + tag + path.extension().string());
}

class Stopwatch {
 public:
  double lap_ms() {
    const auto now = std::chrono::steady_clock::now();
    const double ms = std::chrono::duration<double, std::milli>(now - last_).count();
    last_ = now;
    return ms;
  }

 private:
  std::chrono::steady_clock::time_point last_ = std::chrono::steady_clock::now();
};

void configure_logging() {
  auto logger = spdlog::stderr_color_mt("fbde");
  spdlog::set_default_logger(logger);
  spdlog::set_pattern("[%l] %v");
  const char* env = std::getenv("FBDE_LOG");
  spdlog::set_level(env ? spdlog::level::from_str(env) : spdlog::level::warn);
}

fbde::LeveragingScheme parse_scheme(const std::string& text, double tau, double c_bound) {
  if (text == "exact") {
    return fbde::LeveragingScheme::exact(tau, c_bound);
  }
  if (text == "relative") {
    return fbde::LeveragingScheme::relative(tau, c_bound);
  }
  if (text.rfind("const:", 0) == 0) {
    const auto v = fbde::detail::parse_number(text.substr(6));
    if (!v) {
      throw fbde::Error("bad constant leverage in '" + text + "'");
    }
    return fbde::LeveragingScheme::constant_theta(*v, c_bound);
  }
  throw fbde::Error("unknown scheme '" + text + "' (exact|relative|const:<v>)");
}

// ---------------------------------------------------------------------------------------------

struct SynthOptions {
  fbde::MixtureParams params;
  std::string out;
};

int run_synth(const SynthOptions& o) {
  const auto points = fbde::generate_mixture(o.params);
  std::ostringstream text;
  fbde::write_mixture_csv(text, points);
  if (o.out.empty() || o.out == "-") {
    std::cout << text.str();
  } else {
    write_text(o.out, text.str());
  }
  spdlog::info("wrote {} rows", points.size());
  return 0;
}

// ---------------------------------------------------------------------------------------------

struct FitOptions {
  fbde::CsvSpec csv;
  std::string target;
  double tau = 0.9;
  std::string scheme = "exact";
  std::size_t rounds = 10;
  int max_depth = 8;
  int min_leaf = 5;
  double c_bound = fbde::kLn2;
  double smoothing = 1.0;
  std::string leaf_value = "sign";
  std::size_t folds = 0;
  std::uint64_t seed = 0;
  std::string out = "model.json";
  std::string trace;
  std::string manifest;
};

struct FoldOutcome {
  fbde::FitResult fit;
  double rr_raw = 0.0;
  double rr_q0 = 0.0;
  double kl_train_q0 = 0.0;
  std::optional<double> kl_test_q0;
};

FoldOutcome fit_one(const fbde::Dataset& train, const fbde::Dataset* test, const fbde::FitConfig& cfg, double smoothing) {
  const auto q0 = fbde::build_initial(train, smoothing);
  std::optional<fbde::TabularDensity> held_out;
  auto fold_cfg = cfg;
  if (test) {
    held_out = fbde::fit_empirical(*test, 0.0);
    fold_cfg.kl_eval = fbde::KlEval::kHeldOut;
  }
  FoldOutcome out{fbde::fbde_fit(train, q0, fold_cfg, held_out ? &*held_out : nullptr), 0, 0, 0, std::nullopt};
  const auto p_hat = fbde::fit_empirical(train, cfg.target_smoothing);
  out.rr_raw = fbde::representation_rate(p_hat);
  out.rr_q0 = fbde::representation_rate(q0.joint());
  out.kl_train_q0 = fbde::kl_divergence(p_hat, q0.joint());
  if (held_out) {
    out.kl_test_q0 = fbde::kl_divergence(*held_out, q0.joint());
  }
  return out;
}

int run_fit(FitOptions o) {
  Stopwatch clock;
  json timings = json::object();
  if (!o.target.empty()) {
    o.csv.target = o.target;
  }
  const std::string data_bytes = fbde::read_file(o.csv.path);
  const auto loaded = fbde::load_csv(fbde::parse_csv(data_bytes), o.csv);
  timings["load_ms"] = clock.lap_ms();
  spdlog::info("loaded {} rows, {} cells", loaded.dataset.size(), loaded.dataset.schema().cell_count());

  fbde::FitConfig cfg;
  cfg.rounds = o.rounds;
  cfg.scheme = parse_scheme(o.scheme, o.tau, o.c_bound);
  cfg.tree.max_depth = o.max_depth;
  cfg.tree.min_leaf_count = o.min_leaf;
  cfg.tree.c_bound = o.c_bound;
  if (o.leaf_value == "proportion") {
    cfg.tree.leaf_value = fbde::LeafValue::kProportion;
  } else if (o.leaf_value == "sign") {
    cfg.tree.leaf_value = fbde::LeafValue::kSign;
  } else if (o.leaf_value != "log_ratio") {
    throw fbde::Error("unknown leaf value '" + o.leaf_value + "'");
  }
  cfg.tree.validate();
  cfg.seed = o.seed;

  const fs::path out_path = o.out;
  const fs::path trace_path = o.trace.empty() ? with_suffix(out_path, "trace").replace_extension(".csv") : fs::path(o.trace);
  const fs::path manifest_path = o.manifest.empty() ? with_suffix(out_path, "manifest") : fs::path(o.manifest);

  json config = fbde::fit_config_to_json(cfg);
  config["q0_smoothing"] = o.smoothing;
  config["bins"] = o.csv.bins;
  config["folds"] = o.folds;
  config["data"] = fs::path(o.csv.path).filename().string();

  struct Job {
    fs::path model;
    fs::path trace;
    std::uint64_t seed;
  };
  std::vector<Job> jobs;
  std::vector<fbde::FoldSplit> splits;
  if (o.folds >= 2) {
    splits = fbde::kfold(loaded.dataset, o.folds, fbde::derive_seed(o.seed, "folds"));
    for (std::size_t f = 0; f < o.folds; ++f) {
      jobs.push_back({with_suffix(out_path, "fold" + std::to_string(f)), with_suffix(trace_path, "fold" + std::to_string(f)),
                      fbde::derive_seed(o.seed, "fold", f)});
    }
  } else if (o.folds == 1) {
    throw fbde::Error("--folds must be 0 (no cross-validation) or at least 2");
  } else {
    jobs.push_back({out_path, trace_path, fbde::derive_seed(o.seed, "fit")});
  }

  std::vector<std::future<FoldOutcome>> running;
  for (std::size_t f = 0; f < jobs.size(); ++f) {
    auto job_cfg = cfg;
    job_cfg.seed = jobs[f].seed;
    running.push_back(std::async(std::launch::async, [&, f, job_cfg] {
      if (splits.empty()) {
        return fit_one(loaded.dataset, nullptr, job_cfg, o.smoothing);
      }
      return fit_one(splits[f].train, &splits[f].test, job_cfg, o.smoothing);
    }));
  }
  std::vector<FoldOutcome> outcomes;
  for (auto& r : running) {
    outcomes.push_back(r.get());
  }
  timings["fit_ms"] = clock.lap_ms();

  json outputs = json::array();
  json folds = json::array();
  for (std::size_t f = 0; f < jobs.size(); ++f) {
    const auto& res = outcomes[f];
    fbde::ModelFile file{res.fit.model, cfg.scheme, loaded.encoding, config, manifest_path.filename().string()};
    file.config["seed"] = jobs[f].seed;
    const std::string model_text = dump(fbde::model_to_json(file));
    std::ostringstream trace_text;
    fbde::write_trace(trace_text, res.fit.trace);
    write_text(jobs[f].model, model_text);
    write_text(jobs[f].trace, trace_text.str());
    outputs.push_back({{"path", jobs[f].model.string()}, {"sha256", sha256_hex(model_text)}});
    outputs.push_back({{"path", jobs[f].trace.string()}, {"sha256", sha256_hex(trace_text.str())}});

    json fold = {{"fold", f},
                 {"rr_raw", res.rr_raw},
                 {"rr_q0", res.rr_q0},
                 {"kl_train_q0", res.kl_train_q0},
                 {"kl_test_q0", fbde::optional_json(res.kl_test_q0)}};
    const auto final_rr = res.fit.trace.empty() ? res.rr_q0 : res.fit.trace.back().rr;
    fold["rr_final"] = final_rr;
    fold["kl_train_final"] = res.fit.trace.empty() ? json(res.kl_train_q0) : fbde::optional_json(res.fit.trace.back().kl_train);
    fold["kl_test_final"] = res.fit.trace.empty() ? fbde::optional_json(res.kl_test_q0) : fbde::optional_json(res.fit.trace.back().kl_test);
    folds.push_back(std::move(fold));
    spdlog::info("fold {}: rr {:.4f}", f, final_rr);
  }
  if (jobs.size() > 1) {
    const fs::path cv_path = with_suffix(out_path, "cv");
    const std::string cv_text = dump({{"format", "fbde-cv"}, {"version", fbde::kFormatVersion}, {"folds", folds}});
    write_text(cv_path, cv_text);
    outputs.push_back({{"path", cv_path.string()}, {"sha256", sha256_hex(cv_text)}});
  }
  timings["write_ms"] = clock.lap_ms();

  json seeds = {{"root", o.seed}};
  for (std::size_t f = 0; f < jobs.size(); ++f) {
    seeds["jobs"].push_back(jobs[f].seed);
  }
  const json manifest = {{"format", "fbde-manifest"},
                         {"version", fbde::kFormatVersion},
                         {"library_version", FBDE_VERSION},
                         {"command", "fit"},
                         {"config", config},
                         {"seeds", seeds},
                         {"inputs", json::array({{{"path", o.csv.path}, {"sha256", sha256_hex(data_bytes)}}})},
                         {"outputs", outputs},
                         {"folds", folds},
                         {"timings_ms", timings}};
  write_text(manifest_path, dump(manifest));
  return 0;
}

// ---------------------------------------------------------------------------------------------

struct EvalOptions {
  std::string model;
  std::string data;
  std::string test;
  double kl_smoothing = 0.0;
  bool bits = false;
  std::string out;
};

fbde::ModelFile load_model(const std::string& path) {
  return fbde::model_from_json(fbde::parse_json_text(fbde::read_file(path), path));
}

fbde::Dataset load_with_model_encoding(const fbde::ModelFile& file, const std::string& path) {
  if (!file.encoding) {
    throw fbde::Error("model carries no column encoding");
  }
  auto ds = fbde::encode_csv(fbde::read_csv(path), *file.encoding);
  if (!(ds.schema() == file.model.schema())) {
    throw fbde::Error("schema mismatch between model and data");
  }
  return ds;
}

int run_eval(const EvalOptions& o) {
  const auto file = load_model(o.model);
  const auto train = load_with_model_encoding(file, o.data);
  const auto joint = file.model.joint();
  const double unit = o.bits ? fbde::kLn2 : 1.0;

  json metrics = {{"format", "fbde-metrics"}, {"version", fbde::kFormatVersion}, {"units", o.bits ? "bits" : "nats"}};
  metrics["rounds"] = file.model.round_count();
  const double rr_table = fbde::representation_rate(joint);
  const double rr_norm = fbde::representation_rate_via_normalizers(file.model);
  metrics["rr_table"] = rr_table;
  metrics["rr_normalizers"] = rr_norm;
  metrics["rr_abs_diff"] = std::abs(rr_table - rr_norm);
  const auto& schema = file.model.schema();
  if (const auto target = schema.target_index()) {
    json sr = json::object();
    for (int y = 0; y < schema[*target].cardinality; ++y) {
      sr[file.encoding->columns[*target].levels[static_cast<std::size_t>(y)]] = fbde::statistical_rate(joint, y);
    }
    metrics["sr"] = sr;
  } else {
    metrics["sr"] = nullptr;
  }
  metrics["kl_train"] = fbde::kl_divergence(fbde::fit_empirical(train, o.kl_smoothing), joint) / unit;
  if (!o.test.empty()) {
    const auto test = load_with_model_encoding(file, o.test);
    metrics["kl_test"] = fbde::kl_divergence(fbde::fit_empirical(test, o.kl_smoothing), joint) / unit;
  } else {
    metrics["kl_test"] = nullptr;
  }
  const std::string text = dump(metrics);
  if (o.out.empty() || o.out == "-") {
    std::cout << text;
  } else {
    write_text(o.out, text);
  }
  return 0;
}

// ---------------------------------------------------------------------------------------------

struct GuaranteeOptions {
  std::string model;
  std::string trace;
  std::string data;
  double rho = 0.8;
  double kl_smoothing = 0.0;
  std::string out;
};

int run_guarantees(const GuaranteeOptions& o) {
  if (o.trace.empty() || !fs::exists(o.trace)) {
    throw fbde::Error("missing trace file '" + o.trace + "'");
  }
  const auto file = load_model(o.model);
  const auto trace = fbde::parse_trace(fbde::read_file(o.trace));
  if (trace.size() != file.model.round_count()) {
    throw fbde::Error("trace has " + std::to_string(trace.size()) + " rows, model has " +
                      std::to_string(file.model.round_count()) + " rounds");
  }
  const auto data = load_with_model_encoding(file, o.data);
  const auto target = fbde::fit_empirical(data, o.kl_smoothing);
  const auto rep = fbde::build_guarantee_report(file.model, file.scheme, target, o.rho);
  double trace_gap = 0.0;
  for (std::size_t k = 0; k < trace.size(); ++k) {
    trace_gap = std::max(trace_gap, std::abs(trace[k].rr - rep.per_round[k].rr));
  }
  auto j = fbde::guarantee_report_to_json(rep);
  j["trace_rr_max_gap"] = trace_gap;
  const std::string text = dump(j);
  if (o.out.empty() || o.out == "-") {
    std::cout << text;
  } else {
    write_text(o.out, text);
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  configure_logging();
  CLI::App app{"Fair boosted density estimation"};
  app.require_subcommand(1);

  SynthOptions synth;
  auto* synth_cmd = app.add_subcommand("synth", "Sample the two-Gaussian mixture as x,a CSV");
  synth_cmd->add_option("--n", synth.params.n, "Sample count")->capture_default_str();
  synth_cmd->add_option("--s", synth.params.s, "P(a = 1)")->capture_default_str();
  synth_cmd->add_option("--mu0", synth.params.mu[0], "Mean of group a = 0")->capture_default_str();
  synth_cmd->add_option("--mu1", synth.params.mu[1], "Mean of group a = 1")->capture_default_str();
  synth_cmd->add_option("--sigma0", synth.params.sigma[0], "Std of group a = 0")->capture_default_str();
  synth_cmd->add_option("--sigma1", synth.params.sigma[1], "Std of group a = 1")->capture_default_str();
  synth_cmd->add_option("--seed", synth.params.seed)->capture_default_str();
  synth_cmd->add_option("--out", synth.out, "Output CSV (default stdout)");

  FitOptions fit;
  auto* fit_cmd = app.add_subcommand("fit", "Fit Q_0 and the boosted model");
  fit_cmd->add_option("--data", fit.csv.path, "Input CSV")->required();
  fit_cmd->add_option("--sensitive", fit.csv.sensitive, "Sensitive column")->required();
  fit_cmd->add_option("--target", fit.target, "Target column");
  fit_cmd->add_option("--ignore", fit.csv.ignore, "Columns to drop")->delimiter(',');
  fit_cmd->add_option("--continuous", fit.csv.continuous, "Force binning")->delimiter(',');
  fit_cmd->add_option("--categorical", fit.csv.categorical, "Force categorical coding")->delimiter(',');
  fit_cmd->add_option("--tau", fit.tau, "Target representation rate")->capture_default_str();
  fit_cmd->add_option("--scheme", fit.scheme, "exact | relative | const:<theta>")->capture_default_str();
  fit_cmd->add_option("--rounds", fit.rounds)->capture_default_str();
  fit_cmd->add_option("--bins", fit.csv.bins, "Equal-width bins per continuous column")->capture_default_str();
  fit_cmd->add_option("--max-depth", fit.max_depth)->capture_default_str();
  fit_cmd->add_option("--min-leaf", fit.min_leaf)->capture_default_str();
  fit_cmd->add_option("--c-bound", fit.c_bound, "Classifier bound C")->capture_default_str();
  fit_cmd->add_option("--smoothing", fit.smoothing, "Laplace smoothing of Q_0 conditionals")->capture_default_str();
  fit_cmd->add_option("--leaf-value", fit.leaf_value, "log_ratio | proportion | sign")->capture_default_str();
  fit_cmd->add_option("--folds", fit.folds, "k-fold cross-validation (0 = fit all rows)")->capture_default_str();
  fit_cmd->add_option("--seed", fit.seed)->capture_default_str();
  fit_cmd->add_option("--out", fit.out, "Model JSON")->capture_default_str();
  fit_cmd->add_option("--trace", fit.trace, "Trace CSV (default <out>.trace.csv)");
  fit_cmd->add_option("--manifest", fit.manifest, "Manifest JSON (default <out>.manifest.json)");

  EvalOptions eval;
  auto* eval_cmd = app.add_subcommand("eval", "Metrics of a fitted model");
  eval_cmd->add_option("--model", eval.model)->required();
  eval_cmd->add_option("--data", eval.data, "Training CSV")->required();
  eval_cmd->add_option("--test", eval.test, "Held-out CSV");
  eval_cmd->add_option("--kl-smoothing", eval.kl_smoothing)->capture_default_str();
  eval_cmd->add_flag("--bits", eval.bits, "Report KL in bits");
  eval_cmd->add_option("--out", eval.out, "Metrics JSON (default stdout)");

  GuaranteeOptions guar;
  auto* guar_cmd = app.add_subcommand("guarantees", "Check a fitted model against its bounds");
  guar_cmd->add_option("--model", guar.model)->required();
  guar_cmd->add_option("--trace", guar.trace)->required();
  guar_cmd->add_option("--data", guar.data, "Training CSV")->required();
  guar_cmd->add_option("--rho", guar.rho, "Equal-opportunity level")->capture_default_str();
  guar_cmd->add_option("--kl-smoothing", guar.kl_smoothing)->capture_default_str();
  guar_cmd->add_option("--out", guar.out, "Report JSON (default stdout)");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*synth_cmd) {
      return run_synth(synth);
    }
    if (*fit_cmd) {
      return run_fit(fit);
    }
    if (*eval_cmd) {
      return run_eval(eval);
    }
    if (*guar_cmd) {
      return run_guarantees(guar);
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}
