// Copyright 2026 The rdpleak Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Report generation behind the command-line subcommands. Each run_* function
// reads an already-parsed JSON config, writes its data files into the output
// directory and returns the number of detected violations. Every file starts
// with a provenance header echoing the tool version, the effective
// configuration and the master seed; nothing else (no clock, no thread
// count) reaches the outputs.

#ifndef RDPLEAK_REPORTS_HPP_
#define RDPLEAK_REPORTS_HPP_

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <memory>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "rdpleak/canary_sim.hpp"
#include "rdpleak/lazy_sampler.hpp"
#include "rdpleak/leakage_bounds.hpp"
#include "rdpleak/numeric.hpp"
#include "rdpleak/privacy_accountant.hpp"

namespace rdpleak::reports {

inline constexpr const char* kVersion = "0.1.0";

namespace fs = std::filesystem;

struct RunContext {
  std::string command;
  fs::path config_dir;  // relative paths in the config resolve against this
  fs::path out_dir;
  std::uint64_t seed = 0;
  unsigned threads = 1;
};

struct RunOutcome {
  int violations = 0;
  std::vector<std::string> messages;
  std::vector<fs::path> files;
};

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

namespace detail {

template <typename T>
T get_or(const nlohmann::json& config, const char* key, T fallback) {
  if (!config.contains(key) || config.at(key).is_null()) return fallback;
  try {
    return config.at(key).get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("config key '") + key + "': " + e.what());
  }
}

inline std::string provenance(const RunContext& ctx, const nlohmann::json& effective) {
  std::string out;
  out += "# rdpleak " + std::string(kVersion) + "\n";
  out += "# command: " + ctx.command + "\n";
  out += "# seed: " + std::to_string(ctx.seed) + "\n";
  out += "# config: " + effective.dump() + "\n";
  return out;
}

inline nlohmann::json provenance_json(const RunContext& ctx, const nlohmann::json& effective) {
  return {{"tool", "rdpleak"},
          {"version", kVersion},
          {"command", ctx.command},
          {"seed", ctx.seed},
          {"config", effective}};
}

inline fs::path write_file(const RunContext& ctx, const std::string& name,
                           const std::string& content) {
  const fs::path path = ctx.out_dir / name;
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << content;
  return path;
}

inline fs::path resolve(const RunContext& ctx, const std::string& p) {
  fs::path path(p);
  return path.is_absolute() ? path : ctx.config_dir / path;
}

inline std::optional<OrderGrid> parse_orders(const nlohmann::json& config) {
  if (!config.contains("orders") || config.at("orders").is_null()) return std::nullopt;
  return OrderGrid(config.at("orders").get<std::vector<double>>());
}

inline std::vector<std::int64_t> int_list(const nlohmann::json& config, const char* key,
                                          std::vector<std::int64_t> fallback) {
  if (!config.contains(key)) return fallback;
  const auto& v = config.at(key);
  if (v.is_number_integer()) return {v.get<std::int64_t>()};
  return v.get<std::vector<std::int64_t>>();
}

inline LrRule parse_lr_rule(const nlohmann::json& config) {
  LrRule rule;
  if (!config.contains("lr_rule")) return rule;
  const auto& j = config.at("lr_rule");
  if (j.is_string()) {
    // "<c>/sigma" or a plain constant.
    const auto s = j.get<std::string>();
    const auto slash = s.find("/sigma");
    rule.numerator = std::stod(s.substr(0, slash));
    rule.inverse_sigma = slash != std::string::npos;
    return rule;
  }
  if (j.is_number()) {
    rule.numerator = j.get<double>();
    rule.inverse_sigma = false;
    return rule;
  }
  rule.numerator = get_or<double>(j, "numerator", 0.5);
  rule.inverse_sigma = get_or<bool>(j, "inverse_sigma", true);
  return rule;
}

inline nlohmann::json lr_rule_json(const LrRule& rule) {
  return {{"numerator", rule.numerator}, {"inverse_sigma", rule.inverse_sigma}};
}

struct CanarySetup {
  Canary canary;
  nlohmann::json echo;
};

inline CanarySetup parse_canary(const nlohmann::json& config, std::uint64_t seed) {
  const int length = get_or<int>(config, "T", 10);
  const int alphabet = get_or<int>(config, "D", 10);
  const int replication = get_or<int>(config, "replication", 1);
  Canary canary;
  if (config.contains("canary")) {
    canary.digits = config.at("canary").get<std::vector<int>>();
    canary.alphabet = alphabet;
    canary.replication = replication;
  } else {
    canary = Canary::random(length, alphabet, seed, replication);
  }
  canary.validate();
  return {canary,
          {{"T", canary.length()},
           {"D", canary.alphabet},
           {"replication", canary.replication},
           {"canary", canary.digits}}};
}

}  // namespace detail

// Bound tables for a grid of (sigma, steps, b): L2(b), min_alpha h in bits,
// the posterior bound and epsilon at delta.
inline RunOutcome run_account(const nlohmann::json& config, const RunContext& ctx) {
  using detail::get_or;
  const double q = get_or<double>(config, "q", 2.81e-4);
  const auto sigmas = get_or<std::vector<double>>(config, "sigmas", {0.4, 1.0, 2.0});
  const auto step_list = detail::int_list(config, "steps", {186000});
  const double delta = get_or<double>(config, "delta", 3e-7);
  const double b_min = get_or<double>(config, "b_min", 0.0);
  const double b_max = get_or<double>(config, "b_max", 60.0);
  const double b_step = get_or<double>(config, "b_step", 1.0);
  const auto grid = detail::parse_orders(config).value_or(OrderGrid::default_grid());
  if (sigmas.empty() || step_list.empty()) throw ConfigError("account: empty sigma or step grid");
  if (!(b_step > 0.0) || !(b_min >= 0.0) || !(b_max >= b_min)) {
    throw ConfigError("account: need 0 <= b_min <= b_max and b_step > 0");
  }

  const nlohmann::json effective = {
      {"q", q},         {"sigmas", sigmas}, {"steps", step_list},
      {"delta", delta}, {"b_min", b_min},   {"b_max", b_max},
      {"b_step", b_step},
      {"orders", std::vector<double>(grid.orders().begin(), grid.orders().end())}};

  RunOutcome outcome;
  std::string bounds = detail::provenance(ctx, effective);
  bounds += std::string(kLeakageCsvHeader) + "\n";
  std::string eps_csv = detail::provenance(ctx, effective);
  eps_csv += "sigma,q,steps,delta,epsilon,best_alpha\n";
  nlohmann::json curves = nlohmann::json::array();

  const auto n_bits = static_cast<std::size_t>(std::floor((b_max - b_min) / b_step + 1e-9)) + 1;
  for (double sigma : sigmas) {
    const auto per_step = sgm_rdp_curve(q, sigma, grid);
    for (std::int64_t steps : step_list) {
      MechanismParams params{q, sigma, steps, 1.0};
      params.validate();
      const auto curve = compose(per_step, steps);
      curves.push_back(curve_to_json(curve));

      const auto eps = rdp_to_dp_epsilon(curve, delta);
      eps_csv += format_double(sigma) + "," + format_double(q) + "," +
                 std::to_string(steps) + "," + format_double(delta) + "," +
                 format_double(eps.epsilon) + "," +
                 (eps.best_alpha ? format_double(*eps.best_alpha) : std::string("nan")) + "\n";

      double prev_l2 = kNegInf;
      double prev_posterior = kInf;
      for (std::size_t i = 0; i < n_bits; ++i) {
        const double b = b_min + b_step * static_cast<double>(i);
        const auto report = min_leakage(curve, -b * kLn2);
        bounds += report_csv_row(report, params) + "\n";

        auto flag = [&](const std::string& what) {
          ++outcome.violations;
          outcome.messages.push_back("sigma=" + format_double(sigma) + " steps=" +
                                     std::to_string(steps) + " b=" + format_double(b) +
                                     ": " + what);
        };
        if (report.infinite) continue;
        if (b > 0.0 && !(report.L2_bits < report.h_bits())) flag("L2 not below min h");
        if (report.L2_bits < prev_l2) flag("L2 decreased in b");
        if (report.log2_posterior_bound > prev_posterior) flag("posterior bound increased in b");
        prev_l2 = report.L2_bits;
        prev_posterior = report.log2_posterior_bound;
      }
      if (const auto bad = curve.first_monotonicity_violation(1e-12)) {
        ++outcome.violations;
        outcome.messages.push_back("curve not monotone in alpha at index " + std::to_string(*bad));
      }
    }
  }

  outcome.files.push_back(detail::write_file(ctx, "account_bounds.csv", bounds));
  outcome.files.push_back(detail::write_file(ctx, "account_epsilon.csv", eps_csv));
  nlohmann::json curves_doc = {{"provenance", detail::provenance_json(ctx, effective)},
                               {"curves", curves}};
  outcome.files.push_back(detail::write_file(ctx, "curves.json", curves_doc.dump(2) + "\n"));
  return outcome;
}

inline ExperimentOptions experiment_options(const nlohmann::json& config,
                                            const RunContext& ctx) {
  using detail::get_or;
  ExperimentOptions opt;
  opt.steps = get_or<std::int64_t>(config, "steps", 1000);
  opt.clip = get_or<double>(config, "clip", 1.0);
  opt.q = get_or<double>(config, "q", 1.0);
  opt.lr_rule = detail::parse_lr_rule(config);
  opt.seed = ctx.seed;
  opt.n_models = get_or<std::size_t>(config, "n_models", 10000);
  opt.mc.threads = ctx.threads;
  opt.mc.bootstrap_resamples = get_or<int>(config, "bootstrap", 200);
  opt.orders = detail::parse_orders(config);
  if (opt.n_models < 1) throw ConfigError("n_models must be >= 1");
  return opt;
}

inline nlohmann::json experiment_echo(const ExperimentOptions& opt) {
  const auto grid = opt.orders.value_or(OrderGrid::default_grid());
  return {{"steps", opt.steps},
          {"clip", opt.clip},
          {"q", opt.q},
          {"lr_rule", detail::lr_rule_json(opt.lr_rule)},
          {"n_models", opt.n_models},
          {"bootstrap", opt.mc.bootstrap_resamples},
          {"orders", std::vector<double>(grid.orders().begin(), grid.orders().end())}};
}

// Monte-Carlo leakage versus the accountant bound over a sigma grid.
inline RunOutcome run_simulate(const nlohmann::json& config, const RunContext& ctx) {
  const auto setup = detail::parse_canary(config, ctx.seed);
  const auto opt = experiment_options(config, ctx);
  const auto sigma_grid = detail::get_or<std::vector<double>>(
      config, "sigma_grid", {0.5, 1.0, 2.0, 2.875, 4.0, 10.0});
  if (sigma_grid.empty()) throw ConfigError("simulate: empty sigma_grid");

  nlohmann::json effective = experiment_echo(opt);
  effective.update(setup.echo);
  effective["sigma_grid"] = sigma_grid;

  const auto rows = leakage_experiment(sigma_grid, setup.canary, opt);

  RunOutcome outcome;
  std::string csv = detail::provenance(ctx, effective);
  csv += "sigma,steps,log_p1,per_model_mean,per_model_std,leakage_nats,bound_nats\n";
  std::ostringstream summary;
  summary << detail::provenance(ctx, effective);
  summary << "canary log prior: " << format_double(setup.canary.log_prior()) << " nats\n";
  if (setup.canary.replication > 1) {
    summary << "warning: canary replicated " << setup.canary.replication
            << " times; bounds are computed for a single record and formal "
               "guarantees for the replicated canary require group privacy\n";
  }
  for (const auto& row : rows) {
    const auto& e = row.estimate;
    csv += format_double(row.sigma) + "," + std::to_string(row.steps) + "," +
           format_double(e.log_p1) + "," + format_double(e.per_model_mean) + "," +
           format_double(e.per_model_std) + "," + format_double(e.leakage_nats) + "," +
           format_double(row.bound.L_nats) + "\n";
    summary << "sigma=" << format_double(row.sigma) << " leakage="
            << format_double(e.leakage_nats) << " se=" << format_double(e.bootstrap_se)
            << " bound=" << format_double(row.bound.L_nats) << " verdict="
            << (row.violation ? "VIOLATION" : "ok");
    if (row.wide_error_bars) summary << " (wide error bars: n_models=" << e.n_models << ")";
    summary << "\n";
    if (row.violation) {
      ++outcome.violations;
      outcome.messages.push_back("bound violated at sigma=" + format_double(row.sigma));
    }
    if (!(e.log_p1 >= e.per_model_mean)) {
      ++outcome.violations;
      outcome.messages.push_back("Jensen gap negative at sigma=" + format_double(row.sigma));
    }
  }
  summary << "violations: " << outcome.violations << "\n";
  outcome.files.push_back(detail::write_file(ctx, "simulate.csv", csv));
  outcome.files.push_back(detail::write_file(ctx, "simulate_summary.txt", summary.str()));
  return outcome;
}

// Step-count sweep at a fixed sigma; picks the count reproducing the target
// per-model statistics.
inline RunOutcome run_calibrate(const nlohmann::json& config, const RunContext& ctx) {
  using detail::get_or;
  const auto setup = detail::parse_canary(config, ctx.seed);
  const auto opt = experiment_options(config, ctx);
  const double sigma = get_or<double>(config, "sigma", 2.875);
  const auto sweep = detail::int_list(config, "step_sweep",
                                      {1, 2, 3, 5, 10, 20, 50, 100, 200, 500, 1000});
  CalibrationTarget target;
  target.mean = get_or<double>(config, "target_mean", target.mean);
  target.std = get_or<double>(config, "target_std", target.std);
  if (sweep.empty()) throw ConfigError("calibrate: empty step_sweep");

  nlohmann::json effective = experiment_echo(opt);
  effective.update(setup.echo);
  effective.erase("steps");
  effective.erase("bootstrap");
  effective["sigma"] = sigma;
  effective["step_sweep"] = sweep;
  effective["target_mean"] = target.mean;
  effective["target_std"] = target.std;

  const auto result = calibrate_steps(sigma, sweep, setup.canary, opt, target);

  std::string csv = detail::provenance(ctx, effective);
  csv += "steps,per_model_mean,per_model_std,log_p1,distance\n";
  for (const auto& p : result.points) {
    csv += std::to_string(p.steps) + "," + format_double(p.per_model_mean) + "," +
           format_double(p.per_model_std) + "," + format_double(p.log_p1) + "," +
           format_double(p.distance) + "\n";
  }
  nlohmann::json doc = {{"provenance", detail::provenance_json(ctx, effective)},
                        {"best_steps", result.best_steps},
                        {"mean_monotone_in_steps", result.mean_monotone}};
  RunOutcome outcome;
  outcome.messages.push_back("recommended steps: " + std::to_string(result.best_steps));
  outcome.files.push_back(detail::write_file(ctx, "calibration.csv", csv));
  outcome.files.push_back(detail::write_file(ctx, "calibration.json", doc.dump(2) + "\n"));
  return outcome;
}

namespace detail {

inline std::unique_ptr<ConditionalModel> load_model(const nlohmann::json& source,
                                                    const RunContext& ctx,
                                                    std::span<const CorpusEntry> corpus) {
  const auto type = source.at("type").get<std::string>();
  if (type == "uniform") {
    return std::make_unique<UniformModel>(source.at("vocab").get<std::size_t>());
  }
  const auto path = resolve(ctx, source.at("path").get<std::string>());
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open " + path.string());
  if (type == "table") {
    return std::make_unique<TableModel>(table_from_json(nlohmann::json::parse(in)));
  }
  if (type == "scores") {
    return std::make_unique<ScoreTableModel>(ScoreTableModel::from_jsonl(in, corpus));
  }
  throw ConfigError("unknown model type: " + type);
}

inline void require_model_source(const nlohmann::json& config, const char* key,
                               const RunContext& ctx) {
  if (!config.contains(key)) throw ConfigError(std::string("scan: missing '") + key + "'");
  const auto& source = config.at(key);
  const auto type = get_or<std::string>(source, "type", "");
  if (type == "uniform") return;
  if (!source.contains("path")) throw ConfigError(std::string("scan: '") + key + "' needs a path");
  const auto path = resolve(ctx, source.at("path").get<std::string>());
  if (!fs::exists(path)) {
    throw ConfigError(std::string("scan: ") + key + " file not found: " + path.string());
  }
}

}  // namespace detail

// Every path a config references, checked before any work starts.
inline void validate_paths(const nlohmann::json& config, const RunContext& ctx) {
  if (ctx.command != "scan") return;
  if (!config.contains("corpus")) throw ConfigError("scan: missing 'corpus'");
  const auto corpus = detail::resolve(ctx, config.at("corpus").get<std::string>());
  if (!fs::exists(corpus)) throw ConfigError("scan: corpus not found: " + corpus.string());
  detail::require_model_source(config, "target", ctx);
  detail::require_model_source(config, "calibration", ctx);
}

// Lazy risk scan of a corpus under a target and a calibration model.
inline RunOutcome run_scan(const nlohmann::json& config, const RunContext& ctx) {
  using detail::get_or;
  validate_paths(config, ctx);
  const auto corpus_path = detail::resolve(ctx, config.at("corpus").get<std::string>());
  std::ifstream corpus_in(corpus_path);
  const auto corpus = read_corpus_jsonl(corpus_in);

  SamplingPolicy policy;
  nlohmann::json policy_echo = {{"k", nullptr}, {"temperature", 1.0}};
  if (config.contains("policy")) {
    const auto& p = config.at("policy");
    if (p.contains("k") && !p.at("k").is_null()) {
      policy.k = p.at("k").get<std::size_t>();
      policy_echo["k"] = *policy.k;
    }
    if (p.contains("temperature")) {
      policy.temperatures = TemperatureSchedule::from_json(p.at("temperature"));
    }
  }
  policy.validate();
  policy_echo["temperature"] = policy.temperatures.to_json();
  RiskScanOptions options;
  options.threshold = get_or<double>(config, "threshold", options.threshold);
  options.surface_budget = get_or<double>(config, "surface_budget", options.surface_budget);

  const auto target = detail::load_model(config.at("target"), ctx, corpus);
  const auto calibration = detail::load_model(config.at("calibration"), ctx, corpus);

  const nlohmann::json effective = {{"corpus", config.at("corpus")},
                                    {"target", config.at("target")},
                                    {"calibration", config.at("calibration")},
                                    {"policy", policy_echo},
                                    {"threshold", options.threshold},
                                    {"surface_budget", options.surface_budget}};
  const auto records = risk_scan(*target, *calibration, policy, corpus, options);
  std::string csv = detail::provenance(ctx, effective);
  csv += std::string(kRiskCsvHeader) + "\n";
  for (const auto& r : records) csv += risk_csv_row(r) + "\n";

  RunOutcome outcome;
  outcome.files.push_back(detail::write_file(ctx, "risk.csv", csv));
  return outcome;
}

// Dispatch by ctx.command; creates the output directory.
inline RunOutcome run_command(const nlohmann::json& config, RunContext ctx) {
  static const std::vector<std::string> kCommands = {"account", "simulate", "scan", "calibrate"};
  if (std::find(kCommands.begin(), kCommands.end(), ctx.command) == kCommands.end()) {
    throw ConfigError("unknown subcommand: " + ctx.command);
  }
  validate_paths(config, ctx);
  fs::create_directories(ctx.out_dir);
  if (ctx.command == "account") return run_account(config, ctx);
  if (ctx.command == "simulate") return run_simulate(config, ctx);
  if (ctx.command == "scan") return run_scan(config, ctx);
  return run_calibrate(config, ctx);
}

}  // namespace rdpleak::reports

#endif  // RDPLEAK_REPORTS_HPP_
