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

// DP-SGD training of a position-wise n-gram softmax table on a single digit
// canary, and Monte-Carlo estimation of the canary's posterior probability
// p1 = E_theta[f_theta(c)] across independently trained models.
//
// Only the T x D parameters on the canary's own path are materialized:
// theta[t][d] is the logit of digit d at position t given the canary
// prefix, so f_theta(c) = prod_t softmax(theta[t])[c_t].

#ifndef RDPLEAK_CANARY_SIM_HPP_
#define RDPLEAK_CANARY_SIM_HPP_

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "rdpleak/leakage_bounds.hpp"
#include "rdpleak/numeric.hpp"
#include "rdpleak/privacy_accountant.hpp"

namespace rdpleak {

struct Canary {
  std::vector<int> digits;
  int alphabet = 10;
  int replication = 1;

  int length() const { return static_cast<int>(digits.size()); }

  // log p0 = -T log D: by symmetry over digit permutations, a model trained
  // without the canary assigns it probability D^-T on average.
  double log_prior() const { return -length() * std::log(static_cast<double>(alphabet)); }

  void validate() const {
    if (digits.empty()) throw std::domain_error("Canary: length must be >= 1");
    if (alphabet < 2) throw std::domain_error("Canary: alphabet must be >= 2");
    if (replication < 1) throw std::domain_error("Canary: replication must be >= 1");
    for (int d : digits) {
      if (d < 0 || d >= alphabet) {
        throw std::domain_error("Canary: digit out of range");
      }
    }
  }

  static Canary random(int length, int alphabet, std::uint64_t seed,
                       int replication = 1) {
    if (length < 1 || alphabet < 2) {
      throw std::domain_error("Canary::random: need length >= 1, alphabet >= 2");
    }
    std::seed_seq seq{static_cast<std::uint32_t>(seed),
                      static_cast<std::uint32_t>(seed >> 32), 0x63616eu};
    std::mt19937_64 rng(seq);
    std::uniform_int_distribution<int> digit(0, alphabet - 1);
    Canary c;
    c.alphabet = alphabet;
    c.replication = replication;
    for (int t = 0; t < length; ++t) c.digits.push_back(digit(rng));
    return c;
  }
};

// Row-major T x D logits.
class NGramTable {
 public:
  NGramTable(int length, int alphabet)
      : length_(length),
        alphabet_(alphabet),
        theta_(static_cast<std::size_t>(length) * alphabet, 0.0) {
    if (length < 1 || alphabet < 2) {
      throw std::domain_error("NGramTable: need length >= 1 and alphabet >= 2");
    }
  }

  int length() const { return length_; }
  int alphabet() const { return alphabet_; }

  std::span<double> row(int t) {
    return {theta_.data() + static_cast<std::size_t>(t) * alphabet_,
            static_cast<std::size_t>(alphabet_)};
  }
  std::span<const double> row(int t) const {
    return {theta_.data() + static_cast<std::size_t>(t) * alphabet_,
            static_cast<std::size_t>(alphabet_)};
  }
  std::span<double> values() { return theta_; }
  std::span<const double> values() const { return theta_; }

  // log softmax of row t.
  std::vector<double> log_probs(int t) const {
    auto r = row(t);
    const double lse = log_sum_exp(r);
    std::vector<double> out(r.begin(), r.end());
    for (double& v : out) v -= lse;
    return out;
  }

  friend bool operator==(const NGramTable&, const NGramTable&) = default;

 private:
  int length_;
  int alphabet_;
  std::vector<double> theta_;
};

inline void check_shapes(const NGramTable& table, const Canary& canary) {
  canary.validate();
  if (table.length() != canary.length() || table.alphabet() != canary.alphabet) {
    throw std::invalid_argument("table and canary shapes disagree");
  }
}

// log f_theta(c) = sum_t log u_{t, c_t}.
inline double canary_log_prob(const NGramTable& table, const Canary& canary) {
  check_shapes(table, canary);
  double total = 0.0;
  for (int t = 0; t < canary.length(); ++t) {
    const auto r = table.row(t);
    total += r[canary.digits[t]] - log_sum_exp(r);
  }
  return total;
}

// Softmax cross-entropy summed over positions.
inline double loss(const NGramTable& table, const Canary& canary) {
  return -canary_log_prob(table, canary);
}

// d loss / d theta = u - onehot(c), row-major T x D.
inline std::vector<double> grad(const NGramTable& table, const Canary& canary) {
  check_shapes(table, canary);
  std::vector<double> g;
  g.reserve(table.values().size());
  for (int t = 0; t < canary.length(); ++t) {
    const auto lp = table.log_probs(t);
    for (int d = 0; d < canary.alphabet; ++d) {
      g.push_back(std::exp(lp[d]) - (d == canary.digits[t] ? 1.0 : 0.0));
    }
  }
  return g;
}

// g / max(1, ||g||_2 / clip); clip == +inf leaves g unchanged.
inline std::vector<double> clip_gradient(std::vector<double> g, double clip) {
  if (!(clip > 0.0)) throw std::domain_error("clip_gradient: clip must be > 0");
  if (clip == kInf) return g;
  double sq = 0.0;
  for (double v : g) sq += v * v;
  const double scale = std::max(1.0, std::sqrt(sq) / clip);
  if (scale > 1.0) {
    for (double& v : g) v /= scale;
  }
  return g;
}

struct TrainConfig {
  double sigma = 1.0;
  double clip = 1.0;
  double lr = 0.5;
  std::int64_t steps = 1000;
  double q = 1.0;
  std::uint64_t seed = 0;

  // C = 1, q = 1, lr = 0.5 / sigma.
  static TrainConfig for_noise(double sigma, std::int64_t steps,
                               std::uint64_t seed) {
    TrainConfig c;
    c.sigma = sigma;
    c.lr = 0.5 / sigma;
    c.steps = steps;
    c.seed = seed;
    return c;
  }

  void validate() const {
    if (!(sigma >= 0.0)) throw std::domain_error("TrainConfig: sigma must be >= 0");
    if (!(clip > 0.0)) throw std::domain_error("TrainConfig: clip must be > 0");
    if (sigma > 0.0 && clip == kInf) {
      throw std::domain_error("TrainConfig: noise needs a finite clip norm");
    }
    if (!(lr > 0.0) || !std::isfinite(lr)) {
      throw std::domain_error("TrainConfig: lr must be finite and > 0");
    }
    if (steps < 1) throw std::domain_error("TrainConfig: steps must be >= 1");
    if (!(q > 0.0 && q <= 1.0)) throw std::domain_error("TrainConfig: q must lie in (0, 1]");
  }
};

// Per-model generator: a function of (master seed, model index) only, so
// results do not depend on how models are spread over threads. Within a
// model, draws are consumed in step order, then coordinate order.
inline std::mt19937_64 model_rng(std::uint64_t seed, std::uint64_t model_index) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed),
                    static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(model_index),
                    static_cast<std::uint32_t>(model_index >> 32)};
  return std::mt19937_64(seq);
}

// One DP-SGD update:
//   theta <- theta - lr * (sum_{included copies} clip(g) + N(0, sigma^2 C^2)) / L
// With q == 1 every copy is included and L = replication. Otherwise each
// copy is included with probability q and L is the realized count; an empty
// batch still applies the noise, divided by max(1, round(q * replication)).
inline void dp_sgd_step(NGramTable& table, const Canary& canary,
                        const TrainConfig& config, std::mt19937_64& rng) {
  int included = canary.replication;
  if (config.q < 1.0) {
    std::bernoulli_distribution take(config.q);
    included = 0;
    for (int i = 0; i < canary.replication; ++i) included += take(rng) ? 1 : 0;
  }
  const double batch =
      included > 0 ? included
                   : std::max(1.0, std::round(config.q * canary.replication));

  std::vector<double> update(table.values().size(), 0.0);
  if (included > 0) {
    update = clip_gradient(grad(table, canary), config.clip);
    for (double& v : update) v *= included;
  }
  if (config.sigma > 0.0) {
    std::normal_distribution<double> noise(0.0, config.sigma * config.clip);
    for (double& v : update) v += noise(rng);
  }
  auto theta = table.values();
  const double step = config.lr / batch;
  for (std::size_t i = 0; i < theta.size(); ++i) theta[i] -= step * update[i];
}

inline NGramTable train_model(const TrainConfig& config, const Canary& canary,
                              std::uint64_t model_index) {
  config.validate();
  canary.validate();
  NGramTable table(canary.length(), canary.alphabet);
  auto rng = model_rng(config.seed, model_index);
  for (std::int64_t s = 0; s < config.steps; ++s) {
    dp_sgd_step(table, canary, config, rng);
  }
  return table;
}

// Runs body(i) for i in [0, n) over `threads` workers in contiguous blocks.
inline void parallel_for(std::size_t n, unsigned threads,
                         const std::function<void(std::size_t)>& body) {
  threads = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(n)));
  if (threads <= 1) {
    for (std::size_t i = 0; i < n; ++i) body(i);
    return;
  }
  std::vector<std::jthread> workers;
  const std::size_t block = (n + threads - 1) / threads;
  for (unsigned w = 0; w < threads; ++w) {
    const std::size_t begin = w * block;
    const std::size_t end = std::min(n, begin + block);
    if (begin >= end) break;
    workers.emplace_back([&body, begin, end] {
      for (std::size_t i = begin; i < end; ++i) body(i);
    });
  }
}

// Standard error of log_mean_exp(xs) by bootstrap resampling of models.
inline double bootstrap_log_mean_exp_se(std::span<const double> xs,
                                        int resamples, std::uint64_t seed) {
  if (xs.size() < 2 || resamples < 2) return 0.0;
  std::seed_seq seq{static_cast<std::uint32_t>(seed),
                    static_cast<std::uint32_t>(seed >> 32), 0x626f6fu};
  std::mt19937_64 rng(seq);
  std::uniform_int_distribution<std::size_t> pick(0, xs.size() - 1);
  std::vector<double> sample(xs.size());
  std::vector<double> estimates;
  estimates.reserve(resamples);
  for (int b = 0; b < resamples; ++b) {
    for (double& v : sample) v = xs[pick(rng)];
    estimates.push_back(log_mean_exp(sample));
  }
  const double shift = estimates.front();
  double mean = 0.0;
  for (double e : estimates) mean += e - shift;
  mean /= resamples;
  double var = 0.0;
  for (double e : estimates) var += (e - shift - mean) * (e - shift - mean);
  return std::sqrt(var / (resamples - 1));
}

struct McEstimate {
  std::size_t n_models = 0;
  double log_p1 = kNegInf;        // log of the mean canary probability
  double per_model_mean = 0.0;    // of log f_theta(c)
  double per_model_std = 0.0;     // sample standard deviation
  double log_p0 = 0.0;
  double leakage_nats = 0.0;      // log_p1 - log_p0
  double bootstrap_se = 0.0;      // of log_p1
  std::vector<double> log_probs;  // per model, by model index
};

struct McOptions {
  unsigned threads = 1;
  int bootstrap_resamples = 200;
};

// Trains n_models models with seeds derived from config.seed and combines
// their canary log-probabilities in model-index order.
inline McEstimate mc_estimate(const TrainConfig& config, const Canary& canary,
                              std::size_t n_models, McOptions options = {}) {
  if (n_models < 1) throw std::domain_error("mc_estimate: need n_models >= 1");
  config.validate();
  canary.validate();
  McEstimate est;
  est.n_models = n_models;
  est.log_probs.assign(n_models, 0.0);
  parallel_for(n_models, options.threads, [&](std::size_t i) {
    est.log_probs[i] = canary_log_prob(train_model(config, canary, i), canary);
  });

  const auto& xs = est.log_probs;
  est.log_p1 = log_mean_exp(xs);
  // Shifted accumulation keeps identical inputs exact.
  const double shift = xs.front();
  double sum = 0.0;
  for (double x : xs) sum += x - shift;
  est.per_model_mean = shift + sum / static_cast<double>(n_models);
  if (n_models > 1) {
    double var = 0.0;
    for (double x : xs) var += (x - est.per_model_mean) * (x - est.per_model_mean);
    est.per_model_std = std::sqrt(var / static_cast<double>(n_models - 1));
  }
  est.log_p0 = canary.log_prior();
  est.leakage_nats = est.log_p1 - est.log_p0;
  est.bootstrap_se =
      bootstrap_log_mean_exp_se(xs, options.bootstrap_resamples, config.seed);
  return est;
}

// Learning rate as a function of the noise multiplier: numerator / sigma
// when inverse_sigma, otherwise the constant numerator.
struct LrRule {
  double numerator = 0.5;
  bool inverse_sigma = true;

  double lr(double sigma) const {
    if (!inverse_sigma) return numerator;
    if (!(sigma > 0.0)) {
      throw std::domain_error("LrRule: lr = c / sigma needs sigma > 0");
    }
    return numerator / sigma;
  }
};

struct LeakageRow {
  double sigma = 0.0;
  std::int64_t steps = 0;
  McEstimate estimate;
  LeakageReport bound;
  bool violation = false;  // leakage > bound + 3 se
  bool wide_error_bars = false;
};

struct ExperimentOptions {
  std::int64_t steps = 1000;
  double clip = 1.0;
  double q = 1.0;
  LrRule lr_rule;
  std::uint64_t seed = 0;
  std::size_t n_models = 10000;
  McOptions mc;
  std::optional<OrderGrid> orders;
};

// Accountant curve of the simulated training run. Replicated canaries are
// accounted as a single record; see leakage_experiment.
inline RdpCurve canary_training_curve(double sigma, const ExperimentOptions& opt) {
  const auto grid = opt.orders.value_or(OrderGrid::default_grid());
  return account(MechanismParams{opt.q, sigma, opt.steps, opt.clip}, grid);
}

// For each sigma: Monte-Carlo leakage and the bound L(p0) from the
// accountant. Every sigma reuses the same model seeds.
inline std::vector<LeakageRow> leakage_experiment(std::span<const double> sigma_grid,
                                                  const Canary& canary,
                                                  const ExperimentOptions& opt) {
  std::vector<LeakageRow> rows;
  for (double sigma : sigma_grid) {
    TrainConfig config;
    config.sigma = sigma;
    config.clip = opt.clip;
    config.lr = opt.lr_rule.lr(sigma);
    config.steps = opt.steps;
    config.q = opt.q;
    config.seed = opt.seed;
    LeakageRow row;
    row.sigma = sigma;
    row.steps = opt.steps;
    row.estimate = mc_estimate(config, canary, opt.n_models, opt.mc);
    row.bound = min_leakage(canary_training_curve(sigma, opt), canary.log_prior());
    row.violation = row.estimate.leakage_nats >
                    row.bound.L_nats + 3.0 * row.estimate.bootstrap_se;
    row.wide_error_bars = opt.n_models < 100;
    rows.push_back(std::move(row));
  }
  return rows;
}

struct CalibrationPoint {
  std::int64_t steps = 0;
  double per_model_mean = 0.0;
  double per_model_std = 0.0;
  double log_p1 = 0.0;
  double distance = 0.0;
};

struct CalibrationResult {
  std::vector<CalibrationPoint> points;
  std::int64_t best_steps = 0;
  bool mean_monotone = true;  // per-model mean monotone along the sweep
};

struct CalibrationTarget {
  double mean = -22.5;
  double std = 1.5;
};

// Sweeps step counts at a fixed sigma and picks the one whose per-model
// (mean, std) of log f_theta(c) is closest in L1 to the target; ties go to
// the fewest steps. All sweep points share model seeds.
inline CalibrationResult calibrate_steps(double sigma,
                                         std::span<const std::int64_t> sweep,
                                         const Canary& canary,
                                         const ExperimentOptions& opt,
                                         CalibrationTarget target = {}) {
  if (sweep.empty()) throw std::invalid_argument("calibrate_steps: empty sweep");
  CalibrationResult result;
  double best = kInf;
  for (std::int64_t steps : sweep) {
    TrainConfig config;
    config.sigma = sigma;
    config.clip = opt.clip;
    config.lr = opt.lr_rule.lr(sigma);
    config.steps = steps;
    config.q = opt.q;
    config.seed = opt.seed;
    const auto est = mc_estimate(config, canary, opt.n_models,
                                 McOptions{opt.mc.threads, 0});
    CalibrationPoint p;
    p.steps = steps;
    p.per_model_mean = est.per_model_mean;
    p.per_model_std = est.per_model_std;
    p.log_p1 = est.log_p1;
    p.distance = std::abs(est.per_model_mean - target.mean) +
                 std::abs(est.per_model_std - target.std);
    if (p.distance < best || (p.distance == best && steps < result.best_steps)) {
      best = p.distance;
      result.best_steps = steps;
    }
    result.points.push_back(p);
  }
  auto by_steps = result.points;
  std::sort(by_steps.begin(), by_steps.end(),
            [](const auto& a, const auto& b) { return a.steps < b.steps; });
  bool up = true;
  bool down = true;
  for (std::size_t i = 1; i < by_steps.size(); ++i) {
    const double delta = by_steps[i].per_model_mean - by_steps[i - 1].per_model_mean;
    if (delta < 0) up = false;
    if (delta > 0) down = false;
  }
  result.mean_monotone = up || down;
  return result;
}

inline nlohmann::json table_to_json(const NGramTable& table) {
  nlohmann::json rows = nlohmann::json::array();
  for (int t = 0; t < table.length(); ++t) {
    auto r = table.row(t);
    rows.push_back(std::vector<double>(r.begin(), r.end()));
  }
  return {{"T", table.length()}, {"D", table.alphabet()}, {"theta", rows}};
}

inline NGramTable table_from_json(const nlohmann::json& j) {
  NGramTable table(j.at("T").get<int>(), j.at("D").get<int>());
  const auto& rows = j.at("theta");
  if (rows.size() != static_cast<std::size_t>(table.length())) {
    throw std::invalid_argument("table_from_json: theta has the wrong row count");
  }
  for (int t = 0; t < table.length(); ++t) {
    auto values = rows.at(t).get<std::vector<double>>();
    if (values.size() != static_cast<std::size_t>(table.alphabet())) {
      throw std::invalid_argument("table_from_json: theta row has the wrong width");
    }
    std::copy(values.begin(), values.end(), table.row(t).begin());
  }
  return table;
}

}  // namespace rdpleak

#endif  // RDPLEAK_CANARY_SIM_HPP_
