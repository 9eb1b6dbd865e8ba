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

// Lazy analysis of sampling-based extraction attacks. Instead of drawing
// samples until a secret shows up, evaluate the exact probability that a
// top-k / temperature decoder emits it:
//
//   lambda(x_i | x_<i) = f(x_i | x_<i)^(1/beta_i) / sum_{y in T_k} f(y | x_<i)^(1/beta_i)
//
// for x_i in the top-k set T_k and 0 otherwise, and chain the conditionals.
// An attacker needs on the order of 1 / lambda(x) samples to surface x.

#ifndef RDPLEAK_LAZY_SAMPLER_HPP_
#define RDPLEAK_LAZY_SAMPLER_HPP_

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <istream>
#include <limits>
#include <map>
#include <memory>
#include <numeric>
#include <optional>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <tuple>
#include <vector>

#include <json.hpp>

#include "rdpleak/canary_sim.hpp"
#include "rdpleak/numeric.hpp"

namespace rdpleak {

using Token = int;

// Next-token distributions in log-space. Implementations must be safe for
// concurrent const calls.
class ConditionalModel {
 public:
  virtual ~ConditionalModel() = default;
  virtual std::size_t vocab_size() const = 0;
  virtual std::vector<double> next_log_probs(std::span<const Token> context) const = 0;
};

class UniformModel final : public ConditionalModel {
 public:
  explicit UniformModel(std::size_t vocab) : vocab_(vocab) {
    if (vocab == 0) throw std::domain_error("UniformModel: empty vocabulary");
  }
  std::size_t vocab_size() const override { return vocab_; }
  std::vector<double> next_log_probs(std::span<const Token>) const override {
    return std::vector<double>(vocab_, -std::log(static_cast<double>(vocab_)));
  }

 private:
  std::size_t vocab_;
};

// Position-wise table: the distribution at position t is softmax(theta[t]),
// whatever the prefix. This is the canary-path model trained in
// canary_sim, so it is only defined for prefixes shorter than T.
class TableModel final : public ConditionalModel {
 public:
  explicit TableModel(NGramTable table) : table_(std::move(table)) {}
  std::size_t vocab_size() const override { return table_.alphabet(); }
  std::vector<double> next_log_probs(std::span<const Token> context) const override {
    if (context.size() >= static_cast<std::size_t>(table_.length())) {
      throw std::out_of_range("TableModel: context longer than the table");
    }
    return table_.log_probs(static_cast<int>(context.size()));
  }

 private:
  NGramTable table_;
};

struct CorpusEntry {
  std::string id;
  std::vector<Token> tokens;
};

// One JSON object per line: {"id": "...", "tokens": [..]}.
inline std::vector<CorpusEntry> read_corpus_jsonl(std::istream& in) {
  std::vector<CorpusEntry> corpus;
  std::string line;
  while (std::getline(in, line)) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const auto j = nlohmann::json::parse(line);
    corpus.push_back({j.at("id").get<std::string>(),
                      j.at("tokens").get<std::vector<Token>>()});
  }
  return corpus;
}

// Precomputed next-token distributions keyed by prefix, for models scored
// outside this process.
class ScoreTableModel final : public ConditionalModel {
 public:
  explicit ScoreTableModel(std::size_t vocab) : vocab_(vocab) {
    if (vocab == 0) throw std::domain_error("ScoreTableModel: empty vocabulary");
  }

  void add(std::vector<Token> prefix, std::vector<double> log_probs) {
    if (log_probs.size() != vocab_) {
      throw std::invalid_argument("ScoreTableModel: distribution has the wrong size");
    }
    const double total = std::exp(log_sum_exp(log_probs));
    if (!(std::abs(total - 1.0) <= 1e-9)) {
      throw std::invalid_argument("ScoreTableModel: distribution does not sum to 1");
    }
    table_[std::move(prefix)] = std::move(log_probs);
  }

  std::size_t vocab_size() const override { return vocab_; }

  std::vector<double> next_log_probs(std::span<const Token> context) const override {
    const auto it = table_.find(std::vector<Token>(context.begin(), context.end()));
    if (it == table_.end()) {
      throw std::out_of_range("ScoreTableModel: no scores for this prefix");
    }
    return it->second;
  }

  // Records {"id": "...", "position": i, "log_probs": [...]}, one per line;
  // the prefix is the first `position` tokens of corpus entry `id`.
  static ScoreTableModel from_jsonl(std::istream& in,
                                    std::span<const CorpusEntry> corpus) {
    std::map<std::string, const CorpusEntry*> by_id;
    for (const auto& e : corpus) by_id[e.id] = &e;
    std::optional<ScoreTableModel> model;
    std::string line;
    while (std::getline(in, line)) {
      if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
      const auto j = nlohmann::json::parse(line);
      const auto id = j.at("id").get<std::string>();
      const auto position = j.at("position").get<std::size_t>();
      auto log_probs = j.at("log_probs").get<std::vector<double>>();
      if (!model) model.emplace(log_probs.size());
      const auto it = by_id.find(id);
      if (it == by_id.end()) continue;  // scores for sequences not scanned
      const auto& tokens = it->second->tokens;
      if (position > tokens.size()) {
        throw std::invalid_argument("score record position beyond sequence " + id);
      }
      model->add({tokens.begin(), tokens.begin() + static_cast<std::ptrdiff_t>(position)},
                 std::move(log_probs));
    }
    if (!model) throw std::invalid_argument("score file has no records");
    return std::move(*model);
  }

 private:
  std::size_t vocab_;
  std::map<std::vector<Token>, std::vector<double>> table_;
};

class TemperatureSchedule {
 public:
  static TemperatureSchedule constant(double beta) {
    TemperatureSchedule s;
    s.kind_ = Kind::kConstant;
    s.start_ = beta;
    s.validate();
    return s;
  }

  // beta_i = max(end, start - i * slope).
  static TemperatureSchedule linear_decay(double start, double end, double slope) {
    TemperatureSchedule s;
    s.kind_ = Kind::kLinear;
    s.start_ = start;
    s.end_ = end;
    s.slope_ = slope;
    s.validate();
    return s;
  }

  static TemperatureSchedule explicit_list(std::vector<double> betas) {
    TemperatureSchedule s;
    s.kind_ = Kind::kList;
    s.list_ = std::move(betas);
    s.validate();
    return s;
  }

  double at(std::size_t position) const {
    switch (kind_) {
      case Kind::kConstant:
        return start_;
      case Kind::kLinear:
        return std::max(end_, start_ - static_cast<double>(position) * slope_);
      case Kind::kList:
        if (position >= list_.size()) {
          throw std::out_of_range("TemperatureSchedule: no temperature for position " +
                                  std::to_string(position));
        }
        return list_[position];
    }
    return start_;
  }

  nlohmann::json to_json() const {
    switch (kind_) {
      case Kind::kConstant:
        return {{"type", "constant"}, {"value", start_}};
      case Kind::kLinear:
        return {{"type", "linear"}, {"start", start_}, {"end", end_}, {"slope", slope_}};
      case Kind::kList:
        return {{"type", "list"}, {"values", list_}};
    }
    return nullptr;
  }

  static TemperatureSchedule from_json(const nlohmann::json& j) {
    if (j.is_number()) return constant(j.get<double>());
    const auto type = j.at("type").get<std::string>();
    if (type == "constant") return constant(j.at("value").get<double>());
    if (type == "linear") {
      return linear_decay(j.at("start").get<double>(), j.at("end").get<double>(),
                          j.at("slope").get<double>());
    }
    if (type == "list") return explicit_list(j.at("values").get<std::vector<double>>());
    throw std::invalid_argument("unknown temperature schedule type: " + type);
  }

 private:
  enum class Kind { kConstant, kLinear, kList };

  void validate() const {
    auto positive = [](double b) { return b > 0.0 && std::isfinite(b); };
    switch (kind_) {
      case Kind::kConstant:
        if (!positive(start_)) throw std::domain_error("temperature must be > 0");
        break;
      case Kind::kLinear:
        if (!positive(start_) || !positive(end_) || !(slope_ >= 0.0)) {
          throw std::domain_error("linear schedule needs start, end > 0 and slope >= 0");
        }
        break;
      case Kind::kList:
        if (!std::all_of(list_.begin(), list_.end(), positive)) {
          throw std::domain_error("every temperature must be > 0");
        }
        break;
    }
  }

  Kind kind_ = Kind::kConstant;
  double start_ = 1.0;
  double end_ = 1.0;
  double slope_ = 0.0;
  std::vector<double> list_;
};

struct SamplingPolicy {
  std::optional<std::size_t> k;  // nullopt: whole vocabulary
  TemperatureSchedule temperatures = TemperatureSchedule::constant(1.0);

  void validate() const {
    if (k && *k < 1) throw std::domain_error("SamplingPolicy: k must be >= 1");
  }
};

// Decoder distribution lambda(. | context). Tokens outside the top-k set get
// -inf. Every token tying with the k-th largest probability is kept.
inline std::vector<double> policy_log_probs(const ConditionalModel& model,
                                            const SamplingPolicy& policy,
                                            std::span<const Token> context) {
  policy.validate();
  auto raw = model.next_log_probs(context);
  if (raw.empty()) throw std::domain_error("policy_log_probs: empty vocabulary");
  const double beta = policy.temperatures.at(context.size());

  double threshold = kNegInf;
  if (policy.k && *policy.k < raw.size()) {
    std::vector<double> sorted = raw;
    std::nth_element(sorted.begin(), sorted.begin() + static_cast<std::ptrdiff_t>(*policy.k - 1),
                     sorted.end(), std::greater<>());
    threshold = sorted[*policy.k - 1];
  }
  std::vector<double> out(raw.size(), kNegInf);
  std::vector<double> kept;
  for (std::size_t i = 0; i < raw.size(); ++i) {
    if (raw[i] > kNegInf && raw[i] >= threshold) {
      out[i] = raw[i] / beta;
      kept.push_back(out[i]);
    }
  }
  const double norm = log_sum_exp(kept);
  for (double& v : out) {
    if (v > kNegInf) v -= norm;
  }
  return out;
}

inline double conditional_density(const ConditionalModel& model,
                                  const SamplingPolicy& policy,
                                  std::span<const Token> context, Token token) {
  const auto lp = policy_log_probs(model, policy, context);
  if (token < 0 || static_cast<std::size_t>(token) >= lp.size()) {
    throw std::out_of_range("conditional_density: token outside the vocabulary");
  }
  return lp[token];
}

// log lambda(x_1..x_T) via the chain rule; 0 for the empty sequence.
inline double sequence_density(const ConditionalModel& model,
                               const SamplingPolicy& policy,
                               std::span<const Token> sequence) {
  double total = 0.0;
  for (std::size_t i = 0; i < sequence.size(); ++i) {
    total += conditional_density(model, policy, sequence.first(i), sequence[i]);
    if (total == kNegInf) break;
  }
  return total;
}

inline std::vector<Token> sample_sequence(const ConditionalModel& model,
                                          const SamplingPolicy& policy,
                                          std::size_t length, std::mt19937_64& rng) {
  std::vector<Token> seq;
  seq.reserve(length);
  std::vector<double> weights;
  for (std::size_t i = 0; i < length; ++i) {
    const auto lp = policy_log_probs(model, policy, seq);
    const double top = *std::max_element(lp.begin(), lp.end());
    weights.assign(lp.size(), 0.0);
    for (std::size_t v = 0; v < lp.size(); ++v) weights[v] = std::exp(lp[v] - top);
    std::discrete_distribution<Token> pick(weights.begin(), weights.end());
    seq.push_back(pick(rng));
  }
  return seq;
}

struct TrialsEstimate {
  double log2_trials = 0.0;  // log2 of the expected number of samples
  bool unreachable = false;  // zero density under this decoder
};

inline TrialsEstimate trials_to_surface(double log_lambda) {
  if (!(log_lambda <= 0.0)) {
    throw std::domain_error("trials_to_surface: log_lambda must be <= 0");
  }
  if (log_lambda == kNegInf) return {kInf, true};
  return {-log_lambda / kLn2, false};
}

// Total negative log-likelihood under the raw model (no decoding policy).
inline double sequence_nll(const ConditionalModel& model,
                           std::span<const Token> sequence) {
  double total = 0.0;
  for (std::size_t i = 0; i < sequence.size(); ++i) {
    const auto lp = model.next_log_probs(sequence.first(i));
    if (sequence[i] < 0 || static_cast<std::size_t>(sequence[i]) >= lp.size()) {
      throw std::out_of_range("sequence_nll: token outside the vocabulary");
    }
    total -= lp[sequence[i]];
  }
  return total;
}

// L(target, x) - L(calibration, x); strongly negative means memorized.
inline double calibrated_loss(const ConditionalModel& target,
                              const ConditionalModel& calibration,
                              std::span<const Token> sequence) {
  return sequence_nll(target, sequence) - sequence_nll(calibration, sequence);
}

enum class RiskCategory {
  kAtRisk,                      // memorized and likely to be sampled
  kMemorizedUnlikelyToSurface,  // memorized, beyond the sampling budget
  kLikelyToSurface,             // sampled often but not memorized
  kLowRisk,
  kUnscorable,
};

inline const char* to_string(RiskCategory c) {
  switch (c) {
    case RiskCategory::kAtRisk: return "at_risk";
    case RiskCategory::kMemorizedUnlikelyToSurface: return "memorized_unlikely_to_surface";
    case RiskCategory::kLikelyToSurface: return "likely_to_surface";
    case RiskCategory::kLowRisk: return "low_risk";
    case RiskCategory::kUnscorable: return "unscorable";
  }
  return "unknown";
}

struct RiskScanOptions {
  double threshold = 0.0;          // calibrated loss below this counts as memorized
  double surface_budget = 200000;  // samples an attacker is assumed to draw
};

struct RiskRecord {
  std::string id;
  double log_lambda = kNegInf;
  double calibrated_loss = std::numeric_limits<double>::quiet_NaN();
  RiskCategory category = RiskCategory::kUnscorable;
  std::vector<std::string> flags;
};

inline RiskCategory classify(double log_lambda, double calibrated,
                             const RiskScanOptions& options) {
  if (std::isnan(calibrated)) return RiskCategory::kUnscorable;
  const bool memorized = calibrated < options.threshold;
  const bool surfaces = log_lambda >= -std::log(options.surface_budget);
  if (memorized) {
    return surfaces ? RiskCategory::kAtRisk : RiskCategory::kMemorizedUnlikelyToSurface;
  }
  return surfaces ? RiskCategory::kLikelyToSurface : RiskCategory::kLowRisk;
}

// One record per corpus sequence. Order: sequences with non-zero density
// first; within those, memorized ones (calibrated loss below threshold)
// before the rest; then by decreasing log_lambda; corpus order on ties.
inline std::vector<RiskRecord> risk_scan(const ConditionalModel& target,
                                         const ConditionalModel& calibration,
                                         const SamplingPolicy& policy,
                                         std::span<const CorpusEntry> corpus,
                                         const RiskScanOptions& options = {}) {
  std::vector<RiskRecord> records;
  records.reserve(corpus.size());
  for (const auto& entry : corpus) {
    RiskRecord r;
    r.id = entry.id;
    const bool in_vocab = std::all_of(entry.tokens.begin(), entry.tokens.end(), [&](Token t) {
      return t >= 0 && static_cast<std::size_t>(t) < target.vocab_size() &&
             static_cast<std::size_t>(t) < calibration.vocab_size();
    });
    if (!in_vocab) {
      r.flags.push_back("oov");
    } else {
      try {
        r.log_lambda = sequence_density(target, policy, entry.tokens);
        r.calibrated_loss = calibrated_loss(target, calibration, entry.tokens);
      } catch (const std::out_of_range&) {
        r.log_lambda = kNegInf;
        r.calibrated_loss = std::numeric_limits<double>::quiet_NaN();
        r.flags.push_back("missing_scores");
      }
    }
    if (r.log_lambda == kNegInf && r.flags.empty()) r.flags.push_back("unreachable");
    r.category = classify(r.log_lambda, r.calibrated_loss, options);
    records.push_back(std::move(r));
  }

  std::vector<std::size_t> order(records.size());
  std::iota(order.begin(), order.end(), 0);
  auto key = [&](std::size_t i) {
    const auto& r = records[i];
    const int reachable = r.log_lambda > kNegInf ? 0 : 1;
    const int memorized = r.calibrated_loss < options.threshold ? 0 : 1;
    return std::make_tuple(reachable, memorized, -r.log_lambda, i);
  };
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return key(a) < key(b); });
  std::vector<RiskRecord> sorted;
  sorted.reserve(records.size());
  for (std::size_t i : order) sorted.push_back(std::move(records[i]));
  return sorted;
}

inline constexpr const char* kRiskCsvHeader =
    "id,log2_lambda,trials_log2,calibrated_loss,flags";

inline std::string csv_escape(const std::string& field) {
  if (field.find_first_of(",\"\n") == std::string::npos) return field;
  std::string out = "\"";
  for (char c : field) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

inline std::string risk_csv_row(const RiskRecord& r) {
  const double log2_lambda = r.log_lambda / kLn2;
  const double trials = r.log_lambda == kNegInf ? kInf : -log2_lambda;
  std::string flags = to_string(r.category);
  for (const auto& f : r.flags) flags += ";" + f;
  return csv_escape(r.id) + "," + format_double(log2_lambda) + "," +
         format_double(trials) + "," + format_double(r.calibrated_loss) + "," + flags;
}

}  // namespace rdpleak

#endif  // RDPLEAK_LAZY_SAMPLER_HPP_
