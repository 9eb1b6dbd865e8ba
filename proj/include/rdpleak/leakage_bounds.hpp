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

// Reconstruction-leakage bounds derived from probability preservation under
// RDP. For a secret with prior probability p0 and posterior p1,
//
//   -h(alpha, p0) <= log(p1 / p0) <= l(alpha, p0)
//   l(alpha, p0) = d_alpha (alpha - 1) / alpha + log(1 / p0) / alpha
//   h(alpha, p0) = d_alpha + log(1 / p0) / (alpha - 1)
//
// Both are minimized over the order grid. All values are in nats unless a
// name says bits. Priors are passed as natural logs.

#ifndef RDPLEAK_LEAKAGE_BOUNDS_HPP_
#define RDPLEAK_LEAKAGE_BOUNDS_HPP_

#include <algorithm>
#include <cmath>
#include <optional>
#include <stdexcept>
#include <string>

#include <json.hpp>

#include "rdpleak/numeric.hpp"
#include "rdpleak/privacy_accountant.hpp"

namespace rdpleak {

class SecretPrior {
 public:
  static SecretPrior from_log_p0(double log_p0) {
    if (!(log_p0 <= 0.0)) {
      throw std::domain_error("SecretPrior: log_p0 must be <= 0");
    }
    return SecretPrior(log_p0);
  }
  static SecretPrior from_bits(double bits) {
    if (!(bits >= 0.0) || !std::isfinite(bits)) {
      throw std::domain_error("SecretPrior: bits must be finite and >= 0");
    }
    return SecretPrior(-bits * kLn2);
  }

  double log_p0() const { return log_p0_; }
  double bits() const { return -log_p0_ / kLn2; }

 private:
  explicit SecretPrior(double log_p0) : log_p0_(log_p0) {}
  double log_p0_;
};

namespace detail {

inline void check_bound_args(double d_alpha, double alpha, double log_p0,
                             const char* where) {
  check_order(alpha, where);
  if (!(log_p0 <= 0.0)) {
    throw std::domain_error(std::string(where) + ": log_p0 must be <= 0");
  }
  if (!(d_alpha >= 0.0)) {
    throw std::domain_error(std::string(where) + ": d_alpha must be >= 0");
  }
}

}  // namespace detail

// Upper bound on log(p1/p0) at a single order.
inline double l_bound(double d_alpha, double alpha, double log_p0) {
  detail::check_bound_args(d_alpha, alpha, log_p0, "l_bound");
  if (d_alpha == kInf) return kInf;
  return d_alpha * (alpha - 1.0) / alpha + (-log_p0) / alpha;
}

// Magnitude of the lower bound on log(p1/p0); also the epsilon obtained from
// the RDP-to-DP conversion at delta = p0.
inline double h_bound(double d_alpha, double alpha, double log_p0) {
  detail::check_bound_args(d_alpha, alpha, log_p0, "h_bound");
  if (d_alpha == kInf) return kInf;
  return d_alpha + (-log_p0) / (alpha - 1.0);
}

struct LeakageReport {
  double log_p0 = 0.0;
  double L_nats = kInf;
  double L2_bits = kInf;
  double h_min_nats = kInf;
  std::optional<double> best_alpha_l;
  std::optional<double> best_alpha_h;
  double log2_posterior_bound = kInf;
  bool infinite = true;  // every grid point was +inf

  double bits() const { return -log_p0 / kLn2; }
  double h_bits() const { return h_min_nats / kLn2; }
};

// Grid minimization of l and h; ties go to the smallest order.
inline LeakageReport min_leakage(const RdpCurve& curve, double log_p0) {
  LeakageReport report;
  report.log_p0 = log_p0;
  for (std::size_t i = 0; i < curve.size(); ++i) {
    const double alpha = curve.orders()[i];
    const double d = curve.d_alpha()[i];
    const double l = l_bound(d, alpha, log_p0);
    const double h = h_bound(d, alpha, log_p0);
    if (l < report.L_nats) {
      report.L_nats = l;
      report.best_alpha_l = alpha;
    }
    if (h < report.h_min_nats) {
      report.h_min_nats = h;
      report.best_alpha_h = alpha;
    }
  }
  report.infinite = !report.best_alpha_l.has_value();
  report.L2_bits = report.L_nats / kLn2;
  report.log2_posterior_bound = log_p0 / kLn2 + report.L2_bits;
  return report;
}

// L2(b) = min_alpha d_alpha (alpha - 1) / (alpha ln 2) + b / alpha, in bits.
inline double leakage_bits_fn(const RdpCurve& curve, double b) {
  if (!(b >= 0.0)) throw std::domain_error("leakage_bits_fn: b must be >= 0");
  double best = kInf;
  for (std::size_t i = 0; i < curve.size(); ++i) {
    const double alpha = curve.orders()[i];
    const double d = curve.d_alpha()[i];
    if (d == kInf) continue;
    const double v = d * (alpha - 1.0) / (alpha * kLn2) + b / alpha;
    if (v < best) best = v;
  }
  return best;
}

// Upper bound on log2(p1) for a secret of b bits: -b + L2(b).
inline double posterior_bound(const RdpCurve& curve, double b) {
  return -b + leakage_bits_fn(curve, b);
}

// log2(1/p).
inline double secrecy_bits(double p) {
  if (!(p > 0.0 && p <= 1.0)) {
    throw std::domain_error("secrecy_bits: p must lie in (0, 1]");
  }
  return -std::log2(p);
}

inline nlohmann::json report_to_json(const LeakageReport& r) {
  auto num = [](double v) -> nlohmann::json {
    if (std::isfinite(v)) return v;
    return format_double(v);
  };
  auto opt = [](const std::optional<double>& v) -> nlohmann::json {
    if (v) return *v;
    return nullptr;
  };
  return {{"log_p0", num(r.log_p0)},
          {"bits", num(r.bits())},
          {"L_nats", num(r.L_nats)},
          {"L2_bits", num(r.L2_bits)},
          {"h_min_nats", num(r.h_min_nats)},
          {"best_alpha_l", opt(r.best_alpha_l)},
          {"best_alpha_h", opt(r.best_alpha_h)},
          {"log2_posterior_bound", num(r.log2_posterior_bound)},
          {"infinite", r.infinite}};
}

inline constexpr const char* kLeakageCsvHeader =
    "sigma,q,steps,b,L2_bits,h_bits,posterior_log2";

inline std::string report_csv_row(const LeakageReport& r,
                                  const MechanismParams& params) {
  return format_double(params.sigma) + "," + format_double(params.q) + "," +
         std::to_string(params.steps) + "," + format_double(r.bits()) + "," +
         format_double(r.L2_bits) + "," + format_double(r.h_bits()) + "," +
         format_double(std::min(0.0, r.log2_posterior_bound));  // a probability
}

}  // namespace rdpleak

#endif  // RDPLEAK_LEAKAGE_BOUNDS_HPP_
