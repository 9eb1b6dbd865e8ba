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

// Renyi-DP accounting for the Poisson-subsampled Gaussian mechanism.
//
// For one DP-SGD step with sampling rate q and noise multiplier sigma, the
// two adjacent output distributions are Q = N(0, sigma^2) and the mixture
// P = (1 - q) N(0, sigma^2) + q N(1, sigma^2). The per-step guarantee at
// order alpha is max(D_alpha(P||Q), D_alpha(Q||P)). Composition over steps
// is additive.
//
// Both directed divergences are written as moments of the likelihood ratio
// 1 + u(x) = P(x) / Q(x), with u(x) = q (exp((2x - 1) / (2 sigma^2)) - 1):
//
//   exp((alpha - 1) D_alpha(P||Q)) = E_Q[(1 + u)^alpha]
//   exp((alpha - 1) D_alpha(Q||P)) = E_Q[(1 + u)^(1 - alpha)]
//
// Since E_Q[u] = 0, each moment minus one equals E_Q[phi_g(u)] with
// phi_g(u) = (1 + u)^g - 1 - g u >= 0 for g outside (0, 1). Working with the
// excess keeps full relative precision when the divergence is tiny (small q,
// large sigma), and its positivity allows pure log-space accumulation.

#ifndef RDPLEAK_PRIVACY_ACCOUNTANT_HPP_
#define RDPLEAK_PRIVACY_ACCOUNTANT_HPP_

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "rdpleak/numeric.hpp"
#include "rdpleak/quadrature.hpp"

namespace rdpleak {

struct MechanismParams {
  double q = 1.0;
  double sigma = 1.0;  // in units of the clipping norm
  std::int64_t steps = 1;
  double clip = 1.0;

  void validate() const {
    if (!(q >= 0.0 && q <= 1.0)) {
      throw std::domain_error("MechanismParams: q must lie in [0, 1]");
    }
    if (!(sigma >= 0.0)) {
      throw std::domain_error("MechanismParams: sigma must be >= 0");
    }
    if (steps < 0) {
      throw std::domain_error("MechanismParams: steps must be >= 0");
    }
    if (!(clip > 0.0)) {
      throw std::domain_error("MechanismParams: clip must be > 0");
    }
  }

  friend bool operator==(const MechanismParams&,
                         const MechanismParams&) = default;
};

// Strictly increasing Renyi orders, all > 1.
class OrderGrid {
 public:
  explicit OrderGrid(std::vector<double> orders) : orders_(std::move(orders)) {
    if (orders_.empty()) throw std::domain_error("OrderGrid: empty");
    for (std::size_t i = 0; i < orders_.size(); ++i) {
      if (!(orders_[i] > 1.0) || !std::isfinite(orders_[i])) {
        throw std::domain_error("OrderGrid: every order must be finite and > 1");
      }
      if (i > 0 && !(orders_[i] > orders_[i - 1])) {
        throw std::domain_error("OrderGrid: orders must be strictly increasing");
      }
    }
  }

  // {1.01, 1.05, 1.1, 1.2, ..., 1.9} followed by the integers 2..63.
  static OrderGrid default_grid() {
    std::vector<double> orders = {1.01, 1.05, 1.1, 1.2, 1.3, 1.4,
                                  1.5,  1.6,  1.7, 1.8, 1.9};
    for (int a = 2; a <= 63; ++a) orders.push_back(a);
    return OrderGrid(std::move(orders));
  }

  std::span<const double> orders() const { return orders_; }
  std::size_t size() const { return orders_.size(); }

 private:
  std::vector<double> orders_;
};

// Map from order alpha to a cumulative divergence bound d_alpha (possibly
// +inf), optionally tagged with the mechanism that produced it.
class RdpCurve {
 public:
  RdpCurve(std::vector<double> orders, std::vector<double> d_alpha,
           std::optional<MechanismParams> params = std::nullopt)
      : orders_(std::move(orders)),
        d_alpha_(std::move(d_alpha)),
        params_(params) {
    OrderGrid check(orders_);  // validates the orders
    if (d_alpha_.size() != orders_.size()) {
      throw std::invalid_argument("RdpCurve: orders and d_alpha differ in size");
    }
    for (double d : d_alpha_) {
      if (!(d >= 0.0)) {
        throw std::domain_error("RdpCurve: d_alpha must be >= 0 (not NaN)");
      }
    }
  }

  std::span<const double> orders() const { return orders_; }
  std::span<const double> d_alpha() const { return d_alpha_; }
  const std::optional<MechanismParams>& params() const { return params_; }
  std::size_t size() const { return orders_.size(); }

  bool all_infinite() const {
    return std::all_of(d_alpha_.begin(), d_alpha_.end(),
                       [](double d) { return d == kInf; });
  }

  // First index i with d_alpha[i] > d_alpha[i+1] (1 + rel_tol), if any.
  std::optional<std::size_t> first_monotonicity_violation(
      double rel_tol = 0.0) const {
    for (std::size_t i = 0; i + 1 < d_alpha_.size(); ++i) {
      if (d_alpha_[i] > d_alpha_[i + 1] * (1.0 + rel_tol)) return i;
    }
    return std::nullopt;
  }

 private:
  std::vector<double> orders_;
  std::vector<double> d_alpha_;
  std::optional<MechanismParams> params_;
};

namespace detail {

inline void check_order(double alpha, const char* where) {
  if (!(alpha > 1.0) || !std::isfinite(alpha)) {
    throw std::domain_error(std::string(where) + ": alpha must be finite and > 1");
  }
}

inline bool is_integer_order(double alpha) {
  return alpha >= 2.0 && alpha <= 1e6 && std::floor(alpha) == alpha;
}

// log(C(n, k)) via lgamma.
inline double log_binomial(double n, double k) {
  return std::lgamma(n + 1.0) - std::lgamma(k + 1.0) - std::lgamma(n - k + 1.0);
}

// log(E_Q[(1+u)^alpha] - 1) for integer alpha and 0 < q < 1, as the
// positive binomial sum
//   sum_{j=2}^{alpha} C(alpha, j) (1-q)^(alpha-j) q^j (exp((j^2-j)/(2 s^2)) - 1).
inline double log_excess_moment_integer(double q, double sigma, int alpha) {
  const double log_q = std::log(q);
  const double log_1mq = std::log1p(-q);
  const double inv_two_var = 1.0 / (2.0 * sigma * sigma);
  std::vector<double> terms;
  terms.reserve(static_cast<std::size_t>(alpha));
  for (int j = 2; j <= alpha; ++j) {
    const double jd = j;
    terms.push_back(log_binomial(alpha, jd) + (alpha - jd) * log_1mq +
                    jd * log_q + log_expm1((jd * jd - jd) * inv_two_var));
  }
  return log_sum_exp(terms);
}

// log phi_g(u) where phi_g(u) = (1+u)^g - 1 - g u, given
// log(1+u), log|u| and sign(u). Requires g outside (0, 1) so phi_g >= 0.
inline double log_phi(double g, double log_one_plus_u, double log_abs_u,
                      int sign_u) {
  if (sign_u == 0) return kNegInf;
  const double abs_u = std::exp(log_abs_u);
  if (abs_u < 0.1 && std::abs(g) * abs_u < 0.1) {
    // Generalized binomial series from the quadratic term on; successive
    // ratios are bounded by 0.15 in this region.
    const double u = sign_u * abs_u;
    double term = g * u;
    double sum = 0.0;
    for (int k = 2; k < 400; ++k) {
      term *= (g - (k - 1)) / k * u;
      sum += term;
      if (std::abs(term) <= 1e-17 * std::abs(sum)) break;
    }
    return sum > 0.0 ? std::log(sum) : kNegInf;
  }
  // Signed sum of exp(g log(1+u)) - 1 - g u.
  double pos[2];
  double neg[2];
  int npos = 0;
  int nneg = 0;
  pos[npos++] = g * log_one_plus_u;
  neg[nneg++] = 0.0;
  const double log_abs_gu = std::log(std::abs(g)) + log_abs_u;
  if ((g > 0.0) != (sign_u > 0)) {
    pos[npos++] = log_abs_gu;
  } else {
    neg[nneg++] = log_abs_gu;
  }
  const double lp = log_sum_exp(std::span<const double>(pos, npos));
  const double ln = log_sum_exp(std::span<const double>(neg, nneg));
  if (!(lp > ln)) return kNegInf;
  return lp + std::log1p(-std::exp(ln - lp));
}

// log(E_Q[(1+u)^g] - 1) by adaptive quadrature in log-space, for
// 0 < q < 1 or q == 1, sigma > 0, and g outside (0, 1).
inline double log_excess_moment_quadrature(double q, double sigma, double g) {
  const double var = sigma * sigma;
  const double log_q = std::log(q);
  const double log_1mq = std::log1p(-q);
  const double log_norm = -std::log(sigma) - 0.5 * std::log(2.0 * M_PI);
  auto log_integrand = [&](double x) {
    const double z = (2.0 * x - 1.0) / (2.0 * var);
    const double log_one_plus_u = log_add_exp(log_1mq, log_q + z);
    const double log_abs_u = log_q + log_abs_expm1(z);
    const int sign_u = z > 0.0 ? 1 : (z < 0.0 ? -1 : 0);
    return log_norm - x * x / (2.0 * var) +
           log_phi(g, log_one_plus_u, log_abs_u, sign_u);
  };

  // For large |g| the tilted Gaussian peaks near x = g; widen the usual
  // +-30 sigma window to cover it.
  const double reach = std::abs(g) + 1.0;
  const double lo = -30.0 * sigma - reach;
  const double hi = 30.0 * sigma + reach;
  const double width = 0.5 * sigma;
  const auto chunks = static_cast<std::size_t>(std::ceil((hi - lo) / width));
  std::vector<double> edges(chunks + 1);
  for (std::size_t i = 0; i <= chunks; ++i) {
    edges[i] = (i == chunks) ? hi : lo + width * static_cast<double>(i);
  }

  // Sample edges and midpoints to find the peak and the non-negligible span.
  std::vector<double> chunk_max(chunks, kNegInf);
  double peak = kNegInf;
  double prev = log_integrand(edges[0]);
  for (std::size_t i = 0; i < chunks; ++i) {
    const double mid = log_integrand(0.5 * (edges[i] + edges[i + 1]));
    const double right = log_integrand(edges[i + 1]);
    chunk_max[i] = std::max({prev, mid, right});
    peak = std::max(peak, chunk_max[i]);
    prev = right;
  }
  if (peak == kNegInf) return kNegInf;
  if (!std::isfinite(peak)) {
    throw std::overflow_error("sgm_rdp_step: integrand overflowed");
  }
  constexpr double kNegligible = 80.0;
  std::size_t first = 0;
  std::size_t last = chunks - 1;
  while (first < last && chunk_max[first] < peak - kNegligible) ++first;
  while (last > first && chunk_max[last] < peak - kNegligible) --last;

  auto scaled = [&](double x) { return std::exp(log_integrand(x) - peak); };
  const auto result = quadrature::integrate(
      scaled, std::span<const double>(edges).subspan(first, last - first + 2));
  if (!(result.value > 0.0)) return kNegInf;
  return peak + std::log(result.value);
}

}  // namespace detail

// Renyi divergence of order alpha of the Gaussian mechanism with unit
// sensitivity: alpha / (2 sigma^2). sigma == 0 yields +inf.
inline double gaussian_rdp(double sigma, double alpha) {
  detail::check_order(alpha, "gaussian_rdp");
  if (!(sigma >= 0.0)) throw std::domain_error("gaussian_rdp: sigma must be >= 0");
  if (sigma == 0.0) return kInf;
  const double d = alpha / (2.0 * sigma * sigma);
  if (!std::isfinite(d)) {
    throw std::overflow_error("gaussian_rdp: divergence overflowed");
  }
  return d;
}

// Per-step RDP of the subsampled Gaussian mechanism (see file comment).
// Integer orders use the binomial expansion for D(P||Q); fractional orders,
// and the reverse direction at every order, use quadrature.
inline double sgm_rdp_step(double q, double sigma, double alpha) {
  detail::check_order(alpha, "sgm_rdp_step");
  if (!(q >= 0.0 && q <= 1.0)) {
    throw std::domain_error("sgm_rdp_step: q must lie in [0, 1]");
  }
  if (!(sigma >= 0.0)) throw std::domain_error("sgm_rdp_step: sigma must be >= 0");
  if (q == 0.0) return 0.0;
  if (sigma == 0.0) return kInf;
  if (q == 1.0) return gaussian_rdp(sigma, alpha);

  const double forward_excess =
      detail::is_integer_order(alpha)
          ? detail::log_excess_moment_integer(q, sigma, static_cast<int>(alpha))
          : detail::log_excess_moment_quadrature(q, sigma, alpha);
  const double reverse_excess =
      detail::log_excess_moment_quadrature(q, sigma, 1.0 - alpha);
  const double log_moment =
      log1p_exp(std::max(forward_excess, reverse_excess));
  const double d = log_moment / (alpha - 1.0);
  if (!std::isfinite(d)) {
    throw std::overflow_error("sgm_rdp_step: divergence overflowed");
  }
  return std::max(d, 0.0);
}

// Per-step curve of the subsampled Gaussian mechanism over `grid`.
inline RdpCurve sgm_rdp_curve(double q, double sigma, const OrderGrid& grid) {
  std::vector<double> d;
  d.reserve(grid.size());
  for (double alpha : grid.orders()) d.push_back(sgm_rdp_step(q, sigma, alpha));
  MechanismParams params{q, sigma, 1, 1.0};
  return RdpCurve({grid.orders().begin(), grid.orders().end()}, std::move(d),
                  params);
}

// Additive composition: every d_alpha multiplied by `steps`. +inf stays +inf
// for steps > 0; steps == 0 yields the zero curve.
inline RdpCurve compose(const RdpCurve& per_step, std::int64_t steps) {
  if (steps < 0) throw std::domain_error("compose: steps must be >= 0");
  std::vector<double> d(per_step.d_alpha().begin(), per_step.d_alpha().end());
  const double k = static_cast<double>(steps);
  for (double& v : d) v = (steps == 0) ? 0.0 : v * k;
  auto params = per_step.params();
  if (params) params->steps = steps;
  return RdpCurve({per_step.orders().begin(), per_step.orders().end()},
                  std::move(d), params);
}

// Cumulative curve of a full DP-SGD run.
inline RdpCurve account(const MechanismParams& params, const OrderGrid& grid) {
  params.validate();
  auto curve = compose(sgm_rdp_curve(params.q, params.sigma, grid), params.steps);
  MechanismParams tagged = params;
  return RdpCurve({curve.orders().begin(), curve.orders().end()},
                  {curve.d_alpha().begin(), curve.d_alpha().end()}, tagged);
}

struct EpsilonResult {
  double epsilon = kInf;
  std::optional<double> best_alpha;
  bool infinite = true;
};

// (epsilon, delta)-DP from RDP: min over the grid of
// d_alpha + log(1/delta) / (alpha - 1); ties go to the smallest order.
inline EpsilonResult rdp_to_dp_epsilon(const RdpCurve& curve, double delta) {
  if (!(delta > 0.0 && delta < 1.0)) {
    throw std::domain_error("rdp_to_dp_epsilon: delta must lie in (0, 1)");
  }
  EpsilonResult best;
  const double log_inv_delta = -std::log(delta);
  for (std::size_t i = 0; i < curve.size(); ++i) {
    const double alpha = curve.orders()[i];
    const double eps = curve.d_alpha()[i] + log_inv_delta / (alpha - 1.0);
    if (eps < best.epsilon) {
      best.epsilon = eps;
      best.best_alpha = alpha;
      best.infinite = false;
    }
  }
  return best;
}

// JSON: {"orders": [...], "d_alpha": [...], "params": {q, sigma, steps,
// clip}} with +inf written as the string "inf".
inline nlohmann::json curve_to_json(const RdpCurve& curve) {
  nlohmann::json j;
  j["orders"] = std::vector<double>(curve.orders().begin(), curve.orders().end());
  auto d = nlohmann::json::array();
  for (double v : curve.d_alpha()) {
    if (v == kInf) {
      d.push_back("inf");
    } else {
      d.push_back(v);
    }
  }
  j["d_alpha"] = std::move(d);
  if (curve.params()) {
    const auto& p = *curve.params();
    j["params"] = {{"q", p.q}, {"sigma", p.sigma}, {"steps", p.steps},
                   {"clip", p.clip}};
  }
  return j;
}

inline RdpCurve curve_from_json(const nlohmann::json& j) {
  auto orders = j.at("orders").get<std::vector<double>>();
  std::vector<double> d;
  for (const auto& v : j.at("d_alpha")) {
    if (v.is_string()) {
      if (v.get<std::string>() != "inf") {
        throw std::invalid_argument("curve_from_json: unexpected string in d_alpha");
      }
      d.push_back(kInf);
    } else {
      d.push_back(v.get<double>());
    }
  }
  std::optional<MechanismParams> params;
  if (j.contains("params") && !j.at("params").is_null()) {
    const auto& p = j.at("params");
    params = MechanismParams{p.at("q").get<double>(), p.at("sigma").get<double>(),
                             p.at("steps").get<std::int64_t>(),
                             p.at("clip").get<double>()};
    params->validate();
  }
  return RdpCurve(std::move(orders), std::move(d), params);
}

}  // namespace rdpleak

#endif  // RDPLEAK_PRIVACY_ACCOUNTANT_HPP_
