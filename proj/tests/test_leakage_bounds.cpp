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

#include "rdpleak/leakage_bounds.hpp"

#include <cmath>
#include <random>
#include <stdexcept>
#include <vector>

#include <gtest/gtest.h>

#include "rdpleak/privacy_accountant.hpp"

namespace rdpleak {
namespace {

const double kLn1024 = std::log(1024.0);

RdpCurve zero_curve() {
  const auto grid = OrderGrid::default_grid();
  return RdpCurve({grid.orders().begin(), grid.orders().end()},
                  std::vector<double>(grid.size(), 0.0));
}

// Random subsampled-Gaussian runs over a wide range of regimes.
std::vector<RdpCurve> random_curves(int n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<RdpCurve> out;
  for (int i = 0; i < n; ++i) {
    const double q = std::pow(10.0, -4.0 * u(rng));
    const double sigma = 0.3 + 9.7 * u(rng);
    const auto steps = static_cast<std::int64_t>(std::pow(10.0, 5.5 * u(rng)));
    out.push_back(account({q, sigma, steps, 1.0}, OrderGrid::default_grid()));
  }
  return out;
}

TEST(LBound, WorkedExamples) {
  EXPECT_NEAR(l_bound(0.0, 2.0, -kLn1024), kLn1024 / 2.0, 1e-15);
  EXPECT_DOUBLE_EQ(l_bound(1.0, 2.0, 0.0), 0.5);
  EXPECT_NEAR(l_bound(0.5, 4.0, -10.0 * kLn2), 0.375 + kLn1024 / 4.0, 1e-15);
  EXPECT_NEAR(l_bound(0.5, 4.0, -10.0 * kLn2), 2.108, 5e-4);
}

TEST(HBound, WorkedExamples) {
  EXPECT_NEAR(h_bound(0.0, 2.0, -kLn1024), kLn1024, 1e-15);
  EXPECT_DOUBLE_EQ(h_bound(1.0, 2.0, 0.0), 1.0);
}

TEST(Bounds, InfinityAndDomain) {
  EXPECT_EQ(l_bound(kInf, 2.0, -1.0), kInf);
  EXPECT_EQ(h_bound(kInf, 2.0, -1.0), kInf);
  EXPECT_THROW(l_bound(1.0, 1.0, -1.0), std::domain_error);
  EXPECT_THROW(l_bound(1.0, 2.0, 0.1), std::domain_error);
  EXPECT_THROW(h_bound(-1.0, 2.0, -1.0), std::domain_error);
}

TEST(Bounds, LowerThanHOnFiniteGrid) {
  // Equality only in the degenerate d = 0, p0 = 1 corner.
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const auto grid = OrderGrid::default_grid();
  for (double alpha : grid.orders()) {
    for (int i = 0; i < 200; ++i) {
      const double d = i == 0 ? 0.0 : 100.0 * u(rng) * u(rng);
      const double log_p0 = i == 1 ? 0.0 : -60.0 * kLn2 * u(rng) - 1e-3;
      EXPECT_LT(l_bound(d, alpha, log_p0), h_bound(d, alpha, log_p0))
          << d << " " << alpha << " " << log_p0;
    }
  }
}

TEST(Bounds, ExponentialFormAgrees) {
  // exp(-d) p0^{a/(a-1)} <= p1 <= (exp(d) p0)^{(a-1)/a}, read as log(p1/p0).
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int i = 0; i < 500; ++i) {
    const double alpha = 1.01 + 62.0 * u(rng);
    const double d = 5.0 * u(rng);
    const double p0 = std::pow(2.0, -20.0 * u(rng));
    const double upper = std::log(std::pow(std::exp(d) * p0, (alpha - 1.0) / alpha) / p0);
    const double lower = std::log(std::exp(-d) * std::pow(p0, alpha / (alpha - 1.0)) / p0);
    const double log_p0 = std::log(p0);
    EXPECT_NEAR(l_bound(d, alpha, log_p0), upper, 1e-9 * (1.0 + upper));
    EXPECT_NEAR(-h_bound(d, alpha, log_p0), lower, 1e-9 * (1.0 + std::abs(lower)));
  }
}

TEST(MinLeakage, TwoPointCurve) {
  const RdpCurve c({2.0, 4.0}, {1.0, 0.5});
  const auto r = min_leakage(c, -10.0 * kLn2);
  EXPECT_NEAR(r.L_nats, 0.375 + kLn1024 / 4.0, 1e-15);
  EXPECT_EQ(r.best_alpha_l, 4.0);
  // Exhaustive: both grid values.
  EXPECT_LT(r.L_nats, l_bound(1.0, 2.0, -10.0 * kLn2));
  EXPECT_NEAR(r.L2_bits, r.L_nats / kLn2, 1e-15);
}

TEST(MinLeakage, ZeroCurveUsesLargestOrder) {
  const auto r = min_leakage(zero_curve(), -kLn1024);
  EXPECT_NEAR(r.L_nats, kLn1024 / 63.0, 1e-15);
  EXPECT_EQ(r.best_alpha_l, 63.0);
  EXPECT_FALSE(r.infinite);
}

TEST(MinLeakage, AllInfiniteIsFlagged) {
  const auto r = min_leakage(RdpCurve({2.0, 3.0}, {kInf, kInf}), -1.0);
  EXPECT_TRUE(r.infinite);
  EXPECT_EQ(r.L_nats, kInf);
  EXPECT_EQ(r.h_min_nats, kInf);
  EXPECT_FALSE(r.best_alpha_l);
}

TEST(MinLeakage, BelowMinH) {
  for (const auto& c : random_curves(20, 7)) {
    for (int b = 1; b <= 60; ++b) {
      const auto r = min_leakage(c, -b * kLn2);
      EXPECT_LT(r.L_nats, r.h_min_nats);
    }
  }
}

TEST(LeakageBits, ZeroCurve) {
  EXPECT_EQ(leakage_bits_fn(zero_curve(), 0.0), 0.0);
  EXPECT_NEAR(posterior_bound(zero_curve(), 10.0), -10.0 + 10.0 / 63.0, 1e-14);
  EXPECT_THROW(leakage_bits_fn(zero_curve(), -1.0), std::domain_error);
}

TEST(LeakageBits, AgreesWithMinLeakage) {
  for (const auto& c : random_curves(5, 9)) {
    for (double b : {0.0, 1.0, 13.5, 40.0, 60.0}) {
      const auto r = min_leakage(c, -b * kLn2);
      EXPECT_NEAR(leakage_bits_fn(c, b), r.L2_bits, 1e-12 * (1.0 + r.L2_bits));
    }
  }
}

TEST(LeakageBits, MonotoneConcaveAndPosteriorNonIncreasing) {
  for (const auto& c : random_curves(20, 1234)) {
    std::vector<double> l2;
    for (int b = 0; b <= 60; ++b) l2.push_back(leakage_bits_fn(c, b));
    for (int b = 1; b <= 60; ++b) {
      EXPECT_GE(l2[b], l2[b - 1]) << b;
      EXPECT_LE(l2[b] - b, l2[b - 1] - (b - 1)) << b;
      EXPECT_LE(posterior_bound(c, b), posterior_bound(c, b - 1)) << b;
    }
    for (int b = 1; b < 60; ++b) {
      const double tol = 1e-12 * (1.0 + l2[b]);
      EXPECT_GE(l2[b] + tol, 0.5 * (l2[b - 1] + l2[b + 1])) << b;
    }
  }
}

TEST(LeakageBits, PartialLeakageAtFortyBits) {
  // Shared mechanism: q = 2.81e-4, sigma = 0.4, across step counts.
  const auto per_step = sgm_rdp_curve(2.81e-4, 0.4, OrderGrid::default_grid());
  for (std::int64_t steps : {1000, 10000, 50000, 100000, 186000, 300000}) {
    EXPECT_LT(leakage_bits_fn(compose(per_step, steps), 40.0), 40.0) << steps;
  }
}

TEST(LeakageBits, NonIncreasingInSigma) {
  double prev = kInf;
  for (double sigma : {0.3, 0.4, 0.5, 1.0, 2.0, 4.0, 10.0}) {
    const double v = leakage_bits_fn(account({2.81e-4, sigma, 186000, 1.0},
                                             OrderGrid::default_grid()),
                                     40.0);
    EXPECT_LE(v, prev);
    prev = v;
  }
}

TEST(PosteriorBound, SixteenDigitSecretNotRecovered) {
  const double b = 16.0 * std::log2(10.0);
  for (double sigma : {0.3, 0.4, 0.5}) {
    const auto curve = account({2.81e-4, sigma, 186000, 1.0}, OrderGrid::default_grid());
    EXPECT_LT(posterior_bound(curve, b), 0.0) << sigma;
  }
}

TEST(SecrecyBits, Conversions) {
  EXPECT_EQ(secrecy_bits(1.0), 0.0);
  EXPECT_DOUBLE_EQ(secrecy_bits(std::ldexp(1.0, -40)), 40.0);
  EXPECT_NEAR(secrecy_bits(1e-16), 16.0 * std::log2(10.0), 1e-12);
  EXPECT_NEAR(secrecy_bits(1e-16), 53.15, 5e-3);
  EXPECT_THROW(secrecy_bits(0.0), std::domain_error);
  EXPECT_THROW(secrecy_bits(1.5), std::domain_error);
}

TEST(SecretPrior, BitsAndLogAgree) {
  const auto p = SecretPrior::from_bits(40.0);
  EXPECT_NEAR(p.log_p0(), -40.0 * kLn2, 1e-13);
  EXPECT_NEAR(SecretPrior::from_log_p0(p.log_p0()).bits(), 40.0, 1e-13);
  EXPECT_THROW(SecretPrior::from_log_p0(0.5), std::domain_error);
  EXPECT_THROW(SecretPrior::from_bits(-1.0), std::domain_error);
}

TEST(ReportCsv, ZeroBitsRowShowsZeroPosterior) {
  const auto curve = account({2.81e-4, 0.4, 186000, 1.0}, OrderGrid::default_grid());
  const auto r = min_leakage(curve, 0.0);
  const auto row = report_csv_row(r, *curve.params());
  EXPECT_EQ(row.substr(row.rfind(',') + 1), "0");
  EXPECT_EQ(row.substr(0, row.find(',')), "0.4");
}

}  // namespace
}  // namespace rdpleak
