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

#include "rdpleak/privacy_accountant.hpp"

#include <cmath>
#include <random>
#include <stdexcept>
#include <vector>

#include <gtest/gtest.h>

#include "sgm_oracle.hpp"

namespace rdpleak {
namespace {

double rel_err(double a, double b) { return std::abs(a - b) / std::abs(b); }

TEST(GaussianRdp, ClosedForm) {
  EXPECT_DOUBLE_EQ(gaussian_rdp(1.0, 2.0), 1.0);
  EXPECT_DOUBLE_EQ(gaussian_rdp(2.0, 8.0), 1.0);
  EXPECT_DOUBLE_EQ(gaussian_rdp(0.5, 1.01), 2.02);
}

TEST(GaussianRdp, EdgeCases) {
  EXPECT_EQ(gaussian_rdp(0.0, 2.0), kInf);
  EXPECT_THROW(gaussian_rdp(1.0, 1.0), std::domain_error);
  EXPECT_THROW(gaussian_rdp(1.0, 0.5), std::domain_error);
  EXPECT_THROW(gaussian_rdp(-1.0, 2.0), std::domain_error);
  EXPECT_THROW(gaussian_rdp(1e-200, 2.0), std::overflow_error);
}

TEST(SgmRdpStep, NoSamplingIsFree) { EXPECT_EQ(sgm_rdp_step(0.0, 1.0, 4.0), 0.0); }

TEST(SgmRdpStep, FullSamplingIsGaussian) {
  EXPECT_DOUBLE_EQ(sgm_rdp_step(1.0, 1.0, 2.0), 1.0);
  EXPECT_EQ(sgm_rdp_step(0.3, 0.0, 2.0), kInf);
}

TEST(SgmRdpStep, RejectsBadDomain) {
  EXPECT_THROW(sgm_rdp_step(1.5, 1.0, 2.0), std::domain_error);
  EXPECT_THROW(sgm_rdp_step(-0.1, 1.0, 2.0), std::domain_error);
  EXPECT_THROW(sgm_rdp_step(0.1, -1.0, 2.0), std::domain_error);
  EXPECT_THROW(sgm_rdp_step(0.1, 1.0, 1.0), std::domain_error);
  EXPECT_THROW(sgm_rdp_step(0.1, 1.0, std::nan("")), std::domain_error);
}

TEST(SgmRdpStep, MatchesOracleAtSmallRate) {
  const double got = sgm_rdp_step(2.81e-4, 0.4, 2.0);
  const double want = oracle::sgm_rdp_step(2.81e-4, 0.4, 2.0);
  EXPECT_LE(rel_err(got, want), 1e-6) << got << " vs " << want;
}

TEST(SgmRdpStep, IntegerOrderTwoClosedForm) {
  // E_Q[(P/Q)^2] = 1 + q^2 (e^{1/sigma^2} - 1), and the reverse direction is
  // smaller at alpha = 2.
  for (double q : {1e-3, 0.05, 0.3}) {
    for (double sigma : {0.7, 1.0, 3.0}) {
      const double want = std::log1p(q * q * std::expm1(1.0 / (sigma * sigma)));
      EXPECT_LE(rel_err(sgm_rdp_step(q, sigma, 2.0), want), 1e-12) << q << " " << sigma;
    }
  }
}

TEST(SgmRdpStep, FractionalOrdersMatchOracle) {
  for (double alpha : {1.01, 1.5, 2.5, 7.3, 40.5}) {
    for (double sigma : {0.5, 1.5}) {
      const double got = sgm_rdp_step(0.02, sigma, alpha);
      const double want = oracle::sgm_rdp_step(0.02, sigma, alpha);
      EXPECT_LE(rel_err(got, want), 1e-6) << alpha << " " << sigma;
    }
  }
}

TEST(SgmRdpStep, NonIncreasingInSigma) {
  const std::vector<double> sigmas = {0.3, 0.4, 0.5, 1, 2, 4, 10};
  const auto grid = OrderGrid::default_grid();
  for (double q : {1e-4, 2.81e-4, 1e-2, 0.1, 1.0}) {
    for (double alpha : grid.orders()) {
      double prev = kInf;
      for (double s : sigmas) {
        const double d = sgm_rdp_step(q, s, alpha);
        EXPECT_LE(d, prev * (1 + 1e-12)) << q << " " << s << " " << alpha;
        prev = d;
      }
    }
  }
}

TEST(SgmRdpStep, NonDecreasingInRate) {
  const std::vector<double> rates = {0, 1e-4, 1e-2, 0.1, 1};
  const auto grid = OrderGrid::default_grid();
  for (double s : {0.3, 0.5, 1.0, 2.0, 10.0}) {
    for (double alpha : grid.orders()) {
      double prev = 0.0;
      for (double q : rates) {
        const double d = sgm_rdp_step(q, s, alpha);
        EXPECT_GE(d, prev * (1 - 1e-12)) << q << " " << s << " " << alpha;
        prev = d;
      }
    }
  }
}

TEST(SgmRdpCurve, NonDecreasingInOrder) {
  std::mt19937_64 rng(17);
  std::uniform_real_distribution<double> log_q(std::log(1e-5), 0.0);
  std::uniform_real_distribution<double> log_sigma(std::log(0.3), std::log(20.0));
  for (int i = 0; i < 20; ++i) {
    const double q = std::exp(log_q(rng));
    const double s = std::exp(log_sigma(rng));
    const auto curve = sgm_rdp_curve(q, s, OrderGrid::default_grid());
    EXPECT_FALSE(curve.first_monotonicity_violation(1e-12)) << q << " " << s;
  }
}

TEST(Compose, ZeroStepsIsZeroCurve) {
  const auto per = sgm_rdp_curve(0.01, 1.0, OrderGrid::default_grid());
  const auto zero = compose(per, 0);
  for (double d : zero.d_alpha()) EXPECT_EQ(d, 0.0);
}

TEST(Compose, Additivity) {
  const RdpCurve per({2.0}, {0.001});
  EXPECT_DOUBLE_EQ(compose(per, 1000).d_alpha()[0], 1.0);
  EXPECT_THROW(compose(per, -1), std::domain_error);
}

TEST(Compose, LinearInSteps) {
  const auto per = sgm_rdp_curve(2.81e-4, 0.4, OrderGrid::default_grid());
  for (std::int64_t a : {1, 7, 1000, 93000}) {
    for (std::int64_t b : {1, 13, 93000}) {
      const auto whole = compose(per, a + b);
      const auto left = compose(per, a);
      const auto right = compose(per, b);
      for (std::size_t i = 0; i < per.size(); ++i) {
        const double d = per.d_alpha()[i];
        EXPECT_EQ(whole.d_alpha()[i], d * static_cast<double>(a + b));
        EXPECT_NEAR(whole.d_alpha()[i], left.d_alpha()[i] + right.d_alpha()[i],
                    4e-16 * whole.d_alpha()[i]);
      }
    }
  }
}

TEST(Compose, InfinityStaysInfinite) {
  const RdpCurve per({2.0, 3.0}, {kInf, 1.0});
  EXPECT_EQ(compose(per, 5).d_alpha()[0], kInf);
  EXPECT_EQ(compose(per, 0).d_alpha()[0], 0.0);
}

TEST(Compose, MatchesOracleAfterManySteps) {
  const std::int64_t steps = 186000;
  const auto curve = account({2.81e-4, 0.4, steps, 1.0}, OrderGrid::default_grid());
  for (std::size_t i : {0u, 5u, 11u, 20u, 40u, 72u}) {
    const double alpha = curve.orders()[i];
    const double want = static_cast<double>(steps) * oracle::sgm_rdp_step(2.81e-4, 0.4, alpha);
    EXPECT_LE(rel_err(curve.d_alpha()[i], want), 1e-6) << alpha;
  }
  ASSERT_TRUE(curve.params());
  EXPECT_EQ(curve.params()->steps, steps);
}

TEST(RdpToDp, WorkedExamples) {
  const auto one = rdp_to_dp_epsilon(RdpCurve({2.0}, {1.0}), std::exp(-1.0));
  EXPECT_DOUBLE_EQ(one.epsilon, 2.0);
  EXPECT_EQ(one.best_alpha, 2.0);

  const auto two = rdp_to_dp_epsilon(RdpCurve({2.0, 10.0}, {0.0, 0.0}), std::exp(-9.0));
  EXPECT_NEAR(two.epsilon, 1.0, 1e-15);
  EXPECT_EQ(two.best_alpha, 10.0);
}

TEST(RdpToDp, TiesGoToSmallestOrder) {
  // 1 + 1/1 = 2 at alpha 2; 1.5 + 1/2 = 2 at alpha 3.
  const auto r = rdp_to_dp_epsilon(RdpCurve({2.0, 3.0}, {1.0, 1.5}), std::exp(-1.0));
  EXPECT_EQ(r.best_alpha, 2.0);
}

TEST(RdpToDp, AllInfiniteIsFlagged) {
  const auto r = rdp_to_dp_epsilon(RdpCurve({2.0, 4.0}, {kInf, kInf}), 1e-5);
  EXPECT_TRUE(r.infinite);
  EXPECT_EQ(r.epsilon, kInf);
  EXPECT_FALSE(r.best_alpha);
  EXPECT_THROW(rdp_to_dp_epsilon(RdpCurve({2.0}, {1.0}), 0.0), std::domain_error);
}

TEST(RdpToDp, MatchesOracleBuiltCurve) {
  const auto grid = OrderGrid::default_grid();
  const auto curve = account({2.81e-4, 0.4, 186000, 1.0}, grid);
  std::vector<double> d;
  for (double alpha : grid.orders()) d.push_back(186000.0 * oracle::sgm_rdp_step(2.81e-4, 0.4, alpha));
  const RdpCurve reference({grid.orders().begin(), grid.orders().end()}, d);
  const auto got = rdp_to_dp_epsilon(curve, 3e-7);
  const auto want = rdp_to_dp_epsilon(reference, 3e-7);
  EXPECT_LE(rel_err(got.epsilon, want.epsilon), 1e-4);
  EXPECT_EQ(got.best_alpha, want.best_alpha);
}

TEST(OrderGrid, DefaultShape) {
  const auto grid = OrderGrid::default_grid();
  EXPECT_EQ(grid.size(), 73u);
  EXPECT_DOUBLE_EQ(grid.orders().front(), 1.01);
  EXPECT_DOUBLE_EQ(grid.orders().back(), 63.0);
}

TEST(OrderGrid, Validation) {
  EXPECT_THROW(OrderGrid({}), std::domain_error);
  EXPECT_ANY_THROW(OrderGrid({1.0, 2.0}));
  EXPECT_ANY_THROW(OrderGrid({3.0, 2.0}));
  EXPECT_ANY_THROW(OrderGrid({2.0, 2.0}));
  EXPECT_ANY_THROW(RdpCurve({2.0}, {-1.0}));
  EXPECT_ANY_THROW(RdpCurve({2.0}, {std::nan("")}));
  EXPECT_ANY_THROW(RdpCurve({2.0, 3.0}, {1.0}));
}

TEST(CurveJson, RoundTrip) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int i = 0; i < 20; ++i) {
    const double q = std::pow(10.0, -4.0 * u(rng));
    const double s = 0.3 + 5.0 * u(rng);
    const auto curve = account({q, s, 1 + static_cast<std::int64_t>(1e5 * u(rng)), 1.0},
                               OrderGrid::default_grid());
    const auto back = curve_from_json(nlohmann::json::parse(curve_to_json(curve).dump()));
    ASSERT_EQ(back.size(), curve.size());
    for (std::size_t k = 0; k < curve.size(); ++k) {
      EXPECT_EQ(back.orders()[k], curve.orders()[k]);
      EXPECT_EQ(back.d_alpha()[k], curve.d_alpha()[k]);
    }
    EXPECT_EQ(back.params(), curve.params());
  }
}

TEST(CurveJson, InfinityAsString) {
  const RdpCurve c({2.0, 3.0}, {kInf, 0.25});
  const auto j = curve_to_json(c);
  EXPECT_EQ(j["d_alpha"][0], "inf");
  EXPECT_EQ(curve_from_json(j).d_alpha()[0], kInf);
  auto bad = j;
  bad["d_alpha"][0] = "nan";
  EXPECT_THROW(curve_from_json(bad), std::invalid_argument);
}

}  // namespace
}  // namespace rdpleak
