#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "convexecg/error.hpp"
#include "convexecg/kernel.hpp"
#include "convexecg/solver.hpp"
#include "convexecg/synth.hpp"

using namespace convexecg;

namespace {

struct Instance {
  std::vector<double> x;
  std::vector<double> y;
  KernelMatrix k;
};

Instance random_instance(SplitMix64& rng, std::size_t n) {
  Instance inst;
  inst.x.resize(n);
  inst.y.resize(n);
  for (auto& v : inst.x) v = rng.normal();
  for (auto& v : inst.y) v = rng.normal();
  inst.k = build_k(inst.x);
  return inst;
}

SolverConfig config(double lambda, Algorithm algorithm, double tol = 1e-8) {
  SolverConfig c;
  c.lambda = lambda;
  c.algorithm = algorithm;
  c.kkt_tol = tol;
  return c;
}

double mean(const std::vector<double>& v) { return std::accumulate(v.begin(), v.end(), 0.0) / v.size(); }

}  // namespace

TEST(Solver, AboveLambdaMaxIsNull) {
  SplitMix64 rng(1);
  for (int trial = 0; trial < 100; ++trial) {
    const Instance inst = random_instance(rng, 5 + rng.next() % 30);
    const double lmax = lambda_max(inst.k.entries, inst.y);
    for (Algorithm a : {Algorithm::kAcceleratedProximal, Algorithm::kCoordinateDescent}) {
      const LassoSolution s = fit(inst.k, inst.y, config(1.01 * lmax, a));
      EXPECT_TRUE(s.support.empty());
      EXPECT_TRUE((s.z.array() == 0.0).all());
      EXPECT_NEAR(s.t, mean(inst.y), 1e-12);
    }
    const LassoSolution at = fit(inst.k, inst.y, config(lmax, Algorithm::kAcceleratedProximal));
    EXPECT_TRUE(at.support.empty());
  }
}

TEST(Solver, HalfLambdaMaxHasSupport) {
  SplitMix64 rng(2);
  int empty = 0;
  for (int trial = 0; trial < 100; ++trial) {
    const Instance inst = random_instance(rng, 5 + rng.next() % 30);
    const double lmax = lambda_max(inst.k.entries, inst.y);
    if (fit(inst.k, inst.y, config(0.5 * lmax, Algorithm::kAcceleratedProximal)).support.empty()) ++empty;
  }
  EXPECT_EQ(empty, 0);
}

TEST(Solver, NearInterpolatesLinearTarget) {
  const std::vector<double> x{0.0, 1.0, 2.0}, y{0.0, 1.0, 2.0};
  const KernelMatrix k = build_k(x);
  for (Algorithm a : {Algorithm::kAcceleratedProximal, Algorithm::kCoordinateDescent}) {
    const LassoSolution s = fit(k, y, config(1e-8, a));
    const Eigen::VectorXd fitted = (k.entries * s.z).array() + s.t;
    for (int i = 0; i < 3; ++i) EXPECT_NEAR(fitted[i], y[static_cast<std::size_t>(i)], 1e-4);
  }
}

TEST(Solver, MatchesCoordinateDescentOracle) {
  SplitMix64 rng(8);
  const Instance inst = random_instance(rng, 8);
  const LassoSolution prox = fit(inst.k, inst.y, config(0.01, Algorithm::kAcceleratedProximal));
  const LassoSolution cd = fit(inst.k, inst.y, config(0.01, Algorithm::kCoordinateDescent, 1e-10));
  EXPECT_LE(std::abs(prox.objective - cd.objective) / std::max(1.0, cd.objective), 1e-8);
}

TEST(Solver, GlobalOptimalityCrossCheck) {
  SplitMix64 rng(100);
  const double lambdas[] = {0.001, 0.01, 0.1};
  for (int trial = 0; trial < 100; ++trial) {
    const Instance inst = random_instance(rng, 2 + rng.next() % 49);
    const double lambda = lambdas[trial % 3];
    const LassoSolution prox = fit(inst.k, inst.y, config(lambda, Algorithm::kAcceleratedProximal));
    const LassoSolution cd = fit(inst.k, inst.y, config(lambda, Algorithm::kCoordinateDescent));
    EXPECT_LE(prox.kkt_residual, 1e-8);
    EXPECT_LE(cd.kkt_residual, 1e-8);
    EXPECT_LE(std::abs(prox.objective - cd.objective) / std::max(1.0, cd.objective), 1e-6) << trial;
  }
}

TEST(Solver, TwoSampleKernel) {
  // The centred columns cancel in pairs, so the all-ones vector lies in the
  // null space; the step size must still come out positive.
  const std::vector<double> x{-0.3, 1.2}, y{0.5, -1.0};
  const KernelMatrix k = build_k(x);
  for (Algorithm a : {Algorithm::kAcceleratedProximal, Algorithm::kCoordinateDescent}) {
    const LassoSolution s = fit(k, y, config(0.01, a));
    EXPECT_LE(s.kkt_residual, 1e-8);
    EXPECT_FALSE(s.support.empty());
  }
}

TEST(Solver, LambdaMaxExamples) {
  const std::vector<double> constant{2.0, 2.0, 2.0};
  EXPECT_EQ(lambda_max(build_k(std::vector<double>{0.0, 1.0, 3.0}).entries, constant), 0.0);

  const std::vector<double> y{1.0, 2.0, 4.0, 9.0};
  Eigen::MatrixXd k(4, 1);
  k << 1.0, 2.0, 4.0, 9.0;
  const double my = mean(std::vector<double>(y));
  double ss = 0.0;
  for (double v : y) ss += (v - my) * (v - my);
  EXPECT_NEAR(lambda_max(k, y), ss / 4.0, 1e-12);
}

TEST(Solver, KktResidual) {
  SplitMix64 rng(4);
  const Instance inst = random_instance(rng, 20);
  const double lmax = lambda_max(inst.k.entries, inst.y);
  const Eigen::VectorXd zero = Eigen::VectorXd::Zero(inst.k.entries.cols());
  EXPECT_NEAR(kkt_residual(inst.k.entries, inst.y, lmax, zero, mean(inst.y)), 0.0, 1e-12);

  int checked = 0;
  for (int trial = 0; trial < 30; ++trial) {
    const Instance r = random_instance(rng, 10 + rng.next() % 30);
    const LassoSolution s = fit(r.k, r.y, config(0.01, Algorithm::kAcceleratedProximal));
    EXPECT_LE(s.kkt_residual, 1e-8);
    if (s.support.empty()) continue;
    Eigen::VectorXd z = s.z;
    z[static_cast<Eigen::Index>(s.support.front())] += 0.1;
    EXPECT_GT(kkt_residual(r.k.entries, r.y, 0.01, z, s.t), 1e-8);
    ++checked;
  }
  EXPECT_GT(checked, 0);
}

TEST(Solver, ObjectiveExamples) {
  const std::vector<double> x{0.0, 1.0, 2.0};
  const KernelMatrix k = build_k(x);
  const Eigen::VectorXd zero = Eigen::VectorXd::Zero(6);
  EXPECT_EQ(objective(k.entries, std::vector<double>{0, 0, 0}, 0.5, zero, 0.0), 0.0);
  const std::vector<double> y{1.0, -2.0, 3.0};
  EXPECT_DOUBLE_EQ(objective(k.entries, y, 0.5, zero, 0.0), 14.0 / 6.0);

  SplitMix64 rng(6);
  const Instance inst = random_instance(rng, 25);
  const LassoSolution s = fit(inst.k, inst.y, config(0.01, Algorithm::kAcceleratedProximal));
  EXPECT_NEAR(objective(inst.k.entries, inst.y, 0.01, s.z, s.t), s.objective, 1e-12);
}

TEST(Solver, Deterministic) {
  SplitMix64 rng(7);
  const Instance inst = random_instance(rng, 40);
  for (Algorithm a : {Algorithm::kAcceleratedProximal, Algorithm::kCoordinateDescent}) {
    const LassoSolution s1 = fit(inst.k, inst.y, config(0.01, a));
    const LassoSolution s2 = fit(inst.k, inst.y, config(0.01, a));
    EXPECT_EQ(s1.z, s2.z);
    EXPECT_EQ(s1.t, s2.t);
    EXPECT_EQ(s1.iterations, s2.iterations);
  }
}

TEST(Solver, TraceIsNonincreasing) {
  SplitMix64 rng(12);
  for (int trial = 0; trial < 60; ++trial) {
    const Instance inst = random_instance(rng, 5 + rng.next() % 46);
    for (Algorithm a : {Algorithm::kAcceleratedProximal, Algorithm::kCoordinateDescent}) {
      SolverConfig c = config(0.001 * std::pow(10.0, trial % 3), a);
      c.record_trace = true;
      const LassoSolution s = fit(inst.k, inst.y, c);
      ASSERT_FALSE(s.trace.empty());
      EXPECT_NEAR(s.trace.front(), objective(inst.k.entries, inst.y, c.lambda,
                                             Eigen::VectorXd::Zero(inst.k.entries.cols()), mean(inst.y)),
                  1e-12);
      for (std::size_t i = 1; i < s.trace.size(); ++i) ASSERT_LE(s.trace[i], s.trace[i - 1]) << i;
      EXPECT_NEAR(s.trace.back(), s.objective, 1e-9 * std::max(1.0, s.objective));
    }
  }
}

TEST(Solver, OptimalValueNondecreasingInLambda) {
  SplitMix64 rng(13);
  for (int trial = 0; trial < 10; ++trial) {
    const Instance inst = random_instance(rng, 30);
    double previous = -1.0;
    for (double lambda : {0.0, 1e-4, 1e-3, 0.003, 0.01, 0.03, 0.1, 0.3, 1.0}) {
      const LassoSolution s = fit(inst.k, inst.y, config(lambda, Algorithm::kAcceleratedProximal));
      EXPECT_GE(s.objective, previous - 1e-12);
      previous = s.objective;
    }
  }
}

TEST(Solver, ConvergenceFailureCarriesBestIterate) {
  SplitMix64 rng(42);
  const Instance inst = random_instance(rng, 40);
  SolverConfig c = config(0.001, Algorithm::kAcceleratedProximal);
  c.max_iters = 3;
  try {
    fit(inst.k, inst.y, c);
    FAIL() << "expected ConvergenceError";
  } catch (const ConvergenceError& e) {
    EXPECT_GT(e.best().kkt_residual, c.kkt_tol);
    EXPECT_EQ(e.best().iterations, 3u);
    EXPECT_NE(std::string(e.what()).find("did not converge"), std::string::npos);
  }
}

TEST(Solver, RejectsBadInput) {
  const KernelMatrix k = build_k(std::vector<double>{0.0, 1.0, 2.0});
  EXPECT_THROW(fit(k, std::vector<double>{1.0, 2.0}, {}), Error);
  EXPECT_THROW(fit(k, std::vector<double>{1.0, 2.0, NAN}, {}), Error);
  SolverConfig bad;
  bad.lambda = -1.0;
  EXPECT_THROW(fit(k, std::vector<double>{1.0, 2.0, 3.0}, bad), Error);
  bad = {};
  bad.kkt_tol = 0.0;
  EXPECT_THROW(fit(k, std::vector<double>{1.0, 2.0, 3.0}, bad), Error);
  EXPECT_EQ(algorithm_from_string("coordinate_descent"), Algorithm::kCoordinateDescent);
  EXPECT_THROW(algorithm_from_string("newton"), Error);
}

TEST(Solver, LipschitzMatchesSpectralNorm) {
  SplitMix64 rng(15);
  const Instance inst = random_instance(rng, 30);
  const Eigen::MatrixXd kc = inst.k.entries.rowwise() - inst.k.entries.colwise().mean();
  const Eigen::JacobiSVD<Eigen::MatrixXd> svd(kc);
  const double exact = svd.singularValues()[0] * svd.singularValues()[0] / 30.0;
  EXPECT_NEAR(lipschitz_constant(kc), exact, 1e-6 * exact);
}
