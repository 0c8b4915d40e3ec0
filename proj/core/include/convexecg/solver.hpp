#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "convexecg/error.hpp"
#include "convexecg/kernel.hpp"

namespace convexecg {

enum class Algorithm { kAcceleratedProximal, kCoordinateDescent };

const char* to_string(Algorithm a) noexcept;
// Accepts "accelerated_proximal" / "coordinate_descent".
Algorithm algorithm_from_string(const std::string& text);

struct SolverConfig {
  double lambda = 0.01;
  std::size_t max_iters = 100000;
  double kkt_tol = 1e-8;
  Algorithm algorithm = Algorithm::kAcceleratedProximal;
  // Record the objective after every iteration into LassoSolution::trace.
  bool record_trace = false;

  void validate() const;
};

// Solution of
//   min_{z, t} (1 / (2n)) ||K z + 1 t - y||^2 + lambda ||z||_1.
struct LassoSolution {
  Eigen::VectorXd z;
  double t = 0.0;
  double objective = 0.0;
  double kkt_residual = 0.0;
  std::size_t iterations = 0;
  std::vector<std::size_t> support;  // {j : z_j != 0}, ascending
  std::vector<double> trace;         // per-iteration objective, when requested
};

// Thrown when max_iters is exhausted before the KKT tolerance is met.
// best() is the final iterate with its residual filled in.
class ConvergenceError : public Error {
 public:
  ConvergenceError(const std::string& what, LassoSolution best);
  const LassoSolution& best() const noexcept { return best_; }

 private:
  LassoSolution best_;
};

double objective(const Eigen::MatrixXd& k, std::span<const double> y, double lambda,
                 const Eigen::VectorXd& z, double t);

// ||K_c^T y_c||_inf / n with K_c, y_c column / mean centred.
double lambda_max(const Eigen::MatrixXd& k, std::span<const double> y);

// Max violation of the subgradient optimality conditions, including the
// intercept condition |mean residual|.
double kkt_residual(const Eigen::MatrixXd& k, std::span<const double> y, double lambda,
                    const Eigen::VectorXd& z, double t);

// Largest eigenvalue of A^T A / n by power iteration from the all-ones vector.
double lipschitz_constant(const Eigen::MatrixXd& a, double tol = 1e-10,
                          std::size_t max_iters = 10000);

LassoSolution fit(const Eigen::MatrixXd& k, std::span<const double> y, const SolverConfig& config);
LassoSolution fit(const KernelMatrix& k, std::span<const double> y, const SolverConfig& config);

}  // namespace convexecg
