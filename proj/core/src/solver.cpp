#include "convexecg/solver.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <optional>

namespace convexecg {

const char* to_string(Algorithm a) noexcept {
  return a == Algorithm::kAcceleratedProximal ? "accelerated_proximal" : "coordinate_descent";
}

Algorithm algorithm_from_string(const std::string& text) {
  if (text == "accelerated_proximal") return Algorithm::kAcceleratedProximal;
  if (text == "coordinate_descent") return Algorithm::kCoordinateDescent;
  throw Error("unknown algorithm '" + text + "'");
}

void SolverConfig::validate() const {
  if (!(lambda >= 0.0) || !std::isfinite(lambda)) throw Error("lambda must be finite and >= 0");
  if (!(kkt_tol > 0.0)) throw Error("kkt_tol must be positive");
  if (max_iters < 1) throw Error("max_iters must be at least 1");
}

ConvergenceError::ConvergenceError(const std::string& what, LassoSolution best)
    : Error(what), best_(std::move(best)) {}

namespace {

Eigen::Map<const Eigen::VectorXd> as_vector(std::span<const double> y) {
  return {y.data(), static_cast<Eigen::Index>(y.size())};
}

void check_dims(const Eigen::MatrixXd& k, std::span<const double> y) {
  if (static_cast<std::size_t>(k.rows()) != y.size()) {
    throw Error("dimension mismatch: K has " + std::to_string(k.rows()) + " rows, y has " +
                std::to_string(y.size()) + " entries");
  }
  if (y.empty()) throw Error("empty problem");
}

double soft_threshold(double v, double tau) {
  if (v > tau) return v - tau;
  if (v < -tau) return v + tau;
  return 0.0;
}

double sign(double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); }

// KKT violation of the z-block given the smooth gradient g.
double kkt_from_gradient(const Eigen::VectorXd& g, const Eigen::VectorXd& z, double lambda) {
  double worst = 0.0;
  for (Eigen::Index j = 0; j < z.size(); ++j) {
    const double v = z[j] != 0.0 ? std::abs(g[j] + lambda * sign(z[j]))
                                 : std::max(std::abs(g[j]) - lambda, 0.0);
    worst = std::max(worst, v);
  }
  return worst;
}

// Intercept folded out by centring the columns of K and y.
struct Centered {
  Eigen::MatrixXd k;
  Eigen::VectorXd y;
  Eigen::RowVectorXd col_means;
  double y_mean = 0.0;
  double n = 0.0;

  Centered(const Eigen::MatrixXd& raw, std::span<const double> y_raw) {
    n = static_cast<double>(raw.rows());
    col_means = raw.colwise().mean();
    k = raw.rowwise() - col_means;
    const auto yv = as_vector(y_raw);
    y_mean = yv.mean();
    y = yv.array() - y_mean;
  }

  double intercept(const Eigen::VectorXd& z) const { return y_mean - col_means.dot(z); }

  // Smooth part plus penalty, from the residual r = K_c z - y_c.
  double value(const Eigen::VectorXd& r, const Eigen::VectorXd& z, double lambda) const {
    return 0.5 * r.squaredNorm() / n + lambda * z.lpNorm<1>();
  }
};

constexpr int kMaxPolishDrops = 8;

// Active-set Newton refinement with the signs of z held fixed. The kernel
// columns are linearly dependent, so the support Gram matrix is often
// singular; the minimum-norm step still decreases the quadratic along the
// segment. A coordinate that would cross zero is dropped where it hits zero.
// The result is only returned when it passes the KKT check.
std::optional<Eigen::VectorXd> polish_support(const Centered& c, const Eigen::VectorXd& z,
                                              double lambda, double tol) {
  std::vector<Eigen::Index> support;
  for (Eigen::Index j = 0; j < z.size(); ++j) {
    if (z[j] != 0.0) support.push_back(j);
  }
  Eigen::VectorXd out = z;
  for (int drops = 0; !support.empty(); ++drops) {
    if (drops > kMaxPolishDrops) return std::nullopt;
    const auto m = static_cast<Eigen::Index>(support.size());
    Eigen::MatrixXd a(c.k.rows(), m);
    Eigen::VectorXd signs(m);
    Eigen::VectorXd cur(m);
    for (Eigen::Index i = 0; i < m; ++i) {
      a.col(i) = c.k.col(support[i]);
      cur[i] = out[support[i]];
      signs[i] = sign(cur[i]);
    }
    const Eigen::MatrixXd gram = a.transpose() * a / c.n;
    const Eigen::VectorXd rhs = a.transpose() * c.y / c.n - lambda * signs;
    const Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod(gram);
    Eigen::VectorXd target = cur + cod.solve(rhs - gram * cur);
    target += cod.solve(rhs - gram * target);

    double step = 1.0;
    Eigen::Index blocking = -1;
    for (Eigen::Index i = 0; i < m; ++i) {
      if (sign(target[i]) == signs[i]) continue;
      const double hit = cur[i] / (cur[i] - target[i]);
      if (hit < step) {
        step = hit;
        blocking = i;
      }
    }
    for (Eigen::Index i = 0; i < m; ++i) out[support[i]] = cur[i] + step * (target[i] - cur[i]);
    if (blocking < 0) break;
    out[support[blocking]] = 0.0;
    // Any other coordinate that lands on zero or flips is dropped with it.
    std::erase_if(support, [&](Eigen::Index j) {
      if (out[j] == 0.0 || sign(out[j]) != sign(z[j])) {
        out[j] = 0.0;
        return true;
      }
      return false;
    });
  }
  const Eigen::VectorXd g = c.k.transpose() * (c.k * out - c.y) / c.n;
  if (!(kkt_from_gradient(g, out, lambda) <= tol)) return std::nullopt;
  return out;
}

constexpr std::size_t kPolishInterval = 50;

// Polishing only pays off once the iterate has settled on a support.
class PolishGate {
 public:
  bool settled(const Eigen::VectorXd& z) {
    std::vector<signed char> pattern(static_cast<std::size_t>(z.size()));
    for (Eigen::Index j = 0; j < z.size(); ++j) pattern[static_cast<std::size_t>(j)] = static_cast<signed char>(sign(z[j]));
    const bool same = pattern == last_;
    last_ = std::move(pattern);
    return same;
  }

 private:
  std::vector<signed char> last_;
};

LassoSolution finalize(const Eigen::MatrixXd& k, std::span<const double> y, double lambda,
                       const Centered& c, Eigen::VectorXd z, std::size_t iterations,
                       std::vector<double> trace) {
  LassoSolution s;
  s.z = std::move(z);
  s.t = c.intercept(s.z);
  s.objective = objective(k, y, lambda, s.z, s.t);
  s.kkt_residual = kkt_residual(k, y, lambda, s.z, s.t);
  s.iterations = iterations;
  for (Eigen::Index j = 0; j < s.z.size(); ++j) {
    if (s.z[j] != 0.0) s.support.push_back(static_cast<std::size_t>(j));
  }
  s.trace = std::move(trace);
  return s;
}

[[noreturn]] void fail(LassoSolution best, std::size_t max_iters, Algorithm algorithm) {
  char residual[32];
  std::snprintf(residual, sizeof residual, "%.3g", best.kkt_residual);
  const std::string what = std::string(to_string(algorithm)) + " did not converge within " +
                           std::to_string(max_iters) + " iterations (kkt residual " + residual + ")";
  throw ConvergenceError(what, std::move(best));
}

LassoSolution fit_proximal(const Eigen::MatrixXd& k, std::span<const double> y,
                           const SolverConfig& cfg) {
  const Centered c(k, y);
  const Eigen::Index p = k.cols();
  const double lambda = cfg.lambda;
  std::vector<double> trace;

  Eigen::VectorXd x = Eigen::VectorXd::Zero(p);
  Eigen::VectorXd r_x = -c.y;  // K_c x - y_c
  double f_x = c.value(r_x, x, lambda);
  if (cfg.record_trace) trace.push_back(f_x);

  double lip = lipschitz_constant(c.k);
  if (!(lip > 0.0)) {
    // Every centred column vanishes: z = 0 is optimal.
    return finalize(k, y, lambda, c, x, 0, std::move(trace));
  }

  Eigen::VectorXd g_x = c.k.transpose() * r_x / c.n;
  Eigen::VectorXd y_pt = x;
  Eigen::VectorXd r_y = r_x;
  Eigen::VectorXd g_y = g_x;
  double momentum = 1.0;

  const auto prox = [&](const Eigen::VectorXd& point, const Eigen::VectorXd& grad) {
    const double step = 1.0 / lip;
    Eigen::VectorXd out(p);
    for (Eigen::Index j = 0; j < p; ++j) out[j] = soft_threshold(point[j] - step * grad[j], lambda * step);
    return out;
  };
  // F(cand) - F(x) from the step itself. Near the optimum the two objective
  // values agree to more digits than a double holds, so subtracting them
  // would only compare rounding noise.
  const auto decrease = [&](const Eigen::VectorXd& cand) {
    const Eigen::VectorXd d = c.k * (cand - x);
    double l1 = 0.0;
    for (Eigen::Index j = 0; j < p; ++j) l1 += std::abs(cand[j]) - std::abs(x[j]);
    return 0.5 * d.dot(2.0 * r_x + d) / c.n + lambda * l1;
  };

  PolishGate gate;
  std::size_t iter = 0;
  for (;; ++iter) {
    if (kkt_from_gradient(g_x, x, lambda) <= cfg.kkt_tol) {
      LassoSolution s = finalize(k, y, lambda, c, x, iter, std::move(trace));
      if (s.kkt_residual <= cfg.kkt_tol) return s;
      trace = std::move(s.trace);
    }
    if (iter >= cfg.max_iters) break;

    if (iter > 0 && iter % kPolishInterval == 0 && gate.settled(x)) {
      if (auto polished = polish_support(c, x, lambda, cfg.kkt_tol)) {
        const double delta = decrease(*polished);
        if (delta <= 0.0) {
          x = std::move(*polished);
          r_x = c.k * x - c.y;
          f_x += delta;
          g_x = c.k.transpose() * r_x / c.n;
          y_pt = x;
          r_y = r_x;
          g_y = g_x;
          momentum = 1.0;
          if (cfg.record_trace) trace.push_back(f_x);
          continue;
        }
      }
    }

    Eigen::VectorXd cand = prox(y_pt, g_y);
    double delta = decrease(cand);
    if (delta > 0.0) {
      // Monotone restart: drop momentum and take a plain proximal step from x.
      momentum = 1.0;
      cand = prox(x, g_x);
      delta = decrease(cand);
      // A proximal step of length 1/L cannot increase F; if it does, the
      // power-iteration estimate of L was low.
      for (int guard = 0; delta > 0.0 && guard < 64; ++guard) {
        lip *= 2.0;
        cand = prox(x, g_x);
        delta = decrease(cand);
      }
      if (delta > 0.0) {
        cand = x;
        delta = 0.0;
      }
    }
    const double next_momentum = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * momentum * momentum));
    const double beta = (momentum - 1.0) / next_momentum;
    momentum = next_momentum;

    Eigen::VectorXd r_c = c.k * cand - c.y;
    y_pt = cand + beta * (cand - x);
    r_y = r_c + beta * (r_c - r_x);
    x = std::move(cand);
    r_x = std::move(r_c);
    f_x += delta;
    g_x = c.k.transpose() * r_x / c.n;
    g_y = beta == 0.0 ? g_x : Eigen::VectorXd(c.k.transpose() * r_y / c.n);
    if (cfg.record_trace) trace.push_back(f_x);
  }
  fail(finalize(k, y, lambda, c, x, iter, std::move(trace)), cfg.max_iters, cfg.algorithm);
}

LassoSolution fit_coordinate(const Eigen::MatrixXd& k, std::span<const double> y,
                             const SolverConfig& cfg) {
  const Centered c(k, y);
  const Eigen::Index p = k.cols();
  const double lambda = cfg.lambda;
  std::vector<double> trace;

  const Eigen::VectorXd col_sq = c.k.colwise().squaredNorm().transpose() / c.n;
  Eigen::VectorXd z = Eigen::VectorXd::Zero(p);
  Eigen::VectorXd resid = c.y;  // y_c - K_c z
  // Running objective advanced by each update's exact decrease, as in the
  // proximal solver.
  double f_z = c.value(-resid, z, lambda);
  if (cfg.record_trace) trace.push_back(f_z);

  PolishGate gate;
  std::size_t sweep = 0;
  for (;; ++sweep) {
    resid = c.y - c.k * z;
    const Eigen::VectorXd g = -(c.k.transpose() * resid) / c.n;
    if (kkt_from_gradient(g, z, lambda) <= cfg.kkt_tol) {
      LassoSolution s = finalize(k, y, lambda, c, z, sweep, std::move(trace));
      if (s.kkt_residual <= cfg.kkt_tol) return s;
      trace = std::move(s.trace);
    }
    if (sweep >= cfg.max_iters) break;

    if (sweep > 0 && sweep % kPolishInterval == 0 && gate.settled(z)) {
      if (auto polished = polish_support(c, z, lambda, cfg.kkt_tol)) {
        const Eigen::VectorXd d = c.k * (*polished - z);
        const double delta = 0.5 * d.dot(d - 2.0 * resid) / c.n +
                             lambda * (polished->lpNorm<1>() - z.lpNorm<1>());
        if (delta <= 0.0) {
          z = std::move(*polished);
          f_z += delta;
          if (cfg.record_trace) trace.push_back(f_z);
          continue;
        }
      }
    }

    for (Eigen::Index j = 0; j < p; ++j) {
      if (col_sq[j] == 0.0) continue;
      const double corr = c.k.col(j).dot(resid) / c.n;
      const double updated = soft_threshold(corr + col_sq[j] * z[j], lambda) / col_sq[j];
      const double step = updated - z[j];
      if (step == 0.0) continue;
      // Exact minimisation cannot increase F; a positive value here is
      // rounding, and the update is below what F can resolve.
      const double change = 0.5 * col_sq[j] * step * step - step * corr +
                            lambda * (std::abs(updated) - std::abs(z[j]));
      if (change > 0.0) continue;
      resid -= step * c.k.col(j);
      z[j] = updated;
      f_z += change;
    }
    if (cfg.record_trace) trace.push_back(f_z);
  }
  fail(finalize(k, y, lambda, c, z, sweep, std::move(trace)), cfg.max_iters, cfg.algorithm);
}

}  // namespace

double objective(const Eigen::MatrixXd& k, std::span<const double> y, double lambda,
                 const Eigen::VectorXd& z, double t) {
  check_dims(k, y);
  if (z.size() != k.cols()) throw Error("dimension mismatch: z length differs from K columns");
  const Eigen::VectorXd r = (k * z).array() + t - as_vector(y).array();
  return 0.5 * r.squaredNorm() / static_cast<double>(y.size()) + lambda * z.lpNorm<1>();
}

double lambda_max(const Eigen::MatrixXd& k, std::span<const double> y) {
  check_dims(k, y);
  if (k.cols() == 0) return 0.0;
  const Centered c(k, y);
  return (c.k.transpose() * c.y).lpNorm<Eigen::Infinity>() / c.n;
}

double kkt_residual(const Eigen::MatrixXd& k, std::span<const double> y, double lambda,
                    const Eigen::VectorXd& z, double t) {
  check_dims(k, y);
  if (z.size() != k.cols()) throw Error("dimension mismatch: z length differs from K columns");
  const double n = static_cast<double>(y.size());
  const Eigen::VectorXd r = (k * z).array() + t - as_vector(y).array();
  const Eigen::VectorXd g = k.transpose() * r / n;
  return std::max(kkt_from_gradient(g, z, lambda), std::abs(r.mean()));
}

double lipschitz_constant(const Eigen::MatrixXd& a, double tol, std::size_t max_iters) {
  if (a.size() == 0) return 0.0;
  const double n = static_cast<double>(a.rows());
  const auto power = [&](Eigen::VectorXd v) {
    double estimate = 0.0;
    for (std::size_t it = 0; it < max_iters; ++it) {
      const Eigen::VectorXd w = a.transpose() * (a * v) / n;
      const double norm = w.norm();
      if (!(norm > 0.0)) return 0.0;
      v = w / norm;
      const bool done = std::abs(norm - estimate) <= tol * norm;
      estimate = norm;
      if (done) break;
    }
    return estimate;
  };
  const double from_ones = power(Eigen::VectorXd::Ones(a.cols()) / std::sqrt(static_cast<double>(a.cols())));
  if (from_ones > 0.0) return from_ones;
  // The all-ones start can be orthogonal to the row space (the centred
  // columns of a two-sample kernel cancel in pairs); restart from the
  // heaviest column.
  Eigen::Index heaviest = 0;
  if (!(a.colwise().squaredNorm().maxCoeff(&heaviest) > 0.0)) return 0.0;
  return power(Eigen::VectorXd::Unit(a.cols(), heaviest));
}

LassoSolution fit(const Eigen::MatrixXd& k, std::span<const double> y, const SolverConfig& config) {
  config.validate();
  check_dims(k, y);
  for (double v : y) {
    if (!std::isfinite(v)) throw Error("non-finite target value");
  }
  return config.algorithm == Algorithm::kAcceleratedProximal ? fit_proximal(k, y, config)
                                                              : fit_coordinate(k, y, config);
}

LassoSolution fit(const KernelMatrix& k, std::span<const double> y, const SolverConfig& config) {
  return fit(k.entries, y, config);
}

}  // namespace convexecg
