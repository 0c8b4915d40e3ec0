#include "convexecg/kernel.hpp"

#include <algorithm>
#include <cmath>

#include "convexecg/error.hpp"

namespace convexecg {

const char* to_string(Orientation o) noexcept {
  return o == Orientation::kRising ? "rising" : "falling";
}

Orientation orientation_from_string(const std::string& text) {
  if (text == "rising") return Orientation::kRising;
  if (text == "falling") return Orientation::kFalling;
  throw Error("unknown orientation '" + text + "'");
}

KernelMatrix build_k(std::span<const double> x_train) {
  if (x_train.empty()) throw Error("kernel needs at least one training input");
  for (double v : x_train) {
    if (!std::isfinite(v)) throw Error("non-finite training input");
  }
  KernelMatrix k;
  k.inputs.assign(x_train.begin(), x_train.end());
  k.breakpoints = k.inputs;
  std::sort(k.breakpoints.begin(), k.breakpoints.end());
  k.breakpoints.erase(std::unique(k.breakpoints.begin(), k.breakpoints.end()), k.breakpoints.end());

  const auto n = static_cast<Eigen::Index>(k.inputs.size());
  const auto m = static_cast<Eigen::Index>(k.breakpoints.size());
  k.entries.resize(n, 2 * m);
  for (Eigen::Index j = 0; j < m; ++j) {
    const double b = k.breakpoints[static_cast<std::size_t>(j)];
    for (Eigen::Index i = 0; i < n; ++i) {
      const double x = k.inputs[static_cast<std::size_t>(i)];
      k.entries(i, j) = std::max(x - b, 0.0);
      k.entries(i, m + j) = std::max(b - x, 0.0);
    }
  }
  k.columns.reserve(static_cast<std::size_t>(2 * m));
  for (std::size_t j = 0; j < k.breakpoints.size(); ++j) k.columns.push_back({j, Orientation::kRising});
  for (std::size_t j = 0; j < k.breakpoints.size(); ++j) k.columns.push_back({j, Orientation::kFalling});
  return k;
}

double cofactor_determinant(const std::vector<std::vector<double>>& rows) {
  const std::size_t n = rows.size();
  if (n == 0) return 1.0;
  for (const auto& r : rows) {
    if (r.size() != n) throw Error("determinant needs a square matrix");
  }
  if (n > 4) throw Error("cofactor determinant limited to 4x4");
  if (n == 1) return rows[0][0];
  if (n == 2) return rows[0][0] * rows[1][1] - rows[0][1] * rows[1][0];
  double det = 0.0;
  for (std::size_t c = 0; c < n; ++c) {
    std::vector<std::vector<double>> minor;
    minor.reserve(n - 1);
    for (std::size_t r = 1; r < n; ++r) {
      std::vector<double> row;
      row.reserve(n - 1);
      for (std::size_t k = 0; k < n; ++k) {
        if (k != c) row.push_back(rows[r][k]);
      }
      minor.push_back(std::move(row));
    }
    const double sign = (c % 2 == 0) ? 1.0 : -1.0;
    det += sign * rows[0][c] * cofactor_determinant(minor);
  }
  return det;
}

double kappa(std::span<const double> x, const std::vector<std::vector<double>>& u) {
  const std::size_t d = x.size();
  if (d < 1 || d > 4) throw Error("kappa supports dimensions 1 to 4");
  if (u.size() != d - 1) throw Error("kappa needs exactly d - 1 u-vectors");
  for (const auto& v : u) {
    if (v.size() != d) throw Error("u-vector dimension mismatch");
  }

  // l1 norm of the wedge: the (d-1)x(d-1) minors of the u-rows, one per
  // deleted column.
  double wedge_l1 = 0.0;
  if (d == 1) {
    wedge_l1 = 1.0;
  } else {
    for (std::size_t drop = 0; drop < d; ++drop) {
      std::vector<std::vector<double>> minor;
      for (const auto& v : u) {
        std::vector<double> row;
        for (std::size_t k = 0; k < d; ++k) {
          if (k != drop) row.push_back(v[k]);
        }
        minor.push_back(std::move(row));
      }
      wedge_l1 += std::abs(cofactor_determinant(minor));
    }
  }
  if (!(wedge_l1 > 0.0)) throw Error("degenerate u-set: zero wedge norm");

  std::vector<std::vector<double>> rows;
  rows.emplace_back(x.begin(), x.end());
  rows.insert(rows.end(), u.begin(), u.end());
  const double volume = cofactor_determinant(rows);
  return std::max(volume, 0.0) / wedge_l1;
}

}  // namespace convexecg
