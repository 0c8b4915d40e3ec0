#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace convexecg {

enum class Orientation { kRising, kFalling };

const char* to_string(Orientation o) noexcept;
// Accepts "rising" / "falling"; throws Error otherwise.
Orientation orientation_from_string(const std::string& text);

struct ColumnMeta {
  std::size_t breakpoint_index;
  Orientation orientation;
};

// ReLU feature matrix of the convex two-layer network program.
//
// Rows follow the training samples in their original order. Columns come in
// two blocks over the m unique training values (ascending):
//   column j      -> (x_i - b_j)_+   rising
//   column m + j  -> (b_j - x_i)_+   falling
struct KernelMatrix {
  std::vector<double> inputs;       // original x_i, one per row
  std::vector<double> breakpoints;  // unique sorted x values, length m
  Eigen::MatrixXd entries;          // rows x 2m
  std::vector<ColumnMeta> columns;  // length 2m

  std::size_t rows() const noexcept { return inputs.size(); }
  std::size_t unique_count() const noexcept { return breakpoints.size(); }
};

// Throws Error on empty or non-finite input.
KernelMatrix build_k(std::span<const double> x_train);

// Positive part of the signed volume spanned by x, u_1..u_{d-1}, divided by
// the l1 norm of u_1 ^ ... ^ u_{d-1}.
//
// `x` has length d, `u` holds d-1 vectors of length d (1 <= d <= 4). For
// d = 1 the wedge is empty and its norm is 1, so kappa(x) = (x)_+. Throws
// Error on shape mismatch or when the wedge norm is zero.
double kappa(std::span<const double> x, const std::vector<std::vector<double>>& u);

// Determinant by cofactor expansion along the first row (square, n <= 4).
double cofactor_determinant(const std::vector<std::vector<double>>& rows);

}  // namespace convexecg
