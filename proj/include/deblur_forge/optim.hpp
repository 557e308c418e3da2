#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace dforge {

/// Smooth objective: writes the gradient into `grad` (length dim) and
/// returns the loss.
struct OptimProblem {
  std::size_t dim = 0;
  std::function<double(std::span<const double> params, std::span<double> grad)> eval;
};

struct LbfgsConfig {
  std::size_t memory = 10;
  std::size_t max_iters = 500;
  double grad_tol = 1e-8;       // on the Euclidean gradient norm
  double loss_rel_tol = 1e-12;  // |f_k - f_{k+1}| <= tol * max(|f_k|, |f_{k+1}|)
  std::size_t max_line_search_evals = 50;
  double c1 = 1e-4;  // sufficient decrease
  double c2 = 0.9;   // curvature
};

enum class StopReason { grad_tol, loss_rel_tol, max_iters, line_search_failed };

std::string to_string(StopReason reason);

struct OptimReport {
  std::vector<double> final_params;
  double final_loss = 0.0;
  std::size_t iterations = 0;
  std::size_t evaluations = 0;
  bool converged = false;
  double grad_norm = 0.0;
  StopReason reason = StopReason::max_iters;
  /// Loss at the start point and after every accepted iterate.
  std::vector<double> loss_history;
};

/// Thrown when the objective returns a non-finite loss or gradient.
class OptimError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Limited-memory BFGS (two-loop recursion) with a strong-Wolfe line search
/// (bracketing then zoom with safeguarded cubic interpolation).
///
/// The initial Hessian approximation is gamma * I with
/// gamma = s'y / y'y from the newest curvature pair; pairs with
/// s'y <= 1e-10 |s| |y| are discarded. Accepted iterates never increase the
/// loss. A line search that needs more than max_line_search_evals trial
/// points stops the run with converged = false and the best point seen.
OptimReport lbfgs_minimize(const OptimProblem& problem, std::span<const double> x0,
                           const LbfgsConfig& config = {});

/// Central finite differences on every coordinate; returns
/// max_k |analytic_k - numeric_k| / max(1, |numeric_k|).
double check_gradient(const OptimProblem& problem, std::span<const double> x, double h);

}  // namespace dforge
