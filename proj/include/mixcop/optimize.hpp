#pragma once

#include <functional>
#include <vector>

#include <Eigen/Dense>

namespace mixcop {

struct OptimResult {
  Eigen::VectorXd x;
  double value = 0.0;
  int iterations = 0;
  bool converged = false;
  /// Simplex only: the best value stopped improving (see SimplexOptions).
  bool stalled = false;
  /// Final gradient norm (quasi-Newton) or simplex characteristic size.
  double final_measure = 0.0;
  /// Objective value after every accepted iteration.
  std::vector<double> trace;
};

/// Objective returning f(x) and, when `grad` is non-null, filling the gradient.
using SmoothObjective = std::function<double(const Eigen::VectorXd& x, Eigen::VectorXd* grad)>;
using Objective = std::function<double(const Eigen::VectorXd& x)>;

struct QuasiNewtonOptions {
  int max_iterations = 500;
  double gradient_tolerance = 1e-6;
  double initial_step = 0.01;
  double line_search_tolerance = 0.1;
};

/// Minimizes a smooth objective with GSL's BFGS (bfgs2).
OptimResult minimize_bfgs(const SmoothObjective& f, const Eigen::VectorXd& x0,
                          const QuasiNewtonOptions& options = {});

struct SimplexOptions {
  int max_iterations = 4000;
  double size_tolerance = 1e-7;
  /// Initial simplex edge per coordinate; a single value is broadcast.
  std::vector<double> initial_step{0.5};
  /// Also converged once the best value has not improved by more than
  /// stall_relative * (1 + |f|) for stall_iterations iterations while the
  /// simplex is below 100 * size_tolerance (objective noise floor).
  int stall_iterations = 200;
  double stall_relative = 1e-11;
};

/// Minimizes with GSL's Nelder-Mead (nmsimplex2). Non-finite objective values
/// are replaced by a large penalty so the simplex retreats from them.
OptimResult minimize_simplex(const Objective& f, const Eigen::VectorXd& x0,
                             const SimplexOptions& options = {});

}  // namespace mixcop
