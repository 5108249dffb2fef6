#include "mixcop/optimize.hpp"

#include <cmath>
#include <limits>
#include <memory>
#include <stdexcept>

#include <gsl/gsl_blas.h>
#include <gsl/gsl_errno.h>
#include <gsl/gsl_multimin.h>
#include <gsl/gsl_vector.h>

namespace mixcop {
namespace {

constexpr double kPenalty = 1e300;

struct GslVectorDeleter {
  void operator()(gsl_vector* v) const { gsl_vector_free(v); }
};
struct FdfMinimizerDeleter {
  void operator()(gsl_multimin_fdfminimizer* m) const { gsl_multimin_fdfminimizer_free(m); }
};
struct FMinimizerDeleter {
  void operator()(gsl_multimin_fminimizer* m) const { gsl_multimin_fminimizer_free(m); }
};

using VectorPtr = std::unique_ptr<gsl_vector, GslVectorDeleter>;

VectorPtr to_gsl(const Eigen::VectorXd& x) {
  VectorPtr v(gsl_vector_alloc(static_cast<size_t>(x.size())));
  for (Eigen::Index i = 0; i < x.size(); ++i) gsl_vector_set(v.get(), i, x[i]);
  return v;
}

Eigen::VectorXd from_gsl(const gsl_vector* v) {
  Eigen::VectorXd x(static_cast<Eigen::Index>(v->size));
  for (size_t i = 0; i < v->size; ++i) x[static_cast<Eigen::Index>(i)] = gsl_vector_get(v, i);
  return x;
}

double guarded(double v) { return std::isfinite(v) ? v : kPenalty; }

// GSL's default handler aborts; errors are reported through status codes here.
struct ErrorHandlerGuard {
  gsl_error_handler_t* previous;
  ErrorHandlerGuard() : previous(gsl_set_error_handler_off()) {}
  ~ErrorHandlerGuard() { gsl_set_error_handler(previous); }
};

double fdf_value(const gsl_vector* x, void* params) {
  const auto& f = *static_cast<const SmoothObjective*>(params);
  return guarded(f(from_gsl(x), nullptr));
}

void fdf_gradient(const gsl_vector* x, void* params, gsl_vector* g) {
  const auto& f = *static_cast<const SmoothObjective*>(params);
  Eigen::VectorXd grad(static_cast<Eigen::Index>(x->size));
  f(from_gsl(x), &grad);
  for (size_t i = 0; i < x->size; ++i) gsl_vector_set(g, i, grad[static_cast<Eigen::Index>(i)]);
}

void fdf_both(const gsl_vector* x, void* params, double* value, gsl_vector* g) {
  const auto& f = *static_cast<const SmoothObjective*>(params);
  Eigen::VectorXd grad(static_cast<Eigen::Index>(x->size));
  *value = guarded(f(from_gsl(x), &grad));
  for (size_t i = 0; i < x->size; ++i) gsl_vector_set(g, i, grad[static_cast<Eigen::Index>(i)]);
}

double f_value(const gsl_vector* x, void* params) {
  const auto& f = *static_cast<const Objective*>(params);
  return guarded(f(from_gsl(x)));
}

}  // namespace

OptimResult minimize_bfgs(const SmoothObjective& f, const Eigen::VectorXd& x0,
                          const QuasiNewtonOptions& options) {
  if (x0.size() == 0) throw std::invalid_argument("minimize_bfgs: empty start vector");
  ErrorHandlerGuard guard;
  const size_t n = static_cast<size_t>(x0.size());

  gsl_multimin_function_fdf fn;
  fn.n = n;
  fn.f = &fdf_value;
  fn.df = &fdf_gradient;
  fn.fdf = &fdf_both;
  fn.params = const_cast<SmoothObjective*>(&f);

  std::unique_ptr<gsl_multimin_fdfminimizer, FdfMinimizerDeleter> state(
      gsl_multimin_fdfminimizer_alloc(gsl_multimin_fdfminimizer_vector_bfgs2, n));
  auto start = to_gsl(x0);
  gsl_multimin_fdfminimizer_set(state.get(), &fn, start.get(), options.initial_step,
                                options.line_search_tolerance);

  OptimResult result;
  result.trace.push_back(state->f);
  int status = GSL_CONTINUE;
  while (status == GSL_CONTINUE && result.iterations < options.max_iterations) {
    ++result.iterations;
    if (gsl_multimin_fdfminimizer_iterate(state.get()) != GSL_SUCCESS) break;
    result.trace.push_back(state->f);
    status = gsl_multimin_test_gradient(state->gradient, options.gradient_tolerance);
  }
  result.x = from_gsl(state->x);
  result.value = state->f;
  result.final_measure = gsl_blas_dnrm2(state->gradient);
  result.converged = result.final_measure <= options.gradient_tolerance;
  return result;
}

OptimResult minimize_simplex(const Objective& f, const Eigen::VectorXd& x0,
                             const SimplexOptions& options) {
  if (x0.size() == 0) throw std::invalid_argument("minimize_simplex: empty start vector");
  if (options.initial_step.empty()) throw std::invalid_argument("minimize_simplex: empty step");
  ErrorHandlerGuard guard;
  const size_t n = static_cast<size_t>(x0.size());

  gsl_multimin_function fn;
  fn.n = n;
  fn.f = &f_value;
  fn.params = const_cast<Objective*>(&f);

  Eigen::VectorXd step(x0.size());
  for (Eigen::Index i = 0; i < x0.size(); ++i) {
    step[i] = options.initial_step.size() == 1 ? options.initial_step[0]
                                                : options.initial_step.at(static_cast<size_t>(i));
  }

  std::unique_ptr<gsl_multimin_fminimizer, FMinimizerDeleter> state(
      gsl_multimin_fminimizer_alloc(gsl_multimin_fminimizer_nmsimplex2, n));
  auto start = to_gsl(x0);
  auto steps = to_gsl(step);
  gsl_multimin_fminimizer_set(state.get(), &fn, start.get(), steps.get());

  OptimResult result;
  result.trace.push_back(state->fval);
  int status = GSL_CONTINUE;
  double anchor = state->fval;
  int since_improvement = 0;
  while (status == GSL_CONTINUE && result.iterations < options.max_iterations) {
    ++result.iterations;
    if (gsl_multimin_fminimizer_iterate(state.get()) != GSL_SUCCESS) break;
    result.trace.push_back(state->fval);
    const double size = gsl_multimin_fminimizer_size(state.get());
    status = gsl_multimin_test_size(size, options.size_tolerance);
    if (anchor - state->fval > options.stall_relative * (1.0 + std::abs(anchor))) {
      anchor = state->fval;
      since_improvement = 0;
      result.stalled = false;
    } else if (++since_improvement >= options.stall_iterations) {
      result.stalled = true;
      if (size < 100.0 * options.size_tolerance) status = GSL_SUCCESS;
    }
  }
  result.x = from_gsl(state->x);
  result.value = state->fval;
  result.final_measure = gsl_multimin_fminimizer_size(state.get());
  result.converged = status == GSL_SUCCESS;
  return result;
}

}  // namespace mixcop
