#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

namespace layerprobe {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

inline constexpr double kScaleFloor = 1e-12;

struct Standardizer {
  Vector mean;
  Vector scale;  // population std, floored at kScaleFloor

  Vector apply(const Eigen::Ref<const Vector>& x) const;
  Matrix apply_rows(const Matrix& X) const;
};

Standardizer standardize_fit(const Matrix& X);

enum class ClassWeighting { None, BalancedInverseFrequency };

struct ProbeConfig {
  double l2_lambda = 1.0;
  double tol = 1e-6;  // on the gradient infinity-norm
  int max_iter = 1000;
  ClassWeighting class_weighting = ClassWeighting::None;
  std::uint64_t seed = 0;
};

struct ProbeModel {
  Vector weights;  // in standardized feature space
  double bias = 0.0;
  Standardizer standardizer;
  ProbeConfig config;
  bool converged = false;
  int n_iterations = 0;
  double final_objective = 0.0;

  std::size_t dim() const { return static_cast<std::size_t>(weights.size()); }
};

struct ObjectiveValue {
  double value = 0.0;
  Vector gradient;  // (d/dw..., d/db), length dim + 1
};

// L = (1/n) sum_i s_i [softplus(z_i) - y_i z_i] + lambda/(2n) ||w||^2 with
// z = X w + b. s_i are per-sample weights (all ones when `sample_weights` is
// empty). The bias is not regularized.
ObjectiveValue objective_and_gradient(const Vector& w, double b, const Matrix& X,
                                      std::span<const double> y, double lambda,
                                      std::span<const double> sample_weights = {});

// Per-sample weights implied by the class-weighting mode.
std::vector<double> class_sample_weights(std::span<const double> y, ClassWeighting mode);

// Accepted objective values, one per iteration, starting at the initial point.
struct FitTrace {
  std::vector<double> objective;
};

// Standardizes X, then minimizes the regularized logistic loss by L-BFGS with
// Armijo backtracking, starting from zero. Throws Error("degenerate training
// set ...") when y holds a single class.
ProbeModel fit(const Matrix& X, std::span<const double> y, const ProbeConfig& config,
               FitTrace* trace = nullptr);

double predict_proba(const ProbeModel& model, const Eigen::Ref<const Vector>& x);
Vector predict_proba_batch(const ProbeModel& model, const Matrix& X);

double sigmoid(double z);
double softplus(double z);  // log(1 + exp(z))

std::string probe_to_json(const ProbeModel& model);
ProbeModel probe_from_json(const std::string& text);

}  // namespace layerprobe
