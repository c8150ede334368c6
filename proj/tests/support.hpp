#pragma once

// Test-only helpers and independent oracles. Nothing here calls into the
// library code paths it is used to check.

#include <atomic>
#include <cmath>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <unistd.h>

namespace testsupport {

// Scratch directory removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static std::atomic<int> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            ("layerprobe_" + tag + "_" + std::to_string(::getpid()) + "_" +
             std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

// Direct evaluation of the logistic objective with log(1 + exp(z)) written
// out naively; only safe for moderate |z|.
inline double naive_logistic_objective(const Eigen::VectorXd& w, double b,
                                       const Eigen::MatrixXd& X, const std::vector<double>& y,
                                       double lambda) {
  const auto n = static_cast<double>(X.rows());
  double loss = 0.0;
  for (Eigen::Index i = 0; i < X.rows(); ++i) {
    double z = b;
    for (Eigen::Index j = 0; j < X.cols(); ++j) z += w(j) * X(i, j);
    const double p = 1.0 / (1.0 + std::exp(-z));
    loss += -y[i] * std::log(p) - (1.0 - y[i]) * std::log(1.0 - p);
  }
  return loss / n + lambda / (2.0 * n) * w.squaredNorm();
}

// Independent convex solver: damped Newton on the standardized problem with
// an explicit Hessian and LDLT solve. Returns the minimized objective over
// (w, b) for the given (already standardized) features.
struct NewtonResult {
  Eigen::VectorXd w;
  double b = 0.0;
  double objective = 0.0;
  int iterations = 0;
};

inline NewtonResult newton_logistic(const Eigen::MatrixXd& X, const std::vector<double>& y,
                                    double lambda, int max_iter = 100) {
  const Eigen::Index n = X.rows();
  const Eigen::Index d = X.cols();
  Eigen::MatrixXd A(n, d + 1);
  A.leftCols(d) = X;
  A.col(d).setOnes();
  Eigen::VectorXd theta = Eigen::VectorXd::Zero(d + 1);

  auto objective = [&](const Eigen::VectorXd& t) {
    const Eigen::VectorXd z = A * t;
    double loss = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      const double zi = z(i);
      const double sp = zi > 0 ? zi + std::log1p(std::exp(-zi)) : std::log1p(std::exp(zi));
      loss += sp - y[i] * zi;
    }
    return loss / static_cast<double>(n) +
           lambda / (2.0 * static_cast<double>(n)) * t.head(d).squaredNorm();
  };

  NewtonResult out;
  double f = objective(theta);
  for (int it = 0; it < max_iter; ++it) {
    const Eigen::VectorXd z = A * theta;
    Eigen::VectorXd p(n);
    Eigen::VectorXd wdiag(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      p(i) = 1.0 / (1.0 + std::exp(-z(i)));
      wdiag(i) = p(i) * (1.0 - p(i));
    }
    Eigen::VectorXd r(n);
    for (Eigen::Index i = 0; i < n; ++i) r(i) = p(i) - y[i];
    Eigen::VectorXd g = A.transpose() * r / static_cast<double>(n);
    g.head(d) += lambda / static_cast<double>(n) * theta.head(d);
    Eigen::MatrixXd H = A.transpose() * wdiag.asDiagonal() * A / static_cast<double>(n);
    H.topLeftCorner(d, d).diagonal().array() += lambda / static_cast<double>(n);
    out.iterations = it;
    if (g.lpNorm<Eigen::Infinity>() < 1e-12) break;
    const Eigen::VectorXd step = H.ldlt().solve(g);
    double t = 1.0;
    Eigen::VectorXd next = theta - step;
    double fn = objective(next);
    while (fn > f && t > 1e-10) {
      t *= 0.5;
      next = theta - t * step;
      fn = objective(next);
    }
    if (fn > f) break;
    const bool stalled = f - fn <= 1e-16 * std::abs(f);
    theta = next;
    f = fn;
    if (stalled) break;
  }
  out.w = theta.head(d);
  out.b = theta(d);
  out.objective = f;
  return out;
}

// Standardization written independently of the library (two-pass, population std).
inline Eigen::MatrixXd standardize_oracle(const Eigen::MatrixXd& X) {
  Eigen::MatrixXd out(X.rows(), X.cols());
  for (Eigen::Index j = 0; j < X.cols(); ++j) {
    const double mu = X.col(j).mean();
    const double var = (X.col(j).array() - mu).square().mean();
    const double sd = std::max(std::sqrt(var), 1e-12);
    out.col(j) = (X.col(j).array() - mu) / sd;
  }
  return out;
}

// F1 via precision and recall, independent of confusion-count code.
inline double f1_oracle(const std::vector<bool>& pred, const std::vector<bool>& truth) {
  double predicted_pos = 0;
  double actual_pos = 0;
  double hits = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    predicted_pos += pred[i] ? 1 : 0;
    actual_pos += truth[i] ? 1 : 0;
    hits += (pred[i] && truth[i]) ? 1 : 0;
  }
  if (hits == 0) return 0.0;
  const double precision = hits / predicted_pos;
  const double recall = hits / actual_pos;
  return 2.0 * precision * recall / (precision + recall);
}

}  // namespace testsupport
