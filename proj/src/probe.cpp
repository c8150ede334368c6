#include "layerprobe/probe.hpp"

#include <cmath>
#include <deque>

#include <json.hpp>

#include "layerprobe/error.hpp"

namespace layerprobe {

namespace {

constexpr int kHistory = 10;
constexpr double kArmijo = 1e-4;
constexpr int kMaxBacktracks = 60;

struct Problem {
  const Matrix& X;
  std::span<const double> y;
  std::span<const double> s;
  double lambda;

  ObjectiveValue eval(const Vector& params) const {
    const Eigen::Index dim = X.cols();
    return objective_and_gradient(params.head(dim), params(dim), X, y, lambda, s);
  }
};

Vector lbfgs_direction(const Vector& g, const std::deque<Vector>& s_hist,
                       const std::deque<Vector>& y_hist) {
  const std::size_t m = s_hist.size();
  std::vector<double> alpha(m);
  std::vector<double> rho(m);
  Vector q = g;
  for (std::size_t k = m; k-- > 0;) {
    rho[k] = 1.0 / y_hist[k].dot(s_hist[k]);
    alpha[k] = rho[k] * s_hist[k].dot(q);
    q -= alpha[k] * y_hist[k];
  }
  if (m > 0) {
    q *= s_hist.back().dot(y_hist.back()) / y_hist.back().squaredNorm();
  }
  for (std::size_t k = 0; k < m; ++k) {
    const double beta = rho[k] * y_hist[k].dot(q);
    q += (alpha[k] - beta) * s_hist[k];
  }
  return -q;
}

}  // namespace

double sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

double softplus(double z) {
  return z > 0.0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z));
}

Vector Standardizer::apply(const Eigen::Ref<const Vector>& x) const {
  if (x.size() != mean.size()) {
    throw Error("dimension mismatch: model expects " + std::to_string(mean.size()) +
                ", got " + std::to_string(x.size()));
  }
  return (x - mean).cwiseQuotient(scale);
}

Matrix Standardizer::apply_rows(const Matrix& X) const {
  if (X.cols() != mean.size()) {
    throw Error("dimension mismatch: model expects " + std::to_string(mean.size()) +
                ", got " + std::to_string(X.cols()));
  }
  Matrix out(X.rows(), X.cols());
  for (Eigen::Index j = 0; j < X.cols(); ++j) {
    out.col(j) = (X.col(j).array() - mean(j)) / scale(j);
  }
  return out;
}

Standardizer standardize_fit(const Matrix& X) {
  if (X.rows() == 0 || X.cols() == 0) throw Error("standardize_fit on empty data");
  const auto n = static_cast<double>(X.rows());
  Standardizer st;
  st.mean.resize(X.cols());
  st.scale.resize(X.cols());
  for (Eigen::Index j = 0; j < X.cols(); ++j) {
    double sum = 0.0;
    for (Eigen::Index i = 0; i < X.rows(); ++i) sum += X(i, j);
    const double mu = sum / n;
    double ss = 0.0;
    for (Eigen::Index i = 0; i < X.rows(); ++i) {
      const double d = X(i, j) - mu;
      ss += d * d;
    }
    st.mean(j) = mu;
    st.scale(j) = std::max(std::sqrt(ss / n), kScaleFloor);
  }
  return st;
}

ObjectiveValue objective_and_gradient(const Vector& w, double b, const Matrix& X,
                                      std::span<const double> y, double lambda,
                                      std::span<const double> sample_weights) {
  const Eigen::Index n = X.rows();
  if (w.size() != X.cols()) throw Error("shape mismatch: weights vs features");
  if (static_cast<Eigen::Index>(y.size()) != n) throw Error("shape mismatch: labels vs rows");
  if (!sample_weights.empty() && static_cast<Eigen::Index>(sample_weights.size()) != n) {
    throw Error("shape mismatch: sample weights vs rows");
  }
  if (n == 0) throw Error("objective on empty data");

  const Vector z = (X * w).array() + b;
  Vector residual(n);
  double loss = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const double si = sample_weights.empty() ? 1.0 : sample_weights[i];
    loss += si * (softplus(z(i)) - y[i] * z(i));
    residual(i) = si * (sigmoid(z(i)) - y[i]);
  }
  const double inv_n = 1.0 / static_cast<double>(n);

  ObjectiveValue out;
  out.value = loss * inv_n + 0.5 * lambda * inv_n * w.squaredNorm();
  out.gradient.resize(w.size() + 1);
  out.gradient.head(w.size()) = (X.transpose() * residual) * inv_n + (lambda * inv_n) * w;
  out.gradient(w.size()) = residual.sum() * inv_n;
  return out;
}

std::vector<double> class_sample_weights(std::span<const double> y, ClassWeighting mode) {
  if (mode == ClassWeighting::None) return {};
  double pos = 0.0;
  for (double v : y) pos += v;
  const auto n = static_cast<double>(y.size());
  const double neg = n - pos;
  std::vector<double> s(y.size());
  for (std::size_t i = 0; i < y.size(); ++i) {
    s[i] = y[i] > 0.5 ? n / (2.0 * pos) : n / (2.0 * neg);
  }
  return s;
}

ProbeModel fit(const Matrix& X, std::span<const double> y, const ProbeConfig& config,
               FitTrace* trace) {
  if (static_cast<Eigen::Index>(y.size()) != X.rows()) {
    throw Error("shape mismatch: labels vs rows");
  }
  if (X.rows() < 2) throw Error("degenerate training set: fewer than 2 samples");
  bool has_pos = false;
  bool has_neg = false;
  for (double v : y) {
    if (v != 0.0 && v != 1.0) throw Error("labels must be 0 or 1");
    (v == 1.0 ? has_pos : has_neg) = true;
  }
  if (!has_pos || !has_neg) {
    throw Error("degenerate training set: only one class present");
  }

  ProbeModel model;
  model.config = config;
  model.standardizer = standardize_fit(X);
  const Matrix Xs = model.standardizer.apply_rows(X);
  const auto weights = class_sample_weights(y, config.class_weighting);
  const Problem problem{Xs, y, weights, config.l2_lambda};

  const Eigen::Index dim = X.cols();
  Vector params = Vector::Zero(dim + 1);
  ObjectiveValue current = problem.eval(params);
  if (trace) trace->objective.assign(1, current.value);

  std::deque<Vector> s_hist;
  std::deque<Vector> y_hist;
  int iter = 0;
  for (; iter < config.max_iter; ++iter) {
    if (current.gradient.lpNorm<Eigen::Infinity>() <= config.tol) {
      model.converged = true;
      break;
    }
    Vector direction = lbfgs_direction(current.gradient, s_hist, y_hist);
    double slope = current.gradient.dot(direction);
    if (!(slope < 0.0)) {
      s_hist.clear();
      y_hist.clear();
      direction = -current.gradient;
      slope = current.gradient.dot(direction);
    }
    double step = s_hist.empty()
                      ? 1.0 / std::max(1.0, current.gradient.lpNorm<Eigen::Infinity>())
                      : 1.0;

    bool accepted = false;
    Vector candidate;
    ObjectiveValue next;
    for (int bt = 0; bt < kMaxBacktracks; ++bt) {
      candidate = params + step * direction;
      next = problem.eval(candidate);
      if (std::isfinite(next.value) &&
          next.value <= current.value + kArmijo * step * slope) {
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    if (!accepted) break;  // no further decrease representable

    Vector s = candidate - params;
    Vector yv = next.gradient - current.gradient;
    if (s.dot(yv) > 1e-12 * s.norm() * yv.norm()) {
      s_hist.push_back(std::move(s));
      y_hist.push_back(std::move(yv));
      if (static_cast<int>(s_hist.size()) > kHistory) {
        s_hist.pop_front();
        y_hist.pop_front();
      }
    }
    params = std::move(candidate);
    current = std::move(next);
    if (trace) trace->objective.push_back(current.value);
  }
  if (!model.converged && current.gradient.lpNorm<Eigen::Infinity>() <= config.tol) {
    model.converged = true;
  }

  model.weights = params.head(dim);
  model.bias = params(dim);
  model.n_iterations = iter;
  model.final_objective = current.value;
  return model;
}

double predict_proba(const ProbeModel& model, const Eigen::Ref<const Vector>& x) {
  const Vector xs = model.standardizer.apply(x);
  return sigmoid(model.weights.dot(xs) + model.bias);
}

Vector predict_proba_batch(const ProbeModel& model, const Matrix& X) {
  const Matrix Xs = model.standardizer.apply_rows(X);
  Vector z = (Xs * model.weights).array() + model.bias;
  for (Eigen::Index i = 0; i < z.size(); ++i) z(i) = sigmoid(z(i));
  return z;
}

namespace {

std::vector<double> to_std(const Vector& v) { return {v.data(), v.data() + v.size()}; }

Vector from_std(const std::vector<double>& v) {
  return Eigen::Map<const Vector>(v.data(), static_cast<Eigen::Index>(v.size()));
}

}  // namespace

std::string probe_to_json(const ProbeModel& model) {
  nlohmann::json j;
  j["weights"] = to_std(model.weights);
  j["bias"] = model.bias;
  j["standardizer"] = {{"mean", to_std(model.standardizer.mean)},
                       {"scale", to_std(model.standardizer.scale)}};
  j["config"] = {{"l2_lambda", model.config.l2_lambda},
                 {"tol", model.config.tol},
                 {"max_iter", model.config.max_iter},
                 {"class_weighting", model.config.class_weighting == ClassWeighting::None
                                         ? "none"
                                         : "balanced"},
                 {"seed", model.config.seed}};
  j["converged"] = model.converged;
  j["n_iterations"] = model.n_iterations;
  j["final_objective"] = model.final_objective;
  return j.dump();
}

ProbeModel probe_from_json(const std::string& text) {
  try {
    const auto j = nlohmann::json::parse(text);
    ProbeModel m;
    m.weights = from_std(j.at("weights").get<std::vector<double>>());
    m.bias = j.at("bias").get<double>();
    m.standardizer.mean = from_std(j.at("standardizer").at("mean").get<std::vector<double>>());
    m.standardizer.scale =
        from_std(j.at("standardizer").at("scale").get<std::vector<double>>());
    const auto& c = j.at("config");
    m.config.l2_lambda = c.at("l2_lambda").get<double>();
    m.config.tol = c.at("tol").get<double>();
    m.config.max_iter = c.at("max_iter").get<int>();
    m.config.class_weighting = c.at("class_weighting").get<std::string>() == "balanced"
                                   ? ClassWeighting::BalancedInverseFrequency
                                   : ClassWeighting::None;
    m.config.seed = c.at("seed").get<std::uint64_t>();
    m.converged = j.at("converged").get<bool>();
    m.n_iterations = j.at("n_iterations").get<int>();
    m.final_objective = j.value("final_objective", 0.0);
    if (m.weights.size() != m.standardizer.mean.size() ||
        m.weights.size() != m.standardizer.scale.size()) {
      throw Error("probe JSON: inconsistent dimensions");
    }
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw Error(std::string("probe JSON: ") + e.what());
  }
}

}  // namespace layerprobe
