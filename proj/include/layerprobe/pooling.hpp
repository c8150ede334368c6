#pragma once

#include <span>
#include <string>

namespace layerprobe {

// Reduction of per-window scores to a recording score. Mellowmax carries its
// temperature omega; omega == 0 is not representable (that limit is Mean).
class PoolingStrategy {
 public:
  enum class Kind { Min, Mean, Max, Mellowmax };

  static PoolingStrategy min() { return PoolingStrategy(Kind::Min, 0.0); }
  static PoolingStrategy mean() { return PoolingStrategy(Kind::Mean, 0.0); }
  static PoolingStrategy max() { return PoolingStrategy(Kind::Max, 0.0); }
  static PoolingStrategy mellowmax(double omega);

  // "min" | "mean" | "max" | "mm:<omega>"
  static PoolingStrategy parse(const std::string& text);
  std::string to_string() const;

  Kind kind() const { return kind_; }
  double omega() const { return omega_; }

  // Position on the min..max continuum, used for ordering result rows:
  // min < mm:-big < ... < mean < ... < mm:+big < max.
  double order_key() const;

  friend bool operator==(const PoolingStrategy&, const PoolingStrategy&) = default;

 private:
  PoolingStrategy(Kind kind, double omega) : kind_(kind), omega_(omega) {}
  Kind kind_;
  double omega_;
};

// mm_omega(x) = (1/omega) * log((1/n) * sum_i exp(omega * x_i)), evaluated
// around the extreme element so that no exponential exceeds 1. The result is
// clamped to [min(x), max(x)].
double mellowmax(std::span<const double> x, double omega);

double pool(std::span<const double> scores, const PoolingStrategy& strategy);

}  // namespace layerprobe
