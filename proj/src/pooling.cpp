#include "layerprobe/pooling.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <limits>

#include "layerprobe/error.hpp"

namespace layerprobe {

PoolingStrategy PoolingStrategy::mellowmax(double omega) {
  if (omega == 0.0 || !std::isfinite(omega)) {
    throw Error("mellowmax omega must be finite and nonzero (use mean for omega = 0)");
  }
  return PoolingStrategy(Kind::Mellowmax, omega);
}

PoolingStrategy PoolingStrategy::parse(const std::string& text) {
  if (text == "min") return min();
  if (text == "mean") return mean();
  if (text == "max") return max();
  if (text.rfind("mm:", 0) == 0) {
    const char* first = text.data() + 3;
    const char* last = text.data() + text.size();
    double omega = 0.0;
    auto [ptr, ec] = std::from_chars(first, last, omega);
    if (ec != std::errc() || ptr != last || first == last) {
      throw Error("bad mellowmax parameter in '" + text + "'");
    }
    return mellowmax(omega);
  }
  throw Error("unknown pooling '" + text + "' (expected min|mean|max|mm:<omega>)");
}

std::string PoolingStrategy::to_string() const {
  switch (kind_) {
    case Kind::Min:
      return "min";
    case Kind::Mean:
      return "mean";
    case Kind::Max:
      return "max";
    case Kind::Mellowmax: {
      char buf[32];
      auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), omega_);
      return "mm:" + std::string(buf, ptr);
    }
  }
  return {};
}

double PoolingStrategy::order_key() const {
  switch (kind_) {
    case Kind::Min:
      return -std::numeric_limits<double>::infinity();
    case Kind::Mean:
      return 0.0;
    case Kind::Max:
      return std::numeric_limits<double>::infinity();
    case Kind::Mellowmax:
      return omega_;
  }
  return 0.0;
}

double mellowmax(std::span<const double> x, double omega) {
  if (x.empty()) throw Error("mellowmax of an empty vector");
  if (omega == 0.0 || !std::isfinite(omega)) {
    throw Error("mellowmax omega must be finite and nonzero");
  }
  const auto [lo_it, hi_it] = std::minmax_element(x.begin(), x.end());
  const double lo = *lo_it;
  const double hi = *hi_it;
  const double anchor = omega > 0.0 ? hi : lo;

  // (1/n) sum exp(a_i) = 1 + (1/n) sum expm1(a_i), with every a_i <= 0.
  double acc = 0.0;
  for (double v : x) acc += std::expm1(omega * (v - anchor));
  const double mean_expm1 = acc / static_cast<double>(x.size());
  const double result = anchor + std::log1p(mean_expm1) / omega;
  if (!std::isfinite(result)) return omega > 0.0 ? hi : lo;
  return std::clamp(result, lo, hi);
}

double pool(std::span<const double> scores, const PoolingStrategy& strategy) {
  if (scores.empty()) throw Error("pooling an empty score list");
  switch (strategy.kind()) {
    case PoolingStrategy::Kind::Min:
      return *std::min_element(scores.begin(), scores.end());
    case PoolingStrategy::Kind::Max:
      return *std::max_element(scores.begin(), scores.end());
    case PoolingStrategy::Kind::Mean: {
      double sum = 0.0;
      for (double s : scores) sum += s;
      return sum / static_cast<double>(scores.size());
    }
    case PoolingStrategy::Kind::Mellowmax:
      return mellowmax(scores, strategy.omega());
  }
  return 0.0;
}

}  // namespace layerprobe
