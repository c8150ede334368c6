#include "layerprobe/windowing.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "layerprobe/error.hpp"

namespace layerprobe {

namespace {

bool fits(std::size_t i, double duration_s, double window_s, double hop_s) {
  return static_cast<double>(i) * hop_s + window_s <= duration_s;
}

void check_positive(double v, const char* name) {
  if (!(v > 0.0) || !std::isfinite(v)) {
    throw Error(std::string(name) + " must be positive and finite");
  }
}

// First frame index f with f / hz >= t (frames are points at their start time).
std::size_t first_frame_at_or_after(double t, double hz, std::size_t n) {
  if (t <= 0.0) return 0;
  auto f = static_cast<std::size_t>(std::min(std::ceil(t * hz), static_cast<double>(n)));
  while (f > 0 && static_cast<double>(f - 1) / hz >= t) --f;
  while (f < n && static_cast<double>(f) / hz < t) ++f;
  return f;
}

}  // namespace

std::size_t window_count(double duration_s, double window_s, double hop_s) {
  check_positive(duration_s, "duration_s");
  check_positive(window_s, "window_s");
  check_positive(hop_s, "hop_s");
  if (duration_s < window_s) return 0;
  auto n = static_cast<std::size_t>(std::floor((duration_s - window_s) / hop_s)) + 1;
  // Settle rounding at the boundary against the defining predicate.
  while (fits(n, duration_s, window_s, hop_s)) ++n;
  while (n > 0 && !fits(n - 1, duration_s, window_s, hop_s)) --n;
  return n;
}

WindowPlan plan_windows(double duration_s, double window_s, double hop_s) {
  check_positive(duration_s, "duration_s");
  check_positive(window_s, "window_s");
  check_positive(hop_s, "hop_s");
  if (hop_s > window_s) throw Error("hop_s must not exceed window_s");

  WindowPlan plan{window_s, hop_s, {}, false};
  const std::size_t n = window_count(duration_s, window_s, hop_s);
  if (n == 0) {
    plan.intervals.push_back({0.0, duration_s});
    plan.degenerate = true;
    return plan;
  }
  plan.intervals.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double start = static_cast<double>(i) * hop_s;
    plan.intervals.push_back({start, start + window_s});
  }
  return plan;
}

WindowEmbedding window_embedding(const EmbeddingSequence& seq, const Interval& interval) {
  const std::size_t n = seq.n_frames();
  if (n == 0) throw Error("window_embedding on an empty sequence");
  const double hz = seq.frame_hz();
  if (!(interval.end_s > 0.0) || !(interval.start_s < seq.duration_s()) ||
      !(interval.end_s > interval.start_s)) {
    throw Error("interval does not overlap the recording");
  }

  const std::size_t lo = first_frame_at_or_after(interval.start_s, hz, n);
  const std::size_t hi = first_frame_at_or_after(interval.end_s, hz, n);

  WindowEmbedding out;
  out.interval = interval;
  out.vector.assign(seq.dim(), 0.0);
  if (hi > lo) {
    for (std::size_t f = lo; f < hi; ++f) {
      const auto frame = seq.frame(f);
      for (std::size_t d = 0; d < frame.size(); ++d) out.vector[d] += frame[d];
    }
    const auto count = static_cast<double>(hi - lo);
    for (auto& v : out.vector) v /= count;
    out.n_frames_used = hi - lo;
    return out;
  }

  const double mid = 0.5 * (interval.start_s + interval.end_s);
  const double nearest = std::clamp(std::round(mid * hz), 0.0, static_cast<double>(n - 1));
  const auto frame = seq.frame(static_cast<std::size_t>(nearest));
  std::copy(frame.begin(), frame.end(), out.vector.begin());
  out.n_frames_used = 1;
  out.nearest_frame_fallback = true;
  return out;
}

std::size_t middle_index(std::size_t n_windows) {
  return n_windows == 0 ? 0 : (n_windows - 1) / 2;
}

Interval middle_window(const WindowPlan& plan) {
  if (plan.intervals.empty()) throw Error("middle_window of an empty plan");
  return plan.intervals[middle_index(plan.intervals.size())];
}

std::vector<WindowEmbedding> windows_for_recording(const EmbeddingSequence& seq,
                                                   double window_s) {
  const WindowPlan plan = plan_windows(seq.duration_s(), window_s, window_s / 2.0);
  std::vector<WindowEmbedding> out;
  out.reserve(plan.intervals.size());
  for (const auto& interval : plan.intervals) {
    out.push_back(window_embedding(seq, interval));
  }
  return out;
}

}  // namespace layerprobe
