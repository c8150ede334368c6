#pragma once

#include <cstddef>
#include <vector>

#include "layerprobe/embedding.hpp"

namespace layerprobe {

// Half-open time span [start_s, end_s).
struct Interval {
  double start_s = 0.0;
  double end_s = 0.0;
  double length() const { return end_s - start_s; }
  friend bool operator==(const Interval&, const Interval&) = default;
};

struct WindowPlan {
  double window_s = 0.0;
  double hop_s = 0.0;
  std::vector<Interval> intervals;
  // Set when the recording is shorter than one window and the plan falls back
  // to the whole recording.
  bool degenerate = false;
};

struct WindowEmbedding {
  Interval interval;
  std::vector<double> vector;
  std::size_t n_frames_used = 0;
  // No frame start fell inside the interval; the nearest frame was used.
  bool nearest_frame_fallback = false;
};

// Intervals [i*hop, i*hop + window) for every i with i*hop + window <= duration.
// Trailing audio shorter than a window is dropped.
WindowPlan plan_windows(double duration_s, double window_s, double hop_s);

// Number of full windows, floor((duration - window) / hop) + 1, or 0 when the
// recording is shorter than a window.
std::size_t window_count(double duration_s, double window_s, double hop_s);

// Mean of the frames whose start time f / frame_hz lies in the interval.
WindowEmbedding window_embedding(const EmbeddingSequence& seq, const Interval& interval);

// Central interval, index floor((n - 1) / 2).
Interval middle_window(const WindowPlan& plan);
std::size_t middle_index(std::size_t n_windows);

// Half-overlapping windows (hop = window / 2) over the whole sequence.
std::vector<WindowEmbedding> windows_for_recording(const EmbeddingSequence& seq,
                                                   double window_s);

}  // namespace layerprobe
