#pragma once

#include <chrono>
#include <cmath>
#include <functional>
#include <vector>

namespace hierloc {

/// Monotonic wall time of one call, in milliseconds.
double time_stage(const std::function<void()>& thunk);

struct StageStats {
  double mean_ms = 0.0;
  double std_ms = 0.0;
  int count = 0;
};

StageStats stats_of(const std::vector<double>& samples_ms);

/// Runs the thunk `reps` times and reports mean and standard deviation.
StageStats time_repeated(int reps, const std::function<void()>& thunk);

}  // namespace hierloc
