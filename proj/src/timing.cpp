#include "hierloc/timing.hpp"

namespace hierloc {

double time_stage(const std::function<void()>& thunk) {
  const auto t0 = std::chrono::steady_clock::now();
  thunk();
  const auto t1 = std::chrono::steady_clock::now();
  return std::chrono::duration<double, std::milli>(t1 - t0).count();
}

StageStats stats_of(const std::vector<double>& samples_ms) {
  StageStats s;
  s.count = static_cast<int>(samples_ms.size());
  if (samples_ms.empty()) return s;
  double acc = 0.0;
  for (const double v : samples_ms) acc += v;
  s.mean_ms = acc / static_cast<double>(samples_ms.size());
  double var = 0.0;
  for (const double v : samples_ms) var += (v - s.mean_ms) * (v - s.mean_ms);
  s.std_ms = std::sqrt(var / static_cast<double>(samples_ms.size()));
  return s;
}

StageStats time_repeated(int reps, const std::function<void()>& thunk) {
  std::vector<double> samples;
  samples.reserve(static_cast<std::size_t>(reps));
  for (int i = 0; i < reps; ++i) samples.push_back(time_stage(thunk));
  return stats_of(samples);
}

}  // namespace hierloc
