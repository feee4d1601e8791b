#pragma once

#include <chrono>
#include <string>
#include <utility>
#include <vector>

namespace ddsc {

/// Ordered (stage, wall seconds) list; repeated stage names accumulate.
struct StageTimings {
  std::vector<std::pair<std::string, double>> stages;

  void add(const std::string& name, double seconds) {
    for (auto& [n, s] : stages)
      if (n == name) {
        s += seconds;
        return;
      }
    stages.emplace_back(name, seconds);
  }

  double total() const {
    double t = 0.0;
    for (const auto& [n, s] : stages) t += s;
    return t;
  }

  double get(const std::string& name) const {
    for (const auto& [n, s] : stages)
      if (n == name) return s;
    return 0.0;
  }
};

/// Runs op() and returns {result, wall seconds} on a monotonic clock.
template <class Op>
auto timed(Op&& op) {
  const auto start = std::chrono::steady_clock::now();
  auto result = std::forward<Op>(op)();
  const std::chrono::duration<double> dt = std::chrono::steady_clock::now() - start;
  return std::pair{std::move(result), dt.count()};
}

/// Same, recording the elapsed time under `name`.
template <class Op>
auto timed(StageTimings& timings, const std::string& name, Op&& op) {
  auto [result, seconds] = timed(std::forward<Op>(op));
  timings.add(name, seconds);
  return std::move(result);
}

}  // namespace ddsc
