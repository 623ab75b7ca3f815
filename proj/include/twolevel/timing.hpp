#pragma once

#include <chrono>
#include <map>
#include <string>

namespace twolevel {

class Stopwatch {
 public:
  Stopwatch() : start_(std::chrono::steady_clock::now()) {}
  double seconds() const { return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count(); }

 private:
  std::chrono::steady_clock::time_point start_;
};

/// Wall-clock totals and counts per phase ("global", "local", "predictor", ...).
struct TimingReport {
  struct Entry {
    double seconds = 0.0;
    long count = 0;
  };
  std::map<std::string, Entry> phases;

  void add(const std::string& phase, double seconds, long count = 1) {
    auto& e = phases[phase];
    e.seconds += seconds;
    e.count += count;
  }
  double seconds(const std::string& phase) const {
    auto it = phases.find(phase);
    return it == phases.end() ? 0.0 : it->second.seconds;
  }
  long count(const std::string& phase) const {
    auto it = phases.find(phase);
    return it == phases.end() ? 0 : it->second.count;
  }
};

}  // namespace twolevel
