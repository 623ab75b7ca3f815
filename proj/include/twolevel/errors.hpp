#pragma once

#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace twolevel {

/// Base class of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class PointOutsideMesh : public Error {
 public:
  explicit PointOutsideMesh(std::vector<double> point)
      : Error(describe(point)), point_(std::move(point)) {}

  const std::vector<double>& point() const noexcept { return point_; }

 private:
  static std::string describe(const std::vector<double>& p) {
    std::ostringstream os;
    os << "point outside mesh: (";
    for (std::size_t i = 0; i < p.size(); ++i) os << (i ? ", " : "") << p[i];
    os << ")";
    return os.str();
  }
  std::vector<double> point_;
};

class LocalDomainEscapes : public Error {
 public:
  using Error::Error;
};

/// Iterative linear solver did not reach the requested residual.
class LinearSolverDivergence : public Error {
 public:
  LinearSolverDivergence(int iterations, double residual)
      : Error("linear solver did not converge after " + std::to_string(iterations) +
              " iterations (relative residual " + std::to_string(residual) + ")"),
        iterations_(iterations),
        residual_(residual) {}
  int iterations() const noexcept { return iterations_; }
  double residual() const noexcept { return residual_; }

 private:
  int iterations_;
  double residual_;
};

class PicardDivergence : public Error {
 public:
  PicardDivergence(int iterations, double increment)
      : Error("Picard iteration did not converge after " + std::to_string(iterations) +
              " iterations (last relative increment " + std::to_string(increment) + ")"),
        increment_(increment) {}
  double increment() const noexcept { return increment_; }

 private:
  double increment_;
};

class CouplingDivergence : public Error {
 public:
  CouplingDivergence(int iterations, double change)
      : Error("two-level coupling did not converge after " + std::to_string(iterations) +
              " iterations (last relative trace change " + std::to_string(change) + ")"),
        change_(change) {}
  double change() const noexcept { return change_; }

 private:
  double change_;
};

class TimeOutOfRange : public Error {
 public:
  explicit TimeOutOfRange(double t) : Error("time " + std::to_string(t) + " s lies outside the scan path") {}
};

class ConfigError : public Error {
 public:
  ConfigError(const std::string& file, int line, const std::string& key, const std::string& what)
      : Error(file + ":" + std::to_string(line) + (key.empty() ? "" : " [" + key + "]") + ": " +
              what) {}
};

class ValidationError : public Error {
 public:
  using Error::Error;
};

}  // namespace twolevel
