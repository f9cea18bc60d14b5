#pragma once

#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace mfreg {

  /// Base of every error raised by the library.
  class Error : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
  };

  /// Malformed arguments: mismatched grids or dimensions, empty samples, out-of-domain times.
  class InvalidInput : public Error {
  public:
    using Error::Error;
  };

  /// A value that should satisfy a type invariant (e.g. warp coefficients) does not.
  class InvariantViolation : public Error {
  public:
    using Error::Error;
  };

  /// An iterative routine gave up. `last_iterate` holds the flattened state it stopped at.
  class NumericalFailure : public Error {
  public:
    NumericalFailure(const std::string& what, std::vector<double> last_iterate = {})
      : Error(what), last_iterate_(std::move(last_iterate)) {}

    [[nodiscard]] const std::vector<double>& last_iterate() const noexcept { return last_iterate_; }

  private:
    std::vector<double> last_iterate_;
  };

  /// The local kernel variance at `t` vanished: too few design points inside the window.
  class DegenerateWindow : public Error {
  public:
    DegenerateWindow(double t, double bandwidth)
      : Error("degenerate kernel window at t=" + std::to_string(t) + " with bandwidth " + std::to_string(bandwidth)),
        t_(t), bandwidth_(bandwidth) {}

    [[nodiscard]] double t() const noexcept { return t_; }
    [[nodiscard]] double bandwidth() const noexcept { return bandwidth_; }

  private:
    double t_;
    double bandwidth_;
  };

} // namespace mfreg
