#pragma once

#include <span>
#include <vector>

namespace bridge {

// Right-continuous piecewise-constant function of time. f(t) is the value at
// the largest jump time <= t, or value_at_zero before the first jump.
class StepFunction {
 public:
  StepFunction() = default;
  // jump_times must be strictly increasing and the same length as values.
  StepFunction(std::vector<double> jump_times, std::vector<double> values,
               double value_at_zero = 0.0);

  // Builds a cumulative function from (time, increment) pairs; tied times are
  // merged and increments summed.
  static StepFunction from_increments(std::span<const double> times,
                                      std::span<const double> increments,
                                      double value_at_zero = 0.0);

  double operator()(double t) const;
  // lim_{s -> t-} f(s)
  double left_limit(double t) const;

  const std::vector<double>& jump_times() const noexcept { return jump_times_; }
  const std::vector<double>& values() const noexcept { return values_; }
  double value_at_zero() const noexcept { return value_at_zero_; }
  bool empty() const noexcept { return jump_times_.empty(); }

  bool is_nondecreasing() const;

 private:
  std::vector<double> jump_times_;
  std::vector<double> values_;
  double value_at_zero_ = 0.0;
};

// Sorted union of the jump times of both functions.
std::vector<double> union_grid(const StepFunction& a, const StepFunction& b);
std::vector<double> union_grid(std::span<const double> a, std::span<const double> b);

}  // namespace bridge
