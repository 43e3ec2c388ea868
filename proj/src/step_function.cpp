#include "bridge/step_function.hpp"

#include <algorithm>
#include <numeric>
#include <stdexcept>

namespace bridge {

StepFunction::StepFunction(std::vector<double> jump_times, std::vector<double> values,
                           double value_at_zero)
    : jump_times_(std::move(jump_times)), values_(std::move(values)), value_at_zero_(value_at_zero) {
  if (jump_times_.size() != values_.size()) {
    throw std::invalid_argument("StepFunction: jump_times and values differ in length");
  }
  for (std::size_t i = 1; i < jump_times_.size(); ++i) {
    if (!(jump_times_[i - 1] < jump_times_[i])) {
      throw std::invalid_argument("StepFunction: jump times must be strictly increasing");
    }
  }
}

StepFunction StepFunction::from_increments(std::span<const double> times,
                                           std::span<const double> increments,
                                           double value_at_zero) {
  if (times.size() != increments.size()) {
    throw std::invalid_argument("StepFunction: times and increments differ in length");
  }
  std::vector<std::size_t> order(times.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return times[a] < times[b]; });

  std::vector<double> jt;
  std::vector<double> vals;
  double level = value_at_zero;
  for (std::size_t k = 0; k < order.size();) {
    const double t = times[order[k]];
    while (k < order.size() && times[order[k]] == t) {
      level += increments[order[k]];
      ++k;
    }
    jt.push_back(t);
    vals.push_back(level);
  }
  return StepFunction(std::move(jt), std::move(vals), value_at_zero);
}

double StepFunction::operator()(double t) const {
  auto it = std::upper_bound(jump_times_.begin(), jump_times_.end(), t);
  if (it == jump_times_.begin()) return value_at_zero_;
  return values_[static_cast<std::size_t>(it - jump_times_.begin()) - 1];
}

double StepFunction::left_limit(double t) const {
  auto it = std::lower_bound(jump_times_.begin(), jump_times_.end(), t);
  if (it == jump_times_.begin()) return value_at_zero_;
  return values_[static_cast<std::size_t>(it - jump_times_.begin()) - 1];
}

bool StepFunction::is_nondecreasing() const {
  double prev = value_at_zero_;
  for (double v : values_) {
    if (v < prev) return false;
    prev = v;
  }
  return true;
}

std::vector<double> union_grid(std::span<const double> a, std::span<const double> b) {
  std::vector<double> out;
  out.reserve(a.size() + b.size());
  std::set_union(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(out));
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

std::vector<double> union_grid(const StepFunction& a, const StepFunction& b) {
  return union_grid(std::span<const double>(a.jump_times()), std::span<const double>(b.jump_times()));
}

}  // namespace bridge
