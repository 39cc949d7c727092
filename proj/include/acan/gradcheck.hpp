#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

namespace acan {

struct GradCheckReport {
  std::string op_name;
  double max_relative_error = 0.0;
  double step = 0.0;
  bool passed = false;
};

// Compares `analytic_grad` against central finite differences of `f` at
// `point`. Relative error per coordinate uses max(|fd|, |analytic|, 1e-8) as
// the denominator; the report carries the max over coordinates. Throws if f is
// non-finite at any probe point.
GradCheckReport finite_difference_check(
    const std::function<double(std::span<const double>)>& f,
    std::span<const double> analytic_grad, std::span<const double> point, double step,
    double tolerance, const std::string& op_name);

// Runs the named checks covering every analytic gradient in the project:
// linear layers, the ReLU MLP, softmax cross-entropy, OCE, ACE, the triplet
// loss at mining-stable points, and the GRL-reversed generator objective.
// `instances` random instances per check, all derived from `seed`.
std::vector<GradCheckReport> run_gradcheck_suite(std::uint64_t seed, double tolerance,
                                                 int instances = 10, double step = 1e-5);

bool all_passed(const std::vector<GradCheckReport>& reports);

}  // namespace acan
