#pragma once

#include <functional>
#include <iosfwd>
#include <vector>

#include "refvos/model.hpp"
#include "refvos/oracles.hpp"

namespace refvos {
namespace selfcheck {

struct CheckResult {
  std::string name;
  bool pass = false;
  double value = 0.0;  // worst mismatch or measured quantity
  std::string detail;
};

// Micro model: every width shrunk so the whole parameter set stays under 2k
// values and finite-difference sweeps finish in seconds.
RunConfig micro_run_config();

struct MicroCase {
  ClipInput input;
  std::vector<ObjectTarget> targets;
};
MicroCase micro_case(const RunConfig& cfg, std::uint64_t seed);

// Worst relative finite-difference mismatch over every element of `inputs`
// (step 1e-5, central differences, absolute floor 1e-7). loss_fn must be a
// pure function of the input values.
double max_fd_mismatch(const std::vector<Tensor>& inputs, const std::function<Tensor()>& loss_fn,
                       double step = 1e-5, double abs_floor = 1e-7);

// Per-op gradient checks against central finite differences (64-bit mode).
std::vector<CheckResult> gradient_suite(std::uint64_t seed = 0);

// Full-model gradient check on the micro configuration with a frozen
// assignment; fills param_count when given.
CheckResult end_to_end_gradient_check(std::uint64_t seed = 0, double tol = 1e-3,
                                      std::size_t* param_count = nullptr);

// Assignment/metric/box oracles on randomized instances (reduced sizes).
std::vector<CheckResult> oracle_suite(std::uint64_t seed = 0);

// Runs everything, prints one line per check; true when all pass.
bool run_all(std::ostream& log);

}  // namespace selfcheck
}  // namespace refvos
