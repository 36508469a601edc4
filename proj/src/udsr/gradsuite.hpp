#pragma once

// The full finite-difference verification suite covering every tape op and
// every loss. Shared by the `gradcheck` CLI subcommand, unit tests and the
// acceptance suite.

#include <ostream>
#include <string>
#include <vector>

namespace udsr {

struct GradSuiteEntry {
  std::string name;
  double max_rel_err = 0.0;
  long checked = 0;
  long skipped = 0;
};

std::vector<GradSuiteEntry> run_gradient_suite();

// Prints one line per check; returns the suite-wide maximum relative error.
double gradient_suite_max_err(std::ostream* os);

}  // namespace udsr
