#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "qadistill/numerics/gradcheck.hpp"

namespace qadistill {

struct GradientCase {
  std::string name;
  GradCheckReport report;
};

// Every loss, and the joint objective, differentiated through the reader on a
// 6-token passage with a 3-token question and checked against central
// differences over all parameter groups.
std::vector<GradientCase> run_gradient_suite(std::uint64_t seed, const GradCheckOptions& options = {});

}  // namespace qadistill
