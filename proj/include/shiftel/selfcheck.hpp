#pragma once

#include <string>
#include <vector>

namespace shiftel {

struct CheckResult
{
  std::string name;
  bool passed = false;
  std::string detail;
};

//! Fast invariant and contract checks over every module.
std::vector<CheckResult> run_selfcheck();

} // namespace shiftel
