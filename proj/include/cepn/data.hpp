#pragma once

#include <string>
#include <vector>

#include "cepn/tensor.hpp"

namespace cepn {

struct SurvivalLabel {
  double time = 0.0;  // months
  int event = 0;      // 1 = death observed, 0 = censored
};

// One patient: three contrast phases of a 3-channel volume plus outcome labels.
struct Patient {
  std::string id;
  Tensor volume;  // [phases, channels, z, y, x]
  SurvivalLabel survival;
  int margin = 0;  // 1 = R1 (positive resection margin)
};

using Cohort = std::vector<Patient>;

}  // namespace cepn
