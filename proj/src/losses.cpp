/* Copyright 2026 The et-desk Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

#include "et/losses.hpp"

#include <numeric>
#include <sstream>

namespace et {

void Thresholds::validate() const {
  if (tau1.size() != tau2.size() || tau1.empty()) throw ConfigError("threshold vectors malformed");
  for (std::size_t c = 0; c < tau1.size(); ++c) {
    if (!(tau1[c] >= 0.0 && tau1[c] < tau2[c] && tau2[c] <= 1.0)) {
      std::ostringstream os;
      os << "class " << c << ": thresholds must satisfy 0 <= tau1 < tau2 <= 1 (got tau1=" << tau1[c]
         << ", tau2=" << tau2[c] << ")";
      throw ConfigError(os.str());
    }
  }
}

double Thresholds::mean_tau1() const {
  return tau1.empty() ? 0.0 : std::accumulate(tau1.begin(), tau1.end(), 0.0) / tau1.size();
}

double Thresholds::mean_tau2() const {
  return tau2.empty() ? 0.0 : std::accumulate(tau2.begin(), tau2.end(), 0.0) / tau2.size();
}

ObjBranch objectness_branch(double p, double tau1, double tau2) {
  const bool background = p <= tau1;
  const bool reliable = p >= tau2;
  const bool soft = tau1 < p && p < tau2;
  if (background + reliable + soft != 1) {
    std::ostringstream os;
    os << "objectness indicators overlap or vanish for p=" << p << " (tau1=" << tau1
       << ", tau2=" << tau2 << ")";
    throw InvariantError(os.str());
  }
  if (reliable) return ObjBranch::kReliable;
  return soft ? ObjBranch::kSoft : ObjBranch::kBackground;
}

}  // namespace et
