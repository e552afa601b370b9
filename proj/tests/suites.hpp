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

#pragma once

// Randomized check batteries shared by the unit tests (few instances) and the
// acceptance runner (full counts).

#include <cstdint>
#include <string>
#include <vector>

namespace et::testing {

struct GradResult {
  std::string name;
  int instances = 0;
  double max_rel_error = 0.0;
  int skipped = 0;  // coordinates sitting on an activation kink
};

/// Central-difference checks of every differentiable operation and loss, 64-bit.
std::vector<GradResult> gradient_suite(int instances, std::uint64_t seed);

struct OracleResult {
  std::string name;
  int cases = 0;
  int mismatches = 0;
};

OracleResult nms_oracle_suite(int cases, std::uint64_t seed);
OracleResult pla_oracle_suite(int cases, std::uint64_t seed);
OracleResult threshold_oracle_suite(int cases, std::uint64_t seed);
OracleResult ap_oracle_suite(int cases, std::uint64_t seed);

struct SweepResult {
  long combinations = 0;
  long violations = 0;
};

/// Every (score, tau1, tau2) on the grids activates exactly one objectness
/// branch, both at the rule level and inside the assembled loss.
SweepResult branch_sweep(int score_steps, int tau_steps);

struct EmaResult {
  double grl_max_abs_error = 0.0;       // |backward - (-lambda * g)|
  double decay_max_step_error = 0.0;    // | ||t_k - s|| - m^k ||t_0 - s|| |
  double shrink_factor = 0.0;           // ||t_0 - s|| / ||t_K - s|| at m = 0.999
  int steps = 0;
};

EmaResult grl_ema_suite(std::uint64_t seed);

}  // namespace et::testing
