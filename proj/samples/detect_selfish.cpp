/*
 * Copyright 2026 The runwatch Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

// Simulates one window with a selfish miner, tests every miner in it and
// prints the attacker's statistics next to the critical run count.

#include <iostream>

#include "runwatch/detect.hpp"
#include "runwatch/simkit.hpp"

int main() {
  const auto sim = runwatch::simulate_selfish({0.35, 0.5, 5000, 42});
  runwatch::Window window;
  window.sequence = sim.sequence;

  for (const auto& r : runwatch::test_window(window, 0.05)) {
    if (r.miner != "attacker") continue;
    const auto c_star = runwatch::critical_count(r.h_hat, r.length, 0.05);
    std::cout << "attacker share " << r.h_hat << ", runs " << r.c << " (critical " << c_star << "), p " << r.p
              << ", adjusted " << r.p_adj << (r.flagged ? ", flagged" : ", not flagged") << "\n";
  }
}
