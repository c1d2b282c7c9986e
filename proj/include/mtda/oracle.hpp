#pragma once

// Exact labeling oracle: enumerate binary offload vectors, solve the convex
// server-share subproblem for each in closed form.

#include <optional>

#include "mtda/mec_model.hpp"

namespace mtda {

inline constexpr int kMaxExhaustiveUsers = 20;
inline constexpr int kMaxGridUsers = 4;

struct OffloadSolution {
  OffloadDecision decision;
  Allocation alloc;
  double cost = 0.0;
  bool feasible = false;
};

struct AllocationResult {
  Allocation alloc;
  double cost = 0.0;
  // Users whose share sits on its latency lower bound.
  std::vector<std::uint8_t> at_lower_bound;

  bool any_lower_bound_active() const;
};

// Minimizes total cost over server shares for a fixed decision. Offloaded user n
// pays k_n / nu_n for execution; shares follow nu_n proportional to sqrt(k_n),
// clamped from below by the latency budget. Empty when the decision cannot meet
// C2 (for local or offloaded users) within the server budget.
std::optional<AllocationResult> allocate_optimal(const ScenarioInstance& scn,
                                                 const OffloadDecision& dec);

// Throws InfeasibleScenario when no decision is feasible.
OffloadSolution solve_exhaustive(const ScenarioInstance& scn);

// Brute-force validation solver over a share grid of resolution `step`.
OffloadSolution solve_grid(const ScenarioInstance& scn, double step);

}  // namespace mtda
