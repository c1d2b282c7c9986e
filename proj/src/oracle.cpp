#include "mtda/oracle.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <string>

#include "mtda/errors.hpp"

namespace mtda {

namespace {

// Decisions in tie-break order: fewer offloads first, then lexicographically
// smallest V (bit n-1-i of the mask is V_i).
std::vector<std::uint32_t> decision_order(int n_users) {
  std::vector<std::uint32_t> masks(std::size_t{1} << n_users);
  std::iota(masks.begin(), masks.end(), 0u);
  std::stable_sort(masks.begin(), masks.end(), [](std::uint32_t a, std::uint32_t b) {
    const int pa = std::popcount(a);
    const int pb = std::popcount(b);
    return pa != pb ? pa < pb : a < b;
  });
  return masks;
}

OffloadDecision decision_from_mask(std::uint32_t mask, int n_users) {
  OffloadDecision dec;
  dec.v.resize(n_users);
  for (int i = 0; i < n_users; ++i) {
    dec.v[i] = static_cast<std::uint8_t>((mask >> (n_users - 1 - i)) & 1u);
  }
  return dec;
}

bool strictly_better(double candidate, double incumbent) {
  return candidate < incumbent - 1e-12 * std::max(1.0, std::abs(incumbent));
}

bool locals_meet_latency(const ScenarioInstance& scn, const OffloadDecision& dec) {
  for (int n = 0; n < scn.size(); ++n) {
    if (dec.v[n] == 0 &&
        local_latency(scn.users[n].profile, scn.users[n].job) > scn.users[n].job.theta + kConstraintTol) {
      return false;
    }
  }
  return true;
}

// Latency slack left for server execution after transfers.
double exec_slack(const UserSlot& u) {
  return u.job.theta - u.job.s / u.link.u - u.job.w / u.link.d;
}

}  // namespace

bool AllocationResult::any_lower_bound_active() const {
  return std::any_of(at_lower_bound.begin(), at_lower_bound.end(),
                     [](std::uint8_t b) { return b != 0; });
}

std::optional<AllocationResult> allocate_optimal(const ScenarioInstance& scn,
                                                 const OffloadDecision& dec) {
  const int n_users = scn.size();
  if (static_cast<int>(dec.v.size()) != n_users) {
    throw DimensionMismatch("decision length does not match user count");
  }
  if (!locals_meet_latency(scn, dec)) return std::nullopt;

  const double beta = scn.env.beta_cost;
  const double budget = scn.env.f_server;

  std::vector<int> offloaded;
  for (int n = 0; n < n_users; ++n) {
    if (dec.v[n] == 1) offloaded.push_back(n);
  }

  AllocationResult res;
  res.alloc.r.assign(n_users, 0.0);
  res.at_lower_bound.assign(n_users, 0);

  if (!offloaded.empty()) {
    std::vector<double> sqrt_k(n_users, 0.0);
    std::vector<double> nu_min(n_users, 0.0);
    double min_total = 0.0;
    for (int n : offloaded) {
      const UserSlot& u = scn.users[n];
      const double slack = exec_slack(u);
      if (!(slack > 0.0)) return std::nullopt;
      nu_min[n] = u.job.gamma / slack;
      min_total += nu_min[n];
      sqrt_k[n] = std::sqrt(offload_exec_coeff(u.profile, u.job, beta));
    }
    if (min_total > budget * (1.0 + 1e-12)) return std::nullopt;

    std::vector<double> nu(n_users, 0.0);
    std::vector<int> free_set = offloaded;
    double residual = budget;
    while (!free_set.empty()) {
      double weight = 0.0;
      for (int n : free_set) weight += sqrt_k[n];
      for (int n : free_set) {
        nu[n] = weight > 0.0 ? residual * sqrt_k[n] / weight
                             : residual / static_cast<double>(free_set.size());
      }
      std::vector<int> still_free;
      for (int n : free_set) {
        if (nu[n] < nu_min[n]) {
          nu[n] = nu_min[n];
          residual -= nu_min[n];
          res.at_lower_bound[n] = 1;
        } else {
          still_free.push_back(n);
        }
      }
      if (still_free.size() == free_set.size()) break;
      free_set = std::move(still_free);
    }
    for (int n : offloaded) res.alloc.r[n] = nu[n] / budget;
  }

  res.cost = total_cost(scn, dec, res.alloc);
  return res;
}

OffloadSolution solve_exhaustive(const ScenarioInstance& scn) {
  const int n_users = scn.size();
  if (n_users < 1 || n_users > kMaxExhaustiveUsers) {
    throw InvalidParameter("exhaustive search supports 1.." + std::to_string(kMaxExhaustiveUsers) +
                           " users");
  }
  OffloadSolution best;
  best.cost = std::numeric_limits<double>::infinity();
  for (std::uint32_t mask : decision_order(n_users)) {
    OffloadDecision dec = decision_from_mask(mask, n_users);
    auto res = allocate_optimal(scn, dec);
    if (!res) continue;
    if (!best.feasible || strictly_better(res->cost, best.cost)) {
      best.decision = std::move(dec);
      best.alloc = std::move(res->alloc);
      best.cost = res->cost;
      best.feasible = true;
    }
  }
  if (!best.feasible) throw InfeasibleScenario("no feasible offloading decision");
  return best;
}

OffloadSolution solve_grid(const ScenarioInstance& scn, double step) {
  const int n_users = scn.size();
  if (n_users < 1 || n_users > kMaxGridUsers) {
    throw InvalidParameter("grid search supports 1.." + std::to_string(kMaxGridUsers) + " users");
  }
  if (!(step > 0.0 && step <= 0.5)) throw InvalidParameter("grid step must lie in (0, 0.5]");

  const double beta = scn.env.beta_cost;
  const double f = scn.env.f_server;
  const int levels = static_cast<int>(std::floor(1.0 / step + 1e-9));

  std::vector<double> local(n_users), transfer(n_users), k(n_users), slack(n_users);
  for (int n = 0; n < n_users; ++n) {
    const UserSlot& u = scn.users[n];
    local[n] = local_cost(u.profile, u.job, beta);
    transfer[n] = offload_transfer_cost(u.profile, u.job, u.link, beta);
    k[n] = offload_exec_coeff(u.profile, u.job, beta);
    slack[n] = exec_slack(u);
  }

  OffloadSolution best;
  best.cost = std::numeric_limits<double>::infinity();
  for (std::uint32_t mask : decision_order(n_users)) {
    const OffloadDecision dec = decision_from_mask(mask, n_users);
    if (!locals_meet_latency(scn, dec)) continue;
    std::vector<int> offloaded;
    double base = 0.0;
    for (int n = 0; n < n_users; ++n) {
      if (dec.v[n] == 1) {
        offloaded.push_back(n);
      } else {
        base += local[n];
      }
    }

    // Odometer over integer level counts j_i >= 1 with sum <= levels.
    const std::size_t m = offloaded.size();
    std::vector<int> j(m, 1);
    bool done = false;
    while (!done) {
      int used = 0;
      for (int c : j) used += c;
      if (used <= levels) {
        double cost = base;
        bool ok = true;
        for (std::size_t i = 0; i < m && ok; ++i) {
          const int n = offloaded[i];
          const double nu = j[i] * step * f;
          ok = scn.users[n].job.gamma / nu <= slack[n] + kConstraintTol;
          cost += transfer[n] + k[n] / nu;
        }
        if (ok && (!best.feasible || strictly_better(cost, best.cost))) {
          best.decision = dec;
          best.alloc.r.assign(n_users, 0.0);
          for (std::size_t i = 0; i < m; ++i) best.alloc.r[offloaded[i]] = j[i] * step;
          best.cost = cost;
          best.feasible = true;
        }
      }
      std::size_t pos = 0;
      while (true) {
        if (pos == m) {
          done = true;
          break;
        }
        if (++j[pos] <= levels) break;
        j[pos] = 1;
        ++pos;
      }
    }
  }
  if (!best.feasible) throw InfeasibleScenario("no feasible offloading decision on grid");
  best.cost = total_cost(scn, best.decision, best.alloc);
  return best;
}

}  // namespace mtda
