#pragma once

// Single-server multi-user MEC system: domain types and the weighted-sum
// delay/energy cost model. All quantities are base SI units (bits, cycles,
// seconds, watts).

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace mtda {

inline constexpr double kConstraintTol = 1e-9;

struct UserProfile {
  double nu_loc = 1e9;  // local CPU frequency, cycles/s
  double eta = 1e-27;   // energy-efficiency coefficient, J*s^2/cycle^3
  double p_t = 0.5;     // upload transmit power, W
  double p_i = 0.1;     // idle power while the server executes, W
  double p_d = 0.2;     // download receive power, W

  bool operator==(const UserProfile&) const = default;
};

struct JobSpec {
  double s = 0.0;      // upload size, bits
  double gamma = 1.0;  // required CPU cycles
  double w = 0.0;      // result size, bits
  double theta = 1.0;  // max tolerable latency, s

  bool operator==(const JobSpec&) const = default;
};

struct LinkState {
  double u = 1e6;  // uplink, bits/s
  double d = 1e6;  // downlink, bits/s

  bool operator==(const LinkState&) const = default;
};

struct Environment {
  double beta_cost = 0.5;  // 1 = pure delay, 0 = pure energy
  double f_server = 1e10;  // total server frequency, cycles/s
  int n_users = 1;

  bool operator==(const Environment&) const = default;
};

struct UserSlot {
  UserProfile profile;
  JobSpec job;
  LinkState link;

  bool operator==(const UserSlot&) const = default;
};

struct ScenarioInstance {
  Environment env;
  std::vector<UserSlot> users;

  int size() const { return static_cast<int>(users.size()); }
  bool operator==(const ScenarioInstance&) const = default;
};

struct OffloadDecision {
  std::vector<std::uint8_t> v;

  int offloaded_count() const;
  bool operator==(const OffloadDecision&) const = default;
};

// Fractions of f_server; offloaded user n runs at r[n] * f_server.
struct Allocation {
  std::vector<double> r;

  bool operator==(const Allocation&) const = default;
};

// Throws InvalidParameter when any type invariant is violated.
void validate(const ScenarioInstance& scn);

double local_cost(const UserProfile& user, const JobSpec& job, double beta_cost);

double offload_cost(const UserProfile& user, const JobSpec& job, const LinkState& link,
                    double nu_off, double beta_cost);

// Offload cost terms that do not depend on the server share (transfer delay and energy).
double offload_transfer_cost(const UserProfile& user, const JobSpec& job, const LinkState& link,
                             double beta_cost);

// Coefficient k such that the execution part of the offload cost is k / nu_off.
double offload_exec_coeff(const UserProfile& user, const JobSpec& job, double beta_cost);

double local_latency(const UserProfile& user, const JobSpec& job);
double offload_latency(const JobSpec& job, const LinkState& link, double nu_off);

// Per-user cost contributions; sums to total_cost.
std::vector<double> per_user_costs(const ScenarioInstance& scn, const OffloadDecision& dec,
                                   const Allocation& alloc);

double total_cost(const ScenarioInstance& scn, const OffloadDecision& dec,
                  const Allocation& alloc);

enum class Constraint { kNone, kC1Binary, kC2Latency, kC3Range, kC4Budget };

std::string to_string(Constraint c);

struct UserFeasibility {
  bool c1 = true;
  bool c2 = true;
  bool c3 = true;
};

struct FeasibilityReport {
  std::vector<UserFeasibility> users;
  bool c4 = true;
  Constraint first_violation = Constraint::kNone;
  std::optional<int> first_violating_user;

  bool feasible() const { return first_violation == Constraint::kNone; }
};

FeasibilityReport check_feasible(const ScenarioInstance& scn, const OffloadDecision& dec,
                                 const Allocation& alloc);

}  // namespace mtda
