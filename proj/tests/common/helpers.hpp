#pragma once

#include <vector>

#include "mtda/mec_model.hpp"

namespace mtda::testing {

inline UserSlot make_user(double s, double gamma, double w, double theta, double nu_loc, double u,
                          double d) {
  UserSlot slot;
  slot.job = {s, gamma, w, theta};
  slot.profile.nu_loc = nu_loc;
  slot.link = {u, d};
  return slot;
}

inline ScenarioInstance make_scenario(std::vector<UserSlot> users, double f_server,
                                      double beta = 0.5) {
  ScenarioInstance scn;
  scn.env.beta_cost = beta;
  scn.env.f_server = f_server;
  scn.env.n_users = static_cast<int>(users.size());
  scn.users = std::move(users);
  return scn;
}

inline OffloadDecision dec(std::vector<std::uint8_t> v) { return OffloadDecision{std::move(v)}; }
inline Allocation alloc(std::vector<double> r) { return Allocation{std::move(r)}; }

}  // namespace mtda::testing
