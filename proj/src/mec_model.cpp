#include "mtda/mec_model.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "mtda/errors.hpp"

namespace mtda {

namespace {

void require_finite(double x, const char* name) {
  if (!std::isfinite(x)) {
    throw InvalidParameter(std::string(name) + " is not finite");
  }
}

void require_beta(double beta_cost) {
  require_finite(beta_cost, "beta_cost");
  if (beta_cost < 0.0 || beta_cost > 1.0) {
    throw InvalidParameter("beta_cost must lie in [0,1]");
  }
}

void check_dims(const ScenarioInstance& scn, const OffloadDecision& dec,
                const Allocation& alloc) {
  const auto n = scn.users.size();
  if (dec.v.size() != n || alloc.r.size() != n) {
    throw DimensionMismatch("decision/allocation length does not match user count");
  }
}

}  // namespace

int OffloadDecision::offloaded_count() const {
  return static_cast<int>(std::count(v.begin(), v.end(), std::uint8_t{1}));
}

void validate(const ScenarioInstance& scn) {
  const Environment& env = scn.env;
  require_beta(env.beta_cost);
  require_finite(env.f_server, "f_server");
  if (env.f_server <= 0.0) throw InvalidParameter("f_server must be positive");
  if (env.n_users < 1) throw InvalidParameter("n_users must be >= 1");
  if (scn.size() != env.n_users) throw InvalidParameter("user list length != n_users");
  for (const UserSlot& u : scn.users) {
    for (double x : {u.profile.nu_loc, u.profile.eta, u.profile.p_t, u.profile.p_i,
                     u.profile.p_d, u.job.s, u.job.gamma, u.job.w, u.job.theta, u.link.u,
                     u.link.d}) {
      require_finite(x, "user parameter");
    }
    if (u.profile.nu_loc <= 0.0) throw InvalidParameter("nu_loc must be positive");
    if (u.profile.eta < 0.0) throw InvalidParameter("eta must be non-negative");
    if (u.profile.p_t < 0.0 || u.profile.p_i < 0.0 || u.profile.p_d < 0.0) {
      throw InvalidParameter("powers must be non-negative");
    }
    if (u.job.s < 0.0 || u.job.w < 0.0) throw InvalidParameter("data sizes must be non-negative");
    if (u.job.gamma <= 0.0) throw InvalidParameter("gamma must be positive");
    if (u.job.theta <= 0.0) throw InvalidParameter("theta must be positive");
    if (u.link.u <= 0.0 || u.link.d <= 0.0) throw InvalidParameter("link rates must be positive");
  }
}

double local_cost(const UserProfile& user, const JobSpec& job, double beta_cost) {
  require_beta(beta_cost);
  require_finite(user.nu_loc, "nu_loc");
  require_finite(user.eta, "eta");
  require_finite(job.gamma, "gamma");
  if (user.nu_loc <= 0.0) throw InvalidParameter("nu_loc must be positive");
  const double delay = job.gamma / user.nu_loc;
  const double energy = user.eta * user.nu_loc * user.nu_loc * job.gamma;
  return beta_cost * delay + (1.0 - beta_cost) * energy;
}

double offload_transfer_cost(const UserProfile& user, const JobSpec& job, const LinkState& link,
                             double beta_cost) {
  require_beta(beta_cost);
  for (double x : {job.s, job.w, link.u, link.d, user.p_t, user.p_d}) {
    require_finite(x, "offload parameter");
  }
  const double up = job.s / link.u;
  const double down = job.w / link.d;
  return beta_cost * (up + down) + (1.0 - beta_cost) * (user.p_t * up + user.p_d * down);
}

double offload_exec_coeff(const UserProfile& user, const JobSpec& job, double beta_cost) {
  return job.gamma * (beta_cost + (1.0 - beta_cost) * user.p_i);
}

double offload_cost(const UserProfile& user, const JobSpec& job, const LinkState& link,
                    double nu_off, double beta_cost) {
  require_finite(nu_off, "nu_off");
  if (nu_off <= 0.0) throw InvalidParameter("nu_off must be positive");
  require_finite(job.gamma, "gamma");
  require_finite(user.p_i, "p_i");
  return offload_transfer_cost(user, job, link, beta_cost) +
         offload_exec_coeff(user, job, beta_cost) / nu_off;
}

double local_latency(const UserProfile& user, const JobSpec& job) {
  return job.gamma / user.nu_loc;
}

double offload_latency(const JobSpec& job, const LinkState& link, double nu_off) {
  return job.s / link.u + job.gamma / nu_off + job.w / link.d;
}

std::vector<double> per_user_costs(const ScenarioInstance& scn, const OffloadDecision& dec,
                                   const Allocation& alloc) {
  check_dims(scn, dec, alloc);
  const double beta = scn.env.beta_cost;
  std::vector<double> costs(scn.users.size());
  for (std::size_t n = 0; n < scn.users.size(); ++n) {
    const UserSlot& u = scn.users[n];
    if (dec.v[n] == 0) {
      costs[n] = local_cost(u.profile, u.job, beta);
      continue;
    }
    if (!(alloc.r[n] > 0.0)) {
      throw InfeasibleAllocation("user " + std::to_string(n) + " offloads with zero share");
    }
    costs[n] = offload_cost(u.profile, u.job, u.link, alloc.r[n] * scn.env.f_server, beta);
  }
  return costs;
}

double total_cost(const ScenarioInstance& scn, const OffloadDecision& dec,
                  const Allocation& alloc) {
  const std::vector<double> costs = per_user_costs(scn, dec, alloc);
  return std::accumulate(costs.begin(), costs.end(), 0.0);
}

std::string to_string(Constraint c) {
  switch (c) {
    case Constraint::kNone: return "none";
    case Constraint::kC1Binary: return "C1";
    case Constraint::kC2Latency: return "C2";
    case Constraint::kC3Range: return "C3";
    case Constraint::kC4Budget: return "C4";
  }
  return "unknown";
}

FeasibilityReport check_feasible(const ScenarioInstance& scn, const OffloadDecision& dec,
                                 const Allocation& alloc) {
  check_dims(scn, dec, alloc);
  const std::size_t n_users = scn.users.size();
  FeasibilityReport rep;
  rep.users.resize(n_users);

  double budget = 0.0;
  for (std::size_t n = 0; n < n_users; ++n) {
    const UserSlot& u = scn.users[n];
    UserFeasibility& f = rep.users[n];
    const std::uint8_t v = dec.v[n];
    const double r = alloc.r[n];
    f.c1 = (v == 0 || v == 1);
    f.c3 = std::isfinite(r) && r >= -kConstraintTol && r <= 1.0 + kConstraintTol &&
           (v == 1 || std::abs(r) <= kConstraintTol);
    if (v == 1) {
      const double nu_off = r * scn.env.f_server;
      f.c2 = nu_off > 0.0 && offload_latency(u.job, u.link, nu_off) <= u.job.theta + kConstraintTol;
    } else {
      f.c2 = local_latency(u.profile, u.job) <= u.job.theta + kConstraintTol;
    }
    budget += r;
  }
  rep.c4 = budget <= 1.0 + kConstraintTol;

  auto first = [&](auto pred, Constraint c) {
    if (rep.first_violation != Constraint::kNone) return;
    for (std::size_t n = 0; n < n_users; ++n) {
      if (!pred(rep.users[n])) {
        rep.first_violation = c;
        rep.first_violating_user = static_cast<int>(n);
        return;
      }
    }
  };
  first([](const UserFeasibility& f) { return f.c1; }, Constraint::kC1Binary);
  first([](const UserFeasibility& f) { return f.c2; }, Constraint::kC2Latency);
  first([](const UserFeasibility& f) { return f.c3; }, Constraint::kC3Range);
  if (rep.first_violation == Constraint::kNone && !rep.c4) {
    rep.first_violation = Constraint::kC4Budget;
  }
  return rep;
}

}  // namespace mtda
