#include "mtda/datagen.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "json.hpp"
#include "mtda/errors.hpp"
#include "mtda/oracle.hpp"

namespace mtda {

using ojson = nlohmann::ordered_json;

namespace {

constexpr int kSchemaVersion = 1;

}  // namespace

std::string to_string(DomainTag tag) { return tag == DomainTag::kSource ? "source" : "target"; }

DomainTag domain_tag_from_string(const std::string& s) {
  if (s == "source") return DomainTag::kSource;
  if (s == "target") return DomainTag::kTarget;
  throw InvalidParameter("unknown domain tag '" + s + "'");
}

const std::vector<NamedRange>& domain_ranges() {
  static const std::vector<NamedRange> ranges = {
      {"s", &DomainConfig::s},
      {"result_ratio", &DomainConfig::result_ratio},
      {"cycles_per_bit", &DomainConfig::cycles_per_bit},
      {"nu_loc", &DomainConfig::nu_loc},
      {"u", &DomainConfig::u},
      {"d", &DomainConfig::d},
      {"f_server", &DomainConfig::f_server},
      {"theta", &DomainConfig::theta},
      {"eta", &DomainConfig::eta},
      {"p_t", &DomainConfig::p_t},
      {"p_i", &DomainConfig::p_i},
      {"p_d", &DomainConfig::p_d},
  };
  return ranges;
}

void validate(const DomainConfig& cfg) {
  for (const NamedRange& nr : domain_ranges()) {
    const Range& r = cfg.*nr.member;
    if (!std::isfinite(r.lo) || !std::isfinite(r.hi)) {
      throw InvalidParameter(std::string(nr.key) + ": range bounds must be finite");
    }
    if (r.lo > r.hi) {
      throw InvalidParameter(std::string(nr.key) + ": min exceeds max");
    }
  }
  auto positive = [](const Range& r, const char* key) {
    if (!(r.lo > 0.0)) throw InvalidParameter(std::string(key) + ": min must be positive");
  };
  auto non_negative = [](const Range& r, const char* key) {
    if (r.lo < 0.0) throw InvalidParameter(std::string(key) + ": min must be non-negative");
  };
  positive(cfg.s, "s");
  non_negative(cfg.result_ratio, "result_ratio");
  positive(cfg.cycles_per_bit, "cycles_per_bit");
  positive(cfg.nu_loc, "nu_loc");
  positive(cfg.u, "u");
  positive(cfg.d, "d");
  positive(cfg.f_server, "f_server");
  positive(cfg.theta, "theta");
  non_negative(cfg.eta, "eta");
  non_negative(cfg.p_t, "p_t");
  non_negative(cfg.p_i, "p_i");
  non_negative(cfg.p_d, "p_d");
  if (!(cfg.beta_cost >= 0.0 && cfg.beta_cost <= 1.0)) {
    throw InvalidParameter("beta_cost: must lie in [0,1]");
  }
  if (cfg.n_users < 1 || cfg.n_users > kMaxExhaustiveUsers) {
    throw InvalidParameter("n_users: must lie in [1, " + std::to_string(kMaxExhaustiveUsers) + "]");
  }
}

DomainConfig shift_source_preset(int n_users) {
  DomainConfig cfg;
  cfg.s = {1e3, 500e3};
  cfg.f_server = {2.5e9, 10e9};
  cfg.n_users = n_users;
  return cfg;
}

DomainConfig shift_target_preset(int n_users) {
  DomainConfig cfg;
  cfg.s = {600e3, 700e3};
  cfg.f_server = {10e9, 12e9};
  cfg.n_users = n_users;
  return cfg;
}

DomainConfig domain_preset(const std::string& name, int n_users) {
  if (name == "shift-source" || name == "paper-source") return shift_source_preset(n_users);
  if (name == "shift-target" || name == "paper-target") return shift_target_preset(n_users);
  throw ConfigError("unknown domain preset '" + name + "'");
}

bool LabeledDataset::labeled() const {
  return std::all_of(samples.begin(), samples.end(),
                     [](const LabeledSample& s) { return s.label.has_value(); });
}

int LabeledDataset::n_users() const {
  if (samples.empty()) return meta.n_users;
  const int n = samples.front().x.size();
  for (const LabeledSample& s : samples) {
    if (s.x.size() != n) throw DimensionMismatch("dataset mixes user counts");
  }
  return n;
}

ScenarioInstance sample_scenario(const DomainConfig& cfg, Rng& rng) {
  auto draw = [&rng](const Range& r) { return rng.uniform(r.lo, r.hi); };
  ScenarioInstance scn;
  scn.env.beta_cost = cfg.beta_cost;
  scn.env.n_users = cfg.n_users;
  scn.env.f_server = draw(cfg.f_server);
  scn.users.resize(cfg.n_users);
  for (UserSlot& u : scn.users) {
    u.job.s = draw(cfg.s);
    u.job.w = u.job.s * draw(cfg.result_ratio);
    u.job.gamma = u.job.s * draw(cfg.cycles_per_bit);
    u.job.theta = draw(cfg.theta);
    u.profile.nu_loc = draw(cfg.nu_loc);
    u.profile.eta = draw(cfg.eta);
    u.profile.p_t = draw(cfg.p_t);
    u.profile.p_i = draw(cfg.p_i);
    u.profile.p_d = draw(cfg.p_d);
    u.link.u = draw(cfg.u);
    u.link.d = draw(cfg.d);
  }
  return scn;
}

LabeledDataset build_dataset(const DomainConfig& cfg, std::size_t count, bool with_labels,
                             DomainTag tag) {
  if (count == 0) throw InvalidParameter("count must be positive");
  validate(cfg);

  LabeledDataset ds;
  ds.meta.domain_tag = tag;
  ds.meta.seed = cfg.seed;
  ds.meta.n_users = cfg.n_users;
  ds.samples.reserve(count);

  // Accepting `count` within 20*count draws keeps the discard rate <= 95%.
  const std::size_t max_attempts = 20 * count;
  std::size_t attempt = 0;
  while (ds.samples.size() < count) {
    if (attempt >= max_attempts) {
      ds.meta.attempts = attempt;
      throw DomainMisconfiguration("discard rate above 95% (" + std::to_string(ds.samples.size()) +
                                   " feasible of " + std::to_string(attempt) + " draws)");
    }
    Rng rng(derive_seed(cfg.seed, attempt));
    ++attempt;
    ScenarioInstance scn = sample_scenario(cfg, rng);
    try {
      OffloadSolution sol = solve_exhaustive(scn);
      LabeledSample sample{std::move(scn), std::nullopt, tag};
      if (with_labels) {
        sample.label = SampleLabel{std::move(sol.decision), std::move(sol.alloc), sol.cost};
      }
      ds.samples.push_back(std::move(sample));
    } catch (const InfeasibleScenario&) {
      ++ds.meta.discarded;
    }
  }
  ds.meta.attempts = attempt;
  ds.meta.count = ds.samples.size();
  return ds;
}

std::string to_jsonl_line(const LabeledSample& sample) {
  ojson j;
  j["schema_version"] = kSchemaVersion;
  j["domain_tag"] = to_string(sample.domain_tag);
  j["env"] = {{"beta", sample.x.env.beta_cost},
              {"f_server", sample.x.env.f_server},
              {"n", sample.x.env.n_users}};
  ojson users = ojson::array();
  for (const UserSlot& u : sample.x.users) {
    users.push_back({{"nu_loc", u.profile.nu_loc},
                     {"eta", u.profile.eta},
                     {"p_t", u.profile.p_t},
                     {"p_i", u.profile.p_i},
                     {"p_d", u.profile.p_d},
                     {"s", u.job.s},
                     {"gamma", u.job.gamma},
                     {"w", u.job.w},
                     {"theta", u.job.theta},
                     {"u", u.link.u},
                     {"d", u.link.d}});
  }
  j["users"] = std::move(users);
  if (sample.label) {
    ojson v = ojson::array();
    for (std::uint8_t b : sample.label->v.v) v.push_back(static_cast<int>(b));
    j["label"] = {{"v", std::move(v)}, {"r", sample.label->r.r}, {"cost", sample.label->cost}};
  }
  return j.dump();
}

namespace {

const ojson& field(const ojson& obj, const char* name, std::size_t line_no) {
  if (!obj.is_object()) throw ParseError(line_no, std::string("expected object holding '") + name + "'");
  auto it = obj.find(name);
  if (it == obj.end()) throw ParseError(line_no, std::string("missing required field '") + name + "'");
  return *it;
}

double number(const ojson& obj, const char* name, std::size_t line_no) {
  const ojson& v = field(obj, name, line_no);
  if (!v.is_number()) throw ParseError(line_no, std::string("field '") + name + "' is not a number");
  return v.get<double>();
}

}  // namespace

LabeledSample from_jsonl_line(const std::string& line, std::size_t line_no) {
  ojson j;
  try {
    j = ojson::parse(line);
  } catch (const ojson::parse_error& e) {
    throw ParseError(line_no, std::string("malformed JSON: ") + e.what());
  }
  const int version = static_cast<int>(number(j, "schema_version", line_no));
  if (version != kSchemaVersion) {
    throw ParseError(line_no, "unsupported schema_version " + std::to_string(version));
  }
  LabeledSample s;
  const ojson& tag = field(j, "domain_tag", line_no);
  if (!tag.is_string()) throw ParseError(line_no, "field 'domain_tag' is not a string");
  try {
    s.domain_tag = domain_tag_from_string(tag.get<std::string>());
  } catch (const InvalidParameter& e) {
    throw ParseError(line_no, e.what());
  }

  const ojson& env = field(j, "env", line_no);
  s.x.env.beta_cost = number(env, "beta", line_no);
  s.x.env.f_server = number(env, "f_server", line_no);
  s.x.env.n_users = static_cast<int>(number(env, "n", line_no));

  const ojson& users = field(j, "users", line_no);
  if (!users.is_array()) throw ParseError(line_no, "field 'users' is not an array");
  for (const ojson& u : users) {
    UserSlot slot;
    slot.profile.nu_loc = number(u, "nu_loc", line_no);
    slot.profile.eta = number(u, "eta", line_no);
    slot.profile.p_t = number(u, "p_t", line_no);
    slot.profile.p_i = number(u, "p_i", line_no);
    slot.profile.p_d = number(u, "p_d", line_no);
    slot.job.s = number(u, "s", line_no);
    slot.job.gamma = number(u, "gamma", line_no);
    slot.job.w = number(u, "w", line_no);
    slot.job.theta = number(u, "theta", line_no);
    slot.link.u = number(u, "u", line_no);
    slot.link.d = number(u, "d", line_no);
    s.x.users.push_back(slot);
  }
  try {
    validate(s.x);
  } catch (const InvalidParameter& e) {
    throw ParseError(line_no, e.what());
  }

  if (auto it = j.find("label"); it != j.end()) {
    const ojson& lab = *it;
    const ojson& v = field(lab, "v", line_no);
    const ojson& r = field(lab, "r", line_no);
    if (!v.is_array() || !r.is_array() || v.size() != s.x.users.size() ||
        r.size() != s.x.users.size()) {
      throw ParseError(line_no, "label vectors must have one entry per user");
    }
    SampleLabel label;
    for (const ojson& b : v) {
      if (!b.is_number_integer() || (b.get<int>() != 0 && b.get<int>() != 1)) {
        throw ParseError(line_no, "label 'v' entries must be 0 or 1");
      }
      label.v.v.push_back(static_cast<std::uint8_t>(b.get<int>()));
    }
    for (const ojson& x : r) {
      if (!x.is_number()) throw ParseError(line_no, "label 'r' entries must be numbers");
      label.r.r.push_back(x.get<double>());
    }
    label.cost = number(lab, "cost", line_no);
    s.label = std::move(label);
  }
  return s;
}

void write_jsonl(const std::filesystem::path& path, const LabeledDataset& ds) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open '" + path.string() + "' for writing");
  for (const LabeledSample& s : ds.samples) out << to_jsonl_line(s) << '\n';
  if (!out) throw std::runtime_error("write failed for '" + path.string() + "'");
}

LabeledDataset read_jsonl(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open '" + path.string() + "'");
  LabeledDataset ds;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line.find_first_not_of(" \t\r") == std::string::npos) continue;
    ds.samples.push_back(from_jsonl_line(line, line_no));
  }
  ds.meta.count = ds.samples.size();
  if (!ds.samples.empty()) {
    ds.meta.domain_tag = ds.samples.front().domain_tag;
    ds.meta.n_users = ds.n_users();
  }
  return ds;
}

void write_metadata(const std::filesystem::path& path, const DatasetMeta& meta) {
  ojson j;
  j["domain_tag"] = to_string(meta.domain_tag);
  j["seed"] = meta.seed;
  j["n_users"] = meta.n_users;
  j["count"] = meta.count;
  j["attempts"] = meta.attempts;
  j["discarded"] = meta.discarded;
  j["discard_rate"] = meta.discard_rate();
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open '" + path.string() + "' for writing");
  out << j.dump(2) << '\n';
}

FeatureScaler::FeatureScaler(int n_users, std::vector<Range> bounds)
    : n_users_(n_users), bounds_(std::move(bounds)) {
  if (n_users_ < 1) throw InvalidParameter("scaler needs at least one user");
  if (bounds_.size() != kFeatureKinds) throw DimensionMismatch("scaler needs 9 feature bounds");
}

FeatureScaler FeatureScaler::covering(const std::vector<DomainConfig>& domains) {
  if (domains.empty()) throw InvalidParameter("scaler needs at least one domain");
  const int n = domains.front().n_users;
  std::vector<Range> bounds(kFeatureKinds, Range{INFINITY, -INFINITY});
  auto widen = [](Range& b, double lo, double hi) {
    b.lo = std::min(b.lo, lo);
    b.hi = std::max(b.hi, hi);
  };
  for (const DomainConfig& c : domains) {
    if (c.n_users != n) throw DimensionMismatch("domains disagree on n_users");
    widen(bounds[0], c.s.lo, c.s.hi);
    widen(bounds[1], c.s.lo * c.cycles_per_bit.lo, c.s.hi * c.cycles_per_bit.hi);
    widen(bounds[2], c.s.lo * c.result_ratio.lo, c.s.hi * c.result_ratio.hi);
    widen(bounds[3], c.u.lo, c.u.hi);
    widen(bounds[4], c.d.lo, c.d.hi);
    widen(bounds[5], c.nu_loc.lo, c.nu_loc.hi);
    widen(bounds[6], c.theta.lo, c.theta.hi);
    widen(bounds[7], c.f_server.lo, c.f_server.hi);
    widen(bounds[8], c.beta_cost, c.beta_cost);
  }
  return FeatureScaler(n, std::move(bounds));
}

std::vector<double> FeatureScaler::encode(const ScenarioInstance& scn) const {
  if (scn.size() != n_users_) {
    throw DimensionMismatch("scenario has " + std::to_string(scn.size()) + " users, scaler expects " +
                            std::to_string(n_users_));
  }
  auto scale = [this](int kind, double x) {
    const Range& b = bounds_[kind];
    const double span = b.hi - b.lo;
    return span > 0.0 ? (x - b.lo) / span : 0.0;
  };
  std::vector<double> x;
  x.reserve(input_dim());
  for (const UserSlot& u : scn.users) {
    x.push_back(scale(0, u.job.s));
    x.push_back(scale(1, u.job.gamma));
    x.push_back(scale(2, u.job.w));
    x.push_back(scale(3, u.link.u));
    x.push_back(scale(4, u.link.d));
    x.push_back(scale(5, u.profile.nu_loc));
    x.push_back(scale(6, u.job.theta));
  }
  x.push_back(scale(7, scn.env.f_server));
  x.push_back(scale(8, scn.env.beta_cost));
  return x;
}

}  // namespace mtda
