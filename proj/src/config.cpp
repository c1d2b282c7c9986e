#include "mtda/config.hpp"

#include <fstream>
#include <limits>
#include <set>
#include <sstream>

#include "json.hpp"
#include "mtda/errors.hpp"

namespace mtda {

using ojson = nlohmann::ordered_json;

namespace {

struct DomainKey {
  const char* config_key;
  const char* model_key;  // as used in DomainConfig validation messages
  Range DomainConfig::*member;
  double scale;  // config unit -> SI
};

const std::vector<DomainKey>& domain_keys() {
  static const std::vector<DomainKey> keys = {
      {"s_kbit", "s", &DomainConfig::s, 1e3},
      {"result_ratio", "result_ratio", &DomainConfig::result_ratio, 1.0},
      {"cycles_per_bit", "cycles_per_bit", &DomainConfig::cycles_per_bit, 1.0},
      {"nu_loc_ghz", "nu_loc", &DomainConfig::nu_loc, 1e9},
      {"u_mbps", "u", &DomainConfig::u, 1e6},
      {"d_mbps", "d", &DomainConfig::d, 1e6},
      {"f_server_ghz", "f_server", &DomainConfig::f_server, 1e9},
      {"theta_s", "theta", &DomainConfig::theta, 1.0},
      {"eta", "eta", &DomainConfig::eta, 1.0},
      {"p_t_w", "p_t", &DomainConfig::p_t, 1.0},
      {"p_i_w", "p_i", &DomainConfig::p_i, 1.0},
      {"p_d_w", "p_d", &DomainConfig::p_d, 1.0},
  };
  return keys;
}

// Walks one JSON object, remembering which keys were read so leftovers can be
// reported as unknown.
class Section {
 public:
  Section(const ojson& obj, std::string path) : obj_(obj), path_(std::move(path)) {
    if (!obj_.is_object()) throw ConfigError(path_or_root() + ": expected an object");
  }

  bool has(const char* key) const { return obj_.contains(key); }

  const ojson* get(const char* key) {
    seen_.insert(key);
    auto it = obj_.find(key);
    return it == obj_.end() ? nullptr : &*it;
  }

  std::string key_path(const std::string& key) const {
    return path_.empty() ? key : path_ + "." + key;
  }

  void read(const char* key, double& out) {
    if (const ojson* v = get(key)) {
      if (!v->is_number()) throw ConfigError(key_path(key) + ": expected a number");
      out = v->get<double>();
    }
  }

  void read(const char* key, int& out) {
    if (const ojson* v = get(key)) {
      if (!v->is_number_integer()) throw ConfigError(key_path(key) + ": expected an integer");
      const auto i = v->get<std::int64_t>();
      if (i < std::numeric_limits<int>::min() || i > std::numeric_limits<int>::max()) {
        throw ConfigError(key_path(key) + ": out of range");
      }
      out = static_cast<int>(i);
    }
  }

  void read(const char* key, std::uint64_t& out) {
    if (const ojson* v = get(key)) out = as_seed(*v, key_path(key));
  }

  void read_count(const char* key, std::size_t& out) {
    if (const ojson* v = get(key)) {
      if (!v->is_number_integer() || v->get<std::int64_t>() < 0) {
        throw ConfigError(key_path(key) + ": expected a non-negative integer");
      }
      out = v->get<std::size_t>();
    }
  }

  void read(const char* key, bool& out) {
    if (const ojson* v = get(key)) {
      if (!v->is_boolean()) throw ConfigError(key_path(key) + ": expected true or false");
      out = v->get<bool>();
    }
  }

  void read(const char* key, std::string& out) {
    if (const ojson* v = get(key)) {
      if (!v->is_string()) throw ConfigError(key_path(key) + ": expected a string");
      out = v->get<std::string>();
    }
  }

  void read(const char* key, Range& out, double scale) {
    const ojson* v = get(key);
    if (!v) return;
    if (v->is_number()) {
      out.lo = out.hi = v->get<double>() * scale;
    } else if (v->is_array() && v->size() == 2 && (*v)[0].is_number() && (*v)[1].is_number()) {
      out.lo = (*v)[0].get<double>() * scale;
      out.hi = (*v)[1].get<double>() * scale;
    } else {
      throw ConfigError(key_path(key) + ": expected [min, max] or a number");
    }
  }

  static std::uint64_t as_seed(const ojson& v, const std::string& where) {
    if (v.is_number_unsigned()) return v.get<std::uint64_t>();
    if (v.is_number_integer() && v.get<std::int64_t>() >= 0) {
      return static_cast<std::uint64_t>(v.get<std::int64_t>());
    }
    throw ConfigError(where + ": expected a non-negative integer");
  }

  void finish() const {
    for (auto it = obj_.begin(); it != obj_.end(); ++it) {
      if (!seen_.count(it.key())) throw ConfigError("unknown key '" + key_path(it.key()) + "'");
    }
  }

 private:
  std::string path_or_root() const { return path_.empty() ? "config" : path_; }

  const ojson& obj_;
  std::string path_;
  std::set<std::string> seen_;
};

DomainConfig parse_domain(const ojson* node, const std::string& path, DomainConfig base, int n) {
  base.n_users = n;
  if (!node) return base;
  Section sec(*node, path);
  std::string preset;
  sec.read("preset", preset);
  if (!preset.empty()) {
    const std::uint64_t seed = base.seed;
    try {
      base = domain_preset(preset, n);
    } catch (const ConfigError& e) {
      throw ConfigError(sec.key_path("preset") + ": " + e.what());
    }
    base.seed = seed;
  }
  for (const DomainKey& k : domain_keys()) sec.read(k.config_key, base.*k.member, k.scale);
  sec.read("beta_cost", base.beta_cost);
  sec.read("seed", base.seed);
  sec.finish();
  return base;
}

// Rewrites "s: min exceeds max" into "domain.source.s_kbit: min exceeds max".
[[noreturn]] void rethrow_domain(const InvalidParameter& e, const std::string& path) {
  const std::string msg = e.what();
  const auto colon = msg.find(':');
  std::string key = colon == std::string::npos ? std::string() : msg.substr(0, colon);
  for (const DomainKey& k : domain_keys()) {
    if (key == k.model_key) {
      key = k.config_key;
      break;
    }
  }
  if (colon == std::string::npos) throw ConfigError(path + ": " + msg);
  throw ConfigError(path + "." + key + msg.substr(colon));
}

ojson range_json(const Range& r, double scale) {
  if (r.lo == r.hi) return r.lo / scale;
  return ojson::array({r.lo / scale, r.hi / scale});
}

ojson domain_json(const DomainConfig& cfg) {
  ojson out = ojson::object();
  for (const DomainKey& k : domain_keys()) out[k.config_key] = range_json(cfg.*k.member, k.scale);
  out["beta_cost"] = cfg.beta_cost;
  out["seed"] = cfg.seed;
  return out;
}

}  // namespace

void RunConfig::set_n_users(int n) {
  net.n_users = n;
  source.n_users = n;
  target.n_users = n;
}

ExperimentConfig RunConfig::experiment() const {
  ExperimentConfig e;
  e.source = source;
  e.target = target;
  e.net = net;
  e.train = train;
  e.adapt = adapt;
  e.sizes = eval.sizes;
  e.seeds = seeds;
  return e;
}

RunConfig parse_run_config(const std::string& json_text) {
  ojson root;
  try {
    root = ojson::parse(json_text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(std::string("malformed JSON: ") + e.what());
  }
  RunConfig cfg;
  Section top(root, "");

  if (const ojson* node = top.get("net")) {
    Section sec(*node, "net");
    sec.read("n_users", cfg.net.n_users);
    if (const ojson* h = sec.get("hidden")) {
      if (!h->is_array()) throw ConfigError("net.hidden: expected an array of widths");
      cfg.net.hidden.clear();
      for (const ojson& w : *h) {
        if (!w.is_number_integer()) throw ConfigError("net.hidden: widths must be integers");
        cfg.net.hidden.push_back(w.get<int>());
      }
    }
    std::string act = to_string(cfg.net.activation);
    sec.read("activation", act);
    try {
      cfg.net.activation = activation_from_string(act);
    } catch (const std::exception& e) {
      throw ConfigError(std::string("net.activation: ") + e.what());
    }
    sec.read("seed", cfg.net.seed);
    sec.finish();
  }
  const int n = cfg.net.n_users;

  const ojson* source_node = nullptr;
  const ojson* target_node = nullptr;
  if (const ojson* node = top.get("domain")) {
    Section sec(*node, "domain");
    source_node = sec.get("source");
    target_node = sec.get("target");
    sec.finish();
  }
  cfg.source = parse_domain(source_node, "domain.source", shift_source_preset(n), n);
  cfg.target = parse_domain(target_node, "domain.target", shift_target_preset(n), n);

  if (const ojson* node = top.get("train")) {
    Section sec(*node, "train");
    TrainConfig& t = cfg.train;
    sec.read("epochs", t.epochs);
    sec.read("batch_size", t.batch_size);
    sec.read("lr", t.lr);
    sec.read("chi_c", t.loss.chi_c);
    sec.read("chi_r", t.loss.chi_r);
    sec.read("val_split", t.val_split);
    sec.read("seed", t.seed);
    sec.read("patience", t.patience);
    sec.read("warmup_epochs", t.warmup_epochs);
    sec.finish();
  }

  if (const ojson* node = top.get("adapt")) {
    Section sec(*node, "adapt");
    AdaptConfig& a = cfg.adapt;
    sec.read("n_augment", a.n_augment);
    sec.read("augment_sigma", a.augment_sigma);
    sec.read("permute_users", a.permute_users);
    sec.read("ema_beta", a.ema_beta);
    sec.read("restore_p", a.restore_p);
    sec.read("restore_period", a.restore_period);
    sec.read("lr", a.lr);
    sec.read("a", a.loss.a);
    sec.read("b", a.loss.b);
    sec.read("seed", a.seed);
    if (const ojson* w = sec.get("augment_weights")) {
      if (!w->is_array()) throw ConfigError("adapt.augment_weights: expected an array");
      a.augment_weights.clear();
      for (const ojson& v : *w) {
        if (!v.is_number()) throw ConfigError("adapt.augment_weights: expected numbers");
        a.augment_weights.push_back(v.get<double>());
      }
    }
    sec.finish();
  }

  if (const ojson* node = top.get("eval")) {
    Section sec(*node, "eval");
    sec.read_count("train_size", cfg.eval.sizes.train);
    sec.read_count("stream_size", cfg.eval.sizes.stream);
    sec.read_count("test_size", cfg.eval.sizes.test);
    std::string axis = to_string(cfg.eval.sweep.axis);
    sec.read("sweep_axis", axis);
    try {
      cfg.eval.sweep.axis = sweep_axis_from_string(axis);
    } catch (const std::exception& e) {
      throw ConfigError(std::string("eval.sweep_axis: ") + e.what());
    }
    sec.read("sweep_bins", cfg.eval.sweep.bins);
    sec.read_count("sweep_samples_per_bin", cfg.eval.sweep.samples_per_bin);
    sec.finish();
  }

  if (const ojson* node = top.get("seeds")) {
    if (!node->is_array()) throw ConfigError("seeds: expected an array of integers");
    cfg.seeds.clear();
    for (const ojson& s : *node) cfg.seeds.push_back(Section::as_seed(s, "seeds"));
  }
  top.read("output_dir", cfg.output_dir);
  top.finish();

  validate(cfg);
  return cfg;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_run_config(ss.str());
}

void validate(const RunConfig& cfg) {
  if (cfg.source.n_users != cfg.net.n_users || cfg.target.n_users != cfg.net.n_users) {
    throw ConfigError("net.n_users: domains and network disagree on the user count");
  }
  try {
    validate(cfg.net);
  } catch (const InvalidParameter& e) {
    throw ConfigError(std::string("net: ") + e.what());
  }
  try {
    validate(cfg.source);
  } catch (const InvalidParameter& e) {
    rethrow_domain(e, "domain.source");
  }
  try {
    validate(cfg.target);
  } catch (const InvalidParameter& e) {
    rethrow_domain(e, "domain.target");
  }
  try {
    validate(cfg.train);
  } catch (const InvalidParameter& e) {
    throw ConfigError(e.what());
  }
  try {
    validate(cfg.adapt);
  } catch (const InvalidParameter& e) {
    throw ConfigError(e.what());
  }
  const ExperimentSizes& s = cfg.eval.sizes;
  if (s.train == 0) throw ConfigError("eval.train_size: must be positive");
  if (s.stream == 0) throw ConfigError("eval.stream_size: must be positive");
  if (s.test == 0) throw ConfigError("eval.test_size: must be positive");
  if (cfg.eval.sweep.bins < 1) throw ConfigError("eval.sweep_bins: must be >= 1");
  if (cfg.eval.sweep.samples_per_bin == 0) {
    throw ConfigError("eval.sweep_samples_per_bin: must be positive");
  }
  if (cfg.seeds.empty()) throw ConfigError("seeds: at least one seed required");
}

std::string to_json(const RunConfig& cfg) {
  ojson root = ojson::object();
  root["domain"] = {{"source", domain_json(cfg.source)}, {"target", domain_json(cfg.target)}};
  root["net"] = {{"n_users", cfg.net.n_users},
                 {"hidden", cfg.net.hidden},
                 {"activation", to_string(cfg.net.activation)},
                 {"seed", cfg.net.seed}};
  const TrainConfig& t = cfg.train;
  root["train"] = {{"epochs", t.epochs},          {"batch_size", t.batch_size},
                   {"lr", t.lr},                  {"chi_c", t.loss.chi_c},
                   {"chi_r", t.loss.chi_r},       {"val_split", t.val_split},
                   {"seed", t.seed},              {"patience", t.patience},
                   {"warmup_epochs", t.warmup_epochs}};
  const AdaptConfig& a = cfg.adapt;
  root["adapt"] = {{"n_augment", a.n_augment},
                   {"augment_sigma", a.augment_sigma},
                   {"permute_users", a.permute_users},
                   {"ema_beta", a.ema_beta},
                   {"restore_p", a.restore_p},
                   {"restore_period", a.restore_period},
                   {"lr", a.lr},
                   {"a", a.loss.a},
                   {"b", a.loss.b},
                   {"seed", a.seed},
                   {"augment_weights", a.augment_weights}};
  root["eval"] = {{"train_size", cfg.eval.sizes.train},
                  {"stream_size", cfg.eval.sizes.stream},
                  {"test_size", cfg.eval.sizes.test},
                  {"sweep_axis", to_string(cfg.eval.sweep.axis)},
                  {"sweep_bins", cfg.eval.sweep.bins},
                  {"sweep_samples_per_bin", cfg.eval.sweep.samples_per_bin}};
  root["seeds"] = cfg.seeds;
  root["output_dir"] = cfg.output_dir;
  return root.dump(2) + "\n";
}

}  // namespace mtda
