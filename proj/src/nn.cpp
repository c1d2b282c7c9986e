#include "mtda/nn.hpp"

#include <algorithm>
#include <cerrno>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "mtda/errors.hpp"
#include "mtda/rng.hpp"

namespace mtda {

namespace {

constexpr const char* kCheckpointMagic = "mtda-checkpoint";
constexpr int kCheckpointVersion = 1;

double sigmoid(double z) {
  if (z >= 0.0) {
    return 1.0 / (1.0 + std::exp(-z));
  }
  const double e = std::exp(z);
  return e / (1.0 + e);
}

double clamp_prob(double p) { return std::clamp(p, kProbClamp, 1.0 - kProbClamp); }

void check_batch(std::size_t preds, std::size_t targets) {
  if (preds != targets) throw DimensionMismatch("prediction and target batch sizes differ");
}

}  // namespace

std::string to_string(Activation a) { return a == Activation::kTanh ? "tanh" : "sigmoid"; }

Activation activation_from_string(const std::string& s) {
  if (s == "tanh") return Activation::kTanh;
  if (s == "sigmoid") return Activation::kSigmoid;
  throw InvalidParameter("unknown activation '" + s + "'");
}

void validate(const NetConfig& cfg) {
  if (cfg.n_users < 1) throw InvalidParameter("net n_users must be >= 1");
  if (cfg.hidden.empty()) throw InvalidParameter("net needs at least one hidden layer");
  for (int w : cfg.hidden) {
    if (w <= 0) throw InvalidParameter("hidden widths must be positive");
  }
}

void validate(const LossWeights& lw) {
  for (double x : {lw.chi_c, lw.chi_r, lw.a, lw.b}) {
    if (!(x >= 0.0) || !std::isfinite(x)) throw InvalidParameter("loss weights must be >= 0");
  }
  if (!(lw.chi_c + lw.chi_r > 0.0)) throw InvalidParameter("chi_c + chi_r must be positive");
  if (!(lw.a + lw.b > 0.0)) throw InvalidParameter("a + b must be positive");
}

std::size_t MultiTaskNet::param_count(const NetConfig& cfg) {
  std::size_t count = 0;
  int in = cfg.input_dim();
  for (int out : cfg.hidden) {
    count += static_cast<std::size_t>(out) * (in + 1);
    in = out;
  }
  count += 2 * static_cast<std::size_t>(cfg.n_users) * (in + 1);
  return count;
}

MultiTaskNet::MultiTaskNet(NetConfig cfg) : cfg_(std::move(cfg)) {
  validate(cfg_);
  build_layout();
  params_.assign(param_count(cfg_), 0.0);
  Rng rng(cfg_.seed);
  auto init = [&](const Layer& l) {
    const double limit = std::sqrt(6.0 / static_cast<double>(l.in + l.out));
    for (std::size_t i = 0; i < static_cast<std::size_t>(l.in) * l.out; ++i) {
      params_[l.w_offset + i] = rng.uniform(-limit, limit);
    }
  };
  for (const Layer& l : trunk_) init(l);
  init(cls_head_);
  init(reg_head_);
}

MultiTaskNet::MultiTaskNet(NetConfig cfg, std::vector<double> params)
    : cfg_(std::move(cfg)), params_(std::move(params)) {
  validate(cfg_);
  build_layout();
  if (params_.size() != param_count(cfg_)) {
    throw DimensionMismatch("parameter vector has " + std::to_string(params_.size()) +
                            " entries, config needs " + std::to_string(param_count(cfg_)));
  }
}

void MultiTaskNet::build_layout() {
  trunk_.clear();
  std::size_t offset = 0;
  int in = cfg_.input_dim();
  auto add = [&](int out) {
    Layer l{offset, offset + static_cast<std::size_t>(in) * out, in, out};
    offset = l.b_offset + out;
    return l;
  };
  for (int out : cfg_.hidden) {
    trunk_.push_back(add(out));
    in = out;
  }
  cls_head_ = add(cfg_.n_users);
  reg_head_ = add(cfg_.n_users);
}

double MultiTaskNet::activate(double z) const {
  return cfg_.activation == Activation::kTanh ? std::tanh(z) : sigmoid(z);
}

double MultiTaskNet::activate_grad(double a) const {
  return cfg_.activation == Activation::kTanh ? 1.0 - a * a : a * (1.0 - a);
}

HeadOutputs MultiTaskNet::forward(std::span<const double> x) const {
  if (static_cast<int>(x.size()) != input_dim()) {
    throw DimensionMismatch("input has " + std::to_string(x.size()) + " features, net expects " +
                            std::to_string(input_dim()));
  }
  std::vector<double> a(x.begin(), x.end());
  std::vector<double> next;
  auto affine = [this](const Layer& l, const std::vector<double>& in, std::vector<double>& out) {
    out.resize(l.out);
    for (int o = 0; o < l.out; ++o) {
      const double* w = &params_[l.w_offset + static_cast<std::size_t>(o) * l.in];
      double z = params_[l.b_offset + o];
      for (int i = 0; i < l.in; ++i) z += w[i] * in[i];
      out[o] = z;
    }
  };
  for (const Layer& l : trunk_) {
    affine(l, a, next);
    for (double& z : next) z = activate(z);
    a.swap(next);
  }
  HeadOutputs out;
  affine(cls_head_, a, out.y_c);
  affine(reg_head_, a, out.y_r);
  for (double& z : out.y_c) z = sigmoid(z);
  for (double& z : out.y_r) z = sigmoid(z);
  return out;
}

LossParts MultiTaskNet::loss_and_gradient(std::span<const std::vector<double>> xs,
                                          std::span<const HeadTargets> targets, double w_c,
                                          double w_r, std::vector<double>& grad) const {
  check_batch(xs.size(), targets.size());
  grad.assign(params_.size(), 0.0);
  LossParts loss;
  if (xs.empty()) return loss;

  const int n = n_users();
  const double inv_b = 1.0 / static_cast<double>(xs.size());
  const double inv_bn = inv_b / static_cast<double>(n);

  // Activations per layer, index 0 is the input.
  std::vector<std::vector<double>> acts(trunk_.size() + 1);
  std::vector<double> z_c(n), z_r(n), d_c(n), d_r(n), delta, delta_prev;

  for (std::size_t s = 0; s < xs.size(); ++s) {
    const std::vector<double>& x = xs[s];
    const HeadTargets& t = targets[s];
    if (static_cast<int>(x.size()) != input_dim() || static_cast<int>(t.c.size()) != n ||
        static_cast<int>(t.r.size()) != n) {
      throw DimensionMismatch("batch entry " + std::to_string(s) + " has wrong shape");
    }
    acts[0] = x;
    for (std::size_t li = 0; li < trunk_.size(); ++li) {
      const Layer& l = trunk_[li];
      std::vector<double>& out = acts[li + 1];
      out.resize(l.out);
      for (int o = 0; o < l.out; ++o) {
        const double* w = &params_[l.w_offset + static_cast<std::size_t>(o) * l.in];
        double z = params_[l.b_offset + o];
        for (int i = 0; i < l.in; ++i) z += w[i] * acts[li][i];
        out[o] = activate(z);
      }
    }
    const std::vector<double>& h = acts.back();
    for (const auto& [head, z] : {std::pair{&cls_head_, &z_c}, std::pair{&reg_head_, &z_r}}) {
      for (int o = 0; o < n; ++o) {
        const double* w = &params_[head->w_offset + static_cast<std::size_t>(o) * head->in];
        double acc = params_[head->b_offset + o];
        for (int i = 0; i < head->in; ++i) acc += w[i] * h[i];
        (*z)[o] = acc;
      }
    }

    // Output deltas. The classification delta is the unclamped BCE-through-
    // sigmoid derivative p - t; the clamp only affects the reported loss.
    for (int o = 0; o < n; ++o) {
      const double p = sigmoid(z_c[o]);
      const double pc = clamp_prob(p);
      loss.cls += -(t.c[o] * std::log(pc) + (1.0 - t.c[o]) * std::log(1.0 - pc)) * inv_b;
      d_c[o] = w_c * (p - t.c[o]) * inv_b;

      const double y = sigmoid(z_r[o]);
      const double err = y - t.r[o];
      loss.reg += err * err * inv_bn;
      d_r[o] = w_r * 2.0 * err * inv_bn * y * (1.0 - y);
    }

    delta.assign(h.size(), 0.0);
    for (const auto& [head, d] : {std::pair{&cls_head_, &d_c}, std::pair{&reg_head_, &d_r}}) {
      for (int o = 0; o < n; ++o) {
        const double g = (*d)[o];
        if (g == 0.0) continue;
        const std::size_t row = head->w_offset + static_cast<std::size_t>(o) * head->in;
        for (int i = 0; i < head->in; ++i) {
          grad[row + i] += g * h[i];
          delta[i] += g * params_[row + i];
        }
        grad[head->b_offset + o] += g;
      }
    }

    for (std::size_t li = trunk_.size(); li-- > 0;) {
      const Layer& l = trunk_[li];
      const std::vector<double>& out = acts[li + 1];
      const std::vector<double>& in = acts[li];
      for (int o = 0; o < l.out; ++o) delta[o] *= activate_grad(out[o]);
      delta_prev.assign(l.in, 0.0);
      for (int o = 0; o < l.out; ++o) {
        const double g = delta[o];
        if (g == 0.0) continue;
        const std::size_t row = l.w_offset + static_cast<std::size_t>(o) * l.in;
        for (int i = 0; i < l.in; ++i) {
          grad[row + i] += g * in[i];
          delta_prev[i] += g * params_[row + i];
        }
        grad[l.b_offset + o] += g;
      }
      delta.swap(delta_prev);
    }
  }
  loss.total = w_c * loss.cls + w_r * loss.reg;
  return loss;
}

LossParts head_loss(std::span<const HeadOutputs> preds, std::span<const HeadTargets> targets,
                    double w_c, double w_r) {
  check_batch(preds.size(), targets.size());
  LossParts loss;
  if (preds.empty()) return loss;
  std::size_t entries = 0;
  for (std::size_t s = 0; s < preds.size(); ++s) {
    const HeadOutputs& p = preds[s];
    const HeadTargets& t = targets[s];
    if (p.y_c.size() != t.c.size() || p.y_r.size() != t.r.size()) {
      throw DimensionMismatch("prediction and target widths differ");
    }
    for (std::size_t n = 0; n < p.y_c.size(); ++n) {
      const double pc = clamp_prob(p.y_c[n]);
      loss.cls -= t.c[n] * std::log(pc) + (1.0 - t.c[n]) * std::log(1.0 - pc);
    }
    for (std::size_t n = 0; n < p.y_r.size(); ++n) {
      const double err = p.y_r[n] - t.r[n];
      loss.reg += err * err;
    }
    entries += p.y_r.size();
  }
  loss.cls /= static_cast<double>(preds.size());
  loss.reg /= static_cast<double>(std::max<std::size_t>(entries, 1));
  loss.total = w_c * loss.cls + w_r * loss.reg;
  return loss;
}

LossParts loss_offline(std::span<const HeadOutputs> preds, std::span<const HeadTargets> labels,
                       const LossWeights& lw) {
  return head_loss(preds, labels, lw.chi_c, lw.chi_r);
}

LossParts loss_online(std::span<const HeadOutputs> student, std::span<const HeadTargets> pseudo,
                      const LossWeights& lw) {
  for (const HeadTargets& t : pseudo) {
    for (double c : t.c) {
      if (!(c >= 0.0 && c <= 1.0)) throw InvalidParameter("pseudo-label outside [0,1]");
    }
  }
  return head_loss(student, pseudo, lw.a, lw.b);
}

Adam::Adam(std::size_t n, AdamConfig cfg) : cfg_(cfg), m_(n, 0.0), v_(n, 0.0) {}

void Adam::step(std::span<double> params, std::span<const double> grad, double lr) {
  if (params.size() != m_.size() || grad.size() != m_.size()) {
    throw DimensionMismatch("optimizer state does not match parameter vector");
  }
  ++t_;
  const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double g = grad[i];
    m_[i] = cfg_.beta1 * m_[i] + (1.0 - cfg_.beta1) * g;
    v_[i] = cfg_.beta2 * v_[i] + (1.0 - cfg_.beta2) * g * g;
    const double m_hat = m_[i] / bc1;
    const double v_hat = v_[i] / bc2;
    params[i] -= lr * m_hat / (std::sqrt(v_hat) + cfg_.eps);
  }
}

namespace {

std::string hex(double x) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%a", x);
  return buf;
}

[[noreturn]] void corrupt(const std::string& what) {
  throw CheckpointError(CheckpointError::Kind::kCorrupt, "corrupt checkpoint: " + what);
}

double parse_double(const std::string& tok) {
  errno = 0;
  char* end = nullptr;
  const double x = std::strtod(tok.c_str(), &end);
  if (tok.empty() || end != tok.c_str() + tok.size() || errno == ERANGE || !std::isfinite(x)) {
    corrupt("bad number '" + tok + "'");
  }
  return x;
}

class LineReader {
 public:
  explicit LineReader(std::istream& in) : in_(in) {}

  // Next line split into tokens; the first must equal `key`.
  std::vector<std::string> expect(const std::string& key) {
    std::string line;
    if (!std::getline(in_, line)) corrupt("truncated before '" + key + "'");
    std::istringstream ss(line);
    std::vector<std::string> toks;
    for (std::string t; ss >> t;) toks.push_back(t);
    if (toks.empty() || toks.front() != key) corrupt("expected '" + key + "'");
    toks.erase(toks.begin());
    return toks;
  }

 private:
  std::istream& in_;
};

long parse_int(const std::string& tok) {
  try {
    std::size_t pos = 0;
    const long v = std::stol(tok, &pos);
    if (pos != tok.size()) corrupt("bad integer '" + tok + "'");
    return v;
  } catch (const std::logic_error&) {
    corrupt("bad integer '" + tok + "'");
  }
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const MultiTaskNet& net,
                     const std::optional<FeatureScaler>& scaler) {
  std::ofstream out(path, std::ios::binary);
  if (!out) {
    throw CheckpointError(CheckpointError::Kind::kIo, "cannot write '" + path.string() + "'");
  }
  const NetConfig& cfg = net.config();
  out << kCheckpointMagic << ' ' << kCheckpointVersion << '\n';
  out << "n_users " << cfg.n_users << '\n';
  out << "input_dim " << cfg.input_dim() << '\n';
  out << "hidden";
  for (int w : cfg.hidden) out << ' ' << w;
  out << '\n';
  out << "activation " << to_string(cfg.activation) << '\n';
  out << "seed " << cfg.seed << '\n';
  if (scaler) {
    out << "scaler " << scaler->bounds().size() << '\n';
    for (const Range& r : scaler->bounds()) out << hex(r.lo) << ' ' << hex(r.hi) << '\n';
  } else {
    out << "scaler 0\n";
  }
  out << "params " << net.size() << '\n';
  for (double p : net.params()) out << hex(p) << '\n';
  out << "end\n";
  if (!out) throw CheckpointError(CheckpointError::Kind::kIo, "write failed for '" + path.string() + "'");
}

Checkpoint load_checkpoint(const std::filesystem::path& path, std::optional<int> expected_users) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError(CheckpointError::Kind::kIo, "cannot open '" + path.string() + "'");
  LineReader lr(in);

  const auto header = lr.expect(kCheckpointMagic);
  if (header.size() != 1) corrupt("bad header");
  if (parse_int(header[0]) != kCheckpointVersion) {
    throw CheckpointError(CheckpointError::Kind::kVersionMismatch,
                          "checkpoint version " + header[0] + " is not supported (expected " +
                              std::to_string(kCheckpointVersion) + ")");
  }
  NetConfig cfg;
  const auto n_tok = lr.expect("n_users");
  if (n_tok.size() != 1) corrupt("bad n_users");
  cfg.n_users = static_cast<int>(parse_int(n_tok[0]));
  if (expected_users && *expected_users != cfg.n_users) {
    throw CheckpointError(CheckpointError::Kind::kConfigMismatch,
                          "checkpoint is for " + std::to_string(cfg.n_users) + " users, expected " +
                              std::to_string(*expected_users));
  }
  const auto dim_tok = lr.expect("input_dim");
  if (dim_tok.size() != 1 || parse_int(dim_tok[0]) != cfg.input_dim()) corrupt("bad input_dim");
  cfg.hidden.clear();
  for (const std::string& t : lr.expect("hidden")) cfg.hidden.push_back(static_cast<int>(parse_int(t)));
  const auto act = lr.expect("activation");
  if (act.size() != 1) corrupt("bad activation");
  try {
    cfg.activation = activation_from_string(act[0]);
    validate(cfg);
  } catch (const InvalidParameter& e) {
    corrupt(e.what());
  }
  const auto seed = lr.expect("seed");
  if (seed.size() != 1) corrupt("bad seed");
  try {
    cfg.seed = std::stoull(seed[0]);
  } catch (const std::logic_error&) {
    corrupt("bad seed");
  }

  Checkpoint ck;
  const auto sc = lr.expect("scaler");
  if (sc.size() != 1) corrupt("bad scaler line");
  const long n_bounds = parse_int(sc[0]);
  if (n_bounds != 0) {
    if (n_bounds != kFeatureKinds) corrupt("bad scaler size");
    std::vector<Range> bounds;
    std::string line;
    for (long i = 0; i < n_bounds; ++i) {
      if (!std::getline(in, line)) corrupt("truncated scaler");
      std::istringstream ss(line);
      std::string lo, hi;
      if (!(ss >> lo >> hi)) corrupt("bad scaler bound");
      bounds.push_back({parse_double(lo), parse_double(hi)});
    }
    ck.scaler = FeatureScaler(cfg.n_users, std::move(bounds));
  }

  const auto pc = lr.expect("params");
  if (pc.size() != 1) corrupt("bad params line");
  const long count = parse_int(pc[0]);
  if (count < 0 || static_cast<std::size_t>(count) != MultiTaskNet::param_count(cfg)) {
    corrupt("parameter count does not match config");
  }
  std::vector<double> params;
  params.reserve(count);
  std::string line;
  for (long i = 0; i < count; ++i) {
    if (!std::getline(in, line)) corrupt("truncated parameter list");
    params.push_back(parse_double(line));
  }
  lr.expect("end");
  ck.net = MultiTaskNet(cfg, std::move(params));
  return ck;
}

}  // namespace mtda
