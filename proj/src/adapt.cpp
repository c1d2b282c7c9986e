#include "mtda/adapt.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>

#include "mtda/csv.hpp"
#include "mtda/errors.hpp"

namespace mtda {

void validate(const AdaptConfig& cfg) {
  if (cfg.n_augment < 1) throw InvalidParameter("adapt.n_augment must be >= 1");
  if (!(cfg.augment_sigma >= 0.0)) throw InvalidParameter("adapt.augment_sigma must be >= 0");
  if (!(cfg.ema_beta >= 0.0 && cfg.ema_beta <= 1.0)) {
    throw InvalidParameter("adapt.ema_beta must lie in [0,1]");
  }
  if (!(cfg.restore_p >= 0.0 && cfg.restore_p <= 1.0)) {
    throw InvalidParameter("adapt.restore_p must lie in [0,1]");
  }
  if (cfg.restore_period < 1) throw InvalidParameter("adapt.restore_period must be >= 1");
  if (!(cfg.lr >= 0.0) || !std::isfinite(cfg.lr)) throw InvalidParameter("adapt.lr must be >= 0");
  validate(cfg.loss);
  if (!cfg.augment_weights.empty()) {
    if (static_cast<int>(cfg.augment_weights.size()) != cfg.n_augment) {
      throw InvalidParameter("adapt.augment_weights needs one weight per augmentation");
    }
    double sum = 0.0;
    for (double w : cfg.augment_weights) {
      if (!(w >= 0.0)) throw InvalidParameter("adapt.augment_weights must be >= 0");
      sum += w;
    }
    if (!(sum > 0.0)) throw InvalidParameter("adapt.augment_weights must not all be zero");
  }
}

AdaptState::AdaptState(const MultiTaskNet& source, const AdaptConfig& cfg)
    : student(source),
      teacher(source),
      optimizer(source.size()),
      augment_rng(derive_seed(cfg.seed, 1)),
      mask_rng(derive_seed(cfg.seed, 2)),
      phi_0_(source.params().begin(), source.params().end()) {
  validate(cfg);
}

std::vector<std::vector<double>> augment(std::span<const double> x, int k, double sigma, Rng& rng) {
  if (k < 1) throw InvalidParameter("augmentation count must be >= 1");
  std::vector<std::vector<double>> out;
  out.reserve(k);
  out.emplace_back(x.begin(), x.end());
  for (int c = 1; c < k; ++c) {
    std::vector<double> copy(x.begin(), x.end());
    for (double& v : copy) v = std::clamp(v * (1.0 + sigma * rng.normal()), 0.0, 1.0);
    out.push_back(std::move(copy));
  }
  return out;
}

std::vector<double> permute_user_blocks(std::span<const double> x, std::span<const int> perm) {
  const std::size_t n = perm.size();
  const std::size_t user_part = n * kUserFeatures;
  if (x.size() < user_part) throw DimensionMismatch("input shorter than its user blocks");
  std::vector<double> out(x.begin(), x.end());
  for (std::size_t j = 0; j < n; ++j) {
    const auto src = x.begin() + static_cast<std::ptrdiff_t>(perm[j] * kUserFeatures);
    std::copy(src, src + kUserFeatures, out.begin() + static_cast<std::ptrdiff_t>(j * kUserFeatures));
  }
  return out;
}

std::vector<AugmentedView> make_views(std::span<const double> x, int n_users,
                                      const AdaptConfig& cfg, Rng& rng) {
  if (cfg.n_augment < 1) throw InvalidParameter("augmentation count must be >= 1");
  std::vector<int> identity(n_users);
  std::iota(identity.begin(), identity.end(), 0);
  std::vector<AugmentedView> views;
  views.reserve(cfg.n_augment);
  views.push_back({std::vector<double>(x.begin(), x.end()), identity});
  for (int c = 1; c < cfg.n_augment; ++c) {
    AugmentedView v{{}, identity};
    if (cfg.permute_users) rng.shuffle(v.perm.begin(), v.perm.end());
    v.x = permute_user_blocks(x, v.perm);
    for (double& f : v.x) f = std::clamp(f * (1.0 + cfg.augment_sigma * rng.normal()), 0.0, 1.0);
    views.push_back(std::move(v));
  }
  return views;
}

HeadOutputs average_outputs(const MultiTaskNet& net, std::span<const AugmentedView> views,
                            std::span<const double> weights) {
  if (views.empty()) throw InvalidParameter("nothing to average");
  if (!weights.empty() && weights.size() != views.size()) {
    throw DimensionMismatch("one weight per view required");
  }
  const int n = net.n_users();
  double total = 0.0;
  HeadOutputs avg;
  avg.y_c.assign(n, 0.0);
  avg.y_r.assign(n, 0.0);
  for (std::size_t i = 0; i < views.size(); ++i) {
    const double w = weights.empty() ? 1.0 : weights[i];
    const HeadOutputs o = net.forward(views[i].x);
    for (int j = 0; j < n; ++j) {
      const int user = views[i].perm[j];
      avg.y_c[user] += w * o.y_c[j];
      avg.y_r[user] += w * o.y_r[j];
    }
    total += w;
  }
  for (int j = 0; j < n; ++j) {
    avg.y_c[j] /= total;
    avg.y_r[j] /= total;
  }
  return avg;
}

HeadOutputs teacher_predict(AdaptState& state, std::span<const double> x, const AdaptConfig& cfg) {
  const auto views = make_views(x, state.teacher.n_users(), cfg, state.augment_rng);
  return average_outputs(state.teacher, views, cfg.augment_weights);
}

StepResult adapt_step(AdaptState& state, std::span<const double> x, const AdaptConfig& cfg) {
  StepResult res;
  res.prediction = state.student.forward(x);
  res.teacher_prediction = state.teacher.forward(x);
  res.pseudo_label = teacher_predict(state, x, cfg);

  const HeadTargets target{res.pseudo_label.y_c, res.pseudo_label.y_r};
  const std::vector<std::vector<double>> batch{std::vector<double>(x.begin(), x.end())};
  std::vector<double> grad;
  res.loss = state.student.loss_and_gradient(batch, std::span(&target, 1), cfg.loss.a,
                                             cfg.loss.b, grad);
  state.optimizer.step(state.student.params(), grad, cfg.lr);

  std::span<double> teacher = state.teacher.params();
  std::span<double> student = state.student.params();
  const double beta = cfg.ema_beta;
  for (std::size_t i = 0; i < teacher.size(); ++i) {
    teacher[i] = beta * teacher[i] + (1.0 - beta) * student[i];
  }

  ++state.step;
  if (state.step % static_cast<std::uint64_t>(cfg.restore_period) == 0) {
    const std::vector<double>& source = state.source_params();
    std::size_t restored = 0;
    for (std::size_t i = 0; i < student.size(); ++i) {
      if (state.mask_rng.bernoulli(cfg.restore_p)) {
        student[i] = source[i];
        ++restored;
      }
    }
    res.restored_fraction = static_cast<double>(restored) / static_cast<double>(student.size());
  }
  return res;
}

StreamResult run_stream(AdaptState& state, std::span<const std::vector<double>> stream,
                        const AdaptConfig& cfg) {
  if (stream.empty()) throw InvalidParameter("adaptation stream is empty");
  validate(cfg);
  StreamResult out;
  out.predictions.reserve(stream.size());
  out.teacher_predictions.reserve(stream.size());
  out.log.reserve(stream.size());
  for (const auto& x : stream) {
    StepResult r = adapt_step(state, x, cfg);
    out.log.push_back({state.step, r.loss, r.restored_fraction});
    out.predictions.push_back(std::move(r.prediction));
    out.teacher_predictions.push_back(std::move(r.teacher_prediction));
  }
  return out;
}

void StreamResult::write_log_csv(std::ostream& out) const {
  out << "step,L_total,L_c,L_r,restored_fraction\n";
  for (const AdaptLogRow& r : log) {
    csv::row(out, r.step, r.loss.total, r.loss.cls, r.loss.reg, r.restored_fraction);
  }
}

void StreamResult::write_predictions_csv(std::ostream& out) const {
  out << "step,user,y_c,y_r,teacher_y_c,teacher_y_r\n";
  for (std::size_t s = 0; s < predictions.size(); ++s) {
    const HeadOutputs& p = predictions[s];
    const HeadOutputs& t = teacher_predictions[s];
    for (std::size_t n = 0; n < p.y_c.size(); ++n) {
      csv::row(out, s + 1, n, p.y_c[n], p.y_r[n], t.y_c[n], t.y_r[n]);
    }
  }
}

}  // namespace mtda
