#include "mtda/train.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <ostream>

#include "mtda/csv.hpp"
#include "mtda/errors.hpp"
#include "mtda/rng.hpp"

namespace mtda {

void validate(const TrainConfig& cfg) {
  if (cfg.epochs < 1) throw InvalidParameter("train.epochs must be >= 1");
  if (cfg.batch_size < 1) throw InvalidParameter("train.batch_size must be >= 1");
  if (!(cfg.lr >= 0.0) || !std::isfinite(cfg.lr)) throw InvalidParameter("train.lr must be >= 0");
  if (!(cfg.val_split > 0.0 && cfg.val_split < 1.0)) {
    throw InvalidParameter("train.val_split must lie in (0,1)");
  }
  if (cfg.patience < 1) throw InvalidParameter("train.patience must be >= 1");
  if (cfg.warmup_epochs < 0) throw InvalidParameter("train.warmup_epochs must be >= 0");
  validate(cfg.loss);
}

HeadTargets targets_from_label(const SampleLabel& label) {
  HeadTargets t;
  t.c.reserve(label.v.v.size());
  for (std::uint8_t b : label.v.v) t.c.push_back(static_cast<double>(b));
  t.r = label.r.r;
  return t;
}

EncodedSet encode(const LabeledDataset& ds, const FeatureScaler& scaler) {
  EncodedSet set;
  set.x.reserve(ds.size());
  const bool labeled = ds.labeled();
  for (const LabeledSample& s : ds.samples) {
    set.x.push_back(scaler.encode(s.x));
    if (labeled) set.y.push_back(targets_from_label(*s.label));
  }
  return set;
}

SplitMetrics score_predictions(std::span<const HeadOutputs> preds,
                               std::span<const HeadTargets> targets) {
  if (preds.size() != targets.size()) throw DimensionMismatch("prediction/target count differs");
  SplitMetrics m;
  if (preds.empty()) return m;
  std::size_t exact = 0, bits = 0, bit_total = 0, r_total = 0;
  double sq = 0.0;
  for (std::size_t s = 0; s < preds.size(); ++s) {
    bool all = true;
    for (std::size_t n = 0; n < preds[s].y_c.size(); ++n) {
      const bool ok = offload_threshold(preds[s].y_c[n]) == (targets[s].c[n] > 0.5);
      bits += ok;
      all = all && ok;
      ++bit_total;
    }
    exact += all;
    for (std::size_t n = 0; n < preds[s].y_r.size(); ++n) {
      const double e = preds[s].y_r[n] - targets[s].r[n];
      sq += e * e;
      ++r_total;
    }
  }
  m.acc_exact = static_cast<double>(exact) / static_cast<double>(preds.size());
  m.acc_bit = static_cast<double>(bits) / static_cast<double>(std::max<std::size_t>(bit_total, 1));
  m.mse = sq / static_cast<double>(std::max<std::size_t>(r_total, 1));
  return m;
}

std::vector<HeadOutputs> predict_all(const MultiTaskNet& net,
                                     std::span<const std::vector<double>> xs) {
  std::vector<HeadOutputs> out;
  out.reserve(xs.size());
  for (const auto& x : xs) out.push_back(net.forward(x));
  return out;
}

SplitMetrics evaluate_split(const MultiTaskNet& net, const EncodedSet& set) {
  if (!set.labeled()) throw InvalidParameter("evaluation needs a labeled set");
  const auto preds = predict_all(net, set.x);
  return score_predictions(preds, set.y);
}

void TrainingLog::write_csv(std::ostream& out) const {
  out << "epoch,l,l_c,l_r,val_acc_exact,val_acc_bit,val_mse\n";
  for (const EpochRecord& e : epochs) {
    csv::row(out, e.epoch, e.l, e.l_c, e.l_r, e.val.acc_exact, e.val.acc_bit, e.val.mse);
  }
}

TrainResult train_offline(const LabeledDataset& ds, const FeatureScaler& scaler,
                          const NetConfig& net_cfg, const TrainConfig& cfg) {
  validate(cfg);
  if (ds.empty()) throw InvalidParameter("training dataset is empty");
  if (!ds.labeled()) throw InvalidParameter("training requires a labeled dataset");
  const int n = ds.n_users();
  if (n != net_cfg.n_users || n != scaler.n_users()) {
    throw DimensionMismatch("dataset has N=" + std::to_string(n) + " but network expects N=" +
                            std::to_string(net_cfg.n_users));
  }

  const EncodedSet all = encode(ds, scaler);
  std::vector<std::size_t> order(all.size());
  std::iota(order.begin(), order.end(), 0);
  Rng split_rng(derive_seed(cfg.seed, 0));
  split_rng.shuffle(order.begin(), order.end());

  std::size_t n_val = static_cast<std::size_t>(std::ceil(cfg.val_split * static_cast<double>(all.size())));
  if (all.size() < 2) {
    n_val = 0;
  } else {
    n_val = std::clamp<std::size_t>(n_val, 1, all.size() - 1);
  }
  EncodedSet train, val;
  for (std::size_t i = 0; i < order.size(); ++i) {
    EncodedSet& dst = i < n_val ? val : train;
    dst.x.push_back(all.x[order[i]]);
    dst.y.push_back(all.y[order[i]]);
  }
  // A single sample validates on itself.
  if (val.size() == 0) val = train;

  MultiTaskNet net(net_cfg);
  Adam adam(net.size());
  TrainResult result{net, {}};
  double best = std::numeric_limits<double>::infinity();
  int since_best = 0;

  std::vector<std::size_t> idx(train.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::vector<std::vector<double>> bx;
  std::vector<HeadTargets> by;
  std::vector<double> grad;

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    double w_c = cfg.loss.chi_c;
    double w_r = cfg.loss.chi_r;
    const bool warming = epoch <= 2 * cfg.warmup_epochs;
    if (warming) {
      if (epoch <= cfg.warmup_epochs) {
        w_r = 0.0;
      } else {
        w_c = 0.0;
      }
    }

    Rng epoch_rng(derive_seed(cfg.seed, static_cast<std::uint64_t>(epoch)));
    epoch_rng.shuffle(idx.begin(), idx.end());

    EpochRecord rec;
    rec.epoch = epoch;
    for (std::size_t start = 0; start < idx.size(); start += cfg.batch_size) {
      const std::size_t end = std::min(idx.size(), start + static_cast<std::size_t>(cfg.batch_size));
      bx.clear();
      by.clear();
      for (std::size_t i = start; i < end; ++i) {
        bx.push_back(train.x[idx[i]]);
        by.push_back(train.y[idx[i]]);
      }
      const LossParts lp = net.loss_and_gradient(bx, by, w_c, w_r, grad);
      const double share = static_cast<double>(end - start) / static_cast<double>(idx.size());
      rec.l += lp.total * share;
      rec.l_c += lp.cls * share;
      rec.l_r += lp.reg * share;
      adam.step(net.params(), grad, cfg.lr);
    }

    const auto preds = predict_all(net, val.x);
    rec.val_loss = loss_offline(preds, val.y, cfg.loss).total;
    rec.val = score_predictions(preds, val.y);
    result.log.epochs.push_back(rec);

    if (warming) continue;
    if (rec.val_loss < best) {
      best = rec.val_loss;
      since_best = 0;
      result.net = net;
      result.log.best_epoch = epoch;
      result.log.best_val_loss = best;
    } else if (++since_best >= cfg.patience) {
      break;
    }
  }
  if (result.log.best_epoch == 0) {
    // Only warm-up epochs ran.
    result.net = net;
    result.log.best_epoch = result.log.epochs.back().epoch;
    result.log.best_val_loss = result.log.epochs.back().val_loss;
  }
  return result;
}

}  // namespace mtda
