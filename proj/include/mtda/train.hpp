#pragma once

// Offline multi-task training on the labeled source dataset.

#include <cstdint>
#include <iosfwd>
#include <span>
#include <vector>

#include "mtda/datagen.hpp"
#include "mtda/nn.hpp"

namespace mtda {

struct TrainConfig {
  int epochs = 200;
  int batch_size = 64;
  double lr = 1e-3;
  LossWeights loss;
  double val_split = 0.1;
  std::uint64_t seed = 1;
  int patience = 20;
  // Epochs spent on classification alone, then on regression alone, before
  // joint training starts. 0 trains jointly from the first epoch.
  int warmup_epochs = 0;
};

void validate(const TrainConfig& cfg);

// Network inputs and (when labeled) targets for a dataset.
struct EncodedSet {
  std::vector<std::vector<double>> x;
  std::vector<HeadTargets> y;

  std::size_t size() const { return x.size(); }
  bool labeled() const { return y.size() == x.size(); }
};

HeadTargets targets_from_label(const SampleLabel& label);

EncodedSet encode(const LabeledDataset& ds, const FeatureScaler& scaler);

struct SplitMetrics {
  double acc_exact = 0.0;  // all users' thresholded decisions correct
  double acc_bit = 0.0;    // per-user decision accuracy
  double mse = 0.0;        // over all share entries
};

// Offload iff probability > 0.5 (strict; 0.5 maps to local).
inline bool offload_threshold(double p) { return p > 0.5; }

SplitMetrics score_predictions(std::span<const HeadOutputs> preds,
                               std::span<const HeadTargets> targets);

SplitMetrics evaluate_split(const MultiTaskNet& net, const EncodedSet& set);

std::vector<HeadOutputs> predict_all(const MultiTaskNet& net,
                                     std::span<const std::vector<double>> xs);

struct EpochRecord {
  int epoch = 0;
  double l = 0.0;
  double l_c = 0.0;
  double l_r = 0.0;
  double val_loss = 0.0;
  SplitMetrics val;
};

struct TrainingLog {
  std::vector<EpochRecord> epochs;
  int best_epoch = 0;
  double best_val_loss = 0.0;

  void write_csv(std::ostream& out) const;
};

struct TrainResult {
  MultiTaskNet net;  // best-validation-loss weights
  TrainingLog log;
};

// Throws InvalidParameter for unlabeled data, DimensionMismatch on any
// disagreement about N.
TrainResult train_offline(const LabeledDataset& ds, const FeatureScaler& scaler,
                          const NetConfig& net_cfg, const TrainConfig& cfg);

}  // namespace mtda
