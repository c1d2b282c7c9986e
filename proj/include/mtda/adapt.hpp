#pragma once

// Streaming test-time adaptation. A teacher (EMA of the student, starting from
// the source model) labels augmented copies of each incoming input; the
// student takes one optimizer step toward the averaged pseudo-label, then a
// random subset of its weights is reset to the source weights.

#include <cstdint>
#include <iosfwd>
#include <span>
#include <vector>

#include "mtda/nn.hpp"
#include "mtda/rng.hpp"

namespace mtda {

struct AdaptConfig {
  int n_augment = 8;
  double augment_sigma = 0.05;  // relative jitter scale
  // Also shuffle the per-user feature blocks of augmented copies. The optimal
  // strategy is equivariant under user permutation, so this view is
  // label-preserving; teacher outputs are mapped back before averaging.
  bool permute_users = true;
  double ema_beta = 0.999;
  double restore_p = 0.01;
  int restore_period = 1;  // steps between stochastic restores
  double lr = 1e-4;
  LossWeights loss;
  std::uint64_t seed = 1;
  // Per-augmentation weights for the pseudo-label average; empty means uniform.
  std::vector<double> augment_weights;
};

void validate(const AdaptConfig& cfg);

struct AdaptState {
  AdaptState(const MultiTaskNet& source, const AdaptConfig& cfg);

  const std::vector<double>& source_params() const { return phi_0_; }

  MultiTaskNet student;
  MultiTaskNet teacher;
  Adam optimizer;
  std::uint64_t step = 0;
  Rng augment_rng;
  Rng mask_rng;

 private:
  std::vector<double> phi_0_;
};

// Copy 0 is x itself; copies 1..K-1 get multiplicative N(0, sigma^2) jitter and
// are clamped to [0,1].
std::vector<std::vector<double>> augment(std::span<const double> x, int k, double sigma, Rng& rng);

// One augmented input. User block j of `x` holds original user perm[j].
struct AugmentedView {
  std::vector<double> x;
  std::vector<int> perm;
};

// Input x with its user blocks reordered: block j takes original block perm[j].
std::vector<double> permute_user_blocks(std::span<const double> x, std::span<const int> perm);

// K views of x for the teacher: view 0 is x unchanged; the rest get a uniformly
// random user permutation (when enabled) followed by jitter.
std::vector<AugmentedView> make_views(std::span<const double> x, int n_users,
                                      const AdaptConfig& cfg, Rng& rng);

// Weighted average of the network's outputs over the views, each mapped back
// to the original user order (uniform when `weights` is empty).
HeadOutputs average_outputs(const MultiTaskNet& net, std::span<const AugmentedView> views,
                            std::span<const double> weights = {});

// Pseudo-label for x: teacher outputs averaged over K augmentations.
HeadOutputs teacher_predict(AdaptState& state, std::span<const double> x, const AdaptConfig& cfg);

struct StepResult {
  HeadOutputs prediction;          // student, before this step's update
  HeadOutputs teacher_prediction;  // teacher on x, before this step's update
  HeadOutputs pseudo_label;
  LossParts loss;
  double restored_fraction = 0.0;
};

StepResult adapt_step(AdaptState& state, std::span<const double> x, const AdaptConfig& cfg);

struct AdaptLogRow {
  std::uint64_t step = 0;
  LossParts loss;
  double restored_fraction = 0.0;
};

struct StreamResult {
  std::vector<HeadOutputs> predictions;
  std::vector<HeadOutputs> teacher_predictions;
  std::vector<AdaptLogRow> log;

  void write_log_csv(std::ostream& out) const;
  void write_predictions_csv(std::ostream& out) const;
};

StreamResult run_stream(AdaptState& state, std::span<const std::vector<double>> stream,
                        const AdaptConfig& cfg);

}  // namespace mtda
