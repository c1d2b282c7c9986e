#pragma once

// Multi-task feed-forward network: a dense trunk shared by a per-user
// classification head (offload probability) and a per-user regression head
// (server share), both sigmoid. Weights live in one flat parameter vector.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mtda/datagen.hpp"

namespace mtda {

enum class Activation { kTanh, kSigmoid };

std::string to_string(Activation a);
Activation activation_from_string(const std::string& s);

struct NetConfig {
  int n_users = 3;
  std::vector<int> hidden{64, 32};
  Activation activation = Activation::kTanh;
  std::uint64_t seed = 1;

  int input_dim() const { return input_dim_for(n_users); }
  bool operator==(const NetConfig&) const = default;
};

void validate(const NetConfig& cfg);

struct HeadOutputs {
  std::vector<double> y_c;  // offload probabilities
  std::vector<double> y_r;  // share predictions
};

// Per-sample targets for both heads; class targets may be soft.
struct HeadTargets {
  std::vector<double> c;
  std::vector<double> r;
};

struct LossWeights {
  double chi_c = 1.0;  // offline classification weight
  double chi_r = 1.0;  // offline regression weight
  double a = 1.0;      // online classification weight
  double b = 1.0;      // online regression weight
};

void validate(const LossWeights& lw);

struct LossParts {
  double total = 0.0;
  double cls = 0.0;
  double reg = 0.0;
};

inline constexpr double kProbClamp = 1e-7;

class MultiTaskNet {
 public:
  MultiTaskNet() = default;
  // Xavier-uniform weights drawn from cfg.seed, zero biases.
  explicit MultiTaskNet(NetConfig cfg);
  MultiTaskNet(NetConfig cfg, std::vector<double> params);

  static std::size_t param_count(const NetConfig& cfg);

  const NetConfig& config() const { return cfg_; }
  int n_users() const { return cfg_.n_users; }
  int input_dim() const { return cfg_.input_dim(); }

  std::span<double> params() { return params_; }
  std::span<const double> params() const { return params_; }
  std::size_t size() const { return params_.size(); }

  HeadOutputs forward(std::span<const double> x) const;

  // Accumulates d(loss)/d(params) into `grad` (resized and zeroed) for the
  // batch loss w_c * mean_b sum_n BCE + w_r * mean_{b,n} SE. Returns the loss.
  LossParts loss_and_gradient(std::span<const std::vector<double>> xs,
                              std::span<const HeadTargets> targets, double w_c, double w_r,
                              std::vector<double>& grad) const;

  bool operator==(const MultiTaskNet& other) const {
    return cfg_ == other.cfg_ && params_ == other.params_;
  }

 private:
  struct Layer {
    std::size_t w_offset;
    std::size_t b_offset;
    int in;
    int out;
  };

  void build_layout();
  double activate(double z) const;
  double activate_grad(double a) const;

  NetConfig cfg_;
  std::vector<double> params_;
  std::vector<Layer> trunk_;
  Layer cls_head_{};
  Layer reg_head_{};
};

// Weighted head loss over a batch; w_c scales the summed-per-user binary
// cross-entropy (batch mean), w_r the mean squared error over all entries.
LossParts head_loss(std::span<const HeadOutputs> preds, std::span<const HeadTargets> targets,
                    double w_c, double w_r);

// Loss against oracle labels, weighted by (chi_c, chi_r).
LossParts loss_offline(std::span<const HeadOutputs> preds, std::span<const HeadTargets> labels,
                       const LossWeights& lw);

// Loss against teacher pseudo-labels, weighted by (a, b).
LossParts loss_online(std::span<const HeadOutputs> student, std::span<const HeadTargets> pseudo,
                      const LossWeights& lw);

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

class Adam {
 public:
  Adam() = default;
  explicit Adam(std::size_t n, AdamConfig cfg = {});

  void step(std::span<double> params, std::span<const double> grad, double lr);

  std::uint64_t steps() const { return t_; }
  std::size_t size() const { return m_.size(); }

 private:
  AdamConfig cfg_;
  std::vector<double> m_;
  std::vector<double> v_;
  std::uint64_t t_ = 0;
};

struct Checkpoint {
  MultiTaskNet net;
  std::optional<FeatureScaler> scaler;
};

// Text format: version line, config lines, optional scaler bounds, then one
// hex-float parameter per line; values round-trip bit-exactly.
void save_checkpoint(const std::filesystem::path& path, const MultiTaskNet& net,
                     const std::optional<FeatureScaler>& scaler = std::nullopt);

// Throws CheckpointError on a bad file. Also throws when `expected_users` is
// given and differs from the stored n_users.
Checkpoint load_checkpoint(const std::filesystem::path& path,
                           std::optional<int> expected_users = std::nullopt);

}  // namespace mtda
