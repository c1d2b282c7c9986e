#pragma once

// Strategy extraction, evaluation reports and the domain-shift / cost-sweep
// experiment runners.

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

#include "mtda/adapt.hpp"
#include "mtda/datagen.hpp"
#include "mtda/nn.hpp"
#include "mtda/train.hpp"

namespace mtda {

struct Strategy {
  OffloadDecision decision;
  Allocation alloc;
};

// V_n = [y_c > 0.5]; offloaded users split the whole server in proportion to
// y_r (uniformly when any of their y_r is not positive); local users get 0.
Strategy extract_strategy(const HeadOutputs& out, const ScenarioInstance& scn);

using Predictor = std::function<HeadOutputs(const std::vector<double>&)>;

Predictor net_predictor(const MultiTaskNet& net);

struct EvalReport {
  std::size_t samples = 0;
  double acc_exact = 0.0;
  double acc_bit = 0.0;
  double mse = 0.0;
  double mean_cost = 0.0;         // realized cost of extracted strategies
  double mean_oracle_cost = 0.0;
  double mean_gap = 0.0;          // realized - oracle
  double infeasibility_rate = 0.0;
  // Smallest gap among samples whose extracted strategy is feasible.
  double min_feasible_gap = 0.0;
};

// Samples whose strategy violates a constraint are costed as-is and counted
// in infeasibility_rate.
EvalReport evaluate_model(const Predictor& predict, const LabeledDataset& ds,
                          const FeatureScaler& scaler);

struct ExperimentSizes {
  std::size_t train = 10000;
  std::size_t stream = 2000;
  std::size_t test = 1000;
};

struct ExperimentConfig {
  DomainConfig source;
  DomainConfig target;
  NetConfig net;
  TrainConfig train;
  AdaptConfig adapt;
  ExperimentSizes sizes;
  std::vector<std::uint64_t> seeds{1, 2, 3, 4, 5};
};

// Per-seed copies of the configs; every seeded component gets its own substream.
ExperimentConfig seeded(const ExperimentConfig& cfg, std::uint64_t seed);

struct PipelineRun {
  FeatureScaler scaler;
  MultiTaskNet frozen;
  MultiTaskNet adapted;
  TrainingLog train_log;
  StreamResult stream;
};

// Generates the seeded source training set and the unlabeled target stream,
// trains offline, then adapts a copy of the source model on the stream.
PipelineRun train_and_adapt(const ExperimentConfig& seeded_cfg);

struct ShiftRow {
  std::uint64_t seed = 0;
  std::string model;   // frozen | mtda | oracle
  std::string domain;  // source | target
  EvalReport report;
};

struct ShiftTable {
  std::vector<ShiftRow> rows;

  void write_csv(std::ostream& out) const;
  // Mean of a report field over seeds for one (model, domain).
  double mean(const std::string& model, const std::string& domain,
              double EvalReport::*field) const;
};

ShiftTable run_shift_experiment(const ExperimentConfig& cfg);

enum class SweepAxis { kServer, kDataVolume };

std::string to_string(SweepAxis axis);
SweepAxis sweep_axis_from_string(const std::string& s);

struct SweepConfig {
  SweepAxis axis = SweepAxis::kServer;
  int bins = 5;
  std::size_t samples_per_bin = 200;
};

struct SweepRow {
  std::uint64_t seed = 0;
  int bin = 0;
  double lo = 0.0;
  double hi = 0.0;
  std::string model;
  double mean_cost = 0.0;

  double mid() const { return 0.5 * (lo + hi); }
};

struct SweepTable {
  SweepAxis axis = SweepAxis::kServer;
  std::vector<SweepRow> rows;

  void write_csv(std::ostream& out) const;
  // Per-bin mean cost of `model` averaged over seeds, ordered by bin.
  std::vector<double> curve(const std::string& model) const;
};

struct NamedModel {
  std::string name;
  Predictor predict;
};

// Splits the target range of the swept variable into equal bins, samples
// labeled scenarios per bin, and reports mean realized cost per model plus the
// oracle cost.
SweepTable run_cost_sweep(const SweepConfig& sweep, const DomainConfig& target,
                          const std::vector<NamedModel>& models, const FeatureScaler& scaler,
                          std::uint64_t seed = 0);

// Trains and adapts per seed, then sweeps frozen and adapted models.
SweepTable run_sweep_experiment(const ExperimentConfig& cfg, const SweepConfig& sweep);

// Least-squares slope of y against x.
double trend_slope(const std::vector<double>& x, const std::vector<double>& y);

}  // namespace mtda
