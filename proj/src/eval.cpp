#include "mtda/eval.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <ostream>

#include "mtda/csv.hpp"
#include "mtda/errors.hpp"

namespace mtda {

namespace {

enum SeedStream : std::uint64_t {
  kSourceTrain = 101,
  kTargetStream,
  kNetInit,
  kTrainShuffle,
  kAdapt,
  kSourceTest,
  kTargetTest,
  kSweepBase = 1000,
};

DomainConfig with_seed(DomainConfig cfg, std::uint64_t seed) {
  cfg.seed = seed;
  return cfg;
}

}  // namespace

Strategy extract_strategy(const HeadOutputs& out, const ScenarioInstance& scn) {
  const int n = scn.size();
  if (static_cast<int>(out.y_c.size()) != n || static_cast<int>(out.y_r.size()) != n) {
    throw DimensionMismatch("head outputs do not match scenario size");
  }
  Strategy st;
  st.decision.v.assign(n, 0);
  st.alloc.r.assign(n, 0.0);
  double sum = 0.0;
  int offloaded = 0;
  bool degenerate = false;
  for (int i = 0; i < n; ++i) {
    if (!offload_threshold(out.y_c[i])) continue;
    st.decision.v[i] = 1;
    ++offloaded;
    if (!(out.y_r[i] > 0.0) || !std::isfinite(out.y_r[i])) degenerate = true;
    sum += out.y_r[i];
  }
  if (offloaded == 0) return st;
  for (int i = 0; i < n; ++i) {
    if (st.decision.v[i] == 0) continue;
    st.alloc.r[i] = degenerate || !(sum > 0.0) ? 1.0 / offloaded : out.y_r[i] / sum;
  }
  return st;
}

Predictor net_predictor(const MultiTaskNet& net) {
  return [&net](const std::vector<double>& x) { return net.forward(x); };
}

EvalReport evaluate_model(const Predictor& predict, const LabeledDataset& ds,
                          const FeatureScaler& scaler) {
  if (!ds.labeled()) throw InvalidParameter("evaluation requires a labeled dataset");
  EvalReport rep;
  rep.samples = ds.size();
  if (ds.empty()) return rep;

  std::vector<HeadOutputs> preds;
  std::vector<HeadTargets> targets;
  preds.reserve(ds.size());
  targets.reserve(ds.size());
  std::size_t infeasible = 0;
  double min_gap = std::numeric_limits<double>::infinity();
  for (const LabeledSample& s : ds.samples) {
    HeadOutputs out = predict(scaler.encode(s.x));
    const Strategy st = extract_strategy(out, s.x);
    const double realized = total_cost(s.x, st.decision, st.alloc);
    const double gap = realized - s.label->cost;
    rep.mean_cost += realized;
    rep.mean_oracle_cost += s.label->cost;
    rep.mean_gap += gap;
    if (check_feasible(s.x, st.decision, st.alloc).feasible()) {
      min_gap = std::min(min_gap, gap);
    } else {
      ++infeasible;
    }
    preds.push_back(std::move(out));
    targets.push_back(targets_from_label(*s.label));
  }
  const double m = static_cast<double>(ds.size());
  rep.mean_cost /= m;
  rep.mean_oracle_cost /= m;
  rep.mean_gap /= m;
  rep.infeasibility_rate = static_cast<double>(infeasible) / m;
  rep.min_feasible_gap = std::isfinite(min_gap) ? min_gap : 0.0;
  const SplitMetrics sm = score_predictions(preds, targets);
  rep.acc_exact = sm.acc_exact;
  rep.acc_bit = sm.acc_bit;
  rep.mse = sm.mse;
  return rep;
}

ExperimentConfig seeded(const ExperimentConfig& cfg, std::uint64_t seed) {
  ExperimentConfig out = cfg;
  out.source.seed = derive_seed(seed, kSourceTrain);
  out.target.seed = derive_seed(seed, kTargetStream);
  out.net.seed = derive_seed(seed, kNetInit);
  out.train.seed = derive_seed(seed, kTrainShuffle);
  out.adapt.seed = derive_seed(seed, kAdapt);
  out.seeds = {seed};
  return out;
}

PipelineRun train_and_adapt(const ExperimentConfig& cfg) {
  if (cfg.source.n_users != cfg.target.n_users || cfg.net.n_users != cfg.source.n_users) {
    throw DimensionMismatch("source, target and network must agree on n_users");
  }
  FeatureScaler scaler = FeatureScaler::covering({cfg.source, cfg.target});
  const LabeledDataset train = build_dataset(cfg.source, cfg.sizes.train, true, DomainTag::kSource);
  TrainResult trained = train_offline(train, scaler, cfg.net, cfg.train);

  const LabeledDataset stream_ds =
      build_dataset(cfg.target, cfg.sizes.stream, false, DomainTag::kTarget);
  const EncodedSet stream = encode(stream_ds, scaler);
  AdaptState state(trained.net, cfg.adapt);
  StreamResult sr = run_stream(state, stream.x, cfg.adapt);

  return PipelineRun{std::move(scaler), std::move(trained.net), std::move(state.student),
                     std::move(trained.log), std::move(sr)};
}

ShiftTable run_shift_experiment(const ExperimentConfig& cfg) {
  if (cfg.seeds.empty()) throw InvalidParameter("experiment needs at least one seed");
  ShiftTable table;
  for (std::uint64_t seed : cfg.seeds) {
    const ExperimentConfig sc = seeded(cfg, seed);
    const PipelineRun run = train_and_adapt(sc);

    const LabeledDataset source_test = build_dataset(
        with_seed(cfg.source, derive_seed(seed, kSourceTest)), cfg.sizes.test, true, DomainTag::kSource);
    const LabeledDataset target_test = build_dataset(
        with_seed(cfg.target, derive_seed(seed, kTargetTest)), cfg.sizes.test, true, DomainTag::kTarget);

    const Predictor frozen = net_predictor(run.frozen);
    const Predictor adapted = net_predictor(run.adapted);
    for (const auto& [domain, ds] : {std::pair<std::string, const LabeledDataset*>{"source", &source_test},
                                     std::pair<std::string, const LabeledDataset*>{"target", &target_test}}) {
      table.rows.push_back({seed, "frozen", domain, evaluate_model(frozen, *ds, run.scaler)});
      table.rows.push_back({seed, "mtda", domain, evaluate_model(adapted, *ds, run.scaler)});
      EvalReport oracle;
      oracle.samples = ds->size();
      oracle.acc_exact = oracle.acc_bit = 1.0;
      for (const LabeledSample& s : ds->samples) oracle.mean_cost += s.label->cost;
      oracle.mean_cost /= static_cast<double>(ds->size());
      oracle.mean_oracle_cost = oracle.mean_cost;
      table.rows.push_back({seed, "oracle", domain, oracle});
    }
  }
  return table;
}

void ShiftTable::write_csv(std::ostream& out) const {
  out << "seed,model,domain,acc_exact,acc_bit,mse,mean_cost\n";
  for (const ShiftRow& r : rows) {
    csv::row(out, r.seed, r.model, r.domain, r.report.acc_exact, r.report.acc_bit, r.report.mse,
             r.report.mean_cost);
  }
}

double ShiftTable::mean(const std::string& model, const std::string& domain,
                        double EvalReport::*field) const {
  double sum = 0.0;
  int count = 0;
  for (const ShiftRow& r : rows) {
    if (r.model == model && r.domain == domain) {
      sum += r.report.*field;
      ++count;
    }
  }
  if (count == 0) throw InvalidParameter("no rows for " + model + "/" + domain);
  return sum / count;
}

std::string to_string(SweepAxis axis) {
  return axis == SweepAxis::kServer ? "f_server" : "data_volume";
}

SweepAxis sweep_axis_from_string(const std::string& s) {
  if (s == "f_server") return SweepAxis::kServer;
  if (s == "data_volume" || s == "data-volume") return SweepAxis::kDataVolume;
  throw InvalidParameter("unknown sweep axis '" + s + "'");
}

SweepTable run_cost_sweep(const SweepConfig& sweep, const DomainConfig& target,
                          const std::vector<NamedModel>& models, const FeatureScaler& scaler,
                          std::uint64_t seed) {
  if (sweep.bins < 1) throw InvalidParameter("sweep needs at least one bin");
  if (sweep.samples_per_bin == 0) throw InvalidParameter("sweep needs samples per bin");
  Range DomainConfig::*member = sweep.axis == SweepAxis::kServer ? &DomainConfig::f_server
                                                                   : &DomainConfig::s;
  const Range full = target.*member;
  if (!(full.hi > full.lo)) throw InvalidParameter("swept range is degenerate");

  SweepTable table;
  table.axis = sweep.axis;
  const double width = (full.hi - full.lo) / sweep.bins;
  // every bin replays the same draws
  const std::uint64_t bin_seed = derive_seed(derive_seed(target.seed, seed), kSweepBase);
  for (int b = 0; b < sweep.bins; ++b) {
    DomainConfig cfg = target;
    const double lo = full.lo + b * width;
    const double hi = b + 1 == sweep.bins ? full.hi : lo + width;
    cfg.*member = Range{lo, hi};
    cfg.seed = bin_seed;
    const LabeledDataset ds = build_dataset(cfg, sweep.samples_per_bin, true, DomainTag::kTarget);

    double oracle = 0.0;
    for (const LabeledSample& s : ds.samples) oracle += s.label->cost;
    table.rows.push_back({seed, b, lo, hi, "oracle", oracle / static_cast<double>(ds.size())});
    for (const NamedModel& m : models) {
      table.rows.push_back({seed, b, lo, hi, m.name, evaluate_model(m.predict, ds, scaler).mean_cost});
    }
  }
  return table;
}

SweepTable run_sweep_experiment(const ExperimentConfig& cfg, const SweepConfig& sweep) {
  if (cfg.seeds.empty()) throw InvalidParameter("sweep needs at least one seed");
  SweepTable all;
  all.axis = sweep.axis;
  for (std::uint64_t seed : cfg.seeds) {
    const PipelineRun run = train_and_adapt(seeded(cfg, seed));
    const std::vector<NamedModel> models{{"frozen", net_predictor(run.frozen)},
                                         {"mtda", net_predictor(run.adapted)}};
    SweepTable t = run_cost_sweep(sweep, cfg.target, models, run.scaler, seed);
    all.rows.insert(all.rows.end(), t.rows.begin(), t.rows.end());
  }
  return all;
}

void SweepTable::write_csv(std::ostream& out) const {
  out << "seed,axis,bin,lo,hi,mid,model,mean_cost\n";
  for (const SweepRow& r : rows) {
    csv::row(out, r.seed, to_string(axis), r.bin, r.lo, r.hi, r.mid(), r.model, r.mean_cost);
  }
}

std::vector<double> SweepTable::curve(const std::string& model) const {
  std::map<int, std::pair<double, int>> acc;
  for (const SweepRow& r : rows) {
    if (r.model != model) continue;
    auto& [sum, count] = acc[r.bin];
    sum += r.mean_cost;
    ++count;
  }
  std::vector<double> out;
  for (const auto& [bin, sc] : acc) out.push_back(sc.first / sc.second);
  return out;
}

double trend_slope(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size() || x.size() < 2) throw InvalidParameter("slope needs >= 2 points");
  const double n = static_cast<double>(x.size());
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double sxy = 0.0, sxx = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
  }
  return sxx > 0.0 ? sxy / sxx : 0.0;
}

}  // namespace mtda
