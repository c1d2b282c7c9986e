#include "mtda/cli.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <optional>
#include <ostream>

#include "CLI11.hpp"
#include "mtda/config.hpp"
#include "mtda/csv.hpp"
#include "mtda/errors.hpp"

namespace mtda {

namespace fs = std::filesystem;

namespace {

// Options shared by every subcommand.
struct Common {
  std::string config_path;
  std::string output_dir;
  int n_users = 0;
  CLI::Option* n_users_opt = nullptr;
  CLI::Option* output_opt = nullptr;
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("-c,--config", c.config_path, "JSON run configuration")
      ->check(CLI::ExistingFile);
  c.output_opt = cmd->add_option(
      "-o,--output-dir", c.output_dir,
      std::string("Output directory (default: config output_dir, then $") + kOutputDirEnv +
          ", then " + kDefaultOutputDir + ")");
  c.n_users_opt =
      cmd->add_option("-n,--n-users", c.n_users, "Number of users N")->check(CLI::Range(1, 20));
}

template <typename T>
void override_if(CLI::Option* opt, const T& value, T& target) {
  if (opt && opt->count() > 0) target = value;
}

RunConfig resolve_config(const Common& c) {
  RunConfig cfg = c.config_path.empty() ? RunConfig{} : load_run_config(c.config_path);
  if (c.n_users_opt->count() > 0) cfg.set_n_users(c.n_users);
  if (c.output_opt->count() > 0) {
    cfg.output_dir = c.output_dir;
  } else if (cfg.output_dir.empty()) {
    const char* env = std::getenv(kOutputDirEnv);
    cfg.output_dir = env && *env ? env : kDefaultOutputDir;
  }
  return cfg;
}

// Validates after flag overrides and echoes the resolved config.
fs::path prepare_output(const RunConfig& cfg) {
  validate(cfg);
  const fs::path dir(cfg.output_dir);
  fs::create_directories(dir);
  std::ofstream out(dir / "config.json", std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + (dir / "config.json").string());
  out << to_json(cfg);
  return dir;
}

std::ofstream open_out(const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open '" + path.string() + "' for writing");
  return out;
}

LabeledDataset read_dataset(const std::string& path) {
  if (!fs::exists(path)) throw std::runtime_error("no such file: " + path);
  return read_jsonl(path);
}

FeatureScaler scaler_for(const std::optional<FeatureScaler>& stored, const RunConfig& cfg) {
  return stored ? *stored : FeatureScaler::covering({cfg.source, cfg.target});
}

const char* kEvalHeader =
    "model,domain,samples,acc_exact,acc_bit,mse,mean_cost,mean_oracle_cost,mean_gap,"
    "infeasibility_rate\n";

double mean_of(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return v.empty() ? 0.0 : s / static_cast<double>(v.size());
}

double sd_of(const std::vector<double>& v) {
  if (v.size() < 2) return 0.0;
  const double m = mean_of(v);
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return std::sqrt(s / static_cast<double>(v.size() - 1));
}

void write_shift_summary(std::ostream& out, const ShiftTable& table) {
  out << "model,domain,seeds,acc_exact,acc_exact_sd,acc_bit,acc_bit_sd,mse,mse_sd,mean_cost,"
         "mean_cost_sd\n";
  std::vector<std::pair<std::string, std::string>> keys;
  for (const ShiftRow& r : table.rows) {
    const auto k = std::make_pair(r.model, r.domain);
    if (std::find(keys.begin(), keys.end(), k) == keys.end()) keys.push_back(k);
  }
  for (const auto& [model, domain] : keys) {
    std::vector<double> ex, bit, mse, cost;
    for (const ShiftRow& r : table.rows) {
      if (r.model != model || r.domain != domain) continue;
      ex.push_back(r.report.acc_exact);
      bit.push_back(r.report.acc_bit);
      mse.push_back(r.report.mse);
      cost.push_back(r.report.mean_cost);
    }
    csv::row(out, model, domain, ex.size(), mean_of(ex), sd_of(ex), mean_of(bit), sd_of(bit),
             mean_of(mse), sd_of(mse), mean_of(cost), sd_of(cost));
  }
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Edge offloading decisions with a multi-task network and test-time adaptation",
               "mtda"};
  app.require_subcommand(1);
  // top-level help lists the flags of every subcommand
  app.set_help_flag();
  app.set_help_all_flag("-h,--help", "Print help for every subcommand and exit");

  // gen
  Common gen_c;
  std::string gen_domain = "source", gen_out, gen_preset;
  std::size_t gen_count = 1000;
  bool gen_labeled = false;
  std::uint64_t gen_seed = 0;
  auto sub = [&app](const char* name, const char* desc) {
    CLI::App* cmd = app.add_subcommand(name, desc);
    cmd->set_help_all_flag();
    cmd->set_help_flag("-h,--help", "Print this help message and exit");
    return cmd;
  };

  CLI::App* gen = sub("gen", "Sample scenarios from a domain and write JSONL");
  add_common(gen, gen_c);
  gen->add_option("--domain", gen_domain, "Domain to sample")
      ->check(CLI::IsMember({"source", "target"}))
      ->capture_default_str();
  gen->add_option("--count", gen_count, "Number of feasible scenarios")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  gen->add_flag("--labeled", gen_labeled, "Attach oracle labels");
  gen->add_option("--preset", gen_preset, "Domain preset (shift-source, shift-target)");
  CLI::Option* gen_seed_opt = gen->add_option("--seed", gen_seed, "Domain seed");
  gen->add_option("--out", gen_out, "Output JSONL (default: <output-dir>/<domain>.jsonl)");

  // train
  Common train_c;
  std::string train_data, train_ckpt;
  int train_epochs = 0, train_batch = 0;
  double train_lr = 0.0;
  std::uint64_t train_seed = 0;
  CLI::App* train = sub("train", "Train the network offline on labeled data");
  add_common(train, train_c);
  train->add_option("--data", train_data, "Labeled JSONL dataset")->required();
  train->add_option("--out-checkpoint", train_ckpt,
                    "Checkpoint path (default: <output-dir>/model.ckpt)");
  CLI::Option* train_epochs_opt =
      train->add_option("--epochs", train_epochs, "Training epochs")->check(CLI::PositiveNumber);
  CLI::Option* train_batch_opt =
      train->add_option("--batch-size", train_batch, "Minibatch size")->check(CLI::PositiveNumber);
  CLI::Option* train_lr_opt =
      train->add_option("--lr", train_lr, "Adam learning rate")->check(CLI::PositiveNumber);
  CLI::Option* train_seed_opt =
      train->add_option("--seed", train_seed, "Seed for initialization and shuffling");

  // adapt
  Common adapt_c;
  std::string adapt_ckpt, adapt_stream;
  AdaptConfig adapt_flags;
  CLI::App* adapt = sub("adapt", "Adapt a trained model on an unlabeled stream");
  add_common(adapt, adapt_c);
  adapt->add_option("--checkpoint", adapt_ckpt, "Source model checkpoint")->required();
  adapt->add_option("--stream", adapt_stream, "JSONL stream (labels ignored)")->required();
  CLI::Option* a_lr = adapt->add_option("--lr", adapt_flags.lr, "Online learning rate")
                          ->check(CLI::NonNegativeNumber);
  CLI::Option* a_ema = adapt->add_option("--ema-beta", adapt_flags.ema_beta, "Teacher EMA weight")
                           ->check(CLI::Range(0.0, 1.0));
  CLI::Option* a_p = adapt->add_option("--restore-p", adapt_flags.restore_p,
                                       "Per-weight restore probability")
                         ->check(CLI::Range(0.0, 1.0));
  CLI::Option* a_k = adapt->add_option("--n-augment", adapt_flags.n_augment,
                                       "Augmented copies per input")
                         ->check(CLI::PositiveNumber);
  CLI::Option* a_sigma = adapt->add_option("--sigma", adapt_flags.augment_sigma,
                                           "Relative jitter scale")
                             ->check(CLI::NonNegativeNumber);
  CLI::Option* a_seed = adapt->add_option("--seed", adapt_flags.seed, "Augmentation/mask seed");

  // eval
  Common eval_c;
  std::vector<std::string> eval_ckpts;
  std::string eval_data, eval_out;
  CLI::App* eval = sub("eval", "Score checkpoints on a labeled dataset");
  add_common(eval, eval_c);
  eval->add_option("--checkpoint", eval_ckpts, "Checkpoint(s); named by file stem")->required();
  eval->add_option("--data", eval_data, "Labeled JSONL dataset")->required();
  eval->add_option("--out", eval_out, "Report CSV (default: <output-dir>/eval.csv)");

  // experiment and sweep share size/seed flags
  struct RunFlags {
    std::vector<std::uint64_t> seeds;
    std::size_t train = 0, stream = 0, test = 0;
    CLI::Option *seeds_opt = nullptr, *train_opt = nullptr, *stream_opt = nullptr,
                *test_opt = nullptr;
  };
  auto add_run_flags = [](CLI::App* cmd, RunFlags& f) {
    f.seeds_opt = cmd->add_option("--seeds", f.seeds, "Seeds to run")->expected(1, -1);
    f.train_opt = cmd->add_option("--train-size", f.train, "Source training samples")
                      ->check(CLI::PositiveNumber);
    f.stream_opt = cmd->add_option("--stream-size", f.stream, "Target stream length")
                       ->check(CLI::PositiveNumber);
    f.test_opt = cmd->add_option("--test-size", f.test, "Test samples per domain")
                     ->check(CLI::PositiveNumber);
  };
  auto apply_run_flags = [](const RunFlags& f, RunConfig& cfg) {
    override_if(f.seeds_opt, f.seeds, cfg.seeds);
    override_if(f.train_opt, f.train, cfg.eval.sizes.train);
    override_if(f.stream_opt, f.stream, cfg.eval.sizes.stream);
    override_if(f.test_opt, f.test, cfg.eval.sizes.test);
  };

  Common exp_c;
  RunFlags exp_f;
  CLI::App* experiment =
      sub("experiment", "Frozen vs adapted models on source and target test sets");
  add_common(experiment, exp_c);
  add_run_flags(experiment, exp_f);

  Common sweep_c;
  RunFlags sweep_f;
  std::string sweep_axis;
  int sweep_bins = 0;
  std::size_t sweep_per_bin = 0;
  CLI::App* sweep = sub("sweep", "Mean cost per bin of a swept target variable");
  add_common(sweep, sweep_c);
  add_run_flags(sweep, sweep_f);
  CLI::Option* sweep_axis_opt = sweep->add_option("--axis", sweep_axis, "Swept variable")
                                    ->check(CLI::IsMember({"f_server", "data_volume"}));
  CLI::Option* sweep_bins_opt =
      sweep->add_option("--bins", sweep_bins, "Number of bins")->check(CLI::PositiveNumber);
  CLI::Option* sweep_per_bin_opt =
      sweep->add_option("--samples-per-bin", sweep_per_bin, "Labeled scenarios per bin")
          ->check(CLI::PositiveNumber);

  try {
    std::vector<std::string> rev(args.rbegin(), args.rend());
    app.parse(rev);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (gen->parsed()) {
      RunConfig cfg = resolve_config(gen_c);
      DomainConfig& dom = gen_domain == "source" ? cfg.source : cfg.target;
      if (!gen_preset.empty()) {
        const std::uint64_t seed = dom.seed;
        dom = domain_preset(gen_preset, cfg.n_users());
        dom.seed = seed;
      }
      override_if(gen_seed_opt, gen_seed, dom.seed);
      const fs::path dir = prepare_output(cfg);
      const fs::path path = gen_out.empty() ? dir / (gen_domain + ".jsonl") : fs::path(gen_out);
      const DomainTag tag = domain_tag_from_string(gen_domain);
      const LabeledDataset ds = build_dataset(dom, gen_count, gen_labeled, tag);
      if (path.has_parent_path()) fs::create_directories(path.parent_path());
      write_jsonl(path, ds);
      write_metadata(fs::path(path.string() + ".meta.json"), ds.meta);
      out << "wrote " << ds.size() << " scenarios to " << path.string() << " (discard rate "
          << csv::num(ds.meta.discard_rate()) << ")\n";
      return kExitOk;
    }

    if (train->parsed()) {
      RunConfig cfg = resolve_config(train_c);
      override_if(train_epochs_opt, train_epochs, cfg.train.epochs);
      override_if(train_batch_opt, train_batch, cfg.train.batch_size);
      override_if(train_lr_opt, train_lr, cfg.train.lr);
      if (train_seed_opt->count() > 0) {
        cfg.train.seed = train_seed;
        cfg.net.seed = train_seed;
      }
      const LabeledDataset ds = read_dataset(train_data);
      if (ds.empty()) throw std::runtime_error("training data is empty");
      if (!ds.labeled()) throw std::runtime_error("training data must be labeled");
      cfg.set_n_users(ds.n_users());
      const fs::path dir = prepare_output(cfg);
      const FeatureScaler scaler = FeatureScaler::covering({cfg.source, cfg.target});
      const TrainResult res = train_offline(ds, scaler, cfg.net, cfg.train);
      const fs::path ckpt = train_ckpt.empty() ? dir / "model.ckpt" : fs::path(train_ckpt);
      if (ckpt.has_parent_path()) fs::create_directories(ckpt.parent_path());
      save_checkpoint(ckpt, res.net, scaler);
      std::ofstream log = open_out(dir / "training_log.csv");
      res.log.write_csv(log);
      out << "trained " << res.log.epochs.size() << " epochs, best epoch " << res.log.best_epoch
          << " (val loss " << csv::num(res.log.best_val_loss) << "); checkpoint "
          << ckpt.string() << "\n";
      return kExitOk;
    }

    if (adapt->parsed()) {
      RunConfig cfg = resolve_config(adapt_c);
      override_if(a_lr, adapt_flags.lr, cfg.adapt.lr);
      override_if(a_ema, adapt_flags.ema_beta, cfg.adapt.ema_beta);
      override_if(a_p, adapt_flags.restore_p, cfg.adapt.restore_p);
      override_if(a_k, adapt_flags.n_augment, cfg.adapt.n_augment);
      override_if(a_sigma, adapt_flags.augment_sigma, cfg.adapt.augment_sigma);
      override_if(a_seed, adapt_flags.seed, cfg.adapt.seed);
      const LabeledDataset ds = read_dataset(adapt_stream);
      if (ds.empty()) throw std::runtime_error("adaptation stream is empty");
      const Checkpoint ck = load_checkpoint(adapt_ckpt, ds.n_users());
      cfg.set_n_users(ds.n_users());
      const fs::path dir = prepare_output(cfg);
      const FeatureScaler scaler = scaler_for(ck.scaler, cfg);
      const EncodedSet stream = encode(ds, scaler);
      AdaptState state(ck.net, cfg.adapt);
      const StreamResult res = run_stream(state, stream.x, cfg.adapt);
      save_checkpoint(dir / "student.ckpt", state.student, scaler);
      save_checkpoint(dir / "teacher.ckpt", state.teacher, scaler);
      std::ofstream log = open_out(dir / "adapt_log.csv");
      res.write_log_csv(log);
      std::ofstream preds = open_out(dir / "predictions.csv");
      res.write_predictions_csv(preds);
      out << "adapted on " << stream.size() << " inputs; wrote " << (dir / "student.ckpt").string()
          << "\n";
      return kExitOk;
    }

    if (eval->parsed()) {
      RunConfig cfg = resolve_config(eval_c);
      const LabeledDataset ds = read_dataset(eval_data);
      if (!ds.labeled()) throw std::runtime_error("evaluation data must be labeled");
      if (!ds.empty()) cfg.set_n_users(ds.n_users());
      const fs::path dir = prepare_output(cfg);
      const fs::path path = eval_out.empty() ? dir / "eval.csv" : fs::path(eval_out);
      std::ofstream csv_out = open_out(path);
      csv_out << kEvalHeader;
      const std::string domain =
          ds.empty() ? to_string(ds.meta.domain_tag) : to_string(ds.samples.front().domain_tag);
      for (const std::string& p : eval_ckpts) {
        const Checkpoint ck = load_checkpoint(p, ds.empty() ? std::nullopt
                                                            : std::optional<int>(ds.n_users()));
        const FeatureScaler scaler = scaler_for(ck.scaler, cfg);
        const EvalReport rep = evaluate_model(net_predictor(ck.net), ds, scaler);
        const std::string name = fs::path(p).stem().string();
        csv::row(csv_out, name, domain, rep.samples, rep.acc_exact, rep.acc_bit, rep.mse,
                 rep.mean_cost, rep.mean_oracle_cost, rep.mean_gap, rep.infeasibility_rate);
        out << name << ": exact " << csv::num(rep.acc_exact) << ", per-user "
            << csv::num(rep.acc_bit) << ", mse " << csv::num(rep.mse) << ", cost "
            << csv::num(rep.mean_cost) << "\n";
      }
      return kExitOk;
    }

    if (experiment->parsed()) {
      RunConfig cfg = resolve_config(exp_c);
      apply_run_flags(exp_f, cfg);
      const fs::path dir = prepare_output(cfg);
      const ShiftTable table = run_shift_experiment(cfg.experiment());
      std::ofstream csv_out = open_out(dir / "shift.csv");
      table.write_csv(csv_out);
      std::ofstream summary = open_out(dir / "shift_summary.csv");
      write_shift_summary(summary, table);
      for (const char* domain : {"source", "target"}) {
        for (const char* model : {"frozen", "mtda"}) {
          out << domain << " " << model << ": exact "
              << csv::num(table.mean(model, domain, &EvalReport::acc_exact)) << ", mse "
              << csv::num(table.mean(model, domain, &EvalReport::mse)) << ", cost "
              << csv::num(table.mean(model, domain, &EvalReport::mean_cost)) << "\n";
        }
      }
      return kExitOk;
    }

    if (sweep->parsed()) {
      RunConfig cfg = resolve_config(sweep_c);
      apply_run_flags(sweep_f, cfg);
      if (sweep_axis_opt->count() > 0) cfg.eval.sweep.axis = sweep_axis_from_string(sweep_axis);
      override_if(sweep_bins_opt, sweep_bins, cfg.eval.sweep.bins);
      override_if(sweep_per_bin_opt, sweep_per_bin, cfg.eval.sweep.samples_per_bin);
      const fs::path dir = prepare_output(cfg);
      const SweepTable table = run_sweep_experiment(cfg.experiment(), cfg.eval.sweep);
      const fs::path path = dir / ("sweep_" + to_string(cfg.eval.sweep.axis) + ".csv");
      std::ofstream csv_out = open_out(path);
      table.write_csv(csv_out);
      for (const char* model : {"oracle", "frozen", "mtda"}) {
        out << model << ":";
        for (double c : table.curve(model)) out << " " << csv::num(c);
        out << "\n";
      }
      return kExitOk;
    }
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitUsage;
}

}  // namespace mtda
