// End-to-end acceptance checks. One PASS/FAIL line per criterion; the exit
// status is non-zero when any criterion fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "gradcheck.hpp"
#include "mtda/cli.hpp"
#include "mtda/errors.hpp"
#include "mtda/eval.hpp"
#include "mtda/oracle.hpp"

using namespace mtda;
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

namespace {

// Tolerances and thresholds.
constexpr int kOracleInstances = 200;
constexpr double kOracleGridStep = 0.01;
constexpr double kOracleRelGap = 1e-3;
constexpr double kOracleSlack = 1e-9;
constexpr double kOracleSeconds = 60.0;

constexpr int kGradNets = 50;
constexpr double kGradStep = 1e-5;
constexpr double kGradRelError = 1e-4;

constexpr double kMinAccBit = 0.85;
constexpr double kMinAccExact = 0.6;
constexpr double kMaxMse = 0.02;
constexpr double kTrainSeconds = 300.0;

constexpr double kMinBinShare = 0.8;

constexpr int kRestoreSteps = 1000;
constexpr double kRestoreP = 0.01;
constexpr double kRestoreSigmas = 3.0;

constexpr double kSmokeSeconds = 180.0;

const std::vector<std::uint64_t> kSeeds{1, 2, 3, 4, 5};

// Held-out test sets use substreams of their own.
constexpr std::uint64_t kSourceTestStream = 9001;
constexpr std::uint64_t kTargetTestStream = 9002;

int failures = 0;
std::map<int, std::string> verdicts;  // printed in order at the end

void report(int id, const std::string& name, bool pass, const std::string& detail) {
  std::string d = detail;
  while (!d.empty() && (d.back() == ' ' || d.back() == ';')) d.pop_back();
  char line[1024];
  std::snprintf(line, sizeof line, "criterion %2d %-24s %s  %s", id, name.c_str(),
                pass ? "PASS" : "FAIL", d.c_str());
  verdicts[id] = line;
  std::printf("  criterion %d done\n", id);
  std::fflush(stdout);
  if (!pass) ++failures;
}

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

double mean(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

// 1
void oracle_correctness() {
  const auto t0 = Clock::now();
  int compared = 0, dominated = 0, gap_checked = 0, gap_ok = 0;
  double worst_gap = 0.0;
  for (int n = 1; n <= 3; ++n) {
    DomainConfig cfg;
    cfg.n_users = n;
    Rng rng(derive_seed(77, static_cast<std::uint64_t>(n)));
    int found = 0;
    while (found < kOracleInstances) {
      const ScenarioInstance scn = sample_scenario(cfg, rng);
      OffloadSolution ex;
      try {
        ex = solve_exhaustive(scn);
      } catch (const InfeasibleScenario&) {
        continue;
      }
      ++found;
      const OffloadSolution gr = solve_grid(scn, kOracleGridStep);
      ++compared;
      if (ex.cost <= gr.cost + kOracleSlack * std::max(1.0, std::abs(gr.cost))) ++dominated;
      const auto alloc = allocate_optimal(scn, ex.decision);
      if (alloc && !alloc->any_lower_bound_active()) {
        ++gap_checked;
        const double gap = (gr.cost - ex.cost) / ex.cost;
        worst_gap = std::max(worst_gap, gap);
        if (gap <= kOracleRelGap) ++gap_ok;
      }
    }
  }
  const double secs = seconds_since(t0);
  const bool pass = dominated == compared && gap_ok == gap_checked && secs < kOracleSeconds;
  report(1, "oracle correctness", pass,
         fmt("exhaustive<=grid %d/%d, gap<=%.0e %d/%d (worst %.2e), %.1f s", dominated, compared,
             kOracleRelGap, gap_ok, gap_checked, worst_gap, secs));
}

// 2
void gradient_fidelity() {
  double worst = 0.0;
  for (int k = 0; k < kGradNets; ++k) {
    testing::GradCheckCase c = testing::random_grad_case(derive_seed(2024, k), 4);
    const LossWeights lw;
    worst = std::max(worst, testing::max_grad_rel_error(c, lw.chi_c, lw.chi_r, kGradStep));
    // pseudo-labels are soft in both heads
    Rng rng(derive_seed(2025, k));
    for (HeadTargets& t : c.targets) {
      for (double& v : t.c) v = rng.uniform();
    }
    worst = std::max(worst, testing::max_grad_rel_error(c, lw.a, lw.b, kGradStep));
  }
  report(2, "gradient fidelity", worst <= kGradRelError,
         fmt("max relative error %.2e over %d nets x 2 losses", worst, kGradNets));
}

struct SeedRun {
  std::uint64_t seed = 0;
  PipelineRun run;
  MultiTaskNet no_restore;  // same stream, restore_p = 0
  double pipeline_seconds = 0.0;
  EvalReport frozen_src, frozen_tgt, adapted_src, adapted_tgt, no_restore_src;
};

std::vector<SeedRun> shift_runs(int n) {
  ExperimentConfig base;
  base.source = shift_source_preset(n);
  base.target = shift_target_preset(n);
  base.net.n_users = n;
  std::vector<SeedRun> out;
  for (std::uint64_t seed : kSeeds) {
    const ExperimentConfig sc = seeded(base, seed);
    SeedRun r;
    r.seed = seed;
    const auto t0 = Clock::now();
    r.run = train_and_adapt(sc);
    r.pipeline_seconds = seconds_since(t0);

    AdaptConfig p0 = sc.adapt;
    p0.restore_p = 0.0;
    const LabeledDataset stream = build_dataset(sc.target, sc.sizes.stream, false, DomainTag::kTarget);
    AdaptState st(r.run.frozen, p0);
    run_stream(st, encode(stream, r.run.scaler).x, p0);
    r.no_restore = st.student;

    DomainConfig src = sc.source, tgt = sc.target;
    src.seed = derive_seed(seed, kSourceTestStream);
    tgt.seed = derive_seed(seed, kTargetTestStream);
    const LabeledDataset src_test = build_dataset(src, sc.sizes.test, true, DomainTag::kSource);
    const LabeledDataset tgt_test = build_dataset(tgt, sc.sizes.test, true, DomainTag::kTarget);
    const FeatureScaler& scaler = r.run.scaler;
    r.frozen_src = evaluate_model(net_predictor(r.run.frozen), src_test, scaler);
    r.frozen_tgt = evaluate_model(net_predictor(r.run.frozen), tgt_test, scaler);
    r.adapted_src = evaluate_model(net_predictor(r.run.adapted), src_test, scaler);
    r.adapted_tgt = evaluate_model(net_predictor(r.run.adapted), tgt_test, scaler);
    r.no_restore_src = evaluate_model(net_predictor(r.no_restore), src_test, scaler);
    std::printf("  N=%d seed %llu: %.1f s; target exact %.4f -> %.4f, mse %.5f -> %.5f; "
                "source exact %.4f, p=0 %.4f\n",
                n, static_cast<unsigned long long>(seed), r.pipeline_seconds, r.frozen_tgt.acc_exact,
                r.adapted_tgt.acc_exact, r.frozen_tgt.mse, r.adapted_tgt.mse, r.adapted_src.acc_exact,
                r.no_restore_src.acc_exact);
    std::fflush(stdout);
    out.push_back(std::move(r));
  }
  return out;
}

double avg(const std::vector<SeedRun>& runs, EvalReport SeedRun::*which, double EvalReport::*field) {
  std::vector<double> v;
  for (const SeedRun& r : runs) v.push_back(r.*which.*field);
  return mean(v);
}

// 3: the seed-1 source model at N=3; the timed span includes adaptation, so it
// bounds training time from above.
void offline_quality(const std::vector<SeedRun>& n3) {
  const SeedRun& r = n3.front();
  const EvalReport& e = r.frozen_src;
  const bool pass = e.acc_bit >= kMinAccBit && e.acc_exact >= kMinAccExact && e.mse <= kMaxMse &&
                    r.pipeline_seconds < kTrainSeconds;
  report(3, "offline training quality", pass,
         fmt("per-user %.4f (>=%.2f), exact %.4f (>=%.2f), mse %.5f (<=%.2f), %.1f s", e.acc_bit,
             kMinAccBit, e.acc_exact, kMinAccExact, e.mse, kMaxMse, r.pipeline_seconds));
}

// 4
void adaptation_benefit(const std::vector<SeedRun>& n3, const std::vector<SeedRun>& n5) {
  bool pass = true;
  std::string detail;
  for (const auto* runs : {&n3, &n5}) {
    const double fe = avg(*runs, &SeedRun::frozen_tgt, &EvalReport::acc_exact);
    const double ae = avg(*runs, &SeedRun::adapted_tgt, &EvalReport::acc_exact);
    const double fm = avg(*runs, &SeedRun::frozen_tgt, &EvalReport::mse);
    const double am = avg(*runs, &SeedRun::adapted_tgt, &EvalReport::mse);
    pass = pass && ae > fe && am < fm;
    detail += fmt("N=%d exact %.4f->%.4f mse %.5f->%.5f; ", runs->front().run.frozen.n_users(), fe,
                  ae, fm, am);
  }
  report(4, "adaptation benefit", pass, detail);
}

// 5
void degradation_with_n(const std::vector<SeedRun>& n3, const std::vector<SeedRun>& n5) {
  const double f3 = avg(n3, &SeedRun::frozen_tgt, &EvalReport::acc_exact);
  const double f5 = avg(n5, &SeedRun::frozen_tgt, &EvalReport::acc_exact);
  const double a3 = avg(n3, &SeedRun::adapted_tgt, &EvalReport::acc_exact);
  const double a5 = avg(n5, &SeedRun::adapted_tgt, &EvalReport::acc_exact);
  report(5, "degradation with N", f5 <= f3 && a5 <= a3,
         fmt("frozen %.4f (N=3) vs %.4f (N=5); adapted %.4f vs %.4f", f3, f5, a3, a5));
}

// 6
void cost_dominance(const std::vector<SeedRun>& n3) {
  const DomainConfig target = shift_target_preset(3);
  bool pass = true;
  std::string detail;
  for (SweepAxis axis : {SweepAxis::kServer, SweepAxis::kDataVolume}) {
    SweepConfig sw;
    sw.axis = axis;
    SweepTable all;
    all.axis = axis;
    for (const SeedRun& r : n3) {
      const std::vector<NamedModel> models{{"frozen", net_predictor(r.run.frozen)},
                                           {"mtda", net_predictor(r.run.adapted)}};
      const SweepTable t = run_cost_sweep(sw, target, models, r.run.scaler, r.seed);
      all.rows.insert(all.rows.end(), t.rows.begin(), t.rows.end());
    }
    const std::vector<double> frozen = all.curve("frozen"), adapted = all.curve("mtda");
    int wins = 0;
    for (std::size_t b = 0; b < frozen.size(); ++b) wins += adapted[b] <= frozen[b] ? 1 : 0;
    const double share = static_cast<double>(wins) / static_cast<double>(frozen.size());
    pass = pass && share >= kMinBinShare;
    detail += fmt("%s: adapted<=frozen in %d/%zu bins; ", to_string(axis).c_str(), wins,
                  frozen.size());
    if (axis == SweepAxis::kDataVolume) {
      std::vector<double> mids;
      for (const SweepRow& row : all.rows) {
        if (row.seed == n3.front().seed && row.model == "oracle") mids.push_back(row.mid());
      }
      for (const char* model : {"oracle", "frozen", "mtda"}) {
        const double slope = trend_slope(mids, all.curve(model));
        pass = pass && slope >= 0.0;
        detail += fmt("%s slope %.3g/bit; ", model, slope);
      }
    }
  }
  report(6, "cost dominance", pass, detail);
}

// 7
void forgetting_mitigation(const std::vector<SeedRun>& n3) {
  const double with_restore = avg(n3, &SeedRun::adapted_src, &EvalReport::acc_exact);
  const double without = avg(n3, &SeedRun::no_restore_src, &EvalReport::acc_exact);
  const double frozen = avg(n3, &SeedRun::frozen_src, &EvalReport::acc_exact);
  report(7, "forgetting mitigation", with_restore >= without,
         fmt("source exact: p=0.01 %.4f, p=0 %.4f (frozen %.4f)", with_restore, without, frozen));
}

// 8
void algebraic_invariants() {
  NetConfig nc;
  nc.n_users = 3;
  nc.hidden = {16, 8};
  const MultiTaskNet source(nc);
  DomainConfig dom = shift_target_preset(3);
  const FeatureScaler scaler = FeatureScaler::covering({shift_source_preset(3), dom});
  const EncodedSet stream = encode(build_dataset(dom, 60, false, DomainTag::kTarget), scaler);

  AdaptConfig fixed_teacher;
  fixed_teacher.ema_beta = 1.0;
  fixed_teacher.lr = 1e-2;
  AdaptState a(source, fixed_teacher);
  run_stream(a, stream.x, fixed_teacher);
  const bool teacher_ok = a.teacher == source && !(a.student == source);

  AdaptConfig full_restore;
  full_restore.restore_p = 1.0;
  full_restore.lr = 1e-2;
  AdaptState b(source, full_restore);
  run_stream(b, stream.x, full_restore);
  const bool restore_ok = b.student == source;

  AdaptConfig frozen;
  frozen.restore_p = 0.0;
  frozen.lr = 0.0;
  AdaptState c(source, frozen);
  const StreamResult sr = run_stream(c, stream.x, frozen);
  bool frozen_ok = c.student == source;
  for (std::size_t i = 0; i < stream.size(); ++i) {
    const HeadOutputs o = source.forward(stream.x[i]);
    frozen_ok = frozen_ok && sr.predictions[i].y_c == o.y_c && sr.predictions[i].y_r == o.y_r;
  }

  AdaptConfig sto;
  sto.restore_p = kRestoreP;
  sto.n_augment = 1;
  AdaptState d(source, sto);
  std::vector<std::vector<double>> long_stream;
  for (int i = 0; i < kRestoreSteps; ++i) long_stream.push_back(stream.x[i % stream.size()]);
  const StreamResult lr = run_stream(d, long_stream, sto);
  double restored = 0.0;
  for (const AdaptLogRow& row : lr.log) restored += row.restored_fraction;
  const double trials = static_cast<double>(kRestoreSteps) * static_cast<double>(source.size());
  const double frac = restored / kRestoreSteps;
  const double se = std::sqrt(kRestoreP * (1.0 - kRestoreP) / trials);
  const bool binom_ok = std::abs(frac - kRestoreP) <= kRestoreSigmas * se;

  report(8, "algebraic invariants", teacher_ok && restore_ok && frozen_ok && binom_ok,
         fmt("ema=1 teacher fixed %s, p=1 restores %s, lr=0/p=0 frozen %s, restored %.5f vs %.2f "
             "(%.2f se)",
             teacher_ok ? "yes" : "no", restore_ok ? "yes" : "no", frozen_ok ? "yes" : "no", frac,
             kRestoreP, std::abs(frac - kRestoreP) / se));
}

std::map<std::string, std::string> snapshot(const fs::path& dir) {
  std::map<std::string, std::string> files;
  for (const auto& e : fs::recursive_directory_iterator(dir)) {
    if (!e.is_regular_file()) continue;
    std::ifstream in(e.path(), std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    files[fs::relative(e.path(), dir).string()] = ss.str();
  }
  return files;
}

int cli(const std::vector<std::string>& args) {
  std::ostringstream out, err;
  const int code = run_cli(args, out, err);
  if (code != kExitOk) std::printf("  command failed (%d): %s", code, err.str().c_str());
  return code;
}

// 9: each command runs twice into a fresh directory; every file must match.
void determinism() {
  const fs::path root = fs::temp_directory_path() / "mtda_acceptance" / "determinism";
  fs::remove_all(root);
  fs::create_directories(root);
  {
    std::ofstream(root / "small.json")
        << R"({"net": {"hidden": [16, 16]}, "train": {"epochs": 5}})";
  }
  const std::string cfg = (root / "small.json").string();
  const std::string data = (root / "in" / "src.jsonl").string();
  const std::string stream = (root / "in" / "stream.jsonl").string();
  const std::string test = (root / "in" / "test.jsonl").string();
  const fs::path in = root / "in";
  if (cli({"gen", "-o", in.string(), "--count", "200", "--labeled", "--out", data}) ||
      cli({"gen", "-o", in.string(), "--domain", "target", "--count", "100", "--out", stream}) ||
      cli({"gen", "-o", in.string(), "--domain", "target", "--count", "100", "--labeled",
           "--seed", "5", "--out", test}) ||
      cli({"train", "-c", cfg, "-o", (root / "model").string(), "--data", data})) {
    report(9, "determinism", false, "setup failed");
    return;
  }
  const std::string ckpt = (root / "model" / "model.ckpt").string();

  struct Command {
    std::string name;
    std::vector<std::string> args;  // output dir appended
  };
  const std::vector<Command> commands{
      {"gen", {"gen", "--count", "150", "--labeled"}},
      {"train", {"train", "-c", cfg, "--data", data}},
      {"adapt", {"adapt", "--checkpoint", ckpt, "--stream", stream}},
      {"eval", {"eval", "--checkpoint", ckpt, "--data", test}},
      {"experiment",
       {"experiment", "-c", cfg, "--seeds", "1", "2", "--train-size", "150", "--stream-size", "50",
        "--test-size", "50"}},
      {"sweep",
       {"sweep", "-c", cfg, "--seeds", "1", "--train-size", "150", "--stream-size", "50", "--bins",
        "3", "--samples-per-bin", "20"}},
  };
  bool pass = true;
  std::string detail;
  for (const Command& c : commands) {
    const fs::path out = root / ("run_" + c.name);
    std::vector<std::string> args = c.args;
    args.insert(args.end(), {"-o", out.string()});
    std::map<std::string, std::string> first;
    bool same = cli(args) == kExitOk;
    if (same) {
      first = snapshot(out);
      fs::remove_all(out);
      same = cli(args) == kExitOk && snapshot(out) == first && !first.empty();
    }
    pass = pass && same;
    detail += fmt("%s %s (%zu files); ", c.name.c_str(), same ? "identical" : "DIFFERS",
                  first.size());
  }
  report(9, "determinism", pass, detail);
}

// 10
void smoke() {
  const fs::path out = fs::temp_directory_path() / "mtda_acceptance" / "smoke";
  fs::remove_all(out);
  const auto t0 = Clock::now();
  const int code = cli({"experiment", "-o", out.string(), "-n", "3", "--seeds", "1", "2",
                        "--train-size", "500", "--stream-size", "200", "--test-size", "200"});
  const double secs = seconds_since(t0);
  const bool pass = code == kExitOk && fs::exists(out / "shift.csv") && secs < kSmokeSeconds;
  report(10, "end-to-end smoke", pass, fmt("exit %d, %.1f s (< %.0f s)", code, secs, kSmokeSeconds));
}

}  // namespace

int main() {
  const auto t0 = Clock::now();
  oracle_correctness();
  gradient_fidelity();
  algebraic_invariants();
  determinism();
  smoke();

  std::printf("  training and adapting 5 seeds at N=3 and N=5 ...\n");
  std::fflush(stdout);
  const std::vector<SeedRun> n3 = shift_runs(3);
  const std::vector<SeedRun> n5 = shift_runs(5);
  offline_quality(n3);
  adaptation_benefit(n3, n5);
  degradation_with_n(n3, n5);
  cost_dominance(n3);
  forgetting_mitigation(n3);

  for (const auto& [id, line] : verdicts) std::printf("%s\n", line.c_str());
  std::printf("%d criteria failed; total %.1f s\n", failures, seconds_since(t0));
  return failures == 0 ? 0 : 1;
}
