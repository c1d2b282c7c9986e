#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <filesystem>
#include <fstream>
#include <functional>

#include "mtda/config.hpp"
#include "mtda/errors.hpp"

using namespace mtda;
namespace fs = std::filesystem;

namespace {

std::string config_error(const std::string& text) {
  try {
    parse_run_config(text);
  } catch (const ConfigError& e) {
    return e.what();
  }
  return "";
}

bool mentions(const std::string& msg, const std::string& what) {
  return msg.find(what) != std::string::npos;
}

}  // namespace

TEST_CASE("empty object gives the defaults") {
  const RunConfig cfg = parse_run_config("{}");
  CHECK(cfg.n_users() == 3);
  CHECK(cfg.source == shift_source_preset(3));
  CHECK(cfg.target == shift_target_preset(3));
  CHECK(cfg.seeds == std::vector<std::uint64_t>{1, 2, 3, 4, 5});
  CHECK(cfg.eval.sizes.train == 10000);
  CHECK(cfg.eval.sizes.stream == 2000);
  CHECK(cfg.eval.sizes.test == 1000);
  CHECK(cfg.output_dir.empty());
}

TEST_CASE("unknown keys are rejected with their path") {
  CHECK(mentions(config_error(R"({"colour": 1})"), "unknown key 'colour'"));
  CHECK(mentions(config_error(R"({"train": {"epoch": 3}})"), "unknown key 'train.epoch'"));
  CHECK(mentions(config_error(R"({"domain": {"source": {"s": [1, 2]}}})"),
                 "unknown key 'domain.source.s'"));
  CHECK(mentions(config_error(R"({"domain": {"middle": {}}})"), "unknown key 'domain.middle'"));
  CHECK(mentions(config_error(R"({"adapt": {"restore": 0.1}})"), "adapt.restore"));
}

TEST_CASE("type errors name the key") {
  CHECK(mentions(config_error(R"({"train": {"epochs": "ten"}})"), "train.epochs"));
  CHECK(mentions(config_error(R"({"train": {"epochs": 2.5}})"), "train.epochs"));
  CHECK(mentions(config_error(R"({"adapt": {"permute_users": 1}})"), "adapt.permute_users"));
  CHECK(mentions(config_error(R"({"eval": {"test_size": -4}})"), "eval.test_size"));
  CHECK(mentions(config_error(R"({"seeds": [1, -2]})"), "seeds"));
  CHECK(mentions(config_error(R"({"net": {"activation": "relu"}})"), "net.activation"));
  CHECK(mentions(config_error(R"({"domain": {"source": {"u_mbps": [1, 2, 3]}}})"),
                 "domain.source.u_mbps"));
  CHECK(mentions(config_error("{oops"), "malformed JSON"));
  CHECK(mentions(config_error("[1, 2]"), "expected an object"));
}

TEST_CASE("values outside their domain are refused") {
  CHECK(mentions(config_error(R"({"domain": {"target": {"s_kbit": [700, 600]}}})"),
                 "domain.target.s_kbit: min exceeds max"));
  CHECK(mentions(config_error(R"({"adapt": {"restore_p": 1.5}})"), "restore_p"));
  CHECK(mentions(config_error(R"({"adapt": {"ema_beta": -0.1}})"), "ema_beta"));
  CHECK(mentions(config_error(R"({"train": {"val_split": 1.0}})"), "val_split"));
  CHECK(mentions(config_error(R"({"eval": {"sweep_bins": 0}})"), "eval.sweep_bins"));
  CHECK(mentions(config_error(R"({"seeds": []})"), "seeds"));
  CHECK(mentions(config_error(R"({"net": {"hidden": [8, 0]}})"), "net"));
}

TEST_CASE("units convert to SI") {
  const RunConfig cfg = parse_run_config(R"({
    "domain": {"source": {"s_kbit": [10, 20], "f_server_ghz": 4, "u_mbps": [1, 2],
                          "nu_loc_ghz": [0.5, 1], "theta_s": [1, 3], "p_t_w": 0.2}}
  })");
  CHECK(cfg.source.s == Range{10e3, 20e3});
  CHECK(cfg.source.f_server == Range{4e9, 4e9});
  CHECK(cfg.source.u == Range{1e6, 2e6});
  CHECK(cfg.source.nu_loc == Range{0.5e9, 1e9});
  CHECK(cfg.source.theta == Range{1.0, 3.0});
  CHECK(cfg.source.p_t == Range{0.2, 0.2});
  // untouched keys keep the preset
  CHECK(cfg.source.d == shift_source_preset(3).d);
}

TEST_CASE("presets and user count") {
  const RunConfig cfg = parse_run_config(R"({
    "net": {"n_users": 5},
    "domain": {"source": {"preset": "shift-target", "seed": 9}}
  })");
  CHECK(cfg.n_users() == 5);
  CHECK(cfg.source.n_users == 5);
  CHECK(cfg.target.n_users == 5);
  CHECK(cfg.source.s == shift_target_preset(5).s);
  CHECK(cfg.source.seed == 9);
  CHECK(mentions(config_error(R"({"domain": {"source": {"preset": "mars"}}})"),
                 "domain.source.preset"));

  RunConfig c2;
  c2.set_n_users(4);
  CHECK(c2.source.n_users == 4);
  CHECK(c2.experiment().net.n_users == 4);
}

TEST_CASE("resolved config round trips") {
  const RunConfig cfg = parse_run_config(R"({
    "net": {"n_users": 2, "hidden": [16, 8], "activation": "sigmoid", "seed": 4},
    "train": {"epochs": 7, "lr": 0.002},
    "adapt": {"restore_p": 0.05, "permute_users": false, "n_augment": 2, "augment_weights": [1, 2]},
    "eval": {"sweep_axis": "data_volume", "stream_size": 300},
    "seeds": [11, 12],
    "output_dir": "runs/x",
    "domain": {"target": {"u_mbps": [0.75, 3.5]}}
  })");
  const std::string text = to_json(cfg);
  const RunConfig back = parse_run_config(text);
  CHECK(to_json(back) == text);
  CHECK(back.source == cfg.source);
  CHECK(back.target == cfg.target);
  CHECK(back.net.hidden == std::vector<int>{16, 8});
  CHECK(back.net.activation == Activation::kSigmoid);
  CHECK(back.adapt.augment_weights == std::vector<double>{1.0, 2.0});
  CHECK_FALSE(back.adapt.permute_users);
  CHECK(back.eval.sweep.axis == SweepAxis::kDataVolume);
  CHECK(back.seeds == std::vector<std::uint64_t>{11, 12});
  CHECK(back.output_dir == "runs/x");
  CHECK(back.train.epochs == 7);

  // defaults round trip too
  CHECK(to_json(parse_run_config(to_json(RunConfig{}))) == to_json(RunConfig{}));
}

TEST_CASE("loading from disk") {
  const fs::path dir = fs::temp_directory_path() / "mtda_test_config";
  fs::create_directories(dir);
  {
    std::ofstream(dir / "c.json") << R"({"seeds": [3]})";
  }
  CHECK(load_run_config(dir / "c.json").seeds == std::vector<std::uint64_t>{3});
  CHECK_THROWS_AS(load_run_config(dir / "absent.json"), ConfigError);
}
