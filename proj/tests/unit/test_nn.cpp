#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "gradcheck.hpp"
#include "mtda/errors.hpp"
#include "mtda/nn.hpp"

using namespace mtda;
using namespace mtda::testing;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir() {
  const fs::path dir = fs::temp_directory_path() / "mtda_test_nn";
  fs::create_directories(dir);
  return dir;
}

CheckpointError::Kind load_error_kind(const fs::path& p, std::optional<int> n = std::nullopt) {
  try {
    load_checkpoint(p, n);
  } catch (const CheckpointError& e) {
    return e.kind();
  }
  FAIL("expected a checkpoint error");
  return CheckpointError::Kind::kIo;
}

}  // namespace

TEST_CASE("zero weights give one half everywhere") {
  NetConfig cfg;
  cfg.n_users = 3;
  MultiTaskNet net(cfg, std::vector<double>(MultiTaskNet::param_count(cfg), 0.0));
  const HeadOutputs o = net.forward(std::vector<double>(cfg.input_dim(), 0.7));
  for (int n = 0; n < 3; ++n) {
    CHECK(o.y_c[n] == 0.5);
    CHECK(o.y_r[n] == 0.5);
  }
}

TEST_CASE("outputs lie in the open unit interval") {
  Rng rng(3);
  NetConfig cfg;
  cfg.n_users = 4;
  MultiTaskNet net(cfg);
  for (int t = 0; t < 200; ++t) {
    std::vector<double> x(cfg.input_dim());
    for (double& v : x) v = rng.uniform(-3.0, 3.0);
    const HeadOutputs o = net.forward(x);
    for (int n = 0; n < 4; ++n) {
      CHECK(o.y_c[n] > 0.0);
      CHECK(o.y_c[n] < 1.0);
      CHECK(o.y_r[n] > 0.0);
      CHECK(o.y_r[n] < 1.0);
    }
  }
}

TEST_CASE("golden forward values") {
  NetConfig cfg;
  cfg.n_users = 2;
  cfg.hidden = {8, 4};
  cfg.seed = 7;
  const MultiTaskNet net(cfg);
  CHECK(net.size() == 192);
  std::vector<double> x(net.input_dim());
  for (std::size_t i = 0; i < x.size(); ++i) x[i] = 0.1 * static_cast<double>(i % 10);
  const HeadOutputs o = net.forward(x);
  CHECK(o.y_c[0] == doctest::Approx(0.54908862623549504).epsilon(1e-13));
  CHECK(o.y_c[1] == doctest::Approx(0.61099151118549477).epsilon(1e-13));
  CHECK(o.y_r[0] == doctest::Approx(0.61280505873171942).epsilon(1e-13));
  CHECK(o.y_r[1] == doctest::Approx(0.56370634138288023).epsilon(1e-13));
  // same seed, same weights
  CHECK(MultiTaskNet(cfg) == net);
}

TEST_CASE("forward rejects the wrong input width") {
  const MultiTaskNet net(NetConfig{});
  CHECK_THROWS_AS(net.forward(std::vector<double>(5, 0.0)), DimensionMismatch);
}

TEST_CASE("offline loss examples") {
  const HeadTargets label{{1.0, 0.0, 1.0}, {0.25, 0.0, 0.75}};
  const HeadOutputs perfect{{1.0, 0.0, 1.0}, {0.25, 0.0, 0.75}};
  const LossParts l = loss_offline(std::span(&perfect, 1), std::span(&label, 1), LossWeights{});
  CHECK(l.reg == 0.0);
  CHECK(l.cls <= 3.0 * -std::log(1.0 - kProbClamp) + 1e-15);
  CHECK(std::isfinite(l.total));

  const HeadOutputs half{{0.5, 0.5, 0.5}, {0.1, 0.2, 0.3}};
  LossWeights lw;
  lw.chi_r = 0.0;
  const LossParts h = loss_offline(std::span(&half, 1), std::span(&label, 1), lw);
  CHECK(h.cls == doctest::Approx(3.0 * std::log(2.0)).epsilon(1e-14));
  CHECK(h.total == doctest::Approx(lw.chi_c * h.cls).epsilon(1e-15));
}

TEST_CASE("online loss examples") {
  const HeadTargets pseudo{{0.3, 0.8}, {0.4, 0.6}};
  const HeadOutputs same{{0.3, 0.8}, {0.4, 0.6}};
  const LossParts l = loss_online(std::span(&same, 1), std::span(&pseudo, 1), LossWeights{});
  CHECK(l.reg == 0.0);
  auto entropy = [](double p) { return -p * std::log(p) - (1 - p) * std::log(1 - p); };
  CHECK(l.cls == doctest::Approx(entropy(0.3) + entropy(0.8)).epsilon(1e-14));

  const HeadOutputs other{{0.6, 0.1}, {0.1, 0.9}};
  LossWeights lw;
  lw.a = 0.0;
  lw.b = 2.0;
  const LossParts r = loss_online(std::span(&other, 1), std::span(&pseudo, 1), lw);
  CHECK(r.total == doctest::Approx(2.0 * r.reg).epsilon(1e-15));

  const HeadTargets halves{{0.5, 0.5}, {0.5, 0.5}};
  const HeadOutputs halves_out{{0.5, 0.5}, {0.5, 0.5}};
  const LossParts q = loss_online(std::span(&halves_out, 1), std::span(&halves, 1), LossWeights{});
  CHECK(q.cls == doctest::Approx(2.0 * std::log(2.0)).epsilon(1e-14));

  const HeadTargets out_of_range{{1.2, 0.5}, {0.5, 0.5}};
  CHECK_THROWS_AS(loss_online(std::span(&halves_out, 1), std::span(&out_of_range, 1), LossWeights{}),
                  InvalidParameter);
}

TEST_CASE("saturated probabilities do not produce infinities") {
  const HeadTargets label{{0.0}, {0.5}};
  const HeadOutputs wrong{{1.0}, {0.5}};
  const LossParts l = loss_offline(std::span(&wrong, 1), std::span(&label, 1), LossWeights{});
  CHECK(std::isfinite(l.cls));
  CHECK(l.cls == doctest::Approx(-std::log(kProbClamp)).epsilon(1e-9));
}

TEST_CASE("loss ignores the order of samples in a batch") {
  GradCheckCase c = random_grad_case(5, 6);
  std::vector<double> g1, g2;
  const LossParts a = c.net.loss_and_gradient(c.xs, c.targets, 1.0, 1.0, g1);
  std::reverse(c.xs.begin(), c.xs.end());
  std::reverse(c.targets.begin(), c.targets.end());
  const LossParts b = c.net.loss_and_gradient(c.xs, c.targets, 1.0, 1.0, g2);
  CHECK(a.total == doctest::Approx(b.total).epsilon(1e-14));
  for (std::size_t i = 0; i < g1.size(); ++i) CHECK(g1[i] == doctest::Approx(g2[i]).epsilon(1e-10));
}

TEST_CASE("analytic gradient matches central differences") {
  for (std::uint64_t seed = 1; seed <= 8; ++seed) {
    const GradCheckCase c = random_grad_case(seed);
    CHECK(max_grad_rel_error(c, 1.0, 1.0) <= 1e-4);
    CHECK(max_grad_rel_error(c, 0.7, 0.0) <= 1e-4);
    CHECK(max_grad_rel_error(c, 0.0, 1.3) <= 1e-4);
  }
}

TEST_CASE("gradient vanishes at a perfect regression fit without the class term") {
  GradCheckCase c = random_grad_case(12, 3);
  for (std::size_t b = 0; b < c.xs.size(); ++b) c.targets[b].r = c.net.forward(c.xs[b]).y_r;
  std::vector<double> grad;
  c.net.loss_and_gradient(c.xs, c.targets, 0.0, 1.0, grad);
  for (double g : grad) CHECK(g == 0.0);
}

TEST_CASE("doubling the regression weight doubles its gradient") {
  const GradCheckCase c = random_grad_case(13);
  std::vector<double> g1, g2;
  c.net.loss_and_gradient(c.xs, c.targets, 0.0, 1.0, g1);
  c.net.loss_and_gradient(c.xs, c.targets, 0.0, 2.0, g2);
  for (std::size_t i = 0; i < g1.size(); ++i) CHECK(g2[i] == doctest::Approx(2.0 * g1[i]).epsilon(1e-12));
}

TEST_CASE("class targets do not reach the trunk when their weight is zero") {
  GradCheckCase c = random_grad_case(14);
  std::vector<double> g1, g2;
  c.net.loss_and_gradient(c.xs, c.targets, 0.0, 1.0, g1);
  for (HeadTargets& t : c.targets) {
    for (double& v : t.c) v = 1.0 - v;
  }
  c.net.loss_and_gradient(c.xs, c.targets, 0.0, 1.0, g2);
  CHECK(g1 == g2);
}

TEST_CASE("Adam basics") {
  std::vector<double> p{1.0, -2.0, 3.0};
  Adam zero(3);
  zero.step(p, std::vector<double>{0.0, 0.0, 0.0}, 1e-3);
  CHECK(p == std::vector<double>{1.0, -2.0, 3.0});

  Adam adam(3);
  adam.step(p, std::vector<double>{0.5, -4.0, 1e-3}, 1e-3);
  CHECK(p[0] == doctest::Approx(1.0 - 1e-3).epsilon(1e-9));
  CHECK(p[1] == doctest::Approx(-2.0 + 1e-3).epsilon(1e-9));
  CHECK(p[2] == doctest::Approx(3.0 - 1e-3).epsilon(1e-6));
  CHECK(adam.steps() == 1);

  CHECK_THROWS_AS(adam.step(p, std::vector<double>{1.0}, 1e-3), DimensionMismatch);
}

TEST_CASE("Adam minimizes a 1-D quadratic") {
  std::vector<double> x{1.0};
  Adam adam(1);
  int steps = 0;
  while (steps < 2000) {
    adam.step(x, std::vector<double>{2.0 * x[0]}, 1e-2);
    ++steps;
  }
  CHECK(std::abs(x[0]) < 1e-3);
}

TEST_CASE("checkpoint round trip is bit exact") {
  const fs::path dir = temp_dir();
  NetConfig cfg;
  cfg.n_users = 3;
  cfg.hidden = {7, 5};
  cfg.activation = Activation::kSigmoid;
  cfg.seed = 99;
  MultiTaskNet net(cfg);
  Rng rng(1);
  for (double& p : net.params()) p += rng.normal() * 1e-3;
  const FeatureScaler scaler = FeatureScaler::covering({shift_source_preset(3), shift_target_preset(3)});
  save_checkpoint(dir / "net.ckpt", net, scaler);
  const Checkpoint back = load_checkpoint(dir / "net.ckpt", 3);
  CHECK(back.net == net);
  REQUIRE(back.scaler);
  CHECK(*back.scaler == scaler);
  std::vector<double> x(cfg.input_dim(), 0.37);
  const HeadOutputs a = net.forward(x), b = back.net.forward(x);
  CHECK(a.y_c == b.y_c);
  CHECK(a.y_r == b.y_r);

  save_checkpoint(dir / "bare.ckpt", net);
  CHECK_FALSE(load_checkpoint(dir / "bare.ckpt").scaler.has_value());
}

TEST_CASE("checkpoint errors") {
  const fs::path dir = temp_dir();
  NetConfig cfg;
  cfg.n_users = 2;
  const MultiTaskNet net(cfg);
  save_checkpoint(dir / "ok.ckpt", net);

  CHECK(load_error_kind(dir / "ok.ckpt", 3) == CheckpointError::Kind::kConfigMismatch);

  std::ifstream in(dir / "ok.ckpt");
  std::stringstream ss;
  ss << in.rdbuf();
  const std::string text = ss.str();

  {
    std::ofstream out(dir / "trunc.ckpt");
    out << text.substr(0, text.size() / 2);
  }
  CHECK(load_error_kind(dir / "trunc.ckpt") == CheckpointError::Kind::kCorrupt);

  {
    std::string v = text;
    v.replace(v.find("mtda-checkpoint 1"), 17, "mtda-checkpoint 9");
    std::ofstream out(dir / "version.ckpt");
    out << v;
  }
  CHECK(load_error_kind(dir / "version.ckpt") == CheckpointError::Kind::kVersionMismatch);

  {
    std::string g = text;
    const auto pos = g.find("params");
    g.replace(g.find('\n', pos) + 1, 4, "zzzz");
    std::ofstream out(dir / "garbled.ckpt");
    out << g;
  }
  CHECK(load_error_kind(dir / "garbled.ckpt") == CheckpointError::Kind::kCorrupt);

  CHECK(load_error_kind(dir / "missing.ckpt") == CheckpointError::Kind::kIo);
}

TEST_CASE("network config validation") {
  NetConfig cfg;
  cfg.hidden = {8, 0};
  CHECK_THROWS_AS(validate(cfg), InvalidParameter);
  cfg = NetConfig{};
  cfg.n_users = 0;
  CHECK_THROWS_AS(validate(cfg), InvalidParameter);
  LossWeights lw;
  lw.chi_c = lw.chi_r = 0.0;
  CHECK_THROWS_AS(validate(lw), InvalidParameter);
  CHECK(activation_from_string("tanh") == Activation::kTanh);
  CHECK_THROWS(activation_from_string("relu"));
}
