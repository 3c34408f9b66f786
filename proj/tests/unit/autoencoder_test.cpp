#include <cmath>

#include "doctest.h"
#include "dopacast/nn/ledd_autoencoder.hpp"
#include "dopacast/errors.hpp"
#include "nn_support.hpp"
#include "support.hpp"

using namespace dopacast;
using namespace dopacast::nn;

namespace {

LeddSeries constant_series(double v) { return LeddSeries{std::vector<double>(12, v)}; }

LeddSeries log_series(std::vector<double> raw) {
  LeddSeries s{std::move(raw), DoseScale::kLog1p};
  for (auto& d : s.doses) d = std::log1p(d);
  return s;
}

std::vector<LeddSeries> toy_dataset(int n, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<LeddSeries> out;
  for (int i = 0; i < n; ++i) {
    const double level = rng.uniform(0.0, 1000.0);
    LeddSeries s;
    for (int m = 0; m < 12; ++m) s.doses.push_back(std::round(level * std::min(1.0, (m + 1) / 3.0)));
    out.push_back(s);
  }
  return out;
}

double std_dev(const std::vector<double>& v, double mean) {
  double acc = 0.0;
  for (double x : v) acc += (x - mean) * (x - mean);
  return std::sqrt(acc / static_cast<double>(v.size()));
}

}  // namespace

TEST_CASE("block shift examples") {
  const auto s = apply_block_shift(constant_series(100.0), 2, 3, -5.0);
  const std::vector<double> expect{100, 100, 0, 0, 0, 100, 100, 100, 100, 100, 100, 100};
  CHECK(s.doses == expect);
  const auto up = apply_block_shift(constant_series(0.0), 9, 3, 2.0);
  CHECK(up.doses[8] == 0.0);
  CHECK(up.doses[9] == 50.0);
  CHECK(up.doses[11] == 50.0);
  CHECK_THROWS_AS(apply_block_shift(constant_series(0.0), 10, 3, 1.0), std::invalid_argument);
}

TEST_CASE("block perturbation changes one contiguous block of 3 to 6 months") {
  Rng rng(1);
  const auto raw = constant_series(500.0);
  for (int i = 0; i < 500; ++i) {
    const auto p = block_perturb(raw, rng);
    int first = -1;
    int last = -1;
    for (int m = 0; m < 12; ++m)
      if (p.doses[static_cast<std::size_t>(m)] != 500.0) {
        if (first < 0) first = m;
        last = m;
      }
    REQUIRE(first >= 0);
    const int k = last - first + 1;
    CHECK(k >= 3);
    CHECK(k <= 6);
    const double shift = p.doses[static_cast<std::size_t>(first)] - 500.0;
    CHECK(std::abs(shift) <= 125.0);
    for (int m = first; m <= last; ++m) CHECK(p.doses[static_cast<std::size_t>(m)] - 500.0 == shift);
  }
}

TEST_CASE("modulation examples and noise floor") {
  Rng rng(2);
  CHECK(modulate_view(constant_series(200.0), 1.0, 0.0, rng).doses == constant_series(200.0).doses);
  CHECK(modulate_view(constant_series(200.0), 1.1, 0.0, rng).doses[0] == doctest::Approx(220.0));
  ModulateParams fixed{1.0, 1.0, 0.02, 1.0};
  std::vector<double> high;
  std::vector<double> low;
  for (int i = 0; i < 2000; ++i) {
    const auto [a, b] = stochastic_modulate(constant_series(1000.0), rng, fixed);
    high.insert(high.end(), a.doses.begin(), a.doses.end());
    const auto [c, d] = stochastic_modulate(constant_series(10.0), rng, fixed);
    low.insert(low.end(), c.doses.begin(), c.doses.end());
  }
  CHECK(std_dev(high, 1000.0) == doctest::Approx(20.0).epsilon(0.05));
  CHECK(std_dev(low, 10.0) == doctest::Approx(1.0).epsilon(0.05));
  const auto [z1, z2] = stochastic_modulate(constant_series(0.0), rng);
  for (double v : z1.doses) CHECK(v >= 0.0);
  for (double v : z2.doses) CHECK(v >= 0.0);
}

TEST_CASE("encoder shapes and unit-norm pooling") {
  torch::manual_seed(3);
  LeddAutoencoder model(testing::mini_encoder_config());
  model->eval();
  const auto x = torch::rand({3, 12}) * 6;
  const auto e = model->encode(x);
  CHECK(e.sequence_latent.sizes() == torch::IntArrayRef({3, 12, 4}));
  CHECK(e.pooled.sizes() == torch::IntArrayRef({3, 4}));
  CHECK(torch::allclose(e.pooled.norm(2, 1), torch::ones({3}), 1e-5, 1e-6));
  CHECK(model->decode(e.sequence_latent).sizes() == torch::IntArrayRef({3, 12}));
  CHECK_THROWS_AS(model->encode(torch::zeros({3, 11})), std::invalid_argument);
}

TEST_CASE("encoder is order sensitive") {
  torch::manual_seed(4);
  LeddAutoencoder model(testing::mini_encoder_config());
  std::vector<double> ramp{0, 50, 100, 150, 200, 250, 300, 350, 400, 450, 500, 550};
  std::vector<double> reversed(ramp.rbegin(), ramp.rend());
  const auto r = embed_pooled(model, {log_series(ramp), log_series(reversed)});
  CHECK((r[0] - r[1]).abs().max().item<double>() > 1e-4);
  CHECK_THROWS_AS(series_tensor({constant_series(1.0)}), std::invalid_argument);
}

TEST_CASE("InfoNCE closed forms") {
  const auto opts = torch::TensorOptions().dtype(torch::kFloat64);
  const auto a = torch::tensor({{0.3, -1.2, 2.0}}, opts);
  CHECK(info_nce(a, torch::tensor({{1.0, 1.0, 0.0}}, opts), 0.2).item<double>() == doctest::Approx(0.0));
  const auto eye = torch::eye(2, opts);
  CHECK(std::abs(info_nce(eye, eye, 0.2).item<double>() - std::log1p(2.0 * std::exp(-5.0))) < 1e-6);
  for (int b : {2, 5, 16}) {
    const auto same = torch::ones({b, 3}, opts);
    CHECK(std::abs(info_nce(same, same * 2.0, 0.2).item<double>() - std::log(2.0 * b - 1.0)) < 1e-6);
    auto gen = at::detail::createCPUGenerator(static_cast<std::uint64_t>(b));
    const auto p = torch::randn({b, 8}, gen, opts);
    const auto q = torch::randn({b, 8}, gen, opts);
    CHECK(std::abs(info_nce(p, q, 1e7).item<double>() - std::log(2.0 * b - 1.0)) < 1e-6);
  }
  CHECK_THROWS_AS(info_nce(torch::zeros({2, 3}, opts), torch::ones({2, 3}, opts), 0.2), std::invalid_argument);
  CHECK_THROWS_AS(info_nce(eye, eye, 0.0), std::invalid_argument);
}

TEST_CASE("InfoNCE is rotation invariant and scale free") {
  const auto opts = torch::TensorOptions().dtype(torch::kFloat64);
  auto gen = at::detail::createCPUGenerator(5);
  for (int trial = 0; trial < 20; ++trial) {
    const auto p = torch::randn({6, 8}, gen, opts);
    const auto q = torch::randn({6, 8}, gen, opts);
    const auto rot = std::get<0>(torch::linalg_qr(torch::randn({8, 8}, gen, opts)));
    const double base = info_nce(p, q, 0.2).item<double>();
    CHECK(std::abs(info_nce(p.matmul(rot), q.matmul(rot), 0.2).item<double>() - base) < 1e-6);
    CHECK(std::abs(info_nce(p * 3.0, q * 0.5, 0.2).item<double>() - base) < 1e-9);
  }
}

TEST_CASE("joint loss combines reconstruction and contrastive terms") {
  CHECK(combine_loss(0.5, 2.0, 0.1) == doctest::Approx(0.7));
  torch::manual_seed(6);
  LeddAutoencoder model(testing::mini_encoder_config());
  const auto clean = torch::rand({4, 12}) * 6;
  const auto l = autoencoder_loss(model, clean + 0.1, clean - 0.1, clean);
  CHECK(l.total.item<double>() ==
        doctest::Approx(combine_loss(l.reconstruction.item<double>(), l.contrastive.item<double>(), 0.1)));
  CHECK(l.reconstruction.item<double>() > 0.0);
}

TEST_CASE("mini autoencoder gradients match central differences at 64-bit") {
  torch::manual_seed(7);
  LeddAutoencoder model(testing::mini_encoder_config());
  model->to(torch::kFloat64);
  model->train();
  auto gen = at::detail::createCPUGenerator(8);
  const auto opts = torch::TensorOptions().dtype(torch::kFloat64);
  const auto clean = torch::rand({4, 12}, gen, opts) * 6;
  const auto v1 = clean + torch::randn({4, 12}, gen, opts) * 0.1;
  const auto v2 = clean + torch::randn({4, 12}, gen, opts) * 0.1;
  const auto res = testing::gradient_check(*model, [&] { return autoencoder_loss(model, v1, v2, clean).total; }, 60, 9);
  CHECK(res.checked == 60);
  CHECK(res.failed == 0);
}

TEST_CASE("autoencoder training lowers the loss and is deterministic") {
  auto cfg = testing::mini_encoder_config();
  cfg.epochs = 40;
  cfg.batch_size = 8;
  cfg.lr = 3e-3;
  const auto data = toy_dataset(16, 10);
  const auto a = train_autoencoder(data, cfg, 11);
  const auto b = train_autoencoder(data, cfg, 11);
  REQUIRE(a.curve.size() == 40);
  CHECK(a.curve.back().total < a.curve.front().total);
  CHECK(a.curve.back().reconstruction < 0.5 * a.curve.front().reconstruction);
  for (std::size_t i = 0; i < a.curve.size(); ++i) CHECK(a.curve[i].total == b.curve[i].total);
  const auto pa = a.model->parameters();
  const auto pb = b.model->parameters();
  for (std::size_t i = 0; i < pa.size(); ++i) CHECK(torch::equal(pa[i], pb[i]));
  const auto c = train_autoencoder(data, cfg, 12);
  CHECK(c.curve.back().total != a.curve.back().total);
}

TEST_CASE("autoencoder fits a constant sequence") {
  auto cfg = testing::mini_encoder_config();
  cfg.epochs = 300;
  cfg.batch_size = 2;
  cfg.lr = 3e-3;
  const auto res = train_autoencoder({constant_series(300.0), constant_series(300.0)}, cfg, 13);
  CHECK(res.curve.back().reconstruction < 0.05);
}

TEST_CASE("autoencoder training input checks") {
  auto cfg = testing::mini_encoder_config();
  CHECK_THROWS_AS(train_autoencoder({constant_series(1.0)}, cfg, 0), std::invalid_argument);
  auto bad = constant_series(1.0);
  bad.doses.pop_back();
  CHECK_THROWS(train_autoencoder({bad, constant_series(1.0)}, cfg, 0));
  cfg.heads = 3;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
}

TEST_CASE("autoencoder checkpoints round trip") {
  testing::TempDir dir("autoencoder");
  torch::manual_seed(14);
  LeddAutoencoder model(testing::mini_encoder_config());
  save_autoencoder(dir / "ae.ckpt", model, {{"seed", 14}});
  auto back = load_autoencoder(dir / "ae.ckpt");
  const std::vector<LeddSeries> s{log_series({0, 0, 0, 10, 20, 30, 40, 50, 60, 70, 80, 90})};
  CHECK(torch::equal(embed_pooled(model, s), embed_pooled(back, s)));
  CHECK(back->config().latent_dim == 4);
  Container junk;
  write_container(dir / "junk.ckpt", junk);
  CHECK_THROWS_AS(load_autoencoder(dir / "junk.ckpt"), IoError);
}
