#include <CLI11.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "dopacast/config.hpp"
#include "dopacast/evaluation.hpp"
#include "dopacast/ingestion.hpp"
#include "dopacast/io.hpp"
#include "dopacast/nn/pipeline.hpp"
#include "dopacast/preprocessing.hpp"
#include "nn_support.hpp"
#include "support.hpp"

using namespace dopacast;
using namespace dopacast::nn;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

struct Criterion {
  int id;
  std::string name;
  std::string group;
  double budget_s;
  std::function<Outcome()> run;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

// 1 ------------------------------------------------------------------------------

Outcome delta_arithmetic() {
  const auto rep = build_report_from_rows({SliceMetrics{kFirstSlice, 0.658, 0.096, 0.020, 1}},
                                          {SliceMetrics{kFirstSlice, 0.690, 0.089, 0.017, 1}});
  const auto& d = rep.delta_mean;
  const bool ok = std::abs(d.ssim_pct - 4.9) <= 0.15 && std::abs(d.mae_pct - -7.2) <= 0.15 &&
                  std::abs(d.mse_pct - -14.0) <= 0.15;
  return {ok, fmt("dSSIM %+.3f%% (want +4.9), dMAE %+.3f%% (want -7.2), dMSE %+.3f%% (want -14.0), tol 0.15",
                  d.ssim_pct, d.mae_pct, d.mse_pct)};
}

// 2 ------------------------------------------------------------------------------

Outcome schedule_suite() {
  const auto s = make_schedule(1000);
  bool ok = s.alphas.back() == 0.0;
  double worst = 0.0;
  bool monotone = true;
  for (int t = 0; t <= 1000; ++t) {
    const auto i = static_cast<std::size_t>(t);
    worst = std::max(worst, std::abs(s.alphas[i] * s.alphas[i] + s.sigmas[i] * s.sigmas[i] - 1.0));
    if (t > 0 && !(s.snr(t) < s.snr(t - 1))) monotone = false;
  }
  const auto csv = schedule_csv(s);
  std::ifstream f(std::string(DOPACAST_TEST_DATA_DIR) + "/schedule_T1000.csv");
  std::stringstream golden;
  golden << f.rdbuf();
  const bool snapshot = f.good() && golden.str() == csv && csv == schedule_csv(make_schedule(1000));
  ok = ok && worst <= 1e-6 && monotone && snapshot;
  return {ok, fmt("alpha_T = %g, max |a^2+s^2-1| = %.2e, SNR strictly decreasing: %s, snapshot match: %s",
                  s.alphas.back(), worst, monotone ? "yes" : "no", snapshot ? "yes" : "no")};
}

// 3 ------------------------------------------------------------------------------

Outcome v_algebra() {
  const auto s = make_schedule(1000);
  const int n = 100000;
  double err64 = 0.0;
  double err32 = 0.0;
  for (auto dtype : {torch::kFloat64, torch::kFloat32}) {
    auto gen = at::detail::createCPUGenerator(2024);
    const auto opts = torch::TensorOptions().dtype(dtype);
    const auto x0 = torch::rand({n, 1, 1, 1}, gen, opts) * 2 - 1;
    const auto eps = torch::randn({n, 1, 1, 1}, gen, opts);
    const auto t = torch::randint(0, 1001, {n}, gen, torch::kLong);
    const auto xt = q_sample(x0, t, eps, s);
    const auto v = velocity_target(x0, eps, t, s);
    const auto back = x0_and_eps_from_v(xt, v, t, s);
    // Forward identity: x_t and v re-derived from the recovered pair.
    const auto xt2 = s.alpha_at(t, dtype) * back.x0 + s.sigma_at(t, dtype) * back.eps;
    const double e = std::max({(back.x0 - x0).abs().max().item<double>(), (back.eps - eps).abs().max().item<double>(),
                               (xt2 - xt).abs().max().item<double>()});
    (dtype == torch::kFloat64 ? err64 : err32) = e;
  }
  return {err64 <= 1e-5 && err32 <= 1e-3,
          fmt("%d triples: max error %.2e at 64-bit (tol 1e-5), %.2e at 32-bit (tol 1e-3)", n, err64, err32)};
}

// 4 ------------------------------------------------------------------------------

Outcome morphology_oracle() {
  Rng rng(404);
  int mismatches = 0;
  int border_cases = 0;
  for (int i = 0; i < 1000; ++i) {
    const int h = 1 + static_cast<int>(rng.uniform_int(0, 31));
    const int w = 1 + static_cast<int>(rng.uniform_int(0, 31));
    auto m = testing::random_mask(rng, h, w, rng.uniform(0.0, 0.2));
    if (i % 4 == 0) {
      // Force pixels on the border to exercise clipping.
      m(0, static_cast<int>(rng.uniform_int(0, w - 1))) = 1;
      m(static_cast<int>(rng.uniform_int(0, h - 1)), w - 1) = 1;
    }
    bool touches = false;
    for (int r = 0; r < h; ++r)
      for (int c = 0; c < w; ++c)
        if (m(r, c) && (r < 4 || c < 4 || r >= h - 4 || c >= w - 4)) touches = true;
    border_cases += touches;
    if (dilate_buffer(m) != testing::brute_buffer(m)) ++mismatches;
  }
  return {mismatches == 0 && border_cases > 0,
          fmt("1000 masks up to 32x32, %d with striatum within 4 px of the border, %d mismatches", border_cases,
              mismatches)};
}

// 5 ------------------------------------------------------------------------------

Outcome aggregation_oracle() {
  Rng rng(505);
  int mismatches = 0;
  int ties = 0;
  for (int i = 0; i < 1000; ++i) {
    const int n = 1 + static_cast<int>(rng.uniform_int(0, 19));
    const int h = 1 + static_cast<int>(rng.uniform_int(0, 23));
    const int w = 1 + static_cast<int>(rng.uniform_int(0, 23));
    std::vector<BinaryMask> masks;
    for (int k = 0; k < n; ++k) masks.push_back(testing::random_mask(rng, h, w, rng.uniform(0.2, 0.9)));
    // Plant a pixel whose count sits exactly at the agreement boundary and one just below it.
    const int need = agreement_count(n);
    for (int k = 0; k < n; ++k) {
      masks[static_cast<std::size_t>(k)](0, 0) = k < need ? 1 : 0;
      masks[static_cast<std::size_t>(k)](h - 1, w - 1) = k < need - 1 ? 1 : 0;
    }
    if (20 * need == 13 * n) ++ties;
    const auto got = aggregate_roi(std::span<const BinaryMask>(masks));
    if (got != testing::brute_aggregate(masks)) ++mismatches;
    if (!got(0, 0) || (h * w > 1 && got(h - 1, w - 1))) ++mismatches;
  }
  return {mismatches == 0, fmt("1000 stacks, n in 1..20, %d exact 65%% ties, %d mismatches", ties, mismatches)};
}

// 6 ------------------------------------------------------------------------------

Outcome metric_identities() {
  Rng rng(606);
  double uniform_err = 0.0;
  int jensen_fail = 0;
  for (int i = 0; i < 10000; ++i) {
    const int side = 4 + static_cast<int>(rng.uniform_int(0, 12));
    const auto a = testing::random_image(rng, side, side, -1.0, 1.0);
    const auto b = testing::random_image(rng, side, side, -1.0, 1.0);
    const auto w = testing::random_image(rng, side, side, 0.0, 1.0);
    const double mae = roi_weighted_mae(a, b, w);
    const double mse = roi_weighted_mse(a, b, w);
    if (mae * mae > mse + 1e-12) ++jensen_fail;
    if (i < 1000) {
      double pm = 0.0;
      double ps = 0.0;
      for (std::size_t k = 0; k < a.size(); ++k) {
        const double d = static_cast<double>(a[k]) - b[k];
        pm += std::abs(d);
        ps += d * d;
      }
      pm /= static_cast<double>(a.size());
      ps /= static_cast<double>(a.size());
      const auto u = testing::constant(side, side, static_cast<float>(rng.uniform(0.1, 2.0)));
      uniform_err = std::max({uniform_err, std::abs(roi_weighted_mae(a, b, u) - pm), std::abs(roi_weighted_mse(a, b, u) - ps)});
    }
  }
  const auto a = testing::random_image(rng, 48, 48);
  const auto b = testing::random_image(rng, 48, 48);
  const auto w = testing::random_image(rng, 48, 48, 0.4, 1.0);
  const double self = roi_weighted_ssim(a, a, w);
  ImageGrid pa(64, 64, 0.7F);
  ImageGrid pb(64, 64, 0.2F);
  ImageGrid pw(64, 64, 0.0F);
  for (int r = 0; r < 48; ++r)
    for (int c = 0; c < 48; ++c) {
      pa(r + 8, c + 8) = a(r, c);
      pb(r + 8, c + 8) = b(r, c);
      pw(r + 8, c + 8) = w(r, c);
    }
  const double pad_err = std::max({std::abs(roi_weighted_ssim(pa, pb, pw) - roi_weighted_ssim(a, b, w)),
                                   std::abs(roi_weighted_mae(pa, pb, pw) - roi_weighted_mae(a, b, w)),
                                   std::abs(roi_weighted_mse(pa, pb, pw) - roi_weighted_mse(a, b, w))});
  const bool ok = uniform_err <= 1e-7 && jensen_fail == 0 && std::abs(self - 1.0) <= 1e-12 && pad_err <= 1e-9;
  return {ok, fmt("uniform-weight error %.1e, Jensen violations %d/10000, SSIM(a,a) = %.15f, padding drift %.1e",
                  uniform_err, jensen_fail, self, pad_err)};
}

// 7 ------------------------------------------------------------------------------

Outcome infonce_oracle() {
  const auto opts = torch::TensorOptions().dtype(torch::kFloat64);
  const double b1 = info_nce(torch::tensor({{0.2, -0.7, 1.1}}, opts), torch::tensor({{1.0, 0.0, 0.3}}, opts), 0.2)
                        .item<double>();
  const auto eye = torch::eye(2, opts);
  const double b2 = info_nce(eye, eye, 0.2).item<double>();
  const double b2_ref = std::log1p(2.0 * std::exp(-5.0));
  double uni_err = 0.0;
  for (int b : {2, 4, 8, 32}) {
    auto gen = at::detail::createCPUGenerator(static_cast<std::uint64_t>(b));
    const auto p = torch::randn({b, 16}, gen, opts);
    const auto q = torch::randn({b, 16}, gen, opts);
    uni_err = std::max(uni_err, std::abs(info_nce(p, q, 1e8).item<double>() - std::log(2.0 * b - 1.0)));
  }
  double rot_err = 0.0;
  auto gen = at::detail::createCPUGenerator(707);
  for (int i = 0; i < 50; ++i) {
    const auto p = torch::randn({8, 16}, gen, opts);
    const auto q = torch::randn({8, 16}, gen, opts);
    const auto rot = std::get<0>(torch::linalg_qr(torch::randn({16, 16}, gen, opts)));
    rot_err = std::max(rot_err, std::abs(info_nce(p.matmul(rot), q.matmul(rot), 0.2).item<double>() -
                                         info_nce(p, q, 0.2).item<double>()));
  }
  const bool ok = std::abs(b1) <= 1e-6 && std::abs(b2 - b2_ref) <= 1e-6 && uni_err <= 1e-6 && rot_err <= 1e-6;
  return {ok, fmt("B=1 loss %.2e, B=2 orthogonal %.9f vs %.9f, uniform-limit error %.1e, rotation drift %.1e", b1, b2,
                  b2_ref, uni_err, rot_err)};
}

// 8 ------------------------------------------------------------------------------

Outcome gradient_checks() {
  torch::manual_seed(808);
  UNet net(testing::mini_unet_config());
  net->to(torch::kFloat64);
  testing::jitter_parameters(*net, 0.1, 809);
  net->eval();
  auto gen = at::detail::createCPUGenerator(810);
  const auto opts = torch::TensorOptions().dtype(torch::kFloat64);
  const auto xt = torch::randn({2, 1, 8, 8}, gen, opts);
  const auto xs = torch::randn({2, 1, 8, 8}, gen, opts);
  const auto t = torch::tensor({17L, 640L});
  const auto r = torch::randn({2, 4}, gen, opts);
  const auto target = torch::randn({2, 1, 8, 8}, gen, opts);
  const auto u = testing::gradient_check(*net, [&] { return (net->forward(xt, xs, t, r) - target).pow(2).mean(); },
                                         64, 811);

  torch::manual_seed(812);
  LeddAutoencoder ae(testing::mini_encoder_config());
  ae->to(torch::kFloat64);
  ae->train();
  const auto clean = torch::rand({4, 12}, gen, opts) * 6;
  const auto v1 = clean + torch::randn({4, 12}, gen, opts) * 0.1;
  const auto v2 = clean + torch::randn({4, 12}, gen, opts) * 0.1;
  const auto a = testing::gradient_check(*ae, [&] { return autoencoder_loss(ae, v1, v2, clean).total; }, 64, 813);
  const bool ok = u.failed == 0 && a.failed == 0 && u.checked >= 50 && a.checked >= 50;
  return {ok, fmt("U-Net %d/%d within 1e-3 (worst rel %.1e); autoencoder %d/%d (worst rel %.1e)", u.checked - u.failed,
                  u.checked, u.worst_relative, a.checked - a.failed, a.checked, a.worst_relative)};
}

// 9 ------------------------------------------------------------------------------

Outcome sampler_oracle() {
  const auto s = make_schedule(1000);
  auto gen = at::detail::createCPUGenerator(909);
  const auto x0 = torch::rand({4, 1, 32, 32}, gen) * 1.9 - 0.95;
  const auto model = testing::perfect_v_stub(x0, s);
  const auto cond = torch::zeros_like(x0);
  const auto r = torch::zeros({4, 8});
  const auto a = sample(model, cond, r, s, SampleOptions{}, 4242);
  const auto b = sample(model, cond, r, s, SampleOptions{}, 4242);
  const double err = (a - x0).abs().max().item<double>();
  const bool same = torch::equal(a, b);
  return {err <= 1e-3 && same, fmt("250 steps: L-inf error %.2e (tol 1e-3), repeat run bit-identical: %s", err,
                                   same ? "yes" : "no")};
}

// 12 -----------------------------------------------------------------------------

Outcome roi_recall() {
  PhantomSpec spec;
  spec.n_subjects = 40;
  const auto cohort = generate_phantom_cohort(spec);
  double hit = 0, pos = 0, fp = 0, neg = 0, striatum = 0, total = 0;
  double worst_recall = 1.0, worst_fp = 0.0, min_cov = 1.0, max_cov = 0.0;
  for (const auto& raw : cohort) {
    const auto r = preprocess_record(raw);
    const auto truth = phantom_ground_truth(*r.phantom);
    const auto& z = r.roi.front().zones;
    double h = 0, p = 0, f = 0, n = 0, s = 0;
    for (std::size_t i = 0; i < z.size(); ++i) {
      const bool in = z[i] == Zone::kStriatum;
      s += in;
      if (truth[i]) {
        p += 1;
        h += in;
      } else {
        n += 1;
        f += in;
      }
    }
    hit += h, pos += p, fp += f, neg += n, striatum += s, total += static_cast<double>(z.size());
    worst_recall = std::min(worst_recall, h / p);
    worst_fp = std::max(worst_fp, f / n);
    min_cov = std::min(min_cov, s / static_cast<double>(z.size()));
    max_cov = std::max(max_cov, s / static_cast<double>(z.size()));
  }
  const double recall = hit / pos;
  const double fpr = fp / neg;
  const double cov = striatum / total;
  const bool ok = recall >= 0.95 && fpr <= 0.05 && cov >= 0.07 && cov <= 0.13;
  return {ok, fmt("40 subjects: recall %.2f%% (min %.2f%%), background FP %.2f%% (max %.2f%%), coverage %.2f%% "
                  "(range %.2f-%.2f%%)",
                  100 * recall, 100 * worst_recall, 100 * fpr, 100 * worst_fp, 100 * cov, 100 * min_cov, 100 * max_cov)};
}

// 10 / 11 ------------------------------------------------------------------------

struct PhantomRun {
  bool ready = false;
  std::string error;
  double train_seconds = 0.0;
  double eval_seconds = 0.0;
  double sensitivity_seconds = 0.0;
  EvalReport model_report;
  EvalReport oracle_report;
  std::vector<double> zero_loss;
  std::vector<double> high_loss;
  std::vector<std::string> held_out;
  bool forecasts_differ = false;
};

std::filesystem::path g_work = "phantom_run";

PhantomRun& phantom_run() {
  static PhantomRun run;
  static bool attempted = false;
  if (attempted) return run;
  attempted = true;
  try {
    const auto t0 = std::chrono::steady_clock::now();
    auto cfg = toy_config();
    cfg.validate();
    std::filesystem::create_directories(g_work);
    const auto cohort = generate_phantom_cohort(cfg.phantom);
    const auto splits = assign_splits(cohort.size(), cfg.split_seed);
    std::vector<SubjectRecord> processed;
    for (const auto& r : cohort) processed.push_back(preprocess_record(r, cfg.preprocess));

    std::vector<DiffusionItem> train_items, val_items, test_items;
    std::vector<LeddSeries> train_ledd;
    std::vector<std::size_t> held_out;
    for (std::size_t i = 0; i < cohort.size(); ++i) {
      auto items = make_items(processed[i], cfg.downsample());
      auto& dst = splits[i] == Split::kTrain ? train_items : splits[i] == Split::kVal ? val_items : test_items;
      dst.insert(dst.end(), items.begin(), items.end());
      if (splits[i] == Split::kTrain) train_ledd.push_back(cohort[i].ledd);
      else held_out.push_back(i);
    }

    const auto hash = config_hash(to_json(cfg));
    const auto stamp = g_work / "complete.json";
    const auto enc_path = g_work / "encoder.ckpt";
    const auto diff_path = g_work / "diffusion" / "last.ckpt";
    bool cached = false;
    if (std::filesystem::exists(stamp) && std::filesystem::exists(enc_path) && std::filesystem::exists(diff_path)) {
      cached = read_json_file(stamp).value("config_hash", "") == hash;
    }
    LeddAutoencoder encoder{nullptr};
    UNet ema{nullptr};
    if (cached) {
      std::fprintf(stderr, "reusing trained phantom models from %s\n", g_work.c_str());
      encoder = load_autoencoder(enc_path);
      ema = load_diffusion(diff_path).ema_model;
    } else {
      std::fprintf(stderr, "training autoencoder on %zu series\n", train_ledd.size());
      encoder = train_autoencoder(train_ledd, cfg.encoder, cfg.train.seed).model;
      save_autoencoder(enc_path, encoder);
      std::fprintf(stderr, "training diffusion model on %zu pairs\n", train_items.size());
      TrainOptions opts;
      opts.out_dir = g_work / "diffusion";
      opts.verbose = true;
      ema = train(train_items, val_items, encoder, cfg.unet, cfg.train, cfg.augment, opts).ema_model;
      write_json_file(stamp, {{"config_hash", hash}, {"finished", utc_now()}});
    }
    const auto t1 = std::chrono::steady_clock::now();
    run.train_seconds = std::chrono::duration<double>(t1 - t0).count();

    const auto schedule = make_schedule(cfg.unet.T);
    const auto pred = forecast_items(ema, encoder, test_items, schedule, cfg.sampling, 1010);
    run.model_report = build_report(eval_samples(test_items, pred));
    std::vector<ImageGrid> oracle;
    for (std::size_t i = 0; i < cohort.size(); ++i) {
      if (splits[i] != Split::kTest) continue;
      auto o = phantom_oracle_targets(cohort[i], cfg.preprocess, cfg.downsample());
      oracle.insert(oracle.end(), o.begin(), o.end());
    }
    run.oracle_report = build_report(eval_samples(test_items, oracle));

    const auto t2 = std::chrono::steady_clock::now();
    run.eval_seconds = std::chrono::duration<double>(t2 - t1).count();

    std::ofstream(g_work / "model_report.csv") << report_csv(run.model_report);
    std::ofstream(g_work / "oracle_report.csv") << report_csv(run.oracle_report);
    std::fprintf(stderr, "%s", report_table(run.model_report).c_str());

    // Dose sensitivity: the central slice of every held-out subject under zero and
    // maximum dose, with the same starting noise for both series.
    const int probe_slice = kFirstSlice + kNumSlices / 2;
    std::vector<DiffusionItem> sens_items;
    for (auto i : held_out) {
      for (auto& it : make_items(processed[i], cfg.downsample()))
        if (it.pair.slice_index == probe_slice) sens_items.push_back(std::move(it));
      run.held_out.push_back(cohort[i].subject_id);
    }
    const LeddSeries zero{std::vector<double>(kLeddMonths, 0.0)};
    const LeddSeries high{std::vector<double>(kLeddMonths, cfg.phantom.max_dose)};
    const auto fz = forecast_items(ema, encoder, sens_items, schedule, cfg.sampling, 1111, zero);
    const auto fh = forecast_items(ema, encoder, sens_items, schedule, cfg.sampling, 1111, high);
    for (std::size_t s = 0; s < sens_items.size(); ++s) {
      const auto& it = sens_items[s];
      run.zero_loss.push_back(roi_intensity_loss(it.pair.condition.pixels, fz[s], it.pair.roi));
      run.high_loss.push_back(roi_intensity_loss(it.pair.condition.pixels, fh[s], it.pair.roi));
      if (fz[s] != fh[s]) run.forecasts_differ = true;
    }
    run.sensitivity_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t2).count();
    run.ready = true;
  } catch (const std::exception& e) {
    run.error = e.what();
  }
  return run;
}

Outcome phantom_end_to_end() {
  auto& run = phantom_run();
  if (!run.ready) return {false, "pipeline failed: " + run.error};
  const auto& m = run.model_report;
  const auto& o = run.oracle_report;
  const bool beats_baseline = m.delta_mean.mse_pct <= -10.0 && m.delta_mean.ssim_pct >= 2.0;
  const bool loses_to_oracle = o.model_mean.ssim > m.model_mean.ssim && o.model_mean.mae < m.model_mean.mae &&
                               o.model_mean.mse < m.model_mean.mse;
  const bool in_time = run.train_seconds + run.eval_seconds <= 4 * 3600.0;
  return {beats_baseline && loses_to_oracle && in_time,
          fmt("model vs baseline dMSE %+.2f%% (need <= -10), dSSIM %+.2f%% (need >= +2); oracle SSIM/MAE/MSE "
              "%.4f/%.4f/%.5f vs model %.4f/%.4f/%.5f; train %.0f s, eval %.0f s",
              m.delta_mean.mse_pct, m.delta_mean.ssim_pct, o.model_mean.ssim, o.model_mean.mae, o.model_mean.mse,
              m.model_mean.ssim, m.model_mean.mae, m.model_mean.mse, run.train_seconds, run.eval_seconds)};
}

Outcome conditioning_sensitivity() {
  auto& run = phantom_run();
  if (!run.ready) return {false, "pipeline failed: " + run.error};
  int agree = 0;
  std::string per;
  for (std::size_t i = 0; i < run.zero_loss.size(); ++i) {
    agree += run.zero_loss[i] > run.high_loss[i];
    per += fmt(" %s:%.4f/%.4f", run.held_out[i].c_str(), run.zero_loss[i], run.high_loss[i]);
  }
  const auto n = static_cast<int>(run.zero_loss.size());
  const bool ok = run.forecasts_differ && n > 0 && 5 * agree >= 4 * n && run.sensitivity_seconds < 300.0;
  return {ok, fmt("zero-dose loss > high-dose loss in %d/%d held-out subjects (need >= 80%%), forecasts differ: %s, "
                  "%.0f s (need < 300);",
                  agree, n, run.forecasts_differ ? "yes" : "no", run.sensitivity_seconds) +
                  per};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance criteria"};
  std::string group = "all";
  std::vector<int> only;
  std::string work = "phantom_run";
  app.add_option("--group", group, "fast, phantom or all")->check(CLI::IsMember({"fast", "phantom", "all"}));
  app.add_option("--only", only, "run just these criterion ids");
  app.add_option("--work", work, "working directory for the phantom run");
  CLI11_PARSE(app, argc, argv);
  g_work = work;
  torch::set_num_threads(std::max(1, static_cast<int>(std::thread::hardware_concurrency())));

  const std::vector<Criterion> criteria{
      {1, "delta arithmetic reproduction", "fast", 1.0, delta_arithmetic},
      {2, "schedule suite", "fast", 1.0, schedule_suite},
      {3, "v-parameterization algebra", "fast", 10.0, v_algebra},
      {4, "morphology oracle", "fast", 30.0, morphology_oracle},
      {5, "roi aggregation oracle", "fast", 30.0, aggregation_oracle},
      {6, "loss and metric identities", "fast", 30.0, metric_identities},
      {7, "InfoNCE oracle", "fast", 5.0, infonce_oracle},
      {8, "gradient checks", "fast", 120.0, gradient_checks},
      {9, "sampler oracle", "fast", 30.0, sampler_oracle},
      {10, "phantom end-to-end", "phantom", 4 * 3600.0, phantom_end_to_end},
      {11, "conditioning sensitivity", "phantom", 4 * 3600.0, conditioning_sensitivity},
      {12, "roi pipeline recall on phantoms", "fast", 60.0, roi_recall},
  };

  int failed = 0;
  for (const auto& c : criteria) {
    if (group != "all" && c.group != group) continue;
    if (!only.empty() && std::find(only.begin(), only.end(), c.id) == only.end()) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome out;
    try {
      out = c.run();
    } catch (const std::exception& e) {
      out = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    const bool in_budget = secs <= c.budget_s;
    const bool pass = out.pass && in_budget;
    failed += pass ? 0 : 1;
    std::printf("%s criterion %d (%s): %s [%.2f s%s]\n", pass ? "PASS" : "FAIL", c.id, c.name.c_str(),
                out.detail.c_str(), secs, in_budget ? "" : ", over budget");
    std::fflush(stdout);
  }
  return failed == 0 ? 0 : 1;
}
