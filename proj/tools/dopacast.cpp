#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "dopacast/colormap.hpp"
#include "dopacast/config.hpp"
#include "dopacast/errors.hpp"
#include "dopacast/evaluation.hpp"
#include "dopacast/ingestion.hpp"
#include "dopacast/io.hpp"
#include "dopacast/nn/pipeline.hpp"
#include "dopacast/preprocessing.hpp"

namespace fs = std::filesystem;
using namespace dopacast;
using namespace dopacast::nn;

namespace {

struct Globals {
  std::string config_path;
  std::string preset = "full";
  std::optional<std::uint64_t> seed;
  std::string device = "cpu";
  bool deterministic = false;
};

PipelineConfig resolve_config(const Globals& g, nlohmann::json* resolved) {
  auto base = g.preset == "toy" ? toy_config() : PipelineConfig{};
  auto j = to_json(base);
  if (!g.config_path.empty()) j.merge_patch(read_json_file(g.config_path));
  const auto overridden = apply_env_overrides(j);
  for (const auto& key : overridden) std::fprintf(stderr, "env override: %s\n", key.c_str());
  auto cfg = pipeline_config_from_json(j);
  if (g.seed) {
    cfg.train.seed = *g.seed;
    cfg.phantom.seed = *g.seed;
  }
  cfg.validate();
  if (resolved) *resolved = to_json(cfg);
  return cfg;
}

void apply_runtime(const Globals& g) {
  if (g.device != "cpu") throw UsageError("unsupported device '" + g.device + "': this build runs on cpu only");
  if (g.deterministic) {
    at::globalContext().setDeterministicAlgorithms(true, false);
    torch::set_num_threads(1);
  }
}

class Run {
 public:
  // Dataset directories already own manifest.json; their run record goes next to it.
  Run(std::string command, const nlohmann::json& config, std::uint64_t seed, fs::path out,
      std::string file = "manifest.json")
      : out_(std::move(out)), file_(std::move(file)) {
    m_.command = std::move(command);
    m_.config_hash = config_hash(config);
    m_.seed = seed;
    m_.started = utc_now();
    m_.git_describe = DOPACAST_GIT_DESCRIBE;
    m_.extra["config"] = config;
    fs::create_directories(out_);
  }
  void input(const fs::path& p) { m_.inputs.push_back(p.string()); }
  void output(const fs::path& p) { m_.outputs.push_back(p.string()); }
  nlohmann::json& extra() { return m_.extra; }
  void finish() {
    m_.finished = utc_now();
    write_json_file(out_ / file_, to_json(m_));
  }

 private:
  RunManifest m_;
  fs::path out_;
  std::string file_;
};

LoadedDataset load_preprocessed(const fs::path& dir, const PipelineConfig& cfg) {
  auto data = load_dataset(dir);
  if (!data.manifest.preprocessed) {
    for (auto& r : data.records) r = preprocess_record(r, cfg.preprocess);
  }
  return data;
}

std::vector<DiffusionItem> items_for(const LoadedDataset& data, Split split, bool downsample) {
  std::vector<DiffusionItem> out;
  for (std::size_t i = 0; i < data.records.size(); ++i) {
    if (data.splits[i] != split) continue;
    auto items = make_items(data.records[i], downsample);
    out.insert(out.end(), items.begin(), items.end());
  }
  return out;
}

Split parse_split(const std::string& s) {
  try {
    return split_from_string(s);
  } catch (const std::exception&) {
    throw UsageError("unknown split '" + s + "' (train, val or test)");
  }
}

// --- subcommands ----------------------------------------------------------------

void gen_phantom(const Globals& g, const fs::path& out) {
  nlohmann::json resolved;
  const auto cfg = resolve_config(g, &resolved);
  Run run("gen-phantom", resolved, cfg.phantom.seed, out, "run_manifest.json");
  const auto cohort = generate_phantom_cohort(cfg.phantom);
  save_dataset(out, cohort, assign_splits(cohort.size(), cfg.split_seed));
  run.output(out / "manifest.json");
  run.extra()["subjects"] = cohort.size();
  run.finish();
  std::printf("wrote %zu phantom subjects to %s\n", cohort.size(), out.c_str());
}

void preprocess(const Globals& g, const fs::path& data_dir, const fs::path& out) {
  nlohmann::json resolved;
  const auto cfg = resolve_config(g, &resolved);
  Run run("preprocess", resolved, cfg.train.seed, out, "run_manifest.json");
  run.input(data_dir);
  auto data = load_dataset(data_dir);
  if (data.manifest.preprocessed) throw UsageError(data_dir.string() + " is already preprocessed");
  for (auto& r : data.records) r = preprocess_record(r, cfg.preprocess);
  save_dataset(out, data.records, data.splits, true, resolved.at("preprocess"));
  run.output(out);
  run.finish();
  std::printf("preprocessed %zu subjects into %s\n", data.records.size(), out.c_str());
}

void train_encoder_cmd(const Globals& g, const fs::path& data_dir, const fs::path& out) {
  nlohmann::json resolved;
  const auto cfg = resolve_config(g, &resolved);
  Run run("train-encoder", resolved, cfg.train.seed, out);
  run.input(data_dir);
  const auto data = load_dataset(data_dir);
  std::vector<LeddSeries> series;
  for (std::size_t i = 0; i < data.records.size(); ++i) {
    if (data.splits[i] == Split::kTrain) series.push_back(data.records[i].ledd);
  }
  if (series.empty()) throw ValidationError("no training subjects in " + data_dir.string());
  auto result = train_autoencoder(series, cfg.encoder, cfg.train.seed);
  const auto path = out / "encoder.ckpt";
  save_autoencoder(path, result.model, {{"config_hash", config_hash(resolved)}});
  std::ofstream csv(out / "encoder_metrics.csv");
  csv << "epoch,total,reconstruction,contrastive\n";
  for (const auto& h : result.curve) {
    csv << h.epoch << ',' << h.total << ',' << h.reconstruction << ',' << h.contrastive << '\n';
  }
  run.output(path);
  run.finish();
  std::printf("encoder trained on %zu series; final loss %.5f\n", series.size(),
              result.curve.empty() ? 0.0 : result.curve.back().total);
}

void train_diffusion_cmd(const Globals& g, const fs::path& data_dir, const fs::path& encoder_path, const fs::path& out,
                         const std::string& resume) {
  nlohmann::json resolved;
  const auto cfg = resolve_config(g, &resolved);
  Run run("train-diffusion", resolved, cfg.train.seed, out);
  run.input(data_dir);
  run.input(encoder_path);
  const auto data = load_preprocessed(data_dir, cfg);
  const auto train_items = items_for(data, Split::kTrain, cfg.downsample());
  const auto val_items = items_for(data, Split::kVal, cfg.downsample());
  if (train_items.empty()) throw ValidationError("no training subjects in " + data_dir.string());
  auto encoder = load_autoencoder(encoder_path);
  TrainOptions opts;
  opts.out_dir = out;
  opts.verbose = true;
  if (!resume.empty()) opts.resume_from = resume;
  const auto result = train(train_items, val_items, encoder, cfg.unet, cfg.train, cfg.augment, opts);
  run.extra()["best_epoch"] = result.best_epoch;
  run.extra()["best_val"] = result.best_val;
  run.output(out / "best.ckpt");
  run.output(out / "last.ckpt");
  run.output(out / "metrics.csv");
  run.finish();
  std::printf("trained %lld steps; best validation loss %.5f at epoch %d\n", static_cast<long long>(result.steps),
              result.best_val, result.best_epoch);
}

void forecast_cmd(const Globals& g, const fs::path& data_dir, const fs::path& encoder_path, const fs::path& model_path,
                  const fs::path& out, const std::string& split_name, std::optional<double> constant_dose,
                  bool triptych) {
  nlohmann::json resolved;
  const auto cfg = resolve_config(g, &resolved);
  Run run("forecast", resolved, cfg.train.seed, out);
  run.input(data_dir);
  run.input(encoder_path);
  run.input(model_path);
  const auto split = parse_split(split_name);
  const auto data = load_preprocessed(data_dir, cfg);
  const auto items = items_for(data, split, cfg.downsample());
  if (items.empty()) throw ValidationError("no " + split_name + " subjects in " + data_dir.string());
  auto encoder = load_autoencoder(encoder_path);
  auto ckpt = load_diffusion(model_path);
  auto& model = cfg.sampling.use_ema ? ckpt.ema_model : ckpt.model;
  std::optional<LeddSeries> override;
  if (constant_dose) override = LeddSeries{std::vector<double>(kLeddMonths, *constant_dose)};
  const auto pred = forecast_items(model, encoder, items, make_schedule(cfg.unet.T), cfg.sampling, cfg.train.seed,
                                   override);

  std::map<std::string, std::vector<SliceImage>> by_subject;
  for (std::size_t i = 0; i < items.size(); ++i) {
    const auto& p = items[i].pair;
    by_subject[p.subject_id].push_back(
        {pred[i], p.slice_index, true, p.condition.norm_lo, p.condition.norm_hi});
    if (triptych) {
      const auto png = out / "triptych" / (p.subject_id + "_" + std::to_string(p.slice_index) + ".png");
      fs::create_directories(png.parent_path());
      write_triptych(png, {p.condition.pixels, pred[i], p.target.pixels});
    }
  }
  fs::create_directories(out / "forecasts");
  for (const auto& [id, slices] : by_subject) {
    write_slices(out / "forecasts" / id, slices);
    run.output(out / "forecasts" / id);
  }
  run.extra()["split"] = split_name;
  if (constant_dose) run.extra()["constant_dose"] = *constant_dose;
  run.finish();
  std::printf("forecast %zu slices for %zu subjects into %s\n", items.size(), by_subject.size(), out.c_str());
}

void evaluate_cmd(const Globals& g, const fs::path& data_dir, const fs::path& forecast_dir, const fs::path& out,
                  const std::string& split_name) {
  nlohmann::json resolved;
  const auto cfg = resolve_config(g, &resolved);
  Run run("evaluate", resolved, cfg.train.seed, out);
  run.input(data_dir);
  run.input(forecast_dir);
  const auto data = load_preprocessed(data_dir, cfg);
  const auto items = items_for(data, parse_split(split_name), cfg.downsample());
  std::map<std::string, std::vector<SliceImage>> cache;
  std::vector<ImageGrid> pred;
  for (const auto& it : items) {
    const auto& id = it.pair.subject_id;
    if (!cache.contains(id)) cache[id] = read_slices(forecast_dir / "forecasts" / id);
    const SliceImage* hit = nullptr;
    for (const auto& s : cache[id])
      if (s.slice_index == it.pair.slice_index) hit = &s;
    if (!hit) throw ValidationError("no forecast for " + id + " slice " + std::to_string(it.pair.slice_index));
    if (!hit->pixels.same_shape(it.pair.target.pixels)) {
      throw ValidationError("forecast for " + id + " has the wrong size; check image_size in the config");
    }
    pred.push_back(hit->pixels);
  }
  const auto report = build_report(eval_samples(items, pred));
  std::ofstream(out / "report.csv") << report_csv(report);
  std::ofstream(out / "report.txt") << report_table(report);
  run.output(out / "report.csv");
  run.extra()["delta_mean"] = {{"ssim_pct", report.delta_mean.ssim_pct},
                               {"mae_pct", report.delta_mean.mae_pct},
                               {"mse_pct", report.delta_mean.mse_pct}};
  run.finish();
  std::cout << report_table(report);
}

void dump_schedule(int T, const std::string& out) {
  const auto csv = schedule_csv(make_schedule(T));
  if (out.empty() || out == "-") {
    std::cout << csv;
    return;
  }
  std::ofstream f(out);
  if (!(f << csv)) throw IoError("cannot write " + out);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Treatment-conditioned DaTscan forecasting"};
  app.require_subcommand(1);
  Globals g;
  app.add_option("--config", g.config_path, "JSON config merged over the preset")->check(CLI::ExistingFile);
  app.add_option("--preset", g.preset, "base configuration")->check(CLI::IsMember({"full", "toy"}));
  app.add_option("--seed", g.seed, "seed for training, sampling and the phantom generator");
  app.add_option("--device", g.device, "compute device");
  app.add_flag("--deterministic", g.deterministic, "deterministic kernels, single thread");

  std::string out, data, encoder, model, forecasts, resume, split = "test", schedule_out = "-";
  std::optional<double> dose;
  bool triptych = false;
  int T = 1000;

  auto* gen = app.add_subcommand("gen-phantom", "generate a synthetic cohort with a planted law");
  gen->add_option("--out", out, "dataset directory")->required();

  auto* pre = app.add_subcommand("preprocess", "soft-mask slices and compute ROI masks");
  pre->add_option("--data", data, "raw dataset directory")->required()->check(CLI::ExistingDirectory);
  pre->add_option("--out", out, "output dataset directory")->required();

  auto* enc = app.add_subcommand("train-encoder", "train the LEDD autoencoder on the training split");
  enc->add_option("--data", data, "dataset directory")->required()->check(CLI::ExistingDirectory);
  enc->add_option("--out", out, "run directory")->required();

  auto* dif = app.add_subcommand("train-diffusion", "train the conditional diffusion model");
  dif->add_option("--data", data, "dataset directory")->required()->check(CLI::ExistingDirectory);
  dif->add_option("--encoder", encoder, "encoder checkpoint")->required()->check(CLI::ExistingFile);
  dif->add_option("--out", out, "run directory")->required();
  dif->add_option("--resume", resume, "checkpoint to continue from")->check(CLI::ExistingFile);

  auto* fc = app.add_subcommand("forecast", "sample month-12 forecasts");
  fc->add_option("--data", data, "dataset directory")->required()->check(CLI::ExistingDirectory);
  fc->add_option("--encoder", encoder, "encoder checkpoint")->required()->check(CLI::ExistingFile);
  fc->add_option("--model", model, "diffusion checkpoint")->required()->check(CLI::ExistingFile);
  fc->add_option("--out", out, "run directory")->required();
  fc->add_option("--split", split, "train, val or test");
  fc->add_option("--constant-dose", dose, "replace every LEDD series with this dose (mg/day)")
      ->check(CLI::NonNegativeNumber);
  fc->add_flag("--triptych", triptych, "write condition | forecast | target PNGs");

  auto* ev = app.add_subcommand("evaluate", "ROI-weighted SSIM/MAE/MSE against the no-progression baseline");
  ev->add_option("--data", data, "dataset directory")->required()->check(CLI::ExistingDirectory);
  ev->add_option("--forecasts", forecasts, "forecast run directory")->required()->check(CLI::ExistingDirectory);
  ev->add_option("--out", out, "run directory")->required();
  ev->add_option("--split", split, "train, val or test");

  auto* ds = app.add_subcommand("dump-schedule", "print the noise schedule as CSV");
  ds->add_option("--T", T, "number of diffusion steps")->check(CLI::PositiveNumber);
  ds->add_option("--out", schedule_out, "output file, - for stdout");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : static_cast<int>(ExitCode::kUsage);
  }

  try {
    apply_runtime(g);
    if (*gen) gen_phantom(g, out);
    else if (*pre) preprocess(g, data, out);
    else if (*enc) train_encoder_cmd(g, data, out);
    else if (*dif) train_diffusion_cmd(g, data, encoder, out, resume);
    else if (*fc) forecast_cmd(g, data, encoder, model, out, split, dose, triptych);
    else if (*ev) evaluate_cmd(g, data, forecasts, out, split);
    else if (*ds) dump_schedule(T, schedule_out);
  } catch (const Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return static_cast<int>(e.code());
  } catch (const std::invalid_argument& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return static_cast<int>(ExitCode::kUsage);
  } catch (const fs::filesystem_error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return static_cast<int>(ExitCode::kIo);
  } catch (const nlohmann::json::exception& e) {
    std::fprintf(stderr, "error: bad config: %s\n", e.what());
    return static_cast<int>(ExitCode::kUsage);
  }
  return 0;
}
