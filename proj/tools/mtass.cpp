// Copyright 2026 The mtass Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

// mtass command-line entry point.
//
//   mtass datagen   --synthetic|--sources DIR --count N --seed S --out DIR
//   mtass train     --data DIR --out DIR [--preset tiny|full] [--one-stage]
//   mtass separate  --checkpoint CKPT --in mix.wav --out DIR
//   mtass evaluate  --checkpoint CKPT|--identity|--oracle --manifest test.jsonl
//   mtass ablate    --one-stage CKPT --two-stage CKPT --manifest test.jsonl
//   mtass bench     --checkpoint CKPT|--preset full [--seconds 30]
//   mtass gradcheck [--seeds N]
//
// Any option may also come from a TOML/INI file given with --config; flags
// on the command line take precedence over the file.

#include <CLI11.hpp>

#include <cstdio>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <string>

#include "mtass/checkpoint.hpp"
#include "mtass/complexity.hpp"
#include "mtass/config.hpp"
#include "mtass/datagen.hpp"
#include "mtass/grad_suite.hpp"
#include "mtass/metrics.hpp"
#include "mtass/resample.hpp"
#include "mtass/synth.hpp"
#include "mtass/trainer.hpp"
#include "mtass/version.hpp"
#include "mtass/wav.hpp"

namespace fs = std::filesystem;
using namespace mtass;

namespace {

struct DatagenOpts {
  std::string sources;
  bool synthetic = false;
  std::size_t count = 200;
  std::size_t val_count = 0;   // 0: count / 10, at least 1
  std::size_t test_count = 0;  // 0: count / 10, at least 1
  std::size_t source_count = 0;  // synthetic clips per track type; 0: count / 4, at least 8
  std::uint64_t seed = 0;
  double snr_lo = -5.0, snr_hi = 5.0;
  std::string out;
  std::string format = "f32";
};

struct ModelOpts {
  std::string preset = "tiny";
  std::string model_config;
  bool one_stage = false;
};

struct TrainOpts {
  std::string data, train_manifest, val_manifest, out;
  ModelOpts model;
  TrainConfig cfg;
  std::string reduction = "mean";
};

struct EvalOpts {
  std::string checkpoint, manifest, data, json_out, csv_out;
  bool identity = false, oracle = false, separator_out = false;
};

struct AblateOpts {
  std::string one_stage, two_stage, manifest, data, csv_out, json_out;
};

struct BenchOpts {
  std::string checkpoint, json_out, device = "cpu";
  ModelOpts model;
  double seconds = 30.0;
  int runs = 5;
  std::uint64_t seed = 0;
};

struct SeparateOpts {
  std::string checkpoint, in, out;
};

struct GradOpts {
  std::uint64_t seed = 0;
  int seeds = 1;
};

std::size_t g_workers = 1;

void add_model_opts(CLI::App* sub, ModelOpts& m) {
  sub->add_option("--preset", m.preset, "Architecture preset")
      ->check(CLI::IsMember({"tiny", "full"}))
      ->capture_default_str();
  sub->add_option("--model-config", m.model_config,
                  "JSON model configuration; overrides the preset");
  sub->add_flag("--one-stage", m.one_stage, "Disable the residual estimators");
}

ModelConfig resolve_model(const ModelOpts& m) {
  ModelConfig c = m.model_config.empty()
                      ? (m.preset == "full" ? full_config() : tiny_config())
                      : load_model_config(m.model_config);
  if (m.one_stage) c.two_stage = false;
  validate(c);
  return c;
}

std::string manifest_in(const std::string& manifest, const std::string& data,
                        const std::string& split) {
  if (!manifest.empty()) return manifest;
  if (!data.empty()) return (fs::path(data) / (split + ".jsonl")).string();
  throw std::invalid_argument("need --manifest or --data");
}

std::vector<EvalItem> load_items(const std::string& path) {
  std::vector<std::string> skipped;
  auto items = load_eval_items(read_manifest(path), &skipped);
  for (const auto& s : skipped) std::cerr << "warning: skipping record " << s << "\n";
  if (items.empty()) throw std::runtime_error("no readable records in " + path);
  return items;
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot write " + path);
  os << text;
}

void print_sdri(const std::string& label, const SdrReport& r) {
  std::printf("%-28s speech %7.2f  music %7.2f  noise %7.2f  ave %7.2f dB SDRi (%zu clips)\n",
              label.c_str(), r.mean_sdri[0], r.mean_sdri[1], r.mean_sdri[2], r.average_sdri(),
              r.clips.size());
}

// ---------------------------------------------------------------------------

int run_datagen(const DatagenOpts& o) {
  if (o.synthetic == !o.sources.empty())
    throw std::invalid_argument("datagen: give exactly one of --synthetic and --sources");
  const SnrRange snr{o.snr_lo, o.snr_hi};
  const WavFormat fmt = o.format == "pcm16" ? WavFormat::kPcm16 : WavFormat::kFloat32;
  const std::size_t side = std::max<std::size_t>(1, o.count / 10);
  const std::map<Split, std::size_t> counts{
      {Split::kTrain, o.count},
      {Split::kValidation, o.val_count ? o.val_count : side},
      {Split::kTest, o.test_count ? o.test_count : side}};

  std::map<Split, DatasetSources> sources;
  if (o.synthetic) {
    // Each split synthesizes its own clips, so splits share no source.
    const std::size_t n = o.source_count ? o.source_count : std::max<std::size_t>(8, o.count / 4);
    for (const auto& [split, _] : counts) {
      const auto set = synth_sources(mix_seed(o.seed, 100 + static_cast<std::uint64_t>(split)),
                                     n, 10.0, g_workers);
      sources[split] = from_synthetic(set, to_string(split));
    }
  } else {
    sources = load_source_dir(o.sources, o.seed);
  }
  for (const auto& [split, n] : counts) {
    auto it = sources.find(split);
    if (it == sources.end())
      throw std::runtime_error(std::string("no sources for split ") + to_string(split));
    for (std::size_t k = 0; k < kNumTracks; ++k)
      if (it->second.tracks[k].clips.empty())
        throw std::runtime_error(std::string("no ") + kTrackNames[k] + " sources for split " +
                                 to_string(split));
    const auto res = build_dataset(o.out, it->second, n, o.seed, split, snr, fmt, g_workers);
    for (const auto& e : res.errors) std::cerr << "warning: " << e << "\n";
    std::printf("%s: %zu mixtures -> %s\n", to_string(split), res.manifest.size(),
                (fs::path(o.out) / (std::string(to_string(split)) + ".jsonl")).c_str());
    if (!res.errors.empty()) return 1;
  }
  return 0;
}

int run_train(TrainOpts o) {
  ModelConfig mc = resolve_model(o.model);
  o.cfg.reduction = o.reduction == "sum" ? LossReduction::kSum : LossReduction::kMean;
  mc.reduction = o.cfg.reduction;
  mc.alpha = o.cfg.alpha;
  o.cfg.checkpoint_dir = o.out;
  o.cfg.progress = &std::cout;
  fs::create_directories(o.out);
  std::cerr << "model " << to_json(mc).dump() << "\n";

  const auto train_m = read_manifest(manifest_in(o.train_manifest, o.data, "train"));
  const auto val_m = read_manifest(manifest_in(o.val_manifest, o.data, "validation"));
  Model<float> model(mc, o.cfg.seed);
  std::printf("params %lld, %zu training / %zu validation mixtures\n",
              static_cast<long long>(count_params(mc)), train_m.size(), val_m.size());
  const TrainLog log = train(model, train_m, val_m, o.cfg);
  std::ofstream os(fs::path(o.out) / "train_log.jsonl");
  write_train_log(os, log);
  std::printf("best epoch %d -> %s\n", log.best_epoch, log.best_checkpoint.c_str());
  return 0;
}

int run_separate(const SeparateOpts& o) {
  auto model = load_checkpoint<float>(o.checkpoint);
  AudioClip mix = read_wav(o.in);
  if (mix.sample_rate != model->config().sample_rate)
    mix = resample(mix, model->config().sample_rate);
  const auto tracks = full_forward(*model, mix);
  fs::create_directories(o.out);
  for (std::size_t i = 0; i < kNumTracks; ++i) {
    const auto path = (fs::path(o.out) / (std::string(kTrackNames[i]) + ".wav")).string();
    write_wav(path, tracks[i], WavFormat::kFloat32);
    std::printf("%s\n", path.c_str());
  }
  return 0;
}

int run_evaluate(const EvalOpts& o) {
  const int modes = int(!o.checkpoint.empty()) + int(o.identity) + int(o.oracle);
  if (modes != 1)
    throw std::invalid_argument("evaluate: give exactly one of --checkpoint, --identity, --oracle");
  const auto items = load_items(manifest_in(o.manifest, o.data, "test"));
  SdrReport rep;
  std::string label;
  if (o.identity) {
    label = "identity";
    rep = evaluate([](const AudioClip& mix, std::size_t) {
      return std::array<AudioClip, kNumTracks>{mix, mix, mix};
    }, items, g_workers);
  } else if (o.oracle) {
    label = "oracle";
    rep = evaluate([&](const AudioClip&, std::size_t k) {
      const auto& t = items[k].tracks;
      return std::array<AudioClip, kNumTracks>{t.speech, t.music, t.noise};
    }, items, g_workers);
  } else {
    auto model = load_checkpoint<float>(o.checkpoint);
    label = o.separator_out || !model->two_stage() ? "separator-out" : "separator+res-out";
    rep = evaluate(*model, items, g_workers, o.separator_out);
  }
  for (const auto& s : rep.skipped) std::cerr << "warning: skipped " << s << "\n";
  print_sdri(label, rep);
  if (!o.json_out.empty()) write_text(o.json_out, to_json(rep).dump(2) + "\n");
  if (!o.csv_out.empty()) {
    std::ofstream os(o.csv_out);
    write_sdri_csv(os, {{label, rep.mean_sdri}});
  }
  return 0;
}

int run_ablate(const AblateOpts& o) {
  auto one = load_checkpoint<float>(o.one_stage);
  auto two = load_checkpoint<float>(o.two_stage);
  const auto items = load_items(manifest_in(o.manifest, o.data, "test"));
  const auto rows = ablate_two_stage(*one, *two, items, g_workers);
  write_sdri_csv(std::cout, rows);
  if (!o.csv_out.empty()) {
    std::ofstream os(o.csv_out);
    write_sdri_csv(os, rows);
  }
  if (!o.json_out.empty()) {
    nlohmann::json j = nlohmann::json::array();
    for (const auto& r : rows)
      j.push_back({{"method", r.method},
                   {"speech", r.sdri[0]},
                   {"music", r.sdri[1]},
                   {"noise", r.sdri[2]},
                   {"average", r.average()}});
    write_text(o.json_out, j.dump(2) + "\n");
  }
  return 0;
}

int run_bench(const BenchOpts& o) {
  std::unique_ptr<Model<float>> model =
      o.checkpoint.empty() ? std::make_unique<Model<float>>(resolve_model(o.model), o.seed)
                           : load_checkpoint<float>(o.checkpoint);
  const BenchReport b = rtf_bench(*model, o.seconds, o.device, o.runs, o.seed);
  std::printf("RTF %.4f on %s (%.3f s for %.1f s of audio, median of %d)\n", b.rtf,
              b.device.c_str(), b.median_seconds, b.audio_seconds, o.runs);
  std::printf("params %.3f M, %.3f G MAC/s\n", static_cast<double>(b.params) / 1e6,
              static_cast<double>(b.macs_per_second) / 1e9);
  std::printf("stages: analysis %.3f s, separator %.3f s, residual %.3f s, synthesis %.3f s\n",
              b.analysis_seconds, b.separator_seconds, b.residual_seconds, b.synthesis_seconds);
  if (!o.json_out.empty()) write_text(o.json_out, to_json(b).dump(2) + "\n");
  return 0;
}

int run_gradcheck(const GradOpts& o) {
  bool ok = true;
  for (int s = 0; s < o.seeds; ++s) {
    const std::uint64_t seed = o.seed + static_cast<std::uint64_t>(s);
    for (const auto& r : run_grad_suite(seed)) {
      std::printf("%-4s %-16s seed %-4llu max rel err %.3e (tol %.0e, %zu checked)%s\n",
                  r.passed() ? "ok" : "FAIL", r.name.c_str(),
                  static_cast<unsigned long long>(seed), r.max_rel_error, r.tolerance,
                  r.checked, r.passed() ? "" : (" worst " + r.worst).c_str());
      ok = ok && r.passed();
    }
  }
  return ok ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Three-track (speech, music, noise) audio source separation toolkit", "mtass"};
  app.require_subcommand(1);
  app.fallthrough();
  app.set_config("--config", "", "TOML/INI file supplying option values");
  app.set_version_flag("--version", std::string("mtass ") + kVersion + " (checkpoint format " +
                                        std::to_string(kCheckpointVersion) + ", model config " +
                                        std::to_string(kConfigVersion) + ")");
  app.add_option("--workers", g_workers, "Worker threads for data generation and evaluation")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();

  DatagenOpts dg;
  auto* sub_dg = app.add_subcommand("datagen", "Generate three-track mixtures and manifests");
  sub_dg->add_option("--sources", dg.sources, "Source corpus directory");
  sub_dg->add_flag("--synthetic", dg.synthetic, "Synthesize speech/music/noise sources");
  sub_dg->add_option("--count", dg.count, "Training mixtures")->capture_default_str();
  sub_dg->add_option("--val-count", dg.val_count, "Validation mixtures (0: count/10)")
      ->capture_default_str();
  sub_dg->add_option("--test-count", dg.test_count, "Test mixtures (0: count/10)")
      ->capture_default_str();
  sub_dg->add_option("--source-count", dg.source_count,
                     "Synthetic source clips per track type and split (0: count/4, min 8)")
      ->capture_default_str();
  sub_dg->add_option("--seed", dg.seed)->capture_default_str();
  sub_dg->add_option("--snr-lo", dg.snr_lo, "Lowest SNR in dB")->capture_default_str();
  sub_dg->add_option("--snr-hi", dg.snr_hi, "Highest SNR in dB")->capture_default_str();
  sub_dg->add_option("--out", dg.out, "Output directory")->required();
  sub_dg->add_option("--format", dg.format, "WAV sample format")
      ->check(CLI::IsMember({"f32", "pcm16"}))
      ->capture_default_str();

  TrainOpts tr;
  auto* sub_tr = app.add_subcommand("train", "Train a model jointly on the multi-domain loss");
  sub_tr->add_option("--data", tr.data, "Dataset directory with train/validation manifests");
  sub_tr->add_option("--train-manifest", tr.train_manifest);
  sub_tr->add_option("--val-manifest", tr.val_manifest);
  sub_tr->add_option("--out", tr.out, "Checkpoint and log directory")->required();
  add_model_opts(sub_tr, tr.model);
  sub_tr->add_option("--epochs", tr.cfg.epochs)->capture_default_str();
  sub_tr->add_option("--batch-size", tr.cfg.batch_size)->check(CLI::PositiveNumber)->capture_default_str();
  sub_tr->add_option("--lr", tr.cfg.lr0, "Initial learning rate")->check(CLI::PositiveNumber)->capture_default_str();
  sub_tr->add_option("--patience", tr.cfg.patience, "Epochs without improvement before halving")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  sub_tr->add_option("--min-rel-improvement", tr.cfg.min_rel_improvement)->capture_default_str();
  sub_tr->add_option("--min-lr", tr.cfg.min_lr, "Stop once the learning rate falls below")->capture_default_str();
  sub_tr->add_option("--segment-seconds", tr.cfg.segment_seconds)->capture_default_str();
  sub_tr->add_option("--alpha", tr.cfg.alpha, "Weight of the time-domain term")->capture_default_str();
  sub_tr->add_option("--loss-reduction", tr.reduction)
      ->check(CLI::IsMember({"mean", "sum"}))
      ->capture_default_str();
  sub_tr->add_option("--seed", tr.cfg.seed)->capture_default_str();

  SeparateOpts sp;
  auto* sub_sp = app.add_subcommand("separate", "Split one mixture into three WAV files");
  sub_sp->add_option("--checkpoint", sp.checkpoint)->required();
  sub_sp->add_option("--in", sp.in, "Mixture WAV")->required();
  sub_sp->add_option("--out", sp.out, "Output directory")->required();

  EvalOpts ev;
  auto* sub_ev = app.add_subcommand("evaluate", "SDR / SDRi over a test manifest");
  sub_ev->add_option("--checkpoint", ev.checkpoint);
  sub_ev->add_flag("--identity", ev.identity, "Score the mixture itself on every track");
  sub_ev->add_flag("--oracle", ev.oracle, "Score the reference tracks");
  sub_ev->add_flag("--separator-out", ev.separator_out, "Skip residual compensation");
  sub_ev->add_option("--manifest", ev.manifest);
  sub_ev->add_option("--data", ev.data, "Dataset directory (uses test.jsonl)");
  sub_ev->add_option("--json", ev.json_out, "Write the full report as JSON");
  sub_ev->add_option("--csv", ev.csv_out, "Write the SDRi row as CSV");

  AblateOpts ab;
  auto* sub_ab = app.add_subcommand("ablate", "One-stage vs two-stage SDRi table");
  sub_ab->add_option("--one-stage", ab.one_stage)->required();
  sub_ab->add_option("--two-stage", ab.two_stage)->required();
  sub_ab->add_option("--manifest", ab.manifest);
  sub_ab->add_option("--data", ab.data, "Dataset directory (uses test.jsonl)");
  sub_ab->add_option("--csv", ab.csv_out);
  sub_ab->add_option("--json", ab.json_out);

  BenchOpts bn;
  auto* sub_bn = app.add_subcommand("bench", "Real-time factor and complexity");
  sub_bn->add_option("--checkpoint", bn.checkpoint, "Benchmark a trained model");
  add_model_opts(sub_bn, bn.model);
  sub_bn->add_option("--seconds", bn.seconds)->check(CLI::PositiveNumber)->capture_default_str();
  sub_bn->add_option("--runs", bn.runs)->check(CLI::PositiveNumber)->capture_default_str();
  sub_bn->add_option("--device-label", bn.device)->capture_default_str();
  sub_bn->add_option("--seed", bn.seed)->capture_default_str();
  sub_bn->add_option("--json", bn.json_out);

  GradOpts gc;
  auto* sub_gc = app.add_subcommand("gradcheck", "Finite-difference check of every layer");
  sub_gc->add_option("--seed", gc.seed)->capture_default_str();
  sub_gc->add_option("--seeds", gc.seeds, "Number of consecutive seeds")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  for (auto* sub : app.get_subcommands()) {
    std::cerr << "# resolved configuration\nworkers=" << g_workers << "\n[" << sub->get_name()
              << "]\n"
              << sub->config_to_str(true, false) << std::flush;
    try {
      if (sub == sub_dg) return run_datagen(dg);
      if (sub == sub_tr) return run_train(tr);
      if (sub == sub_sp) return run_separate(sp);
      if (sub == sub_ev) return run_evaluate(ev);
      if (sub == sub_ab) return run_ablate(ab);
      if (sub == sub_bn) return run_bench(bn);
      if (sub == sub_gc) return run_gradcheck(gc);
    } catch (const std::exception& e) {
      std::cerr << "error: " << e.what() << "\n";
      return 1;
    }
  }
  return 1;
}
