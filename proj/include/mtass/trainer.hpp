// Copyright 2026 The mtass Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <numeric>
#include <ostream>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "mtass/adam.hpp"
#include "mtass/checkpoint.hpp"
#include "mtass/complexity.hpp"
#include "mtass/datagen.hpp"
#include "mtass/loss.hpp"
#include "mtass/metrics.hpp"
#include "mtass/model.hpp"
#include "mtass/parallel.hpp"
#include "mtass/stft.hpp"

namespace mtass {

class TrainingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct TrainConfig {
  double lr0 = 1e-3;
  int patience = 3;
  // Validation loss must drop by more than this fraction of the best loss
  // so far to count as an improvement.
  double min_rel_improvement = 1e-3;
  double min_lr = 1e-6;
  int batch_size = 4;
  int epochs = 30;
  std::uint64_t seed = 0;
  double segment_seconds = 4.0;
  double alpha = 0.01;
  LossReduction reduction = LossReduction::kMean;
  std::string checkpoint_dir;  // empty: keep the best weights in memory only
  std::ostream* progress = nullptr;
};

inline nlohmann::json to_json(const TrainConfig& c) {
  return {{"lr0", c.lr0},
          {"patience", c.patience},
          {"min_rel_improvement", c.min_rel_improvement},
          {"min_lr", c.min_lr},
          {"batch_size", c.batch_size},
          {"epochs", c.epochs},
          {"seed", c.seed},
          {"segment_seconds", c.segment_seconds},
          {"alpha", c.alpha},
          {"reduction", c.reduction == LossReduction::kMean ? "mean" : "sum"},
          {"checkpoint_dir", c.checkpoint_dir}};
}

// Halves the learning rate once the validation loss has failed to improve
// for `patience` consecutive epochs; the counter restarts after each halving.
class PlateauHalving {
 public:
  PlateauHalving(double lr0, int patience, double min_rel_improvement = 1e-3)
      : lr_(lr0), patience_(patience), min_rel_(min_rel_improvement) {
    if (lr0 <= 0.0) throw std::invalid_argument("PlateauHalving: lr0 must be > 0");
    if (patience < 1) throw std::invalid_argument("PlateauHalving: patience must be >= 1");
  }

  double lr() const { return lr_; }
  double best() const { return best_; }
  bool improved() const { return improved_; }

  // Records one validation loss and returns the learning rate to use next.
  double observe(double val_loss) {
    improved_ = !has_best_ || val_loss < best_ - std::abs(best_) * min_rel_;
    if (improved_) {
      best_ = val_loss;
      has_best_ = true;
      bad_epochs_ = 0;
    } else if (++bad_epochs_ >= patience_) {
      lr_ /= 2.0;
      bad_epochs_ = 0;
    }
    return lr_;
  }

 private:
  double lr_;
  int patience_;
  double min_rel_;
  double best_ = 0.0;
  bool has_best_ = false;
  bool improved_ = false;
  int bad_epochs_ = 0;
};

struct EpochLog {
  int epoch = 0;
  double train_loss = 0.0;
  double val_loss = 0.0;
  double lr = 0.0;  // learning rate used during this epoch
  double wall_seconds = 0.0;
  std::string checkpoint;  // written this epoch, if any
};

struct TrainLog {
  std::vector<EpochLog> epochs;
  int best_epoch = 0;
  std::string best_checkpoint;
};

inline nlohmann::json to_json(const EpochLog& e) {
  return {{"epoch", e.epoch}, {"train_loss", e.train_loss}, {"val_loss", e.val_loss},
          {"lr", e.lr},       {"wall_seconds", e.wall_seconds}, {"checkpoint", e.checkpoint}};
}

inline void write_train_log(std::ostream& os, const TrainLog& log) {
  for (const auto& e : log.epochs) os << to_json(e).dump() << '\n';
}

namespace detail {

// Spectra of one fixed-length excerpt of a mixture and its references.
struct Excerpt {
  ComplexSpectrogram mix;
  std::array<ComplexSpectrogram, kNumTracks> ref_ri;
  std::array<AudioClip, kNumTracks> ref_time;
};

inline AudioClip slice(const AudioClip& c, std::size_t off, std::size_t len) {
  return AudioClip(std::vector<double>(c.samples.begin() + static_cast<std::ptrdiff_t>(off),
                                       c.samples.begin() + static_cast<std::ptrdiff_t>(off + len)),
                   c.sample_rate);
}

inline Excerpt make_excerpt(const TrackTriple& t, std::size_t off, std::size_t len,
                            const Stft& stft) {
  Excerpt e;
  e.mix = stft.forward(slice(t.mixture, off, len));
  for (std::size_t i = 0; i < kNumTracks; ++i) {
    e.ref_time[i] = slice(t.track(i), off, len);
    e.ref_ri[i] = stft.forward(e.ref_time[i]);
  }
  return e;
}

inline std::size_t crop_length(const std::vector<TrackTriple>& data, double seconds) {
  std::size_t shortest = data.front().mixture.size();
  for (const auto& t : data) shortest = std::min(shortest, t.mixture.size());
  const auto want = static_cast<std::size_t>(std::llround(seconds * kSampleRate));
  return std::min(shortest, want);
}

struct BatchLoss {
  double total = 0.0;
  std::vector<double> mse, snr;
};

// Forward (and optionally backward) over a batch of equal-length excerpts.
template <typename T>
BatchLoss run_batch(Model<T>& model, const std::vector<const Excerpt*>& batch,
                    const TrainConfig& cfg, const Stft& stft, bool backward) {
  const Index frames = static_cast<Index>(batch.front()->mix.frames());
  const Index bins2 = 2 * static_cast<Index>(batch.front()->mix.bins());
  const Index n = static_cast<Index>(batch.size());
  Mat<T> mix_ri(bins2, frames * n);
  for (Index b = 0; b < n; ++b) mix_ri.middleCols(b * frames, frames) = to_ri<T>(batch[static_cast<std::size_t>(b)]->mix);
  const Mat<T> mag = ri_magnitude(mix_ri);
  auto out = model.forward(mix_ri, mag, frames);

  BatchLoss loss;
  loss.mse.assign(kNumTracks, 0.0);
  loss.snr.assign(kNumTracks, 0.0);
  std::vector<Mat<T>> d_out(kNumTracks, Mat<T>(bins2, frames * n));
  const LossWeights w{cfg.alpha};
  for (Index b = 0; b < n; ++b) {
    const Excerpt& ex = *batch[static_cast<std::size_t>(b)];
    std::vector<ComplexSpectrogram> y, s;
    std::vector<AudioClip> s_time;
    for (std::size_t i = 0; i < kNumTracks; ++i) {
      y.push_back(from_ri(out.output[i].middleCols(b * frames, frames), ex.mix));
      s.push_back(ex.ref_ri[i]);
      s_time.push_back(ex.ref_time[i]);
    }
    auto lg = multi_domain_loss_grad(y, s, s_time, w, stft, cfg.reduction);
    loss.total += lg.parts.total / static_cast<double>(n);
    for (std::size_t i = 0; i < kNumTracks; ++i) {
      loss.mse[i] += lg.parts.mse[i] / static_cast<double>(n);
      loss.snr[i] += lg.parts.snr[i] / static_cast<double>(n);
      if (backward)
        d_out[i].middleCols(b * frames, frames) =
            to_ri<T>(lg.d_y[i]) / static_cast<T>(n);
    }
  }
  if (backward) model.backward(d_out);
  return loss;
}

template <typename T>
std::vector<Mat<T>> snapshot(Model<T>& m) {
  std::vector<Mat<T>> out;
  auto s = m.state();
  for (auto* t : s.params) out.push_back(t->value());
  for (auto* t : s.buffers) out.push_back(t->value());
  return out;
}

template <typename T>
void restore(Model<T>& m, const std::vector<Mat<T>>& snap) {
  auto s = m.state();
  std::size_t k = 0;
  for (auto* t : s.params) t->value() = snap[k++];
  for (auto* t : s.buffers) t->value() = snap[k++];
}

}  // namespace detail

// Validation loss: each clip's leading `segment_seconds` in eval mode.
template <typename T>
double validation_loss(Model<T>& model, const std::vector<TrackTriple>& val,
                       const TrainConfig& cfg) {
  if (val.empty()) throw std::invalid_argument("validation_loss: empty set");
  const Mode prev = model.mode();
  model.set_mode(Mode::kEval);
  const auto& mc = model.config();
  const Stft stft({static_cast<std::size_t>(mc.window), static_cast<std::size_t>(mc.hop), true});
  const std::size_t len = detail::crop_length(val, cfg.segment_seconds);
  double total = 0.0;
  for (const auto& t : val) {
    const auto ex = detail::make_excerpt(t, 0, len, stft);
    total += detail::run_batch(model, {&ex}, cfg, stft, false).total;
  }
  model.set_mode(prev);
  return total / static_cast<double>(val.size());
}

// Joint training of separator and residual estimators on the single
// multi-domain loss of the final outputs. Each epoch draws one random
// fixed-length excerpt per training clip, in a seeded shuffled order.
// On return the model holds the weights of the best validation epoch.
template <typename T>
TrainLog train(Model<T>& model, const std::vector<TrackTriple>& train_set,
               const std::vector<TrackTriple>& val_set, const TrainConfig& cfg) {
  if (train_set.empty() || val_set.empty())
    throw std::invalid_argument("train: empty training or validation set");
  if (cfg.batch_size < 1 || cfg.epochs < 0)
    throw std::invalid_argument("train: batch_size must be >= 1 and epochs >= 0");
  const auto& mc = model.config();
  const Stft stft({static_cast<std::size_t>(mc.window), static_cast<std::size_t>(mc.hop), true});
  const std::size_t len = detail::crop_length(train_set, cfg.segment_seconds);
  if (len < static_cast<std::size_t>(mc.window))
    throw std::invalid_argument("train: clips shorter than one STFT window");

  PlateauHalving sched(cfg.lr0, cfg.patience, cfg.min_rel_improvement);
  Adam<T> adam({cfg.lr0, 0.9, 0.999, 1e-8});
  std::mt19937_64 rng(cfg.seed);
  const auto params = model.state().params;
  std::vector<std::size_t> order(train_set.size());
  std::iota(order.begin(), order.end(), std::size_t{0});

  TrainLog log;
  std::vector<Mat<T>> best = detail::snapshot(model);
  if (!cfg.checkpoint_dir.empty()) std::filesystem::create_directories(cfg.checkpoint_dir);

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    model.set_mode(Mode::kTrain);
    std::shuffle(order.begin(), order.end(), rng);
    EpochLog e;
    e.epoch = epoch;
    e.lr = sched.lr();
    adam.set_lr(sched.lr());
    double sum = 0.0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(cfg.batch_size)) {
      const std::size_t stop = std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size));
      std::vector<detail::Excerpt> excerpts;
      for (std::size_t k = start; k < stop; ++k) {
        const auto& t = train_set[order[k]];
        const std::size_t off =
            std::uniform_int_distribution<std::size_t>(0, t.mixture.size() - len)(rng);
        excerpts.push_back(detail::make_excerpt(t, off, len, stft));
      }
      std::vector<const detail::Excerpt*> batch;
      for (const auto& ex : excerpts) batch.push_back(&ex);
      model.state().zero_grad();
      const auto bl = detail::run_batch(model, batch, cfg, stft, true);
      if (!std::isfinite(bl.total)) {
        std::ostringstream msg;
        msg << "non-finite training loss at epoch " << epoch << ", batch items [";
        for (std::size_t k = start; k < stop; ++k) msg << (k > start ? "," : "") << order[k];
        msg << "], mse [" << bl.mse[0] << "," << bl.mse[1] << "," << bl.mse[2] << "], snr ["
            << bl.snr[0] << "," << bl.snr[1] << "," << bl.snr[2] << "]";
        throw TrainingError(msg.str());
      }
      try {
        adam.step(params);
      } catch (const NonFiniteGradient& err) {
        throw TrainingError(std::string("epoch ") + std::to_string(epoch) + ": " + err.what());
      }
      sum += bl.total;
      ++batches;
    }
    e.train_loss = sum / static_cast<double>(batches);
    e.val_loss = validation_loss(model, val_set, cfg);
    sched.observe(e.val_loss);
    if (sched.improved()) {
      best = detail::snapshot(model);
      log.best_epoch = epoch;
      if (!cfg.checkpoint_dir.empty()) {
        e.checkpoint = (std::filesystem::path(cfg.checkpoint_dir) / "best.ckpt").string();
        save_checkpoint(e.checkpoint, model);
        log.best_checkpoint = e.checkpoint;
      }
    }
    e.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (cfg.progress)
      *cfg.progress << "epoch " << epoch << " train " << e.train_loss << " val " << e.val_loss
                    << " lr " << e.lr << " (" << e.wall_seconds << " s)" << std::endl;
    log.epochs.push_back(e);
    if (sched.lr() < cfg.min_lr) break;
  }
  detail::restore(model, best);
  model.set_mode(Mode::kEval);
  return log;
}

// Training from dataset manifests; every record is loaded up front.
template <typename T>
TrainLog train(Model<T>& model, const Manifest& train_manifest, const Manifest& val_manifest,
               const TrainConfig& cfg) {
  auto load = [](const Manifest& m) {
    std::vector<TrackTriple> out;
    for (const auto& r : m) out.push_back(load_record(r));
    return out;
  };
  return train(model, load(train_manifest), load(val_manifest), cfg);
}

// ---------------------------------------------------------------------------
// Evaluation.

struct EvalItem {
  std::string id;
  TrackTriple tracks;
};

inline std::vector<EvalItem> to_eval_items(const std::vector<GeneratedMixture>& mixes) {
  std::vector<EvalItem> out;
  for (const auto& g : mixes) out.push_back({g.id, g.tracks});
  return out;
}

// Maps (mixture, item index) to three estimated tracks.
using SeparateFn = std::function<std::array<AudioClip, kNumTracks>(const AudioClip&, std::size_t)>;

inline SdrReport evaluate(const SeparateFn& fn, const std::vector<EvalItem>& items,
                          std::size_t workers = 1) {
  std::vector<ClipScore> scores(items.size());
  std::vector<std::string> errors(items.size());
  parallel_for(items.size(), workers, [&](std::size_t k) {
    try {
      const auto& t = items[k].tracks;
      const auto est = fn(t.mixture, k);
      scores[k] = score_clip(items[k].id, est, t.mixture, {&t.speech, &t.music, &t.noise});
    } catch (const std::exception& e) {
      errors[k] = items[k].id + ": " + e.what();
    }
  });
  SdrReport rep;
  for (std::size_t k = 0; k < items.size(); ++k) {
    if (errors[k].empty()) rep.clips.push_back(scores[k]);
    else rep.skipped.push_back(errors[k]);
  }
  rep.aggregate();
  return rep;
}

// Model evaluation. Each worker runs its own copy of the model.
template <typename T>
SdrReport evaluate(Model<T>& model, const std::vector<EvalItem>& items, std::size_t workers = 1,
                   bool separator_only = false) {
  model.set_mode(Mode::kEval);
  workers = std::max<std::size_t>(1, std::min(workers, items.size()));
  std::vector<Model<T>> copies;
  for (std::size_t w = 1; w < workers; ++w) copies.push_back(model);
  std::vector<Model<T>*> pool{&model};
  for (auto& c : copies) pool.push_back(&c);
  std::vector<std::size_t> owner(items.size());
  for (std::size_t k = 0; k < items.size(); ++k) owner[k] = k % workers;
  // Items are dealt round-robin to workers and each worker processes its
  // share in order, so results do not depend on scheduling.
  std::vector<ClipScore> scores(items.size());
  std::vector<std::string> errors(items.size());
  parallel_for(workers, workers, [&](std::size_t w) {
    for (std::size_t k = w; k < items.size(); k += workers) {
      try {
        const auto& t = items[k].tracks;
        const Separation s = separate(*pool[w], t.mixture);
        scores[k] = score_clip(items[k].id, separator_only ? s.separator_out : s.output,
                               t.mixture, {&t.speech, &t.music, &t.noise});
      } catch (const std::exception& e) {
        errors[k] = items[k].id + ": " + e.what();
      }
    }
  });
  SdrReport rep;
  for (std::size_t k = 0; k < items.size(); ++k) {
    if (errors[k].empty()) rep.clips.push_back(scores[k]);
    else rep.skipped.push_back(errors[k]);
  }
  rep.aggregate();
  return rep;
}

// Loads a manifest's records; unreadable records are reported in `skipped`.
inline std::vector<EvalItem> load_eval_items(const Manifest& m,
                                             std::vector<std::string>* skipped = nullptr) {
  std::vector<EvalItem> items;
  for (const auto& r : m) {
    try {
      items.push_back({r.id, load_record(r)});
    } catch (const std::exception& e) {
      if (skipped) skipped->push_back(r.id + ": " + e.what());
    }
  }
  return items;
}

// SDRi rows in the layout of a one-stage vs two-stage comparison table.
template <typename T>
std::vector<SdriRow> ablate_two_stage(Model<T>& one_stage, Model<T>& two_stage,
                                      const std::vector<EvalItem>& items,
                                      std::size_t workers = 1) {
  if (one_stage.two_stage() || !two_stage.two_stage())
    throw std::invalid_argument("ablate_two_stage: expected a one-stage and a two-stage model");
  const SdrReport one = evaluate(one_stage, items, workers, true);
  const SdrReport sep = evaluate(two_stage, items, workers, true);
  const SdrReport full = evaluate(two_stage, items, workers, false);
  return {{"1 stage (separator-out)", one.mean_sdri},
          {"2 stage (separator-out)", sep.mean_sdri},
          {"2 stage (separator+res-out)", full.mean_sdri}};
}

// ---------------------------------------------------------------------------
// Real-time factor.

struct BenchReport {
  std::string device;
  double audio_seconds = 0.0;
  double median_seconds = 0.0;
  double rtf = 0.0;
  std::vector<double> run_seconds;
  // Median wall time per stage.
  double analysis_seconds = 0.0;
  double separator_seconds = 0.0;
  double residual_seconds = 0.0;
  double synthesis_seconds = 0.0;
  std::int64_t params = 0;
  std::int64_t macs_per_second = 0;
  std::vector<LayerCost> layers;
};

inline nlohmann::json to_json(const BenchReport& b) {
  nlohmann::json groups = nlohmann::json::object();
  for (const auto& l : b.layers) {
    const std::string group = l.name.substr(0, l.name.find('.', l.name.find('.') + 1));
    auto& g = groups[group];
    if (g.is_null()) g = {{"params", std::int64_t{0}}, {"macs_per_frame", std::int64_t{0}}};
    g["params"] = g["params"].get<std::int64_t>() + l.params;
    g["macs_per_frame"] = g["macs_per_frame"].get<std::int64_t>() + l.macs_per_frame;
  }
  return {{"device", b.device},
          {"audio_seconds", b.audio_seconds},
          {"median_seconds", b.median_seconds},
          {"rtf", b.rtf},
          {"run_seconds", b.run_seconds},
          {"stages",
           {{"analysis", b.analysis_seconds},
            {"separator", b.separator_seconds},
            {"residual", b.residual_seconds},
            {"synthesis", b.synthesis_seconds}}},
          {"params", b.params},
          {"macs_per_second", b.macs_per_second},
          {"layers", groups}};
}

// Times full separation of `seconds` of noise: one warm-up, then the median
// of `runs` timed passes.
template <typename T>
BenchReport rtf_bench(Model<T>& model, double seconds = 30.0, std::string device = "cpu",
                      int runs = 5, std::uint64_t seed = 0) {
  if (runs < 1) throw std::invalid_argument("rtf_bench: runs must be >= 1");
  model.set_mode(Mode::kEval);
  const auto& c = model.config();
  const AudioClip clip = synth::noise_like(seed, seconds, c.sample_rate);
  const Stft stft({static_cast<std::size_t>(c.window), static_cast<std::size_t>(c.hop), true});
  using clock = std::chrono::steady_clock;
  auto since = [](clock::time_point t) {
    return std::chrono::duration<double>(clock::now() - t).count();
  };
  std::vector<double> total, ana, sep, res, syn;
  for (int r = 0; r <= runs; ++r) {
    const auto t0 = clock::now();
    const ComplexSpectrogram mix = stft.forward(clip);
    const Mat<T> mix_ri = to_ri<T>(mix);
    const Mat<T> mag = ri_magnitude(mix_ri);
    const double t_ana = since(t0);
    auto t1 = clock::now();
    auto masks = model.separator().forward(mag, mix_ri.cols());
    std::vector<Mat<T>> outs;
    for (const auto& m : masks) outs.push_back(ri_multiply(m, mix_ri));
    const double t_sep = since(t1);
    t1 = clock::now();
    for (std::size_t i = 0; i < model.residuals().size(); ++i)
      outs[i] += model.residuals()[i].forward(mix_ri - outs[i], mix_ri.cols());
    const double t_res = since(t1);
    t1 = clock::now();
    for (const auto& o : outs) (void)stft.inverse(from_ri(o, mix));
    const double t_syn = since(t1);
    if (r == 0) continue;  // warm-up
    total.push_back(since(t0));
    ana.push_back(t_ana);
    sep.push_back(t_sep);
    res.push_back(t_res);
    syn.push_back(t_syn);
  }
  auto median = [](std::vector<double> v) {
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
  };
  BenchReport b;
  b.device = std::move(device);
  b.audio_seconds = seconds;
  b.run_seconds = total;
  b.median_seconds = median(total);
  b.rtf = b.median_seconds / seconds;
  b.analysis_seconds = median(ana);
  b.separator_seconds = median(sep);
  b.residual_seconds = median(res);
  b.synthesis_seconds = median(syn);
  b.params = count_params(c);
  b.macs_per_second = count_macs(c, 1.0);
  b.layers = layer_costs(c);
  return b;
}

}  // namespace mtass
