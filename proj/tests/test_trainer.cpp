// Copyright 2026 The mtass Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include <gtest/gtest.h>

#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include "mtass/datagen.hpp"
#include "mtass/synth.hpp"
#include "mtass/trainer.hpp"
#include "test_util.hpp"

namespace mtass {
namespace {

std::vector<double> schedule(double lr0, int patience, const std::vector<double>& losses,
                             double min_rel = 1e-3) {
  PlateauHalving s(lr0, patience, min_rel);
  std::vector<double> out;
  for (double v : losses) out.push_back(s.observe(v));
  return out;
}

TEST(PlateauHalving, PatienceOne) {
  EXPECT_EQ(schedule(1e-3, 1, {5, 6, 7}), (std::vector<double>{1e-3, 5e-4, 2.5e-4}));
}

TEST(PlateauHalving, PatienceCountsAndResets) {
  // Two non-improving epochs halve, the counter restarts, two more halve again.
  EXPECT_EQ(schedule(1.0, 2, {5, 5, 5, 5, 5, 4, 4}),
            (std::vector<double>{1.0, 1.0, 0.5, 0.5, 0.25, 0.25, 0.25}));
  // An improvement in between resets the count.
  EXPECT_EQ(schedule(1.0, 2, {5, 6, 4, 6, 6}), (std::vector<double>{1.0, 1.0, 1.0, 1.0, 0.5}));
}

TEST(PlateauHalving, TinyImprovementsDoNotCount) {
  // 0.05 % better is below the 0.1 % threshold; 0.2 % better counts.
  EXPECT_EQ(schedule(1.0, 1, {100.0, 99.95, 99.75}), (std::vector<double>{1.0, 0.5, 0.5}));
  // Negative losses use the magnitude of the best value.
  EXPECT_EQ(schedule(1.0, 1, {-10.0, -10.005, -10.1}), (std::vector<double>{1.0, 0.5, 0.5}));
}

TEST(PlateauHalving, InvalidArguments) {
  EXPECT_THROW(PlateauHalving(0.0, 1), std::invalid_argument);
  EXPECT_THROW(PlateauHalving(1e-3, 0), std::invalid_argument);
}

std::vector<TrackTriple> tracks(std::uint64_t seed, std::size_t count, double seconds = 1.0) {
  const auto src = from_synthetic(synth_sources(seed, 4, seconds), "t");
  std::vector<TrackTriple> out;
  for (auto& g : generate_mixtures(src, count, seed)) out.push_back(std::move(g.tracks));
  return out;
}

TrainConfig quick_config(int epochs) {
  TrainConfig c;
  c.epochs = epochs;
  c.batch_size = 2;
  c.segment_seconds = 0.5;
  c.seed = 3;
  return c;
}

void expect_halving_only(const TrainLog& log) {
  for (std::size_t e = 1; e < log.epochs.size(); ++e) {
    const double prev = log.epochs[e - 1].lr, cur = log.epochs[e].lr;
    EXPECT_TRUE(cur == prev || cur == prev / 2.0) << "epoch " << e + 1;
  }
}

TEST(Train, DeterministicForFixedSeed) {
  const auto train_set = tracks(1, 6), val_set = tracks(2, 2);
  Model<float> a(tiny_config(), 5), b(tiny_config(), 5);
  const TrainLog la = train(a, train_set, val_set, quick_config(2));
  const TrainLog lb = train(b, train_set, val_set, quick_config(2));
  ASSERT_EQ(la.epochs.size(), 2u);
  ASSERT_EQ(lb.epochs.size(), 2u);
  for (std::size_t e = 0; e < 2; ++e) {
    EXPECT_EQ(la.epochs[e].train_loss, lb.epochs[e].train_loss);
    EXPECT_EQ(la.epochs[e].val_loss, lb.epochs[e].val_loss);
    EXPECT_EQ(la.epochs[e].lr, lb.epochs[e].lr);
  }
  EXPECT_EQ(la.best_epoch, lb.best_epoch);
  const auto pa = a.state().params, pb = b.state().params;
  for (std::size_t k = 0; k < pa.size(); ++k) ASSERT_EQ(pa[k]->value(), pb[k]->value());
}

TEST(Train, LossFallsAndLogIsConsistent) {
  testing::TempDir dir;
  const auto train_set = tracks(3, 8), val_set = tracks(4, 2);
  Model<float> model(tiny_config(), 1);
  TrainConfig cfg = quick_config(4);
  cfg.checkpoint_dir = dir.path().string();
  const TrainLog log = train(model, train_set, val_set, cfg);
  ASSERT_EQ(log.epochs.size(), 4u);
  EXPECT_LT(log.epochs.back().val_loss, log.epochs.front().val_loss);
  EXPECT_LT(log.epochs.back().train_loss, log.epochs.front().train_loss);
  expect_halving_only(log);
  EXPECT_EQ(model.mode(), Mode::kEval);

  // The returned weights are the best epoch's, which is what best.ckpt holds.
  ASSERT_FALSE(log.best_checkpoint.empty());
  auto loaded = load_checkpoint<float>(log.best_checkpoint);
  const AudioClip mix = val_set[0].mixture;
  const auto x = full_forward(model, mix), y = full_forward(*loaded, mix);
  for (std::size_t i = 0; i < 3; ++i) EXPECT_EQ(x[i].samples, y[i].samples);

  std::ostringstream os;
  write_train_log(os, log);
  std::istringstream is(os.str());
  std::string line;
  int lines = 0;
  while (std::getline(is, line)) {
    const auto j = nlohmann::json::parse(line);
    EXPECT_EQ(j.at("epoch"), ++lines);
    EXPECT_TRUE(j.contains("val_loss"));
    EXPECT_TRUE(j.contains("lr"));
  }
  EXPECT_EQ(lines, 4);
}

TEST(Train, GradientsReachBothStages) {
  const auto data = tracks(5, 2);
  Model<float> model(tiny_config(), 2);
  const TrainConfig cfg = quick_config(1);
  const Stft stft;
  const std::size_t len = detail::crop_length(data, cfg.segment_seconds);
  const auto e0 = detail::make_excerpt(data[0], 0, len, stft);
  const auto e1 = detail::make_excerpt(data[1], 0, len, stft);
  model.state().zero_grad();
  detail::run_batch(model, {&e0, &e1}, cfg, stft, true);
  double sep = 0.0, res = 0.0;
  for (auto* p : model.separator().state().params) sep += p->grad().cwiseAbs().sum();
  for (auto& r : model.residuals())
    for (auto* p : r.state().params) res += p->grad().cwiseAbs().sum();
  EXPECT_GT(sep, 0.0);
  EXPECT_GT(res, 0.0);
}

TEST(Train, NonFiniteLossAborts) {
  auto data = tracks(6, 2);
  for (auto& t : data)
    for (std::size_t n = 0; n < t.mixture.size(); n += 1000) t.mixture.samples[n] = std::numeric_limits<double>::quiet_NaN();
  Model<float> model(tiny_config(), 2);
  try {
    train(model, data, tracks(7, 1), quick_config(1));
    FAIL() << "expected TrainingError";
  } catch (const TrainingError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("batch items"), std::string::npos) << msg;
    EXPECT_NE(msg.find("mse"), std::string::npos) << msg;
  }
}

TEST(Train, RejectsBadInputs) {
  Model<float> model(tiny_config(), 2);
  EXPECT_THROW(train(model, {}, tracks(1, 1), quick_config(1)), std::invalid_argument);
  TrainConfig cfg = quick_config(1);
  cfg.batch_size = 0;
  EXPECT_THROW(train(model, tracks(1, 1), tracks(1, 1), cfg), std::invalid_argument);
}

TEST(Train, EarlyStopWhenLearningRateVanishes) {
  const auto train_set = tracks(1, 2), val_set = tracks(2, 1);
  Model<float> model(tiny_config(), 5);
  TrainConfig cfg = quick_config(10);
  cfg.lr0 = 1.5e-6;
  cfg.patience = 1;
  cfg.min_rel_improvement = 10.0;  // nothing ever counts as an improvement
  const TrainLog log = train(model, train_set, val_set, cfg);
  EXPECT_EQ(log.epochs.size(), 2u);
}

TEST(Train, FromManifests) {
  testing::TempDir dir;
  const auto src = from_synthetic(synth_sources(1, 3, 1.0), "t");
  const auto tr = build_dataset(dir.path(), src, 3, 1, Split::kTrain);
  const auto va = build_dataset(dir.path(), src, 1, 1, Split::kValidation);
  Model<float> model(tiny_config(), 1);
  const TrainLog log = train(model, tr.manifest, va.manifest, quick_config(1));
  EXPECT_EQ(log.epochs.size(), 1u);
  EXPECT_TRUE(std::isfinite(log.epochs[0].val_loss));
}

std::vector<EvalItem> items(std::uint64_t seed, std::size_t n) {
  std::vector<EvalItem> out;
  std::size_t k = 0;
  for (auto& t : tracks(seed, n)) out.push_back({"clip" + std::to_string(k++), std::move(t)});
  return out;
}

TEST(Evaluate, IdentityModelScoresZero) {
  const auto data = items(1, 4);
  const SdrReport rep = evaluate([](const AudioClip& m, std::size_t) {
    return std::array<AudioClip, 3>{m, m, m};
  }, data, 2);
  ASSERT_EQ(rep.clips.size(), 4u);
  for (const auto& c : rep.clips)
    for (double v : c.sdri) EXPECT_EQ(v, 0.0);
  for (double v : rep.mean_sdri) EXPECT_EQ(v, 0.0);
}

TEST(Evaluate, OracleModelHitsCap) {
  const auto data = items(2, 3);
  const SdrReport rep = evaluate([&](const AudioClip&, std::size_t k) {
    const auto& t = data[k].tracks;
    return std::array<AudioClip, 3>{t.speech, t.music, t.noise};
  }, data);
  for (double v : rep.mean_sdr) EXPECT_EQ(v, 100.0);
}

TEST(Evaluate, BadRecordsAreSkipped) {
  auto data = items(3, 3);
  data[1].tracks.speech.samples.pop_back();
  Model<float> model(tiny_config(), 1);
  const SdrReport rep = evaluate(model, data);
  EXPECT_EQ(rep.clips.size(), 2u);
  ASSERT_EQ(rep.skipped.size(), 1u);
  EXPECT_NE(rep.skipped[0].find("clip1"), std::string::npos);

  Manifest m(1);
  m[0].id = "ghost";
  m[0].speech = m[0].music = m[0].noise = m[0].mixture = "/nonexistent/x.wav";
  std::vector<std::string> skipped;
  EXPECT_TRUE(load_eval_items(m, &skipped).empty());
  EXPECT_EQ(skipped.size(), 1u);
}

TEST(Evaluate, WorkerCountDoesNotChangeScores) {
  const auto data = items(4, 4);
  Model<float> model(tiny_config(), 1);
  const SdrReport a = evaluate(model, data, 1), b = evaluate(model, data, 3);
  for (std::size_t k = 0; k < 4; ++k) EXPECT_EQ(a.clips[k].sdr, b.clips[k].sdr);
}

TEST(Ablate, ZeroedResidualHeadsGiveEqualRows) {
  const auto data = items(5, 2);
  ModelConfig one_cfg = tiny_config();
  one_cfg.two_stage = false;
  Model<float> one(one_cfg, 1), two(tiny_config(), 1);
  two.zero_residual_heads();
  const auto rows = ablate_two_stage(one, two, data);
  ASSERT_EQ(rows.size(), 3u);
  EXPECT_EQ(rows[0].method, "1 stage (separator-out)");
  EXPECT_EQ(rows[2].method, "2 stage (separator+res-out)");
  EXPECT_EQ(rows[1].sdri, rows[2].sdri);
  EXPECT_THROW(ablate_two_stage(two, one, data), std::invalid_argument);
}

TEST(RtfBench, ReportsAndScalesLinearly) {
  Model<float> model(tiny_config(), 1);
  const BenchReport a = rtf_bench(model, 4.0, "cpu", 5);
  const BenchReport b = rtf_bench(model, 8.0, "cpu", 5);
  EXPECT_GT(a.rtf, 0.0);
  EXPECT_EQ(a.run_seconds.size(), 5u);
  EXPECT_EQ(a.params, count_params(tiny_config()));
  EXPECT_EQ(a.macs_per_second, count_macs(tiny_config()));
  EXPECT_NEAR(b.median_seconds / a.median_seconds, 2.0, 0.4);
  EXPECT_NEAR(b.rtf / a.rtf, 1.0, 0.2);
  const auto j = to_json(a);
  EXPECT_EQ(j.at("device"), "cpu");
  EXPECT_THROW(rtf_bench(model, 1.0, "cpu", 0), std::invalid_argument);
}

}  // namespace
}  // namespace mtass
