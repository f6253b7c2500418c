// Copyright 2026 The mtass Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "mtass/audio.hpp"
#include "mtass/parallel.hpp"
#include "mtass/resample.hpp"
#include "mtass/synth.hpp"
#include "mtass/wav.hpp"

namespace mtass {

enum class Split { kTrain, kValidation, kTest };

inline const char* to_string(Split s) {
  switch (s) {
    case Split::kTrain: return "train";
    case Split::kValidation: return "validation";
    case Split::kTest: return "test";
  }
  return "?";
}

inline Split parse_split(const std::string& s) {
  if (s == "train") return Split::kTrain;
  if (s == "validation" || s == "val") return Split::kValidation;
  if (s == "test") return Split::kTest;
  throw std::invalid_argument("unknown split: " + s);
}

struct SnrRange {
  double lo = -5.0;
  double hi = 5.0;
};

struct MixSpec {
  std::string speech_path, music_path, noise_path;
  double snr_music_db = 0.0;
  double snr_noise_db = 0.0;
  std::uint64_t seed = 0;
  Split split = Split::kTrain;
};

// Post-scaling references and their sum.
struct TrackTriple {
  AudioClip speech, music, noise, mixture;

  const AudioClip& track(std::size_t i) const {
    return i == 0 ? speech : (i == 1 ? music : noise);
  }
  AudioClip& track(std::size_t i) {
    return i == 0 ? speech : (i == 1 ? music : noise);
  }
};

// Non-overlapping consecutive segments; a trailing remainder is dropped.
inline std::vector<AudioClip> segment(const AudioClip& clip, double seconds = 10.0) {
  const auto len = static_cast<std::size_t>(std::llround(seconds * clip.sample_rate));
  std::vector<AudioClip> out;
  if (len == 0) return out;
  for (std::size_t off = 0; off + len <= clip.size(); off += len)
    out.emplace_back(std::vector<double>(clip.samples.begin() + static_cast<std::ptrdiff_t>(off),
                                         clip.samples.begin() + static_cast<std::ptrdiff_t>(off + len)),
                     clip.sample_rate);
  return out;
}

// Returns g * source with 10 log10(E_ref / E_out) == snr_db.
inline AudioClip scale_to_snr(const AudioClip& reference, const AudioClip& source,
                              double snr_db) {
  if (reference.size() != source.size())
    throw std::invalid_argument("scale_to_snr: length mismatch");
  const double e_ref = energy(reference.samples);
  const double e_src = energy(source.samples);
  if (e_ref <= 0.0) throw DegenerateInput("scale_to_snr: zero-energy reference");
  if (e_src <= 0.0) throw DegenerateInput("scale_to_snr: zero-energy source");
  const double g = std::sqrt(e_ref / (e_src * std::pow(10.0, snr_db / 10.0)));
  AudioClip out = source;
  for (double& v : out.samples) v *= g;
  return out;
}

// Uniform on [lo, hi].
template <typename Rng>
double draw_snr(Rng& rng, double lo = -5.0, double hi = 5.0) {
  if (lo > hi) throw std::invalid_argument("draw_snr: lo > hi");
  if (lo == hi) return lo;
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

// Music and noise are scaled against speech. Every track is rounded to
// float32 before summation so that mixture == speech + music + noise also
// holds (to within half an ulp) after a float32 WAV round trip. If the
// mixture would clip, all four tracks share one gain.
inline TrackTriple mix(const AudioClip& speech, const AudioClip& music,
                       const AudioClip& noise, const MixSpec& spec) {
  if (music.size() != speech.size() || noise.size() != speech.size())
    throw std::invalid_argument("mix: clips differ in length");
  if (music.sample_rate != speech.sample_rate || noise.sample_rate != speech.sample_rate)
    throw std::invalid_argument("mix: clips differ in sample rate");
  TrackTriple t;
  t.speech = speech;
  t.music = scale_to_snr(speech, music, spec.snr_music_db);
  t.noise = scale_to_snr(speech, noise, spec.snr_noise_db);

  const std::size_t n = speech.size();
  double peak = 0.0;
  for (std::size_t i = 0; i < n; ++i)
    peak = std::max(peak, std::abs(t.speech.samples[i] + t.music.samples[i] +
                                   t.noise.samples[i]));
  const double g = peak > 1.0 ? 1.0 / peak : 1.0;
  t.mixture = AudioClip(std::vector<double>(n), speech.sample_rate);
  for (std::size_t i = 0; i < n; ++i) {
    const double s = static_cast<float>(t.speech.samples[i] * g);
    const double m = static_cast<float>(t.music.samples[i] * g);
    const double z = static_cast<float>(t.noise.samples[i] * g);
    t.speech.samples[i] = s;
    t.music.samples[i] = m;
    t.noise.samples[i] = z;
    t.mixture.samples[i] = static_cast<float>(s + m + z);
  }
  return t;
}

// Clips available for one split, with stable identifiers per clip.
struct SourcePool {
  std::vector<std::string> ids;
  std::vector<AudioClip> clips;
  std::size_t size() const { return clips.size(); }
};

struct DatasetSources {
  std::array<SourcePool, kNumTracks> tracks;  // speech, music, noise
};

inline DatasetSources from_synthetic(const SourceSet& set, const std::string& tag) {
  DatasetSources s;
  const std::array<const std::vector<AudioClip>*, 3> lists{&set.speech, &set.music, &set.noise};
  for (std::size_t k = 0; k < kNumTracks; ++k) {
    s.tracks[k].clips = *lists[k];
    for (std::size_t j = 0; j < lists[k]->size(); ++j)
      s.tracks[k].ids.push_back("synthetic:" + tag + ":" + kTrackNames[k] + ":" +
                                std::to_string(j));
  }
  return s;
}

struct ManifestRecord {
  std::string id;
  Split split = Split::kTrain;
  // Written WAV paths. build_dataset stores them relative to the manifest's
  // directory; read_manifest resolves relative paths against that directory.
  std::string speech, music, noise, mixture;
  std::string speech_source, music_source, noise_source;
  double snr_music_db = 0.0;
  double snr_noise_db = 0.0;
  std::uint64_t seed = 0;
  std::size_t num_samples = 0;

  std::string track_path(std::size_t i) const {
    return i == 0 ? speech : (i == 1 ? music : noise);
  }
};

using Manifest = std::vector<ManifestRecord>;

inline nlohmann::json to_json(const ManifestRecord& r) {
  return {{"id", r.id},
          {"split", to_string(r.split)},
          {"speech", r.speech},
          {"music", r.music},
          {"noise", r.noise},
          {"mixture", r.mixture},
          {"speech_source", r.speech_source},
          {"music_source", r.music_source},
          {"noise_source", r.noise_source},
          {"snr_music_db", r.snr_music_db},
          {"snr_noise_db", r.snr_noise_db},
          {"seed", r.seed},
          {"num_samples", r.num_samples}};
}

inline ManifestRecord record_from_json(const nlohmann::json& j) {
  ManifestRecord r;
  r.id = j.at("id").get<std::string>();
  r.split = parse_split(j.at("split").get<std::string>());
  r.speech = j.at("speech").get<std::string>();
  r.music = j.at("music").get<std::string>();
  r.noise = j.at("noise").get<std::string>();
  r.mixture = j.at("mixture").get<std::string>();
  r.speech_source = j.value("speech_source", "");
  r.music_source = j.value("music_source", "");
  r.noise_source = j.value("noise_source", "");
  r.snr_music_db = j.at("snr_music_db").get<double>();
  r.snr_noise_db = j.at("snr_noise_db").get<double>();
  r.seed = j.at("seed").get<std::uint64_t>();
  r.num_samples = j.at("num_samples").get<std::size_t>();
  return r;
}

inline void write_manifest(const std::filesystem::path& path, const Manifest& m) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot write manifest " + path.string());
  for (const auto& r : m) os << to_json(r).dump() << '\n';
}

inline Manifest read_manifest(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot read manifest " + path.string());
  Manifest m;
  std::string line;
  const auto base = path.parent_path();
  auto resolve = [&](std::string& p) {
    if (!p.empty() && std::filesystem::path(p).is_relative()) p = (base / p).string();
  };
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    ManifestRecord r = record_from_json(nlohmann::json::parse(line));
    resolve(r.speech);
    resolve(r.music);
    resolve(r.noise);
    resolve(r.mixture);
    m.push_back(std::move(r));
  }
  return m;
}

// One drawn mixture, before anything touches the filesystem.
struct GeneratedMixture {
  std::string id;
  MixSpec spec;
  TrackTriple tracks;
};

namespace detail {

inline std::uint64_t split_salt(Split s) { return 0x5150 + static_cast<std::uint64_t>(s); }

inline GeneratedMixture draw_mixture(const DatasetSources& src, std::uint64_t seed,
                                     Split split, std::size_t index, SnrRange snr) {
  const std::uint64_t rec_seed = mix_seed(mix_seed(seed, split_salt(split)), index);
  std::mt19937_64 rng(rec_seed);
  constexpr int kMaxRedraws = 100;
  for (int attempt = 0; attempt < kMaxRedraws; ++attempt) {
    std::array<std::size_t, kNumTracks> pick{};
    bool silent = false;
    for (std::size_t k = 0; k < kNumTracks; ++k) {
      pick[k] = std::uniform_int_distribution<std::size_t>(0, src.tracks[k].size() - 1)(rng);
      if (energy(src.tracks[k].clips[pick[k]].samples) <= 0.0) silent = true;
    }
    MixSpec spec;
    spec.snr_music_db = draw_snr(rng, snr.lo, snr.hi);
    spec.snr_noise_db = draw_snr(rng, snr.lo, snr.hi);
    if (silent) continue;  // zero-energy segments are redrawn
    spec.speech_path = src.tracks[0].ids[pick[0]];
    spec.music_path = src.tracks[1].ids[pick[1]];
    spec.noise_path = src.tracks[2].ids[pick[2]];
    spec.seed = rec_seed;
    spec.split = split;
    const AudioClip& s = src.tracks[0].clips[pick[0]];
    const AudioClip& m = src.tracks[1].clips[pick[1]];
    const AudioClip& z = src.tracks[2].clips[pick[2]];
    const std::size_t len = std::min({s.size(), m.size(), z.size()});
    auto cut = [len](const AudioClip& c) {
      return AudioClip(std::vector<double>(c.samples.begin(),
                                           c.samples.begin() + static_cast<std::ptrdiff_t>(len)),
                       c.sample_rate);
    };
    GeneratedMixture g;
    g.id = std::string(to_string(split)) + "_" + std::to_string(index);
    g.spec = spec;
    g.tracks = mix(cut(s), cut(m), cut(z), spec);
    return g;
  }
  throw DegenerateInput("draw_mixture: could not find non-silent sources");
}

}  // namespace detail

// Draws `count` mixtures for one split. Record i depends only on
// (sources, seed, split, i), so the result is independent of `workers`.
inline std::vector<GeneratedMixture> generate_mixtures(const DatasetSources& src,
                                                       std::size_t count, std::uint64_t seed,
                                                       Split split = Split::kTrain,
                                                       SnrRange snr = {},
                                                       std::size_t workers = 1) {
  for (const auto& pool : src.tracks)
    if (pool.size() == 0) throw std::invalid_argument("generate_mixtures: empty source list");
  std::vector<GeneratedMixture> out(count);
  parallel_for(count, workers, [&](std::size_t i) {
    out[i] = detail::draw_mixture(src, seed, split, i, snr);
  });
  return out;
}

struct BuildResult {
  Manifest manifest;
  std::vector<std::string> errors;  // one entry per record that failed to write
};

// Writes four WAVs per mixture under out_dir/<split>/ and the JSON-lines
// manifest out_dir/<split>.jsonl. The returned manifest holds paths prefixed
// with out_dir. Write failures are collected per record and
// generation continues.
inline BuildResult build_dataset(const std::filesystem::path& out_dir,
                                 const DatasetSources& src, std::size_t count,
                                 std::uint64_t seed, Split split = Split::kTrain,
                                 SnrRange snr = {}, WavFormat fmt = WavFormat::kFloat32,
                                 std::size_t workers = 1) {
  namespace fs = std::filesystem;
  const fs::path dir = out_dir / to_string(split);
  fs::create_directories(dir);
  auto mixes = generate_mixtures(src, count, seed, split, snr, workers);
  std::vector<std::string> errs(count);
  std::vector<ManifestRecord> recs(count);
  parallel_for(count, workers, [&](std::size_t i) {
    const auto& g = mixes[i];
    ManifestRecord r;
    r.id = g.id;
    r.split = split;
    r.speech_source = g.spec.speech_path;
    r.music_source = g.spec.music_path;
    r.noise_source = g.spec.noise_path;
    r.snr_music_db = g.spec.snr_music_db;
    r.snr_noise_db = g.spec.snr_noise_db;
    r.seed = g.spec.seed;
    r.num_samples = g.tracks.mixture.size();
    const fs::path rel = to_string(split);
    r.speech = (rel / (g.id + "_speech.wav")).string();
    r.music = (rel / (g.id + "_music.wav")).string();
    r.noise = (rel / (g.id + "_noise.wav")).string();
    r.mixture = (rel / (g.id + "_mixture.wav")).string();
    try {
      write_wav((out_dir / r.speech).string(), g.tracks.speech, fmt);
      write_wav((out_dir / r.music).string(), g.tracks.music, fmt);
      write_wav((out_dir / r.noise).string(), g.tracks.noise, fmt);
      write_wav((out_dir / r.mixture).string(), g.tracks.mixture, fmt);
      recs[i] = std::move(r);
    } catch (const std::exception& e) {
      errs[i] = g.id + ": " + e.what();
    }
  });
  BuildResult res;
  for (std::size_t i = 0; i < count; ++i) {
    if (errs[i].empty()) res.manifest.push_back(std::move(recs[i]));
    else res.errors.push_back(errs[i]);
  }
  write_manifest(out_dir / (std::string(to_string(split)) + ".jsonl"), res.manifest);
  for (auto& r : res.manifest)
    for (std::string* p : {&r.speech, &r.music, &r.noise, &r.mixture}) *p = (out_dir / *p).string();
  return res;
}

inline TrackTriple load_record(const ManifestRecord& r) {
  TrackTriple t;
  t.speech = read_wav(r.speech);
  t.music = read_wav(r.music);
  t.noise = read_wav(r.noise);
  t.mixture = read_wav(r.mixture);
  return t;
}

// Loads a source corpus from disk. Two layouts are accepted:
//   DIR/{train,validation,test}/{speech,music,noise}/**.wav  (pre-split), or
//   DIR/{speech,music,noise}/**.wav, whose files are shuffled with `seed`
//   and assigned 80/10/10 to train/validation/test. Splits are disjoint by
// file. Every file is resampled to 16 kHz and cut into 10 s segments.
inline std::map<Split, DatasetSources> load_source_dir(const std::filesystem::path& dir,
                                                       std::uint64_t seed,
                                                       double seconds = 10.0) {
  namespace fs = std::filesystem;
  auto list_wavs = [](const fs::path& d) {
    std::vector<fs::path> files;
    if (!fs::is_directory(d)) return files;
    for (const auto& e : fs::recursive_directory_iterator(d)) {
      auto ext = e.path().extension().string();
      std::transform(ext.begin(), ext.end(), ext.begin(), ::tolower);
      if (e.is_regular_file() && ext == ".wav") files.push_back(e.path());
    }
    std::sort(files.begin(), files.end());
    return files;
  };
  auto add_file = [&](SourcePool& pool, const fs::path& f) {
    AudioClip clip = resample(read_wav(f.string()), kSampleRate);
    auto segs = segment(clip, seconds);
    for (std::size_t k = 0; k < segs.size(); ++k) {
      pool.ids.push_back(f.string() + "#" + std::to_string(k));
      pool.clips.push_back(std::move(segs[k]));
    }
  };

  std::map<Split, DatasetSources> out;
  const std::array<Split, 3> splits{Split::kTrain, Split::kValidation, Split::kTest};
  if (fs::is_directory(dir / "train")) {
    for (Split s : splits)
      for (std::size_t k = 0; k < kNumTracks; ++k)
        for (const auto& f : list_wavs(dir / to_string(s) / kTrackNames[k]))
          add_file(out[s].tracks[k], f);
  } else {
    for (std::size_t k = 0; k < kNumTracks; ++k) {
      auto files = list_wavs(dir / kTrackNames[k]);
      std::mt19937_64 rng(mix_seed(seed, k));
      std::shuffle(files.begin(), files.end(), rng);
      const std::size_t n = files.size();
      const std::size_t n_val = n >= 3 ? std::max<std::size_t>(1, n / 10) : 0;
      const std::size_t n_test = n >= 3 ? std::max<std::size_t>(1, n / 10) : 0;
      for (std::size_t i = 0; i < n; ++i) {
        const Split s = i < n_val ? Split::kValidation
                                  : (i < n_val + n_test ? Split::kTest : Split::kTrain);
        add_file(out[s].tracks[k], files[i]);
      }
    }
  }
  return out;
}

}  // namespace mtass
