/*
 * Copyright 2026 The parvoc Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include "parvoc/cli.h"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <set>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "parvoc/features.h"
#include "parvoc/filterbank.h"
#include "parvoc/metrics.h"
#include "parvoc/model.h"
#include "parvoc/postfilter.h"
#include "parvoc/quantize.h"
#include "parvoc/rng.h"
#include "parvoc/tensor.h"
#include "parvoc/trainer.h"
#include "parvoc/wav_io.h"

namespace parvoc {
namespace {

namespace fs = std::filesystem;

std::vector<fs::path> ListWavs(const std::string& dir) {
  if (!fs::is_directory(dir)) throw Error("not a directory: " + dir);
  std::vector<fs::path> out;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ".wav") {
      out.push_back(entry.path());
    }
  }
  std::sort(out.begin(), out.end());
  return out;
}

double Seconds(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
      .count();
}

void LogPasses(const char* tag, const GenResult& res) {
  for (size_t i = 0; i < res.passes.size(); ++i) {
    std::fprintf(stderr, "%s: far pass %zu/%zu: band %d, %d stages\n", tag,
                 i + 1, res.passes.size(), res.passes[i].band,
                 res.passes[i].stages);
  }
}

bool ValidGroupFlag(int g) { return g == 0 || g == 1 || g == 5 || g == 10; }
bool ValidDepthFlag(int d) {
  return d == -1 || d == 0 || d == 2 || d == 3;
}

int RunTrainingPhase(const std::string& config_path, const char* tag,
                     TrainResult (*phase)(const TrainConfig&)) {
  TrainConfig run;
  try {
    run = ParseTrainConfigFile(config_path);
    run.Validate();
  } catch (const Error& e) {
    std::fprintf(stderr, "%s: %s\n", tag, e.what());
    return kExitUsage;
  }
  try {
    TrainResult r = phase(run);
    std::printf("steps\t%lld\n", static_cast<long long>(r.steps_run));
    std::printf("first_loss\t%.6f\n", r.first_loss);
    std::printf("last_loss\t%.6f\n", r.last_loss);
    std::printf("checkpoint\t%s\n", r.checkpoint_path.c_str());
    return kExitOk;
  } catch (const Error& e) {
    std::fprintf(stderr, "%s: %s\n", tag, e.what());
    return kExitBadInput;
  }
}

}  // namespace

int CmdFeatures(const std::string& in_dir, const std::string& out_dir) {
  std::vector<fs::path> wavs;
  try {
    wavs = ListWavs(in_dir);
  } catch (const Error& e) {
    std::fprintf(stderr, "features: %s\n", e.what());
    return kExitBadInput;
  }
  if (wavs.empty()) {
    std::fprintf(stderr, "features: no .wav files in %s\n", in_dir.c_str());
    return kExitUsage;
  }
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec) {
    std::fprintf(stderr, "features: cannot create %s: %s\n", out_dir.c_str(),
                 ec.message().c_str());
    return kExitError;
  }
  for (const fs::path& p : wavs) {
    try {
      WavData wav = ReadWav16Mono(p.string());
      MelSpectrogram mel =
          ComputeMel(wav.samples, wav.sample_rate, StftConfig{});
      const fs::path out = fs::path(out_dir) / (p.stem().string() + ".pvfe");
      SavePvfe(out.string(), mel);
      std::printf("%s\t%d\t%d\n", out.filename().string().c_str(),
                  mel.data.shape[0], mel.data.shape[1]);
    } catch (const Error& e) {
      std::fprintf(stderr, "features: %s: %s\n", p.string().c_str(), e.what());
      return kExitBadInput;
    }
  }
  return kExitOk;
}

int CmdTrain(const std::string& config_path) {
  return RunTrainingPhase(config_path, "train", &RunTraining);
}

int CmdTrainPf(const std::string& config_path) {
  return RunTrainingPhase(config_path, "train-pf", &RunPfTraining);
}

int CmdSynth(const std::string& checkpoint, const std::string& features,
             const std::string& out_wav, const SynthFlags& flags) {
  if (!ValidGroupFlag(flags.group)) {
    std::fprintf(stderr, "synth: --g must be 1, 5 or 10\n");
    return kExitUsage;
  }
  if (!ValidDepthFlag(flags.bar_depth)) {
    std::fprintf(stderr, "synth: --bar-depth must be 0, 2 or 3\n");
    return kExitUsage;
  }
  Checkpoint ck;
  try {
    ck = LoadCheckpoint(checkpoint);
  } catch (const Error& e) {
    std::fprintf(stderr, "synth: %s: %s\n", checkpoint.c_str(), e.what());
    return kExitBadInput;
  }
  if (flags.group > 0 && flags.group != ck.model.group) {
    std::fprintf(stderr,
                 "synth: --g %d is incompatible with this checkpoint "
                 "(architecture group %d)\n",
                 flags.group, ck.model.group);
    return kExitUsage;
  }
  MelSpectrogram mel;
  try {
    mel = LoadPvfe(features);
  } catch (const Error& e) {
    std::fprintf(stderr, "synth: %s: %s\n", features.c_str(), e.what());
    return kExitBadInput;
  }
  const int hop = ck.model.UpsampleProduct() * ck.model.n_bands;
  if (mel.sample_rate != ck.model.sample_rate) {
    std::fprintf(stderr,
                 "synth: %s was extracted at %d Hz, model runs at %d Hz\n",
                 features.c_str(), mel.sample_rate, ck.model.sample_rate);
    return kExitBadInput;
  }
  if (mel.hop != hop) {
    std::fprintf(stderr, "synth: %s has hop %d, model expects %d\n",
                 features.c_str(), mel.hop, hop);
    return kExitBadInput;
  }

  GenerationConfig gen;
  gen.far_order = flags.inv_far ? FarOrder::kLowToHigh : ck.far_order;
  gen.bar_depth = flags.bar_depth >= 0 ? flags.bar_depth : ck.bar_depth;
  gen.group = ck.model.group;
  gen.seed = flags.seed;
  gen.use_postfilter = !flags.no_pf && ck.has_pf;
  if (!flags.no_pf && !ck.has_pf) {
    std::fprintf(stderr,
                 "synth: checkpoint has no post filter, sampling classes\n");
  }
  if (gen.bar_depth == 0) {
    std::fprintf(stderr, "synth: bit ladder bypassed (bar depth 0)\n");
  }
  try {
    const auto t0 = std::chrono::steady_clock::now();
    const PqmfBank bank = DesignPqmf(ck.model.n_bands);
    GenResult res =
        Generate(ck.net, ck.has_pf ? &ck.pf : nullptr, bank, mel, gen);
    const double secs = Seconds(t0);
    LogPasses("synth", res);
    WriteWav16Mono(out_wav, res.wav, ck.model.sample_rate);
    std::printf("%s\t%zu\t%.3f\n", out_wav.c_str(), res.wav.size(), secs);
    return kExitOk;
  } catch (const Error& e) {
    std::fprintf(stderr, "synth: %s\n", e.what());
    return kExitBadInput;
  }
}

int CmdCopySynth(const std::string& in_wav, const std::string& out_wav) {
  WavData wav;
  try {
    wav = ReadWav16Mono(in_wav);
  } catch (const Error& e) {
    std::fprintf(stderr, "copy-synth: %s: %s\n", in_wav.c_str(), e.what());
    return kExitBadInput;
  }
  if (wav.samples.empty()) {
    std::fprintf(stderr, "copy-synth: %s has no samples\n", in_wav.c_str());
    return kExitBadInput;
  }
  try {
    const PqmfBank bank = DesignPqmf(8);
    const SubbandStack stack = Analyze(bank, wav.samples);
    const std::vector<float> out = Synthesize(bank, stack);
    WriteWav16Mono(out_wav, out, wav.sample_rate);
    double sig = 0.0, err = 0.0;
    for (size_t i = 0; i < wav.samples.size(); ++i) {
      const double x = wav.samples[i];
      const double d = x - out[i];
      sig += x * x;
      err += d * d;
    }
    // Silence (or an exact reconstruction) has no finite ratio to report.
    if (sig <= 0.0 || err <= 0.0) {
      std::printf("snr_db\tinf\n");
    } else {
      std::printf("snr_db\t%.2f\n", 10.0 * std::log10(sig / err));
    }
    return kExitOk;
  } catch (const Error& e) {
    std::fprintf(stderr, "copy-synth: %s\n", e.what());
    return kExitBadInput;
  }
}

int CmdEval(const std::string& ref_dir, const std::string& gen_dir,
            const std::string& report_path) {
  std::vector<fs::path> refs, gens;
  try {
    refs = ListWavs(ref_dir);
    gens = ListWavs(gen_dir);
  } catch (const Error& e) {
    std::fprintf(stderr, "eval: %s\n", e.what());
    return kExitBadInput;
  }
  if (refs.empty()) {
    std::fprintf(stderr, "eval: no .wav files in %s\n", ref_dir.c_str());
    return kExitUsage;
  }
  std::set<std::string> ref_names, gen_names;
  for (const fs::path& p : refs) ref_names.insert(p.filename().string());
  for (const fs::path& p : gens) gen_names.insert(p.filename().string());
  bool mismatch = false;
  for (const std::string& n : ref_names) {
    if (!gen_names.count(n)) {
      std::fprintf(stderr, "eval: missing in %s: %s\n", gen_dir.c_str(),
                   n.c_str());
      mismatch = true;
    }
  }
  for (const std::string& n : gen_names) {
    if (!ref_names.count(n)) {
      std::fprintf(stderr, "eval: missing in %s: %s\n", ref_dir.c_str(),
                   n.c_str());
      mismatch = true;
    }
  }
  if (mismatch) return kExitBadInput;

  EvalReport report;
  for (const fs::path& p : refs) {
    const fs::path gen_path = fs::path(gen_dir) / p.filename();
    try {
      WavData ref = ReadWav16Mono(p.string());
      WavData gen = ReadWav16Mono(gen_path.string());
      if (ref.sample_rate != gen.sample_rate) {
        std::fprintf(stderr, "eval: %s: sample rates differ (%d vs %d)\n",
                     p.filename().string().c_str(), ref.sample_rate,
                     gen.sample_rate);
        return kExitBadInput;
      }
      report.utterances.emplace_back(
          p.stem().string(),
          EvaluatePair(ref.samples, gen.samples, ref.sample_rate));
    } catch (const Error& e) {
      std::fprintf(stderr, "eval: %s: %s\n", p.filename().string().c_str(),
                   e.what());
      return kExitBadInput;
    }
  }
  std::fputs(FormatReport(report).c_str(), stdout);
  if (!report_path.empty()) {
    try {
      SaveReport(report, report_path);
    } catch (const Error& e) {
      std::fprintf(stderr, "eval: %s\n", e.what());
      return kExitError;
    }
  }
  return kExitOk;
}

int CmdBench(const std::string& checkpoint, const BenchFlags& flags) {
  if (!ValidGroupFlag(flags.group)) {
    std::fprintf(stderr, "bench: --g must be 1, 5 or 10\n");
    return kExitUsage;
  }
  if (!ValidDepthFlag(flags.bar_depth)) {
    std::fprintf(stderr, "bench: --bar-depth must be 0, 2 or 3\n");
    return kExitUsage;
  }
  if (flags.durations.empty()) {
    std::fprintf(stderr, "bench: --durations needs at least one value\n");
    return kExitUsage;
  }
  for (double d : flags.durations) {
    if (!(d > 0.0)) {
      std::fprintf(stderr, "bench: durations must be positive seconds\n");
      return kExitUsage;
    }
  }
  Checkpoint ck;
  try {
    ck = LoadCheckpoint(checkpoint);
  } catch (const Error& e) {
    std::fprintf(stderr, "bench: %s: %s\n", checkpoint.c_str(), e.what());
    return kExitBadInput;
  }
  ModelConfig mc = ck.model;
  FarBarNetP net = std::move(ck.net);
  if (flags.group > 0 && flags.group != mc.group) {
    // Throughput does not depend on the weight values, so a group mismatch
    // times a freshly initialized model of the requested width instead of
    // refusing.  Audio quality of such a run is meaningless.
    std::fprintf(stderr,
                 "bench: group %d differs from the checkpoint (group %d); "
                 "timing randomly initialized weights\n",
                 flags.group, mc.group);
    mc.group = flags.group;
    RandomSource weight_rng(flags.seed + 1);
    net = InitFarBarNet(mc, weight_rng);
  }
  GenerationConfig gen;
  gen.far_order = ck.far_order;
  gen.bar_depth = flags.bar_depth >= 0 ? flags.bar_depth : ck.bar_depth;
  gen.group = mc.group;
  gen.seed = flags.seed;
  gen.use_postfilter = !flags.no_pf && ck.has_pf;

  try {
    const PqmfBank bank = DesignPqmf(mc.n_bands);
    const int hop = mc.UpsampleProduct() * mc.n_bands;
    RandomSource mel_rng(flags.seed + 99);
    std::printf(
        "duration_s\tsamples\tseconds\tsamples_per_sec\tfar_passes\t"
        "max_stages_per_pass\n");
    for (double d : flags.durations) {
      const int64_t want = std::llround(d * mc.sample_rate);
      const int frames = static_cast<int>((want + hop - 1) / hop);
      MelSpectrogram mel;
      mel.sample_rate = mc.sample_rate;
      mel.hop = hop;
      mel.data = Tensor({frames, mc.n_mels});
      // Plausible log-mel content: floor plus positive excursions.  Timing
      // does not depend on the values, only the shapes.
      for (auto& v : mel.data.data) {
        v = -11.5f + 3.0f * std::fabs(static_cast<float>(mel_rng.Normal()));
      }
      const auto t0 = std::chrono::steady_clock::now();
      GenResult res =
          Generate(net, ck.has_pf ? &ck.pf : nullptr, bank, mel, gen);
      const double secs = Seconds(t0);
      char tag[32];
      std::snprintf(tag, sizeof(tag), "bench %.1fs", d);
      LogPasses(tag, res);
      std::printf("%.1f\t%lld\t%.3f\t%.1f\t%d\t%d\n", d,
                  static_cast<long long>(res.wav.size()), secs,
                  static_cast<double>(res.wav.size()) / secs,
                  res.counters.far_passes, res.counters.max_stages_per_pass);
    }
    return kExitOk;
  } catch (const Error& e) {
    std::fprintf(stderr, "bench: %s\n", e.what());
    return kExitBadInput;
  }
}

int CmdSelftest() {
  int failures = 0;
  auto check = [&failures](const char* name, bool ok) {
    std::printf("[%s] %s\n", ok ? "ok" : "FAIL", name);
    if (!ok) ++failures;
  };
  try {
    bool mu = true;
    for (int c = 0; c < 256 && mu; ++c) {
      const float x = MuLawDecodeSample(static_cast<uint8_t>(c));
      if (MuLawEncodeSample(x) != c) mu = false;
      if (ClassBit(c, 1) != (c > 127 ? 1 : 0)) mu = false;
    }
    check("mu-law 256-class round trip", mu);

    const PqmfBank bank = DesignPqmf(8);
    RandomSource rng(7);
    std::vector<float> probe(4096);
    for (auto& v : probe) v = 0.5f * static_cast<float>(rng.Normal());
    check("filter bank round trip >= 40 dB",
          RoundTripSnrDb(bank, probe) >= 40.0);

    const MelSpectrogram mel = ComputeMel(probe, 24000, StftConfig{});
    check("feature frame count", mel.data.shape[0] == (4096 + 199) / 200);

    ModelConfig mc;
    mc.residual_ch = 16;
    mc.hidden_ch = 4;
    mc.cond_ch = 8;
    mc.wn_layers = 2;
    RandomSource weight_rng(3);
    const FarBarNetP net = InitFarBarNet(mc, weight_rng);
    MelSpectrogram cond;
    cond.sample_rate = mc.sample_rate;
    cond.hop = mc.UpsampleProduct() * mc.n_bands;
    cond.data = Tensor({4, mc.n_mels});
    for (auto& v : cond.data.data) {
      v = -11.5f + std::fabs(static_cast<float>(rng.Normal()));
    }
    GenerationConfig gen;
    gen.use_postfilter = false;
    gen.seed = 11;
    const GenResult a = Generate(net, nullptr, bank, cond, gen);
    const GenResult b = Generate(net, nullptr, bank, cond, gen);
    check("fixed-seed generation is bit identical", a.wav == b.wav);
    check("eight passes, four stages max", a.counters.far_passes == 8 &&
                                               a.counters.max_stages_per_pass ==
                                                   4);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "selftest: %s\n", e.what());
    return kExitError;
  }
  if (failures > 0) {
    std::fprintf(stderr, "selftest: %d check(s) failed\n", failures);
    return kExitError;
  }
  return kExitOk;
}

int RunCli(const std::vector<std::string>& args) {
  CLI::App app{"parallel subband vocoder"};
  app.require_subcommand(1);
  int rc = kExitOk;

  std::string feat_in, feat_out;
  CLI::App* feat = app.add_subcommand(
      "features", "Extract log-mel features for every WAV in a directory");
  feat->add_option("in_dir", feat_in, "directory of 16-bit mono WAVs")
      ->required();
  feat->add_option("out_dir", feat_out, "output directory for .pvfe files")
      ->required();
  feat->callback([&] { rc = CmdFeatures(feat_in, feat_out); });

  std::string train_cfg;
  CLI::App* train = app.add_subcommand(
      "train", "Train the main network from a key=value config file");
  train->add_option("config", train_cfg, "config file path")->required();
  train->callback([&] { rc = CmdTrain(train_cfg); });

  std::string trainpf_cfg;
  CLI::App* trainpf = app.add_subcommand(
      "train-pf", "Train the post filter against a frozen checkpoint");
  trainpf->add_option("config", trainpf_cfg, "config file path")->required();
  trainpf->callback([&] { rc = CmdTrainPf(trainpf_cfg); });

  std::string synth_ck, synth_feat, synth_out;
  SynthFlags sf;
  CLI::App* synth =
      app.add_subcommand("synth", "Synthesize a WAV from a feature file");
  synth->add_option("checkpoint", synth_ck, "trained checkpoint")->required();
  synth->add_option("features", synth_feat, "feature file")->required();
  synth->add_option("out_wav", synth_out, "output WAV path")->required();
  synth->add_flag("--no-pf", sf.no_pf,
                  "sample classes instead of the post filter");
  synth->add_option("--g", sf.group,
                    "grouping factor; must match the checkpoint");
  synth->add_flag("--inv-far", sf.inv_far, "generate subbands low to high");
  synth->add_option("--bar-depth", sf.bar_depth,
                    "bit stages before the class posterior: 0, 2 or 3");
  synth->add_option("--seed", sf.seed, "sampling seed");
  synth->callback([&] { rc = CmdSynth(synth_ck, synth_feat, synth_out, sf); });

  std::string cs_in, cs_out;
  CLI::App* cs = app.add_subcommand(
      "copy-synth", "Filter-bank round trip of a WAV, no model");
  cs->add_option("in_wav", cs_in, "input WAV")->required();
  cs->add_option("out_wav", cs_out, "output WAV path")->required();
  cs->callback([&] { rc = CmdCopySynth(cs_in, cs_out); });

  std::string eval_ref, eval_gen, eval_report;
  CLI::App* eval = app.add_subcommand(
      "eval", "Compare generated WAVs against references by filename");
  eval->add_option("ref_dir", eval_ref, "reference WAV directory")->required();
  eval->add_option("gen_dir", eval_gen, "generated WAV directory")->required();
  eval->add_option("--report", eval_report, "also write a key=value report");
  eval->callback([&] { rc = CmdEval(eval_ref, eval_gen, eval_report); });

  std::string bench_ck;
  BenchFlags bf;
  CLI::App* bench =
      app.add_subcommand("bench", "Generation throughput table (TSV)");
  bench->add_option("checkpoint", bench_ck, "trained or random checkpoint")
      ->required();
  bench->add_option("--durations", bf.durations, "input lengths in seconds")
      ->delimiter(',');
  bench->add_option("--g", bf.group, "grouping factor to time");
  bench->add_option("--bar-depth", bf.bar_depth, "bit stages: 0, 2 or 3");
  bench->add_flag("--no-pf", bf.no_pf, "sample classes, skip the post filter");
  bench->add_option("--seed", bf.seed, "noise and feature seed");
  bench->callback([&] { rc = CmdBench(bench_ck, bf); });

  CLI::App* selftest =
      app.add_subcommand("selftest", "Quick built-in health checks");
  selftest->callback([&] { rc = CmdSelftest(); });

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }
  return rc;
}

}  // namespace parvoc
