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

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <unistd.h>

#include "parvoc/features.h"
#include "parvoc/filterbank.h"
#include "parvoc/model.h"
#include "parvoc/rng.h"
#include "parvoc/trainer.h"
#include "parvoc/wav_io.h"
#include "support/toy_corpus.h"

using namespace parvoc;
namespace fs = std::filesystem;

namespace {

// Self-cleaning unique directory under TMPDIR.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    const char* base = std::getenv("TMPDIR");
    path_ = fs::path(base != nullptr ? base : "/tmp") /
            ("parvoc_trainer_" + tag + "_" + std::to_string(::getpid()));
    fs::remove_all(path_);
    fs::create_directories(path_);
  }
  ~TempDir() { fs::remove_all(path_); }
  std::string Str() const { return path_.string(); }
  fs::path path() const { return path_; }

 private:
  fs::path path_;
};

std::vector<char> Slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in.good());
  return std::vector<char>(std::istreambuf_iterator<char>(in),
                           std::istreambuf_iterator<char>());
}

// Writes a tiny corpus with features, enough for a handful of steps.
void MakeTrainingDir(const std::string& dir, int n_utts = 2) {
  testsupport::WriteToyCorpus(dir, n_utts, 0.6, 24000, 500);
  for (int i = 0; i < n_utts; ++i) {
    char name[32];
    std::snprintf(name, sizeof(name), "utt_%03d", i);
    const std::string stem = (fs::path(dir) / name).string();
    WavData w = ReadWav16Mono(stem + ".wav");
    SavePvfe(stem + ".pvfe", ComputeMel(w.samples, 24000, StftConfig{}));
  }
}

// Toy-scale phase-1 config against `data`, outputs under `out`.
TrainConfig ToyConfig(const std::string& data, const std::string& out) {
  TrainConfig cfg;
  cfg.data_dir = data;
  cfg.out_dir = out;
  cfg.batch = 2;
  cfg.segment = 600;
  cfg.steps = 4;
  cfg.checkpoint_every = 1000;
  cfg.log_every = 2;
  cfg.lr = 5e-4f;
  cfg.residual_ch = 12;
  cfg.hidden_ch = 4;
  cfg.cond_ch = 8;
  cfg.wn_layers = 2;
  return cfg;
}

}  // namespace

TEST_CASE("config parsing: defaults, overrides, and typo rejection") {
  const TrainConfig d = ParseTrainConfigText("data_dir=/tmp\n");
  CHECK(d.sample_rate == 24000);
  CHECK(d.batch == 4);
  CHECK(d.group == 1);
  CHECK(d.far_order == FarOrder::kHighToLow);

  const TrainConfig c = ParseTrainConfigText(
      "data_dir=/tmp\n"
      "batch=2\n"
      "# comment line\n"
      "lr=0.001\n"
      "far_order=low\n"
      "group=5\n"
      "segment = 1600\n");
  CHECK(c.batch == 2);
  CHECK(c.lr == doctest::Approx(0.001));
  CHECK(c.far_order == FarOrder::kLowToHigh);
  CHECK(c.group == 5);
  CHECK(c.segment == 1600);

  CHECK_THROWS_WITH_AS(ParseTrainConfigText("data_dir=/tmp\nbatchh=2\n"),
                       doctest::Contains("batchh"), Error);
  CHECK_THROWS_AS(ParseTrainConfigText("data_dir=/tmp\nfar_order=sideways\n"),
                  Error);
  CHECK_THROWS_AS(ParseTrainConfigText("data_dir=/tmp\nbatch=two\n"), Error);
}

TEST_CASE("config validation rejects inconsistent shapes") {
  auto with = [](const std::string& line) {
    return ParseTrainConfigText("data_dir=/tmp\n" + line + "\n");
  };
  CHECK_NOTHROW(with("segment=1600").Validate());
  // Segments must cover whole feature frames.
  CHECK_THROWS_WITH_AS(with("segment=601").Validate(),
                       doctest::Contains("multiple"), Error);
  CHECK_THROWS_AS(with("group=3").Validate(), Error);
  CHECK_THROWS_WITH_AS(with("bar_depth=1").Validate(),
                       doctest::Contains("bar_depth"), Error);
  CHECK_THROWS_WITH_AS(ParseTrainConfigText(""),
                       doctest::Contains("data_dir"), Error);
}

TEST_CASE("checkpoint round trip is byte identical") {
  TempDir tmp("ckpt");
  RandomSource rng(3);
  Checkpoint ck;
  ck.model.residual_ch = 12;
  ck.model.hidden_ch = 4;
  ck.model.cond_ch = 8;
  ck.model.wn_layers = 2;
  ck.net = InitFarBarNet(ck.model, rng);
  ck.step = 17;
  ck.adam_step = 17;
  ck.rng_state = "12345 678";
  ck.far_order = FarOrder::kLowToHigh;
  ck.bar_depth = 2;

  const std::string p1 = (tmp.path() / "a.pvck").string();
  const std::string p2 = (tmp.path() / "b.pvck").string();
  SaveCheckpoint(p1, ck);
  Checkpoint back = LoadCheckpoint(p1);
  CHECK(back.step == 17);
  CHECK(back.far_order == FarOrder::kLowToHigh);
  CHECK(back.bar_depth == 2);
  CHECK(back.rng_state == "12345 678");
  CHECK(back.model.residual_ch == 12);
  CHECK_FALSE(back.has_pf);
  CHECK_FALSE(back.has_adam);
  SaveCheckpoint(p2, back);
  CHECK(Slurp(p1) == Slurp(p2));
}

TEST_CASE("checkpoint carries optimizer moments and post filter") {
  TempDir tmp("ckpt2");
  RandomSource rng(4);
  Checkpoint ck;
  ck.model.residual_ch = 12;
  ck.model.hidden_ch = 4;
  ck.model.cond_ch = 8;
  ck.model.wn_layers = 2;
  ck.net = InitFarBarNet(ck.model, rng);
  ck.has_pf = true;
  ck.pf = InitPostFilter(ck.model, rng);
  ck.has_adam = true;
  ck.net.Visit("net", [&](const std::string& name, const ParamPtr& p) {
    Tensor m(p->shape), v(p->shape);
    for (auto& x : m.data) x = static_cast<float>(rng.Normal());
    for (auto& x : v.data) x = std::fabs(static_cast<float>(rng.Normal()));
    ck.adam_m.emplace_back(name, std::move(m));
    ck.adam_v.emplace_back(name, std::move(v));
  });
  ck.adam_step = 99;

  const std::string p1 = (tmp.path() / "full.pvck").string();
  SaveCheckpoint(p1, ck);
  const Checkpoint back = LoadCheckpoint(p1);
  CHECK(back.has_pf);
  CHECK(back.has_adam);
  CHECK(back.adam_step == 99);
  REQUIRE(back.adam_m.size() == ck.adam_m.size());
  CHECK(back.pf.ParamCount() == ck.pf.ParamCount());
  for (size_t i = 0; i < ck.adam_m.size(); ++i) {
    CHECK(back.adam_m[i].first == ck.adam_m[i].first);
    REQUIRE(back.adam_m[i].second.data.size() ==
            ck.adam_m[i].second.data.size());
    CHECK(back.adam_m[i].second.data == ck.adam_m[i].second.data);
  }

  const std::string p2 = (tmp.path() / "full2.pvck").string();
  SaveCheckpoint(p2, back);
  CHECK(Slurp(p1) == Slurp(p2));
}

TEST_CASE("corrupt checkpoints are rejected") {
  TempDir tmp("ckbad");
  const std::string p = (tmp.path() / "bad.pvck").string();
  std::ofstream(p, std::ios::binary) << "PVXX garbage";
  CHECK_THROWS_AS(LoadCheckpoint(p), Error);
  CHECK_THROWS_AS(LoadCheckpoint((tmp.path() / "absent.pvck").string()),
                  Error);
}

TEST_CASE("adam matches a hand-computed scalar trajectory") {
  AdamConfig cfg;
  cfg.lr = 0.1f;
  Adam adam(cfg);
  auto p = std::make_shared<Tensor>(std::vector<int>{1});
  p->data[0] = 1.0f;
  adam.Register("w", p);

  // Loss 0.5 w^2: gradient w.  Track the reference in double.
  double m = 0.0, v = 0.0, w = 1.0;
  for (int step = 1; step <= 5; ++step) {
    Tape tape;
    Ctx ctx{&tape};
    Binder bind(ctx, true);
    Val wv = bind(p);
    Val loss = Scale(ctx, Mul(ctx, wv, wv), 0.5f);
    tape.Backward(Sum(ctx, loss));
    adam.Step(tape, bind);

    const double g = w;
    m = 0.9 * m + 0.1 * g;
    v = 0.999 * v + 0.001 * g * g;
    const double mh = m / (1.0 - std::pow(0.9, step));
    const double vh = v / (1.0 - std::pow(0.999, step));
    w -= 0.1 * mh / (std::sqrt(vh) + 1e-8);
    CHECK(p->data[0] == doctest::Approx(w).epsilon(1e-4));
  }
}

TEST_CASE("adam leaves parameters without gradients untouched") {
  Adam adam(AdamConfig{});
  auto used = std::make_shared<Tensor>(std::vector<int>{1});
  auto idle = std::make_shared<Tensor>(std::vector<int>{1});
  used->data[0] = 1.0f;
  idle->data[0] = 2.5f;
  adam.Register("used", used);
  adam.Register("idle", idle);

  Tape tape;
  Ctx ctx{&tape};
  Binder bind(ctx, true);
  Val loss = Sum(ctx, Mul(ctx, bind(used), bind(used)));
  tape.Backward(loss);
  adam.Step(tape, bind);
  CHECK(used->data[0] != 1.0f);
  CHECK(idle->data[0] == 2.5f);
}

TEST_CASE("corpus loading: pairing, rate checks, and short-file skips") {
  TempDir tmp("corpus");
  MakeTrainingDir(tmp.Str());
  const PqmfBank bank = DesignPqmf(8);
  const Corpus corpus(tmp.Str(), 24000, 600, bank);
  REQUIRE(corpus.Size() == 2);
  const Utterance& u = corpus.Get(0);
  CHECK(u.mel_hop == 200);
  CHECK(u.mel_cm.shape[0] == 80);
  CHECK(u.stack.bands.shape[0] == 8);
  CHECK(u.wav.size() == 14400);

  // Wrong sample rate is a hard error, not a skip.
  CHECK_THROWS_AS(Corpus(tmp.Str(), 16000, 600, bank), Error);

  // A wav without features is a hard error naming the file.
  WavData w = ReadWav16Mono((tmp.path() / "utt_000.wav").string());
  WriteWav16Mono((tmp.path() / "orphan.wav").string(), w.samples, 24000);
  CHECK_THROWS_WITH_AS(Corpus(tmp.Str(), 24000, 600, bank),
                       doctest::Contains("orphan"), Error);
}

TEST_CASE("batcher is deterministic and restartable via its rng state") {
  TempDir tmp("batch");
  MakeTrainingDir(tmp.Str());
  const PqmfBank bank = DesignPqmf(8);
  const Corpus corpus(tmp.Str(), 24000, 600, bank);
  TrainConfig cfg = ToyConfig(tmp.Str(), tmp.Str());

  Batcher b1(corpus, cfg);
  Batcher b2(corpus, cfg);
  const TrainBatch x1 = b1.Next();
  const TrainBatch x2 = b2.Next();
  CHECK(x1.bands.data == x2.bands.data);
  CHECK(x1.mel.data == x2.mel.data);
  CHECK(x1.noise.data == x2.noise.data);

  // Capture the state mid-stream, draw one batch, then replay it.
  const std::string state = b1.RngState();
  const TrainBatch next = b1.Next();
  Batcher b3(corpus, cfg);
  b3.RestoreRng(state);
  const TrainBatch replay = b3.Next();
  CHECK(next.bands.data == replay.bands.data);
  CHECK(next.noise.data == replay.noise.data);
}

TEST_CASE("phase 1 runs, logs, checkpoints, and resumes seamlessly") {
  TempDir data("p1data");
  MakeTrainingDir(data.Str());

  // Straight run: 4 steps.
  TempDir straight("p1a");
  TrainConfig cfg = ToyConfig(data.Str(), straight.Str());
  const TrainResult r = RunTraining(cfg);
  CHECK(r.steps_run == 4);
  CHECK(std::isfinite(r.first_loss));
  CHECK(r.last_loss < r.first_loss * 1.5);  // sane, not exploding
  REQUIRE(fs::exists(r.checkpoint_path));
  CHECK(fs::exists(straight.path() / "train.log"));

  // Split run: 2 steps, then resume for 2 more.  The final checkpoint must
  // be byte-identical to the straight run's, proving the optimizer moments,
  // batcher stream, and step counters all survive the round trip.
  TempDir split("p1b");
  TrainConfig first = ToyConfig(data.Str(), split.Str());
  first.steps = 2;
  const TrainResult r1 = RunTraining(first);
  CHECK(r1.steps_run == 2);

  TrainConfig second = ToyConfig(data.Str(), split.Str());
  second.steps = 4;
  second.init_checkpoint = r1.checkpoint_path;
  const TrainResult r2 = RunTraining(second);
  CHECK(r2.steps_run == 2);  // only the remaining steps

  CHECK(Slurp(r.checkpoint_path) == Slurp(r2.checkpoint_path));
}

TEST_CASE("phase 2 requires a phase 1 checkpoint and trains only the pf") {
  TempDir data("p2data");
  MakeTrainingDir(data.Str());

  TempDir out("p2out");
  TrainConfig cfg = ToyConfig(data.Str(), out.Str());
  CHECK_THROWS_AS(RunPfTraining(cfg), Error);  // no init_checkpoint

  const TrainResult phase1 = RunTraining(cfg);

  // Snapshot the network weights, then run phase 2.
  const Checkpoint before = LoadCheckpoint(phase1.checkpoint_path);
  std::vector<float> net_w;
  before.net.Visit("net", [&](const std::string&, const ParamPtr& p) {
    net_w.insert(net_w.end(), p->data.begin(), p->data.end());
  });

  TempDir out2("p2run");
  TrainConfig pf_cfg = ToyConfig(data.Str(), out2.Str());
  pf_cfg.steps = 2;
  pf_cfg.init_checkpoint = phase1.checkpoint_path;
  const TrainResult r = RunPfTraining(pf_cfg);
  CHECK(r.steps_run == 2);

  const Checkpoint after = LoadCheckpoint(r.checkpoint_path);
  REQUIRE(after.has_pf);
  std::vector<float> net_w2;
  after.net.Visit("net", [&](const std::string&, const ParamPtr& p) {
    net_w2.insert(net_w2.end(), p->data.begin(), p->data.end());
  });
  CHECK(net_w == net_w2);  // frozen backbone

  // The post filter must differ from a fresh init: training moved it.
  CHECK(after.pf.ParamCount() > 0);
}

TEST_CASE("training rejects an empty corpus directory") {
  TempDir empty("nodata");
  TrainConfig cfg = ToyConfig(empty.Str(), empty.Str());
  CHECK_THROWS_AS(RunTraining(cfg), Error);
}
